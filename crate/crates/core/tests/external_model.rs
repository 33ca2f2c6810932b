//! External-command scorer protocol tests, using shell-script stubs.

use std::io::Write;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use rfbmode::classifier::{BlackBoxModel, ExternalModel};
use rfbmode::error::Error;
use rfbmode::phantom::{generate_frame, PhantomSpec};
use rfbmode::recon::{reconstruct, BModeImage, ReconParams};

fn write_stub(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "#!/bin/sh\n{body}").unwrap();
    let mut perms = f.metadata().unwrap().permissions();
    perms.set_mode(0o755);
    std::fs::set_permissions(&path, perms).unwrap();
    path
}

fn test_image(seed: u64) -> BModeImage {
    let spec = PhantomSpec {
        n_lines: 8,
        n_samples: 256,
        seed,
        ..PhantomSpec::default()
    };
    let frame = generate_frame(&spec, (seed % 2) as u8).unwrap();
    reconstruct(&frame, &ReconParams::default(), (32, 32)).unwrap()
}

#[test]
fn echo_stub_returns_its_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = write_stub(dir.path(), "half.sh", "echo 0.5");
    let model = ExternalModel::new(cmd.to_str().unwrap());
    assert_eq!(model.predict(&test_image(1)).unwrap(), 0.5);
}

#[test]
fn out_of_range_output_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = write_stub(dir.path(), "bad.sh", "echo 1.7");
    let model = ExternalModel::new(cmd.to_str().unwrap());
    assert!(matches!(
        model.predict(&test_image(1)),
        Err(Error::ExternalModel(_))
    ));
}

#[test]
fn unparseable_output_and_bad_exit_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = write_stub(dir.path(), "garbage.sh", "echo not-a-number");
    assert!(matches!(
        ExternalModel::new(garbage.to_str().unwrap()).predict(&test_image(1)),
        Err(Error::ExternalModel(_))
    ));
    let failing = write_stub(dir.path(), "fail.sh", "exit 3");
    assert!(matches!(
        ExternalModel::new(failing.to_str().unwrap()).predict(&test_image(1)),
        Err(Error::ExternalModel(_))
    ));
    assert!(matches!(
        ExternalModel::new("/nonexistent/command").predict(&test_image(1)),
        Err(Error::ExternalModel(_))
    ));
}

#[test]
fn mean_threshold_stub_agrees_with_in_process_rule() {
    // The stub computes mean pixel intensity from the PGM raster and
    // thresholds at 100; reimplement the same rule in-process and compare
    // on ten images.
    let dir = tempfile::tempdir().unwrap();
    let cmd = write_stub(
        dir.path(),
        "mean.sh",
        r#"python3 -c "
import sys
with open(sys.argv[1], 'rb') as f:
    data = f.read()
parts = data.split(b'\n', 3)
raster = parts[3]
mean = sum(raster) / len(raster)
print('0.9' if mean > 100 else '0.1')
" "$1""#,
    );
    let model = ExternalModel::new(cmd.to_str().unwrap());
    for seed in 0..10 {
        let img = test_image(seed);
        let mean =
            img.pixels().iter().map(|&p| p as f64).sum::<f64>() / img.pixels().len() as f64;
        let expected = if mean > 100.0 { 0.9 } else { 0.1 };
        assert_eq!(model.predict(&img).unwrap(), expected, "seed {seed}");
    }
}
