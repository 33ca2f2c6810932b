//! End-to-end reconstruction behavior on generated phantoms.

use rfbmode::io::pgm_bytes;
use rfbmode::phantom::{generate_frame, PhantomSpec};
use rfbmode::recon::{reconstruct, ConvexGeometry, ReconParams, RfFrame};

fn small_spec() -> PhantomSpec {
    PhantomSpec {
        n_lines: 32,
        n_samples: 1024,
        ..PhantomSpec::default()
    }
}

const OUT: (usize, usize) = (96, 96);

#[test]
fn zero_frame_reconstructs_to_black() {
    let spec = small_spec();
    let frame = RfFrame::new(
        vec![0.0; spec.n_lines * spec.n_samples],
        spec.n_lines,
        spec.n_samples,
        spec.fs_hz,
        spec.f0_mhz,
        spec.c_mps,
        spec.geometry,
        None,
    )
    .unwrap();
    let img = reconstruct(&frame, &ReconParams::default(), OUT).unwrap();
    assert!(img.pixels().iter().all(|&p| p == 0));
}

#[test]
fn reconstruction_is_bit_deterministic() {
    let frame = generate_frame(&small_spec(), 1).unwrap();
    let params = ReconParams::default();
    let a = reconstruct(&frame, &params, OUT).unwrap();
    let b = reconstruct(&frame, &params, OUT).unwrap();
    assert_eq!(
        pgm_bytes(a.pixels(), a.width, a.height),
        pgm_bytes(b.pixels(), b.width, b.height)
    );
}

#[test]
fn pixels_in_range_and_out_of_sector_black() {
    let frame = generate_frame(&small_spec(), 1).unwrap();
    for params in [
        ReconParams::default(),
        ReconParams::new(0.5, 5.0, 60.0).unwrap(),
        ReconParams::new(1.3, 15.0, 50.0).unwrap(),
    ] {
        let img = reconstruct(&frame, &params, OUT).unwrap();
        let mut in_sector = 0usize;
        for r in 0..img.height {
            for c in 0..img.width {
                if img.in_sector(r, c) {
                    in_sector += 1;
                } else {
                    assert_eq!(img.pixel(r, c), 0, "out-of-sector pixel lit at ({r},{c})");
                }
            }
        }
        assert!(in_sector > OUT.0 * OUT.1 / 4, "sector unexpectedly small");
    }
}

#[test]
fn raising_beta_never_darkens_any_pixel() {
    let frame = generate_frame(&small_spec(), 0).unwrap();
    let lo = reconstruct(&frame, &ReconParams::default(), OUT).unwrap();
    let hi = reconstruct(
        &frame,
        &ReconParams {
            beta: 1.0,
            ..ReconParams::default()
        },
        OUT,
    )
    .unwrap();
    for (a, b) in lo.pixels().iter().zip(hi.pixels()) {
        assert!(b >= a, "pixel darkened when beta rose: {a} -> {b}");
    }
}

#[test]
fn raising_alpha_l_never_reduces_black_pixel_count() {
    let frame = generate_frame(&small_spec(), 0).unwrap();
    let count_black = |alpha_l: f64| {
        let img = reconstruct(
            &frame,
            &ReconParams {
                alpha_l,
                ..ReconParams::default()
            },
            OUT,
        )
        .unwrap();
        (0..img.height)
            .flat_map(|r| (0..img.width).map(move |c| (r, c)))
            .filter(|&(r, c)| img.in_sector(r, c) && img.pixel(r, c) == 0)
            .count()
    };
    let mut prev = count_black(5.0);
    for alpha_l in [8.0, 11.0, 14.0] {
        let n = count_black(alpha_l);
        assert!(n >= prev, "raising alpha_l reduced black in-sector pixels");
        prev = n;
    }
}

#[test]
fn matched_beta_flattens_depth_profile() {
    // Reconstructing with the same attenuation coefficient the phantom was
    // simulated with cancels the depth decay: a deep ROI should read within
    // 10% of a shallow one. The noise floor is lowered so amplified deep
    // noise does not confound the comparison.
    let spec = PhantomSpec {
        beta_true_normal: 0.9,
        noise_floor: 5e-4,
        n_lines: 64,
        ..PhantomSpec::default()
    };
    let frame = generate_frame(&spec, 0).unwrap();
    let img = reconstruct(
        &frame,
        &ReconParams {
            beta: 0.9,
            ..ReconParams::default()
        },
        (299, 299),
    )
    .unwrap();

    let roi_mean = |rows: std::ops::Range<usize>| {
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in rows {
            for c in 0..img.width {
                if img.in_sector(r, c) {
                    sum += img.pixel(r, c) as f64;
                    n += 1;
                }
            }
        }
        assert!(n > 100, "ROI too small: {n} pixels");
        sum / n as f64
    };
    let shallow = roi_mean(45..90); // 15%..30% of height
    let deep = roi_mean(209..254); // 70%..85% of height
    assert!(
        (deep - shallow).abs() <= 0.10 * shallow,
        "depth profile not flat: shallow {shallow}, deep {deep}"
    );
}

#[test]
fn beta_mismatch_tilts_depth_profile() {
    // Sanity check of the previous test's sensitivity: reconstructing with
    // too much compensation brightens depth.
    let spec = PhantomSpec {
        beta_true_normal: 0.5,
        noise_floor: 5e-4,
        n_lines: 64,
        ..PhantomSpec::default()
    };
    let frame = generate_frame(&spec, 0).unwrap();
    let img = reconstruct(
        &frame,
        &ReconParams {
            beta: 1.2,
            ..ReconParams::default()
        },
        (299, 299),
    )
    .unwrap();
    let roi_mean = |rows: std::ops::Range<usize>| {
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in rows {
            for c in 0..img.width {
                if img.in_sector(r, c) {
                    sum += img.pixel(r, c) as f64;
                    n += 1;
                }
            }
        }
        sum / n as f64
    };
    assert!(roi_mean(209..254) > roi_mean(45..90) * 1.10);
}

#[test]
fn geometry_line_angles_span_the_sector() {
    let geometry = ConvexGeometry {
        radius_m: 0.06,
        angular_span_rad: 1.0,
        depth_offset_m: 0.06,
    };
    assert!((geometry.line_angle(0, 51) + 0.5).abs() < 1e-12);
    assert!((geometry.line_angle(50, 51) - 0.5).abs() < 1e-12);
    assert!(geometry.line_angle(25, 51).abs() < 1e-12);
}
