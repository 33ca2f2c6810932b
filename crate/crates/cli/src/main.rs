//! `rfbmode` — phantom generation, B-mode reconstruction, surrogate
//! classifier training, single-frame attacks, dataset evaluation and grid
//! sweeps, all file based and fully seeded.
//!
//! Exit codes: 0 success, 2 validation error, 3 I/O error, 4 precondition
//! failure (frame initially misclassified).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rfbmode::attack::{self, AttackConfig, ParamBounds};
use rfbmode::classifier::{BlackBoxModel, ExternalModel, LogisticModel};
use rfbmode::error::{Error, Result};
use rfbmode::eval::{evaluate_dataset, frames_csv, summary_csv};
use rfbmode::io;
use rfbmode::phantom::{generate_dataset, PhantomSpec};
use rfbmode::recon::{reconstruct, ReconParams, RfFrame, DEFAULT_OUT_SIZE};

mod train;

#[derive(Parser)]
#[command(
    name = "rfbmode",
    version,
    about = "B-mode reconstruction from RF frames and black-box attacks on its parameters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic RF dataset with a manifest.
    Phantom(PhantomCmd),
    /// Reconstruct B-mode PGM images from .rff frames.
    Reconstruct(ReconstructCmd),
    /// Train the built-in logistic classifier on a manifest.
    Train(TrainCmd),
    /// Attack one frame's reconstruction parameters.
    Attack(AttackCmd),
    /// Score and attack every frame in a manifest.
    Evaluate(EvaluateCmd),
    /// Exhaustively evaluate the loss over the parameter box.
    Sweep(SweepCmd),
}

/// Reconstruction parameter flags (initial parameters).
#[derive(Args)]
struct ParamFlags {
    /// Attenuation coefficient, dB/(cm*MHz).
    #[arg(long, default_value_t = 0.9)]
    beta: f64,
    /// Lower compression threshold, dB.
    #[arg(long = "alpha-l", default_value_t = 10.0)]
    alpha_l: f64,
    /// Upper compression threshold, dB.
    #[arg(long = "alpha-u", default_value_t = 55.0)]
    alpha_u: f64,
}

impl ParamFlags {
    fn params(&self) -> Result<ReconParams> {
        ReconParams::new(self.beta, self.alpha_l, self.alpha_u)
    }
}

/// Attack hyper-parameter flags.
#[derive(Args)]
struct AttackFlags {
    #[arg(long = "delta-beta", default_value_t = 0.05)]
    delta_beta: f64,
    #[arg(long = "delta-alpha-l", default_value_t = 0.1)]
    delta_alpha_l: f64,
    #[arg(long = "delta-alpha-u", default_value_t = 0.1)]
    delta_alpha_u: f64,
    #[arg(long = "lr-beta", default_value_t = 0.05)]
    lr_beta: f64,
    #[arg(long = "lr-alpha-l", default_value_t = 0.5)]
    lr_alpha_l: f64,
    #[arg(long = "lr-alpha-u", default_value_t = 0.5)]
    lr_alpha_u: f64,
    /// Decision threshold on p(fatty).
    #[arg(long, default_value_t = 0.5)]
    cutoff: f64,
    #[arg(long = "max-iters", default_value_t = 100)]
    max_iters: usize,
}

impl AttackFlags {
    fn config(&self) -> Result<AttackConfig> {
        let config = AttackConfig {
            deltas: [self.delta_beta, self.delta_alpha_l, self.delta_alpha_u],
            lrs: [self.lr_beta, self.lr_alpha_l, self.lr_alpha_u],
            bounds: ParamBounds::default(),
            cutoff: self.cutoff,
            max_iters: self.max_iters,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Model selection: built-in JSON model or external command.
#[derive(Args)]
struct ModelFlags {
    /// Path to a trained logistic model JSON.
    #[arg(long)]
    model: Option<PathBuf>,
    /// External scorer: invoked as `<cmd> <pgm-path>`, prints p(fatty).
    #[arg(long = "external-cmd")]
    external_cmd: Option<String>,
}

impl ModelFlags {
    fn load(&self) -> Result<Box<dyn BlackBoxModel>> {
        match (&self.model, &self.external_cmd) {
            (Some(path), None) => Ok(Box::new(LogisticModel::load(path)?)),
            (None, Some(cmd)) => Ok(Box::new(ExternalModel::new(cmd.clone()))),
            _ => Err(Error::invalid(
                "exactly one of --model and --external-cmd is required".to_string(),
            )),
        }
    }
}

#[derive(Args)]
struct PhantomCmd {
    /// Frames to generate per class.
    #[arg(long = "n-per-class")]
    n_per_class: usize,
    /// Base RNG seed; frame i uses seed + i.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory for frames and manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructCmd {
    /// Input .rff frames.
    #[arg(required = true)]
    frames: Vec<PathBuf>,
    #[command(flatten)]
    params: ParamFlags,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write the absolute difference against this PGM.
    #[arg(long)]
    diff: Option<PathBuf>,
}

#[derive(Args)]
struct TrainCmd {
    /// Dataset manifest (path,label CSV).
    #[arg(long)]
    manifest: PathBuf,
    /// Where to write the trained model JSON.
    #[arg(long, default_value = "model.json")]
    model: PathBuf,
    /// Seed for the train/test split shuffle.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[command(flatten)]
    params: ParamFlags,
}

#[derive(Args)]
struct AttackCmd {
    /// Input .rff frame (must carry a label).
    frame: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    params: ParamFlags,
    #[command(flatten)]
    attack: AttackFlags,
    /// Output directory for result JSON, trajectory CSV and images.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Attack even if the frame is initially misclassified.
    #[arg(long = "allow-misclassified")]
    allow_misclassified: bool,
}

#[derive(Args)]
struct EvaluateCmd {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    params: ParamFlags,
    #[command(flatten)]
    attack: AttackFlags,
    /// Output directory for frames.csv and summary.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads for per-frame processing.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct SweepCmd {
    /// Input .rff frame (must carry a label).
    frame: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    /// Grid points per parameter axis.
    #[arg(long, default_value_t = 11)]
    resolution: usize,
    /// Decision threshold on p(fatty).
    #[arg(long, default_value_t = 0.5)]
    cutoff: f64,
    /// Output directory for sweep.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Phantom(cmd) => cmd_phantom(cmd),
        Command::Reconstruct(cmd) => cmd_reconstruct(cmd),
        Command::Train(cmd) => cmd_train(cmd),
        Command::Attack(cmd) => cmd_attack(cmd),
        Command::Evaluate(cmd) => cmd_evaluate(cmd),
        Command::Sweep(cmd) => cmd_sweep(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 3,
        Error::InitiallyMisclassified { .. } => 4,
        _ => 2,
    }
}

fn ensure_out_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

fn cmd_phantom(cmd: PhantomCmd) -> Result<()> {
    if cmd.n_per_class < 1 {
        return Err(Error::invalid("--n-per-class must be at least 1".to_string()));
    }
    let spec = PhantomSpec {
        seed: cmd.seed,
        ..PhantomSpec::default()
    };
    let manifest = generate_dataset(&spec, cmd.n_per_class, &cmd.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn load_labeled_frame(path: &Path) -> Result<(RfFrame, u8)> {
    let frame = io::read_rff(path)?;
    let label = frame.label.ok_or_else(|| {
        Error::invalid(format!("{}: frame carries no label", path.display()))
    })?;
    Ok((frame, label))
}

fn cmd_reconstruct(cmd: ReconstructCmd) -> Result<()> {
    let params = cmd.params.params()?;
    ensure_out_dir(&cmd.out)?;
    let reference = match &cmd.diff {
        Some(path) => Some(io::read_pgm(path)?),
        None => None,
    };
    for frame_path in &cmd.frames {
        let frame = io::read_rff(frame_path)?;
        let img = reconstruct(&frame, &params, DEFAULT_OUT_SIZE)?;
        let stem = frame_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "frame".to_string());
        let out_path = cmd.out.join(format!("{stem}.pgm"));
        io::write_pgm(&out_path, &img)?;
        println!("{}", out_path.display());

        if let Some((ref_pixels, w, h)) = &reference {
            if (*w, *h) != (img.width, img.height) {
                return Err(Error::invalid(format!(
                    "--diff image is {w}x{h}, reconstruction is {}x{}",
                    img.width, img.height
                )));
            }
            let diff: Vec<u8> = img
                .pixels()
                .iter()
                .zip(ref_pixels)
                .map(|(a, b)| a.abs_diff(*b))
                .collect();
            let diff_path = cmd.out.join(format!("{stem}_diff.pgm"));
            io::atomic_write(&diff_path, &io::pgm_bytes(&diff, img.width, img.height))?;
            println!("{}", diff_path.display());
        }
    }
    Ok(())
}

fn cmd_train(cmd: TrainCmd) -> Result<()> {
    let params = cmd.params.params()?;
    let entries = io::read_manifest(&cmd.manifest)?;
    let outcome = train::train_on_manifest(&entries, &params, cmd.seed)?;
    outcome.model.save(&cmd.model)?;
    println!(
        "model={} n_train={} n_test={} auc={} accuracy={}",
        cmd.model.display(),
        outcome.n_train,
        outcome.n_test,
        outcome.test_auc,
        outcome.test_accuracy
    );
    Ok(())
}

fn cmd_attack(cmd: AttackCmd) -> Result<()> {
    let init = cmd.params.params()?;
    let config = cmd.attack.config()?;
    let model = cmd.model.load()?;
    let (frame, label) = load_labeled_frame(&cmd.frame)?;
    ensure_out_dir(&cmd.out)?;

    let result = attack::zoo_attack(
        &frame,
        label,
        &init,
        &config,
        model.as_ref(),
        DEFAULT_OUT_SIZE,
        cmd.allow_misclassified,
    )?;

    let before = reconstruct(&frame, &init, DEFAULT_OUT_SIZE)?;
    let after = reconstruct(&frame, &result.final_params, DEFAULT_OUT_SIZE)?;
    let diff: Vec<u8> = before
        .pixels()
        .iter()
        .zip(after.pixels())
        .map(|(a, b)| a.abs_diff(*b))
        .collect();

    io::write_pgm(&cmd.out.join("before.pgm"), &before)?;
    io::write_pgm(&cmd.out.join("after.pgm"), &after)?;
    io::atomic_write(
        &cmd.out.join("diff.pgm"),
        &io::pgm_bytes(&diff, before.width, before.height),
    )?;
    io::atomic_write(
        &cmd.out.join("result.json"),
        attack::result_summary_json(&result).as_bytes(),
    )?;
    io::atomic_write(
        &cmd.out.join("trajectory.csv"),
        attack::trajectory_csv(&result).as_bytes(),
    )?;

    println!(
        "success={} reason={:?} iters={} queries={} final=({}, {}, {})",
        result.success,
        result.reason,
        result.iters(),
        result.model_queries,
        result.final_params.beta,
        result.final_params.alpha_l,
        result.final_params.alpha_u
    );
    Ok(())
}

fn cmd_evaluate(cmd: EvaluateCmd) -> Result<()> {
    if cmd.jobs == 0 {
        return Err(Error::invalid("--jobs must be at least 1".to_string()));
    }
    let init = cmd.params.params()?;
    let config = cmd.attack.config()?;
    let model = cmd.model.load()?;
    let entries = io::read_manifest(&cmd.manifest)?;
    ensure_out_dir(&cmd.out)?;

    let report = evaluate_dataset(
        &entries,
        model.as_ref(),
        &init,
        &config,
        DEFAULT_OUT_SIZE,
        cmd.jobs,
    )?;
    io::atomic_write(&cmd.out.join("frames.csv"), frames_csv(&report).as_bytes())?;
    io::atomic_write(&cmd.out.join("summary.csv"), summary_csv(&report).as_bytes())?;
    println!(
        "n_frames={} auc={} accuracy={} n_correct={} n_success={} success_rate={}",
        report.n_frames,
        report.auc,
        report.accuracy,
        report.n_correct,
        report.n_success,
        report.success_rate
    );
    Ok(())
}

fn cmd_sweep(cmd: SweepCmd) -> Result<()> {
    let model = cmd.model.load()?;
    let (frame, label) = load_labeled_frame(&cmd.frame)?;
    ensure_out_dir(&cmd.out)?;

    let grid = attack::grid_oracle(
        &frame,
        label,
        &ParamBounds::default(),
        cmd.resolution,
        model.as_ref(),
        cmd.cutoff,
        DEFAULT_OUT_SIZE,
    )?;
    let mut csv = String::from("beta,alpha_l,alpha_u,loss,prob,misclassified\n");
    for p in &grid {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.params.beta, p.params.alpha_l, p.params.alpha_u, p.loss, p.prob, p.misclassified
        ));
    }
    let out_path = cmd.out.join("sweep.csv");
    io::atomic_write(&out_path, csv.as_bytes())?;
    println!(
        "{} ({} points, {} misclassifying)",
        out_path.display(),
        grid.len(),
        grid.iter().filter(|p| p.misclassified).count()
    );
    Ok(())
}
