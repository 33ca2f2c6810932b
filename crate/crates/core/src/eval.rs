//! Dataset-level evaluation: score every frame at the initial parameters,
//! then attack each correctly classified one and tally the success rate.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::attack::{zoo_attack, AttackConfig, AttackResult};
use crate::classifier::{auc, predicted_label, BlackBoxModel};
use crate::error::{Error, Result};
use crate::io;
use crate::recon::{reconstruct, ReconParams};

/// Per-frame outcome within a dataset evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct FrameEvaluation {
    pub path: PathBuf,
    pub label: u8,
    /// Model output at the initial reconstruction parameters.
    pub initial_prob: f64,
    pub correct: bool,
    /// Attack outcome; only correctly classified frames are attacked.
    pub attack: Option<AttackResult>,
}

/// Aggregate report over a manifest.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub frames: Vec<FrameEvaluation>,
    pub auc: f64,
    pub accuracy: f64,
    pub n_frames: usize,
    pub n_correct: usize,
    pub n_success: usize,
    pub success_rate: f64,
}

/// Evaluate a manifest against a model: initial scoring, dataset AUC and
/// accuracy, then one attack per correctly classified frame.
///
/// `jobs` > 1 processes frames on a dedicated thread pool; results are
/// reassembled in manifest order, so output is identical for any job count.
pub fn evaluate_dataset(
    entries: &[(PathBuf, u8)],
    model: &dyn BlackBoxModel,
    init: &ReconParams,
    config: &AttackConfig,
    out_size: (usize, usize),
    jobs: usize,
) -> Result<EvaluationReport> {
    if entries.is_empty() {
        return Err(Error::invalid("manifest lists no frames".to_string()));
    }
    config.validate()?;
    init.validate()?;

    let evaluate_one = |(path, label): &(PathBuf, u8)| -> Result<FrameEvaluation> {
        let frame = io::read_rff(path)?;
        let img = reconstruct(&frame, init, out_size)?;
        let prob = model.predict(&img)?;
        let correct = predicted_label(prob, config.cutoff) == *label;
        let attack = if correct {
            Some(zoo_attack(&frame, *label, init, config, model, out_size, false)?)
        } else {
            None
        };
        Ok(FrameEvaluation {
            path: path.clone(),
            label: *label,
            initial_prob: prob,
            correct,
            attack,
        })
    };

    let frames: Vec<FrameEvaluation> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid(format!("cannot build {jobs}-thread pool: {e}")))?;
        pool.install(|| entries.par_iter().map(evaluate_one).collect::<Result<Vec<_>>>())?
    } else {
        entries.iter().map(evaluate_one).collect::<Result<Vec<_>>>()?
    };

    let scored: Vec<(f64, u8)> = frames.iter().map(|f| (f.initial_prob, f.label)).collect();
    let n_correct = frames.iter().filter(|f| f.correct).count();
    let n_success = frames
        .iter()
        .filter(|f| f.attack.as_ref().is_some_and(|a| a.success))
        .count();
    Ok(EvaluationReport {
        auc: auc(&scored),
        accuracy: n_correct as f64 / frames.len() as f64,
        n_frames: frames.len(),
        n_correct,
        n_success,
        success_rate: if n_correct > 0 {
            n_success as f64 / n_correct as f64
        } else {
            0.0
        },
        frames,
    })
}

/// Per-frame rows as CSV.
pub fn frames_csv(report: &EvaluationReport) -> String {
    let mut out = String::from(
        "path,label,initial_prob,correct,attacked,success,reason,iters,model_queries,verified,\
         final_beta,final_alpha_l,final_alpha_u\n",
    );
    for f in &report.frames {
        let (attacked, success, reason, iters, queries, verified, fb, fl, fu) = match &f.attack {
            Some(a) => (
                "true",
                a.success.to_string(),
                match a.reason {
                    crate::attack::StopReason::Misclassified => "misclassified",
                    crate::attack::StopReason::Saturated => "saturated",
                    crate::attack::StopReason::MaxIters => "max_iters",
                }
                .to_string(),
                a.iters().to_string(),
                a.model_queries.to_string(),
                a.verified.to_string(),
                a.final_params.beta.to_string(),
                a.final_params.alpha_l.to_string(),
                a.final_params.alpha_u.to_string(),
            ),
            None => (
                "false",
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ),
        };
        out.push_str(&format!(
            "{},{},{},{},{attacked},{success},{reason},{iters},{queries},{verified},{fb},{fl},{fu}\n",
            f.path.display(),
            f.label,
            f.initial_prob,
            f.correct,
        ));
    }
    out
}

/// One-row summary CSV.
pub fn summary_csv(report: &EvaluationReport) -> String {
    format!(
        "n_frames,auc,accuracy,n_correct,n_success,success_rate\n{},{},{},{},{},{}\n",
        report.n_frames,
        report.auc,
        report.accuracy,
        report.n_correct,
        report.n_success,
        report.success_rate
    )
}
