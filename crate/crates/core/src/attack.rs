//! Zeroth-order attack on the reconstruction parameters.
//!
//! The classifier is a black box, so partial derivatives of the
//! cross-entropy with respect to (beta, alpha_l, alpha_u) are estimated by
//! central differences, one reconstruction per probe:
//!
//! ```text
//! dJ/dq ~= (J(q + dq) - J(q - dq)) / (2 dq)
//! ```
//!
//! Each iteration then takes a fixed步 step in the sign of every estimated
//! derivative, `q <- clamp(q + lr_q * sign(dJ/dq))`, ascending the loss
//! until the prediction flips, no parameter can move, or the iteration cap
//! is hit. Probes may leave the box constraints (reconstruction is defined
//! there); only accepted states are clamped.

use serde::{Deserialize, Serialize};

use crate::classifier::{bce_loss, predicted_label, BlackBoxModel};
use crate::error::{Error, Result};
use crate::recon::{ReconParams, ReconPipeline, RfFrame};

/// Inclusive per-parameter box constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub beta: (f64, f64),
    pub alpha_l: (f64, f64),
    pub alpha_u: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds {
            beta: (0.5, 1.3),
            alpha_l: (5.0, 15.0),
            alpha_u: (50.0, 60.0),
        }
    }
}

impl ParamBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("beta", self.beta),
            ("alpha_l", self.alpha_l),
            ("alpha_u", self.alpha_u),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("bad {name} bounds ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &ReconParams) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(p.beta, self.beta) && inside(p.alpha_l, self.alpha_l) && inside(p.alpha_u, self.alpha_u)
    }
}

/// Attack hyper-parameters. Defaults follow the probe steps (0.05, 0.1,
/// 0.1), learning rates (0.05, 0.5, 0.5), boxes (0.5, 1.3) / (5, 15) /
/// (50, 60) and the 0.5 decision cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Central-difference steps for (beta, alpha_l, alpha_u).
    pub deltas: [f64; 3],
    /// Sign-step learning rates for (beta, alpha_l, alpha_u).
    pub lrs: [f64; 3],
    pub bounds: ParamBounds,
    /// Decision threshold on p(fatty).
    pub cutoff: f64,
    pub max_iters: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            deltas: [0.05, 0.1, 0.1],
            lrs: [0.05, 0.5, 0.5],
            bounds: ParamBounds::default(),
            cutoff: 0.5,
            max_iters: 100,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.deltas.iter().any(|&d| !d.is_finite() || d <= 0.0) {
            return Err(Error::invalid(format!("probe steps must be positive: {:?}", self.deltas)));
        }
        if self.lrs.iter().any(|&l| !l.is_finite() || l <= 0.0) {
            return Err(Error::invalid(format!("learning rates must be positive: {:?}", self.lrs)));
        }
        self.bounds.validate()?;
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(Error::invalid(format!("cutoff must lie in (0, 1), got {}", self.cutoff)));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive".to_string()));
        }
        Ok(())
    }
}

/// One accepted point on the attack trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackState {
    pub iter: usize,
    pub params: ReconParams,
    pub loss: f64,
    pub prob: f64,
    /// Central-difference estimate that produced this state (zeros for the
    /// initial state).
    pub grad_est: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Misclassified,
    Saturated,
    MaxIters,
}

/// Outcome of a single-frame attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub success: bool,
    pub reason: StopReason,
    pub initial_params: ReconParams,
    pub final_params: ReconParams,
    pub trajectory: Vec<AttackState>,
    /// Attack-loop model queries: 1 initial score plus 7 per iteration
    /// (6 probes + 1 post-update score). The verification re-score is not
    /// part of the loop and is not counted.
    pub model_queries: usize,
    /// Whether an independent re-reconstruction at `final_params` confirms
    /// the flip. Always true when `success` is true.
    pub verified: bool,
}

impl AttackResult {
    pub fn iters(&self) -> usize {
        self.trajectory.len().saturating_sub(1)
    }
}

/// sign with sign(0) = 0, so a flat coordinate does not move.
fn step_sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One sign-gradient ascent step under box constraints, all coordinates
/// updated together from one gradient estimate.
pub fn apply_signed_update(
    params: &ReconParams,
    grad: &[f64; 3],
    lrs: &[f64; 3],
    bounds: &ParamBounds,
) -> ReconParams {
    ReconParams {
        beta: (params.beta + lrs[0] * step_sign(grad[0])).clamp(bounds.beta.0, bounds.beta.1),
        alpha_l: (params.alpha_l + lrs[1] * step_sign(grad[1]))
            .clamp(bounds.alpha_l.0, bounds.alpha_l.1),
        alpha_u: (params.alpha_u + lrs[2] * step_sign(grad[2]))
            .clamp(bounds.alpha_u.0, bounds.alpha_u.1),
    }
}

/// Probe parameter sets for one central-difference round, in evaluation
/// order: beta+, beta-, alpha_l+, alpha_l-, alpha_u+, alpha_u-.
fn probe_params(params: &ReconParams, deltas: &[f64; 3]) -> Result<[ReconParams; 6]> {
    let probes = [
        ReconParams { beta: params.beta + deltas[0], ..*params },
        ReconParams { beta: params.beta - deltas[0], ..*params },
        ReconParams { alpha_l: params.alpha_l + deltas[1], ..*params },
        ReconParams { alpha_l: params.alpha_l - deltas[1], ..*params },
        ReconParams { alpha_u: params.alpha_u + deltas[2], ..*params },
        ReconParams { alpha_u: params.alpha_u - deltas[2], ..*params },
    ];
    for p in &probes {
        if let Err(e) = p.validate() {
            return Err(Error::DegenerateProbe(format!(
                "probe ({}, {}, {}) is invalid: {e}",
                p.beta, p.alpha_l, p.alpha_u
            )));
        }
    }
    Ok(probes)
}

/// Central-difference gradient of an arbitrary loss over the parameter
/// triple. Exactly six loss evaluations. The loss may be probed outside
/// the box bounds; callers clamp accepted states, not probes.
pub fn approx_gradient_with<F>(
    loss: &mut F,
    params: &ReconParams,
    deltas: &[f64; 3],
) -> Result<[f64; 3]>
where
    F: FnMut(&ReconParams) -> Result<f64>,
{
    let probes = probe_params(params, deltas)?;
    let mut values = [0.0f64; 6];
    for (v, p) in values.iter_mut().zip(&probes) {
        *v = loss(p)?;
    }
    Ok([
        (values[0] - values[1]) / (2.0 * deltas[0]),
        (values[2] - values[3]) / (2.0 * deltas[1]),
        (values[4] - values[5]) / (2.0 * deltas[2]),
    ])
}

/// Central-difference gradient of the reconstruction-and-score loss for one
/// frame. Makes exactly six model queries.
pub fn approx_gradient(
    frame: &RfFrame,
    label: u8,
    params: &ReconParams,
    model: &dyn BlackBoxModel,
    deltas: &[f64; 3],
    out_size: (usize, usize),
) -> Result<[f64; 3]> {
    let pipeline = ReconPipeline::new(frame, out_size)?;
    let mut loss = |p: &ReconParams| -> Result<f64> {
        let img = pipeline.render(p)?;
        Ok(bce_loss(model.predict(&img)?, label))
    };
    approx_gradient_with(&mut loss, params, deltas)
}

/// Driver for a single-frame attack: owns the per-frame reconstruction
/// cache and the query counter.
pub struct ZooAttack<'a> {
    pipeline: ReconPipeline,
    model: &'a dyn BlackBoxModel,
    label: u8,
    config: AttackConfig,
    queries: usize,
}

impl<'a> ZooAttack<'a> {
    pub fn new(
        frame: &RfFrame,
        label: u8,
        config: AttackConfig,
        model: &'a dyn BlackBoxModel,
        out_size: (usize, usize),
    ) -> Result<Self> {
        config.validate()?;
        if label > 1 {
            return Err(Error::invalid(format!("label must be 0 or 1, got {label}")));
        }
        Ok(ZooAttack {
            pipeline: ReconPipeline::new(frame, out_size)?,
            model,
            label,
            config,
            queries: 0,
        })
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    /// Reconstruct at `params`, score, and return (loss, prob). One query.
    pub fn score(&mut self, params: &ReconParams) -> Result<(f64, f64)> {
        let img = self.pipeline.render(params)?;
        let prob = self.model.predict(&img)?;
        self.queries += 1;
        Ok((bce_loss(prob, self.label), prob))
    }

    /// One attack iteration: estimate the gradient (6 queries), take the
    /// signed step, and re-score the updated parameters (1 query).
    pub fn step(&mut self, state: &AttackState) -> Result<AttackState> {
        let grad = {
            let pipeline = &self.pipeline;
            let model = self.model;
            let label = self.label;
            let queries = &mut self.queries;
            let mut loss = |p: &ReconParams| -> Result<f64> {
                let img = pipeline.render(p)?;
                let prob = model.predict(&img)?;
                *queries += 1;
                Ok(bce_loss(prob, label))
            };
            approx_gradient_with(&mut loss, &state.params, &self.config.deltas)?
        };
        let next = apply_signed_update(&state.params, &grad, &self.config.lrs, &self.config.bounds);
        let (loss, prob) = self.score(&next)?;
        Ok(AttackState {
            iter: state.iter + 1,
            params: next,
            loss,
            prob,
            grad_est: grad,
        })
    }

    /// Run the full attack from `init`.
    pub fn run(&mut self, init: &ReconParams, allow_misclassified: bool) -> Result<AttackResult> {
        init.validate()?;
        if !self.config.bounds.contains(init) {
            return Err(Error::invalid(format!(
                "initial parameters ({}, {}, {}) lie outside the attack box",
                init.beta, init.alpha_l, init.alpha_u
            )));
        }
        let (loss0, prob0) = self.score(init)?;
        if predicted_label(prob0, self.config.cutoff) != self.label && !allow_misclassified {
            return Err(Error::InitiallyMisclassified {
                label: self.label,
                prob: prob0,
            });
        }

        let mut trajectory = vec![AttackState {
            iter: 0,
            params: *init,
            loss: loss0,
            prob: prob0,
            grad_est: [0.0; 3],
        }];
        let mut reason = StopReason::MaxIters;
        for _ in 0..self.config.max_iters {
            let prev = *trajectory.last().expect("trajectory starts non-empty");
            let state = self.step(&prev)?;
            trajectory.push(state);
            if predicted_label(state.prob, self.config.cutoff) != self.label {
                reason = StopReason::Misclassified;
                break;
            }
            if state.params == prev.params {
                reason = StopReason::Saturated;
                break;
            }
        }

        let final_params = trajectory.last().expect("non-empty").params;
        let mut success = reason == StopReason::Misclassified;
        let mut verified = false;
        if success {
            // Independent confirmation: fresh pipeline, fresh score.
            let fresh = self.pipeline.render(&final_params)?;
            let prob = self.model.predict(&fresh)?;
            verified = predicted_label(prob, self.config.cutoff) != self.label;
            success = verified;
        }
        Ok(AttackResult {
            success,
            reason,
            initial_params: *init,
            final_params,
            trajectory,
            model_queries: self.queries,
            verified,
        })
    }
}

/// Attack one frame: perturb the reconstruction parameters from `init`
/// until the model's decision flips, no parameter can move, or the
/// iteration cap is reached.
///
/// The frame must be correctly classified at `init` unless
/// `allow_misclassified` is set.
pub fn zoo_attack(
    frame: &RfFrame,
    label: u8,
    init: &ReconParams,
    config: &AttackConfig,
    model: &dyn BlackBoxModel,
    out_size: (usize, usize),
    allow_misclassified: bool,
) -> Result<AttackResult> {
    ZooAttack::new(frame, label, *config, model, out_size)?.run(init, allow_misclassified)
}

// ---------------------------------------------------------------------------
// Grid oracle
// ---------------------------------------------------------------------------

/// One exhaustive-evaluation grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub params: ReconParams,
    pub loss: f64,
    pub prob: f64,
    pub misclassified: bool,
}

/// Evaluate the loss and decision on a uniform grid over the bounds box
/// (`resolution` points per axis, beta outermost, alpha_u innermost).
pub fn grid_oracle(
    frame: &RfFrame,
    label: u8,
    bounds: &ParamBounds,
    resolution: usize,
    model: &dyn BlackBoxModel,
    cutoff: f64,
    out_size: (usize, usize),
) -> Result<Vec<GridPoint>> {
    bounds.validate()?;
    if resolution < 2 {
        return Err(Error::invalid(format!("grid resolution must be at least 2, got {resolution}")));
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..resolution)
            .map(|i| lo + (hi - lo) * i as f64 / (resolution as f64 - 1.0))
            .collect()
    };
    let pipeline = ReconPipeline::new(frame, out_size)?;
    let mut points = Vec::with_capacity(resolution * resolution * resolution);
    for &beta in &axis(bounds.beta) {
        for &alpha_l in &axis(bounds.alpha_l) {
            for &alpha_u in &axis(bounds.alpha_u) {
                let params = ReconParams { beta, alpha_l, alpha_u };
                let img = pipeline.render(&params)?;
                let prob = model.predict(&img)?;
                points.push(GridPoint {
                    params,
                    loss: bce_loss(prob, label),
                    prob,
                    misclassified: predicted_label(prob, cutoff) != label,
                });
            }
        }
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

/// Render a trajectory as CSV with the canonical header.
pub fn trajectory_csv(result: &AttackResult) -> String {
    let mut out = String::from("iter,beta,alpha_l,alpha_u,loss,prob,g_beta,g_alpha_l,g_alpha_u\n");
    for s in &result.trajectory {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.iter,
            s.params.beta,
            s.params.alpha_l,
            s.params.alpha_u,
            s.loss,
            s.prob,
            s.grad_est[0],
            s.grad_est[1],
            s.grad_est[2],
        ));
    }
    out
}

/// Result summary as JSON (excludes the trajectory; that goes to CSV).
pub fn result_summary_json(result: &AttackResult) -> String {
    #[derive(Serialize)]
    struct Summary<'a> {
        success: bool,
        reason: &'a StopReason,
        initial_params: &'a ReconParams,
        final_params: &'a ReconParams,
        iters: usize,
        model_queries: usize,
        verified: bool,
    }
    serde_json::to_string_pretty(&Summary {
        success: result.success,
        reason: &result.reason,
        initial_params: &result.initial_params,
        final_params: &result.final_params,
        iters: result.iters(),
        model_queries: result.model_queries,
        verified: result.verified,
    })
    .expect("summary serialization cannot fail")
}
