//! Black-box scorers and the surrogate logistic classifier.
//!
//! The attack only needs a probability oracle: anything implementing
//! [`BlackBoxModel`] maps an image to p(fatty). Shipped implementations are
//! a 5-feature logistic model trainable at desk scale and an adapter that
//! shells out to an external command speaking the `command <pgm-path>`
//! protocol.

use std::path::Path;
use std::process::Command;
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::recon::BModeImage;

/// Clamp applied to probabilities inside the cross-entropy.
pub const PROB_CLAMP: f64 = 1e-7;

/// Feature names in model-file order.
pub const FEATURE_ORDER: [&str; 5] = ["mean_near", "mean_far", "depth_slope", "contrast", "ratio"];

/// Maximum concurrent external scorer subprocesses.
const EXTERNAL_CONCURRENCY_CAP: usize = 4;

/// Decide the predicted class from a probability at a cutoff.
pub fn predicted_label(prob: f64, cutoff: f64) -> u8 {
    if prob >= cutoff {
        1
    } else {
        0
    }
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

/// Intensity statistics over the in-sector pixels of a B-mode image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    /// Mean intensity in the shallow ROI (rows 10%..40% of height).
    pub mean_near: f64,
    /// Mean intensity in the deep ROI (rows 60%..90% of height).
    pub mean_far: f64,
    /// Least-squares slope of in-sector row-mean intensity vs row index.
    pub depth_slope: f64,
    /// Standard deviation of in-sector intensities.
    pub contrast: f64,
    /// (mean_near + 1) / (mean_far + 1).
    pub ratio: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.mean_near,
            self.mean_far,
            self.depth_slope,
            self.contrast,
            self.ratio,
        ]
    }
}

/// Extract the surrogate feature vector from an image. Only in-sector
/// pixels count; each ROI must contain at least one.
pub fn extract_features(img: &BModeImage) -> Result<FeatureVector> {
    let h = img.height;
    let near_rows = (h * 10 / 100)..(h * 40 / 100);
    let far_rows = (h * 60 / 100)..(h * 90 / 100);

    let mut near = RoiMean::default();
    let mut far = RoiMean::default();
    let mut all_sum = 0.0;
    let mut all_sq = 0.0;
    let mut all_n = 0usize;
    let mut row_pts: Vec<(f64, f64)> = Vec::with_capacity(h);

    for r in 0..h {
        let mut row_sum = 0.0;
        let mut row_n = 0usize;
        for c in 0..img.width {
            if img.in_sector(r, c) {
                let v = img.pixel(r, c) as f64;
                row_sum += v;
                row_n += 1;
                all_sum += v;
                all_sq += v * v;
                all_n += 1;
                if near_rows.contains(&r) {
                    near.add(v);
                }
                if far_rows.contains(&r) {
                    far.add(v);
                }
            }
        }
        if row_n > 0 {
            row_pts.push((r as f64, row_sum / row_n as f64));
        }
    }

    let mean_near = near.mean().ok_or_else(|| {
        Error::invalid("near ROI (rows 10%-40%) contains no in-sector pixels".to_string())
    })?;
    let mean_far = far.mean().ok_or_else(|| {
        Error::invalid("far ROI (rows 60%-90%) contains no in-sector pixels".to_string())
    })?;

    let all_mean = all_sum / all_n as f64;
    let contrast = (all_sq / all_n as f64 - all_mean * all_mean).max(0.0).sqrt();

    Ok(FeatureVector {
        mean_near,
        mean_far,
        depth_slope: least_squares_slope(&row_pts),
        contrast,
        ratio: (mean_near + 1.0) / (mean_far + 1.0),
    })
}

#[derive(Default)]
struct RoiMean {
    sum: f64,
    n: usize,
}

impl RoiMean {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }
    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        0.0
    } else {
        (n * sxy - sx * sy) / denom
    }
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Binary cross-entropy with the probability clamped away from {0, 1}.
pub fn bce_loss(prob: f64, label: u8) -> f64 {
    let p = prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

// ---------------------------------------------------------------------------
// Black-box contract
// ---------------------------------------------------------------------------

/// An opaque scorer: image in, probability of class "fatty" out.
///
/// Implementations must be pure with respect to the image (the same image
/// always scores the same) and return a value in [0, 1].
pub trait BlackBoxModel: Sync {
    fn predict(&self, img: &BModeImage) -> Result<f64>;
}

// ---------------------------------------------------------------------------
// Logistic surrogate
// ---------------------------------------------------------------------------

/// Logistic regression over standardized [`FeatureVector`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub format_version: u32,
    pub feature_order: Vec<String>,
    pub weights: [f64; 5],
    pub bias: f64,
    pub feature_means: [f64; 5],
    pub feature_stds: [f64; 5],
}

impl LogisticModel {
    /// The all-zero model: p = 0.5 for every image.
    pub fn null() -> Self {
        LogisticModel {
            format_version: 1,
            feature_order: FEATURE_ORDER.iter().map(|s| s.to_string()).collect(),
            weights: [0.0; 5],
            bias: 0.0,
            feature_means: [0.0; 5],
            feature_stds: [1.0; 5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != 1 {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        if self.feature_order != FEATURE_ORDER {
            return Err(Error::invalid(format!(
                "unexpected feature order {:?}",
                self.feature_order
            )));
        }
        if self.feature_stds.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::invalid("feature standard deviations must be positive".to_string()));
        }
        Ok(())
    }

    pub fn predict_features(&self, features: &FeatureVector) -> f64 {
        let x = features.as_array();
        let z = self.bias
            + (0..5)
                .map(|i| self.weights[i] * (x[i] - self.feature_means[i]) / self.feature_stds[i])
                .sum::<f64>();
        sigmoid(z)
    }

    /// Fold the standardization into raw-feature space: returns (weights,
    /// bias) such that sigmoid(w.x + b) equals `predict_features`.
    pub fn raw_space_weights(&self) -> ([f64; 5], f64) {
        let mut w = [0.0; 5];
        let mut b = self.bias;
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = self.weights[i] / self.feature_stds[i];
            b -= self.weights[i] * self.feature_means[i] / self.feature_stds[i];
        }
        (w, b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("model serialization cannot fail");
        io::atomic_write(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: LogisticModel = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: bad model file: {e}", path.display())))?;
        model.validate()?;
        Ok(model)
    }
}

impl BlackBoxModel for LogisticModel {
    fn predict(&self, img: &BModeImage) -> Result<f64> {
        Ok(self.predict_features(&extract_features(img)?))
    }
}

/// Training data point: raw features plus a binary label.
pub type LabeledFeatures = ([f64; 5], u8);

/// Train a logistic model by full-batch gradient descent on class-weighted
/// cross-entropy. Standardization statistics come from the training set;
/// weights default to `n_total / (2 * n_class)`. Deterministic for a fixed
/// row ordering.
pub fn train_logistic(
    rows: &[LabeledFeatures],
    epochs: usize,
    lr: f64,
    class_weights: Option<(f64, f64)>,
) -> Result<LogisticModel> {
    let n0 = rows.iter().filter(|r| r.1 == 0).count();
    let n1 = rows.len() - n0;
    if n0 < 2 || n1 < 2 {
        return Err(Error::invalid(format!(
            "training needs at least 2 examples per class, got {n0} normal / {n1} fatty"
        )));
    }
    let n = rows.len() as f64;
    let (w0, w1) = class_weights.unwrap_or((n / (2.0 * n0 as f64), n / (2.0 * n1 as f64)));

    let mut means = [0.0; 5];
    let mut stds = [0.0; 5];
    for i in 0..5 {
        let m = rows.iter().map(|r| r.0[i]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r.0[i] - m).powi(2)).sum::<f64>() / n;
        means[i] = m;
        // Constant features carry no signal; unit std keeps them inert
        // instead of dividing by zero.
        stds[i] = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };
    }
    let standardized: Vec<[f64; 5]> = rows
        .iter()
        .map(|r| std::array::from_fn(|i| (r.0[i] - means[i]) / stds[i]))
        .collect();

    let mut weights = [0.0f64; 5];
    let mut bias = 0.0f64;
    for _ in 0..epochs {
        let (grad_w, grad_b) =
            weighted_bce_gradient(&standardized, rows, &weights, bias, w0, w1);
        for i in 0..5 {
            weights[i] -= lr * grad_w[i];
        }
        bias -= lr * grad_b;
    }

    Ok(LogisticModel {
        format_version: 1,
        feature_order: FEATURE_ORDER.iter().map(|s| s.to_string()).collect(),
        weights,
        bias,
        feature_means: means,
        feature_stds: stds,
    })
}

/// Mean class-weighted cross-entropy of a linear model over standardized rows.
pub fn weighted_bce_loss(
    xs: &[[f64; 5]],
    rows: &[LabeledFeatures],
    weights: &[f64; 5],
    bias: f64,
    w0: f64,
    w1: f64,
) -> f64 {
    let mut total = 0.0;
    for (x, row) in xs.iter().zip(rows) {
        let z = bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        let cw = if row.1 == 1 { w1 } else { w0 };
        total += cw * bce_loss(sigmoid(z), row.1);
    }
    total / rows.len() as f64
}

fn weighted_bce_gradient(
    xs: &[[f64; 5]],
    rows: &[LabeledFeatures],
    weights: &[f64; 5],
    bias: f64,
    w0: f64,
    w1: f64,
) -> ([f64; 5], f64) {
    let mut grad_w = [0.0f64; 5];
    let mut grad_b = 0.0f64;
    let n = rows.len() as f64;
    for (x, row) in xs.iter().zip(rows) {
        let z = bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        let err = sigmoid(z) - row.1 as f64;
        let cw = if row.1 == 1 { w1 } else { w0 };
        for i in 0..5 {
            grad_w[i] += cw * err * x[i] / n;
        }
        grad_b += cw * err / n;
    }
    (grad_w, grad_b)
}

/// Area under the ROC curve over (score, label) pairs, with 0.5 credit for
/// ties. Exact pairwise computation.
pub fn auc(scored: &[(f64, u8)]) -> f64 {
    let pos: Vec<f64> = scored.iter().filter(|s| s.1 == 1).map(|s| s.0).collect();
    let neg: Vec<f64> = scored.iter().filter(|s| s.1 == 0).map(|s| s.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return f64::NAN;
    }
    let mut total = 0.0;
    for &p in &pos {
        for &q in &neg {
            total += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (pos.len() * neg.len()) as f64
}

// ---------------------------------------------------------------------------
// External command adapter
// ---------------------------------------------------------------------------

/// Scorer backed by an external executable: the image is written to a
/// temporary PGM, the command is invoked with that path as its only
/// argument, and a single decimal float is read from stdout.
pub struct ExternalModel {
    command: String,
}

impl ExternalModel {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalModel {
            command: command.into(),
        }
    }
}

impl BlackBoxModel for ExternalModel {
    fn predict(&self, img: &BModeImage) -> Result<f64> {
        let _slot = SUBPROCESS_GATE.acquire();
        let tmp = tempfile::Builder::new()
            .prefix("rfbmode-")
            .suffix(".pgm")
            .tempfile()?;
        std::fs::write(tmp.path(), io::pgm_bytes(img.pixels(), img.width, img.height))?;
        let output = Command::new(&self.command)
            .arg(tmp.path())
            .output()
            .map_err(|e| Error::ExternalModel(format!("failed to run {:?}: {e}", self.command)))?;
        if !output.status.success() {
            return Err(Error::ExternalModel(format!(
                "{:?} exited with {}: {}",
                self.command,
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let text = String::from_utf8_lossy(&output.stdout);
        let prob: f64 = text.trim().parse().map_err(|_| {
            Error::ExternalModel(format!(
                "{:?} printed unparseable output: {:?}",
                self.command,
                text.trim()
            ))
        })?;
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::ExternalModel(format!(
                "{:?} returned probability outside [0, 1]: {prob}",
                self.command
            )));
        }
        Ok(prob)
    }
}

/// Counting gate bounding concurrent external subprocesses.
struct Gate {
    state: Mutex<usize>,
    cv: Condvar,
    cap: usize,
}

struct GateGuard<'a>(&'a Gate);

impl Gate {
    const fn new(cap: usize) -> Self {
        Gate {
            state: Mutex::new(0),
            cv: Condvar::new(),
            cap,
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut used = self.state.lock().unwrap();
        while *used >= self.cap {
            used = self.cv.wait(used).unwrap();
        }
        *used += 1;
        GateGuard(self)
    }
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.state.lock().unwrap() -= 1;
        self.0.cv.notify_one();
    }
}

static SUBPROCESS_GATE: Gate = Gate::new(EXTERNAL_CONCURRENCY_CAP);

#[cfg(test)]
mod tests {
    use super::*;

    /// Rectangular test image: every pixel in-sector.
    fn flat_image(pixels: Vec<u8>, h: usize, w: usize) -> BModeImage {
        let mask = vec![true; h * w];
        BModeImage::new(pixels, mask, h, w, 1e-4).unwrap()
    }

    #[test]
    fn constant_image_features() {
        let img = flat_image(vec![40u8; 20 * 20], 20, 20);
        let f = extract_features(&img).unwrap();
        assert_eq!(f.mean_near, 40.0);
        assert_eq!(f.mean_far, 40.0);
        assert_eq!(f.depth_slope, 0.0);
        assert_eq!(f.contrast, 0.0);
        assert_eq!(f.ratio, 1.0);
    }

    #[test]
    fn ramp_image_has_exact_slope() {
        // Row mean = 2 * row index.
        let h = 40;
        let pixels: Vec<u8> = (0..h).flat_map(|r| vec![(2 * r) as u8; 10]).collect();
        let f = extract_features(&flat_image(pixels, h, 10)).unwrap();
        assert!((f.depth_slope - 2.0).abs() < 1e-6);
    }

    #[test]
    fn brightening_shifts_means_only() {
        let h = 30;
        let base: Vec<u8> = (0..h).flat_map(|r| vec![(3 * r) as u8; 8]).collect();
        let brightened: Vec<u8> = base.iter().map(|p| p + 10).collect();
        let f0 = extract_features(&flat_image(base, h, 8)).unwrap();
        let f1 = extract_features(&flat_image(brightened, h, 8)).unwrap();
        assert!((f1.mean_near - f0.mean_near - 10.0).abs() < 1e-9);
        assert!((f1.mean_far - f0.mean_far - 10.0).abs() < 1e-9);
        assert!((f1.depth_slope - f0.depth_slope).abs() < 1e-9);
        assert!((f1.contrast - f0.contrast).abs() < 1e-9);
    }

    #[test]
    fn empty_roi_is_rejected() {
        // Sector confined to the top rows: the far ROI is empty.
        let h = 20;
        let mut mask = vec![false; h * 5];
        for c in 0..5 {
            for r in 0..8 {
                mask[r * 5 + c] = true;
            }
        }
        let img = BModeImage::new(vec![10; h * 5], mask, h, 5, 1e-4).unwrap();
        assert!(extract_features(&img).is_err());
    }

    #[test]
    fn bce_known_values() {
        assert!((bce_loss(0.5, 0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.5, 1) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(1.0 - 1e-7, 1) < 1.01e-7);
        assert!((bce_loss(0.9, 0) - 2.302585).abs() < 1e-6);
        // Clamp keeps the loss finite at the endpoints.
        assert!(bce_loss(0.0, 1).is_finite());
        assert!(bce_loss(1.0, 0).is_finite());
    }

    #[test]
    fn bce_is_monotone_for_positive_label() {
        let mut prev = bce_loss(1e-6, 1);
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let j = bce_loss(p, 1);
            assert!(j < prev);
            prev = j;
        }
    }

    #[test]
    fn null_model_scores_half() {
        let img = flat_image(vec![17u8; 20 * 20], 20, 20);
        assert_eq!(LogisticModel::null().predict(&img).unwrap(), 0.5);
    }

    #[test]
    fn negating_weights_mirrors_probability() {
        let mut m = LogisticModel::null();
        m.weights = [0.4, -0.2, 1.0, 0.1, -0.7];
        m.bias = 0.3;
        let img = flat_image((0..400).map(|i| (i % 256) as u8).collect(), 20, 20);
        let p = m.predict(&img).unwrap();
        let mut neg = m.clone();
        neg.weights = m.weights.map(|w| -w);
        neg.bias = -m.bias;
        let q = neg.predict(&img).unwrap();
        assert!((p + q - 1.0).abs() < 1e-12);
    }

    fn toy_rows() -> Vec<LabeledFeatures> {
        // Separable in the first two features; the rest are constant.
        let mut rows = Vec::new();
        for i in 0..10 {
            let t = i as f64;
            rows.push(([t, -t, 5.0, 1.0, 1.0], 0));
            rows.push(([t + 20.0, -t - 20.0, 5.0, 1.0, 1.0], 1));
        }
        rows
    }

    #[test]
    fn separable_toy_set_reaches_full_training_accuracy() {
        let rows = toy_rows();
        let model = train_logistic(&rows, 500, 0.1, None).unwrap();
        let correct = rows
            .iter()
            .filter(|(x, y)| {
                let f = FeatureVector {
                    mean_near: x[0],
                    mean_far: x[1],
                    depth_slope: x[2],
                    contrast: x[3],
                    ratio: x[4],
                };
                predicted_label(model.predict_features(&f), 0.5) == *y
            })
            .count();
        assert_eq!(correct, rows.len());
    }

    #[test]
    fn balanced_classes_get_unit_weights() {
        let rows = toy_rows();
        let n0 = rows.iter().filter(|r| r.1 == 0).count() as f64;
        let n = rows.len() as f64;
        assert_eq!(n / (2.0 * n0), 1.0);
        // Unit class weights must reproduce the unweighted loss exactly.
        let xs: Vec<[f64; 5]> = rows.iter().map(|r| r.0).collect();
        let w = [0.3, -0.1, 0.2, 0.0, 0.05];
        let weighted = weighted_bce_loss(&xs, &rows, &w, 0.1, 1.0, 1.0);
        let unweighted: f64 = xs
            .iter()
            .zip(&rows)
            .map(|(x, r)| {
                let z = 0.1 + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                bce_loss(sigmoid(z), r.1)
            })
            .sum::<f64>()
            / rows.len() as f64;
        assert_eq!(weighted, unweighted);
    }

    #[test]
    fn training_rejects_single_class() {
        let rows: Vec<LabeledFeatures> = (0..6).map(|i| ([i as f64; 5], 0)).collect();
        assert!(train_logistic(&rows, 10, 0.1, None).is_err());
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let rows = toy_rows();
        let xs: Vec<[f64; 5]> = rows.iter().map(|r| r.0).collect();
        let weights = [0.21, -0.4, 0.13, 0.0, 0.34];
        let bias = -0.2;
        let (grad_w, grad_b) = weighted_bce_gradient(&xs, &rows, &weights, bias, 1.3, 0.8);
        let h = 1e-5;
        for i in 0..5 {
            let mut wp = weights;
            wp[i] += h;
            let mut wm = weights;
            wm[i] -= h;
            let fd = (weighted_bce_loss(&xs, &rows, &wp, bias, 1.3, 0.8)
                - weighted_bce_loss(&xs, &rows, &wm, bias, 1.3, 0.8))
                / (2.0 * h);
            assert!(
                (fd - grad_w[i]).abs() <= 1e-6 * grad_w[i].abs().max(1e-3),
                "weight {i}: analytic {} vs fd {fd}",
                grad_w[i]
            );
        }
        let fd_b = (weighted_bce_loss(&xs, &rows, &weights, bias + h, 1.3, 0.8)
            - weighted_bce_loss(&xs, &rows, &weights, bias - h, 1.3, 0.8))
            / (2.0 * h);
        assert!((fd_b - grad_b).abs() <= 1e-6 * grad_b.abs().max(1e-3));
    }

    #[test]
    fn standardization_folds_into_raw_weights() {
        let rows = toy_rows();
        let model = train_logistic(&rows, 200, 0.1, None).unwrap();
        let (w_raw, b_raw) = model.raw_space_weights();
        for (x, _) in &rows {
            let f = FeatureVector {
                mean_near: x[0],
                mean_far: x[1],
                depth_slope: x[2],
                contrast: x[3],
                ratio: x[4],
            };
            let standardized = model.predict_features(&f);
            let z = b_raw + w_raw.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            assert!((standardized - sigmoid(z)).abs() < 1e-9);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = train_logistic(&toy_rows(), 50, 0.1, None).unwrap();
        model.save(&path).unwrap();
        assert_eq!(LogisticModel::load(&path).unwrap(), model);
    }

    #[test]
    fn auc_of_perfect_and_random_scores() {
        let perfect = [(0.1, 0u8), (0.2, 0), (0.8, 1), (0.9, 1)];
        assert_eq!(auc(&perfect), 1.0);
        let ties = [(0.5, 0u8), (0.5, 1)];
        assert_eq!(auc(&ties), 0.5);
        let inverted = [(0.9, 0u8), (0.1, 1)];
        assert_eq!(auc(&inverted), 0.0);
    }
}
