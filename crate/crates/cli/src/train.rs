//! Manifest-level training: reconstruct every frame at one fixed parameter
//! set, extract features, split 70/30 by seeded shuffle, fit the logistic
//! model and score the held-out split.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rfbmode::classifier::{
    auc, extract_features, predicted_label, train_logistic, LabeledFeatures, LogisticModel,
};
use rfbmode::error::{Error, Result};
use rfbmode::io;
use rfbmode::recon::{reconstruct, ReconParams, DEFAULT_OUT_SIZE};

pub const TRAIN_EPOCHS: usize = 1500;
pub const TRAIN_LR: f64 = 0.5;
/// Fraction of the dataset used for training (the rest is held out).
pub const TRAIN_FRACTION_PERCENT: usize = 70;

pub struct TrainOutcome {
    pub model: LogisticModel,
    pub n_train: usize,
    pub n_test: usize,
    pub test_auc: f64,
    pub test_accuracy: f64,
}

pub fn train_on_manifest(
    entries: &[(PathBuf, u8)],
    params: &ReconParams,
    seed: u64,
) -> Result<TrainOutcome> {
    if entries.len() < 4 {
        return Err(Error::invalid(format!(
            "training needs at least 4 frames, manifest lists {}",
            entries.len()
        )));
    }
    let rows: Vec<LabeledFeatures> = entries
        .iter()
        .map(|(path, label)| -> Result<LabeledFeatures> {
            let frame = io::read_rff(path)?;
            let img = reconstruct(&frame, params, DEFAULT_OUT_SIZE)?;
            Ok((extract_features(&img)?.as_array(), *label))
        })
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = rows.len() * TRAIN_FRACTION_PERCENT / 100;
    let train_rows: Vec<LabeledFeatures> = order[..n_train].iter().map(|&i| rows[i]).collect();
    let test_rows: Vec<LabeledFeatures> = order[n_train..].iter().map(|&i| rows[i]).collect();

    let model = train_logistic(&train_rows, TRAIN_EPOCHS, TRAIN_LR, None)?;

    let scored: Vec<(f64, u8)> = test_rows
        .iter()
        .map(|(x, y)| {
            let f = rfbmode::classifier::FeatureVector {
                mean_near: x[0],
                mean_far: x[1],
                depth_slope: x[2],
                contrast: x[3],
                ratio: x[4],
            };
            (model.predict_features(&f), *y)
        })
        .collect();
    let correct = scored
        .iter()
        .filter(|(p, y)| predicted_label(*p, 0.5) == *y)
        .count();

    Ok(TrainOutcome {
        model,
        n_train,
        n_test: test_rows.len(),
        test_auc: auc(&scored),
        test_accuracy: correct as f64 / test_rows.len() as f64,
    })
}
