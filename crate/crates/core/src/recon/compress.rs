//! Depth gain compensation, log compression and 8-bit pixel mapping.

use crate::error::{Error, Result};

/// Guard added to amplitudes before taking the logarithm.
pub const AMP_EPSILON: f64 = 1e-12;

/// Round-trip attenuation gain at one depth, dB: `2 * beta * f0 * depth`.
///
/// The factor 2 accounts for two-way travel to the scatterer and back.
pub fn attenuation_gain_db(beta: f64, f0_mhz: f64, depth_cm: f64) -> f64 {
    2.0 * beta * f0_mhz * depth_cm
}

/// Linear gain factors for a whole depth axis.
pub fn attenuation_gain_table(beta: f64, f0_mhz: f64, depths_cm: &[f64]) -> Vec<f64> {
    depths_cm
        .iter()
        .map(|&d| 10f64.powf(attenuation_gain_db(beta, f0_mhz, d) / 20.0))
        .collect()
}

/// Compensate depth attenuation: `out[j] = env[j] * 10^(G(j)/20)` with
/// `G(j) = 2 * beta * f0 * depths[j]` dB.
pub fn attenuation_compensate(
    env: &[f64],
    beta: f64,
    f0_mhz: f64,
    depths_cm: &[f64],
) -> Result<Vec<f64>> {
    if env.len() != depths_cm.len() {
        return Err(Error::invalid(format!(
            "envelope has {} samples but depth axis has {}",
            env.len(),
            depths_cm.len()
        )));
    }
    if let Some(bad) = depths_cm.iter().find(|&&d| d < 0.0 || d.is_nan()) {
        return Err(Error::invalid(format!("negative depth {bad} cm")));
    }
    let gains = attenuation_gain_table(beta, f0_mhz, depths_cm);
    Ok(env.iter().zip(&gains).map(|(e, g)| e * g).collect())
}

/// Log-compress amplitudes to dB and clamp to the `[alpha_l, alpha_u]`
/// window. Values below `alpha_l` are set to `alpha_l`, values above
/// `alpha_u` to `alpha_u`. Amplitudes are measured against reference 1.0
/// in raw sample units.
pub fn log_compress(amp: &[f64], alpha_l: f64, alpha_u: f64) -> Result<Vec<f64>> {
    if alpha_u <= alpha_l || !alpha_u.is_finite() || !alpha_l.is_finite() {
        return Err(Error::invalid(format!(
            "compression window requires alpha_u > alpha_l, got ({alpha_l}, {alpha_u})"
        )));
    }
    if let Some(bad) = amp.iter().find(|&&a| a < 0.0 || a.is_nan()) {
        return Err(Error::invalid(format!("negative amplitude {bad}")));
    }
    Ok(amp
        .iter()
        .map(|&a| (20.0 * (a + AMP_EPSILON).log10()).clamp(alpha_l, alpha_u))
        .collect())
}

/// Map clamped dB values to 8-bit intensities:
/// `p = round_half_up(255 * (d - alpha_l) / (alpha_u - alpha_l))`.
pub fn map_to_pixels(compressed: &[f64], alpha_l: f64, alpha_u: f64) -> Vec<u8> {
    let span = alpha_u - alpha_l;
    compressed
        .iter()
        .map(|&d| round_half_up_u8(255.0 * (d - alpha_l) / span))
        .collect()
}

/// Round half up and saturate to the u8 range.
pub(crate) fn round_half_up_u8(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}
