//! Envelope detection via the analytic signal.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Minimum line length for envelope detection.
pub const MIN_LINE_LEN: usize = 16;

/// Amplitude envelope of an RF line: `|x + i*H(x)|`.
///
/// The analytic signal is built in the frequency domain: negative
/// frequencies zeroed, positive frequencies doubled, DC and (for even
/// lengths) the Nyquist bin kept unmodified. Output length equals input
/// length and every value is >= the corresponding |x[n]| up to rounding.
pub fn envelope(line: &[f64]) -> Result<Vec<f64>> {
    let mut planner = FftPlanner::new();
    envelope_with_planner(line, &mut planner)
}

/// Same as [`envelope`] but reusing a caller-held FFT planner, so per-line
/// calls over a frame share plan setup.
pub fn envelope_with_planner(line: &[f64], planner: &mut FftPlanner<f64>) -> Result<Vec<f64>> {
    let n = line.len();
    if n < MIN_LINE_LEN {
        return Err(Error::invalid(format!(
            "envelope needs at least {MIN_LINE_LEN} samples, got {n}"
        )));
    }
    if let Some(bad) = line.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite sample {bad} in RF line")));
    }

    let mut buf: Vec<Complex<f64>> = line.iter().map(|&x| Complex::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);

    // Analytic-signal spectrum weights. For odd n there is no Nyquist bin
    // and every bin up to (n-1)/2 counts as a positive frequency.
    let half = n / 2;
    let even = n.is_multiple_of(2);
    let pos_end = if even { half } else { half + 1 };
    for b in buf.iter_mut().take(pos_end).skip(1) {
        *b *= 2.0;
    }
    for b in buf.iter_mut().skip(if even { half + 1 } else { pos_end }) {
        *b = Complex::new(0.0, 0.0);
    }

    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    Ok(buf.iter().map(|c| (c * scale).norm()).collect())
}
