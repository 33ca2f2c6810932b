//! RF-to-B-mode reconstruction.
//!
//! The pipeline turns a post-beamformed RF frame into an 8-bit grayscale
//! image in five stages: envelope detection (analytic signal), depth
//! attenuation compensation, logarithmic compression to a dynamic range
//! window, polar-to-Cartesian scan conversion, and pixel mapping plus a
//! final resize to the classifier input size.
//!
//! Compression runs in the polar domain and the scan converter interpolates
//! the dB field; this keeps every pixel a convex combination of per-sample
//! dB values, so raising the attenuation coefficient can never darken a
//! pixel.

mod compress;
mod envelope;
mod resize;
mod scan;

pub use compress::{
    attenuation_compensate, attenuation_gain_db, attenuation_gain_table, log_compress,
    map_to_pixels, AMP_EPSILON,
};
pub use envelope::envelope;
pub use resize::{resize_bilinear, resize_mask};
pub use scan::{scan_convert, ScanConverter};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of the intermediate Cartesian grid the sector is scan
/// converted onto before the final resize.
pub const SCAN_GRID: usize = 512;

/// Default classifier input size.
pub const DEFAULT_OUT_SIZE: (usize, usize) = (299, 299);

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Geometry of a convex transducer.
///
/// Scan lines fan out from the curvature center; line `k` of `n` sits at
/// angle `-span/2 + k*span/(n-1)`. Sample `j` along a line lies at radial
/// distance `depth_offset + j*c/(2*fs)` from the curvature center, and at
/// tissue depth `depth_offset - radius + j*c/(2*fs)` below the transducer
/// face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexGeometry {
    /// Transducer curvature radius, meters.
    pub radius_m: f64,
    /// Total sector angle, radians.
    pub angular_span_rad: f64,
    /// Distance from the curvature center to the first sample, meters.
    pub depth_offset_m: f64,
}

impl ConvexGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_m.is_finite() && self.radius_m > 0.0) {
            return Err(Error::invalid(format!(
                "transducer radius must be positive, got {}",
                self.radius_m
            )));
        }
        if !(self.angular_span_rad > 0.0 && self.angular_span_rad < std::f64::consts::PI) {
            return Err(Error::invalid(format!(
                "angular span must lie in (0, pi), got {}",
                self.angular_span_rad
            )));
        }
        if !(self.depth_offset_m.is_finite() && self.depth_offset_m > 0.0) {
            return Err(Error::invalid(format!(
                "depth offset must be positive, got {}",
                self.depth_offset_m
            )));
        }
        Ok(())
    }

    /// Angle of line `k` out of `n_lines`, radians.
    pub fn line_angle(&self, k: usize, n_lines: usize) -> f64 {
        let half = self.angular_span_rad / 2.0;
        -half + k as f64 * self.angular_span_rad / (n_lines as f64 - 1.0)
    }
}

/// The attackable reconstruction parameter triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconParams {
    /// Attenuation coefficient, dB/(cm*MHz).
    pub beta: f64,
    /// Lower compression threshold, dB.
    pub alpha_l: f64,
    /// Upper compression threshold, dB.
    pub alpha_u: f64,
}

impl Default for ReconParams {
    /// The initial reconstruction parameters used throughout.
    fn default() -> Self {
        ReconParams {
            beta: 0.9,
            alpha_l: 10.0,
            alpha_u: 55.0,
        }
    }
}

impl ReconParams {
    pub fn new(beta: f64, alpha_l: f64, alpha_u: f64) -> Result<Self> {
        let p = ReconParams {
            beta,
            alpha_l,
            alpha_u,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid(format!(
                "attenuation coefficient must be non-negative, got {}",
                self.beta
            )));
        }
        if !self.alpha_l.is_finite() || !self.alpha_u.is_finite() || self.alpha_u <= self.alpha_l {
            return Err(Error::invalid(format!(
                "compression window requires alpha_u > alpha_l, got ({}, {})",
                self.alpha_l, self.alpha_u
            )));
        }
        Ok(())
    }
}

/// A post-beamformed RF frame on a convex-line grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RfFrame {
    samples: Vec<f64>,
    pub n_lines: usize,
    pub n_samples: usize,
    /// Sampling frequency, Hz.
    pub fs_hz: f64,
    /// Center frequency, MHz.
    pub f0_mhz: f64,
    /// Speed of sound, m/s.
    pub c_mps: f64,
    pub geometry: ConvexGeometry,
    /// Ground-truth class, when known (0 = normal, 1 = fatty).
    pub label: Option<u8>,
}

impl RfFrame {
    /// Build a frame from line-major samples, validating all invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        samples: Vec<f64>,
        n_lines: usize,
        n_samples: usize,
        fs_hz: f64,
        f0_mhz: f64,
        c_mps: f64,
        geometry: ConvexGeometry,
        label: Option<u8>,
    ) -> Result<Self> {
        if n_lines < 2 {
            return Err(Error::invalid(format!("need at least 2 lines, got {n_lines}")));
        }
        if n_samples < 16 {
            return Err(Error::invalid(format!(
                "need at least 16 samples per line, got {n_samples}"
            )));
        }
        if samples.len() != n_lines * n_samples {
            return Err(Error::invalid(format!(
                "sample buffer holds {} values, expected {} x {}",
                samples.len(),
                n_lines,
                n_samples
            )));
        }
        if !(fs_hz.is_finite() && f0_mhz.is_finite() && fs_hz > 2.0 * f0_mhz * 1e6) {
            return Err(Error::invalid(format!(
                "sampling rate {fs_hz} Hz violates Nyquist for f0 = {f0_mhz} MHz"
            )));
        }
        if !(c_mps.is_finite() && c_mps > 0.0) {
            return Err(Error::invalid(format!("speed of sound must be positive, got {c_mps}")));
        }
        if let Some(l) = label {
            if l > 1 {
                return Err(Error::invalid(format!("label must be 0 or 1, got {l}")));
            }
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite RF sample {bad}")));
        }
        geometry.validate()?;
        Ok(RfFrame {
            samples,
            n_lines,
            n_samples,
            fs_hz,
            f0_mhz,
            c_mps,
            geometry,
            label,
        })
    }

    /// RF samples of line `k`.
    pub fn line(&self, k: usize) -> &[f64] {
        &self.samples[k * self.n_samples..(k + 1) * self.n_samples]
    }

    /// Full line-major sample buffer.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Radial sample spacing, meters.
    pub fn radial_step_m(&self) -> f64 {
        self.c_mps / (2.0 * self.fs_hz)
    }

    /// Tissue depth of every sample (distance below the transducer face),
    /// centimeters, floored at zero.
    pub fn depths_cm(&self) -> Vec<f64> {
        let face = self.geometry.depth_offset_m - self.geometry.radius_m;
        let step = self.radial_step_m();
        (0..self.n_samples)
            .map(|j| ((face + j as f64 * step) * 100.0).max(0.0))
            .collect()
    }
}

/// An 8-bit reconstructed B-mode image.
///
/// `mask` records which pixels received any in-sector contribution; pixels
/// with `mask == false` are exactly 0. Feature extraction and statistics
/// operate on masked (in-sector) pixels only, so membership cannot shift
/// with brightness.
#[derive(Debug, Clone, PartialEq)]
pub struct BModeImage {
    pixels: Vec<u8>,
    mask: Vec<bool>,
    pub height: usize,
    pub width: usize,
    /// Meters per pixel (vertical; isotropic on the scan grid).
    pub pixel_pitch_m: f64,
}

impl BModeImage {
    pub fn new(
        pixels: Vec<u8>,
        mask: Vec<bool>,
        height: usize,
        width: usize,
        pixel_pitch_m: f64,
    ) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(Error::invalid(format!(
                "pixel buffer holds {} values, expected {} x {}",
                pixels.len(),
                height,
                width
            )));
        }
        if mask.len() != pixels.len() {
            return Err(Error::invalid("mask and pixel buffers differ in size".to_string()));
        }
        Ok(BModeImage {
            pixels,
            mask,
            height,
            width,
            pixel_pitch_m,
        })
    }

    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Whether the pixel received any in-sector contribution.
    pub fn in_sector(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn in_sector_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Mean intensity over in-sector pixels.
    pub fn mean_in_sector(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (p, m) in self.pixels.iter().zip(&self.mask) {
            if *m {
                sum += *p as f64;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

/// Per-frame reconstruction state.
///
/// Envelope detection, sample depths, the scan-conversion lookup table and
/// the sector mask do not depend on [`ReconParams`]; computing them once
/// makes repeated renders of the same frame (gradient probes) cheap.
pub struct ReconPipeline {
    env_lines: Vec<Vec<f64>>,
    depths_cm: Vec<f64>,
    converter: ScanConverter,
    out_mask: Vec<bool>,
    out_h: usize,
    out_w: usize,
    out_pitch_m: f64,
    f0_mhz: f64,
    n_samples: usize,
}

impl ReconPipeline {
    pub fn new(frame: &RfFrame, out_size: (usize, usize)) -> Result<Self> {
        let (out_h, out_w) = out_size;
        if out_h < 8 || out_w < 8 {
            return Err(Error::invalid(format!(
                "output size must be at least 8x8, got {out_h}x{out_w}"
            )));
        }
        let mut env_lines = Vec::with_capacity(frame.n_lines);
        let mut planner = rustfft::FftPlanner::<f64>::new();
        for k in 0..frame.n_lines {
            env_lines.push(envelope::envelope_with_planner(frame.line(k), &mut planner)?);
        }
        let converter = ScanConverter::new(
            &frame.geometry,
            frame.n_lines,
            frame.n_samples,
            frame.radial_step_m(),
            SCAN_GRID,
            SCAN_GRID,
        )?;
        let out_mask = resize_mask(converter.mask(), SCAN_GRID, SCAN_GRID, out_h, out_w);
        let out_pitch_m = if out_h > 1 {
            converter.pixel_pitch_m() * (SCAN_GRID as f64 - 1.0) / (out_h as f64 - 1.0)
        } else {
            converter.pixel_pitch_m()
        };
        Ok(ReconPipeline {
            env_lines,
            depths_cm: frame.depths_cm(),
            converter,
            out_mask,
            out_h,
            out_w,
            out_pitch_m,
            f0_mhz: frame.f0_mhz,
            n_samples: frame.n_samples,
        })
    }

    /// Render the frame at the given parameters.
    pub fn render(&self, params: &ReconParams) -> Result<BModeImage> {
        params.validate()?;
        let gains = attenuation_gain_table(params.beta, self.f0_mhz, &self.depths_cm);
        let mut polar_db = Vec::with_capacity(self.env_lines.len() * self.n_samples);
        for env in &self.env_lines {
            let compensated: Vec<f64> =
                env.iter().zip(&gains).map(|(e, g)| e * g).collect();
            polar_db.extend(log_compress(&compensated, params.alpha_l, params.alpha_u)?);
        }
        let native_db = self.converter.convert(&polar_db, params.alpha_l);
        let native_px = map_to_pixels(&native_db, params.alpha_l, params.alpha_u);
        let pixels = resize_bilinear(&native_px, SCAN_GRID, SCAN_GRID, self.out_h, self.out_w);
        BModeImage::new(
            pixels,
            self.out_mask.clone(),
            self.out_h,
            self.out_w,
            self.out_pitch_m,
        )
    }
}

/// Reconstruct a B-mode image from an RF frame.
///
/// Deterministic: identical inputs yield bit-identical images. Emits a
/// single channel; consumers that need RGB duplicate it.
pub fn reconstruct(
    frame: &RfFrame,
    params: &ReconParams,
    out_size: (usize, usize),
) -> Result<BModeImage> {
    ReconPipeline::new(frame, out_size)?.render(params)
}
