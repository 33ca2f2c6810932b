//! Synthetic speckle phantoms.
//!
//! Generates labeled RF frames at desk scale: each line is a field of
//! grid-placed Gaussian scatterers convolved with a Gaussian-modulated
//! pulse, attenuated with depth, plus a white noise floor. The two classes
//! differ in echogenicity and in true attenuation, mimicking how fatty
//! tissue reads on ultrasound (brighter, more attenuating).

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::recon::{ConvexGeometry, RfFrame};

/// Internal scatterer amplitude calibration. With unit echogenicity this
/// puts the mean pre-compensation envelope near 30 dB re 1.0, inside the
/// default (10, 55) dB display window.
const SCATTER_AMPLITUDE_SCALE: f64 = 25.0;

/// Gaussian pulse support half-width in standard deviations.
const PULSE_SUPPORT_SIGMAS: f64 = 4.0;

/// Specification of a synthetic frame ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub geometry: ConvexGeometry,
    pub n_lines: usize,
    pub n_samples: usize,
    pub fs_hz: f64,
    pub f0_mhz: f64,
    pub c_mps: f64,
    /// Expected scatterers per resolution cell.
    pub scatterer_density: f64,
    /// RMS scatterer amplitude scale for class 0 (normal).
    pub echogenicity_normal: f64,
    /// RMS scatterer amplitude scale for class 1 (fatty).
    pub echogenicity_fatty: f64,
    /// True attenuation of class 0, dB/(cm*MHz).
    pub beta_true_normal: f64,
    /// True attenuation of class 1, dB/(cm*MHz).
    pub beta_true_fatty: f64,
    /// Fractional (-6 dB) bandwidth of the Gaussian-modulated pulse.
    pub pulse_bandwidth: f64,
    /// RMS additive noise relative to `echogenicity_normal`.
    pub noise_floor: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            geometry: ConvexGeometry {
                radius_m: 0.06,
                angular_span_rad: 60f64.to_radians(),
                depth_offset_m: 0.06,
            },
            n_lines: 128,
            n_samples: 3072,
            fs_hz: 20e6,
            f0_mhz: 2.5,
            c_mps: 1540.0,
            scatterer_density: 12.0,
            echogenicity_normal: 1.0,
            echogenicity_fatty: 1.8,
            beta_true_normal: 0.5,
            beta_true_fatty: 1.0,
            pulse_bandwidth: 0.6,
            noise_floor: 0.02,
            seed: 7,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.scatterer_density < 5.0 {
            return Err(Error::invalid(format!(
                "scatterer density below 5 does not give fully developed speckle, got {}",
                self.scatterer_density
            )));
        }
        if self.echogenicity_normal <= 0.0 || self.echogenicity_fatty <= 0.0 {
            return Err(Error::invalid("echogenicity values must be positive".to_string()));
        }
        if self.beta_true_normal < 0.0 || self.beta_true_fatty < 0.0 {
            return Err(Error::invalid("true attenuation must be non-negative".to_string()));
        }
        if !(self.pulse_bandwidth > 0.0 && self.pulse_bandwidth < 1.0) {
            return Err(Error::invalid(format!(
                "pulse bandwidth must lie in (0, 1), got {}",
                self.pulse_bandwidth
            )));
        }
        if self.noise_floor < 0.0 {
            return Err(Error::invalid("noise floor must be non-negative".to_string()));
        }
        if self.n_lines < 2 || self.n_samples < 16 {
            return Err(Error::invalid(format!(
                "grid too small: {} lines x {} samples",
                self.n_lines, self.n_samples
            )));
        }
        if self.fs_hz <= 2.0 * self.f0_mhz * 1e6 {
            return Err(Error::invalid(format!(
                "sampling rate {} Hz violates Nyquist for f0 = {} MHz",
                self.fs_hz, self.f0_mhz
            )));
        }
        Ok(())
    }

    /// Resolution cell length in samples (pulse duration 1/(bw*f0)).
    fn cell_samples(&self) -> f64 {
        (self.fs_hz / (self.pulse_bandwidth * self.f0_mhz * 1e6)).max(1.0)
    }

    /// Gaussian-modulated sinusoidal pulse at f0. The envelope sigma comes
    /// from the -6 dB fractional bandwidth: sigma_t = sqrt(2 ln 2) / (pi * bw * f0).
    fn pulse_kernel(&self) -> Vec<f64> {
        let f0_hz = self.f0_mhz * 1e6;
        let sigma_t = (2.0 * std::f64::consts::LN_2).sqrt()
            / (std::f64::consts::PI * self.pulse_bandwidth * f0_hz);
        let half = (PULSE_SUPPORT_SIGMAS * sigma_t * self.fs_hz).ceil() as i64;
        (-half..=half)
            .map(|m| {
                let t = m as f64 / self.fs_hz;
                (-t * t / (2.0 * sigma_t * sigma_t)).exp()
                    * (2.0 * std::f64::consts::PI * f0_hz * t).cos()
            })
            .collect()
    }

    fn depths_cm(&self) -> Vec<f64> {
        let face = self.geometry.depth_offset_m - self.geometry.radius_m;
        let step = self.c_mps / (2.0 * self.fs_hz);
        (0..self.n_samples)
            .map(|j| ((face + j as f64 * step) * 100.0).max(0.0))
            .collect()
    }
}

/// Generate one labeled RF frame. Deterministic for a fixed spec.
pub fn generate_frame(spec: &PhantomSpec, label: u8) -> Result<RfFrame> {
    spec.validate()?;
    if label > 1 {
        return Err(Error::invalid(format!("label must be 0 or 1, got {label}")));
    }
    let (echogenicity, beta_true) = if label == 1 {
        (spec.echogenicity_fatty, spec.beta_true_fatty)
    } else {
        (spec.echogenicity_normal, spec.beta_true_normal)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let kernel = spec.pulse_kernel();
    let half = (kernel.len() / 2) as i64;
    let hit_prob = (spec.scatterer_density / spec.cell_samples()).min(1.0);
    let depths = spec.depths_cm();
    let atten: Vec<f64> = depths
        .iter()
        .map(|&d| 10f64.powf(-2.0 * beta_true * spec.f0_mhz * d / 20.0))
        .collect();
    let scatter_scale = echogenicity * SCATTER_AMPLITUDE_SCALE;
    let noise_scale = spec.noise_floor * spec.echogenicity_normal * SCATTER_AMPLITUDE_SCALE;

    let n = spec.n_samples;
    let mut samples = Vec::with_capacity(spec.n_lines * n);
    let mut scatterers = vec![0.0f64; n];
    for _ in 0..spec.n_lines {
        for s in scatterers.iter_mut() {
            *s = if rng.random::<f64>() < hit_prob {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scatter_scale
            } else {
                0.0
            };
        }
        for j in 0..n {
            let mut acc = 0.0;
            let lo = (j as i64 - half).max(0);
            let hi = (j as i64 + half).min(n as i64 - 1);
            for s in lo..=hi {
                acc += scatterers[s as usize] * kernel[(j as i64 - s + half) as usize];
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            // Quantize through f32, the on-disk sample type, so in-memory
            // frames match their .rff round trip bit for bit.
            samples.push((acc * atten[j] + z * noise_scale) as f32 as f64);
        }
    }

    RfFrame::new(
        samples,
        spec.n_lines,
        spec.n_samples,
        spec.fs_hz,
        spec.f0_mhz,
        spec.c_mps,
        spec.geometry,
        Some(label),
    )
}

/// Generate a balanced labeled dataset under `out_dir` and write a
/// `path,label` manifest. Frame `i` uses seed `spec.seed + i` and label
/// `i % 2`. Returns the manifest path.
pub fn generate_dataset(spec: &PhantomSpec, n_per_class: usize, out_dir: &Path) -> Result<PathBuf> {
    spec.validate()?;
    if n_per_class < 1 {
        return Err(Error::invalid("n_per_class must be at least 1".to_string()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut entries = Vec::with_capacity(2 * n_per_class);
    for i in 0..2 * n_per_class {
        let label = (i % 2) as u8;
        let mut frame_spec = spec.clone();
        frame_spec.seed = spec.seed.wrapping_add(i as u64);
        let frame = generate_frame(&frame_spec, label)?;
        let name = format!("frame_{i:04}.rff");
        io::write_rff(&out_dir.join(&name), &frame)?;
        entries.push((name, label));
    }
    let manifest = out_dir.join("manifest.csv");
    io::write_manifest(&manifest, &entries)?;
    Ok(manifest)
}
