//! Polar-to-Cartesian scan conversion for convex sectors.

use crate::error::{Error, Result};
use crate::recon::ConvexGeometry;

/// One output pixel's source location on the polar grid.
#[derive(Debug, Clone, Copy)]
struct Tap {
    line_lo: u32,
    samp_lo: u32,
    /// Fractional position between `line_lo` and `line_lo + 1`.
    w_line: f64,
    /// Fractional position between `samp_lo` and `samp_lo + 1`.
    w_samp: f64,
}

/// Precomputed mapping from a Cartesian pixel grid onto a convex polar
/// grid. The grid covers the sector's bounding box with isotropic pixel
/// pitch, padding (and out-of-sector pixels) taking the fill value.
pub struct ScanConverter {
    taps: Vec<Option<Tap>>,
    mask: Vec<bool>,
    n_samples: usize,
    out_h: usize,
    out_w: usize,
    pitch_m: f64,
}

impl ScanConverter {
    pub fn new(
        geometry: &ConvexGeometry,
        n_lines: usize,
        n_samples: usize,
        radial_step_m: f64,
        out_h: usize,
        out_w: usize,
    ) -> Result<Self> {
        geometry.validate()?;
        if out_h < 8 || out_w < 8 {
            return Err(Error::invalid(format!(
                "scan grid must be at least 8x8, got {out_h}x{out_w}"
            )));
        }
        if n_lines < 2 || n_samples < 2 {
            return Err(Error::invalid(format!(
                "polar grid must be at least 2x2, got {n_lines}x{n_samples}"
            )));
        }
        if !(radial_step_m.is_finite() && radial_step_m > 0.0) {
            return Err(Error::invalid(format!("bad radial step {radial_step_m}")));
        }

        let half = geometry.angular_span_rad / 2.0;
        let r0 = geometry.depth_offset_m;
        let r1 = r0 + (n_samples as f64 - 1.0) * radial_step_m;

        // Bounding box of the sector: x lateral, z axial from the curvature
        // center. The sector is symmetric in x; its nearest z is the inner
        // arc at the edge angles and its farthest z is the outer arc at 0.
        let x_max = r1 * half.sin();
        let z_min = r0 * half.cos();
        let z_max = r1;
        let pitch = ((2.0 * x_max) / out_w as f64).max((z_max - z_min) / out_h as f64);
        let x_origin = -(out_w as f64) * pitch / 2.0;
        let z_origin = (z_min + z_max) / 2.0 - (out_h as f64) * pitch / 2.0;

        let d_angle = geometry.angular_span_rad / (n_lines as f64 - 1.0);
        let mut taps = Vec::with_capacity(out_h * out_w);
        let mut mask = Vec::with_capacity(out_h * out_w);
        for i in 0..out_h {
            let z = z_origin + (i as f64 + 0.5) * pitch;
            for j in 0..out_w {
                let x = x_origin + (j as f64 + 0.5) * pitch;
                let r = x.hypot(z);
                let angle = x.atan2(z);
                let inside = angle.abs() <= half && r >= r0 && r <= r1;
                if inside {
                    let f = (angle + half) / d_angle;
                    let g = (r - r0) / radial_step_m;
                    let line_lo = (f.floor() as usize).min(n_lines - 2);
                    let samp_lo = (g.floor() as usize).min(n_samples - 2);
                    taps.push(Some(Tap {
                        line_lo: line_lo as u32,
                        samp_lo: samp_lo as u32,
                        w_line: f - line_lo as f64,
                        w_samp: g - samp_lo as f64,
                    }));
                } else {
                    taps.push(None);
                }
                mask.push(inside);
            }
        }
        Ok(ScanConverter {
            taps,
            mask,
            n_samples,
            out_h,
            out_w,
            pitch_m: pitch,
        })
    }

    /// In-sector indicator per output pixel.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn pixel_pitch_m(&self) -> f64 {
        self.pitch_m
    }

    pub fn out_size(&self) -> (usize, usize) {
        (self.out_h, self.out_w)
    }

    /// Resample a line-major polar field onto the Cartesian grid.
    ///
    /// In-sector pixels are bilinearly interpolated from the four
    /// surrounding polar samples; everything else takes `fill`. The nested
    /// lerp form reproduces constant fields exactly.
    pub fn convert(&self, polar: &[f64], fill: f64) -> Vec<f64> {
        assert_eq!(
            polar.len() % self.n_samples,
            0,
            "polar buffer is not line-major with {} samples per line",
            self.n_samples
        );
        self.taps
            .iter()
            .map(|tap| match tap {
                Some(t) => {
                    let base0 = t.line_lo as usize * self.n_samples + t.samp_lo as usize;
                    let base1 = base0 + self.n_samples;
                    let along0 = lerp(polar[base0], polar[base0 + 1], t.w_samp);
                    let along1 = lerp(polar[base1], polar[base1 + 1], t.w_samp);
                    lerp(along0, along1, t.w_line)
                }
                None => fill,
            })
            .collect()
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// One-shot scan conversion of a line-major polar field.
#[allow(clippy::too_many_arguments)]
pub fn scan_convert(
    polar: &[f64],
    geometry: &ConvexGeometry,
    n_lines: usize,
    n_samples: usize,
    radial_step_m: f64,
    out_h: usize,
    out_w: usize,
    fill: f64,
) -> Result<Vec<f64>> {
    if polar.len() != n_lines * n_samples {
        return Err(Error::invalid(format!(
            "polar buffer holds {} values, expected {} x {}",
            polar.len(),
            n_lines,
            n_samples
        )));
    }
    let conv = ScanConverter::new(geometry, n_lines, n_samples, radial_step_m, out_h, out_w)?;
    Ok(conv.convert(polar, fill))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_geometry() -> ConvexGeometry {
        ConvexGeometry {
            radius_m: 0.06,
            angular_span_rad: std::f64::consts::PI / 3.0,
            depth_offset_m: 0.06,
        }
    }

    #[test]
    fn constant_field_reproduced_exactly() {
        let (n_lines, n_samples) = (16, 64);
        let polar = vec![3.25; n_lines * n_samples];
        let conv =
            ScanConverter::new(&test_geometry(), n_lines, n_samples, 0.001, 64, 64).unwrap();
        let out = conv.convert(&polar, -1.0);
        let mut in_count = 0;
        for (v, m) in out.iter().zip(conv.mask()) {
            if *m {
                assert_eq!(*v, 3.25);
                in_count += 1;
            } else {
                assert_eq!(*v, -1.0);
            }
        }
        assert!(in_count > 0);
    }

    #[test]
    fn corners_are_outside_the_sector() {
        let (n_lines, n_samples) = (16, 64);
        let conv =
            ScanConverter::new(&test_geometry(), n_lines, n_samples, 0.001, 64, 64).unwrap();
        let out = conv.convert(&vec![1.0; n_lines * n_samples], 0.5);
        // A 60-degree annular sector cannot reach its bounding box corners.
        for idx in [0, 63, 63 * 64, 64 * 64 - 1] {
            assert!(!conv.mask()[idx]);
            assert_eq!(out[idx], 0.5);
        }
    }

    #[test]
    fn linear_in_depth_field_matches_analytic_radius() {
        let (n_lines, n_samples) = (32, 128);
        let step = 0.001;
        let geom = test_geometry();
        let polar: Vec<f64> = (0..n_lines)
            .flat_map(|_| (0..n_samples).map(move |j| geom.depth_offset_m + j as f64 * step))
            .collect();
        let conv = ScanConverter::new(&geom, n_lines, n_samples, step, 96, 96).unwrap();
        let out = conv.convert(&polar, 0.0);

        // Recompute each in-sector pixel's radius the way the LUT builder
        // does and compare the interpolated value against it.
        let half = geom.angular_span_rad / 2.0;
        let r0 = geom.depth_offset_m;
        let r1 = r0 + (n_samples as f64 - 1.0) * step;
        let x_max = r1 * half.sin();
        let z_min = r0 * half.cos();
        let pitch = ((2.0 * x_max) / 96.0).max((r1 - z_min) / 96.0);
        let x_origin = -96.0 * pitch / 2.0;
        let z_origin = (z_min + r1) / 2.0 - 96.0 * pitch / 2.0;
        for i in 0..96 {
            for j in 0..96 {
                if conv.mask()[i * 96 + j] {
                    let x = x_origin + (j as f64 + 0.5) * pitch;
                    let z = z_origin + (i as f64 + 0.5) * pitch;
                    let r = x.hypot(z);
                    assert!(
                        (out[i * 96 + j] - r).abs() <= step,
                        "pixel ({i},{j}): got {}, radius {r}",
                        out[i * 96 + j]
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_degenerate_geometry() {
        let geom = ConvexGeometry {
            radius_m: -1.0,
            ..test_geometry()
        };
        assert!(ScanConverter::new(&geom, 16, 64, 0.001, 64, 64).is_err());
    }
}
