//! Ideal slanted-edge chips with area-weighted border pixels.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::image::{BlurPipeline, ImageGrid, RadiusRule};

/// Geometry and levels of a near-vertical edge.
///
/// The edge passes through `(width / 2 + edge_offset, height / 2)` and leans
/// by `slant_angle` degrees from vertical, so its abscissa grows by
/// `tan(slant_angle)` per row going down. Points right of the line take the
/// light level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeChipSpec {
    pub width: usize,
    pub height: usize,
    pub slant_angle: f64,
    pub edge_offset: f64,
    pub dark_level: f64,
    pub light_level: f64,
}

impl Default for EdgeChipSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            slant_angle: 5.0,
            edge_offset: 0.25,
            dark_level: 0.0,
            light_level: 1.0,
        }
    }
}

impl EdgeChipSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return domain("chip dimensions must be positive");
        }
        if !(self.slant_angle.is_finite() && (0.0..45.0).contains(&self.slant_angle)) {
            return domain(format!(
                "slant angle must lie in [0, 45) degrees, got {}",
                self.slant_angle
            ));
        }
        if !(self.dark_level.is_finite() && self.light_level.is_finite()) {
            return domain("edge levels must be finite");
        }
        if self.light_level <= self.dark_level {
            return domain(format!(
                "light level {} must exceed dark level {}",
                self.light_level, self.dark_level
            ));
        }
        if !self.edge_offset.is_finite() {
            return domain("edge offset must be finite");
        }
        let w = self.width as f64;
        for y in [0.0, self.height as f64] {
            let x = self.edge_x(y);
            if !(x > 0.0 && x < w) {
                return domain(format!(
                    "edge leaves the chip: x = {x:.3} at y = {y} for width {w}"
                ));
            }
        }
        Ok(())
    }

    /// Edge abscissa at height `y` in pixel coordinates.
    pub fn edge_x(&self, y: f64) -> f64 {
        let x0 = self.width as f64 / 2.0 + self.edge_offset;
        x0 + self.slant_angle.to_radians().tan() * (y - self.height as f64 / 2.0)
    }

    /// Same edge drawn on a grid `scale` times finer, padded by `margin`
    /// fine pixels on every side.
    pub fn upscaled(&self, scale: usize, margin: usize) -> Self {
        let s = scale as f64;
        Self {
            width: self.width * scale + 2 * margin,
            height: self.height * scale + 2 * margin,
            edge_offset: self.edge_offset * s,
            ..*self
        }
    }

    /// Fraction of the chip area on the light side.
    pub fn light_area_fraction(&self) -> f64 {
        let w = self.width as f64;
        (w - self.edge_x(self.height as f64 / 2.0)) / w
    }
}

/// Clips a convex polygon against the half-plane `a·x + b·y + c ≥ 0`.
fn clip_half_plane(poly: &[(f64, f64)], a: f64, b: f64, c: f64) -> Vec<(f64, f64)> {
    let side = |p: (f64, f64)| a * p.0 + b * p.1 + c;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for (i, &p) in poly.iter().enumerate() {
        let q = poly[(i + 1) % poly.len()];
        let (sp, sq) = (side(p), side(q));
        if sp >= 0.0 {
            out.push(p);
        }
        if (sp >= 0.0) != (sq >= 0.0) {
            let t = sp / (sp - sq);
            out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    out
}

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p.0 * q.1 - q.0 * p.1
        })
        .sum();
    0.5 * twice.abs()
}

/// Renders the ideal edge. Pixels cut by the line get the light level in
/// proportion to the exact clipped area on the light side.
pub fn render_edge_chip(spec: &EdgeChipSpec) -> Result<ImageGrid> {
    spec.validate()?;
    let tan = spec.slant_angle.to_radians().tan();
    let x_mid = spec.edge_x(0.0);
    // light side: x - x_mid - tan·y >= 0
    let (a, b, c) = (1.0, -tan, -x_mid);
    let contrast = spec.light_level - spec.dark_level;
    ImageGrid::from_fn(spec.width, spec.height, |px, py| {
        let (x0, y0) = (px as f64, py as f64);
        let (x1, y1) = (x0 + 1.0, y0 + 1.0);
        // pixels clear of the line's span across this row need no clipping
        let left = spec.edge_x(y0).min(spec.edge_x(y1));
        let right = spec.edge_x(y0).max(spec.edge_x(y1));
        let frac = if x1 <= left {
            0.0
        } else if x0 >= right {
            1.0
        } else {
            let square = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
            polygon_area(&clip_half_plane(&square, a, b, c))
        };
        spec.dark_level + frac * contrast
    })
}

/// Renders a chip through a blur pipeline.
///
/// The edge is drawn at `downsample` times the chip resolution on a canvas
/// padded by the kernel footprint, blurred, cropped back and binned, so the
/// result carries no convolution boundary effects.
pub fn render_blurred_chip(
    spec: &EdgeChipSpec,
    pipeline: &BlurPipeline,
    rule: RadiusRule,
) -> Result<ImageGrid> {
    spec.validate()?;
    pipeline.validate()?;
    let k = pipeline.downsample;
    let support: usize = pipeline.kernels(rule)?.iter().map(|kern| kern.radius()).sum();
    let margin = support.div_ceil(k) * k;
    let canvas = spec.upscaled(k, margin);
    let ideal = render_edge_chip(&canvas)?;
    let mut blurred = ideal;
    for kernel in pipeline.kernels(rule)? {
        blurred = crate::image::convolve_separable(&blurred, &kernel)?;
    }
    let cropped = blurred.crop(margin, margin, spec.width * k, spec.height * k)?;
    crate::image::bin_integer(&cropped, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn vertical(width: usize, offset: f64) -> EdgeChipSpec {
        EdgeChipSpec {
            width,
            height: 4,
            slant_angle: 0.0,
            edge_offset: offset,
            dark_level: 0.0,
            light_level: 1.0,
        }
    }

    #[test]
    fn vertical_edge_partial_pixel() {
        // center at 5.0, offset -0.7 puts the edge at 4.3: 30% into pixel 4
        let spec = EdgeChipSpec {
            dark_level: 2.0,
            light_level: 10.0,
            ..vertical(10, -0.7)
        };
        let chip = render_edge_chip(&spec).unwrap();
        for y in 0..4 {
            assert_abs_diff_eq!(chip.get(4, y), 0.3 * 2.0 + 0.7 * 10.0, epsilon = 1e-12);
            assert_eq!(chip.get(3, y), 2.0);
            assert_eq!(chip.get(5, y), 10.0);
        }
    }

    #[test]
    fn edge_on_boundary_is_two_level() {
        let chip = render_edge_chip(&vertical(10, 0.0)).unwrap();
        for y in 0..4 {
            for x in 0..10 {
                assert_eq!(chip.get(x, y), if x < 5 { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn slanted_row_positions_are_linear() {
        let spec = EdgeChipSpec::default();
        let chip = render_edge_chip(&spec).unwrap();
        // oracle: row edge position from the light area, then least squares
        let w = spec.width as f64;
        let pts: Vec<(f64, f64)> = chip
            .rows()
            .enumerate()
            .map(|(y, row)| (y as f64 + 0.5, w - row.iter().sum::<f64>()))
            .collect();
        let n = pts.len() as f64;
        let my = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - my) * (p.1 - mx)).sum();
        let syy: f64 = pts.iter().map(|p| (p.0 - my).powi(2)).sum();
        let slope = sxy / syy;
        assert_abs_diff_eq!(slope, 5f64.to_radians().tan(), epsilon = 1e-6);
        for (y, x) in &pts {
            assert_abs_diff_eq!(*x, mx + slope * (y - my), epsilon = 1e-6);
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let bad_angle = EdgeChipSpec {
            slant_angle: 60.0,
            ..Default::default()
        };
        assert!(render_edge_chip(&bad_angle).is_err());
        let outside = EdgeChipSpec {
            edge_offset: 70.0,
            ..Default::default()
        };
        assert!(render_edge_chip(&outside).is_err());
        let inverted = EdgeChipSpec {
            dark_level: 1.0,
            light_level: 0.5,
            ..Default::default()
        };
        assert!(render_edge_chip(&inverted).is_err());
    }

    #[test]
    fn blurred_chip_keeps_shape_and_levels() {
        let spec = EdgeChipSpec {
            width: 48,
            height: 40,
            ..Default::default()
        };
        let pipe = BlurPipeline::new(3.0, 2.0, 3).unwrap();
        let chip = render_blurred_chip(&spec, &pipe, RadiusRule::Auto).unwrap();
        assert_eq!((chip.width(), chip.height()), (48, 40));
        assert_abs_diff_eq!(chip.get(0, 20), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(chip.get(47, 20), 1.0, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn rows_monotone_and_flux_exact(
            angle in 0.0f64..30.0,
            offset in -4.0f64..4.0,
            dark in -2.0f64..1.0,
            contrast in 0.1f64..5.0,
        ) {
            let spec = EdgeChipSpec {
                width: 40,
                height: 32,
                slant_angle: angle,
                edge_offset: offset,
                dark_level: dark,
                light_level: dark + contrast,
            };
            prop_assume!(spec.validate().is_ok());
            let chip = render_edge_chip(&spec).unwrap();
            for row in chip.rows() {
                for pair in row.windows(2) {
                    prop_assert!(pair[1] >= pair[0] - 1e-12);
                }
            }
            let expect = dark + contrast * spec.light_area_fraction();
            prop_assert!((chip.mean() - expect).abs() < 1e-9);
        }
    }
}
