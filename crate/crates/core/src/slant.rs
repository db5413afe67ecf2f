//! Relative edge response by the slanted-edge method.
//!
//! Per-row edge positions come from the centroid of the row derivative; a
//! least-squares line through them defines the edge. Every pixel is then
//! projected onto the edge normal and averaged into bins of width
//! `1 / supersample`, giving an oversampled edge spread function (ESF).
//! The ESF is normalized by its plateau means, its 0.5 crossing becomes the
//! origin, and RER is the ESF rise between -0.5 and +0.5 pixel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Interpolant used to sample the binned ESF between lattice points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsfInterpolation {
    #[default]
    Linear,
    /// Catmull-Rom cubic through the four nearest bins.
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasureConfig {
    /// ESF bins per pixel.
    pub supersample: usize,
    pub interpolation: EsfInterpolation,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            supersample: 4,
            interpolation: EsfInterpolation::Linear,
        }
    }
}

/// Edge line `x = intercept + slope · y` in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLine {
    pub intercept: f64,
    pub slope: f64,
    /// Angle from vertical, degrees.
    pub angle: f64,
    /// Centroid abscissa for each row, evaluated at the row center.
    pub per_row_offsets: Vec<f64>,
}

impl EdgeLine {
    pub fn x_at(&self, y: f64) -> f64 {
        self.intercept + self.slope * y
    }

    /// Signed distance from `(x, y)` to the line along its normal; positive
    /// to the right.
    pub fn normal_distance(&self, x: f64, y: f64) -> f64 {
        (x - self.x_at(y)) / self.slope.hypot(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsfMeasurement {
    /// Bin centers relative to the ESF 0.5 crossing, pixels.
    pub bin_positions: Vec<f64>,
    /// ESF normalized so the left plateau maps to 0 and the right to 1.
    pub esf_values: Vec<f64>,
    /// Pixels projected into each bin; empty bins were filled by
    /// interpolation.
    pub bin_counts: Vec<usize>,
    pub dark_plateau: f64,
    pub light_plateau: f64,
    pub edge_angle: f64,
    pub rer: f64,
}

fn measurement<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Measurement(msg.into()))
}

/// Finds the edge from derivative centroids and fits a line through them.
pub fn locate_edge(chip: &ImageGrid) -> Result<EdgeLine> {
    if chip.width() < 3 || chip.height() < 2 {
        return measurement(format!(
            "chip {}x{} too small to locate an edge",
            chip.width(),
            chip.height()
        ));
    }
    let mut offsets = Vec::with_capacity(chip.height());
    for (y, row) in chip.rows().enumerate() {
        // derivative between pixels i and i+1 sits on the boundary at x = i + 1
        let (mut moment, mut mass) = (0.0, 0.0);
        for (i, pair) in row.windows(2).enumerate() {
            let d = pair[1] - pair[0];
            moment += (i + 1) as f64 * d;
            mass += d;
        }
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        if mass.abs() <= 1e-9 * scale {
            return measurement(format!("row {y} has no edge (zero derivative energy)"));
        }
        offsets.push(moment / mass);
    }
    let n = offsets.len() as f64;
    let ys = (0..offsets.len()).map(|y| y as f64 + 0.5);
    let y_mean = ys.clone().sum::<f64>() / n;
    let x_mean = offsets.iter().sum::<f64>() / n;
    let (mut sxy, mut syy) = (0.0, 0.0);
    for (y, x) in ys.zip(&offsets) {
        sxy += (y - y_mean) * (x - x_mean);
        syy += (y - y_mean) * (y - y_mean);
    }
    let slope = sxy / syy;
    Ok(EdgeLine {
        intercept: x_mean - slope * y_mean,
        slope,
        angle: slope.atan().to_degrees(),
        per_row_offsets: offsets,
    })
}

/// Oversampled ESF with plateau normalization but without RER or origin
/// alignment. Positions are raw normal distances to `line`.
struct RawEsf {
    positions: Vec<f64>,
    values: Vec<f64>,
    counts: Vec<usize>,
    populated: Vec<bool>,
}

fn bin_projection(chip: &ImageGrid, line: &EdgeLine, supersample: usize) -> Result<RawEsf> {
    let ss = supersample as f64;
    let mut coords = Vec::with_capacity(chip.width() * chip.height());
    let (mut lo, mut hi) = (i64::MAX, i64::MIN);
    for (y, row) in chip.rows().enumerate() {
        for (x, &v) in row.iter().enumerate() {
            let d = line.normal_distance(x as f64 + 0.5, y as f64 + 0.5);
            let j = (d * ss).round() as i64;
            lo = lo.min(j);
            hi = hi.max(j);
            coords.push((j, v));
        }
    }
    let len = (hi - lo + 1) as usize;
    let mut sums = vec![0.0; len];
    let mut counts = vec![0usize; len];
    for (j, v) in coords {
        let idx = (j - lo) as usize;
        sums[idx] += v;
        counts[idx] += 1;
    }
    let positions: Vec<f64> = (lo..=hi).map(|j| j as f64 / ss).collect();
    let populated: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
    let mut values: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect();
    fill_gaps(&mut values)?;
    Ok(RawEsf {
        positions,
        values,
        counts,
        populated,
    })
}

/// Linear interpolation across empty bins. Bins at either end are always
/// populated because the lattice spans the observed distances.
fn fill_gaps(values: &mut [f64]) -> Result<()> {
    let known: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    if known.len() < 2 {
        return measurement("fewer than two populated ESF bins");
    }
    for pair in known.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for i in a + 1..b {
            let t = (i - a) as f64 / (b - a) as f64;
            values[i] = values[a] + t * (values[b] - values[a]);
        }
    }
    Ok(())
}

/// First position where `values` crosses `level`, searching outward from the
/// bin nearest `near`. Linear interpolation between bins.
fn crossing(positions: &[f64], values: &[f64], level: f64, near: f64) -> Option<f64> {
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    for i in 0..values.len().saturating_sub(1) {
        let (a, b) = (values[i] - level, values[i + 1] - level);
        if a == 0.0 {
            candidates.push((positions[i], (positions[i] - near).abs()));
        } else if a * b < 0.0 {
            let x = positions[i] + (positions[i + 1] - positions[i]) * a / (a - b);
            candidates.push((x, (x - near).abs()));
        }
    }
    candidates
        .into_iter()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .map(|c| c.0)
}

struct Plateaus {
    left: f64,
    right: f64,
}

fn plateau_means(positions: &[f64], values: &[f64], populated: &[bool], center: f64, half_window: f64) -> Result<Plateaus> {
    let (mut ls, mut ln, mut rs, mut rn) = (0.0, 0usize, 0.0, 0usize);
    for ((&x, &v), &p) in positions.iter().zip(values).zip(populated) {
        if !p {
            continue;
        }
        if x < center - half_window {
            ls += v;
            ln += 1;
        } else if x > center + half_window {
            rs += v;
            rn += 1;
        }
    }
    if ln < 2 || rn < 2 {
        return measurement(format!(
            "plateaus beyond ±{half_window:.2} px hold {ln} and {rn} bins; need at least 2 each"
        ));
    }
    Ok(Plateaus {
        left: ls / ln as f64,
        right: rs / rn as f64,
    })
}

fn normalize(values: &[f64], p: &Plateaus) -> Result<Vec<f64>> {
    let span = p.right - p.left;
    if span == 0.0 || !span.is_finite() {
        return measurement("plateaus are equal; no edge contrast");
    }
    Ok(values.iter().map(|v| (v - p.left) / span).collect())
}

/// Samples the normalized ESF at `x`.
pub fn sample_esf(positions: &[f64], values: &[f64], x: f64, interp: EsfInterpolation) -> f64 {
    let n = values.len();
    let step = positions[1] - positions[0];
    let t = (x - positions[0]) / step;
    let i = (t.floor() as isize).clamp(0, n as isize - 2) as usize;
    let f = t - i as f64;
    match interp {
        EsfInterpolation::Linear => values[i] + f * (values[i + 1] - values[i]),
        EsfInterpolation::Cubic => {
            let at = |k: isize| values[(i as isize + k).clamp(0, n as isize - 1) as usize];
            let (p0, p1, p2, p3) = (at(-1), at(0), at(1), at(2));
            let f2 = f * f;
            let f3 = f2 * f;
            0.5 * (2.0 * p1
                + (p2 - p0) * f
                + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * f2
                + (3.0 * p1 - p0 - 3.0 * p2 + p3) * f3)
        }
    }
}

/// Builds the oversampled, plateau-normalized ESF and its RER.
pub fn build_esf(chip: &ImageGrid, line: &EdgeLine, config: &MeasureConfig) -> Result<EsfMeasurement> {
    if config.supersample < 2 {
        return measurement(format!(
            "supersample must be at least 2, got {}",
            config.supersample
        ));
    }
    let raw = bin_projection(chip, line, config.supersample)?;
    let (pos, vals) = (&raw.positions, &raw.values);

    // Preliminary plateaus from the outer 3 px, then refine twice with the
    // window set by the width estimate.
    let span = pos[pos.len() - 1] - pos[0];
    let outer = 0.5 * span - 3.0;
    let mut plateaus = plateau_means(pos, vals, &raw.populated, 0.5 * (pos[0] + pos[pos.len() - 1]), outer.max(0.0))?;
    let mut center = 0.0;
    for _ in 0..2 {
        let norm = normalize(vals, &plateaus)?;
        center = crossing(pos, &norm, 0.5, center)
            .ok_or_else(|| Error::Measurement("ESF never crosses 0.5".into()))?;
        let q1 = crossing(pos, &norm, 0.25, center);
        let q3 = crossing(pos, &norm, 0.75, center);
        let sigma_est = match (q1, q3) {
            (Some(a), Some(b)) => (b - a).abs() / 1.348_979_500_392_163,
            _ => 0.0,
        };
        let half_window = (3.0 * sigma_est).max(3.0);
        plateaus = plateau_means(pos, vals, &raw.populated, center, half_window)?;
    }
    let norm = normalize(vals, &plateaus)?;
    let center = crossing(pos, &norm, 0.5, center)
        .ok_or_else(|| Error::Measurement("ESF never crosses 0.5".into()))?;
    let lo = center - 0.5;
    let hi = center + 0.5;
    if lo < pos[0] || hi > pos[pos.len() - 1] {
        return measurement("ESF does not extend half a pixel around the edge");
    }
    let rer = sample_esf(pos, &norm, hi, config.interpolation) - sample_esf(pos, &norm, lo, config.interpolation);
    Ok(EsfMeasurement {
        bin_positions: pos.iter().map(|x| x - center).collect(),
        esf_values: norm,
        bin_counts: raw.counts,
        dark_plateau: plateaus.left.min(plateaus.right),
        light_plateau: plateaus.left.max(plateaus.right),
        edge_angle: line.angle,
        rer,
    })
}

/// Full measurement with explicit settings.
pub fn measure_esf(chip: &ImageGrid, config: &MeasureConfig) -> Result<EsfMeasurement> {
    let line = locate_edge(chip)?;
    build_esf(chip, &line, config)
}

/// RER with the default settings (4 bins per pixel, linear interpolation).
pub fn measure_rer(chip: &ImageGrid) -> Result<f64> {
    measure_esf(chip, &MeasureConfig::default()).map(|m| m.rer)
}
