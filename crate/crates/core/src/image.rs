//! Image grids, sampled Gaussian kernels, separable convolution and integer
//! pixel binning.
//!
//! All grids are single-channel, row-major `f64`. Pixel `(x, y)` covers the
//! unit square `[x, x + 1) × [y, y + 1)` so its center sits at
//! `(x + 0.5, y + 0.5)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl ImageGrid {
    /// Wraps row-major samples. Fails on empty dimensions, a size mismatch
    /// or non-finite samples.
    pub fn from_vec(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return domain(format!("image dimensions must be positive, got {width}x{height}"));
        }
        if samples.len() != width * height {
            return domain(format!(
                "expected {} samples for a {width}x{height} image, got {}",
                width * height,
                samples.len()
            ));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return domain(format!("non-finite sample at index {i}"));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_vec(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self::from_vec(width, height, samples)
    }

    /// Builds a grid from rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return domain("rows have unequal lengths");
        }
        Self::from_vec(width, height, rows.concat())
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.samples[y * self.width + x] = value;
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.samples[y * self.width..(y + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.width)
    }

    pub fn sum(&self) -> f64 {
        self.samples.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.samples.len() as f64
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            samples: self.samples.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Left-right mirror image.
    pub fn mirror_horizontal(&self) -> Self {
        let mut samples = Vec::with_capacity(self.samples.len());
        for row in self.rows() {
            samples.extend(row.iter().rev());
        }
        Self {
            width: self.width,
            height: self.height,
            samples,
        }
    }

    /// Copies the `width × height` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return domain(format!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{} image",
                self.width, self.height
            ));
        }
        let mut samples = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            let start = y * self.width + x0;
            samples.extend_from_slice(&self.samples[start..start + width]);
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    /// Scales samples so they sum to one. Used for kernel-role grids.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.sum();
        if !(total.is_finite() && total > 0.0) {
            return domain(format!("cannot normalize grid with sum {total}"));
        }
        Ok(self.map(|v| v / total))
    }

    /// Checks the kernel-role invariant: non-negative entries summing to one.
    pub fn is_kernel(&self, tol: f64) -> bool {
        self.samples.iter().all(|&v| v >= 0.0) && (self.sum() - 1.0).abs() <= tol
    }
}

/// Window rule for [`make_gaussian_kernel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusRule {
    /// `max(1, ceil(4σ))`.
    #[default]
    Auto,
    Explicit(usize),
}

/// Normalized, point-sampled Gaussian on integer offsets `-radius..=radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel1D {
    sigma: f64,
    radius: usize,
    weights: Vec<f64>,
}

impl GaussianKernel1D {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Samples `exp(-x²/2σ²)` at integer offsets and normalizes to unit sum.
///
/// Small σ degenerates toward a discrete delta; the samples are not
/// integrated over the pixel.
pub fn make_gaussian_kernel(sigma: f64, rule: RadiusRule) -> Result<GaussianKernel1D> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return domain(format!("kernel sigma must be positive and finite, got {sigma}"));
    }
    let radius = match rule {
        RadiusRule::Auto => ((4.0 * sigma).ceil() as usize).max(1),
        RadiusRule::Explicit(0) => return domain("explicit kernel radius must be at least 1"),
        RadiusRule::Explicit(r) => r,
    };
    let half: Vec<f64> = (0..=radius)
        .map(|i| {
            let x = i as f64;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total = half[0] + 2.0 * half[1..].iter().sum::<f64>();
    // Build from the half profile so the weights are symmetric bit-for-bit.
    let weights = half[1..]
        .iter()
        .rev()
        .chain(half.iter())
        .map(|w| w / total)
        .collect();
    Ok(GaussianKernel1D {
        sigma,
        radius,
        weights,
    })
}

fn convolve_rows(image: &ImageGrid, weights: &[f64]) -> Vec<f64> {
    let (w, h) = (image.width, image.height);
    let r = weights.len() / 2;
    let mut out = vec![0.0; w * h];
    let mut padded = vec![0.0; w + 2 * r];
    for y in 0..h {
        let row = image.row(y);
        padded[..r].fill(row[0]);
        padded[r..r + w].copy_from_slice(row);
        padded[r + w..].fill(row[w - 1]);
        let dst = &mut out[y * w..(y + 1) * w];
        for (x, d) in dst.iter_mut().enumerate() {
            *d = padded[x..x + weights.len()]
                .iter()
                .zip(weights)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    out
}

fn convolve_cols(samples: &[f64], w: usize, h: usize, weights: &[f64]) -> Vec<f64> {
    let r = weights.len() as isize / 2;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (k, &wk) in weights.iter().enumerate() {
            let sy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
            let src = &samples[sy * w..(sy + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += wk * s;
            }
        }
    }
    out
}

/// Convolves rows then columns with `kernel`, replicating edge pixels.
pub fn convolve_separable(image: &ImageGrid, kernel: &GaussianKernel1D) -> Result<ImageGrid> {
    let len = kernel.len();
    if len > 2 * image.width || len > 2 * image.height {
        return domain(format!(
            "kernel of {len} taps is wider than twice the {}x{} image",
            image.width, image.height
        ));
    }
    let rows = convolve_rows(image, &kernel.weights);
    let samples = convolve_cols(&rows, image.width, image.height, &kernel.weights);
    Ok(ImageGrid {
        width: image.width,
        height: image.height,
        samples,
    })
}

/// Averages non-overlapping `k × k` blocks. Dimensions that are not
/// divisible by `k` are cropped from the top-left anchor.
pub fn bin_integer(image: &ImageGrid, k: usize) -> Result<ImageGrid> {
    if k == 0 {
        return domain("binning ratio must be at least 1");
    }
    if k == 1 {
        return Ok(image.clone());
    }
    let (ow, oh) = (image.width / k, image.height / k);
    if ow == 0 || oh == 0 {
        return domain(format!(
            "binning ratio {k} exceeds {}x{} image",
            image.width, image.height
        ));
    }
    let norm = 1.0 / (k * k) as f64;
    let mut samples = vec![0.0; ow * oh];
    for oy in 0..oh {
        let dst = &mut samples[oy * ow..(oy + 1) * ow];
        for y in oy * k..(oy + 1) * k {
            let row = image.row(y);
            for (ox, d) in dst.iter_mut().enumerate() {
                *d += row[ox * k..(ox + 1) * k].iter().sum::<f64>();
            }
        }
        dst.iter_mut().for_each(|d| *d *= norm);
    }
    Ok(ImageGrid {
        width: ow,
        height: oh,
        samples,
    })
}

/// Two Gaussian stages followed by integer binning.
///
/// Stage sigmas are in pre-binning pixels; a zero sigma skips the stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlurPipeline {
    pub sigma0: f64,
    pub sigma1: f64,
    pub downsample: usize,
}

impl Default for BlurPipeline {
    fn default() -> Self {
        Self {
            sigma0: 0.0,
            sigma1: 0.0,
            downsample: 1,
        }
    }
}

impl BlurPipeline {
    pub fn new(sigma0: f64, sigma1: f64, downsample: usize) -> Result<Self> {
        let p = Self {
            sigma0,
            sigma1,
            downsample,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn single(sigma: f64) -> Result<Self> {
        Self::new(sigma, 0.0, 1)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("sigma0", self.sigma0), ("sigma1", self.sigma1)] {
            if !(s.is_finite() && s >= 0.0) {
                return domain(format!("{name} must be finite and non-negative, got {s}"));
            }
        }
        if self.downsample == 0 {
            return domain("downsample ratio must be at least 1");
        }
        Ok(())
    }

    /// Quadrature sum of the stages, scaled to post-binning pixels.
    pub fn effective_sigma(&self) -> f64 {
        self.sigma0.hypot(self.sigma1) / self.downsample as f64
    }

    /// Sampled kernels for the non-trivial stages, in application order.
    pub fn kernels(&self, rule: RadiusRule) -> Result<Vec<GaussianKernel1D>> {
        [self.sigma0, self.sigma1]
            .into_iter()
            .filter(|&s| s > 0.0)
            .map(|s| make_gaussian_kernel(s, rule))
            .collect()
    }

    /// Blurs `image` with every stage, then bins.
    pub fn apply(&self, image: &ImageGrid, rule: RadiusRule) -> Result<ImageGrid> {
        self.validate()?;
        let mut out = image.clone();
        for kernel in self.kernels(rule)? {
            out = convolve_separable(&out, &kernel)?;
        }
        bin_integer(&out, self.downsample)
    }
}

pub fn effective_sigma(pipeline: &BlurPipeline) -> f64 {
    pipeline.effective_sigma()
}
