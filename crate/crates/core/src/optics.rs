//! System PSF simulation from first-order optical parameters, 2-D Gaussian
//! approximation, and RER comparison between the two.
//!
//! The system transfer function is the product of independent components,
//! all expressed in cycles per (effective) detector pixel:
//!
//! - diffraction by a circular aperture with a central obscuration
//! - an empirical wavefront-error degradation
//!   `1 − (W/0.18)² (1 − 4(ν − ½)²)`, W in waves rms, ν the frequency
//!   normalized to the optical cutoff
//! - linear smear, `sinc(s ξx)`
//! - Gaussian line-of-sight jitter, `exp(−2π² σⱼ² ρ²)`
//! - the detector pixel footprint, `sinc(ξx) sinc(ξy)`
//!
//! Down-sampling by `k` is folded in analytically: binning `k × k` native
//! pixels multiplies the native footprint by a comb whose product is exactly
//! the footprint of one effective pixel, so the model runs directly in
//! effective-pixel units with `Q / k`, smear `/ k` and jitter `/ k`.
//!
//! The wavefront-error term is a stand-in for a full pupil-phase model.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::edge::{render_edge_chip, EdgeChipSpec};
use crate::error::{domain, Error, Result};
use crate::image::ImageGrid;
use crate::lsq::{self, FitProblem};
use crate::slant::{measure_esf, MeasureConfig};
use crate::transfer::sinc;

/// How the aperture fill factor maps to the central obscuration ratio ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObscurationRule {
    /// ε = 1 − fill.
    #[default]
    Linear,
    /// ε² = 1 − fill (fill counts collecting area).
    Area,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpticalSystemSpec {
    pub f_number: f64,
    pub fill_factor: f64,
    /// Micrometers.
    pub pixel_pitch: f64,
    /// Micrometers.
    pub wavelength: f64,
    /// Micrometers rms.
    pub wfe_rms: f64,
    /// Native pixels, along x.
    pub smear: f64,
    /// Native pixels rms.
    pub jitter_rms: f64,
    pub downsample: usize,
    pub obscuration: ObscurationRule,
}

impl Default for OpticalSystemSpec {
    fn default() -> Self {
        Self {
            f_number: 20.0,
            fill_factor: 0.8,
            pixel_pitch: 8.0,
            wavelength: 0.8,
            wfe_rms: 0.08,
            smear: 0.1,
            jitter_rms: 2.6e-4,
            downsample: 1,
            obscuration: ObscurationRule::Linear,
        }
    }
}

impl OpticalSystemSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("f_number", self.f_number),
            ("pixel_pitch", self.pixel_pitch),
            ("wavelength", self.wavelength),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return domain(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.fill_factor > 0.0 && self.fill_factor <= 1.0) {
            return domain(format!("fill factor must lie in (0, 1], got {}", self.fill_factor));
        }
        for (name, v) in [
            ("wfe_rms", self.wfe_rms),
            ("smear", self.smear),
            ("jitter_rms", self.jitter_rms),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return domain(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.downsample == 0 {
            return domain("downsample ratio must be at least 1");
        }
        Ok(())
    }

    /// λF/p at native sampling.
    pub fn q_factor(&self) -> f64 {
        self.wavelength * self.f_number / self.pixel_pitch
    }

    /// Q after down-sampling widens the effective pixel.
    pub fn q_effective(&self) -> f64 {
        self.q_factor() / self.downsample as f64
    }

    pub fn obscuration_ratio(&self) -> f64 {
        match self.obscuration {
            ObscurationRule::Linear => 1.0 - self.fill_factor,
            ObscurationRule::Area => (1.0 - self.fill_factor).sqrt(),
        }
    }

    /// Wavefront error in waves rms.
    pub fn wfe_waves(&self) -> f64 {
        self.wfe_rms / self.wavelength
    }
}

fn clear_aperture_otf(nu: f64) -> f64 {
    if nu >= 1.0 {
        0.0
    } else {
        (2.0 / PI) * (nu.acos() - nu * (1.0 - nu * nu).sqrt())
    }
}

/// Diffraction transfer of an annular aperture with obscuration `eps` at
/// frequency `nu` normalized to the optical cutoff.
pub fn annular_otf(nu: f64, eps: f64) -> f64 {
    let nu = nu.abs();
    if nu >= 1.0 {
        return 0.0;
    }
    if eps <= 0.0 {
        return clear_aperture_otf(nu);
    }
    let e2 = eps * eps;
    let a = clear_aperture_otf(nu);
    let b = if nu <= eps {
        let t = nu / eps;
        (2.0 * e2 / PI) * (t.acos() - t * (1.0 - t * t).sqrt())
    } else {
        0.0
    };
    let c = if nu <= 0.5 * (1.0 - eps) {
        -2.0 * e2
    } else if nu < 0.5 * (1.0 + eps) {
        let cos_phi = ((1.0 + e2 - 4.0 * nu * nu) / (2.0 * eps)).clamp(-1.0, 1.0);
        let phi = cos_phi.acos();
        -2.0 * e2 + (2.0 * eps / PI) * phi.sin() + ((1.0 + e2) / PI) * phi
            - (2.0 * (1.0 - e2) / PI) * (((1.0 + eps) / (1.0 - eps)) * (0.5 * phi).tan()).atan()
    } else {
        0.0
    };
    ((a + b + c) / (1.0 - e2)).max(0.0)
}

/// Empirical aberration transfer factor for `w` waves rms.
pub fn aberration_transfer(nu: f64, w: f64) -> f64 {
    if nu >= 1.0 {
        return 0.0;
    }
    let s = nu - 0.5;
    (1.0 - (w / 0.18).powi(2) * (1.0 - 4.0 * s * s)).clamp(0.0, 1.0)
}

/// PSF sampling and extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsfOptions {
    /// Samples per effective detector pixel.
    pub oversample: usize,
    /// Half width of the returned grid, effective pixels. `None` sizes the
    /// grid from the OTF slope at DC so the tail outside it stays below
    /// `1 − min_energy`.
    pub half_width: Option<f64>,
    pub include_detector: bool,
    /// Minimum fraction of PSF energy the grid must capture.
    pub min_energy: f64,
}

impl Default for PsfOptions {
    fn default() -> Self {
        Self {
            oversample: 9,
            half_width: None,
            include_detector: true,
            min_energy: 0.98,
        }
    }
}

const MIN_HALF_WIDTH: f64 = 8.0;
const MAX_HALF_WIDTH: f64 = 160.0;

impl PsfOptions {
    fn validate(&self) -> Result<()> {
        if self.oversample < 8 {
            return domain(format!(
                "PSF oversampling must be at least 8 samples per pixel, got {}",
                self.oversample
            ));
        }
        if let Some(h) = self.half_width {
            if !(h.is_finite() && h >= 1.0) {
                return domain(format!("PSF half width must be >= 1 pixel, got {h}"));
            }
        }
        if !(0.0..1.0).contains(&self.min_energy) {
            return domain("minimum captured energy must lie in [0, 1)");
        }
        Ok(())
    }

    /// Half width used for `spec`.
    ///
    /// A radial transfer function falling as `1 − aρ` near DC has a PSF tail
    /// whose energy outside radius `r` tends to `a / (2πr)`; the automatic
    /// width puts that at 80% of the allowed loss.
    pub fn resolved_half_width(&self, spec: &OpticalSystemSpec) -> f64 {
        if let Some(h) = self.half_width {
            return h;
        }
        let d = 1e-4;
        let slope = (1.0 - system_otf(spec, false, 0.0, d)) / d;
        let r = slope / (2.0 * PI * 0.8 * (1.0 - self.min_energy));
        r.clamp(MIN_HALF_WIDTH, MAX_HALF_WIDTH).ceil()
    }

    /// Odd side length in samples.
    pub fn grid_size(&self, spec: &OpticalSystemSpec) -> usize {
        2 * (self.resolved_half_width(spec) * self.oversample as f64).round() as usize + 1
    }
}

/// System OTF at `(fx, fy)` cycles per effective pixel.
pub fn system_otf(spec: &OpticalSystemSpec, include_detector: bool, fx: f64, fy: f64) -> f64 {
    let k = spec.downsample as f64;
    let rho = fx.hypot(fy);
    let nu = rho * spec.q_effective();
    if nu >= 1.0 {
        return 0.0;
    }
    let mut h = annular_otf(nu, spec.obscuration_ratio()) * aberration_transfer(nu, spec.wfe_waves());
    h *= sinc(spec.smear / k * fx);
    let sj = spec.jitter_rms / k;
    h *= (-2.0 * PI * PI * sj * sj * rho * rho).exp();
    if include_detector {
        h *= sinc(fx) * sinc(fy);
    }
    h
}

/// Sampled PSF in the kernel role.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfGrid {
    pub grid: ImageGrid,
    /// Samples per effective detector pixel.
    pub oversample: usize,
    /// Grid sum before normalization.
    pub captured_energy: f64,
}

impl PsfGrid {
    /// Detector pixels per sample.
    pub fn sample_pitch(&self) -> f64 {
        1.0 / self.oversample as f64
    }

    pub fn size(&self) -> usize {
        self.grid.width()
    }

    /// Centroid in samples.
    pub fn centroid(&self) -> (f64, f64) {
        let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
        for (y, row) in self.grid.rows().enumerate() {
            for (x, &v) in row.iter().enumerate() {
                sx += x as f64 * v;
                sy += y as f64 * v;
                s += v;
            }
        }
        (sx / s, sy / s)
    }

    /// Marginal second central moments in samples².
    pub fn marginal_variances(&self) -> (f64, f64) {
        let (cx, cy) = self.centroid();
        let (mut vx, mut vy, mut s) = (0.0, 0.0, 0.0);
        for (y, row) in self.grid.rows().enumerate() {
            for (x, &v) in row.iter().enumerate() {
                vx += (x as f64 - cx).powi(2) * v;
                vy += (y as f64 - cy).powi(2) * v;
                s += v;
            }
        }
        (vx / s, vy / s)
    }
}

/// Smallest 2^a 3^b 5^c at or above `n`.
fn fft_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

struct Fft2 {
    w: usize,
    h: usize,
    row: Arc<dyn Fft<f64>>,
    col: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(planner: &mut FftPlanner<f64>, w: usize, h: usize, inverse: bool) -> Self {
        let (row, col) = if inverse {
            (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
        } else {
            (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
        };
        Self { w, h, row, col }
    }

    fn process(&self, data: &mut [Complex<f64>]) {
        self.row.process(data);
        let mut t = transpose(data, self.w, self.h);
        self.col.process(&mut t);
        data.copy_from_slice(&transpose(&t, self.h, self.w));
    }
}

fn transpose(data: &[Complex<f64>], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::default(); w * h];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = data[y * w + x];
        }
    }
    out
}

fn signed_index(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Simulates the system PSF of `spec`.
///
/// The OTF is sampled on a field twice the grid size, inverse transformed,
/// and the central `grid_size()` samples kept. The kept sum is the captured
/// energy; below `min_energy` the call fails with a request for a larger
/// grid. Residual negative lobes from the empirical aberration term are
/// clipped before normalization.
pub fn simulate_psf(spec: &OpticalSystemSpec, opts: &PsfOptions) -> Result<PsfGrid> {
    spec.validate()?;
    opts.validate()?;
    let m = opts.grid_size(spec);
    let n = fft_size(2 * m);
    let os = opts.oversample as f64;
    let df = os / n as f64;
    let fy: Vec<f64> = (0..n).map(|i| signed_index(i, n) * df).collect();
    let mut field: Vec<Complex<f64>> = Vec::with_capacity(n * n);
    for &vy in &fy {
        for &vx in &fy {
            field.push(Complex::new(system_otf(spec, opts.include_detector, vx, vy), 0.0));
        }
    }
    let mut planner = FftPlanner::new();
    Fft2::new(&mut planner, n, n, true).process(&mut field);
    let scale = 1.0 / (n * n) as f64;
    let half = m / 2;
    let mut captured = 0.0;
    let grid = ImageGrid::from_fn(m, m, |x, y| {
        let ix = (x + n - half) % n;
        let iy = (y + n - half) % n;
        let v = field[iy * n + ix].re * scale;
        captured += v;
        v.max(0.0)
    })?;
    if captured < opts.min_energy {
        return domain(format!(
            "PSF grid of half width {} px captures {:.4} of the energy (< {}); increase half_width",
            opts.resolved_half_width(spec), captured, opts.min_energy
        ));
    }
    Ok(PsfGrid {
        grid: grid.normalized()?,
        oversample: opts.oversample,
        captured_energy: captured,
    })
}

/// Axis-aligned 2-D Gaussian. Centers in samples, widths in effective
/// detector pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian2DFit {
    pub amplitude: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

fn gaussian_profile(n: usize, center: f64, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let d = i as f64 - center;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// Least-squares Gaussian fit to the PSF samples, started from the PSF
/// moments.
pub fn fit_gaussian_2d(psf: &PsfGrid) -> Result<Gaussian2DFit> {
    let (w, h) = (psf.grid.width(), psf.grid.height());
    let (cx, cy) = psf.centroid();
    let (vx, vy) = psf.marginal_variances();
    let peak = psf.grid.samples().iter().copied().fold(f64::MIN, f64::max);
    let data = psf.grid.samples();
    let residuals = |p: &[f64]| {
        let gx = gaussian_profile(w, p[1], p[3]);
        let gy = gaussian_profile(h, p[2], p[4]);
        let mut r = Vec::with_capacity(w * h);
        for (y, gyv) in gy.iter().enumerate() {
            let row = &data[y * w..(y + 1) * w];
            r.extend(gx.iter().zip(row).map(|(gxv, d)| p[0] * gxv * gyv - d));
        }
        r
    };
    let big = (w.max(h)) as f64;
    let problem = FitProblem::new(residuals, vec![peak, cx, cy, vx.sqrt(), vy.sqrt()])
        .with_bounds(vec![
            (0.0, f64::INFINITY),
            (-big, 2.0 * big),
            (-big, 2.0 * big),
            (1e-3, big),
            (1e-3, big),
        ])
        .with_tol(1e-9);
    let fit = lsq::solve(&problem)?;
    if !fit.converged {
        return Err(Error::Fit {
            message: "2-D Gaussian PSF fit did not converge".into(),
            params: fit.params,
            residual_norm: fit.residual_norm,
        });
    }
    let os = psf.oversample as f64;
    let p = &fit.params;
    Ok(Gaussian2DFit {
        amplitude: p[0],
        center_x: p[1],
        center_y: p[2],
        sigma_x: p[3] / os,
        sigma_y: p[4] / os,
    })
}

/// Samples `fit` on a grid shaped like `like` and normalizes it.
pub fn sampled_gaussian_psf(fit: &Gaussian2DFit, like: &PsfGrid) -> Result<PsfGrid> {
    let os = like.oversample as f64;
    let gx = gaussian_profile(like.grid.width(), fit.center_x, fit.sigma_x * os);
    let gy = gaussian_profile(like.grid.height(), fit.center_y, fit.sigma_y * os);
    let grid = ImageGrid::from_fn(like.grid.width(), like.grid.height(), |x, y| gx[x] * gy[y])?;
    Ok(PsfGrid {
        grid: grid.normalized()?,
        oversample: like.oversample,
        captured_energy: 1.0,
    })
}

/// Centered, sampled Gaussian PSF of widths in detector pixels on a grid
/// of half width `max(6σ, 8)` unless `opts` fixes one.
pub fn gaussian_psf(sigma_x: f64, sigma_y: f64, opts: &PsfOptions) -> Result<PsfGrid> {
    opts.validate()?;
    if !(sigma_x > 0.0 && sigma_y > 0.0) {
        return domain("Gaussian PSF widths must be positive");
    }
    let h = opts
        .half_width
        .unwrap_or_else(|| (6.0 * sigma_x.max(sigma_y)).max(MIN_HALF_WIDTH).ceil());
    let m = 2 * (h * opts.oversample as f64).round() as usize + 1;
    let c = (m / 2) as f64;
    let fit = Gaussian2DFit {
        amplitude: 1.0,
        center_x: c,
        center_y: c,
        sigma_x,
        sigma_y,
    };
    let like = PsfGrid {
        grid: ImageGrid::filled(m, m, 0.0)?,
        oversample: opts.oversample,
        captured_energy: 1.0,
    };
    sampled_gaussian_psf(&fit, &like)
}

/// Linear convolution of `image` with `kernel`, keeping only outputs whose
/// kernel support lies inside the image.
pub fn fft_convolve_valid(image: &ImageGrid, kernel: &ImageGrid) -> Result<ImageGrid> {
    let (iw, ih) = (image.width(), image.height());
    let (kw, kh) = (kernel.width(), kernel.height());
    if kw > iw || kh > ih {
        return domain("kernel larger than image");
    }
    let (nw, nh) = (fft_size(iw), fft_size(ih));
    let mut planner = FftPlanner::new();
    let fwd = Fft2::new(&mut planner, nw, nh, false);
    let inv = Fft2::new(&mut planner, nw, nh, true);
    let mut a = vec![Complex::default(); nw * nh];
    for y in 0..ih {
        for x in 0..iw {
            a[y * nw + x].re = image.get(x, y);
        }
    }
    let mut b = vec![Complex::default(); nw * nh];
    for y in 0..kh {
        for x in 0..kw {
            b[y * nw + x].re = kernel.get(x, y);
        }
    }
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / (nw * nh) as f64;
    let (ow, oh) = (iw - kw + 1, ih - kh + 1);
    ImageGrid::from_fn(ow, oh, |x, y| a[(y + kh - 1) * nw + x + kw - 1].re * scale)
}

/// Blurs the edge of `chip` with `psf` at the PSF's oversampling and
/// samples the result at detector pixel centers.
///
/// The PSF already integrates over the detector footprint, so the detector
/// value is the blurred field at the pixel center; for an even oversampling
/// the four samples around the center are averaged.
pub fn image_edge_through_psf(psf: &PsfGrid, chip: &EdgeChipSpec) -> Result<ImageGrid> {
    chip.validate()?;
    let os = psf.oversample;
    let k = psf.size();
    if k.is_multiple_of(2) || psf.grid.height() != k {
        return domain("PSF grid must be square with odd size");
    }
    let canvas = chip.upscaled(os, k / 2);
    let fine = fft_convolve_valid(&render_edge_chip(&canvas)?, &psf.grid)?;
    let taps: Vec<usize> = if os % 2 == 1 {
        vec![os / 2]
    } else {
        vec![os / 2 - 1, os / 2]
    };
    let norm = (taps.len() * taps.len()) as f64;
    ImageGrid::from_fn(chip.width, chip.height, |x, y| {
        let mut s = 0.0;
        for &ty in &taps {
            for &tx in &taps {
                s += fine.get(x * os + tx, y * os + ty);
            }
        }
        s / norm
    })
}

pub fn blur_and_measure(psf: &PsfGrid, chip: &EdgeChipSpec, cfg: &MeasureConfig) -> Result<f64> {
    let image = image_edge_through_psf(psf, chip)?;
    measure_esf(&image, cfg).map(|m| m.rer)
}

/// RER of the same edge imaged through two PSFs.
pub fn compare_rer_psfs(
    first: &PsfGrid,
    second: &PsfGrid,
    chip: &EdgeChipSpec,
    cfg: &MeasureConfig,
) -> Result<(f64, f64)> {
    Ok((
        blur_and_measure(first, chip, cfg)?,
        blur_and_measure(second, chip, cfg)?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerComparison {
    pub q_effective: f64,
    pub fit: Gaussian2DFit,
    pub rer_optical: f64,
    pub rer_gaussian_fit: f64,
    pub captured_energy: f64,
}

impl RerComparison {
    pub fn delta(&self) -> f64 {
        self.rer_optical - self.rer_gaussian_fit
    }
}

/// Simulates the optical PSF, fits its Gaussian sibling and measures RER of
/// an edge imaged through each.
pub fn compare_rer(
    spec: &OpticalSystemSpec,
    chip: &EdgeChipSpec,
    opts: &PsfOptions,
    cfg: &MeasureConfig,
) -> Result<RerComparison> {
    let psf = simulate_psf(spec, opts)?;
    let fit = fit_gaussian_2d(&psf)?;
    let gauss = sampled_gaussian_psf(&fit, &psf)?;
    let (rer_optical, rer_gaussian_fit) = compare_rer_psfs(&psf, &gauss, chip, cfg)?;
    Ok(RerComparison {
        q_effective: spec.q_effective(),
        fit,
        rer_optical,
        rer_gaussian_fit,
        captured_energy: psf.captured_energy,
    })
}
