//! One-dimensional transfer functions and the pixel-correction calibration.
//!
//! A Gaussian PSF of width σ pixels has transfer function
//! `exp(-2π²σ²ξ²)`; a unit-width pixel has `sinc(ξ) = sin(πξ)/(πξ)`. Their
//! product is the transfer function actually seen by a sampled image.
//! Fitting a pure Gaussian to that product yields a wider σ_f, and the
//! residual σ_f − σ follows a Lorentzian in σ.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::lsq::{self, FitProblem};
use crate::models::LorentzianCorrection;

/// Default fit lattice: 201 uniform samples over `[0, 1]` cycles/pixel.
pub const DEFAULT_FIT_MAX_FREQ: f64 = 1.0;
pub const DEFAULT_FIT_SAMPLES: usize = 201;

#[derive(Debug, Clone, PartialEq)]
pub struct TransferSamples {
    /// Cycles per pixel; uniform, ascending, starting at 0.
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
}

/// Uniform lattice of `count` frequencies over `[0, max_freq]`.
pub fn frequency_lattice(max_freq: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 || !(max_freq.is_finite() && max_freq > 0.0) {
        return domain(format!(
            "frequency lattice needs >= 2 samples over a positive range, got {count} over {max_freq}"
        ));
    }
    let step = max_freq / (count - 1) as f64;
    Ok((0..count).map(|i| i as f64 * step).collect())
}

pub fn default_lattice() -> Vec<f64> {
    frequency_lattice(DEFAULT_FIT_MAX_FREQ, DEFAULT_FIT_SAMPLES).expect("static lattice")
}

fn gauss_value(sigma: f64, xi: f64) -> f64 {
    (-2.0 * PI * PI * sigma * sigma * xi * xi).exp()
}

pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

pub fn gaussian_otf(sigma: f64, freqs: &[f64]) -> Result<TransferSamples> {
    if sigma.is_nan() || sigma < 0.0 {
        return domain(format!("Gaussian OTF needs sigma >= 0, got {sigma}"));
    }
    Ok(TransferSamples {
        frequencies: freqs.to_vec(),
        values: freqs.iter().map(|&xi| gauss_value(sigma, xi)).collect(),
    })
}

pub fn pixel_otf(freqs: &[f64]) -> TransferSamples {
    TransferSamples {
        frequencies: freqs.to_vec(),
        values: freqs.iter().map(|&xi| sinc(xi)).collect(),
    }
}

/// Pointwise product of the Gaussian and pixel transfer functions.
pub fn combined_otf(sigma: f64, freqs: &[f64]) -> Result<TransferSamples> {
    let g = gaussian_otf(sigma, freqs)?;
    Ok(TransferSamples {
        values: g.values.iter().zip(freqs).map(|(v, &xi)| v * sinc(xi)).collect(),
        frequencies: g.frequencies,
    })
}

/// Least-squares σ_f of `exp(-2π²σ_f²ξ²)` against `target`, unweighted over
/// the target lattice. `initial` defaults to 0.5.
pub fn fit_gaussian_sigma(target: &TransferSamples, initial: Option<f64>) -> Result<f64> {
    if target.frequencies.len() != target.values.len() || target.values.len() < 2 {
        return domain("transfer samples need matching frequency and value vectors of length >= 2");
    }
    if target.values[0].is_nan() || target.values[0] <= 0.0 {
        return domain(format!(
            "target transfer must be positive at DC, got {}",
            target.values[0]
        ));
    }
    let start = initial.unwrap_or(0.5);
    let problem = FitProblem::new(
        |p: &[f64]| {
            target
                .frequencies
                .iter()
                .zip(&target.values)
                .map(|(&xi, v)| gauss_value(p[0], xi) - v)
                .collect()
        },
        vec![start],
    );
    let fit = lsq::solve(&problem)?;
    if !fit.converged {
        return Err(Error::Fit {
            message: "Gaussian transfer fit did not converge".into(),
            params: fit.params,
            residual_norm: fit.residual_norm,
        });
    }
    Ok(fit.params[0].abs())
}

/// σ_f for the combined transfer at `sigma`, started from `√(σ² + 1/12)`
/// (Gaussian plus the variance of a unit box).
pub fn fitted_sigma_for(sigma: f64, freqs: &[f64]) -> Result<f64> {
    let target = combined_otf(sigma, freqs)?;
    fit_gaussian_sigma(&target, Some((sigma * sigma + 1.0 / 12.0).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub sigma: f64,
    pub sigma_f: f64,
    pub residual: f64,
    pub lorentzian: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub correction: LorentzianCorrection,
    pub points: Vec<ResidualPoint>,
    /// Coefficient of determination of the Lorentzian against the residuals.
    pub r_squared: f64,
}

/// Uniform σ grid over `[start, stop]` with spacing `step`, endpoints kept.
pub fn sigma_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// Calibration on the default lattice. See [`calibrate_correction_on`].
pub fn calibrate_correction(sigma_grid: &[f64]) -> Result<Calibration> {
    calibrate_correction_on(sigma_grid, &default_lattice())
}

/// Fits σ_f for every grid σ, then fits `(b, m)` of the Lorentzian to the
/// residuals σ_f − σ.
pub fn calibrate_correction_on(sigma_grid: &[f64], freqs: &[f64]) -> Result<Calibration> {
    if sigma_grid.len() < 20 {
        return domain(format!(
            "calibration grid needs at least 20 points, got {}",
            sigma_grid.len()
        ));
    }
    let lo = sigma_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sigma_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo > 0.1 + 1e-9 || hi < 2.0 - 1e-9 {
        return domain(format!(
            "calibration grid must cover [0.1, 2], got [{lo}, {hi}]"
        ));
    }
    if lo < 0.0 {
        return domain("calibration grid must be non-negative");
    }
    let residuals: Vec<(f64, f64)> = sigma_grid
        .iter()
        .map(|&s| fitted_sigma_for(s, freqs).map(|f| (s, f)))
        .collect::<Result<_>>()?;

    let problem = FitProblem::new(
        |p: &[f64]| {
            residuals
                .iter()
                .map(|&(s, f)| {
                    let d = s - p[1];
                    p[0] / (PI * (d * d + p[0] * p[0])) - (f - s)
                })
                .collect()
        },
        vec![0.3, 0.0],
    )
    .with_bounds(vec![(1e-6, 1e3), (-1e3, 1e3)]);
    let fit = lsq::solve(&problem).map_err(|e| Error::Fit {
        message: format!("Lorentzian calibration failed: {e}"),
        params: vec![],
        residual_norm: f64::NAN,
    })?;
    if !fit.converged {
        return Err(Error::Fit {
            message: "Lorentzian calibration did not converge".into(),
            params: fit.params,
            residual_norm: fit.residual_norm,
        });
    }
    let correction = LorentzianCorrection::new(fit.params[0], fit.params[1])?;
    let points: Vec<ResidualPoint> = residuals
        .iter()
        .map(|&(sigma, sigma_f)| ResidualPoint {
            sigma,
            sigma_f,
            residual: sigma_f - sigma,
            lorentzian: correction.term(sigma),
        })
        .collect();
    let mean = points.iter().map(|p| p.residual).sum::<f64>() / points.len() as f64;
    let ss_tot: f64 = points.iter().map(|p| (p.residual - mean).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|p| (p.residual - p.lorentzian).powi(2)).sum();
    Ok(Calibration {
        correction,
        points,
        r_squared: 1.0 - ss_res / ss_tot,
    })
}

/// Default calibration grid: 0.1 to 2.0 pixels in steps of 0.05.
pub fn default_calibration_grid() -> Vec<f64> {
    sigma_grid(0.1, 2.0, 0.05)
}
