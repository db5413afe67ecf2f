//! Closed-form RER predictors for Gaussian blur.
//!
//! For an ideal step blurred by a Gaussian of width σ (pixels):
//!
//! ```text
//! slope model:      RER ≈ 1 / (σ √(2π))
//! erf model:        RER = erf(1 / (2 √2 σ))
//! corrected model:  erf model at σ + b / (π ((σ − m)² + b²))
//! ```
//!
//! The slope model is the edge derivative at the origin and diverges as
//! σ → 0. The erf model differences the edge response at ±½ pixel. The
//! corrected model widens σ by a Lorentzian term that absorbs the pixel
//! transfer function; `(b, m)` come from [`crate::transfer::calibrate_correction`].

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::image::BlurPipeline;

/// Lorentzian blur correction `(1/π) · b / ((σ − m)² + b²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianCorrection {
    /// Half width, pixels.
    pub b: f64,
    /// Location, pixels.
    pub m: f64,
}

impl LorentzianCorrection {
    pub fn new(b: f64, m: f64) -> Result<Self> {
        let c = Self { b, m };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b.is_finite() && self.b > 0.0) {
            return domain(format!("Lorentzian half width must be positive, got {}", self.b));
        }
        if !self.m.is_finite() {
            return domain("Lorentzian location must be finite");
        }
        Ok(())
    }

    /// Additive widening at blur `sigma`.
    pub fn term(&self, sigma: f64) -> f64 {
        let d = sigma - self.m;
        self.b / (PI * (d * d + self.b * self.b))
    }

    pub fn corrected_sigma(&self, sigma: f64) -> f64 {
        sigma + self.term(sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerModel {
    Slope,
    Erf,
    Corrected,
}

pub fn rer_slope_model(sigma: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return domain(format!("slope model needs sigma > 0, got {sigma}"));
    }
    Ok(1.0 / (sigma * (2.0 * PI).sqrt()))
}

/// `erf(1 / (2√2 σ))`, with the limit value 1 at σ = 0.
pub fn rer_erf_model(sigma: f64) -> Result<f64> {
    if sigma.is_nan() || sigma < 0.0 {
        return domain(format!("erf model needs sigma >= 0, got {sigma}"));
    }
    if sigma == 0.0 {
        return Ok(1.0);
    }
    Ok(libm::erf(1.0 / (2.0 * SQRT_2 * sigma)))
}

pub fn rer_corrected_model(sigma: f64, corr: &LorentzianCorrection) -> Result<f64> {
    if sigma.is_nan() || sigma < 0.0 {
        return domain(format!("corrected model needs sigma >= 0, got {sigma}"));
    }
    corr.validate()?;
    rer_erf_model(corr.corrected_sigma(sigma))
}

/// Applies `model` at the pipeline's effective sigma. The corrected model
/// needs `corr`.
pub fn predict_pipeline_rer(
    pipeline: &BlurPipeline,
    model: RerModel,
    corr: Option<&LorentzianCorrection>,
) -> Result<f64> {
    pipeline.validate()?;
    let sigma = pipeline.effective_sigma();
    match model {
        RerModel::Slope => rer_slope_model(sigma),
        RerModel::Erf => rer_erf_model(sigma),
        RerModel::Corrected => match corr {
            Some(c) => rer_corrected_model(sigma, c),
            None => domain("corrected model requires Lorentzian parameters"),
        },
    }
}
