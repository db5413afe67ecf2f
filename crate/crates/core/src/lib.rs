//! Relative edge response (RER) toolkit.
//!
//! Synthesizes slanted-edge chips under Gaussian and simulated optical blur,
//! measures RER by the slanted-edge method, and evaluates closed-form RER
//! predictions for Gaussian point spread functions, including a correction
//! for the transfer function of the detector pixels.
//!
//! Modules, bottom-up:
//!
//! - [`image`]: grids, sampled Gaussian kernels, separable convolution, binning
//! - [`edge`]: ideal slanted-edge chips with area-weighted border pixels
//! - [`slant`]: edge location, oversampled ESF and RER measurement
//! - [`lsq`]: damped Gauss-Newton least squares for small problems
//! - [`models`]: slope, erf and pixel-corrected RER predictors
//! - [`transfer`]: Gaussian, pixel and combined transfer functions and the
//!   Lorentzian calibration of the pixel correction
//! - [`optics`]: system PSF simulation from optical parameters, 2-D Gaussian
//!   fits and optical-versus-Gaussian RER comparison

pub mod edge;
pub mod error;
pub mod image;
pub mod lsq;
pub mod models;
pub mod optics;
pub mod slant;
pub mod transfer;

pub use edge::{render_blurred_chip, render_edge_chip, EdgeChipSpec};
pub use error::{Error, Result};
pub use image::{
    bin_integer, convolve_separable, effective_sigma, make_gaussian_kernel, BlurPipeline,
    GaussianKernel1D, ImageGrid, RadiusRule,
};
pub use lsq::{FitProblem, FitResult};
pub use models::{
    predict_pipeline_rer, rer_corrected_model, rer_erf_model, rer_slope_model,
    LorentzianCorrection, RerModel,
};
pub use optics::{OpticalSystemSpec, PsfGrid};
pub use slant::{locate_edge, measure_esf, measure_rer, EsfMeasurement, MeasureConfig};
pub use transfer::{calibrate_correction, fit_gaussian_sigma, TransferSamples};
