//! Subcommand implementations. Each returns the bytes it wrote so tests
//! can inspect them without touching the filesystem.

use std::fs;

use rayon::prelude::*;
use rer_core::optics::{compare_rer, fit_gaussian_2d, simulate_psf, Gaussian2DFit};
use rer_core::transfer::{calibrate_correction, default_calibration_grid, Calibration};
use rer_core::{
    measure_esf, predict_pipeline_rer, render_blurred_chip, render_edge_chip, BlurPipeline,
    EdgeChipSpec, LorentzianCorrection, OpticalSystemSpec, RadiusRule, RerModel,
};
use serde::Serialize;

use crate::config::{Config, SweepKind};
use crate::error::{CliError, CliResult};
use crate::output::{csv_table, fmt_g9, fmt_opt, json_bytes, matrix_csv, parse_matrix_csv, Sink};

pub const SWEEP_HEADER: [&str; 9] = [
    "sigma0",
    "sigma1",
    "downsample",
    "sigma_effective",
    "rer_measured",
    "rer_slope_model",
    "rer_erf_model",
    "rer_corrected_model",
    "error",
];

pub const OPTICAL_HEADER: [&str; 9] = [
    "wfe",
    "smear",
    "jitter",
    "downsample",
    "q_effective",
    "rer_optical",
    "rer_gaussian_fit",
    "delta",
    "error",
];

pub const RESIDUAL_HEADER: [&str; 4] = ["sigma", "sigma_f", "residual", "lorentzian"];

pub const ABERRATION_NOTE: &str =
    "wavefront error modeled by the empirical aberration transfer factor 1 - (W/0.18)^2 (1 - 4(nu - 0.5)^2), a stand-in for a pupil-phase model";

/// Renders `pipeline` over `spec` the literal way: draw the ideal edge at
/// the pre-binning resolution, then blur and bin it.
pub fn gen_then_blur(spec: &EdgeChipSpec, pipeline: &BlurPipeline) -> CliResult<rer_core::ImageGrid> {
    let fine = spec.upscaled(pipeline.downsample, 0);
    let ideal = render_edge_chip(&fine)?;
    Ok(pipeline.apply(&ideal, RadiusRule::Auto)?)
}

#[derive(Serialize)]
struct ChipMeta<'a> {
    chip: &'a EdgeChipSpec,
    pipeline: &'a BlurPipeline,
    width: usize,
    height: usize,
}

pub fn gen_edge(config: &Config, sink: &Sink) -> CliResult<Vec<u8>> {
    config.chip.validate()?;
    config.pipeline.validate()?;
    let chip = gen_then_blur(&config.chip, &config.pipeline)?;
    let bytes = matrix_csv(&chip);
    sink.write(&bytes)?;
    if let Some(side) = sink.sidecar() {
        side.write(&json_bytes(&ChipMeta {
            chip: &config.chip,
            pipeline: &config.pipeline,
            width: chip.width(),
            height: chip.height(),
        })?)?;
    }
    Ok(bytes)
}

pub fn blur(config: &Config, input: &std::path::Path, sink: &Sink) -> CliResult<Vec<u8>> {
    config.pipeline.validate()?;
    let chip = parse_matrix_csv(input)?;
    let out = config.pipeline.apply(&chip, RadiusRule::Auto)?;
    let bytes = matrix_csv(&out);
    sink.write(&bytes)?;
    Ok(bytes)
}

#[derive(Serialize)]
struct Measurement {
    rer: f64,
    edge_angle: f64,
    dark_plateau: f64,
    light_plateau: f64,
}

pub fn measure_rer(config: &Config, input: &std::path::Path, sink: &Sink) -> CliResult<Vec<u8>> {
    let chip = parse_matrix_csv(input)?;
    let m = measure_esf(&chip, &config.measurement)?;
    let bytes = json_bytes(&Measurement {
        rer: m.rer,
        edge_angle: m.edge_angle,
        dark_plateau: m.dark_plateau,
        light_plateau: m.light_plateau,
    })?;
    sink.write(&bytes)?;
    Ok(bytes)
}

#[derive(Serialize)]
struct Prediction {
    sigma_effective: f64,
    rer_slope_model: Option<f64>,
    rer_erf_model: f64,
    rer_corrected_model: f64,
    correction: LorentzianCorrection,
}

/// The configured correction, the one stored at `correction_path`, or a
/// fresh calibration on the default grid.
pub fn resolve_correction(config: &Config) -> CliResult<LorentzianCorrection> {
    if let Some(c) = config.correction {
        c.validate()?;
        return Ok(c);
    }
    if let Some(path) = &config.correction_path {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let c: LorentzianCorrection =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        c.validate()?;
        return Ok(c);
    }
    Ok(calibrate_correction(&default_calibration_grid())?.correction)
}

pub fn predict_rer(config: &Config, sink: &Sink) -> CliResult<Vec<u8>> {
    let p = &config.pipeline;
    p.validate()?;
    let corr = resolve_correction(config)?;
    let bytes = json_bytes(&Prediction {
        sigma_effective: p.effective_sigma(),
        rer_slope_model: predict_pipeline_rer(p, RerModel::Slope, None).ok(),
        rer_erf_model: predict_pipeline_rer(p, RerModel::Erf, None)?,
        rer_corrected_model: predict_pipeline_rer(p, RerModel::Corrected, Some(&corr))?,
        correction: corr,
    })?;
    sink.write(&bytes)?;
    Ok(bytes)
}

/// One evaluated point of a blur sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sigma0: f64,
    pub sigma1: f64,
    pub downsample: usize,
    pub sigma_effective: f64,
    pub rer_measured: Option<f64>,
    pub rer_slope_model: Option<f64>,
    pub rer_erf_model: Option<f64>,
    pub rer_corrected_model: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn cells(&self) -> Vec<String> {
        vec![
            fmt_g9(self.sigma0),
            fmt_g9(self.sigma1),
            self.downsample.to_string(),
            fmt_g9(self.sigma_effective),
            fmt_opt(self.rer_measured),
            fmt_opt(self.rer_slope_model),
            fmt_opt(self.rer_erf_model),
            fmt_opt(self.rer_corrected_model),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

fn sweep_point(config: &Config, corr: &LorentzianCorrection, s0: f64, s1: f64, k: usize) -> SweepRow {
    let mut errors = Vec::new();
    let pipeline = BlurPipeline {
        sigma0: s0,
        sigma1: s1,
        downsample: k,
    };
    let mut keep = |r: rer_core::Result<f64>| r.map_err(|e| errors.push(e.to_string())).ok();
    let rer_measured = keep(
        render_blurred_chip(&config.chip, &pipeline, RadiusRule::Auto)
            .and_then(|chip| measure_esf(&chip, &config.measurement).map(|m| m.rer)),
    );
    let rer_slope_model = keep(predict_pipeline_rer(&pipeline, RerModel::Slope, None));
    let rer_erf_model = keep(predict_pipeline_rer(&pipeline, RerModel::Erf, None));
    let rer_corrected_model = keep(predict_pipeline_rer(&pipeline, RerModel::Corrected, Some(corr)));
    SweepRow {
        sigma0: s0,
        sigma1: s1,
        downsample: k,
        sigma_effective: pipeline.effective_sigma(),
        rer_measured,
        rer_slope_model,
        rer_erf_model,
        rer_corrected_model,
        error: (!errors.is_empty()).then(|| errors.join("; ")),
    }
}

/// Evaluates the blur grid in lexicographic `(sigma0, sigma1, downsample)`
/// order. Points run in parallel; the order of the result does not depend
/// on completion order.
pub fn blur_sweep_rows(config: &Config) -> CliResult<Vec<SweepRow>> {
    let grid = config.blur_grid()?;
    config.chip.validate()?;
    let corr = resolve_correction(config)?;
    let mut points = Vec::new();
    for &s0 in &grid.sigma0 {
        for &s1 in &grid.sigma1 {
            for &k in &grid.downsample {
                points.push((s0, s1, k));
            }
        }
    }
    Ok(points
        .par_iter()
        .map(|&(s0, s1, k)| sweep_point(config, &corr, s0, s1, k))
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> CliResult<Vec<u8>> {
    csv_table(&SWEEP_HEADER, &rows.iter().map(SweepRow::cells).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalRow {
    pub spec: OpticalSystemSpec,
    pub rer_optical: Option<f64>,
    pub rer_gaussian_fit: Option<f64>,
    pub error: Option<String>,
}

impl OpticalRow {
    pub fn delta(&self) -> Option<f64> {
        Some(self.rer_optical? - self.rer_gaussian_fit?)
    }

    fn cells(&self) -> Vec<String> {
        vec![
            fmt_g9(self.spec.wfe_rms),
            fmt_g9(self.spec.smear),
            fmt_g9(self.spec.jitter_rms),
            self.spec.downsample.to_string(),
            fmt_g9(self.spec.q_effective()),
            fmt_opt(self.rer_optical),
            fmt_opt(self.rer_gaussian_fit),
            fmt_opt(self.delta()),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

/// Evaluates the optical grid in lexicographic `(wfe, smear, jitter,
/// downsample)` order.
pub fn optical_rows(config: &Config) -> CliResult<Vec<OpticalRow>> {
    let grid = config.optical_grid()?;
    config.chip.validate()?;
    config.optical.base.validate()?;
    let mut specs = Vec::new();
    for &wfe_rms in &grid.wfe {
        for &smear in &grid.smear {
            for &jitter_rms in &grid.jitter {
                for &downsample in &grid.downsample {
                    specs.push(OpticalSystemSpec {
                        wfe_rms,
                        smear,
                        jitter_rms,
                        downsample,
                        ..config.optical.base
                    });
                }
            }
        }
    }
    Ok(specs
        .par_iter()
        .map(|spec| match compare_rer(spec, &config.chip, &config.optical.psf, &config.measurement) {
            Ok(c) => OpticalRow {
                spec: *spec,
                rer_optical: Some(c.rer_optical),
                rer_gaussian_fit: Some(c.rer_gaussian_fit),
                error: None,
            },
            Err(e) => OpticalRow {
                spec: *spec,
                rer_optical: None,
                rer_gaussian_fit: None,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

#[derive(Serialize)]
struct OpticalMeta<'a> {
    aberration_model: &'a str,
    base: &'a OpticalSystemSpec,
    chip: &'a EdgeChipSpec,
}

pub fn optical_compare(config: &Config, sink: &Sink) -> CliResult<Vec<u8>> {
    let rows = optical_rows(config)?;
    let bytes = csv_table(&OPTICAL_HEADER, &rows.iter().map(OpticalRow::cells).collect::<Vec<_>>())?;
    sink.write(&bytes)?;
    if let Some(side) = sink.sidecar() {
        side.write(&json_bytes(&OpticalMeta {
            aberration_model: ABERRATION_NOTE,
            base: &config.optical.base,
            chip: &config.chip,
        })?)?;
    }
    Ok(bytes)
}

#[derive(Serialize)]
struct CorrectionRecord {
    b: f64,
    m: f64,
    r_squared: f64,
}

pub fn residual_csv(cal: &Calibration) -> CliResult<Vec<u8>> {
    let rows: Vec<Vec<String>> = cal
        .points
        .iter()
        .map(|p| vec![fmt_g9(p.sigma), fmt_g9(p.sigma_f), fmt_g9(p.residual), fmt_g9(p.lorentzian)])
        .collect();
    csv_table(&RESIDUAL_HEADER, &rows)
}

/// Writes the `{b, m}` record to `sink` and the residual table next to it
/// as `<name>.residuals.csv`.
pub fn calibrate(config: &Config, sink: &Sink) -> CliResult<Vec<u8>> {
    let Some(path) = sink.path() else {
        return Err(CliError::Config("calibrate needs an output path for its two files".into()));
    };
    let cal = calibrate_correction(&config.calibration_sigmas()?).map_err(|e| match e {
        rer_core::Error::Domain(msg) => CliError::Config(msg),
        other => CliError::Compute(format!("calibration failed: {other}")),
    })?;
    let record = json_bytes(&CorrectionRecord {
        b: cal.correction.b,
        m: cal.correction.m,
        r_squared: cal.r_squared,
    })?;
    sink.write(&record)?;
    Sink::File(path.with_extension("residuals.csv")).write(&residual_csv(&cal)?)?;
    Ok(record)
}

#[derive(Serialize)]
struct PsfMeta<'a> {
    aberration_model: &'a str,
    spec: &'a OpticalSystemSpec,
    q_effective: f64,
    oversample: usize,
    size: usize,
    captured_energy: f64,
    gaussian_fit: Gaussian2DFit,
}

pub fn simulate_psf_cmd(config: &Config, sink: &Sink) -> CliResult<Vec<u8>> {
    let spec = &config.optical.base;
    let psf = simulate_psf(spec, &config.optical.psf)?;
    let fit = fit_gaussian_2d(&psf)?;
    let bytes = matrix_csv(&psf.grid);
    sink.write(&bytes)?;
    if let Some(side) = sink.sidecar() {
        side.write(&json_bytes(&PsfMeta {
            aberration_model: ABERRATION_NOTE,
            spec,
            q_effective: spec.q_effective(),
            oversample: psf.oversample,
            size: psf.size(),
            captured_energy: psf.captured_energy,
            gaussian_fit: fit,
        })?)?;
    }
    Ok(bytes)
}

/// Runs whatever the config's `sweep_kind` names.
pub fn sweep(config: &Config, sink: &Sink) -> CliResult<Vec<u8>> {
    match config.sweep_kind {
        SweepKind::OpticalCompare => optical_compare(config, sink),
        SweepKind::Calibrate => calibrate(config, sink),
        _ => {
            let bytes = sweep_csv(&blur_sweep_rows(config)?)?;
            sink.write(&bytes)?;
            Ok(bytes)
        }
    }
}
