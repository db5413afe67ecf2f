//! JSON experiment configuration.
//!
//! Every field is optional; missing ranges fall back to the published
//! parameter grids for the selected sweep kind. In `reproduce` mode the
//! ranges must stay inside the published tables.

use std::fs;
use std::path::{Path, PathBuf};

use rer_core::optics::PsfOptions;
use rer_core::transfer::{default_calibration_grid, sigma_grid};
use rer_core::{BlurPipeline, EdgeChipSpec, LorentzianCorrection, MeasureConfig, OpticalSystemSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Reproduce,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    SingleBlur,
    TwoStage,
    #[default]
    TwoStageBinned,
    OpticalCompare,
    Calibrate,
}

/// A list of values, `count` evenly spaced values, or a fixed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Range {
    List(Vec<f64>),
    Linspace(Linspace),
    Step(Step),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    pub fn linspace(start: f64, stop: f64, count: usize) -> Self {
        Range::Linspace(Linspace { start, stop, count })
    }

    pub fn values(&self) -> CliResult<Vec<f64>> {
        let v = match self {
            Range::List(v) => v.clone(),
            Range::Linspace(Linspace { start, stop, count }) => match count {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n)
                    .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
            Range::Step(Step { start, stop, step }) => {
                if step.is_nan() || *step <= 0.0 {
                    return Err(CliError::Config(format!("range step must be positive, got {step}")));
                }
                sigma_grid(*start, *stop, *step)
            }
        };
        if v.is_empty() {
            return Err(CliError::Config("range is empty".into()));
        }
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            return Err(CliError::Config(format!("range holds non-finite value {bad}")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalConfig {
    /// Fixed system parameters; the swept fields below override it.
    pub base: OpticalSystemSpec,
    pub wfe: Option<Range>,
    pub smear: Option<Range>,
    pub jitter: Option<Range>,
    pub downsample: Option<Vec<usize>>,
    pub psf: PsfOptions,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub mode: Mode,
    pub sweep_kind: SweepKind,
    pub chip: EdgeChipSpec,
    pub sigma0: Option<Range>,
    pub sigma1: Option<Range>,
    pub downsample: Option<Vec<usize>>,
    /// Blur for the single-chip commands.
    pub pipeline: BlurPipeline,
    pub measurement: MeasureConfig,
    pub correction: Option<LorentzianCorrection>,
    /// A `{b, m}` record written by `calibrate`; used when `correction` is
    /// absent.
    pub correction_path: Option<PathBuf>,
    pub calibration_grid: Option<Range>,
    pub optical: OpticalConfig,
    pub output_path: Option<PathBuf>,
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Published ranges.
pub mod table {
    pub const T1_SIGMA0: (f64, f64) = (0.1, 3.0);
    pub const T1_SIGMA1: (f64, f64) = (0.0, 3.0);
    pub const T2_SIGMA0: (f64, f64) = (0.75, 6.0);
    pub const T2_SIGMA1: (f64, f64) = (0.0, 6.0);
    pub const T2_DOWNSAMPLE: [usize; 4] = [2, 3, 4, 5];
    pub const T3_WFE: (f64, f64) = (0.025, 0.135);
    pub const T3_SMEAR: (f64, f64) = (0.05, 0.15);
    pub const T3_JITTER: (f64, f64) = (2.6e-5, 5e-4);
    pub const T3_DOWNSAMPLE: [usize; 2] = [1, 2];
}

/// Grid of a blur sweep, resolved against the defaults for its kind.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurGrid {
    pub sigma0: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub downsample: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalGrid {
    pub wfe: Vec<f64>,
    pub smear: Vec<f64>,
    pub jitter: Vec<f64>,
    pub downsample: Vec<usize>,
}

fn values_or(range: &Option<Range>, default: Range) -> CliResult<Vec<f64>> {
    range.as_ref().unwrap_or(&default).values()
}

fn check_within(name: &str, values: &[f64], (lo, hi): (f64, f64)) -> CliResult<()> {
    // published bounds are decimal; allow representation slack
    let slack = 1e-9 * hi.abs().max(1.0);
    match values.iter().find(|&&v| v < lo - slack || v > hi + slack) {
        Some(v) => Err(CliError::Config(format!(
            "reproduce mode: {name} value {v} outside the published range [{lo}, {hi}]"
        ))),
        None => Ok(()),
    }
}

fn check_members(name: &str, values: &[usize], allowed: &[usize]) -> CliResult<()> {
    match values.iter().find(|v| !allowed.contains(v)) {
        Some(v) => Err(CliError::Config(format!(
            "reproduce mode: {name} {v} not among the published values {allowed:?}"
        ))),
        None => Ok(()),
    }
}

impl Config {
    pub fn blur_grid(&self) -> CliResult<BlurGrid> {
        use table::*;
        let grid = match self.sweep_kind {
            SweepKind::SingleBlur => BlurGrid {
                sigma0: values_or(&self.sigma0, Range::linspace(0.1, 3.0, 30))?,
                sigma1: values_or(&self.sigma1, Range::List(vec![0.0]))?,
                downsample: self.downsample.clone().unwrap_or(vec![1]),
            },
            SweepKind::TwoStage => BlurGrid {
                sigma0: values_or(&self.sigma0, Range::linspace(0.1, 3.0, 8))?,
                sigma1: values_or(&self.sigma1, Range::linspace(0.0, 3.0, 7))?,
                downsample: self.downsample.clone().unwrap_or(vec![1]),
            },
            SweepKind::TwoStageBinned => BlurGrid {
                sigma0: values_or(&self.sigma0, Range::linspace(0.75, 6.0, 8))?,
                sigma1: values_or(&self.sigma1, Range::linspace(0.0, 6.0, 5))?,
                downsample: self.downsample.clone().unwrap_or(T2_DOWNSAMPLE.to_vec()),
            },
            other => {
                return Err(CliError::Config(format!("sweep kind {other:?} has no blur grid")));
            }
        };
        if grid.downsample.is_empty() || grid.downsample.contains(&0) {
            return Err(CliError::Config("downsample ratios must be a non-empty list of integers >= 1".into()));
        }
        if let Some(v) = grid.sigma0.iter().chain(&grid.sigma1).find(|&&v| v < 0.0) {
            return Err(CliError::Config(format!("blur sigma must be non-negative, got {v}")));
        }
        if self.mode == Mode::Reproduce {
            match self.sweep_kind {
                SweepKind::SingleBlur | SweepKind::TwoStage => {
                    check_within("sigma0", &grid.sigma0, T1_SIGMA0)?;
                    check_within("sigma1", &grid.sigma1, T1_SIGMA1)?;
                    check_members("downsample", &grid.downsample, &[1])?;
                }
                _ => {
                    check_within("sigma0", &grid.sigma0, T2_SIGMA0)?;
                    check_within("sigma1", &grid.sigma1, T2_SIGMA1)?;
                    check_members("downsample", &grid.downsample, &T2_DOWNSAMPLE)?;
                }
            }
        }
        Ok(grid)
    }

    pub fn optical_grid(&self) -> CliResult<OpticalGrid> {
        use table::*;
        let o = &self.optical;
        let grid = OpticalGrid {
            wfe: values_or(&o.wfe, Range::linspace(T3_WFE.0, T3_WFE.1, 4))?,
            smear: values_or(&o.smear, Range::List(vec![T3_SMEAR.0, T3_SMEAR.1]))?,
            jitter: values_or(&o.jitter, Range::List(vec![T3_JITTER.0, T3_JITTER.1]))?,
            downsample: o.downsample.clone().unwrap_or(T3_DOWNSAMPLE.to_vec()),
        };
        if self.mode == Mode::Reproduce {
            check_within("wfe", &grid.wfe, T3_WFE)?;
            check_within("smear", &grid.smear, T3_SMEAR)?;
            check_within("jitter", &grid.jitter, T3_JITTER)?;
            check_members("downsample", &grid.downsample, &T3_DOWNSAMPLE)?;
            let published = OpticalSystemSpec::default();
            let b = &o.base;
            if (b.f_number, b.fill_factor, b.pixel_pitch, b.wavelength)
                != (published.f_number, published.fill_factor, published.pixel_pitch, published.wavelength)
            {
                return Err(CliError::Config(
                    "reproduce mode: f-number, fill factor, pitch and wavelength are fixed at 20, 0.8, 8 µm, 0.8 µm".into(),
                ));
            }
        }
        Ok(grid)
    }

    pub fn calibration_sigmas(&self) -> CliResult<Vec<f64>> {
        match &self.calibration_grid {
            Some(r) => r.values(),
            None => Ok(default_calibration_grid()),
        }
    }
}
