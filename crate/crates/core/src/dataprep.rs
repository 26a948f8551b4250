//! Series loading, log/min-max transforms, lag embedding and the
//! chronological train/validation/test split.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TEST_LEN: usize = 12;
pub const DEFAULT_VAL_FRACTION: f64 = 0.2;
pub const DEFAULT_TARGET_LO: f64 = 0.1;
pub const DEFAULT_TARGET_HI: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
    /// Set once `values` hold natural logs of the raw observations.
    pub transform_log: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
            transform_log: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Replace every value by its natural log. Fails on non-positive values
    /// or if the series is already logged.
    pub fn log_transform(mut self) -> Result<Self> {
        if self.transform_log {
            return Err(Error::Data(format!("series '{}' is already log-transformed", self.name)));
        }
        if let Some((i, v)) = self.values.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(Error::Data(format!(
                "log transform needs positive values; value {v} at index {i}"
            )));
        }
        self.values.iter_mut().for_each(|v| *v = v.ln());
        self.transform_log = true;
        Ok(self)
    }
}

/// Read a one-value-per-row CSV. An optional first-line header is skipped;
/// with two or more columns the last one is taken (a leading timestamp
/// column is ignored).
pub fn load_csv(path: impl AsRef<Path>) -> Result<Series> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".to_string());
    parse_csv(&name, &text)
}

pub fn parse_csv(name: &str, text: &str) -> Result<Series> {
    let mut values = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let cell = line.rsplit(',').next().unwrap_or(line).trim().trim_matches('"');
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(v) => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("non-finite value {v}"),
                })
            }
            Err(_) if idx == 0 => {} // header
            Err(_) => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("'{cell}' is not a number"),
                })
            }
        }
    }
    if values.len() < 2 {
        return Err(Error::Data(format!(
            "series '{name}' needs at least 2 rows, found {}",
            values.len()
        )));
    }
    Ok(Series::new(name, values))
}

/// Supervised patterns: each row of `inputs` holds the `lags` values
/// immediately preceding the matching `targets` entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Patterns {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Patterns {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn slice(&self, range: std::ops::Range<usize>) -> Patterns {
        Patterns {
            inputs: self.inputs[range.clone()].to_vec(),
            targets: self.targets[range].to_vec(),
        }
    }

    pub fn concat(&self, other: &Patterns) -> Patterns {
        let mut out = self.clone();
        out.inputs.extend(other.inputs.iter().cloned());
        out.targets.extend_from_slice(&other.targets);
        out
    }
}

pub fn make_lagged(values: &[f64], lags: usize) -> Result<Patterns> {
    if lags == 0 {
        return Err(Error::Config("lags must be at least 1".into()));
    }
    if values.len() <= lags {
        return Err(Error::Data(format!(
            "{} values cannot form a {lags}-lag pattern",
            values.len()
        )));
    }
    let inputs = values.windows(lags + 1).map(|w| w[..lags].to_vec()).collect();
    let targets = values[lags..].to_vec();
    Ok(Patterns { inputs, targets })
}

/// Affine map of the window `[lo, hi]` onto `[target_lo, target_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleInfo {
    pub lo: f64,
    pub hi: f64,
    pub target_lo: f64,
    pub target_hi: f64,
}

impl ScaleInfo {
    pub fn fit(train_values: &[f64]) -> Result<Self> {
        Self::fit_to(train_values, DEFAULT_TARGET_LO, DEFAULT_TARGET_HI)
    }

    pub fn fit_to(train_values: &[f64], target_lo: f64, target_hi: f64) -> Result<Self> {
        if train_values.is_empty() {
            return Err(Error::Data("cannot fit scaling on an empty window".into()));
        }
        let lo = train_values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = train_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::Data(format!(
                "degenerate scaling window: all training values equal {lo}"
            )));
        }
        if !(target_hi > target_lo) {
            return Err(Error::Config("scaling target band must be increasing".into()));
        }
        Ok(Self {
            lo,
            hi,
            target_lo,
            target_hi,
        })
    }

    fn slope(&self) -> f64 {
        (self.target_hi - self.target_lo) / (self.hi - self.lo)
    }

    /// No clamping: values outside `[lo, hi]` land outside the target band.
    pub fn apply(&self, v: f64) -> f64 {
        self.target_lo + (v - self.lo) * self.slope()
    }

    pub fn invert(&self, s: f64) -> f64 {
        self.lo + (s - self.target_lo) / self.slope()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub lags: usize,
    pub test_len: usize,
    pub val_fraction: f64,
    pub log_transform: bool,
}

impl PrepConfig {
    pub fn new(lags: usize) -> Self {
        Self {
            lags,
            test_len: DEFAULT_TEST_LEN,
            val_fraction: DEFAULT_VAL_FRACTION,
            log_transform: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedData {
    pub train: Patterns,
    pub val: Patterns,
    pub test: Patterns,
    pub scale: ScaleInfo,
    pub lags: usize,
    pub test_len: usize,
    pub transform_log: bool,
    /// Series after the optional log step, before scaling. Metrics are
    /// reported in this space.
    pub values: Vec<f64>,
}

impl PreparedData {
    /// Index into `values` of the first training target.
    pub fn first_target(&self) -> usize {
        self.lags
    }

    /// Index into `values` of the first test target.
    pub fn test_start(&self) -> usize {
        self.values.len() - self.test_len
    }

    /// Train and validation patterns together (the whole fitting window).
    pub fn fit_window(&self) -> Patterns {
        self.train.concat(&self.val)
    }

    pub fn unscale(&self, scaled: &[f64]) -> Vec<f64> {
        scaled.iter().map(|&s| self.scale.invert(s)).collect()
    }
}

pub fn prepare(series: &Series, config: &PrepConfig) -> Result<PreparedData> {
    if !(0.0..1.0).contains(&config.val_fraction) {
        return Err(Error::Config(format!(
            "val_fraction must be in [0, 1), got {}",
            config.val_fraction
        )));
    }
    if config.lags == 0 {
        return Err(Error::Config("lags must be at least 1".into()));
    }
    let n = series.len();
    if n < config.lags + config.test_len + 1 {
        return Err(Error::Data(format!(
            "series '{}' has {n} values; need at least lags + test_len + 1 = {}",
            series.name,
            config.lags + config.test_len + 1
        )));
    }
    let series = if config.log_transform && !series.transform_log {
        series.clone().log_transform()?
    } else {
        series.clone()
    };
    let values = series.values;
    let fit_end = n - config.test_len;
    let scale = ScaleInfo::fit(&values[..fit_end])?;
    let scaled: Vec<f64> = values.iter().map(|&v| scale.apply(v)).collect();

    let all = make_lagged(&scaled, config.lags)?;
    let n_fit = fit_end - config.lags;
    let n_val = (config.val_fraction * n_fit as f64).ceil() as usize;
    if n_fit <= n_val {
        return Err(Error::Data(format!(
            "no training patterns left after reserving {n_val} for validation"
        )));
    }
    let n_train = n_fit - n_val;
    Ok(PreparedData {
        train: all.slice(0..n_train),
        val: all.slice(n_train..n_fit),
        test: all.slice(n_fit..all.len()),
        scale,
        lags: config.lags,
        test_len: config.test_len,
        transform_log: series.transform_log,
        values,
    })
}
