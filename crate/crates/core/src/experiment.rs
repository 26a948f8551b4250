//! Multi-restart pipeline runs, benchmark suites, model files and reports.
//!
//! Every restart derives its own seed from the master seed and the restart
//! index, so restarts run in parallel and the report bytes do not depend on
//! scheduling.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationKind, ActivationSpec, DEFAULT_LAMBDA_MAX, DEFAULT_LAMBDA_MIN};
use crate::ar::{self, LagSelection, DEFAULT_MAX_ORDER};
use crate::dataprep::{self, PrepConfig, PreparedData, ScaleInfo, Series, DEFAULT_TEST_LEN, DEFAULT_VAL_FRACTION};
use crate::error::{Error, Result};
use crate::global_opt::{IterationRecord, LambdaSlot, SaTs, SaTsConfig, SearchOutcome};
use crate::local_opt::{self, BpmConfig, LmConfig, StopReason};
use crate::metrics::{self, Aggregate, MetricKind, Metrics, TTestKind, TTestResult};
use crate::network::{self, param_count, MlpParams, ParamsDocument, Topology, DEFAULT_MAX_HIDDEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Sats,
    SatsBpm,
    SatsLm,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Pipeline::Sats, Pipeline::SatsBpm, Pipeline::SatsLm];

    pub fn label(self) -> &'static str {
        match self {
            Pipeline::Sats => "SATS",
            Pipeline::SatsBpm => "SATS_BPM",
            Pipeline::SatsLm => "SATS_LM",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    /// Defaults to the file stem of `data`.
    pub name: Option<String>,
    pub transform_log: bool,
    /// `None` selects the order by AIC over `1..=max_lags`.
    pub lags: Option<usize>,
    pub max_lags: usize,
    pub hidden: usize,
    pub max_hidden: usize,
    pub activation: ActivationKind,
    /// Held value for `aranda_fixed`. A free λ always starts at 1.
    pub lambda: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub pipeline: Pipeline,
    pub restarts: usize,
    /// SA+TS chains per restart; the best one is refined.
    pub inner_runs: usize,
    pub sa: SaTsConfig,
    /// GL threshold for the stop hook of the global search; `None` runs the
    /// full iteration budget.
    pub sa_gl_threshold: Option<f64>,
    pub bpm: BpmConfig,
    pub lm: LmConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub val_fraction: f64,
    pub test_len: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            name: None,
            transform_log: false,
            lags: None,
            max_lags: DEFAULT_MAX_ORDER,
            hidden: 2,
            max_hidden: DEFAULT_MAX_HIDDEN,
            activation: ActivationKind::ArandaFree,
            lambda: 1.0,
            lambda_min: DEFAULT_LAMBDA_MIN,
            lambda_max: DEFAULT_LAMBDA_MAX,
            pipeline: Pipeline::SatsLm,
            restarts: 10,
            inner_runs: 3,
            sa: SaTsConfig::desk(),
            sa_gl_threshold: Some(5.0),
            bpm: BpmConfig::default(),
            lm: LmConfig::default(),
            seed: 0,
            out: PathBuf::from("out"),
            val_fraction: DEFAULT_VAL_FRACTION,
            test_len: DEFAULT_TEST_LEN,
        }
    }
}

impl ExperimentConfig {
    pub const FULL_RESTARTS: usize = 100;
    pub const FULL_INNER_RUNS: usize = 10;

    pub fn new(data: impl Into<PathBuf>) -> Self {
        Self {
            data: data.into(),
            ..Self::default()
        }
    }

    /// 100 restarts, 10 chains each, 10,000 iterations per chain.
    pub fn full_scale(mut self) -> Self {
        self.restarts = Self::FULL_RESTARTS;
        self.inner_runs = Self::FULL_INNER_RUNS;
        self.sa.max_iter = SaTsConfig::default().max_iter;
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn dataset_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.data
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "series".into())
        })
    }

    pub fn activation_spec(&self) -> ActivationSpec {
        match self.activation {
            ActivationKind::ArandaFree => ActivationSpec::aranda_free()
                .with_lambda(self.lambda)
                .with_bounds(self.lambda_min, self.lambda_max),
            ActivationKind::ArandaFixed => ActivationSpec::aranda_fixed(self.lambda),
            ActivationKind::Logit => ActivationSpec::logit(),
            ActivationKind::Cloglog => ActivationSpec::cloglog(),
        }
    }

    pub fn variant(&self) -> Variant {
        Variant {
            pipeline: self.pipeline,
            activation: self.activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.inner_runs == 0 {
            return Err(Error::Config("restarts and inner_runs must be at least 1".into()));
        }
        if self.lags == Some(0) || (self.lags.is_none() && self.max_lags == 0) {
            return Err(Error::Config("lags must be at least 1".into()));
        }
        if self.test_len == 0 {
            return Err(Error::Config("test_len must be at least 1".into()));
        }
        if self.hidden == 0 || self.hidden > self.max_hidden {
            return Err(Error::Config(format!(
                "hidden = {} outside 1..={}",
                self.hidden, self.max_hidden
            )));
        }
        self.sa.validate()?;
        self.bpm.validate()?;
        self.lm.validate()?;
        self.activation_spec()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    fn file_stem(&self) -> String {
        format!("{}_{}_s{}", self.dataset_name(), self.variant().name(), self.seed)
    }
}

/// Pipeline and activation of one benchmark column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Variant {
    pub pipeline: Pipeline,
    pub activation: ActivationKind,
}

impl Variant {
    pub fn new(pipeline: Pipeline, activation: ActivationKind) -> Self {
        Self { pipeline, activation }
    }

    pub fn name(&self) -> String {
        format!("{}_{}", self.pipeline.label(), self.activation.label())
    }
}

/// Seed of restart `r`: the first word of the master generator's stream `r`.
pub fn restart_seed(master: u64, restart: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(restart as u64);
    rng.next_u64()
}

/// Generator for one consumer inside a restart. Stream 0 draws the initial
/// weights, stream `k + 1` drives inner chain `k`.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRow {
    pub restart: usize,
    pub seed: u64,
    /// Present only when λ is searched.
    pub lambda: Option<f64>,
    /// Best training cost reached by each inner chain.
    pub inner_costs: Vec<f64>,
    pub chosen_inner: usize,
    pub sa_iterations: usize,
    pub sa_stopped_early: bool,
    pub local_epochs: Option<usize>,
    pub local_stop: Option<StopReason>,
    /// Scaled validation MSE of the final parameters.
    pub val_mse: Option<f64>,
    pub train: Metrics,
    pub test: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartFailure {
    pub restart: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub variant: String,
    pub config: ExperimentConfig,
    pub lags: usize,
    pub lag_selection: Option<LagSelection>,
    pub topology: Topology,
    pub param_count: usize,
    pub restarts: Vec<RestartRow>,
    pub failures: Vec<RestartFailure>,
    pub train: Option<Aggregate>,
    pub test: Option<Aggregate>,
    pub lambda_mean: Option<f64>,
    /// Restart whose parameters are saved as the model (lowest `val_mse`,
    /// falling back to training SSE without a validation set).
    pub selected_restart: Option<usize>,
}

impl RunReport {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn test_sample(&self, kind: MetricKind) -> Vec<f64> {
        self.restarts.iter().filter_map(|r| r.test.get(kind)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Saved parameters plus everything needed to rebuild the input windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub dataset: String,
    pub variant: String,
    pub restart: usize,
    pub lags: usize,
    pub transform_log: bool,
    pub scale: ScaleInfo,
    pub params: ParamsDocument,
}

impl ModelFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}

/// Traces and predictions of the selected restart, for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedTraces {
    pub sa_history: Vec<IterationRecord>,
    pub train_history: Vec<f64>,
    pub val_history: Vec<f64>,
    /// `(index, actual, predicted)` over the fit window and the test window.
    pub predictions: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: RunReport,
    pub model: Option<ModelFile>,
    pub traces: Option<SelectedTraces>,
    pub elapsed: Duration,
}

struct RestartOutcome {
    row: RestartRow,
    params: MlpParams,
    traces: SelectedTraces,
}

pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineRun> {
    config.validate()?;
    let series = dataprep::load_csv(&config.data)?;
    run_pipeline_on(config, &series)
}

/// As [`run_pipeline`] with the series already loaded; `config.data` is
/// only echoed.
pub fn run_pipeline_on(config: &ExperimentConfig, series: &Series) -> Result<PipelineRun> {
    config.validate()?;
    let start = Instant::now();
    let (lags, lag_selection) = resolve_lags(config, series)?;
    let prep = dataprep::prepare(
        series,
        &PrepConfig {
            lags,
            test_len: config.test_len,
            val_fraction: config.val_fraction,
            log_transform: config.transform_log,
        },
    )?;
    let topology = Topology::new(lags, config.hidden);
    topology.validate(config.max_hidden)?;
    let spec = config.activation_spec();

    let outcomes: Vec<(usize, u64, Result<RestartOutcome>)> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = restart_seed(config.seed, r);
            (r, seed, run_restart(config, &prep, topology, spec, r, seed))
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut kept = Vec::new();
    for (restart, seed, outcome) in outcomes {
        match outcome {
            Ok(o) => {
                rows.push(o.row.clone());
                kept.push(o);
            }
            Err(e) => failures.push(RestartFailure {
                restart,
                seed,
                error: e.to_string(),
            }),
        }
    }

    let selected = kept
        .iter()
        .min_by(|a, b| selection_key(&a.row).total_cmp(&selection_key(&b.row)))
        .map(|o| o.row.restart);
    let dataset = config.dataset_name();
    let variant = config.variant().name();
    let (model, traces) = match kept.into_iter().find(|o| Some(o.row.restart) == selected) {
        Some(o) => (
            Some(ModelFile {
                dataset: dataset.clone(),
                variant: variant.clone(),
                restart: o.row.restart,
                lags,
                transform_log: prep.transform_log,
                scale: prep.scale,
                params: ParamsDocument::from_params(&o.params),
            }),
            Some(o.traces),
        ),
        None => (None, None),
    };

    let report = build_report(config, dataset, variant, lags, lag_selection, topology, spec, rows, failures, selected)?;
    Ok(PipelineRun {
        report,
        model,
        traces,
        elapsed: start.elapsed(),
    })
}

fn selection_key(row: &RestartRow) -> f64 {
    row.val_mse.unwrap_or(row.train.sse)
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    config: &ExperimentConfig,
    dataset: String,
    variant: String,
    lags: usize,
    lag_selection: Option<LagSelection>,
    topology: Topology,
    spec: ActivationSpec,
    rows: Vec<RestartRow>,
    failures: Vec<RestartFailure>,
    selected_restart: Option<usize>,
) -> Result<RunReport> {
    let (train, test) = if rows.is_empty() {
        (None, None)
    } else {
        let train: Vec<Metrics> = rows.iter().map(|r| r.train).collect();
        let test: Vec<Metrics> = rows.iter().map(|r| r.test).collect();
        (Some(metrics::aggregate(&train)?), Some(metrics::aggregate(&test)?))
    };
    let lambdas: Vec<f64> = rows.iter().filter_map(|r| r.lambda).collect();
    let lambda_mean = (spec.is_free() && !lambdas.is_empty()).then(|| metrics::mean(&lambdas));
    Ok(RunReport {
        dataset,
        variant,
        config: config.clone(),
        lags,
        lag_selection,
        topology,
        param_count: param_count(&topology, &spec),
        restarts: rows,
        failures,
        train,
        test,
        lambda_mean,
        selected_restart,
    })
}

fn resolve_lags(config: &ExperimentConfig, series: &Series) -> Result<(usize, Option<LagSelection>)> {
    if let Some(l) = config.lags {
        return Ok((l, None));
    }
    let selection = select_lags_for(series, config.transform_log, config.test_len, config.max_lags)?;
    Ok((selection.chosen, Some(selection)))
}

/// AIC order selection on the pre-test window, after the optional log step.
pub fn select_lags_for(series: &Series, transform_log: bool, test_len: usize, max_order: usize) -> Result<LagSelection> {
    let series = if transform_log && !series.transform_log {
        series.clone().log_transform()?
    } else {
        series.clone()
    };
    if series.len() <= test_len {
        return Err(Error::Data(format!(
            "series '{}' has {} values, fewer than the test window {test_len}",
            series.name,
            series.len()
        )));
    }
    ar::select_lags(&series.values[..series.len() - test_len], max_order)
}

fn run_restart(
    config: &ExperimentConfig,
    prep: &PreparedData,
    topology: Topology,
    spec: ActivationSpec,
    restart: usize,
    seed: u64,
) -> Result<RestartOutcome> {
    let init = network::init_params(topology, spec, &mut stream_rng(seed, 0))?;
    let init_vec = init.flatten();
    let slot = spec.is_free().then(|| LambdaSlot {
        index: init_vec.len() - 1,
        min: spec.lambda_min,
        max: spec.lambda_max,
    });
    let cost_fn = |v: &[f64]| match MlpParams::unflatten(topology, spec, v) {
        Ok(p) => local_opt::cost(&p, &prep.train).unwrap_or(f64::INFINITY),
        Err(_) => f64::INFINITY,
    };

    let mut best_chain = None;
    let mut inner_costs = Vec::with_capacity(config.inner_runs);
    for k in 0..config.inner_runs {
        let mut rng = stream_rng(seed, k as u64 + 1);
        let mut search = SaTs::new(config.sa);
        if let Some(slot) = slot {
            search = search.with_lambda(slot);
        }
        if let (Some(g), false) = (config.sa_gl_threshold, prep.val.is_empty()) {
            let mut seen = Vec::new();
            search = search.with_stop(move |best| {
                let v = MlpParams::unflatten(topology, spec, &best.vector)
                    .and_then(|p| local_opt::cost(&p, &prep.val))
                    .unwrap_or(f64::INFINITY);
                seen.push(v);
                local_opt::gl5(&seen, g)
            });
        }
        let outcome = search.optimize(cost_fn, &init_vec, &mut rng)?;
        inner_costs.push(outcome.best.cost);
        if best_chain
            .as_ref()
            .is_none_or(|(_, b): &(usize, SearchOutcome)| outcome.best.cost < b.best.cost)
        {
            best_chain = Some((k, outcome));
        }
    }
    let (chosen_inner, chain) = best_chain.expect("inner_runs >= 1");
    let mut params = MlpParams::unflatten(topology, spec, &chain.best.vector)?;

    let (local_epochs, local_stop, train_history, val_history) = match config.pipeline {
        Pipeline::Sats => (None, None, Vec::new(), Vec::new()),
        Pipeline::SatsBpm => {
            let rep = local_opt::bpm_train(&params, &prep.train, &prep.val, &config.bpm)?;
            params = rep.model;
            (Some(rep.epochs_run), Some(rep.stop_reason), rep.train_history, rep.val_history)
        }
        Pipeline::SatsLm => {
            let rep = local_opt::lm_train(&params, &prep.train, &prep.val, &config.lm)?;
            params = rep.model;
            (Some(rep.epochs_run), Some(rep.stop_reason), rep.train_history, rep.val_history)
        }
    };

    let fit = prep.fit_window();
    let fit_pred = predict_all(&params, &fit)?;
    let test_pred = predict_all(&params, &prep.test)?;
    let fit_pred = prep.unscale(&fit_pred);
    let test_pred = prep.unscale(&test_pred);
    let first = prep.first_target();
    let test_start = prep.test_start();
    let fit_actual = &prep.values[first..test_start];
    let test_actual = &prep.values[test_start..];
    let train = metrics::compute_metrics(fit_actual, &fit_pred)?;
    let test = metrics::compute_metrics(test_actual, &test_pred)?;
    let val_mse = (!prep.val.is_empty())
        .then(|| local_opt::cost(&params, &prep.val))
        .transpose()?;

    let predictions = (first..)
        .zip(fit_actual.iter().chain(test_actual))
        .zip(fit_pred.iter().chain(&test_pred))
        .map(|((i, &a), &p)| (i, a, p))
        .collect();
    let row = RestartRow {
        restart,
        seed,
        lambda: spec.is_free().then_some(params.activation.lambda),
        inner_costs,
        chosen_inner,
        sa_iterations: chain.history.len(),
        sa_stopped_early: chain.stopped_early,
        local_epochs,
        local_stop,
        val_mse,
        train,
        test,
    };
    Ok(RestartOutcome {
        row,
        params,
        traces: SelectedTraces {
            sa_history: chain.history,
            train_history,
            val_history,
            predictions,
        },
    })
}

fn predict_all(params: &MlpParams, data: &dataprep::Patterns) -> Result<Vec<f64>> {
    data.inputs
        .iter()
        .map(|x| {
            let y = params.predict(x);
            if y.is_finite() {
                Ok(y)
            } else {
                Err(Error::Numerical("non-finite network output".into()))
            }
        })
        .collect()
}

/// One-step-ahead predictions for the last `horizon` values of `series`.
/// Rows are `(index, actual, predicted)` in the space the model's metrics
/// use (log space when the model was fitted on logs). `expected_lags`, when
/// given, must match the model.
pub fn forecast(
    model: &ModelFile,
    series: &Series,
    horizon: usize,
    expected_lags: Option<usize>,
) -> Result<Vec<(usize, f64, f64)>> {
    if let Some(l) = expected_lags.filter(|&l| l != model.lags) {
        return Err(Error::Dimension {
            expected: model.lags,
            got: l,
            context: "lag count of the model",
        });
    }
    let params = model.params.clone().into_params()?;
    if params.topology.inputs != model.lags {
        return Err(Error::Dimension {
            expected: model.lags,
            got: params.topology.inputs,
            context: "network inputs versus model lags",
        });
    }
    let values = if model.transform_log && !series.transform_log {
        series.clone().log_transform()?.values
    } else {
        series.values.clone()
    };
    if horizon + model.lags > values.len() {
        return Err(Error::Data(format!(
            "horizon {horizon} with {} lags needs {} values, got {}",
            model.lags,
            horizon + model.lags,
            values.len()
        )));
    }
    let scaled: Vec<f64> = values.iter().map(|&v| model.scale.apply(v)).collect();
    (values.len() - horizon..values.len())
        .map(|t| {
            let y = params.predict(&scaled[t - model.lags..t]);
            if y.is_finite() {
                Ok((t, values[t], model.scale.invert(y)))
            } else {
                Err(Error::Numerical(format!("non-finite prediction at index {t}")))
            }
        })
        .collect()
}

pub fn forecast_csv(rows: &[(usize, f64, f64)]) -> String {
    let mut out = String::from("index,actual,predicted\n");
    for (i, a, p) in rows {
        let _ = writeln!(out, "{i},{a},{p}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: MetricKind,
    pub a: String,
    pub b: String,
    /// `None` when either sample has fewer than two values.
    pub result: Option<TTestResult>,
}

/// t-tests on the per-restart test metrics of two runs, one per metric.
pub fn compare_reports(a: &RunReport, b: &RunReport, kind: TTestKind) -> Vec<MetricComparison> {
    MetricKind::ALL
        .iter()
        .map(|&metric| MetricComparison {
            metric,
            a: a.variant.clone(),
            b: b.variant.clone(),
            result: metrics::t_test(&a.test_sample(metric), &b.test_sample(metric), kind).ok(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    #[serde(flatten)]
    pub base: ExperimentConfig,
    pub variants: Vec<Variant>,
    pub ttest: TTestKind,
    /// Add an AR row with the same lag order.
    pub ar_baseline: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            base: ExperimentConfig::default(),
            variants: default_variants(),
            ttest: TTestKind::Pooled,
            ar_baseline: true,
        }
    }
}

impl BenchConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}

/// Every pipeline crossed with free Aranda, logit and cloglog.
pub fn default_variants() -> Vec<Variant> {
    let acts = [ActivationKind::ArandaFree, ActivationKind::Logit, ActivationKind::Cloglog];
    Pipeline::ALL
        .iter()
        .flat_map(|&p| acts.iter().map(move |&a| Variant::new(p, a)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArBaseline {
    pub order: usize,
    pub train: Metrics,
    pub test: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub dataset: String,
    pub seed: u64,
    pub runs: Vec<RunReport>,
    pub ar: Option<ArBaseline>,
    pub comparisons: Vec<MetricComparison>,
}

pub struct BenchRun {
    pub report: BenchReport,
    pub elapsed: Duration,
}

pub fn bench(config: &BenchConfig) -> Result<BenchRun> {
    let series = dataprep::load_csv(&config.base.data)?;
    bench_on(config, &series)
}

pub fn bench_on(config: &BenchConfig, series: &Series) -> Result<BenchRun> {
    if config.variants.len() < 2 {
        return Err(Error::Config("bench needs at least two variants".into()));
    }
    config.base.validate()?;
    let start = Instant::now();
    // resolve auto lags once so every variant sees the same windows
    let (lags, _) = resolve_lags(&config.base, series)?;
    let mut runs = Vec::with_capacity(config.variants.len());
    for v in &config.variants {
        let mut cfg = config.base.clone();
        cfg.pipeline = v.pipeline;
        cfg.activation = v.activation;
        if config.base.lags.is_none() {
            cfg.lags = Some(lags);
        }
        runs.push(run_pipeline_on(&cfg, series)?.report);
    }
    let ar = if config.ar_baseline {
        Some(ar_baseline(&config.base, series, lags)?)
    } else {
        None
    };
    let mut comparisons = Vec::new();
    for &metric in &MetricKind::ALL {
        for i in 0..runs.len() {
            for j in i + 1..runs.len() {
                let (a, b) = (&runs[i], &runs[j]);
                comparisons.push(MetricComparison {
                    metric,
                    a: a.variant.clone(),
                    b: b.variant.clone(),
                    result: metrics::t_test(&a.test_sample(metric), &b.test_sample(metric), config.ttest).ok(),
                });
            }
        }
    }
    Ok(BenchRun {
        report: BenchReport {
            dataset: config.base.dataset_name(),
            seed: config.base.seed,
            runs,
            ar,
            comparisons,
        },
        elapsed: start.elapsed(),
    })
}

/// AR(`order`) fitted on the pre-test window; metrics over the same fit and
/// test targets as the network runs.
pub fn ar_baseline(config: &ExperimentConfig, series: &Series, order: usize) -> Result<ArBaseline> {
    let series = if config.transform_log && !series.transform_log {
        series.clone().log_transform()?
    } else {
        series.clone()
    };
    let v = &series.values;
    if v.len() <= config.test_len + order {
        return Err(Error::Data(format!("series too short for AR({order}) baseline")));
    }
    let split = v.len() - config.test_len;
    let model = ar::fit_ar(&v[..split], order)?;
    let fit_pred = model.fitted(&v[..split]);
    let test_pred = ar::forecast_ar(&model, v, config.test_len)?;
    Ok(ArBaseline {
        order,
        train: metrics::compute_metrics(&v[order..split], &fit_pred)?,
        test: metrics::compute_metrics(&v[split..], &test_pred)?,
    })
}

impl BenchReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Average and SD of every metric, train and test, one row per model.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("model");
        for split in ["train", "test"] {
            for k in MetricKind::ALL {
                let _ = write!(out, ",{split}_{0}_avg,{split}_{0}_sd", k.label());
            }
        }
        out.push('\n');
        let cell = |m: Option<f64>| m.map_or(String::new(), |v| format!("{v:e}"));
        for run in &self.runs {
            out.push_str(&run.variant);
            for agg in [&run.train, &run.test] {
                for k in MetricKind::ALL {
                    let avg = agg.as_ref().and_then(|a| a.mean.get(k));
                    let sd = agg.as_ref().and_then(|a| a.sd.and_then(|s| s.get(k)));
                    let _ = write!(out, ",{},{}", cell(avg), cell(sd));
                }
            }
            out.push('\n');
        }
        if let Some(ar) = &self.ar {
            let _ = write!(out, "AR({})", ar.order);
            for m in [&ar.train, &ar.test] {
                for k in MetricKind::ALL {
                    let _ = write!(out, ",{},", cell(m.get(k)));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Square matrix of p-values for one metric; the diagonal is 1.
    pub fn pvalue_csv(&self, metric: MetricKind) -> String {
        let names: Vec<&str> = self.runs.iter().map(|r| r.variant.as_str()).collect();
        let mut out = String::from("model");
        for n in &names {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
        for a in &names {
            out.push_str(a);
            for b in &names {
                let p = if a == b {
                    Some(1.0)
                } else {
                    self.comparisons
                        .iter()
                        .find(|c| c.metric == metric && ((c.a == *a && c.b == *b) || (c.a == *b && c.b == *a)))
                        .and_then(|c| c.result.map(|r| r.p_value))
                };
                let _ = write!(out, ",{}", p.map_or(String::new(), |p| format!("{p:.6}")));
            }
            out.push('\n');
        }
        out
    }
}

fn sa_history_csv(history: &[IterationRecord]) -> String {
    let mut out = String::from("iteration,temperature,current_cost,best_cost\n");
    for r in history {
        let _ = writeln!(out, "{},{:e},{:e},{:e}", r.iteration, r.temperature, r.current_cost, r.best_cost);
    }
    out
}

fn local_history_csv(train: &[f64], val: &[f64]) -> String {
    let mut out = String::from("epoch,train_cost,val_cost\n");
    for (i, t) in train.iter().enumerate() {
        let v = val.get(i).map_or(String::new(), |v| format!("{v:e}"));
        let _ = writeln!(out, "{},{t:e},{v}", i + 1);
    }
    out
}

fn predictions_csv(rows: &[(usize, f64, f64)], test_start: usize) -> String {
    let mut out = String::from("index,split,actual,predicted\n");
    for &(i, a, p) in rows {
        let split = if i >= test_start { "test" } else { "fit" };
        let _ = writeln!(out, "{i},{split},{a},{p}");
    }
    out
}

/// Paths written by [`write_run`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFiles {
    pub report: PathBuf,
    pub model: Option<PathBuf>,
}

/// Writes `<stem>_report.json`, `<stem>_model.json`, history and
/// prediction CSVs and `<stem>_timing.json` into `config.out`.
pub fn write_run(run: &PipelineRun) -> Result<RunFiles> {
    let cfg = &run.report.config;
    let dir = &cfg.out;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = cfg.file_stem();
    let report = dir.join(format!("{stem}_report.json"));
    write_file(&report, &run.report.to_json()?)?;
    let model = match &run.model {
        Some(m) => {
            let p = dir.join(format!("{stem}_model.json"));
            write_file(&p, &serde_json::to_string_pretty(m)?)?;
            Some(p)
        }
        None => None,
    };
    if let Some(t) = &run.traces {
        write_file(&dir.join(format!("{stem}_sa_history.csv")), &sa_history_csv(&t.sa_history))?;
        if !t.train_history.is_empty() {
            write_file(
                &dir.join(format!("{stem}_train_history.csv")),
                &local_history_csv(&t.train_history, &t.val_history),
            )?;
        }
        let test_start = t.predictions.len().saturating_sub(cfg.test_len);
        let test_start = t.predictions.get(test_start).map_or(usize::MAX, |r| r.0);
        write_file(
            &dir.join(format!("{stem}_predictions.csv")),
            &predictions_csv(&t.predictions, test_start),
        )?;
    }
    write_timing(&dir.join(format!("{stem}_timing.json")), run.elapsed)?;
    Ok(RunFiles { report, model })
}

/// Writes `<dataset>_bench_s<seed>.json`, the summary CSV, one p-value CSV
/// per metric and a timing file. Returns the JSON path.
pub fn write_bench(run: &BenchRun, out: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let r = &run.report;
    let stem = format!("{}_bench_s{}", r.dataset, r.seed);
    let json = out.join(format!("{stem}.json"));
    write_file(&json, &r.to_json()?)?;
    write_file(&out.join(format!("{stem}_summary.csv")), &r.summary_csv())?;
    for k in MetricKind::ALL {
        write_file(&out.join(format!("{stem}_pvalues_{}.csv", k.label())), &r.pvalue_csv(k))?;
    }
    write_timing(&out.join(format!("{stem}_timing.json")), run.elapsed)?;
    Ok(json)
}

fn write_timing(path: &Path, elapsed: Duration) -> Result<()> {
    write_file(path, &format!("{{\"wall_seconds\": {}}}\n", elapsed.as_secs_f64()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
