use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use aranda_mlp::ar::DEFAULT_MAX_ORDER;
use aranda_mlp::dataprep::{self, DEFAULT_TEST_LEN};
use aranda_mlp::experiment::{
    self, default_variants, BenchConfig, ExperimentConfig, ModelFile, Pipeline, RunReport, Variant,
};
use aranda_mlp::metrics::{MetricKind, TTestKind};
use aranda_mlp::{ActivationKind, Error, Result};

#[derive(Parser)]
#[command(name = "aranda-mlp", version, about = "MLP forecasters with a trainable asymmetric activation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one pipeline over all restarts; save report and best model.
    Fit(RunArgs),
    /// One-step-ahead predictions of a saved model.
    Forecast(ForecastArgs),
    /// AIC table of AR orders on the pre-test window.
    SelectLags(SelectLagsArgs),
    /// Run several pipeline/activation variants and compare them.
    Bench(BenchArgs),
    /// t-tests between two saved reports.
    Ttest(TtestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationArg {
    Aranda,
    Logit,
    Cloglog,
}

impl From<ActivationArg> for ActivationKind {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Aranda => ActivationKind::ArandaFree,
            ActivationArg::Logit => ActivationKind::Logit,
            ActivationArg::Cloglog => ActivationKind::Cloglog,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    Sats,
    SatsBpm,
    SatsLm,
}

impl From<PipelineArg> for Pipeline {
    fn from(p: PipelineArg) -> Self {
        match p {
            PipelineArg::Sats => Pipeline::Sats,
            PipelineArg::SatsBpm => Pipeline::SatsBpm,
            PipelineArg::SatsLm => Pipeline::SatsLm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    Log,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, conflicts_with = "auto_lags")]
    lags: Option<usize>,
    #[arg(long)]
    auto_lags: bool,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, value_enum)]
    activation: Option<ActivationArg>,
    #[arg(long, value_enum)]
    pipeline: Option<PipelineArg>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    inner_runs: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    transform: Option<TransformArg>,
    /// 100 restarts x 10 chains x 10,000 iterations.
    #[arg(long = "paper-scale")]
    full_scale: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        if self.full_scale {
            cfg = cfg.full_scale();
        }
        if let Some(d) = &self.data {
            cfg.data = d.clone();
        }
        if let Some(l) = self.lags {
            cfg.lags = Some(l);
        }
        if self.auto_lags {
            cfg.lags = None;
        }
        if let Some(h) = self.hidden {
            cfg.hidden = h;
        }
        if let Some(a) = self.activation {
            cfg.activation = a.into();
        }
        if let Some(p) = self.pipeline {
            cfg.pipeline = p.into();
        }
        if let Some(r) = self.restarts {
            cfg.restarts = r;
        }
        if let Some(r) = self.inner_runs {
            cfg.inner_runs = r;
        }
        if let Some(m) = self.max_iter {
            cfg.sa.max_iter = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.transform.is_some() {
            cfg.transform_log = true;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg
    }
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TEST_LEN)]
    horizon: usize,
    /// Fail unless the model uses this many lags.
    #[arg(long)]
    lags: Option<usize>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectLagsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    transform: Option<TransformArg>,
    #[arg(long, default_value_t = DEFAULT_MAX_ORDER)]
    max_order: usize,
    #[arg(long, default_value_t = DEFAULT_TEST_LEN)]
    test_len: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated `pipeline:activation` pairs, e.g. `sats:aranda,sats-lm:logit`.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    #[arg(long)]
    welch: bool,
    #[arg(long)]
    no_ar: bool,
}

#[derive(Args)]
struct TtestArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long)]
    welch: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fit(args) => fit(&args),
        Command::Forecast(args) => forecast(&args),
        Command::SelectLags(args) => select_lags(&args),
        Command::Bench(args) => bench(&args),
        Command::Ttest(args) => ttest(&args),
    }
}

fn base_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let cfg = args.apply(cfg);
    require_data(&cfg.data)?;
    Ok(cfg)
}

fn require_data(path: &Path) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::Config("no dataset given (--data or config `data`)".into()));
    }
    Ok(())
}

fn fit(args: &RunArgs) -> Result<()> {
    let cfg = base_config(args)?;
    let run = experiment::run_pipeline(&cfg)?;
    let files = experiment::write_run(&run)?;
    let rep = &run.report;
    println!(
        "{} {} lags={} restarts={} failures={}",
        rep.dataset,
        rep.variant,
        rep.lags,
        rep.restarts.len(),
        rep.failures.len()
    );
    if let (Some(train), Some(test)) = (&rep.train, &rep.test) {
        println!("{:<6} {:>14} {:>14}", "", "train_mean", "test_mean");
        for k in MetricKind::ALL {
            println!(
                "{:<6} {:>14} {:>14}",
                k.label(),
                fmt_opt(train.mean.get(k)),
                fmt_opt(test.mean.get(k))
            );
        }
    }
    if let Some(l) = rep.lambda_mean {
        println!("mean lambda {l:.4}");
    }
    println!("report {}", files.report.display());
    match files.model {
        Some(m) => {
            println!("model  {}", m.display());
            Ok(())
        }
        None => Err(Error::Numerical("every restart failed".into())),
    }
}

fn forecast(args: &ForecastArgs) -> Result<()> {
    let model = ModelFile::load(&args.model)?;
    let series = dataprep::load_csv(&args.data)?;
    let rows = experiment::forecast(&model, &series, args.horizon, args.lags)?;
    let csv = experiment::forecast_csv(&rows);
    match &args.out {
        Some(p) => fs::write(p, csv).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        }),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn select_lags(args: &SelectLagsArgs) -> Result<()> {
    let series = dataprep::load_csv(&args.data)?;
    let sel = experiment::select_lags_for(&series, args.transform.is_some(), args.test_len, args.max_order)?;
    println!("order,aic");
    for (p, aic) in &sel.table {
        println!("{p},{aic:.6}");
    }
    println!("chosen {}", sel.chosen);
    Ok(())
}

fn parse_variant(s: &str) -> Result<Variant> {
    let bad = || Error::Config(format!("variant '{s}' is not pipeline:activation"));
    let (p, a) = s.trim().split_once(':').ok_or_else(bad)?;
    let p = PipelineArg::from_str(p, true).map_err(|_| bad())?;
    let a = ActivationArg::from_str(a, true).map_err(|_| bad())?;
    Ok(Variant::new(p.into(), a.into()))
}

fn bench(args: &BenchArgs) -> Result<()> {
    let mut cfg = match &args.run.config {
        Some(p) => BenchConfig::load(p)?,
        None => BenchConfig::default(),
    };
    cfg.base = args.run.apply(cfg.base);
    require_data(&cfg.base.data)?;
    if !args.variants.is_empty() {
        cfg.variants = args.variants.iter().map(|s| parse_variant(s)).collect::<Result<_>>()?;
    }
    if cfg.variants.is_empty() {
        cfg.variants = default_variants();
    }
    if args.welch {
        cfg.ttest = TTestKind::Welch;
    }
    if args.no_ar {
        cfg.ar_baseline = false;
    }
    let run = experiment::bench(&cfg)?;
    let json = experiment::write_bench(&run, &cfg.base.out)?;
    print!("{}", run.report.summary_csv());
    println!("report {}", json.display());
    Ok(())
}

fn ttest(args: &TtestArgs) -> Result<()> {
    let a = RunReport::load(&args.a)?;
    let b = RunReport::load(&args.b)?;
    let kind = if args.welch { TTestKind::Welch } else { TTestKind::Pooled };
    println!("metric,a,b,t,df,p_value,significant_5pct");
    for c in experiment::compare_reports(&a, &b, kind) {
        match c.result {
            Some(r) => println!(
                "{},{},{},{:.6},{:.3},{:.6},{}",
                c.metric.label(),
                c.a,
                c.b,
                r.t_stat,
                r.df,
                r.p_value,
                r.significant_at_5pct
            ),
            None => println!("{},{},{},,,,", c.metric.label(), c.a, c.b),
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.6e}"))
}
