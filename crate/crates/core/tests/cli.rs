use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aranda_mlp::experiment::{ModelFile, RunReport};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aranda-mlp")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn quick_fit(out: &Path, restarts: &str, extra: &[&str]) -> Output {
    let airline = data("airline.csv");
    let mut args = vec![
        "fit", "--data", s(&airline), "--transform", "log", "--lags", "5", "--hidden", "2",
        "--restarts", restarts, "--inner-runs", "1", "--max-iter", "200", "--out", s(out),
    ];
    args.extend_from_slice(extra);
    cli(&args)
}

#[test]
fn fit_then_forecast_matches_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = quick_fit(dir.path(), "2", &["--pipeline", "sats-lm"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stem = "airline_SATS_LM_aranda_s0";
    let report = RunReport::load(dir.path().join(format!("{stem}_report.json"))).unwrap();
    assert_eq!(report.restarts.len(), 2);
    for suffix in ["model.json", "sa_history.csv", "train_history.csv", "predictions.csv", "timing.json"] {
        assert!(dir.path().join(format!("{stem}_{suffix}")).exists(), "{suffix}");
    }

    let model_path = dir.path().join(format!("{stem}_model.json"));
    let model = ModelFile::load(&model_path).unwrap();
    let csv_path = dir.path().join("fc.csv");
    let airline = data("airline.csv");
    let fc = cli(&["forecast", "--model", s(&model_path), "--data", s(&airline), "--horizon", "12", "--out", s(&csv_path)]);
    assert!(fc.status.success());
    let text = fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,actual,predicted"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let c: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (c[1], c[2])
        })
        .collect();
    assert_eq!(rows.len(), 12);
    let mse = rows.iter().map(|(a, p)| (a - p).powi(2)).sum::<f64>() / 12.0;
    let expected = report.restarts[model.restart].test.mse;
    assert!((mse - expected).abs() <= 1e-12 * expected.max(1.0), "{mse} vs {expected}");
}

#[test]
fn forecast_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    assert!(quick_fit(dir.path(), "2", &["--pipeline", "sats"]).status.success());
    let model = dir.path().join("airline_SATS_aranda_s0_model.json");
    let airline = data("airline.csv");

    let empty = cli(&["forecast", "--model", s(&model), "--data", s(&airline), "--horizon", "0"]);
    assert!(empty.status.success());
    assert_eq!(String::from_utf8_lossy(&empty.stdout), "index,actual,predicted\n");

    let wrong_lags = cli(&["forecast", "--model", s(&model), "--data", s(&airline), "--lags", "3"]);
    assert_eq!(wrong_lags.status.code(), Some(1));

    let too_long = cli(&["forecast", "--model", s(&model), "--data", s(&airline), "--horizon", "500"]);
    assert_eq!(too_long.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["fit", "--data", "/nonexistent/x.csv"]).status.code(), Some(2));
    assert_eq!(cli(&["fit"]).status.code(), Some(1));
    assert_eq!(cli(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(quick_fit(dir.path(), "2", &["--hidden", "7"]).status.code(), Some(1));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "value\n1\n2\nthree\n").unwrap();
    let out = cli(&["fit", "--data", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));

    let negative = dir.path().join("neg.csv");
    let body: String = (0..40).map(|i| format!("{}\n", i as f64 - 5.0)).collect();
    fs::write(&negative, body).unwrap();
    assert_eq!(cli(&["fit", "--data", s(&negative), "--transform", "log"]).status.code(), Some(2));

    let constant = dir.path().join("flat.csv");
    fs::write(&constant, "3\n".repeat(40)).unwrap();
    assert_eq!(cli(&["select-lags", "--data", s(&constant)]).status.code(), Some(3));
}

#[test]
fn select_lags_prints_table() {
    let airline = data("airline.csv");
    let out = cli(&["select-lags", "--data", s(&airline), "--transform", "log"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "order,aic");
    assert_eq!(lines.len(), 1 + 12 + 1);
    assert!(lines[13].starts_with("chosen "));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let json = format!(
        r#"{{"data": "{}", "transform_log": true, "lags": 4, "hidden": 3, "restarts": 3,
            "inner_runs": 1, "pipeline": "sats_bpm", "activation": "cloglog",
            "sa": {{"max_iter": 100}}, "bpm": {{"max_epochs": 50}}}}"#,
        data("airline.csv").display()
    );
    fs::write(&cfg, json).unwrap();
    let out = cli(&["fit", "--config", s(&cfg), "--restarts", "2", "--seed", "5", "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = RunReport::load(dir.path().join("airline_SATS_BPM_cloglog_s5_report.json")).unwrap();
    assert_eq!(report.restarts.len(), 2);
    assert_eq!(report.lags, 4);
    assert_eq!(report.topology.hidden, 3);
    assert_eq!(report.config.sa.max_iter, 100);
    assert!(report.lambda_mean.is_none());
}

#[test]
fn ttest_between_reports() {
    let dir = tempfile::tempdir().unwrap();
    assert!(quick_fit(dir.path(), "4", &["--pipeline", "sats"]).status.success());
    assert!(quick_fit(dir.path(), "4", &["--pipeline", "sats-lm"]).status.success());
    let a = dir.path().join("airline_SATS_aranda_s0_report.json");
    let b = dir.path().join("airline_SATS_LM_aranda_s0_report.json");
    let out = cli(&["ttest", s(&a), s(&b)]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 5);
    for line in text.lines().skip(1) {
        let p: f64 = line.split(',').nth(5).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert_eq!(line.split(',').nth(4), Some("6.000"));
    }
    let same = cli(&["ttest", s(&a), s(&a), "--welch"]);
    for line in String::from_utf8_lossy(&same.stdout).lines().skip(1) {
        assert_eq!(line.split(',').nth(5), Some("1.000000"));
    }
}

#[test]
fn bench_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let wwwusage = data("wwwusage.csv");
    let out = cli(&[
        "bench", "--data", s(&wwwusage), "--auto-lags", "--hidden", "2", "--restarts", "2",
        "--max-iter", "100", "--variants", "sats:aranda,sats-lm:logit", "--out", s(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["wwwusage_bench_s0.json", "wwwusage_bench_s0_summary.csv", "wwwusage_bench_s0_pvalues_MSE.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(dir.path().join("wwwusage_bench_s0_summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows[1..3], ["SATS_aranda", "SATS_LM_logit"]);
    assert!(rows[3].starts_with("AR("));
}
