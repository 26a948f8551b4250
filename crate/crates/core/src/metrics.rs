//! Forecast error metrics, multi-restart aggregation and the two-sample
//! Student t-test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sse: f64,
    pub mse: f64,
    pub mae: f64,
    /// Percent. `None` when some target is zero.
    pub mape: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Sse,
    Mse,
    Mae,
    Mape,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [MetricKind::Sse, MetricKind::Mse, MetricKind::Mae, MetricKind::Mape];

    pub fn label(self) -> &'static str {
        match self {
            MetricKind::Sse => "SSE",
            MetricKind::Mse => "MSE",
            MetricKind::Mae => "MAE",
            MetricKind::Mape => "MAPE",
        }
    }
}

impl Metrics {
    pub fn get(&self, kind: MetricKind) -> Option<f64> {
        match kind {
            MetricKind::Sse => Some(self.sse),
            MetricKind::Mse => Some(self.mse),
            MetricKind::Mae => Some(self.mae),
            MetricKind::Mape => self.mape,
        }
    }
}

pub fn compute_metrics(targets: &[f64], predictions: &[f64]) -> Result<Metrics> {
    if targets.len() != predictions.len() {
        return Err(Error::Dimension {
            expected: targets.len(),
            got: predictions.len(),
            context: "predictions vs targets",
        });
    }
    if targets.is_empty() {
        return Err(Error::Data("metrics need at least one point".into()));
    }
    let n = targets.len() as f64;
    let (mut sse, mut sae, mut sape) = (0.0, 0.0, 0.0);
    let mut mape_defined = true;
    for (t, y) in targets.iter().zip(predictions) {
        let e = t - y;
        sse += e * e;
        sae += e.abs();
        if *t == 0.0 {
            mape_defined = false;
        } else {
            sape += (e / t).abs();
        }
    }
    Ok(Metrics {
        sse,
        mse: sse / n,
        mae: sae / n,
        mape: mape_defined.then(|| 100.0 * sape / n),
    })
}

/// Elementwise mean and sample standard deviation (n − 1 denominator).
/// `sd` is `None` for a single restart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: Metrics,
    pub sd: Option<Metrics>,
}

pub fn aggregate(per_restart: &[Metrics]) -> Result<Aggregate> {
    if per_restart.is_empty() {
        return Err(Error::Data("cannot aggregate zero restarts".into()));
    }
    let column = |k: MetricKind| -> Option<Vec<f64>> { per_restart.iter().map(|m| m.get(k)).collect() };
    let mean_of = |k: MetricKind| column(k).map(|v| mean(&v));
    let sd_of = |k: MetricKind| column(k).map(|v| sample_sd(&v));
    let mean = Metrics {
        sse: mean_of(MetricKind::Sse).unwrap_or(f64::NAN),
        mse: mean_of(MetricKind::Mse).unwrap_or(f64::NAN),
        mae: mean_of(MetricKind::Mae).unwrap_or(f64::NAN),
        mape: mean_of(MetricKind::Mape),
    };
    let sd = (per_restart.len() >= 2).then(|| Metrics {
        sse: sd_of(MetricKind::Sse).unwrap_or(f64::NAN),
        mse: sd_of(MetricKind::Mse).unwrap_or(f64::NAN),
        mae: sd_of(MetricKind::Mae).unwrap_or(f64::NAN),
        mape: sd_of(MetricKind::Mape),
    });
    Ok(Aggregate {
        count: per_restart.len(),
        mean,
        sd,
    })
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

pub fn sample_sd(v: &[f64]) -> f64 {
    sample_variance(v).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_stat: f64,
    pub df: f64,
    pub p_value: f64,
    pub significant_at_5pct: bool,
    /// Zero variance in both samples; `p_value` is 0 or 1 by convention.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestKind {
    /// Classic Student test with pooled variance.
    #[default]
    Pooled,
    Welch,
}

/// Two-sided two-sample t-test of equal means.
pub fn t_test(a: &[f64], b: &[f64], kind: TTestKind) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Data(format!(
            "t-test needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let diff = mean(a) - mean(b);
    let (va, vb) = (sample_variance(a), sample_variance(b));
    let (se2, df) = match kind {
        TTestKind::Pooled => {
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
            (pooled * (1.0 / na + 1.0 / nb), na + nb - 2.0)
        }
        TTestKind::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let df = if se2 > 0.0 {
                se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0))
            } else {
                na + nb - 2.0
            };
            (se2, df)
        }
    };
    if se2 <= 0.0 {
        let equal = diff == 0.0;
        return Ok(TTestResult {
            t_stat: if equal { 0.0 } else { diff.signum() * f64::INFINITY },
            df,
            p_value: if equal { 1.0 } else { 0.0 },
            significant_at_5pct: !equal,
            degenerate: true,
        });
    }
    let t = diff / se2.sqrt();
    let p = student_two_sided_p(t, df);
    Ok(TTestResult {
        t_stat: t,
        df,
        p_value: p,
        significant_at_5pct: p < 0.05,
        degenerate: false,
    })
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn student_two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, n = 9) of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` via Lentz's continued fraction.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // the fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::function::beta::beta_reg;

    #[test]
    fn metric_examples() {
        let m = compute_metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((m.sse, m.mse, m.mae, m.mape), (0.0, 0.0, 0.0, Some(0.0)));
        let m = compute_metrics(&[100.0], &[90.0]).unwrap();
        assert_eq!((m.sse, m.mse, m.mae), (100.0, 100.0, 10.0));
        assert!((m.mape.unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(compute_metrics(&[0.0, 1.0], &[0.5, 1.0]).unwrap().mape, None);
        assert!(compute_metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
    }

    #[test]
    fn metrics_match_spreadsheet_style_recomputation() {
        let t = [3.1, -2.4, 7.7, 0.9, 5.5];
        let y = [2.9, -2.0, 8.4, 1.3, 5.0];
        let m = compute_metrics(&t, &y).unwrap();
        let e: Vec<f64> = t.iter().zip(&y).map(|(a, b)| a - b).collect();
        let sse = e[0] * e[0] + e[1] * e[1] + e[2] * e[2] + e[3] * e[3] + e[4] * e[4];
        let mae = (e[0].abs() + e[1].abs() + e[2].abs() + e[3].abs() + e[4].abs()) / 5.0;
        let mape = 100.0 / 5.0 * (0..5).map(|i| (e[i] / t[i]).abs()).sum::<f64>();
        assert!((m.sse - sse).abs() < 1e-10);
        assert!((m.mse - sse / 5.0).abs() < 1e-10);
        assert!((m.mae - mae).abs() < 1e-10);
        assert!((m.mape.unwrap() - mape).abs() < 1e-10);
    }

    #[test]
    fn aggregate_examples() {
        let mk = |v: f64| Metrics { sse: v, mse: v, mae: v, mape: Some(v) };
        let one = aggregate(&[mk(4.0)]).unwrap();
        assert_eq!(one.sd, None);
        assert_eq!(one.mean.sse, 4.0);
        let two = aggregate(&[mk(2.5), mk(2.5)]).unwrap();
        assert_eq!(two.sd.unwrap().mse, 0.0);
        let three = aggregate(&[mk(1.0), mk(2.0), mk(3.0)]).unwrap();
        assert_eq!(three.mean.mae, 2.0);
        assert_eq!(three.sd.unwrap().mae, 1.0);
        assert!(aggregate(&[]).is_err());
        let partial = aggregate(&[mk(1.0), Metrics { mape: None, ..mk(3.0) }]).unwrap();
        assert_eq!(partial.mean.mape, None);
    }

    #[test]
    fn t_test_reference_case() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        let r = t_test(&a, &b, TTestKind::Pooled).unwrap();
        assert!((r.t_stat + 1.0).abs() < 1e-12);
        assert_eq!(r.df, 8.0);
        assert!((r.p_value - 0.3466).abs() < 1e-3, "p = {}", r.p_value);
        assert!(!r.significant_at_5pct);
        // reference value from an independent Student CDF
        let st = StudentsT::new(0.0, 1.0, 8.0).unwrap();
        assert!((r.p_value - 2.0 * st.cdf(-1.0)).abs() < 1e-10);
    }

    #[test]
    fn t_test_degenerate_and_identical() {
        let a = [1.0, 2.0, 3.0];
        let r = t_test(&a, &a, TTestKind::Pooled).unwrap();
        assert_eq!((r.t_stat, r.p_value), (0.0, 1.0));
        let c = t_test(&[2.0, 2.0], &[2.0, 2.0], TTestKind::Pooled).unwrap();
        assert!(c.degenerate && c.p_value == 1.0);
        let d = t_test(&[2.0, 2.0], &[3.0, 3.0], TTestKind::Welch).unwrap();
        assert!(d.degenerate && d.p_value == 0.0 && d.t_stat == f64::NEG_INFINITY);
        assert!(t_test(&[1.0], &[1.0, 2.0], TTestKind::Pooled).is_err());
    }

    #[test]
    fn welch_matches_reference() {
        let a = [1.2, 3.4, 2.2, 5.1, 4.4, 3.0];
        let b = [7.5, 2.1, 9.9, 4.0];
        let r = t_test(&a, &b, TTestKind::Welch).unwrap();
        let st = StudentsT::new(0.0, 1.0, r.df).unwrap();
        assert!((r.p_value - 2.0 * st.cdf(-r.t_stat.abs())).abs() < 1e-10);
    }

    #[test]
    fn incomplete_beta_matches_reference() {
        for &(a, b) in &[(0.5, 0.5), (1.0, 3.0), (4.0, 0.5), (50.0, 0.5), (2.5, 7.5)] {
            for i in 1..20 {
                let x = i as f64 / 20.0;
                let ours = regularized_incomplete_beta(a, b, x);
                assert!((ours - beta_reg(a, b, x)).abs() < 1e-10, "a={a} b={b} x={x}");
            }
        }
        assert!((ln_gamma(5.0) - 24.0f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn same_distribution_rejection_rate_is_nominal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let normal = Normal::new(3.0, 2.0).unwrap();
        let reps = 1000;
        let mut rejections = 0;
        for _ in 0..reps {
            let a: Vec<f64> = (0..20).map(|_| normal.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..20).map(|_| normal.sample(&mut rng)).collect();
            rejections += usize::from(t_test(&a, &b, TTestKind::Pooled).unwrap().p_value < 0.05);
        }
        let rate = rejections as f64 / reps as f64;
        assert!((rate - 0.05).abs() <= 0.02, "rate {rate}");
    }

    proptest! {
        #[test]
        fn t_test_swap_antisymmetric(
            a in prop::collection::vec(-10.0f64..10.0, 2..15),
            b in prop::collection::vec(-10.0f64..10.0, 2..15),
        ) {
            let ab = t_test(&a, &b, TTestKind::Pooled).unwrap();
            let ba = t_test(&b, &a, TTestKind::Pooled).unwrap();
            prop_assert!((ab.t_stat + ba.t_stat).abs() <= 1e-12 * (1.0 + ab.t_stat.abs()));
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab.p_value));
        }

        #[test]
        fn metric_identities(
            pairs in prop::collection::vec((0.5f64..100.0, -100.0f64..100.0), 1..30),
        ) {
            let (t, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = compute_metrics(&t, &y).unwrap();
            prop_assert!((m.mse * t.len() as f64 - m.sse).abs() <= 1e-9 * m.sse.max(1.0));
            prop_assert!(m.mae <= m.mse.sqrt() * (1.0 + 1e-12));
            prop_assert!(m.sse >= 0.0 && m.mape.unwrap() >= 0.0);
        }
    }
}
