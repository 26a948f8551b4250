//! Autoregressive baseline: conditional least squares AR(p) with intercept,
//! AIC order selection and one-step-ahead forecasts.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ORDER: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub order: usize,
    pub intercept: f64,
    /// `φ₁..φ_p`, lag 1 first.
    pub coefficients: Vec<f64>,
    pub rss: f64,
    /// `rss / n_effective`.
    pub residual_variance: f64,
    pub n_effective: usize,
    /// `n_eff·ln(RSS/n_eff) + 2(p+1)`.
    pub aic: f64,
}

impl ArModel {
    /// Prediction of the value at index `t` from the `order` values before it.
    pub fn predict_at(&self, values: &[f64], t: usize) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .enumerate()
                .map(|(i, phi)| phi * values[t - 1 - i])
                .sum::<f64>()
    }

    /// One-step predictions for indices `order..values.len()`.
    pub fn fitted(&self, values: &[f64]) -> Vec<f64> {
        (self.order..values.len()).map(|t| self.predict_at(values, t)).collect()
    }
}

fn design(values: &[f64], p: usize) -> (DMatrix<f64>, DVector<f64>) {
    let rows = values.len() - p;
    let x = DMatrix::from_fn(rows, p + 1, |r, c| if c == 0 { 1.0 } else { values[p + r - c] });
    let y = DVector::from_iterator(rows, values[p..].iter().copied());
    (x, y)
}

pub fn fit_ar(values: &[f64], p: usize) -> Result<ArModel> {
    if p == 0 {
        return Err(Error::Config("AR order must be at least 1".into()));
    }
    if values.len() <= 2 * (p + 1) {
        return Err(Error::Data(format!(
            "AR({p}) needs more than {} values, got {}",
            2 * (p + 1),
            values.len()
        )));
    }
    let (x, y) = design(values, p);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::Numerical(format!(
            "degenerate AR({p}) design (singular values {smin:e}..{smax:e})"
        )));
    }
    let beta = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Numerical(format!("AR({p}) least squares failed: {e}")))?;
    let resid = &y - &x * &beta;
    let rss = resid.norm_squared();
    let n_eff = y.len();
    let aic = n_eff as f64 * (rss / n_eff as f64).ln() + 2.0 * (p + 1) as f64;
    Ok(ArModel {
        order: p,
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        rss,
        residual_variance: rss / n_eff as f64,
        n_effective: n_eff,
        aic,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSelection {
    pub chosen: usize,
    /// `(order, aic)` for every order tried.
    pub table: Vec<(usize, f64)>,
}

/// Order in `1..=max_order` minimizing AIC; ties go to the smaller order.
pub fn select_lags(values: &[f64], max_order: usize) -> Result<LagSelection> {
    if max_order == 0 {
        return Err(Error::Config("max_order must be at least 1".into()));
    }
    let table = (1..=max_order)
        .map(|p| fit_ar(values, p).map(|m| (p, m.aic)))
        .collect::<Result<Vec<_>>>()?;
    let mut chosen = table[0];
    for &entry in &table[1..] {
        if entry.1 < chosen.1 {
            chosen = entry;
        }
    }
    Ok(LagSelection {
        chosen: chosen.0,
        table,
    })
}

/// One-step-ahead forecasts of the last `horizon` entries of `values`, each
/// from the true values preceding it.
pub fn forecast_ar(model: &ArModel, values: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if horizon > values.len() || values.len() - horizon < model.order {
        return Err(Error::Data(format!(
            "forecasting {horizon} points with AR({}) needs at least {} values, got {}",
            model.order,
            horizon + model.order,
            values.len()
        )));
    }
    let start = values.len() - horizon;
    Ok((start..values.len()).map(|t| model.predict_at(values, t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn simulate(phi: &[f64], c: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let burn = 200;
        let mut v = vec![0.0; phi.len()];
        for _ in 0..n + burn {
            let t = v.len();
            let e: f64 = StandardNormal.sample(&mut rng);
            let next = c + e + phi.iter().enumerate().map(|(i, f)| f * v[t - 1 - i]).sum::<f64>();
            v.push(next);
        }
        v.split_off(v.len() - n)
    }

    #[test]
    fn noiseless_ar1_recovered() {
        let mut v = vec![10.0];
        for _ in 0..40 {
            let last = *v.last().unwrap();
            v.push(0.5 * last + 1.0);
        }
        let m = fit_ar(&v, 1).unwrap();
        assert!((m.intercept - 1.0).abs() < 1e-8);
        assert!((m.coefficients[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn noisy_ar2_consistent() {
        let v = simulate(&[0.6, -0.3], 0.0, 2000, 17);
        let m = fit_ar(&v, 2).unwrap();
        assert!((m.coefficients[0] - 0.6).abs() < 0.05);
        assert!((m.coefficients[1] + 0.3).abs() < 0.05);
    }

    #[test]
    fn constant_series_is_degenerate() {
        assert!(matches!(fit_ar(&[3.0; 30], 2), Err(Error::Numerical(_))));
        assert!(matches!(fit_ar(&[1.0, 2.0, 3.0, 4.0], 2), Err(Error::Data(_))));
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let v = simulate(&[0.4, 0.2, -0.1], 2.0, 300, 5);
        let m = fit_ar(&v, 3).unwrap();
        let preds = m.fitted(&v);
        let resid: Vec<f64> = v[3..].iter().zip(&preds).map(|(a, b)| a - b).collect();
        assert!(resid.iter().sum::<f64>().abs() < 1e-8);
        for lag in 1..=3 {
            let dot: f64 = resid.iter().enumerate().map(|(r, e)| e * v[3 + r - lag]).sum();
            assert!(dot.abs() < 1e-8, "lag {lag}: {dot}");
        }
        assert!((m.rss - resid.iter().map(|e| e * e).sum::<f64>()).abs() < 1e-8);
    }

    #[test]
    fn selection_is_brute_force_argmin() {
        for seed in 0..5 {
            let v = simulate(&[0.5, 0.2], 1.0, 150, seed);
            let sel = select_lags(&v, 8).unwrap();
            let mut best = (0, f64::INFINITY);
            for p in 1..=8 {
                let aic = fit_ar(&v, p).unwrap().aic;
                if aic < best.1 {
                    best = (p, aic);
                }
            }
            assert_eq!(sel.chosen, best.0);
            assert_eq!(sel.table.len(), 8);
        }
    }

    #[test]
    fn white_noise_prefers_order_one() {
        let ones = (0..15)
            .filter(|&s| select_lags(&simulate(&[], 0.0, 300, 1000 + s), 12).unwrap().chosen == 1)
            .count();
        assert!(ones > 7, "{ones}/15");
    }

    #[test]
    fn forecast_examples() {
        let m = ArModel {
            order: 1,
            intercept: 3.0,
            coefficients: vec![0.0],
            rss: 0.0,
            residual_variance: 0.0,
            n_effective: 0,
            aic: 0.0,
        };
        assert_eq!(forecast_ar(&m, &[9.0, 1.0, 5.0, 7.0], 3).unwrap(), vec![3.0; 3]);
        assert!(forecast_ar(&m, &[1.0, 2.0], 0).unwrap().is_empty());
        assert!(forecast_ar(&m, &[1.0, 2.0], 2).is_err());

        let mut v = vec![1.0, 2.0];
        for t in 2..60 {
            let next = 0.5 + 0.9 * v[t - 1] - 0.4 * v[t - 2];
            v.push(next);
        }
        let fit = fit_ar(&v[..48], 2).unwrap();
        let preds = forecast_ar(&fit, &v, 12).unwrap();
        for (p, t) in preds.iter().zip(&v[48..]) {
            assert!((p - t).abs() < 1e-9);
        }
    }
}
