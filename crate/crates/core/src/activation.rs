//! Aranda-Ordaz asymmetric sigmoid family and its two fixed special cases.
//!
//! `f_λ(x) = 1 − (1 + λ eˣ)^(−1/λ)` for `λ > 0`. `λ = 1` is the logistic
//! sigmoid and `λ → 0` the complementary log-log `1 − exp(−eˣ)`.
//!
//! The power term is evaluated in log space as
//! `exp(−softplus(x + ln λ) / λ)` so that neither tail overflows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA_MIN: f64 = 1e-3;
pub const DEFAULT_LAMBDA_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    /// λ is part of the search vector.
    ArandaFree,
    /// λ held at a user-provided value.
    ArandaFixed,
    Logit,
    Cloglog,
}

impl ActivationKind {
    pub fn label(self) -> &'static str {
        match self {
            ActivationKind::ArandaFree => "aranda",
            ActivationKind::ArandaFixed => "aranda_fixed",
            ActivationKind::Logit => "logit",
            ActivationKind::Cloglog => "cloglog",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    /// Only meaningful for the Aranda kinds.
    pub lambda: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl ActivationSpec {
    /// Free λ starting at 1 (the logistic member) with default search bounds.
    pub fn aranda_free() -> Self {
        Self {
            kind: ActivationKind::ArandaFree,
            lambda: 1.0,
            lambda_min: DEFAULT_LAMBDA_MIN,
            lambda_max: DEFAULT_LAMBDA_MAX,
        }
    }

    pub fn aranda_fixed(lambda: f64) -> Self {
        Self {
            kind: ActivationKind::ArandaFixed,
            lambda,
            lambda_min: DEFAULT_LAMBDA_MIN,
            lambda_max: DEFAULT_LAMBDA_MAX,
        }
    }

    pub fn logit() -> Self {
        Self {
            kind: ActivationKind::Logit,
            lambda: 1.0,
            lambda_min: DEFAULT_LAMBDA_MIN,
            lambda_max: DEFAULT_LAMBDA_MAX,
        }
    }

    pub fn cloglog() -> Self {
        Self {
            kind: ActivationKind::Cloglog,
            lambda: 0.0,
            lambda_min: DEFAULT_LAMBDA_MIN,
            lambda_max: DEFAULT_LAMBDA_MAX,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_bounds(mut self, lambda_min: f64, lambda_max: f64) -> Self {
        self.lambda_min = lambda_min;
        self.lambda_max = lambda_max;
        self
    }

    pub fn is_free(&self) -> bool {
        self.kind == ActivationKind::ArandaFree
    }

    /// λ as reported for this member, `None` for the closed-form kinds.
    pub fn reported_lambda(&self) -> Option<f64> {
        match self.kind {
            ActivationKind::ArandaFree | ActivationKind::ArandaFixed => Some(self.lambda),
            ActivationKind::Logit | ActivationKind::Cloglog => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ActivationKind::ArandaFree => {
                check_lambda(self.lambda)?;
                if !(self.lambda_min > 0.0 && self.lambda_min <= self.lambda_max) {
                    return Err(Error::Domain(format!(
                        "invalid λ bounds [{}, {}]",
                        self.lambda_min, self.lambda_max
                    )));
                }
                if self.lambda < self.lambda_min || self.lambda > self.lambda_max {
                    return Err(Error::Domain(format!(
                        "λ = {} outside [{}, {}]",
                        self.lambda, self.lambda_min, self.lambda_max
                    )));
                }
                Ok(())
            }
            ActivationKind::ArandaFixed => check_lambda(self.lambda),
            ActivationKind::Logit | ActivationKind::Cloglog => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        match self.kind {
            ActivationKind::ArandaFree | ActivationKind::ArandaFixed => {
                check_lambda(self.lambda)?;
                Ok(aranda(self.lambda, x))
            }
            ActivationKind::Logit => Ok(logistic(x)),
            ActivationKind::Cloglog => Ok(cloglog(x)),
        }
    }

    pub fn eval_deriv(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        match self.kind {
            ActivationKind::ArandaFree | ActivationKind::ArandaFixed => {
                check_lambda(self.lambda)?;
                Ok(aranda_deriv(self.lambda, x))
            }
            ActivationKind::Logit => Ok(logistic_deriv(x)),
            ActivationKind::Cloglog => Ok(cloglog_deriv(x)),
        }
    }

    /// `1 − f(x)`, computed without cancellation.
    pub fn eval_complement(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        match self.kind {
            ActivationKind::ArandaFree | ActivationKind::ArandaFixed => {
                check_lambda(self.lambda)?;
                Ok((-softplus(x + self.lambda.ln()) / self.lambda).exp())
            }
            ActivationKind::Logit => Ok(logistic(-x)),
            ActivationKind::Cloglog => Ok((-x.exp()).exp()),
        }
    }

    /// Value and derivative without domain checks. Callers must have
    /// validated `self`; used on the network hot path.
    #[inline]
    pub(crate) fn value_and_deriv(&self, x: f64) -> (f64, f64) {
        match self.kind {
            ActivationKind::ArandaFree | ActivationKind::ArandaFixed => {
                let sp = softplus(x + self.lambda.ln());
                let value = -(-sp / self.lambda).exp_m1();
                let deriv = (x - sp * (1.0 + self.lambda) / self.lambda).exp();
                (value, deriv)
            }
            ActivationKind::Logit => (logistic(x), logistic_deriv(x)),
            ActivationKind::Cloglog => (cloglog(x), cloglog_deriv(x)),
        }
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::ArandaFree | ActivationKind::ArandaFixed => aranda(self.lambda, x),
            ActivationKind::Logit => logistic(x),
            ActivationKind::Cloglog => cloglog(x),
        }
    }
}

fn check_x(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("activation input {x} is not finite")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("λ must be finite and > 0, got {lambda}")))
    }
}

/// ln(1 + eᵗ) without overflow.
#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn aranda(lambda: f64, x: f64) -> f64 {
    -(-softplus(x + lambda.ln()) / lambda).exp_m1()
}

#[inline]
fn aranda_deriv(lambda: f64, x: f64) -> f64 {
    // (1 + λeˣ)^(−(1+λ)/λ) · eˣ
    (x - softplus(x + lambda.ln()) * (1.0 + lambda) / lambda).exp()
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn logistic_deriv(x: f64) -> f64 {
    let s = logistic(x);
    s * logistic(-x)
}

#[inline]
fn cloglog(x: f64) -> f64 {
    -(-x.exp()).exp_m1()
}

#[inline]
fn cloglog_deriv(x: f64) -> f64 {
    (x - x.exp()).exp()
}
