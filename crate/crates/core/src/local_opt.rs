//! Training cost, exact derivatives, and the two local refiners:
//! backpropagation with momentum and Levenberg-Marquardt.
//!
//! Both trainers only touch the weights and biases; an activation's λ is
//! carried through unchanged. With a non-empty validation set they stop on
//! `patience` consecutive validation increases or on the GL criterion,
//! whichever fires first, and hand back the validation-best parameters.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataprep::Patterns;
use crate::error::{Error, Result};
use crate::network::MlpParams;

/// A model fitted by least squares over a trainable parameter vector.
pub trait Trainable: Clone {
    fn input_len(&self) -> usize;
    fn trainable(&self) -> Vec<f64>;
    fn set_trainable(&mut self, theta: &[f64]);
    fn predict(&self, x: &[f64]) -> f64;
    /// Prediction plus `∂ŷ/∂θ` written into `grad` (length = trainable count).
    fn predict_with_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn trainable_count(&self) -> usize {
        self.trainable().len()
    }
}

impl Trainable for MlpParams {
    fn input_len(&self) -> usize {
        self.topology.inputs
    }

    fn trainable(&self) -> Vec<f64> {
        self.weights()
    }

    fn set_trainable(&mut self, theta: &[f64]) {
        self.set_weights(theta);
    }

    fn predict(&self, x: &[f64]) -> f64 {
        MlpParams::predict(self, x)
    }

    fn predict_with_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        MlpParams::predict_with_grad(self, x, grad)
    }

    fn trainable_count(&self) -> usize {
        self.topology.weight_count()
    }
}

/// `ŷ = w·x + b`. Used as the linear reference problem for the trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearUnit {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Trainable for LinearUnit {
    fn input_len(&self) -> usize {
        self.weights.len()
    }

    fn trainable(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.push(self.bias);
        v
    }

    fn set_trainable(&mut self, theta: &[f64]) {
        let n = self.weights.len();
        self.weights.copy_from_slice(&theta[..n]);
        self.bias = theta[n];
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    fn predict_with_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.weights.len();
        grad[..n].copy_from_slice(x);
        grad[n] = 1.0;
        self.predict(x)
    }
}

fn check_data<M: Trainable>(model: &M, data: &Patterns) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Data("empty data set".into()));
    }
    if data.inputs.len() != data.targets.len() {
        return Err(Error::Dimension {
            expected: data.targets.len(),
            got: data.inputs.len(),
            context: "pattern rows vs targets",
        });
    }
    if let Some(row) = data.inputs.iter().find(|r| r.len() != model.input_len()) {
        return Err(Error::Dimension {
            expected: model.input_len(),
            got: row.len(),
            context: "pattern width",
        });
    }
    Ok(())
}

fn mse<M: Trainable>(model: &M, data: &Patterns) -> f64 {
    let sse: f64 = data
        .inputs
        .iter()
        .zip(&data.targets)
        .map(|(x, t)| {
            let e = t - model.predict(x);
            e * e
        })
        .sum();
    sse / data.len() as f64
}

/// Mean squared error `(1/n) Σ (t − ŷ)²`.
pub fn cost<M: Trainable>(model: &M, data: &Patterns) -> Result<f64> {
    check_data(model, data)?;
    Ok(mse(model, data))
}

/// Exact gradient of [`cost`] over the trainable parameters.
pub fn gradient<M: Trainable>(model: &M, data: &Patterns) -> Result<Vec<f64>> {
    check_data(model, data)?;
    let d = model.trainable_count();
    let n = data.len() as f64;
    let mut grad = vec![0.0; d];
    let mut row = vec![0.0; d];
    for (x, t) in data.inputs.iter().zip(&data.targets) {
        let y = model.predict_with_grad(x, &mut row);
        let scale = -2.0 * (t - y) / n;
        for (g, r) in grad.iter_mut().zip(&row) {
            *g += scale * r;
        }
    }
    Ok(grad)
}

/// Residuals `r = t − ŷ` and their Jacobian `∂r/∂θ` (n × d).
pub fn jacobian<M: Trainable>(model: &M, data: &Patterns) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_data(model, data)?;
    let d = model.trainable_count();
    let mut jac = DMatrix::zeros(data.len(), d);
    let mut res = DVector::zeros(data.len());
    let mut row = vec![0.0; d];
    for (j, (x, t)) in data.inputs.iter().zip(&data.targets).enumerate() {
        let y = model.predict_with_grad(x, &mut row);
        res[j] = t - y;
        for (k, r) in row.iter().enumerate() {
            jac[(j, k)] = -r;
        }
    }
    Ok((jac, res))
}

/// GL early-stopping test: generalization loss `100·(last/min − 1)` above
/// `gl_threshold` percent.
pub fn gl5(val_history: &[f64], gl_threshold: f64) -> bool {
    let Some(&last) = val_history.last() else {
        return false;
    };
    let best = val_history.iter().copied().fold(f64::INFINITY, f64::min);
    if best <= 0.0 {
        return last > best;
    }
    100.0 * (last / best - 1.0) > gl_threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    Gl5,
    /// No further decrease possible (damping exhausted or divergence).
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpmConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    /// `None` disables the consecutive-increase rule.
    pub patience: Option<usize>,
    /// `None` disables the GL rule.
    pub gl_threshold: Option<f64>,
}

impl Default for BpmConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            momentum: 0.9,
            max_epochs: 10_000,
            patience: Some(5),
            gl_threshold: Some(5.0),
        }
    }
}

impl BpmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(
                "BPM needs learning_rate > 0 and 0 <= momentum < 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub mu0: f64,
    pub mu_up: f64,
    pub mu_down: f64,
    pub mu_max: f64,
    pub max_epochs: usize,
    pub patience: Option<usize>,
    pub gl_threshold: Option<f64>,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            mu0: 1e-3,
            mu_up: 10.0,
            mu_down: 10.0,
            mu_max: 1e10,
            max_epochs: 10_000,
            patience: Some(5),
            gl_threshold: Some(5.0),
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0) || !(self.mu_up > 1.0) || !(self.mu_down > 1.0) {
            return Err(Error::Config("LM needs mu0 > 0, mu_up > 1, mu_down > 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport<M> {
    pub model: M,
    pub epochs_run: usize,
    pub train_history: Vec<f64>,
    pub val_history: Vec<f64>,
    pub stop_reason: StopReason,
    /// Epoch whose parameters were returned (0 = the starting point).
    pub best_epoch: usize,
}

impl<M> TrainReport<M> {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_cost,val_cost\n");
        for (i, t) in self.train_history.iter().enumerate() {
            let v = self.val_history.get(i).map_or(String::new(), |v| format!("{v:e}"));
            out.push_str(&format!("{},{t:e},{v}\n", i + 1));
        }
        out
    }
}

/// Validation bookkeeping shared by both trainers.
struct Monitor<'a> {
    val: &'a Patterns,
    patience: Option<usize>,
    gl_threshold: Option<f64>,
    seen: Vec<f64>,
    best_theta: Vec<f64>,
    best_val: f64,
    best_epoch: usize,
    increases: usize,
}

impl<'a> Monitor<'a> {
    fn new<M: Trainable>(model: &M, val: &'a Patterns, patience: Option<usize>, gl: Option<f64>) -> Self {
        let mut m = Self {
            val,
            patience,
            gl_threshold: gl,
            seen: Vec::new(),
            best_theta: model.trainable(),
            best_val: f64::INFINITY,
            best_epoch: 0,
            increases: 0,
        };
        if m.active() {
            let v = mse(model, val);
            m.seen.push(v);
            m.best_val = v;
        }
        m
    }

    fn active(&self) -> bool {
        !self.val.is_empty()
    }

    /// Records the epoch's validation cost; returns a stop reason if one fires.
    fn observe<M: Trainable>(&mut self, model: &M, epoch: usize, history: &mut Vec<f64>) -> Option<StopReason> {
        if !self.active() {
            return None;
        }
        let v = mse(model, self.val);
        history.push(v);
        let prev = *self.seen.last().expect("seeded with the initial cost");
        self.seen.push(v);
        if v < self.best_val {
            self.best_val = v;
            self.best_theta = model.trainable();
            self.best_epoch = epoch;
        }
        self.increases = if v > prev { self.increases + 1 } else { 0 };
        if self.gl_threshold.is_some_and(|g| gl5(&self.seen, g)) {
            return Some(StopReason::Gl5);
        }
        if self.patience.is_some_and(|p| p > 0 && self.increases >= p) {
            return Some(StopReason::Patience);
        }
        None
    }

    fn finish<M: Trainable>(
        self,
        mut model: M,
        epochs_run: usize,
        train_history: Vec<f64>,
        val_history: Vec<f64>,
        stop_reason: StopReason,
    ) -> TrainReport<M> {
        let best_epoch = if self.active() {
            model.set_trainable(&self.best_theta);
            self.best_epoch
        } else {
            epochs_run
        };
        TrainReport {
            model,
            epochs_run,
            train_history,
            val_history,
            stop_reason,
            best_epoch,
        }
    }
}

/// Full-batch gradient descent with momentum:
/// `Δθₜ = −lr·∇E + momentum·Δθₜ₋₁`.
pub fn bpm_train<M: Trainable>(model: &M, train: &Patterns, val: &Patterns, config: &BpmConfig) -> Result<TrainReport<M>> {
    config.validate()?;
    check_data(model, train)?;
    if !val.is_empty() {
        check_data(model, val)?;
    }
    let mut model = model.clone();
    let mut monitor = Monitor::new(&model, val, config.patience, config.gl_threshold);
    let mut theta = model.trainable();
    let mut step = vec![0.0; theta.len()];
    let mut train_history = Vec::new();
    let mut val_history = Vec::new();
    let mut reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let grad = gradient(&model, train)?;
        for ((th, dt), g) in theta.iter_mut().zip(step.iter_mut()).zip(&grad) {
            *dt = -config.learning_rate * g + config.momentum * *dt;
            *th += *dt;
        }
        model.set_trainable(&theta);
        let c = mse(&model, train);
        train_history.push(c);
        if !c.is_finite() {
            reason = StopReason::Stalled;
            break;
        }
        if let Some(r) = monitor.observe(&model, epoch, &mut val_history) {
            reason = r;
            break;
        }
    }
    let epochs = train_history.len();
    Ok(monitor.finish(model, epochs, train_history, val_history, reason))
}

/// Levenberg-Marquardt: each epoch solves `(JᵀJ + μI)δ = Jᵀr` and moves to
/// `θ − δ` if that lowers the cost, otherwise raises μ and retries.
pub fn lm_train<M: Trainable>(model: &M, train: &Patterns, val: &Patterns, config: &LmConfig) -> Result<TrainReport<M>> {
    config.validate()?;
    check_data(model, train)?;
    if !val.is_empty() {
        check_data(model, val)?;
    }
    let mut model = model.clone();
    let mut monitor = Monitor::new(&model, val, config.patience, config.gl_threshold);
    let mut theta = DVector::from_vec(model.trainable());
    let mut current = mse(&model, train);
    if !current.is_finite() {
        return Err(Error::Numerical(format!("initial training cost is {current}")));
    }
    let mut mu = config.mu0;
    let mut train_history = Vec::new();
    let mut val_history = Vec::new();
    let mut reason = StopReason::MaxEpochs;
    let mut trial = model.clone();

    'epochs: for epoch in 1..=config.max_epochs {
        let (jac, res) = jacobian(&model, train)?;
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &res;
        loop {
            let mut damped = jtj.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += mu;
            }
            let accepted = damped.cholesky().and_then(|chol| {
                let delta = chol.solve(&jtr);
                let candidate = &theta - delta;
                trial.set_trainable(candidate.as_slice());
                let c = mse(&trial, train);
                (c < current).then_some((candidate, c))
            });
            match accepted {
                Some((candidate, c)) => {
                    theta = candidate;
                    current = c;
                    model.set_trainable(theta.as_slice());
                    mu = (mu / config.mu_down).max(f64::MIN_POSITIVE);
                    break;
                }
                None => {
                    mu *= config.mu_up;
                    if mu > config.mu_max {
                        reason = StopReason::Stalled;
                        break 'epochs;
                    }
                }
            }
        }
        train_history.push(current);
        if let Some(r) = monitor.observe(&model, epoch, &mut val_history) {
            reason = r;
            break;
        }
    }
    let epochs = train_history.len();
    Ok(monitor.finish(model, epochs, train_history, val_history, reason))
}
