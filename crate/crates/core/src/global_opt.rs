//! Hybrid simulated annealing / tabu search over a flat parameter vector.
//!
//! Each iteration draws `K` Gaussian neighbours of the current point,
//! drops those within `tabu_radius` of a recently visited point, and moves
//! to the pool's best under the Metropolis rule. The temperature follows a
//! logarithmic cooling rule, changing once every `iters_per_temp`
//! iterations. The best point ever visited is returned.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaTsConfig {
    pub t0: f64,
    pub iters_per_temp: usize,
    pub max_iter: usize,
    /// Candidates drawn per iteration.
    pub candidates: usize,
    pub tabu_len: usize,
    pub tabu_radius: f64,
    pub sigma_w: f64,
    /// Standard deviation of the multiplicative λ step in log space.
    pub sigma_lambda: f64,
    pub seed: u64,
}

impl Default for SaTsConfig {
    fn default() -> Self {
        Self {
            t0: 1.0,
            iters_per_temp: 10,
            max_iter: 10_000,
            candidates: 20,
            tabu_len: 50,
            tabu_radius: 1e-3,
            sigma_w: 0.1,
            sigma_lambda: 0.1,
            seed: 0,
        }
    }
}

impl SaTsConfig {
    pub const DESK_MAX_ITER: usize = 1_000;

    /// Default settings with the reduced 1,000-iteration budget.
    pub fn desk() -> Self {
        Self {
            max_iter: Self::DESK_MAX_ITER,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("SA+TS config: {m}")));
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return fail("t0 must be > 0");
        }
        if self.iters_per_temp == 0 || self.max_iter == 0 || self.candidates == 0 {
            return fail("iters_per_temp, max_iter and candidates must be >= 1");
        }
        if self.sigma_w < 0.0 || self.sigma_lambda < 0.0 || self.tabu_radius < 0.0 {
            return fail("perturbation scales and tabu radius must be non-negative");
        }
        Ok(())
    }
}

/// Location and admissible range of λ inside the search vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSlot {
    pub index: usize,
    pub min: f64,
    pub max: f64,
}

/// Multiplicative reduction applied when 1-based iteration `i` opens a new
/// temperature block: `1 / ln(⌊(i−1)/I_T⌋·I_T + e)`.
pub fn cooling_factor(i: usize, iters_per_temp: usize) -> f64 {
    assert!(i >= 1 && iters_per_temp >= 1);
    let block_start = ((i - 1) / iters_per_temp) * iters_per_temp;
    1.0 / (block_start as f64 + std::f64::consts::E).ln()
}

/// Temperature in effect at each 1-based iteration `1..=n`.
pub fn temperature_trace(t0: f64, iters_per_temp: usize, n: usize) -> Vec<f64> {
    let mut t = t0;
    (1..=n)
        .map(|i| {
            if opens_block(i, iters_per_temp) {
                t *= cooling_factor(i, iters_per_temp);
            }
            t
        })
        .collect()
}

fn opens_block(i: usize, iters_per_temp: usize) -> bool {
    i > 1 && (i - 1).is_multiple_of(iters_per_temp)
}

/// Bounded FIFO of recently visited points.
#[derive(Debug, Clone)]
pub struct TabuList {
    entries: VecDeque<Vec<f64>>,
    capacity: usize,
    radius: f64,
}

impl TabuList {
    pub fn new(capacity: usize, radius: f64) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
            radius,
        }
    }

    pub fn push(&mut self, v: Vec<f64>) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(v);
    }

    /// True when `v` lies strictly within `radius` (Euclidean) of an entry.
    pub fn contains(&self, v: &[f64]) -> bool {
        let r2 = self.radius * self.radius;
        self.entries.iter().any(|e| {
            e.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < r2
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.entries.back().map(Vec::as_slice)
    }
}

/// Gaussian neighbour of `current`: additive on weights, multiplicative
/// (log-space) and clamped on λ.
pub fn propose<R: Rng + ?Sized>(
    current: &[f64],
    config: &SaTsConfig,
    lambda: Option<LambdaSlot>,
    rng: &mut R,
) -> Vec<f64> {
    current
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let z: f64 = rng.sample(StandardNormal);
            match lambda {
                Some(slot) if slot.index == i => {
                    (v.ln() + config.sigma_lambda * z).exp().clamp(slot.min, slot.max)
                }
                _ => v + config.sigma_w * z,
            }
        })
        .collect()
}

/// Metropolis rule for minimization: improvements always pass, a worsening
/// `delta` passes with probability `exp(−delta / t)`.
pub fn metropolis_accept<R: Rng + ?Sized>(delta: f64, t: f64, rng: &mut R) -> bool {
    if delta < 0.0 {
        return true;
    }
    let p = if t > 0.0 {
        (-delta / t).exp()
    } else if delta == 0.0 {
        1.0
    } else {
        0.0
    };
    rng.random::<f64>() < p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub temperature: f64,
    pub current_cost: f64,
    pub best_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: Solution,
    pub history: Vec<IterationRecord>,
    /// Set when the stop hook ended the search before `max_iter`.
    pub stopped_early: bool,
}

impl SearchOutcome {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iteration,temperature,current_cost,best_cost\n");
        for r in &self.history {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e}",
                r.iteration, r.temperature, r.current_cost, r.best_cost
            );
        }
        out
    }
}

type StopHook<'a> = Box<dyn FnMut(&Solution) -> bool + 'a>;

/// Configured search. The optional stop hook is consulted with the
/// best-so-far solution each time the temperature changes.
pub struct SaTs<'a> {
    config: SaTsConfig,
    lambda: Option<LambdaSlot>,
    stop: Option<StopHook<'a>>,
}

impl<'a> SaTs<'a> {
    pub fn new(config: SaTsConfig) -> Self {
        Self {
            config,
            lambda: None,
            stop: None,
        }
    }

    pub fn with_lambda(mut self, slot: LambdaSlot) -> Self {
        self.lambda = Some(slot);
        self
    }

    pub fn with_stop(mut self, hook: impl FnMut(&Solution) -> bool + 'a) -> Self {
        self.stop = Some(Box::new(hook));
        self
    }

    pub fn optimize<F, R>(&mut self, cost_fn: F, init: &[f64], rng: &mut R) -> Result<SearchOutcome>
    where
        F: Fn(&[f64]) -> f64,
        R: Rng + ?Sized,
    {
        let cfg = self.config;
        cfg.validate()?;
        if let Some(slot) = self.lambda {
            if slot.index >= init.len() || !(init[slot.index] > 0.0) {
                return Err(Error::Config("λ slot out of range or non-positive".into()));
            }
        }
        let score = |v: &[f64]| {
            let c = cost_fn(v);
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        };

        let init_cost = cost_fn(init);
        if !init_cost.is_finite() {
            return Err(Error::Numerical(format!("initial cost is {init_cost}")));
        }
        let mut current = Solution {
            vector: init.to_vec(),
            cost: init_cost,
        };
        let mut best = current.clone();
        let mut tabu = TabuList::new(cfg.tabu_len, cfg.tabu_radius);
        let mut history = Vec::with_capacity(cfg.max_iter);
        let mut temperature = cfg.t0;
        let mut stopped_early = false;

        for i in 1..=cfg.max_iter {
            if opens_block(i, cfg.iters_per_temp) {
                temperature *= cooling_factor(i, cfg.iters_per_temp);
                if let Some(stop) = self.stop.as_mut() {
                    if stop(&best) {
                        stopped_early = true;
                        break;
                    }
                }
            }

            let mut pool_best: Option<Solution> = None;
            let mut fallback: Option<Solution> = None;
            for _ in 0..cfg.candidates {
                let vector = propose(&current.vector, &cfg, self.lambda, rng);
                let cost = score(&vector);
                let slot = if tabu.contains(&vector) {
                    &mut fallback
                } else {
                    &mut pool_best
                };
                if slot.as_ref().is_none_or(|s| cost < s.cost) {
                    *slot = Some(Solution { vector, cost });
                }
            }
            // all candidates tabu: take the best of them anyway
            let candidate = pool_best.or(fallback).expect("candidates >= 1");

            if metropolis_accept(candidate.cost - current.cost, temperature, rng) {
                current = candidate;
            }
            tabu.push(current.vector.clone());
            if current.cost < best.cost {
                best = current.clone();
            }
            history.push(IterationRecord {
                iteration: i,
                temperature,
                current_cost: current.cost,
                best_cost: best.cost,
            });
        }

        Ok(SearchOutcome {
            best,
            history,
            stopped_early,
        })
    }
}

/// Plain search without λ handling or stop hook.
pub fn optimize<F, R>(cost_fn: F, init: &[f64], config: &SaTsConfig, rng: &mut R) -> Result<SearchOutcome>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    SaTs::new(*config).optimize(cost_fn, init, rng)
}
