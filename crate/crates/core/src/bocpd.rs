//! Truncated Bayesian online change-point detection over flow feature vectors.
//!
//! # Model
//!
//! The detector keeps a posterior over the current run length `r` together
//! with diagonal-Gaussian sufficient statistics for every retained run-length
//! hypothesis. For a new observation `x` the joint (unnormalised) masses are
//!
//! ```text
//! joint(r + 1) = (1 - H) * w(r) * pred_r(x)      growth of hypothesis r
//! joint(0)     = H * pred_prior(x)               a new regime starts at x
//! ```
//!
//! where `pred_r` is the plug-in Gaussian predictive of hypothesis `r` (running
//! mean, sample variance floored at `variance_floor`; hypotheses with fewer
//! than two observations use the prior variance) and `pred_prior` uses the
//! configured prior mean and variance. Everything is computed in log space
//! with one log-sum-exp normalisation per update. The anomaly score is the
//! normalised mass at `r = 0`.
//!
//! Hypothesis `r` summarises the last `r` observations, so the fresh `r = 0`
//! hypothesis carries prior statistics only.
//!
//! # Truncation
//!
//! At most `L + 1` hypotheses (`r = 0..=L`) are retained. Growth out of the
//! `L` bucket saturates: the masses of the incoming `L - 1 -> L` hypothesis
//! and the existing `L` bucket are summed, and the bucket keeps the
//! statistics of whichever contributed the larger mass. Memory and per-update
//! work are therefore `O(L * d)`.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BocpdError {
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("observation has dimension {got}, detector expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("observation component {0} is not finite")]
    NonFinite(usize),
}

/// Mass below this (in linear space) for every joint term counts as underflow.
pub const UNDERFLOW_MASS: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BocpdConfig {
    /// Maximum retained run length `L`.
    pub max_run_length: usize,
    /// Constant per-flow hazard `H`.
    pub hazard: f64,
    pub variance_floor: f64,
    /// Number of initial flows flagged as warm-up (`W0`).
    pub warmup: usize,
    pub prior_mean: Vec<f64>,
    pub prior_var: Vec<f64>,
}

impl BocpdConfig {
    pub const DEFAULT_MAX_RUN_LENGTH: usize = 500;
    pub const DEFAULT_HAZARD: f64 = 1.0 / 1000.0;
    pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-4;
    pub const DEFAULT_WARMUP: usize = 30;

    /// Defaults for `dim` min-max scaled features: prior moments of `Uniform[0, 1]`.
    pub fn new(dim: usize) -> Self {
        Self {
            max_run_length: Self::DEFAULT_MAX_RUN_LENGTH,
            hazard: Self::DEFAULT_HAZARD,
            variance_floor: Self::DEFAULT_VARIANCE_FLOOR,
            warmup: Self::DEFAULT_WARMUP,
            prior_mean: vec![0.5; dim],
            prior_var: vec![1.0 / 12.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn validate(&self) -> Result<(), BocpdError> {
        let bad = |m: &str| Err(BocpdError::InvalidConfig(m.to_owned()));
        if !(self.hazard > 0.0 && self.hazard < 1.0) {
            return bad("hazard must lie in (0, 1)");
        }
        if self.max_run_length < 1 {
            return bad("max run length must be at least 1");
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return bad("variance floor must be positive");
        }
        if self.prior_mean.is_empty() {
            return bad("feature dimension must be at least 1");
        }
        if self.prior_mean.len() != self.prior_var.len() {
            return bad("prior mean and variance lengths differ");
        }
        if self.prior_mean.iter().any(|m| !m.is_finite()) {
            return bad("prior mean must be finite");
        }
        if self.prior_var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("prior variance must be positive");
        }
        Ok(())
    }
}

/// Running per-dimension mean and sum of squared deviations (Welford).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianStats {
    pub count: u64,
    pub mean: Vec<f64>,
    pub ssd: Vec<f64>,
}

impl GaussianStats {
    pub fn empty(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            ssd: vec![0.0; dim],
        }
    }

    fn reset(&mut self) {
        self.count = 0;
        self.mean.fill(0.0);
        self.ssd.fill(0.0);
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &xi) in self.mean.iter_mut().zip(self.ssd.iter_mut()).zip(x) {
            let delta = xi - *m;
            *m += delta / n;
            *s += delta * (xi - *m);
        }
    }

    /// Sample variance of dimension `j`, or `None` with fewer than two points.
    pub fn variance(&self, j: usize) -> Option<f64> {
        (self.count >= 2).then(|| self.ssd[j] / (self.count - 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Hypothesis {
    log_weight: f64,
    stats: GaussianStats,
}

/// Posterior over run lengths plus per-hypothesis statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLengthState {
    config: BocpdConfig,
    /// Index `r` holds run length `r`.
    hypotheses: VecDeque<Hypothesis>,
    /// Flows processed so far.
    t: u64,
    resets: u64,
    #[serde(skip)]
    scratch: Vec<f64>,
    log_prior_norm: f64,
}

/// Result of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub score: f64,
    /// True iff this flow fell inside the warm-up window.
    pub warmup: bool,
}

/// A scored flow as dumped for downstream calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredFlow {
    pub timestamp: f64,
    pub score: f64,
    pub label: Option<bool>,
    pub warmup: bool,
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * PI * var).ln() + d * d / var)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl RunLengthState {
    pub fn new(config: BocpdConfig) -> Result<Self, BocpdError> {
        config.validate()?;
        let dim = config.dim();
        let log_prior_norm = config
            .prior_var
            .iter()
            .map(|&v| -0.5 * (2.0 * PI * v.max(config.variance_floor)).ln())
            .sum();
        let mut hypotheses = VecDeque::with_capacity(config.max_run_length + 1);
        hypotheses.push_back(Hypothesis {
            log_weight: 0.0,
            stats: GaussianStats::empty(dim),
        });
        Ok(Self {
            config,
            hypotheses,
            t: 0,
            resets: 0,
            scratch: Vec::new(),
            log_prior_norm,
        })
    }

    pub fn config(&self) -> &BocpdConfig {
        &self.config
    }

    /// Flows processed.
    pub fn processed(&self) -> u64 {
        self.t
    }

    /// Number of underflow resets so far.
    pub fn resets(&self) -> u64 {
        self.resets
    }

    /// Number of retained hypotheses (`R + 1`).
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    /// Normalised posterior weights indexed by run length.
    pub fn weights(&self) -> Vec<f64> {
        self.hypotheses.iter().map(|h| h.log_weight.exp()).collect()
    }

    /// Observation count of each hypothesis, indexed by run length.
    pub fn counts(&self) -> Vec<u64> {
        self.hypotheses.iter().map(|h| h.stats.count).collect()
    }

    pub fn stats(&self, run_length: usize) -> Option<&GaussianStats> {
        self.hypotheses.get(run_length).map(|h| &h.stats)
    }

    /// Posterior mass on run lengths `0..=k`.
    pub fn anomaly_mass(&self, k: usize) -> f64 {
        self.hypotheses
            .iter()
            .take(k.saturating_add(1))
            .map(|h| h.log_weight.exp())
            .sum()
    }

    /// Current anomaly score `P(r = 0 | x_1..t)`.
    pub fn score(&self) -> f64 {
        self.anomaly_mass(0)
    }

    /// The per-dimension variance a hypothesis uses in its predictive density.
    pub fn predictive_variance(&self, stats: &GaussianStats, j: usize) -> f64 {
        stats
            .variance(j)
            .unwrap_or(self.config.prior_var[j])
            .max(self.config.variance_floor)
    }

    fn log_predictive(&self, stats: &GaussianStats, x: &[f64]) -> f64 {
        if stats.count == 0 {
            return self.log_prior_predictive(x);
        }
        x.iter()
            .enumerate()
            .map(|(j, &xj)| log_normal(xj, stats.mean[j], self.predictive_variance(stats, j)))
            .sum()
    }

    fn log_prior_predictive(&self, x: &[f64]) -> f64 {
        let quad: f64 = x
            .iter()
            .zip(&self.config.prior_mean)
            .zip(&self.config.prior_var)
            .map(|((&xj, &m), &v)| {
                let d = xj - m;
                d * d / v.max(self.config.variance_floor)
            })
            .sum();
        self.log_prior_norm - 0.5 * quad
    }

    /// Absorb one observation and return the anomaly score for it.
    pub fn update(&mut self, x: &[f64]) -> Result<Step, BocpdError> {
        let dim = self.config.dim();
        if x.len() != dim {
            return Err(BocpdError::Dimension {
                expected: dim,
                got: x.len(),
            });
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(BocpdError::NonFinite(j));
        }
        let warmup = self.t < self.config.warmup as u64;
        self.t += 1;

        let log_h = self.config.hazard.ln();
        let log_1mh = (-self.config.hazard).ln_1p();

        // Growth joints, index r -> run length r + 1.
        let mut growth = std::mem::take(&mut self.scratch);
        growth.clear();
        growth.extend(
            self.hypotheses
                .iter()
                .map(|h| h.log_weight + log_1mh + self.log_predictive(&h.stats, x)),
        );
        let change = log_h + self.log_prior_predictive(x);

        let max_joint = growth.iter().copied().fold(change, f64::max);
        if max_joint < UNDERFLOW_MASS.ln() {
            self.scratch = growth;
            self.reset_after_underflow();
            return Ok(Step { score: 1.0, warmup });
        }

        let cap = self.config.max_run_length + 1;
        let saturating = self.hypotheses.len() == cap;
        // Recycle the storage of the hypothesis that falls off the end.
        let mut fresh = if saturating {
            let last = self.hypotheses.pop_back().expect("non-empty");
            let into_l = growth[cap - 2];
            let stay_l = growth[cap - 1];
            let bucket = &mut self.hypotheses[cap - 2];
            bucket.log_weight = log_sum_exp([into_l, stay_l].into_iter());
            if stay_l > into_l {
                // The existing bucket keeps its statistics.
                let old = std::mem::replace(&mut bucket.stats, last.stats);
                Hypothesis {
                    log_weight: 0.0,
                    stats: old,
                }
            } else {
                last
            }
        } else {
            Hypothesis {
                log_weight: 0.0,
                stats: GaussianStats::empty(dim),
            }
        };
        let merged = saturating.then_some(cap - 2);
        for (r, h) in self.hypotheses.iter_mut().enumerate() {
            if Some(r) != merged {
                h.log_weight = growth[r];
            }
            h.stats.push(x);
        }
        fresh.stats.reset();
        fresh.log_weight = change;
        self.hypotheses.push_front(fresh);

        let norm = log_sum_exp(self.hypotheses.iter().map(|h| h.log_weight));
        for h in self.hypotheses.iter_mut() {
            h.log_weight -= norm;
        }
        self.scratch = growth;
        Ok(Step {
            score: self.score().clamp(0.0, 1.0),
            warmup,
        })
    }

    fn reset_after_underflow(&mut self) {
        self.resets += 1;
        let dim = self.config.dim();
        self.hypotheses.truncate(1);
        let h = &mut self.hypotheses[0];
        h.log_weight = 0.0;
        if h.stats.mean.len() != dim {
            h.stats = GaussianStats::empty(dim);
        } else {
            h.stats.reset();
        }
    }
}

/// Score a whole stream from a fresh state.
pub fn score_stream<'a>(
    config: &BocpdConfig,
    stream: impl IntoIterator<Item = (&'a [f64], f64, Option<bool>)>,
) -> Result<Vec<ScoredFlow>, BocpdError> {
    let mut state = RunLengthState::new(config.clone())?;
    stream
        .into_iter()
        .map(|(x, timestamp, label)| {
            let step = state.update(x)?;
            Ok(ScoredFlow {
                timestamp,
                score: step.score,
                label,
                warmup: step.warmup,
            })
        })
        .collect()
}
