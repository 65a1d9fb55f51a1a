//! Decision thresholds on calibrated probabilities.
//!
//! Two thresholds are produced from operator inputs:
//!
//! * the cost-sensitive cutoff `τ* = C_FP / (C_FP + C_FN)`, applied with a
//!   strict `p > τ*` comparison;
//! * the conformal risk control cutoff
//!   `τ̂_α = inf { τ : n₀/(n₀+1)·FPR̂(τ) + 1/(n₀+1) ≤ α }` where `FPR̂(τ)` is the
//!   fraction of validation negatives scoring `≥ τ`, applied with `p ≥ τ̂_α`.
//!
//! The infimum is searched over the finite candidate set
//! `{0} ∪ scores ∪ {next_up(max score)} ∪ {1}` (restricted to `[0, 1]`). When
//! no candidate satisfies the bound the budget is infeasible and the rule is
//! "never alert".

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DecideError {
    #[error("costs must be positive and finite (C_FP = {fp}, C_FN = {fn_})")]
    InvalidCost { fp: f64, fn_: f64 },
    #[error("alert budget alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("no validation negatives to calibrate the budget on")]
    NoNegatives,
    #[error("validation score {0} is not finite")]
    NonFinite(f64),
}

/// Loss upper bound of the indicator loss.
pub const LOSS_BOUND: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub false_positive: f64,
    pub false_negative: f64,
}

impl CostSpec {
    pub fn new(false_positive: f64, false_negative: f64) -> Result<Self, DecideError> {
        let ok = |c: f64| c.is_finite() && c > 0.0;
        if !(ok(false_positive) && ok(false_negative)) {
            return Err(DecideError::InvalidCost {
                fp: false_positive,
                fn_: false_negative,
            });
        }
        Ok(Self {
            false_positive,
            false_negative,
        })
    }

    /// Costs with `C_FP = 1` and `C_FN = ratio`.
    pub fn from_ratio(ratio: f64) -> Result<Self, DecideError> {
        Self::new(1.0, ratio)
    }

    pub fn ratio(&self) -> f64 {
        self.false_negative / self.false_positive
    }
}

/// Bayes-optimal cutoff for a calibrated probability under asymmetric costs.
pub fn elkan_threshold(costs: &CostSpec) -> f64 {
    costs.false_positive / (costs.false_positive + costs.false_negative)
}

/// `2B / (n₀ + 1)`: how far the budget-controlled threshold may overshoot α.
pub fn overshoot_bound(n0: usize) -> f64 {
    2.0 * LOSS_BOUND / (n0 as f64 + 1.0)
}

/// Outcome of the budget-controlled threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrcThreshold {
    /// `None` when the budget is infeasible.
    pub tau: Option<f64>,
    pub alpha: f64,
    pub n0: usize,
}

impl CrcThreshold {
    pub fn feasible(&self) -> bool {
        self.tau.is_some()
    }
}

/// Left-hand side of the budget condition for `k` of `n0` negatives at or above τ.
fn adjusted_risk(k: usize, n0: usize) -> f64 {
    let n = n0 as f64;
    let fpr = k as f64 / n;
    n / (n + 1.0) * fpr + 1.0 / (n + 1.0)
}

pub fn crc_threshold(val_neg_scores: &[f64], alpha: f64) -> Result<CrcThreshold, DecideError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(DecideError::InvalidAlpha(alpha));
    }
    if val_neg_scores.is_empty() {
        return Err(DecideError::NoNegatives);
    }
    if let Some(&s) = val_neg_scores.iter().find(|s| !s.is_finite()) {
        return Err(DecideError::NonFinite(s));
    }
    let n0 = val_neg_scores.len();
    let mut sorted = val_neg_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let max = sorted[n0 - 1];

    let mut candidates: Vec<f64> = Vec::with_capacity(n0 + 3);
    candidates.push(0.0);
    candidates.extend(sorted.iter().copied().filter(|s| (0.0..=1.0).contains(s)));
    candidates.push(max.next_up());
    candidates.push(1.0);
    candidates.retain(|c| (0.0..=1.0).contains(c));
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // Risk is non-increasing in τ, so the first feasible candidate is the infimum.
    let tau = candidates.into_iter().find(|&tau| {
        let at_or_above = n0 - sorted.partition_point(|&s| s < tau);
        adjusted_risk(at_or_above, n0) <= alpha
    });
    Ok(CrcThreshold { tau, alpha, n0 })
}

/// Pre-deployment checks for the two ways the budget threshold can collapse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub alpha: f64,
    pub n0: usize,
    pub overshoot_bound: f64,
    /// `alpha > 2B/(n₀+1)`.
    pub overshoot_ok: bool,
    /// Validation negatives scoring at or above the chosen threshold.
    pub negatives_at_or_above: usize,
    /// Feasible, but no validation negative reaches the threshold.
    pub density_collapse: bool,
}

pub fn collapse_diagnostics(val_neg_scores: &[f64], alpha: f64, tau_crc: Option<f64>) -> CollapseReport {
    let n0 = val_neg_scores.len();
    let bound = overshoot_bound(n0);
    let at_or_above = tau_crc.map_or(0, |t| val_neg_scores.iter().filter(|&&s| s >= t).count());
    CollapseReport {
        alpha,
        n0,
        overshoot_bound: bound,
        overshoot_ok: alpha > bound,
        negatives_at_or_above: at_or_above,
        density_collapse: tau_crc.is_some() && at_or_above == 0,
    }
}

/// Threshold report as emitted to JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionThresholds {
    pub tau_star: f64,
    /// `None` (JSON `null`) when the budget is infeasible.
    pub tau_crc: Option<f64>,
    pub alpha: f64,
    pub n0: usize,
    pub overshoot_bound: f64,
    pub feasible: bool,
    pub density_collapse: bool,
}

impl DecisionThresholds {
    pub fn compute(costs: &CostSpec, val_neg_scores: &[f64], alpha: f64) -> Result<Self, DecideError> {
        let crc = crc_threshold(val_neg_scores, alpha)?;
        let report = collapse_diagnostics(val_neg_scores, alpha, crc.tau);
        Ok(Self {
            tau_star: elkan_threshold(costs),
            tau_crc: crc.tau,
            alpha,
            n0: crc.n0,
            overshoot_bound: report.overshoot_bound,
            feasible: crc.feasible(),
            density_collapse: report.density_collapse,
        })
    }
}

/// A concrete alerting rule with its tie convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "tau", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Cost-derived: event iff `p > τ`.
    Cost(f64),
    /// Budget-derived: event iff `p ≥ τ`.
    Budget(f64),
    /// Infeasible budget.
    Never,
}

impl ThresholdRule {
    pub fn is_event(&self, p: f64) -> bool {
        match *self {
            ThresholdRule::Cost(tau) => p > tau,
            ThresholdRule::Budget(tau) => p >= tau,
            ThresholdRule::Never => false,
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match *self {
            ThresholdRule::Cost(t) | ThresholdRule::Budget(t) => Some(t),
            ThresholdRule::Never => None,
        }
    }

    pub fn from_crc(tau_crc: Option<f64>) -> Self {
        tau_crc.map_or(ThresholdRule::Never, ThresholdRule::Budget)
    }

    /// The stricter of a cost rule and a budget rule. At equal τ the strict
    /// comparison wins.
    pub fn conservative(tau_star: f64, tau_crc: Option<f64>) -> Self {
        match tau_crc {
            None => ThresholdRule::Never,
            Some(t) if t > tau_star => ThresholdRule::Budget(t),
            Some(_) => ThresholdRule::Cost(tau_star),
        }
    }
}

/// Alert decision for one calibrated probability.
pub fn classify(p: f64, rule: ThresholdRule) -> bool {
    rule.is_event(p)
}
