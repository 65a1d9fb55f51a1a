//! Evaluation metrics for scored, labelled streams.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decide::ThresholdRule;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metric needs both classes present")]
    SingleClass,
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    Length { scores: usize, labels: usize },
    #[error("need at least one bin")]
    NoBins,
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::Length {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    Ok((pos, neg))
}

fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Average precision: `Σ (R_k − R_{k−1}) · P_k` over a descending sweep in
/// which tied scores form a single threshold.
pub fn auc_pr(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    let (pos, _) = check(scores, labels)?;
    let order = descending_order(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Mann–Whitney AUC: `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    let (pos, neg) = check(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks of positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        rank_sum += midrank * idx[i..j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieRule {
    /// Alert iff `score > tau`.
    Strict,
    /// Alert iff `score >= tau`.
    Inclusive,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_alerts(alerts: &[bool], labels: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&a, &y) in alerts.iter().zip(labels) {
            match (a, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn ratio(num: usize, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn precision(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> f64 {
        Self::ratio(self.fp, self.fp + self.tn)
    }

    pub fn alert_rate(&self) -> f64 {
        Self::ratio(self.tp + self.fp, self.total())
    }

    /// Zero when there are no alerts or no positives.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn summary(&self) -> ConfusionSummary {
        ConfusionSummary {
            alert_rate: self.alert_rate(),
            fpr: self.fpr(),
            recall: self.recall(),
            precision: self.precision(),
            f1: self.f1(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub alert_rate: f64,
    pub fpr: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

pub fn confusion_at(scores: &[f64], labels: &[bool], tau: f64, tie: TieRule) -> Confusion {
    let rule = match tie {
        TieRule::Strict => ThresholdRule::Cost(tau),
        TieRule::Inclusive => ThresholdRule::Budget(tau),
    };
    confusion_with(scores, labels, rule)
}

pub fn confusion_with(scores: &[f64], labels: &[bool], rule: ThresholdRule) -> Confusion {
    let alerts: Vec<bool> = scores.iter().map(|&s| rule.is_event(s)).collect();
    Confusion::from_alerts(&alerts, labels)
}

fn target(y: bool) -> f64 {
    if y {
        1.0
    } else {
        0.0
    }
}

pub fn brier(probs: &[f64], labels: &[bool]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - target(y)).powi(2))
        .sum::<f64>()
        / probs.len() as f64
}

pub const LOG_LOSS_EPS: f64 = 1e-15;

pub fn log_loss(probs: &[f64], labels: &[bool], eps: f64) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / probs.len() as f64
}

/// Equal-width bin of `p` on `[0, 1]`: `[i/b, (i+1)/b)`, last bin closed.
pub fn bin_index(p: f64, bins: usize) -> usize {
    let b = bins as f64;
    let mut i = ((p * b).floor().max(0.0) as usize).min(bins - 1);
    // Align with the edge values `i / b` exactly.
    if i > 0 && p < i as f64 / b {
        i -= 1;
    } else if i + 1 < bins && p >= (i + 1) as f64 / b {
        i += 1;
    }
    i
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    /// Mean predicted probability; `NaN`-free: 0 for empty bins.
    pub confidence: f64,
    /// Empirical positive rate; 0 for empty bins.
    pub accuracy: f64,
    pub count: usize,
}

impl ReliabilityBin {
    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

pub fn reliability_data(probs: &[f64], labels: &[bool], bins: usize) -> Result<Vec<ReliabilityBin>, MetricsError> {
    if bins == 0 {
        return Err(MetricsError::NoBins);
    }
    let mut sum_p = vec![0.0; bins];
    let mut sum_y = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (&p, &y) in probs.iter().zip(labels) {
        let i = bin_index(p, bins);
        sum_p[i] += p;
        sum_y[i] += target(y);
        count[i] += 1;
    }
    Ok((0..bins)
        .map(|i| {
            let n = count[i];
            let mean = |s: f64| if n == 0 { 0.0 } else { s / n as f64 };
            ReliabilityBin {
                lower: i as f64 / bins as f64,
                upper: (i + 1) as f64 / bins as f64,
                confidence: mean(sum_p[i]),
                accuracy: mean(sum_y[i]),
                count: n,
            }
        })
        .collect())
}

pub const ECE_BINS: usize = 15;

/// Expected calibration error `Σ (n_b / N) · |acc_b − conf_b|`.
pub fn ece(probs: &[f64], labels: &[bool], bins: usize) -> Result<f64, MetricsError> {
    let n = probs.len();
    if n == 0 {
        return if bins == 0 { Err(MetricsError::NoBins) } else { Ok(0.0) };
    }
    Ok(reliability_data(probs, labels, bins)?
        .iter()
        .map(|b| b.count as f64 / n as f64 * (b.accuracy - b.confidence).abs())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc_pr: Option<f64>,
    pub auc_roc: Option<f64>,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub alert_rate: f64,
    pub fpr: f64,
    pub brier: f64,
    pub ece: f64,
    pub log_loss: f64,
    pub prevalence: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Full report for calibrated probabilities under an alert rule. Ranking
/// metrics are `None` when a class is missing.
pub fn evaluate(probs: &[f64], labels: &[bool], rule: ThresholdRule) -> EvalReport {
    let alerts: Vec<bool> = probs.iter().map(|&p| rule.is_event(p)).collect();
    evaluate_alerts(probs, labels, &alerts)
}

/// As [`evaluate`], with the alert decisions supplied by the caller.
pub fn evaluate_alerts(probs: &[f64], labels: &[bool], alerts: &[bool]) -> EvalReport {
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    let c = Confusion::from_alerts(alerts, labels);
    EvalReport {
        auc_pr: auc_pr(probs, labels).ok(),
        auc_roc: auc_roc(probs, labels).ok(),
        f1: c.f1(),
        precision: c.precision(),
        recall: c.recall(),
        alert_rate: c.alert_rate(),
        fpr: c.fpr(),
        brier: brier(probs, labels),
        ece: ece(probs, labels, ECE_BINS).unwrap_or(0.0),
        log_loss: log_loss(probs, labels, LOG_LOSS_EPS),
        prevalence: if labels.is_empty() {
            0.0
        } else {
            n_pos as f64 / labels.len() as f64
        },
        n_pos,
        n_neg,
    }
}

/// Nearest-rank percentile of an unsorted sample (`q` in `[0, 100]`).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}
