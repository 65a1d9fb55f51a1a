//! End-to-end orchestration: score → calibrate → threshold → burn rate, plus
//! the four-variant ablation over a shared scoring pass.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bocpd::{BocpdConfig, BocpdError, RunLengthState, ScoredFlow};
use crate::burnrate::{AlertLevel, AlertLevelConfig, BudgetConfig, BurnRateError, BurnRateState};
use crate::calibrate::{self, CalibrationError, CalibrationMap, CalibratorKind};
use crate::decide::{overshoot_bound, CostSpec, DecideError, DecisionThresholds, ThresholdRule};
use crate::ingest::FlowRecord;
use crate::metrics::{self, EvalReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Bocpd(#[from] BocpdError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Decide(#[from] DecideError),
    #[error(transparent)]
    BurnRate(#[from] BurnRateError),
    #[error("variant {0} needs a labelled validation split")]
    Unlabeled(Variant),
    #[error("invalid pipeline config: {0}")]
    Config(String),
}

/// Ablation variants: which post-hoc layers sit on top of the shared scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Calibration + budget threshold.
    V1,
    /// Raw scores + budget threshold.
    V2,
    /// Calibration + cost threshold.
    V3,
    /// Raw scores + cost threshold.
    V4,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::V1, Variant::V2, Variant::V3, Variant::V4];

    pub fn calibrated(self) -> bool {
        matches!(self, Variant::V1 | Variant::V3)
    }

    pub fn uses_budget(self) -> bool {
        matches!(self, Variant::V1 | Variant::V2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::V1 => "V1",
            Variant::V2 => "V2",
            Variant::V3 => "V3",
            Variant::V4 => "V4",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "V1" => Ok(Variant::V1),
            "V2" => Ok(Variant::V2),
            "V3" => Ok(Variant::V3),
            "V4" => Ok(Variant::V4),
            _ => Err(format!("unknown variant {s:?} (expected V1..V4)")),
        }
    }
}

/// Which threshold drives alerts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// The variant's own threshold source.
    #[default]
    Variant,
    /// The stricter of the cost and budget thresholds.
    Conservative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub bocpd: BocpdConfig,
    /// Calibrator for the calibrated variants (V1, V3).
    pub calibrator: CalibratorKind,
    pub costs: CostSpec,
    pub alpha: f64,
    pub levels: Vec<AlertLevelConfig>,
    pub budget: BudgetConfig,
    pub variant: Variant,
    pub threshold_mode: ThresholdMode,
    /// Recorded in outputs; nothing in the pipeline is random.
    pub seed: u64,
}

impl PipelineConfig {
    /// Defaults: isotonic calibration, `C = 10`, `α = 0.01`, standard levels.
    pub fn new(dim: usize, variant: Variant) -> Self {
        Self {
            bocpd: BocpdConfig::new(dim),
            calibrator: CalibratorKind::Isotonic,
            costs: CostSpec::from_ratio(10.0).expect("valid ratio"),
            alpha: 0.01,
            levels: AlertLevelConfig::standard(),
            budget: BudgetConfig::default(),
            variant,
            threshold_mode: ThresholdMode::Variant,
            seed: 0,
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }

    /// Calibrator actually used by the configured variant.
    pub fn effective_calibrator(&self) -> CalibratorKind {
        if self.variant.calibrated() {
            self.calibrator
        } else {
            CalibratorKind::Identity
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.bocpd.validate()?;
        if self.variant.calibrated() && self.calibrator == CalibratorKind::Identity {
            return Err(PipelineError::Config(format!(
                "variant {} requires a fitted calibrator",
                self.variant
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(DecideError::InvalidAlpha(self.alpha).into());
        }
        BurnRateState::new(&self.levels)?;
        BudgetConfig::new(self.budget.events, self.budget.period_minutes)?;
        Ok(())
    }

    fn rule(&self, thresholds: &DecisionThresholds) -> ThresholdRule {
        match (self.threshold_mode, self.variant.uses_budget()) {
            (ThresholdMode::Conservative, _) => ThresholdRule::conservative(thresholds.tau_star, thresholds.tau_crc),
            (ThresholdMode::Variant, true) => ThresholdRule::from_crc(thresholds.tau_crc),
            (ThresholdMode::Variant, false) => ThresholdRule::Cost(thresholds.tau_star),
        }
    }
}

/// Calibration pairs from the scored validation flows (warm-up excluded).
fn calibration_pairs(validation: &[ScoredFlow]) -> Vec<(f64, bool)> {
    validation
        .iter()
        .filter(|f| !f.warmup)
        .filter_map(|f| f.label.map(|y| (f.score, y)))
        .collect()
}

/// Thresholds for one map; the budget side is skipped (reported infeasible
/// with `n0 = 0`) when there are no labelled validation negatives.
fn thresholds_for(
    map: &CalibrationMap,
    pairs: &[(f64, bool)],
    costs: &CostSpec,
    alpha: f64,
) -> Result<DecisionThresholds, PipelineError> {
    let negatives: Vec<f64> = pairs.iter().filter(|p| !p.1).map(|p| map.apply(p.0)).collect();
    if negatives.is_empty() {
        return Ok(DecisionThresholds {
            tau_star: crate::decide::elkan_threshold(costs),
            tau_crc: None,
            alpha,
            n0: 0,
            overshoot_bound: overshoot_bound(0),
            feasible: false,
            density_collapse: false,
        });
    }
    Ok(DecisionThresholds::compute(costs, &negatives, alpha)?)
}

/// Everything learned before the test stream starts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedModel {
    /// Detector state after streaming train and validation.
    pub state: RunLengthState,
    pub calibration: CalibrationMap,
    pub thresholds: DecisionThresholds,
    pub rule: ThresholdRule,
    /// Validation flows used for calibration.
    pub n_calibration: usize,
}

impl FittedModel {
    /// True when the variant's budget threshold was requested but none exists.
    pub fn budget_infeasible(&self, config: &PipelineConfig) -> bool {
        let budget_used = config.variant.uses_budget() || config.threshold_mode == ThresholdMode::Conservative;
        budget_used && self.thresholds.tau_crc.is_none()
    }
}

fn score_into(state: &mut RunLengthState, flows: &[FlowRecord], out: &mut Vec<ScoredFlow>) -> Result<(), BocpdError> {
    out.reserve(flows.len());
    for f in flows {
        let step = state.update(&f.features)?;
        out.push(ScoredFlow {
            timestamp: f.timestamp,
            score: step.score,
            label: f.label,
            warmup: step.warmup,
        });
    }
    Ok(())
}

/// Stream train then validation through one detector, fit the calibrator on
/// the validation scores, and derive both thresholds.
pub fn fit_phase(
    train: &[FlowRecord],
    validation: &[FlowRecord],
    config: &PipelineConfig,
) -> Result<FittedModel, PipelineError> {
    fit_phase_scored(train, validation, config).map(|(model, _)| model)
}

/// [`fit_phase`], also returning the per-flow validation scores.
pub fn fit_phase_scored(
    train: &[FlowRecord],
    validation: &[FlowRecord],
    config: &PipelineConfig,
) -> Result<(FittedModel, Vec<ScoredFlow>), PipelineError> {
    config.validate()?;
    let mut state = RunLengthState::new(config.bocpd.clone())?;
    for f in train {
        state.update(&f.features)?;
    }
    let mut scored = Vec::new();
    score_into(&mut state, validation, &mut scored)?;
    let pairs = calibration_pairs(&scored);

    let needs_labels = config.variant != Variant::V4 || config.threshold_mode == ThresholdMode::Conservative;
    if needs_labels && pairs.is_empty() {
        return Err(PipelineError::Unlabeled(config.variant));
    }
    let calibration = calibrate::fit(config.effective_calibrator(), &pairs)?;
    let thresholds = thresholds_for(&calibration, &pairs, &config.costs, config.alpha)?;
    if needs_labels && thresholds.n0 == 0 {
        return Err(DecideError::NoNegatives.into());
    }
    let model = FittedModel {
        rule: config.rule(&thresholds),
        state,
        calibration,
        thresholds,
        n_calibration: pairs.len(),
    };
    Ok((model, scored))
}

/// Per-flow pipeline output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOutcome {
    pub timestamp: f64,
    pub score: f64,
    pub probability: f64,
    /// Threshold crossing (budget-consuming event).
    pub event: bool,
    pub level: Option<AlertLevel>,
    pub warmup: bool,
    pub label: Option<bool>,
}

/// Log-bucketed latency histogram (about 1% relative resolution) so that
/// memory stays fixed however long the stream runs.
#[derive(Debug, Clone)]
pub struct LatencyHistogram {
    counts: Vec<u64>,
    total: u64,
    sum_ns: f64,
}

const LATENCY_GROWTH: f64 = 1.01;
const LATENCY_BUCKETS: usize = 2400; // 1 ns .. ~25 s

impl Default for LatencyHistogram {
    fn default() -> Self {
        Self {
            counts: vec![0; LATENCY_BUCKETS],
            total: 0,
            sum_ns: 0.0,
        }
    }
}

impl LatencyHistogram {
    pub fn record(&mut self, ns: f64) {
        let i = if ns <= 1.0 {
            0
        } else {
            ((ns.ln() / LATENCY_GROWTH.ln()) as usize + 1).min(LATENCY_BUCKETS - 1)
        };
        self.counts[i] += 1;
        self.total += 1;
        self.sum_ns += ns;
    }

    pub fn count(&self) -> u64 {
        self.total
    }

    /// Upper edge of the bucket holding the `q`-th percentile, in ns.
    pub fn percentile(&self, q: f64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let rank = ((q / 100.0) * self.total as f64).ceil().max(1.0) as u64;
        let mut seen = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            seen += c;
            if seen >= rank {
                return LATENCY_GROWTH.powi(i as i32);
            }
        }
        LATENCY_GROWTH.powi(LATENCY_BUCKETS as i32 - 1)
    }

    pub fn stats(&self, wall_seconds: f64) -> LatencyStats {
        LatencyStats {
            flows: self.total,
            p50_us: self.percentile(50.0) / 1e3,
            p95_us: self.percentile(95.0) / 1e3,
            p99_us: self.percentile(99.0) / 1e3,
            mean_us: if self.total == 0 {
                0.0
            } else {
                self.sum_ns / self.total as f64 / 1e3
            },
            events_per_second: if wall_seconds > 0.0 {
                self.total as f64 / wall_seconds
            } else {
                0.0
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub flows: u64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub mean_us: f64,
    pub events_per_second: f64,
}

/// Streaming deployment state. Memory is the detector's `O(L·d)` plus the
/// burn-rate event queue; nothing grows with the number of flows.
#[derive(Debug, Clone)]
pub struct Pipeline {
    state: RunLengthState,
    calibration: CalibrationMap,
    rule: ThresholdRule,
    burn: BurnRateState,
    levels: Vec<AlertLevelConfig>,
    budget: BudgetConfig,
    latency: LatencyHistogram,
    started: Option<Instant>,
}

impl Pipeline {
    pub fn new(fitted: FittedModel, config: &PipelineConfig) -> Result<Self, PipelineError> {
        Ok(Self {
            state: fitted.state,
            calibration: fitted.calibration,
            rule: fitted.rule,
            burn: BurnRateState::new(&config.levels)?,
            levels: config.levels.clone(),
            budget: config.budget,
            latency: LatencyHistogram::default(),
            started: None,
        })
    }

    pub fn detector(&self) -> &RunLengthState {
        &self.state
    }

    pub fn burn_state(&self) -> &BurnRateState {
        &self.burn
    }

    pub fn process(&mut self, flow: &FlowRecord) -> Result<FlowOutcome, PipelineError> {
        let start = Instant::now();
        self.started.get_or_insert(start);
        let step = self.state.update(&flow.features)?;
        let probability = self.calibration.apply(step.score);
        let event = !step.warmup && self.rule.is_event(probability);
        self.burn.record(flow.timestamp, event)?;
        let level = if step.warmup {
            None
        } else {
            self.burn.escalate(&self.levels, &self.budget)
        };
        self.latency.record(start.elapsed().as_nanos() as f64);
        Ok(FlowOutcome {
            timestamp: flow.timestamp,
            score: step.score,
            probability,
            event,
            level,
            warmup: step.warmup,
            label: flow.label,
        })
    }

    pub fn latency(&self) -> LatencyStats {
        let wall = self.started.map_or(0.0, |s| s.elapsed().as_secs_f64());
        self.latency.stats(wall)
    }
}

#[derive(Debug, Clone)]
pub struct StreamResult {
    pub outcomes: Vec<FlowOutcome>,
    pub latency: LatencyStats,
}

pub fn stream_phase(
    test: &[FlowRecord],
    fitted: FittedModel,
    config: &PipelineConfig,
) -> Result<StreamResult, PipelineError> {
    let mut pipeline = Pipeline::new(fitted, config)?;
    let outcomes = test
        .iter()
        .map(|f| pipeline.process(f))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StreamResult {
        outcomes,
        latency: pipeline.latency(),
    })
}

/// Test-split metrics from the emitted outcomes; `None` for unlabelled data.
pub fn evaluate_outcomes(outcomes: &[FlowOutcome]) -> Option<EvalReport> {
    let labels: Option<Vec<bool>> = outcomes.iter().map(|o| o.label).collect();
    let labels = labels?;
    let probs: Vec<f64> = outcomes.iter().map(|o| o.probability).collect();
    let alerts: Vec<bool> = outcomes.iter().map(|o| o.event).collect();
    Some(metrics::evaluate_alerts(&probs, &labels, &alerts))
}

/// Scores from one continuous pass over all three splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedScores {
    pub validation: Vec<ScoredFlow>,
    pub test: Vec<ScoredFlow>,
}

pub fn score_splits(
    train: &[FlowRecord],
    validation: &[FlowRecord],
    test: &[FlowRecord],
    config: &BocpdConfig,
) -> Result<SharedScores, PipelineError> {
    let mut state = RunLengthState::new(config.clone())?;
    for f in train {
        state.update(&f.features)?;
    }
    let mut val = Vec::new();
    score_into(&mut state, validation, &mut val)?;
    let mut tst = Vec::new();
    score_into(&mut state, test, &mut tst)?;
    Ok(SharedScores {
        validation: val,
        test: tst,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub alert_rate: f64,
    pub fpr: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// `None` when the budget threshold is infeasible.
    pub tau: Option<f64>,
    pub alerts: usize,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub thresholds: Vec<(Variant, DecisionThresholds)>,
    pub scores: SharedScores,
}

/// Evaluate `variants` post hoc on one shared scoring pass.
pub fn run_ablation(
    train: &[FlowRecord],
    validation: &[FlowRecord],
    test: &[FlowRecord],
    base: &PipelineConfig,
    variants: &[Variant],
) -> Result<AblationReport, PipelineError> {
    let scores = score_splits(train, validation, test, &base.bocpd)?;
    ablate_scores(scores, base, variants)
}

pub fn ablate_scores(
    scores: SharedScores,
    base: &PipelineConfig,
    variants: &[Variant],
) -> Result<AblationReport, PipelineError> {
    let pairs = calibration_pairs(&scores.validation);
    if pairs.is_empty() {
        return Err(PipelineError::Unlabeled(base.variant));
    }
    let labels: Vec<bool> = scores
        .test
        .iter()
        .map(|f| f.label.ok_or(PipelineError::Unlabeled(base.variant)))
        .collect::<Result<_, _>>()?;
    let calibrated = calibrate::fit(base.calibrator, &pairs)?;

    let mut rows = Vec::new();
    let mut thresholds = Vec::new();
    for &variant in variants {
        let config = base.with_variant(variant);
        config.validate()?;
        let map = if variant.calibrated() {
            calibrated.clone()
        } else {
            CalibrationMap::Identity
        };
        let t = thresholds_for(&map, &pairs, &config.costs, config.alpha)?;
        if t.n0 == 0 {
            return Err(DecideError::NoNegatives.into());
        }
        let rule = config.rule(&t);
        let alerts: Vec<bool> = scores
            .test
            .iter()
            .map(|f| !f.warmup && rule.is_event(map.apply(f.score)))
            .collect();
        let c = metrics::Confusion::from_alerts(&alerts, &labels);
        rows.push(AblationRow {
            variant,
            alert_rate: c.alert_rate(),
            fpr: c.fpr(),
            recall: c.recall(),
            precision: c.precision(),
            f1: c.f1(),
            tau: rule.tau(),
            alerts: c.tp + c.fp,
        });
        thresholds.push((variant, t));
    }
    Ok(AblationReport {
        rows,
        thresholds,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::chronological_split;
    use crate::synth::{gen_regime, ScenarioSpec};

    fn regime(n: usize, p: f64, seed: u64) -> (Vec<FlowRecord>, Vec<FlowRecord>, Vec<FlowRecord>) {
        let flows = gen_regime(&ScenarioSpec::regime(n, p, 4, seed)).unwrap();
        let ts: Vec<f64> = flows.iter().map(|f| f.timestamp).collect();
        let split = chronological_split(&ts, crate::ingest::DEFAULT_SPLIT).unwrap();
        (
            flows[split.train()].to_vec(),
            flows[split.validation()].to_vec(),
            flows[split.test()].to_vec(),
        )
    }

    #[test]
    fn variant_table() {
        let expect = [
            (Variant::V1, true, true),
            (Variant::V2, false, true),
            (Variant::V3, true, false),
            (Variant::V4, false, false),
        ];
        for (v, cal, budget) in expect {
            assert_eq!((v.calibrated(), v.uses_budget()), (cal, budget));
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        let c = PipelineConfig::new(2, Variant::V2);
        assert_eq!(c.effective_calibrator(), CalibratorKind::Identity);
        assert_eq!(
            c.with_variant(Variant::V3).effective_calibrator(),
            CalibratorKind::Isotonic
        );
        let bad = PipelineConfig {
            calibrator: CalibratorKind::Identity,
            ..PipelineConfig::new(2, Variant::V1)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn v4_uses_cost_threshold_on_raw_scores() {
        let (tr, va, te) = regime(3000, 0.05, 1);
        let unlabeled: Vec<FlowRecord> = va
            .iter()
            .map(|f| FlowRecord {
                label: None,
                ..f.clone()
            })
            .collect();
        let config = PipelineConfig::new(4, Variant::V4);
        let fitted = fit_phase(&tr, &unlabeled, &config).unwrap();
        assert_eq!(fitted.calibration, CalibrationMap::Identity);
        assert_eq!(fitted.rule, ThresholdRule::Cost(1.0 / 11.0));
        assert!(!fitted.budget_infeasible(&config));
        let out = stream_phase(&te, fitted, &config).unwrap();
        assert_eq!(out.outcomes.len(), te.len());
        assert!(out.outcomes.iter().all(|o| o.probability == o.score));

        let v1 = PipelineConfig::new(4, Variant::V1);
        assert!(matches!(
            fit_phase(&tr, &unlabeled, &v1),
            Err(PipelineError::Unlabeled(Variant::V1))
        ));
    }

    #[test]
    fn small_validation_budget_is_infeasible() {
        // 50 validation negatives cannot support α = 0.01 < 1/51.
        let (tr, va, _) = regime(3000, 0.05, 2);
        let mut va: Vec<FlowRecord> = va.into_iter().filter(|f| f.label == Some(true)).collect();
        let negs: Vec<FlowRecord> = tr
            .iter()
            .rev()
            .filter(|f| f.label == Some(false))
            .take(50)
            .cloned()
            .collect();
        va.extend(negs);
        va.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let config = PipelineConfig::new(4, Variant::V1);
        let fitted = fit_phase(&tr, &va, &config).unwrap();
        assert_eq!(fitted.thresholds.n0, 50);
        assert_eq!(fitted.rule, ThresholdRule::Never);
        assert!(fitted.budget_infeasible(&config));
    }

    #[test]
    fn warmup_flows_never_alert() {
        let (_, _, te) = regime(3000, 0.3, 3);
        let mut config = PipelineConfig::new(4, Variant::V4);
        config.costs = CostSpec::from_ratio(1e9).unwrap();
        // Train and validation empty of labels is fine for V4; stream test cold.
        let fitted = fit_phase(&[], &[], &config).unwrap();
        let out = stream_phase(&te, fitted, &config).unwrap();
        let w = config.bocpd.warmup;
        assert!(out.outcomes[..w]
            .iter()
            .all(|o| o.warmup && !o.event && o.level.is_none()));
        assert!(out.outcomes[w..].iter().all(|o| !o.warmup));
        assert!(out.outcomes[w..].iter().any(|o| o.event));
    }

    #[test]
    fn pipeline_is_deterministic() {
        let (tr, va, te) = regime(4000, 0.05, 4);
        let config = PipelineConfig::new(4, Variant::V1);
        let run = || {
            let fitted = fit_phase(&tr, &va, &config).unwrap();
            stream_phase(&te, fitted, &config).unwrap().outcomes
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn ablation_shares_scores_with_the_streaming_path() {
        let (tr, va, te) = regime(4000, 0.05, 5);
        let base = PipelineConfig::new(4, Variant::V1);
        let report = run_ablation(&tr, &va, &te, &base, &Variant::ALL).unwrap();
        assert_eq!(report.rows.len(), 4);
        let fitted = fit_phase(&tr, &va, &base).unwrap();
        let streamed = stream_phase(&te, fitted, &base).unwrap();
        for (a, b) in report.scores.test.iter().zip(&streamed.outcomes) {
            assert_eq!(a.score.to_bits(), b.score.to_bits());
        }
        let v1 = report.rows[0];
        let alerts = streamed.outcomes.iter().filter(|o| o.event).count();
        assert_eq!(v1.alerts, alerts);

        let subset = run_ablation(&tr, &va, &te, &base, &[Variant::V1, Variant::V4]).unwrap();
        assert_eq!(subset.rows.len(), 2);
        assert_eq!(subset.rows[1], report.rows[3]);
    }

    #[test]
    fn conservative_mode_takes_the_stricter_rule() {
        let (tr, va, _) = regime(4000, 0.05, 6);
        let mut config = PipelineConfig::new(4, Variant::V3);
        config.threshold_mode = ThresholdMode::Conservative;
        let fitted = fit_phase(&tr, &va, &config).unwrap();
        let t = fitted.thresholds;
        assert_eq!(fitted.rule, ThresholdRule::conservative(t.tau_star, t.tau_crc));
    }

    #[test]
    fn histogram_percentiles() {
        let mut h = LatencyHistogram::default();
        for ns in 1..=1000 {
            h.record(ns as f64 * 1000.0);
        }
        let p50 = h.percentile(50.0);
        assert!((p50 / 500_000.0 - 1.0).abs() < 0.011, "{p50}");
        let p99 = h.percentile(99.0);
        assert!((p99 / 990_000.0 - 1.0).abs() < 0.011, "{p99}");
        assert_eq!(h.count(), 1000);
    }
}
