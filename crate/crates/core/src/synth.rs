//! Seeded synthetic streams: mean-shift change points, burst/sustained
//! budget-event scenarios, and prevalence-controlled regimes.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::burnrate::BudgetConfig;
use crate::ingest::FlowRecord;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario kind {0:?} does not match the generator")]
    WrongKind(ScenarioKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    MeanShift,
    BurstAndSustained,
    RegimePrevalence,
}

/// Shape of the attack (post-change) feature distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackShape {
    /// Diagonal Gaussian with `attack_mean` / `attack_std`.
    Gaussian,
    /// Independent uniforms on `[0, 1]`; deliberately outside the model family.
    Uniform,
}

/// Budget-event timeline for the burst/sustained scenario. Times in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstParams {
    pub duration_minutes: f64,
    pub burst_start_minutes: f64,
    pub burst_minutes: f64,
    /// Events spread evenly over the burst; zero disables it.
    pub burst_events: usize,
    pub sustained_start_minutes: f64,
    /// Target burn rate of the sustained segment.
    pub sustained_burn: f64,
    /// Probability that an ordinary benign flow still crosses the threshold.
    pub background_event_prob: f64,
    pub budget: BudgetConfig,
}

impl Default for BurstParams {
    fn default() -> Self {
        Self {
            duration_minutes: 600.0,
            burst_start_minutes: 120.0,
            burst_minutes: 2.0,
            // 28.8× burn over a 5-minute window, 2.4× over an hour.
            burst_events: 2400,
            sustained_start_minutes: 300.0,
            sustained_burn: 18.0,
            background_event_prob: 0.001,
            budget: BudgetConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Number of flows (ignored by the burst scenario, which is time-driven).
    pub length: usize,
    pub dim: usize,
    /// Flow indices where the attack regime begins; strictly increasing.
    pub change_points: Vec<usize>,
    pub benign_mean: Vec<f64>,
    pub benign_std: Vec<f64>,
    pub attack_mean: Vec<f64>,
    pub attack_std: Vec<f64>,
    pub attack_shape: AttackShape,
    /// Probability that a benign flow comes from a wider noise component.
    pub benign_tail_prob: f64,
    /// Standard-deviation multiplier of that component.
    pub benign_tail_scale: f64,
    pub prevalence: f64,
    /// Consecutive attacks per block in regime streams (1 = isolated attacks).
    pub attack_block: usize,
    pub flows_per_second: f64,
    pub seed: u64,
    pub burst: BurstParams,
}

impl ScenarioSpec {
    fn base(kind: ScenarioKind, length: usize, dim: usize, seed: u64) -> Self {
        Self {
            kind,
            length,
            dim,
            change_points: Vec::new(),
            benign_mean: vec![0.4; dim],
            benign_std: vec![0.05; dim],
            attack_mean: vec![0.6; dim],
            attack_std: vec![0.05; dim],
            attack_shape: AttackShape::Gaussian,
            benign_tail_prob: 0.0,
            benign_tail_scale: 1.0,
            prevalence: 0.05,
            attack_block: 1,
            flows_per_second: 1.0,
            seed,
            burst: BurstParams::default(),
        }
    }

    /// One-dimensional stream whose mean jumps by `4σ` at `shift_at`.
    pub fn mean_shift(length: usize, shift_at: usize, seed: u64) -> Self {
        Self {
            change_points: vec![shift_at],
            ..Self::base(ScenarioKind::MeanShift, length, 1, seed)
        }
    }

    /// Benign flows with isolated attacks at rate `prevalence`.
    pub fn regime(length: usize, prevalence: f64, dim: usize, seed: u64) -> Self {
        Self {
            prevalence,
            attack_mean: vec![0.8; dim],
            ..Self::base(ScenarioKind::RegimePrevalence, length, dim, seed)
        }
    }

    /// Rare isolated attacks (5%) against benign traffic with a wider noise
    /// component: raw scores over-alert on benign noise, so calibration and
    /// the budget threshold both matter.
    pub fn rare_attack(length: usize, seed: u64) -> Self {
        Self {
            benign_tail_prob: 0.1,
            benign_tail_scale: 2.0,
            ..Self::regime(length, 0.05, 4, seed)
        }
    }

    /// Attack-dominated stream (64%) of tight, well-separated 20-dimensional
    /// clusters alternating in blocks. Every regime switch saturates the raw
    /// score at exactly 1, so validation negatives pile up at the top of the
    /// score range.
    pub fn base_rate_inversion(length: usize, seed: u64) -> Self {
        let dim = 20;
        Self {
            benign_mean: vec![0.3; dim],
            benign_std: vec![0.01; dim],
            attack_mean: vec![0.7; dim],
            attack_std: vec![0.01; dim],
            attack_block: 16,
            ..Self::regime(length, 0.64, dim, seed)
        }
    }

    pub fn burst_and_sustained(seed: u64) -> Self {
        Self::base(ScenarioKind::BurstAndSustained, 0, 1, seed)
    }

    /// Mean shift in units of the benign standard deviation (first dimension).
    pub fn shift_sigmas(&self) -> f64 {
        (self.attack_mean[0] - self.benign_mean[0]) / self.benign_std[0]
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.to_string()));
        if self.kind != ScenarioKind::BurstAndSustained {
            if self.length == 0 || self.dim == 0 {
                return bad("length and dim must be positive");
            }
            for (name, v) in [
                ("benign_mean", &self.benign_mean),
                ("benign_std", &self.benign_std),
                ("attack_mean", &self.attack_mean),
                ("attack_std", &self.attack_std),
            ] {
                if v.len() != self.dim || v.iter().any(|x| !x.is_finite()) {
                    return Err(SynthError::Invalid(format!(
                        "{name} must hold {} finite values",
                        self.dim
                    )));
                }
            }
            if self.benign_std.iter().chain(&self.attack_std).any(|&s| s < 0.0) {
                return bad("standard deviations must be non-negative");
            }
        }
        if !self.change_points.windows(2).all(|w| w[0] < w[1]) {
            return bad("change points must be strictly increasing");
        }
        if self.change_points.last().is_some_and(|&c| c >= self.length) {
            return bad("change points must lie inside the stream");
        }
        if !(0.0..=1.0).contains(&self.benign_tail_prob)
            || !(self.benign_tail_scale.is_finite() && self.benign_tail_scale > 0.0)
        {
            return bad("benign tail needs probability in [0, 1] and a positive scale");
        }
        if self.attack_block == 0 {
            return bad("attack_block must be positive");
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return bad("prevalence must lie in (0, 1)");
        }
        if !(self.flows_per_second > 0.0 && self.flows_per_second.is_finite()) {
            return bad("flows_per_second must be positive");
        }
        Ok(())
    }

    fn minutes(&self, index: usize) -> f64 {
        index as f64 / (60.0 * self.flows_per_second)
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    std_normal: Normal<f64>,
}

impl Sampler {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            std_normal: Normal::new(0.0, 1.0).expect("unit normal"),
        }
    }

    fn gaussian(&mut self, mean: &[f64], std: &[f64]) -> Vec<f64> {
        mean.iter()
            .zip(std)
            .map(|(&m, &s)| m + s * self.std_normal.sample(&mut self.rng))
            .collect()
    }

    fn benign(&mut self, spec: &ScenarioSpec) -> Vec<f64> {
        if spec.benign_tail_prob > 0.0 && self.rng.gen_bool(spec.benign_tail_prob) {
            let wide: Vec<f64> = spec.benign_std.iter().map(|s| s * spec.benign_tail_scale).collect();
            self.gaussian(&spec.benign_mean, &wide)
        } else {
            self.gaussian(&spec.benign_mean, &spec.benign_std)
        }
    }

    fn attack(&mut self, spec: &ScenarioSpec) -> Vec<f64> {
        match spec.attack_shape {
            AttackShape::Gaussian => self.gaussian(&spec.attack_mean, &spec.attack_std),
            AttackShape::Uniform => (0..spec.dim).map(|_| self.rng.gen::<f64>()).collect(),
        }
    }
}

fn expect_kind(spec: &ScenarioSpec, kind: ScenarioKind) -> Result<(), SynthError> {
    if spec.kind != kind {
        return Err(SynthError::WrongKind(spec.kind));
    }
    spec.validate()
}

/// Benign flows until the first change point, attack flows afterwards; each
/// further change point toggles the regime.
pub fn gen_mean_shift(spec: &ScenarioSpec) -> Result<Vec<FlowRecord>, SynthError> {
    expect_kind(spec, ScenarioKind::MeanShift)?;
    let mut sampler = Sampler::new(spec.seed);
    let mut attack = false;
    let mut next_cp = spec.change_points.iter().peekable();
    Ok((0..spec.length)
        .map(|i| {
            if next_cp.next_if(|&&c| c == i).is_some() {
                attack = !attack;
            }
            let features = if attack {
                sampler.attack(spec)
            } else {
                sampler.benign(spec)
            };
            FlowRecord {
                timestamp: spec.minutes(i),
                features,
                label: Some(attack),
            }
        })
        .collect())
}

/// Prevalence resolution used when placing attacks.
const PREVALENCE_SCALE: u64 = 1_000_000;

/// Attacks are placed evenly in blocks of `k = attack_block`: flow `i` is an
/// attack iff `frac(i·p/k) < p`, evaluated in integers on `p` rounded to
/// 1e-6 so boundary cases are exact. For `k = 1` this pins realised
/// prevalence to within one flow of `p · length`; larger blocks are within
/// `k` flows.
pub fn gen_regime(spec: &ScenarioSpec) -> Result<Vec<FlowRecord>, SynthError> {
    expect_kind(spec, ScenarioKind::RegimePrevalence)?;
    let mut sampler = Sampler::new(spec.seed);
    let k = spec.attack_block as u64;
    let scaled = (spec.prevalence * PREVALENCE_SCALE as f64).round() as u64;
    let period = k * PREVALENCE_SCALE;
    Ok((0..spec.length)
        .map(|i| {
            let attack = (i as u64 * scaled) % period < scaled * k;
            let features = if attack {
                sampler.attack(spec)
            } else {
                sampler.benign(spec)
            };
            FlowRecord {
                timestamp: spec.minutes(i),
                features,
                label: Some(attack),
            }
        })
        .collect())
}

/// One entry of a budget-event timeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetEvent {
    pub timestamp: f64,
    /// Threshold crossing (consumes budget).
    pub event: bool,
    /// Ground truth: part of the sustained attack.
    pub attack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstScenario {
    pub events: Vec<BudgetEvent>,
    /// `[start, end)` of the transient burst in minutes.
    pub burst_span: (f64, f64),
    pub sustained_start: f64,
    /// Sustained crossing rate in events per minute.
    pub sustained_rate: f64,
}

/// Benign flows at the base rate (rarely crossing the threshold), a short
/// burst of crossings, and a sustained segment whose crossing rate is the
/// burn-rate equation inverted for `sustained_burn`.
pub fn gen_burst_sustained(spec: &ScenarioSpec) -> Result<BurstScenario, SynthError> {
    expect_kind(spec, ScenarioKind::BurstAndSustained)?;
    let b = &spec.burst;
    let ordered = 0.0 <= b.burst_start_minutes
        && b.burst_minutes > 0.0
        && b.burst_start_minutes + b.burst_minutes <= b.sustained_start_minutes
        && b.sustained_start_minutes < b.duration_minutes;
    if !ordered || b.sustained_burn < 0.0 || !(0.0..=1.0).contains(&b.background_event_prob) {
        return Err(SynthError::Invalid("burst timeline out of order".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut events = Vec::new();

    let benign_n = (b.duration_minutes * 60.0 * spec.flows_per_second) as usize;
    for i in 0..benign_n {
        events.push(BudgetEvent {
            timestamp: spec.minutes(i),
            event: rng.gen_bool(b.background_event_prob),
            attack: false,
        });
    }
    let spread = |start: f64, span: f64, n: usize| (0..n).map(move |k| start + span * k as f64 / n as f64);
    for t in spread(b.burst_start_minutes, b.burst_minutes, b.burst_events) {
        events.push(BudgetEvent {
            timestamp: t,
            event: true,
            attack: false,
        });
    }
    let sustained_rate = b.sustained_burn * b.budget.rate();
    let span = b.duration_minutes - b.sustained_start_minutes;
    let n = (sustained_rate * span).round() as usize;
    for t in spread(b.sustained_start_minutes, span, n) {
        events.push(BudgetEvent {
            timestamp: t,
            event: true,
            attack: true,
        });
    }
    events.sort_by(|x, y| x.timestamp.total_cmp(&y.timestamp));
    Ok(BurstScenario {
        events,
        burst_span: (b.burst_start_minutes, b.burst_start_minutes + b.burst_minutes),
        sustained_start: b.sustained_start_minutes,
        sustained_rate,
    })
}

/// Writes `timestamp,f0..f{d-1},label`, readable with
/// `ColumnSchema::new("timestamp").with_label("label")`.
pub fn write_csv<W: Write>(records: &[FlowRecord], writer: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let dim = records.first().map_or(0, |r| r.features.len());
    let mut header = vec!["timestamp".to_string()];
    header.extend((0..dim).map(|j| format!("f{j}")));
    header.push("label".into());
    out.write_record(&header)?;
    for r in records {
        let mut row = vec![r.timestamp.to_string()];
        row.extend(r.features.iter().map(f64::to_string));
        row.push(match r.label {
            Some(true) => "1".into(),
            Some(false) => "0".into(),
            None => String::new(),
        });
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
