//! Post-hoc calibration of raw scores into probabilities.
//!
//! Isotonic maps are fitted with pool-adjacent-violators on (score, label)
//! pairs and stored as a right-continuous step function over sorted
//! breakpoints, so a query is a binary search. Platt maps fit `σ(a·s + b)` by
//! damped Newton on the binary log-loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("no calibration pairs")]
    Empty,
    #[error("calibration pairs contain a single class")]
    SingleClass,
    #[error("score {0} is not finite")]
    NonFinite(f64),
    #[error("malformed calibration map: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibratorKind {
    Isotonic,
    Platt,
    Identity,
}

/// A fitted score-to-probability map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", try_from = "RawMap")]
pub enum CalibrationMap {
    Identity,
    Isotonic {
        /// Strictly increasing block start scores.
        breakpoints: Vec<f64>,
        /// Non-decreasing fitted values in `[0, 1]`.
        values: Vec<f64>,
    },
    Platt {
        a: f64,
        b: f64,
        /// False when the Newton iteration stopped before the gradient tolerance.
        converged: bool,
    },
}

// Unvalidated mirror used for deserialisation.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawMap {
    Identity,
    Isotonic {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    Platt {
        a: f64,
        b: f64,
        #[serde(default = "yes")]
        converged: bool,
    },
}

fn yes() -> bool {
    true
}

impl TryFrom<RawMap> for CalibrationMap {
    type Error = CalibrationError;

    fn try_from(raw: RawMap) -> Result<Self, Self::Error> {
        let map = match raw {
            RawMap::Identity => CalibrationMap::Identity,
            RawMap::Isotonic { breakpoints, values } => CalibrationMap::Isotonic { breakpoints, values },
            RawMap::Platt { a, b, converged } => CalibrationMap::Platt { a, b, converged },
        };
        map.validate()?;
        Ok(map)
    }
}

impl CalibrationMap {
    pub fn kind(&self) -> CalibratorKind {
        match self {
            CalibrationMap::Identity => CalibratorKind::Identity,
            CalibrationMap::Isotonic { .. } => CalibratorKind::Isotonic,
            CalibrationMap::Platt { .. } => CalibratorKind::Platt,
        }
    }

    /// Check the structural invariants of the map.
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: &str| Err(CalibrationError::Malformed(m.to_owned()));
        match self {
            CalibrationMap::Identity => Ok(()),
            CalibrationMap::Isotonic { breakpoints, values } => {
                if breakpoints.is_empty() {
                    return bad("isotonic map has no breakpoints (unfitted)");
                }
                if breakpoints.len() != values.len() {
                    return bad("breakpoint and value counts differ");
                }
                if breakpoints.iter().any(|b| !b.is_finite()) {
                    return bad("non-finite breakpoint");
                }
                if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("breakpoints not strictly increasing");
                }
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return bad("fitted value outside [0, 1]");
                }
                if values.windows(2).any(|w| w[1] < w[0]) {
                    return bad("fitted values decrease");
                }
                Ok(())
            }
            CalibrationMap::Platt { a, b, .. } => {
                if a.is_finite() && b.is_finite() {
                    Ok(())
                } else {
                    bad("non-finite Platt parameters")
                }
            }
        }
    }

    /// Calibrated probability for a raw score.
    pub fn apply(&self, s: f64) -> f64 {
        match self {
            CalibrationMap::Identity => s.clamp(0.0, 1.0),
            CalibrationMap::Isotonic { breakpoints, values } => {
                // Index of the last breakpoint <= s; below the first one clamps.
                let idx = breakpoints.partition_point(|&b| b <= s);
                values[idx.saturating_sub(1)]
            }
            CalibrationMap::Platt { a, b, .. } => sigmoid(a * s + b),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn check_pairs(pairs: &[(f64, bool)]) -> Result<(), CalibrationError> {
    if pairs.is_empty() {
        return Err(CalibrationError::Empty);
    }
    if let Some(&(s, _)) = pairs.iter().find(|(s, _)| !s.is_finite()) {
        return Err(CalibrationError::NonFinite(s));
    }
    let positives = pairs.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == pairs.len() {
        return Err(CalibrationError::SingleClass);
    }
    Ok(())
}

/// Least-squares non-decreasing step fit. Pairs sharing a score are merged
/// into one weighted point before pooling.
pub fn fit_isotonic(pairs: &[(f64, bool)]) -> Result<CalibrationMap, CalibrationError> {
    check_pairs(pairs)?;
    let mut sorted: Vec<(f64, f64)> = pairs.iter().map(|&(s, y)| (s, if y { 1.0 } else { 0.0 })).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    struct Block {
        start: f64,
        sum: f64,
        weight: f64,
    }
    impl Block {
        fn mean(&self) -> f64 {
            self.sum / self.weight
        }
    }

    let mut blocks: Vec<Block> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let start = sorted[i].0;
        let mut sum = 0.0;
        let mut weight = 0.0;
        while i < sorted.len() && sorted[i].0 == start {
            sum += sorted[i].1;
            weight += 1.0;
            i += 1;
        }
        blocks.push(Block { start, sum, weight });
        while blocks.len() >= 2 {
            let n = blocks.len();
            if blocks[n - 2].mean() <= blocks[n - 1].mean() {
                break;
            }
            let last = blocks.pop().expect("len >= 2");
            let prev = blocks.last_mut().expect("len >= 1");
            prev.sum += last.sum;
            prev.weight += last.weight;
        }
    }

    let breakpoints = blocks.iter().map(|b| b.start).collect();
    let values = blocks.iter().map(|b| b.mean().clamp(0.0, 1.0)).collect();
    Ok(CalibrationMap::Isotonic { breakpoints, values })
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary log-loss of `σ(a·s + b)`.
pub fn platt_log_loss(pairs: &[(f64, bool)], a: f64, b: f64) -> f64 {
    let total: f64 = pairs
        .iter()
        .map(|&(s, y)| {
            let z = a * s + b;
            // -log σ(z) = softplus(-z), -log(1 - σ(z)) = softplus(z)
            if y {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    total / pairs.len() as f64
}

pub const PLATT_GRADIENT_TOL: f64 = 1e-8;
pub const PLATT_MAX_ITER: usize = 100;

/// Platt scaling by damped Newton from `a = 0, b = logit(prevalence)`.
///
/// The slope is constrained to `a >= 0` so the map is non-decreasing. The
/// loss is convex, so when the free optimum has a negative slope the
/// constrained optimum is the flat map `a = 0, b = logit(prevalence)`.
pub fn fit_platt(pairs: &[(f64, bool)]) -> Result<CalibrationMap, CalibrationError> {
    check_pairs(pairs)?;
    let n = pairs.len() as f64;
    let prevalence = pairs.iter().filter(|(_, y)| *y).count() as f64 / n;
    let flat_b = (prevalence / (1.0 - prevalence)).ln();
    let (mut a, mut b) = (0.0, flat_b);
    let mut loss = platt_log_loss(pairs, a, b);
    let mut converged = false;

    for _ in 0..PLATT_MAX_ITER {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(s, y) in pairs {
            let p = sigmoid(a * s + b);
            let r = p - if y { 1.0 } else { 0.0 };
            let w = p * (1.0 - p);
            ga += r * s;
            gb += r;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        let (ga, gb) = (ga / n, gb / n);
        if ga.hypot(gb) < PLATT_GRADIENT_TOL {
            converged = true;
            break;
        }
        // Small ridge keeps the Hessian invertible when scores are constant
        // or the data are separable.
        let ridge = 1e-12;
        let (haa, hab, hbb) = (haa / n + ridge, hab / n, hbb / n + ridge);
        let det = haa * hbb - hab * hab;
        let (mut da, mut db) = if det > 0.0 {
            ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
        } else {
            (ga, gb)
        };
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let (na, nb) = (a - step * da, b - step * db);
            let nl = platt_log_loss(pairs, na, nb);
            if nl <= loss {
                a = na;
                b = nb;
                improved = nl < loss;
                loss = nl;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            // Fall back to a gradient step once before giving up.
            da = ga;
            db = gb;
            let nl = platt_log_loss(pairs, a - da, b - db);
            if nl < loss {
                a -= da;
                b -= db;
                loss = nl;
            } else {
                break;
            }
        }
    }
    if a < 0.0 {
        return Ok(CalibrationMap::Platt {
            a: 0.0,
            b: flat_b,
            converged: true,
        });
    }
    Ok(CalibrationMap::Platt { a, b, converged })
}

pub fn fit(kind: CalibratorKind, pairs: &[(f64, bool)]) -> Result<CalibrationMap, CalibrationError> {
    match kind {
        CalibratorKind::Identity => Ok(CalibrationMap::Identity),
        CalibratorKind::Isotonic => fit_isotonic(pairs),
        CalibratorKind::Platt => fit_platt(pairs),
    }
}
