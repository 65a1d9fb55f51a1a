//! Multi-window burn-rate escalation of threshold-crossing events.
//!
//! The burn rate of a window `w` is `b_w = (e_w / |w|) / (B / T)`: the event
//! rate observed in the window relative to the sustainable budget rate. An
//! alert level fires when both its long and its short window burn strictly
//! faster than its threshold β. Windows are evaluated on stream event time
//! and cover the half-open interval `(now - |w|, now]`.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BurnRateError {
    #[error("time went backwards: {timestamp} < {now}")]
    TimeRegression { timestamp: f64, now: f64 },
    #[error("invalid burn-rate config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetConfig {
    /// Allowed threshold-crossing events per SLO period (`B`).
    pub events: f64,
    /// SLO period in minutes (`T`).
    pub period_minutes: f64,
}

impl BudgetConfig {
    pub fn new(events: f64, period_minutes: f64) -> Result<Self, BurnRateError> {
        if !(events > 0.0 && events.is_finite() && period_minutes > 0.0 && period_minutes.is_finite()) {
            return Err(BurnRateError::InvalidConfig(format!(
                "budget needs B > 0 and T > 0, got B = {events}, T = {period_minutes}"
            )));
        }
        Ok(Self { events, period_minutes })
    }

    /// Sustainable events per minute.
    pub fn rate(&self) -> f64 {
        self.events / self.period_minutes
    }
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            events: 1000.0,
            period_minutes: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlertLevel {
    PageFast,
    PageSlow,
    Ticket,
}

impl AlertLevel {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlertLevel::PageFast => "page-fast",
            AlertLevel::PageSlow => "page-slow",
            AlertLevel::Ticket => "ticket",
        }
    }

    pub fn is_page(&self) -> bool {
        matches!(self, AlertLevel::PageFast | AlertLevel::PageSlow)
    }
}

impl fmt::Display for AlertLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlertLevelConfig {
    pub level: AlertLevel,
    pub long_minutes: f64,
    pub short_minutes: f64,
    /// Burn threshold β.
    pub threshold: f64,
}

impl AlertLevelConfig {
    pub fn validate(&self) -> Result<(), BurnRateError> {
        if !(self.short_minutes > 0.0 && self.short_minutes < self.long_minutes && self.long_minutes.is_finite()) {
            return Err(BurnRateError::InvalidConfig(format!(
                "{}: need 0 < short < long, got short = {}, long = {}",
                self.level, self.short_minutes, self.long_minutes
            )));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(BurnRateError::InvalidConfig(format!(
                "{}: burn threshold must be positive",
                self.level
            )));
        }
        Ok(())
    }

    /// The standard three-level window set, in escalation order.
    pub fn standard() -> Vec<AlertLevelConfig> {
        vec![
            AlertLevelConfig {
                level: AlertLevel::PageFast,
                long_minutes: 60.0,
                short_minutes: 5.0,
                threshold: 14.4,
            },
            AlertLevelConfig {
                level: AlertLevel::PageSlow,
                long_minutes: 360.0,
                short_minutes: 30.0,
                threshold: 6.0,
            },
            AlertLevelConfig {
                level: AlertLevel::Ticket,
                long_minutes: 4320.0,
                short_minutes: 360.0,
                threshold: 1.0,
            },
        ]
    }
}

pub fn burn_rate(events: usize, window_minutes: f64, budget: &BudgetConfig) -> f64 {
    // (e / |w|) / (B / T) with a single rounding step.
    (events as f64 * budget.period_minutes) / (window_minutes * budget.events)
}

/// Burn rates of one level at the current time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelReading {
    pub level: AlertLevel,
    pub short_burn: f64,
    pub long_burn: f64,
    pub firing: bool,
}

/// Retained event timestamps covering the longest window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurnRateState {
    events: VecDeque<f64>,
    horizon_minutes: f64,
    now: f64,
}

impl BurnRateState {
    /// `levels` must be non-empty and valid; the retention horizon is the
    /// longest long window.
    pub fn new(levels: &[AlertLevelConfig]) -> Result<Self, BurnRateError> {
        if levels.is_empty() {
            return Err(BurnRateError::InvalidConfig("no alert levels".into()));
        }
        for l in levels {
            l.validate()?;
        }
        let horizon_minutes = levels.iter().map(|l| l.long_minutes).fold(0.0, f64::max);
        Ok(Self {
            events: VecDeque::new(),
            horizon_minutes,
            now: f64::NEG_INFINITY,
        })
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Retained event count.
    pub fn retained(&self) -> usize {
        self.events.len()
    }

    /// Advance to `timestamp` and append an event when `event` is set.
    pub fn record(&mut self, timestamp: f64, event: bool) -> Result<(), BurnRateError> {
        self.advance(timestamp)?;
        if event {
            self.events.push_back(timestamp);
        }
        Ok(())
    }

    /// Move the clock forward and evict events older than the horizon.
    pub fn advance(&mut self, timestamp: f64) -> Result<(), BurnRateError> {
        if timestamp < self.now || timestamp.is_nan() {
            return Err(BurnRateError::TimeRegression {
                timestamp,
                now: self.now,
            });
        }
        self.now = timestamp;
        let cutoff = self.now - self.horizon_minutes;
        while self.events.front().is_some_and(|&t| t <= cutoff) {
            self.events.pop_front();
        }
        Ok(())
    }

    /// Events in `(now - window, now]`.
    pub fn count_in(&self, window_minutes: f64) -> usize {
        let cutoff = self.now - window_minutes;
        self.events.len() - self.events.partition_point(|&t| t <= cutoff)
    }

    pub fn readings(&self, levels: &[AlertLevelConfig], budget: &BudgetConfig) -> Vec<LevelReading> {
        levels
            .iter()
            .map(|l| {
                let short_burn = burn_rate(self.count_in(l.short_minutes), l.short_minutes, budget);
                let long_burn = burn_rate(self.count_in(l.long_minutes), l.long_minutes, budget);
                LevelReading {
                    level: l.level,
                    short_burn,
                    long_burn,
                    firing: short_burn > l.threshold && long_burn > l.threshold,
                }
            })
            .collect()
    }

    /// First level, in configuration order, whose two windows both exceed β.
    pub fn escalate(&self, levels: &[AlertLevelConfig], budget: &BudgetConfig) -> Option<AlertLevel> {
        self.readings(levels, budget)
            .into_iter()
            .find(|r| r.firing)
            .map(|r| r.level)
    }
}
