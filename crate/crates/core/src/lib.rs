//! Streaming alerting for network flow records.
//!
//! Flow feature vectors are scored by a truncated Bayesian online
//! change-point detector ([`bocpd`]), mapped to calibrated probabilities
//! ([`calibrate`]), thresholded with either a cost-derived or a
//! budget-controlled cutoff ([`decide`]), and escalated through paired
//! sliding-window burn rates ([`burnrate`]). [`pipeline`] wires the stages
//! together; [`metrics`] and [`synth`] support evaluation.

pub mod bocpd;
pub mod burnrate;
pub mod calibrate;
pub mod decide;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use bocpd::{BocpdConfig, RunLengthState, ScoredFlow};
pub use burnrate::{AlertLevel, AlertLevelConfig, BudgetConfig, BurnRateState};
pub use calibrate::{CalibrationMap, CalibratorKind};
pub use decide::{CostSpec, DecisionThresholds, ThresholdRule};
pub use ingest::{ColumnSchema, FlowRecord, PreprocessSpec, SplitIndices};
pub use pipeline::{PipelineConfig, Variant};
