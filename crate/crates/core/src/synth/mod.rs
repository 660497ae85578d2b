//! Synthetic event logs: a configurable process simulator and an anomaly
//! injector that records what it changed.

mod anomaly;
mod process;
pub mod rng;

pub use rng::SplitMix64;

pub use anomaly::{inject_anomalies, read_labels, Label, LabeledLog, Mutation};
pub use process::{
    AttributeRule, Choice, Guard, ProcessModel, Rule, Scope, Transition, EVENT_ID_COLUMN, TRACE_COLUMN,
};

use crate::error::Result;

/// Clean traces from `model`.
pub fn generate(model: &ProcessModel, n_traces: usize, seed: u64) -> Result<crate::EventLog> {
    model.generate(n_traces, seed)
}
