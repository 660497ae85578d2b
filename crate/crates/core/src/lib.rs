//! Anomaly detection in multi-attribute event logs with extended dynamic
//! Bayesian networks.
//!
//! The pipeline: parse a log ([`event_log`]), find functional dependencies
//! ([`fd`]), learn the conditional structure ([`bn_learn`]), assemble the
//! model ([`edbn`]) and score traces with it ([`detect`]). [`synth`] and
//! [`eval`] generate labelled logs and measure detection quality.

pub mod bn_learn;
pub mod detect;
pub mod edbn;
pub mod error;
pub mod eval;
pub mod event_log;
pub mod fd;
pub mod fixtures;
pub mod ratio;
pub mod stats;
pub mod synth;

pub use edbn::{fit_edbn, learn_edbn, EdbnModel};
pub use error::{EdbnError, Result};
pub use event_log::{build_k_context, parse_log, AttributeSchema, Event, EventLog, ParseOptions, Trace, Var};
