//! Trace scoring, ranking and score decomposition.
//!
//! The score of a trace is the geometric mean of its event probabilities, so
//! that traces of different length are comparable. Lower is more anomalous.

use std::cmp::Ordering;

use crate::edbn::{EdbnModel, EventProbability, FactorKind};
use crate::error::{EdbnError, Result};
use crate::event_log::{AttributeSchema, Event, EventLog, Trace};

#[derive(Debug, Clone, PartialEq)]
pub struct EventBreakdown {
    pub event_id: String,
    pub probability: EventProbability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceScore {
    pub trace_id: String,
    /// `exp(log_score)`, in `[0, 1]`.
    pub score: f64,
    /// Mean log event probability; `-inf` when some factor is zero.
    pub log_score: f64,
    pub event_count: usize,
    /// Number of factors that are exactly zero.
    pub zero_factors: usize,
    pub events: Vec<EventBreakdown>,
}

impl TraceScore {
    pub fn is_zero(&self) -> bool {
        self.log_score == f64::NEG_INFINITY
    }
}

/// Traces ordered from most to least anomalous.
#[derive(Debug, Clone, Default)]
pub struct Ranking {
    pub scores: Vec<TraceScore>,
}

impl Ranking {
    pub fn trace_ids(&self) -> Vec<&str> {
        self.scores.iter().map(|s| s.trace_id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn score_events(model: &EdbnModel, trace_id: &str, events: &[Event]) -> Result<TraceScore> {
    if events.is_empty() {
        return Err(EdbnError::invalid(format!("trace `{trace_id}` has no events")));
    }
    let probs = model.sequence_probabilities(events)?;
    let total: f64 = probs.iter().map(|p| p.log_probability).sum();
    let log_score = total / events.len() as f64;
    let zero_factors = probs.iter().flat_map(|p| &p.factors).filter(|f| f.value == 0.0).count();
    Ok(TraceScore {
        trace_id: trace_id.to_string(),
        score: log_score.exp(),
        log_score,
        event_count: events.len(),
        zero_factors,
        events: events
            .iter()
            .zip(probs)
            .map(|(e, probability)| EventBreakdown { event_id: e.id.clone(), probability })
            .collect(),
    })
}

pub fn score_trace(model: &EdbnModel, trace: &Trace) -> Result<TraceScore> {
    score_events(model, &trace.trace_id, &trace.events)
}

/// Scores an ongoing trace from the events seen so far.
pub fn score_prefix(model: &EdbnModel, trace_id: &str, events: &[Event]) -> Result<TraceScore> {
    score_events(model, trace_id, events)
}

/// Zero scores first (more zero factors first), then ascending score, ties
/// by trace id.
pub fn ranking_order(a: &TraceScore, b: &TraceScore) -> Ordering {
    match (a.is_zero(), b.is_zero()) {
        (true, true) => b.zero_factors.cmp(&a.zero_factors),
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (false, false) => a.log_score.total_cmp(&b.log_score),
    }
    .then_with(|| a.trace_id.cmp(&b.trace_id))
}

/// Scores every trace of `log` and sorts the results, most anomalous first.
pub fn rank_traces(model: &EdbnModel, log: &EventLog) -> Result<Ranking> {
    model.check_schema(log.schema())?;
    let traces = log.traces();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let chunk = traces.len().div_ceil(workers).max(1);
    let mut scores: Vec<TraceScore> = std::thread::scope(|s| {
        let handles: Vec<_> = traces
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|t| score_trace(model, t)).collect::<Result<Vec<_>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scoring thread panicked"))
            .collect::<Result<Vec<Vec<_>>>>()
    })?
    .into_iter()
    .flatten()
    .collect();
    scores.sort_by(ranking_order);
    Ok(Ranking { scores })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub event_id: String,
    pub event_index: usize,
    pub attr: usize,
    pub kind: FactorKind,
    pub contribution: f64,
}

impl Explanation {
    /// Attribute name and, for FD factors, the source variable.
    pub fn describe(&self, schema: &AttributeSchema) -> (String, String) {
        let attribute = schema.names()[self.attr].clone();
        let source = match self.kind {
            FactorKind::Functional { source } => source.display(schema).to_string(),
            _ => String::new(),
        };
        (attribute, source)
    }
}

/// The `top_n` smallest factors of a scored trace, ascending. Equal factors
/// keep (event, attribute, factor) order.
pub fn explain(score: &TraceScore, top_n: usize) -> Result<Vec<Explanation>> {
    if top_n == 0 {
        return Err(EdbnError::invalid("top_n must be at least 1"));
    }
    let mut all: Vec<Explanation> = score
        .events
        .iter()
        .enumerate()
        .flat_map(|(i, e)| {
            e.probability.factors.iter().map(move |f| Explanation {
                event_id: e.event_id.clone(),
                event_index: i,
                attr: f.attr,
                kind: f.kind,
                contribution: f.value,
            })
        })
        .collect();
    all.sort_by(|a, b| a.contribution.total_cmp(&b.contribution));
    all.truncate(top_n);
    Ok(all)
}
