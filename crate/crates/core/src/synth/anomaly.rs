//! Controlled corruption of clean logs, with ground-truth labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::rng::SplitMix64;
use crate::error::{EdbnError, Result};
use crate::event_log::{EventLog, Trace};

const INJECTION_STREAM: u64 = 0xA11C_E5ED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = EdbnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "0" => Ok(Label::Normal),
            "anomalous" | "anomaly" | "1" => Ok(Label::Anomalous),
            other => Err(EdbnError::invalid(format!("unknown label `{other}`"))),
        }
    }
}

/// One edit applied to a trace. Positions refer to the trace as it was
/// when the edit was made.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Mutation {
    SwapAdjacent { position: usize },
    DeleteEvent { position: usize, event_id: String },
    DuplicateEvent { source: usize, inserted_at: usize, event_id: String },
    ReplaceValue { event_id: String, attribute: String, from: String, to: String },
    FreshValue { event_id: String, attribute: String, from: String, to: String },
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mutation::SwapAdjacent { position } => write!(f, "swap {position}<->{}", position + 1),
            Mutation::DeleteEvent { position, event_id } => write!(f, "delete {event_id}@{position}"),
            Mutation::DuplicateEvent { source, inserted_at, event_id } => {
                write!(f, "duplicate {source} as {event_id}@{inserted_at}")
            }
            Mutation::ReplaceValue { event_id, attribute, from, to } => {
                write!(f, "replace {event_id}.{attribute} {from}->{to}")
            }
            Mutation::FreshValue { event_id, attribute, from, to } => {
                write!(f, "fresh {event_id}.{attribute} {from}->{to}")
            }
        }
    }
}

/// A log with a label and the applied edits for every trace.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledLog {
    pub log: EventLog,
    pub labels: BTreeMap<String, Label>,
    pub mutations: BTreeMap<String, Vec<Mutation>>,
}

impl LabeledLog {
    /// Every trace labelled normal.
    pub fn clean(log: EventLog) -> Self {
        let labels = log.traces().iter().map(|t| (t.trace_id.clone(), Label::Normal)).collect();
        LabeledLog { log, labels, mutations: BTreeMap::new() }
    }

    pub fn label(&self, trace_id: &str) -> Option<Label> {
        self.labels.get(trace_id).copied()
    }

    pub fn anomalous_count(&self) -> usize {
        self.labels.values().filter(|l| **l == Label::Anomalous).count()
    }

    /// CSV with columns `trace_id,label,mutations`.
    pub fn write_labels<W: Write>(&self, output: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(output);
        let io = |e: csv::Error| EdbnError::Io(std::io::Error::other(e));
        w.write_record(["trace_id", "label", "mutations"]).map_err(io)?;
        for t in self.log.traces() {
            let label = self.labels.get(&t.trace_id).copied().unwrap_or(Label::Normal);
            let edits = self
                .mutations
                .get(&t.trace_id)
                .map(|m| m.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
                .unwrap_or_default();
            w.write_record([t.trace_id.as_str(), label.as_str(), edits.as_str()]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a labels file: a header row, trace id in the first column and the
/// label in the second.
pub fn read_labels<R: Read>(input: R) -> Result<BTreeMap<String, Label>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
    let mut labels = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| EdbnError::Parse { line, message: e.to_string() })?;
        let (Some(id), Some(label)) = (rec.get(0), rec.get(1)) else {
            return Err(EdbnError::Parse { line, message: "expected trace_id and label".into() });
        };
        let label = label.parse().map_err(|e: EdbnError| EdbnError::Parse { line, message: e.to_string() })?;
        if labels.insert(id.to_string(), label).is_some() {
            return Err(EdbnError::Parse { line, message: format!("duplicate trace id `{id}`") });
        }
    }
    Ok(labels)
}

/// Number of traces to corrupt. The small slack keeps products such as
/// `0.1 * 1000` from rounding up to 101.
fn anomaly_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

struct Mutator<'a> {
    names: &'a [String],
    domains: &'a [Vec<String>],
    known: &'a [BTreeSet<String>],
    used_ids: &'a mut BTreeSet<String>,
}

impl Mutator<'_> {
    fn fresh_id(&mut self, base: &str) -> String {
        let mut i = 1;
        loop {
            let id = format!("{base}+{i}");
            if self.used_ids.insert(id.clone()) {
                return id;
            }
            i += 1;
        }
    }

    fn fresh_value(&self, rng: &mut SplitMix64, attr: usize) -> String {
        loop {
            let v = format!("{}~{:06x}", self.names[attr], rng.below(1 << 24));
            if !self.known[attr].contains(&v) {
                return v;
            }
        }
    }

    /// Applies one randomly chosen edit; kinds that cannot change the trace
    /// are redrawn.
    fn apply(&mut self, rng: &mut SplitMix64, trace: &mut Trace) -> Mutation {
        let n = trace.events.len();
        let width = self.names.len();
        loop {
            match rng.below(5) {
                0 => {
                    let candidates: Vec<usize> =
                        (0..n.saturating_sub(1)).filter(|&i| trace.events[i].values != trace.events[i + 1].values).collect();
                    if candidates.is_empty() {
                        continue;
                    }
                    let position = candidates[rng.index(candidates.len())];
                    trace.events.swap(position, position + 1);
                    return Mutation::SwapAdjacent { position };
                }
                1 => {
                    if n < 2 {
                        continue;
                    }
                    let position = rng.index(n);
                    let removed = trace.events.remove(position);
                    return Mutation::DeleteEvent { position, event_id: removed.id };
                }
                2 => {
                    let source = rng.index(n);
                    let inserted_at = rng.index(n + 1);
                    let mut copy = trace.events[source].clone();
                    copy.id = self.fresh_id(&copy.id);
                    let event_id = copy.id.clone();
                    trace.events.insert(inserted_at, copy);
                    return Mutation::DuplicateEvent { source, inserted_at, event_id };
                }
                3 => {
                    let pos = rng.index(n);
                    let attr = rng.index(width);
                    let current = &trace.events[pos].values[attr];
                    let others: Vec<&String> = self.domains[attr].iter().filter(|v| *v != current).collect();
                    if others.is_empty() {
                        continue;
                    }
                    let to = others[rng.index(others.len())].clone();
                    let from = std::mem::replace(&mut trace.events[pos].values[attr], to.clone());
                    return Mutation::ReplaceValue {
                        event_id: trace.events[pos].id.clone(),
                        attribute: self.names[attr].clone(),
                        from,
                        to,
                    };
                }
                _ => return self.fresh(rng, trace),
            }
        }
    }

    fn fresh(&mut self, rng: &mut SplitMix64, trace: &mut Trace) -> Mutation {
        let pos = rng.index(trace.events.len());
        let attr = rng.index(self.names.len());
        let to = self.fresh_value(rng, attr);
        let from = std::mem::replace(&mut trace.events[pos].values[attr], to.clone());
        Mutation::FreshValue { event_id: trace.events[pos].id.clone(), attribute: self.names[attr].clone(), from, to }
    }
}

fn same_content(a: &Trace, b: &Trace) -> bool {
    a.events.len() == b.events.len() && a.events.iter().zip(&b.events).all(|(x, y)| x.values == y.values)
}

/// Corrupts `ceil(fraction * traces)` uniformly chosen traces with one to
/// three edits each (swap, delete, duplicate, replace by a known value,
/// replace by a new value). Every corrupted trace differs from its original.
pub fn inject_anomalies(log: &EventLog, fraction: f64, seed: u64) -> Result<LabeledLog> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(EdbnError::invalid(format!("anomaly fraction {fraction} is outside [0, 1]")));
    }
    if log.is_empty() {
        if fraction > 0.0 {
            return Err(EdbnError::EmptyLog);
        }
        return Ok(LabeledLog::clean(log.clone()));
    }
    let names = log.schema().names().to_vec();
    let mut known: Vec<BTreeSet<String>> = vec![BTreeSet::new(); names.len()];
    for e in log.events() {
        for (k, v) in known.iter_mut().zip(&e.values) {
            k.insert(v.clone());
        }
    }
    let domains: Vec<Vec<String>> = known.iter().map(|s| s.iter().cloned().collect()).collect();
    let mut used_ids: BTreeSet<String> = log.events().map(|e| e.id.clone()).collect();

    let n = log.traces().len();
    let count = anomaly_count(fraction, n);
    let mut rng = SplitMix64::stream(seed, INJECTION_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = i + rng.index(n - i);
        order.swap(i, j);
    }
    let mut chosen = order[..count].to_vec();
    chosen.sort_unstable();

    let mut traces = log.traces().to_vec();
    let mut labels: BTreeMap<String, Label> = traces.iter().map(|t| (t.trace_id.clone(), Label::Normal)).collect();
    let mut mutations = BTreeMap::new();
    let mut mutator = Mutator { names: &names, domains: &domains, known: &known, used_ids: &mut used_ids };
    for &i in &chosen {
        let original = &log.traces()[i];
        let trace = &mut traces[i];
        let mut trng = SplitMix64::stream(seed ^ INJECTION_STREAM, i as u64);
        let edits = 1 + trng.index(3);
        let mut applied: Vec<Mutation> = (0..edits).map(|_| mutator.apply(&mut trng, trace)).collect();
        if same_content(original, trace) {
            applied.push(mutator.fresh(&mut trng, trace));
        }
        labels.insert(trace.trace_id.clone(), Label::Anomalous);
        mutations.insert(trace.trace_id.clone(), applied);
    }
    let log = EventLog::new(log.schema().clone(), traces)?;
    Ok(LabeledLog { log, labels, mutations })
}
