//! Declarative process models and trace generation.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::rng::SplitMix64;
use crate::error::{EdbnError, Result};
use crate::event_log::{AttributeSchema, Event, EventLog, Trace, NONE_TOKEN};

pub const TRACE_COLUMN: &str = "trace_id";
pub const EVENT_ID_COLUMN: &str = "event_id";
const MAX_TRACE_LENGTH: usize = 1000;

/// Condition on a trace-scope attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Guard {
    pub attribute: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub from: String,
    pub to: String,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<Guard>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    /// Drawn once per trace and repeated on every event.
    Trace,
    /// Drawn for every event.
    #[default]
    Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Choice {
    pub values: Vec<String>,
    /// Uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Rule {
    Constant(String),
    Choice(Choice),
    /// Value looked up from another attribute of the same event.
    Derived { from: String, mapping: BTreeMap<String, String> },
    /// Choice that depends on the event's activity.
    ByActivity {
        choices: BTreeMap<String, Choice>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        default: Option<Choice>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeRule {
    pub name: String,
    #[serde(default)]
    pub scope: Scope,
    pub rule: Rule,
}

/// A process: a weighted activity graph plus rules for every other attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessModel {
    #[serde(default = "activity_name")]
    pub activity_attribute: String,
    pub start: String,
    pub end: String,
    pub transitions: Vec<Transition>,
    #[serde(default)]
    pub attributes: Vec<AttributeRule>,
}

fn activity_name() -> String {
    "Activity".to_string()
}

const SHIPPING: &str = include_str!("../../data/shipping.json");

fn gen_err(msg: impl Into<String>) -> EdbnError {
    EdbnError::Generation(msg.into())
}

impl Choice {
    fn check(&self, what: &str) -> Result<()> {
        if self.values.is_empty() {
            return Err(gen_err(format!("{what}: choice without values")));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.values.len() {
                return Err(gen_err(format!("{what}: {} weights for {} values", w.len(), self.values.len())));
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return Err(gen_err(format!("{what}: weights must be non-negative with a positive sum")));
            }
        }
        Ok(())
    }

    fn draw(&self, rng: &mut SplitMix64) -> String {
        let i = match &self.weights {
            Some(w) => rng.weighted(w),
            None => rng.index(self.values.len()),
        };
        self.values[i].clone()
    }
}

impl ProcessModel {
    /// The built-in order-handling process with an insurance branch.
    pub fn shipping() -> Self {
        ProcessModel::from_json(SHIPPING).expect("bundled process model is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ProcessModel =
            serde_json::from_str(text).map_err(|e| gen_err(format!("process model: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("process model serializes")
    }

    /// Attribute names in log order: the activity first.
    pub fn attribute_names(&self) -> Vec<String> {
        std::iter::once(self.activity_attribute.clone()).chain(self.attributes.iter().map(|a| a.name.clone())).collect()
    }

    pub fn schema(&self) -> Result<AttributeSchema> {
        AttributeSchema::new(self.attribute_names(), TRACE_COLUMN)?.with_event_id_column(EVENT_ID_COLUMN)
    }

    pub fn activities(&self) -> BTreeSet<&str> {
        let mut acts: BTreeSet<&str> =
            self.transitions.iter().flat_map(|t| [t.from.as_str(), t.to.as_str()]).collect();
        acts.insert(&self.start);
        acts.insert(&self.end);
        acts
    }

    fn rule(&self, name: &str) -> Option<&AttributeRule> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let names = self.attribute_names();
        let mut seen = BTreeSet::new();
        for n in &names {
            if n.is_empty() || !seen.insert(n.as_str()) {
                return Err(gen_err(format!("attribute name `{n}` is empty or repeated")));
            }
        }
        let acts = self.activities();
        for a in &acts {
            if *a == NONE_TOKEN {
                return Err(gen_err("activity uses the reserved padding token"));
            }
        }
        for t in &self.transitions {
            if t.from == self.end {
                return Err(gen_err(format!("transition leaves the end activity `{}`", self.end)));
            }
            if !t.weight.is_finite() || t.weight <= 0.0 {
                return Err(gen_err(format!("transition {} -> {} needs a positive weight", t.from, t.to)));
            }
            if let Some(g) = &t.when {
                match self.rule(&g.attribute) {
                    Some(r) if r.scope == Scope::Trace => {}
                    _ => {
                        return Err(gen_err(format!(
                            "guard on `{}` must name a trace-scope attribute",
                            g.attribute
                        )))
                    }
                }
            }
        }
        for attr in &self.attributes {
            let what = format!("attribute `{}`", attr.name);
            match &attr.rule {
                Rule::Constant(v) if v == NONE_TOKEN => return Err(gen_err(format!("{what}: reserved token"))),
                Rule::Constant(_) => {}
                Rule::Choice(c) => c.check(&what)?,
                Rule::Derived { from, .. } => {
                    if !names.contains(from) || *from == attr.name {
                        return Err(gen_err(format!("{what}: derived from unknown attribute `{from}`")));
                    }
                    let trace_source = from != &self.activity_attribute
                        && self.rule(from).map(|r| r.scope) == Some(Scope::Trace);
                    if attr.scope == Scope::Trace && !trace_source {
                        return Err(gen_err(format!("{what}: trace scope needs a trace-scope source")));
                    }
                }
                Rule::ByActivity { choices, default } => {
                    if attr.scope == Scope::Trace {
                        return Err(gen_err(format!("{what}: by_activity needs event scope")));
                    }
                    for (act, c) in choices {
                        if !acts.contains(act.as_str()) {
                            return Err(gen_err(format!("{what}: unknown activity `{act}`")));
                        }
                        c.check(&what)?;
                    }
                    match default {
                        Some(c) => c.check(&what)?,
                        None => {
                            if let Some(a) = acts.iter().find(|a| !choices.contains_key(**a)) {
                                return Err(gen_err(format!("{what}: no choice for activity `{a}`")));
                            }
                        }
                    }
                }
            }
        }
        self.evaluation_order()?;
        self.check_reachability()
    }

    /// Attribute indices (into `attributes`) with derived sources first.
    fn evaluation_order(&self) -> Result<Vec<usize>> {
        let index: HashMap<&str, usize> = self.attributes.iter().enumerate().map(|(i, a)| (a.name.as_str(), i)).collect();
        let mut order = Vec::with_capacity(self.attributes.len());
        let mut state = vec![0u8; self.attributes.len()];
        fn visit(
            i: usize,
            model: &ProcessModel,
            index: &HashMap<&str, usize>,
            state: &mut [u8],
            order: &mut Vec<usize>,
        ) -> Result<()> {
            match state[i] {
                2 => return Ok(()),
                1 => return Err(gen_err(format!("derived attributes form a cycle through `{}`", model.attributes[i].name))),
                _ => {}
            }
            state[i] = 1;
            if let Rule::Derived { from, .. } = &model.attributes[i].rule {
                if let Some(&j) = index.get(from.as_str()) {
                    visit(j, model, index, state, order)?;
                }
            }
            state[i] = 2;
            order.push(i);
            Ok(())
        }
        for i in 0..self.attributes.len() {
            visit(i, self, &index, &mut state, &mut order)?;
        }
        Ok(order)
    }

    fn check_reachability(&self) -> Result<()> {
        let mut reached = BTreeSet::from([self.start.as_str()]);
        let mut queue = VecDeque::from([self.start.as_str()]);
        while let Some(a) = queue.pop_front() {
            for t in self.transitions.iter().filter(|t| t.from == a) {
                if reached.insert(t.to.as_str()) {
                    queue.push_back(&t.to);
                }
            }
        }
        if !reached.contains(self.end.as_str()) {
            return Err(gen_err(format!("end activity `{}` is unreachable from `{}`", self.end, self.start)));
        }
        Ok(())
    }

    fn trace_values(&self, order: &[usize], rng: &mut SplitMix64) -> Result<HashMap<String, String>> {
        let mut values: HashMap<String, String> = HashMap::new();
        for &i in order {
            let attr = &self.attributes[i];
            if attr.scope != Scope::Trace {
                continue;
            }
            let v = match &attr.rule {
                Rule::Constant(v) => v.clone(),
                Rule::Choice(c) => c.draw(rng),
                Rule::Derived { from, mapping } => lookup(&attr.name, mapping, &values[from.as_str()])?,
                Rule::ByActivity { .. } => unreachable!("rejected by validation"),
            };
            values.insert(attr.name.clone(), v);
        }
        Ok(values)
    }

    fn walk(&self, trace_values: &HashMap<String, String>, rng: &mut SplitMix64) -> Result<Vec<String>> {
        let mut path = vec![self.start.clone()];
        let mut current = self.start.as_str();
        while current != self.end {
            let enabled: Vec<&Transition> = self
                .transitions
                .iter()
                .filter(|t| t.from == current)
                .filter(|t| t.when.as_ref().is_none_or(|g| trace_values.get(&g.attribute) == Some(&g.value)))
                .collect();
            if enabled.is_empty() {
                return Err(gen_err(format!("no enabled transition out of `{current}`")));
            }
            let weights: Vec<f64> = enabled.iter().map(|t| t.weight).collect();
            current = &enabled[rng.weighted(&weights)].to;
            path.push(current.to_string());
            if path.len() > MAX_TRACE_LENGTH {
                return Err(gen_err(format!("trace exceeded {MAX_TRACE_LENGTH} events")));
            }
        }
        Ok(path)
    }

    fn trace(&self, order: &[usize], trace_id: String, rng: &mut SplitMix64) -> Result<Trace> {
        let trace_values = self.trace_values(order, rng)?;
        let path = self.walk(&trace_values, rng)?;
        let mut events = Vec::with_capacity(path.len());
        for (pos, activity) in path.into_iter().enumerate() {
            let mut values: HashMap<&str, String> = HashMap::new();
            values.insert(&self.activity_attribute, activity.clone());
            for &i in order {
                let attr = &self.attributes[i];
                let v = match (&attr.rule, attr.scope) {
                    (_, Scope::Trace) => trace_values[&attr.name].clone(),
                    (Rule::Constant(v), _) => v.clone(),
                    (Rule::Choice(c), _) => c.draw(rng),
                    (Rule::Derived { from, mapping }, _) => lookup(&attr.name, mapping, &values[from.as_str()])?,
                    (Rule::ByActivity { choices, default }, _) => {
                        choices.get(&activity).or(default.as_ref()).expect("validated").draw(rng)
                    }
                };
                values.insert(&attr.name, v);
            }
            let row: Vec<String> = self.attribute_names().iter().map(|n| values.remove(n.as_str()).unwrap()).collect();
            events.push(Event { id: format!("{trace_id}.{pos}"), values: row });
        }
        Ok(Trace::new(trace_id, events))
    }

    /// Generates `n_traces` traces. The same seed gives the same log.
    pub fn generate(&self, n_traces: usize, seed: u64) -> Result<EventLog> {
        self.validate()?;
        let order = self.evaluation_order()?;
        let width = n_traces.saturating_sub(1).to_string().len().max(5);
        let traces = (0..n_traces)
            .map(|i| {
                let mut rng = SplitMix64::stream(seed, i as u64);
                self.trace(&order, format!("T{i:0width$}"), &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        EventLog::new(self.schema()?, traces)
    }
}

fn lookup(attr: &str, mapping: &BTreeMap<String, String>, key: &str) -> Result<String> {
    mapping
        .get(key)
        .cloned()
        .ok_or_else(|| gen_err(format!("attribute `{attr}` has no mapping for `{key}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear() -> ProcessModel {
        ProcessModel::from_json(
            r#"{"start": "A", "end": "C",
                "transitions": [{"from": "A", "to": "B"}, {"from": "B", "to": "C"}],
                "attributes": [{"name": "Lane", "rule": {"derived": {"from": "Activity",
                    "mapping": {"A": "x", "B": "y", "C": "y"}}}}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn linear_model_gives_one_ordered_trace() {
        let log = linear().generate(1, 3).unwrap();
        assert_eq!(log.traces().len(), 1);
        let acts: Vec<&str> = log.traces()[0].events.iter().map(|e| e.values[0].as_str()).collect();
        assert_eq!(acts, ["A", "B", "C"]);
        assert_eq!(log.traces()[0].events[0].values[1], "x");
    }

    #[test]
    fn same_seed_same_log() {
        let m = ProcessModel::shipping();
        assert_eq!(m.generate(50, 11).unwrap(), m.generate(50, 11).unwrap());
        assert_ne!(m.generate(50, 11).unwrap(), m.generate(50, 12).unwrap());
    }

    #[test]
    fn trace_count_is_exact() {
        let log = ProcessModel::shipping().generate(37, 1).unwrap();
        assert_eq!(log.traces().len(), 37);
        assert!(log.traces().iter().all(|t| !t.is_empty()));
    }

    #[test]
    fn unreachable_end_is_rejected() {
        let err = ProcessModel::from_json(
            r#"{"start": "A", "end": "Z", "transitions": [{"from": "A", "to": "B"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, EdbnError::Generation(_)));
    }

    #[test]
    fn derived_cycle_is_rejected() {
        let err = ProcessModel::from_json(
            r#"{"start": "A", "end": "B", "transitions": [{"from": "A", "to": "B"}],
                "attributes": [
                  {"name": "p", "rule": {"derived": {"from": "q", "mapping": {}}}},
                  {"name": "q", "rule": {"derived": {"from": "p", "mapping": {}}}}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn guard_must_use_trace_scope() {
        let err = ProcessModel::from_json(
            r#"{"start": "A", "end": "B",
                "transitions": [{"from": "A", "to": "B", "when": {"attribute": "x", "value": "1"}}],
                "attributes": [{"name": "x", "rule": {"constant": "1"}}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, EdbnError::Generation(_)));
    }

    #[test]
    fn guarded_branches_follow_the_trace_attribute() {
        let m = ProcessModel::shipping();
        let log = m.generate(300, 5).unwrap();
        let ins = log.schema().index_of("Insurance").unwrap();
        for t in log.traces() {
            let insured = t.events[0].values[ins] == "yes";
            let has_contract = t.events.iter().any(|e| e.values[0] == "Sign Insurance Contract");
            assert_eq!(insured, has_contract, "{}", t.trace_id);
        }
    }

    #[test]
    fn shipping_model_round_trips() {
        let m = ProcessModel::shipping();
        assert_eq!(ProcessModel::from_json(&m.to_json()).unwrap(), m);
        assert_eq!(m.attribute_names().len(), 13);
    }

    #[test]
    fn derived_values_are_functions_of_their_source() {
        let m = ProcessModel::shipping();
        let log = m.generate(200, 2).unwrap();
        for attr in &m.attributes {
            if let Rule::Derived { from, .. } = &attr.rule {
                let (s, t) = (log.schema().index_of(from).unwrap(), log.schema().index_of(&attr.name).unwrap());
                let mut seen: HashMap<&str, &str> = HashMap::new();
                for e in log.events() {
                    assert_eq!(*seen.entry(&e.values[s]).or_insert(&e.values[t]), e.values[t].as_str());
                }
            }
        }
    }
}
