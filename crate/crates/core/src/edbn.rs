//! The extended dynamic Bayesian network: learning pipeline, probability
//! evaluation and the model file format.
//!
//! The probability of an attribute value given its context is the product of
//! three kinds of factors:
//!
//! * **value**: `1 - new_value(A)` for a value seen in training, else `new_value(A)`;
//! * **relation**: for attributes with CPT parents, `new_relation(A)` when the
//!   parent configuration was never seen, else `(1 - new_relation(A)) * CPT`;
//! * **functional**: one factor per FD into `A`, `1 - violation` when the
//!   mapping agrees (or the source value is unknown), else `violation`.
//!
//! Probabilities are accumulated in log space; an exact zero is `-inf`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::bn_learn::{fit_cpts, learn_structure, make_constraints, Cpt, CptRow, Dag, Edge};
use crate::error::{EdbnError, Result};
use crate::event_log::{
    build_k_context, check_event, context_variables, encode_contexts, var_position, AttributeSchema,
    Domain, Event, EventLog, KContextLog, Trace, Var, NONE_CODE, NONE_TOKEN, UNSEEN_CODE,
};
use crate::fd::{build_mapping, discover_fds, FdEdge, FdMapping};
use crate::ratio::Ratio;

pub const FORMAT_NAME: &str = "edbn-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct EdbnModel {
    k: usize,
    schema: AttributeSchema,
    fd_threshold: Option<f64>,
    domains: Vec<Domain>,
    dag: Dag,
    fd_mappings: Vec<FdMapping>,
    /// FD mappings into each attribute, as indices into `fd_mappings`.
    fds_into: Vec<Vec<usize>>,
    cpts: Vec<Cpt>,
    new_value: Vec<Ratio>,
    new_relation: Vec<Ratio>,
    training_event_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Value,
    Relation,
    Functional { source: Var },
}

impl FactorKind {
    pub fn label(&self) -> &'static str {
        match self {
            FactorKind::Value => "value",
            FactorKind::Relation => "relation",
            FactorKind::Functional { .. } => "fd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    pub attr: usize,
    pub kind: FactorKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventProbability {
    pub log_probability: f64,
    /// Per attribute in schema order: value, relation (if any), then FDs.
    pub factors: Vec<Factor>,
}

impl EventProbability {
    pub fn probability(&self) -> f64 {
        self.log_probability.exp()
    }

    /// Product of the factors of one attribute.
    pub fn attribute_probability(&self, attr: usize) -> f64 {
        self.factors.iter().filter(|f| f.attr == attr).map(|f| f.value).product()
    }
}

/// Learns structure and parameters from a log.
pub fn learn_edbn(log: &EventLog, k: usize, fd_threshold: f64) -> Result<EdbnModel> {
    if log.is_empty() {
        return Err(EdbnError::EmptyLog);
    }
    let ctx = build_k_context(log, k)?;
    let fds = discover_fds(&ctx, fd_threshold)?;
    let constraints = make_constraints(ctx.variables(), &fds)?;
    let dag = learn_structure(&ctx, &constraints)?;
    let mut model = fit_edbn(&ctx, dag, &fds)?;
    model.fd_threshold = Some(fd_threshold);
    Ok(model)
}

/// Fits CPTs, FD mappings and rates for a given structure.
///
/// `dag` must contain the FD edges; they are excluded from CPT parents.
pub fn fit_edbn(ctx: &KContextLog, dag: Dag, fds: &[FdEdge]) -> Result<EdbnModel> {
    if ctx.is_empty() {
        return Err(EdbnError::EmptyLog);
    }
    let n_attrs = ctx.schema().len();
    for fd in fds {
        ctx.position(fd.source)?;
        if !dag.contains(&Edge::new(fd.source, fd.target_var())) {
            return Err(EdbnError::invalid(format!(
                "FD {} -> {} is missing from the graph",
                ctx.var_name(fd.source),
                ctx.var_name(fd.target_var())
            )));
        }
    }
    for e in dag.edges() {
        ctx.position(e.from)?;
        ctx.position(e.to)?;
    }
    let fd_edges: HashSet<Edge> = fds.iter().map(|f| Edge::new(f.source, f.target_var())).collect();
    if !dag.is_acyclic_excluding(&fd_edges) {
        return Err(EdbnError::invalid("conditional dependencies contain a cycle"));
    }

    let total = ctx.len() as u64;
    let cpts = fit_cpts(ctx, &dag, fds)?;
    let fd_mappings = fds.iter().map(|&fd| build_mapping(ctx, fd)).collect::<Result<Vec<_>>>()?;
    let new_value = (0..n_attrs).map(|a| Ratio::new(ctx.domain(a).len() as u64, total)).collect();
    let new_relation = cpts
        .iter()
        .map(|c| if c.has_parents() { Ratio::new(c.rows.len() as u64, total) } else { Ratio::new(0, total) })
        .collect();

    let mut model = EdbnModel {
        k: ctx.k(),
        schema: ctx.schema().clone(),
        fd_threshold: None,
        domains: ctx.domains().to_vec(),
        dag,
        fd_mappings,
        fds_into: Vec::new(),
        cpts,
        new_value,
        new_relation,
        training_event_count: total,
    };
    model.index_fds();
    Ok(model)
}

impl EdbnModel {
    fn index_fds(&mut self) {
        self.fd_mappings.sort_by_key(|m| (m.edge.target, m.edge.source));
        let mut into = vec![Vec::new(); self.schema.len()];
        for (i, m) in self.fd_mappings.iter().enumerate() {
            into[m.edge.target].push(i);
        }
        self.fds_into = into;
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn fd_threshold(&self) -> Option<f64> {
        self.fd_threshold
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn fd_mappings(&self) -> &[FdMapping] {
        &self.fd_mappings
    }

    pub fn cpts(&self) -> &[Cpt] {
        &self.cpts
    }

    pub fn domain(&self, attr: usize) -> &Domain {
        &self.domains[attr]
    }

    pub fn training_event_count(&self) -> u64 {
        self.training_event_count
    }

    pub fn new_value(&self, attr: usize) -> Ratio {
        self.new_value[attr]
    }

    pub fn new_relation(&self, attr: usize) -> Ratio {
        self.new_relation[attr]
    }

    pub fn variables(&self) -> Vec<Var> {
        context_variables(self.k, self.schema.len())
    }

    pub fn var_name(&self, var: Var) -> String {
        var.display(&self.schema).to_string()
    }

    fn attr_index(&self, attr: &str) -> Result<usize> {
        self.schema.index_of(attr).ok_or_else(|| EdbnError::UnknownVariable(attr.to_string()))
    }

    /// Value factor for `x` as the value of `attr`.
    pub fn value_probability(&self, attr: &str, x: &str) -> Result<f64> {
        let a = self.attr_index(attr)?;
        Ok(self.value_factor(a, self.domains[a].lookup(x)))
    }

    /// Relation factor for `x` given values of the CPT parents of `attr`, in
    /// the order of [`Cpt::parents`]; `None` stands for padding.
    pub fn relation_probability(&self, attr: &str, x: &str, parent_values: &[Option<&str>]) -> Result<f64> {
        let a = self.attr_index(attr)?;
        let cpt = &self.cpts[a];
        if parent_values.len() != cpt.parents.len() {
            return Err(EdbnError::invalid(format!(
                "{attr} has {} parents, {} values given",
                cpt.parents.len(),
                parent_values.len()
            )));
        }
        let codes: Vec<u32> = cpt
            .parents
            .iter()
            .zip(parent_values)
            .map(|(p, v)| v.map_or(NONE_CODE, |v| self.domains[p.attr].lookup(v)))
            .collect();
        Ok(self.relation_factor(a, &codes, self.domains[a].lookup(x)).unwrap_or(1.0))
    }

    fn value_factor(&self, attr: usize, code: u32) -> f64 {
        let rate = self.new_value[attr];
        if code == UNSEEN_CODE || code == NONE_CODE {
            rate.value()
        } else {
            rate.complement()
        }
    }

    /// `None` for attributes without CPT parents.
    fn relation_factor(&self, attr: usize, parent_codes: &[u32], code: u32) -> Option<f64> {
        let cpt = &self.cpts[attr];
        if !cpt.has_parents() {
            return None;
        }
        let rate = self.new_relation[attr];
        Some(match cpt.probability(parent_codes, code) {
            None => rate.value(),
            Some(p) => rate.complement() * p,
        })
    }

    /// Probability of the current event of a k-context row given in model
    /// codes, positions as in [`EdbnModel::variables`].
    pub fn event_probability(&self, codes: &[u32]) -> Result<EventProbability> {
        let n = self.schema.len();
        if codes.len() != (self.k + 1) * n {
            return Err(EdbnError::invalid(format!(
                "context row has {} values, model expects {}",
                codes.len(),
                (self.k + 1) * n
            )));
        }
        let at = |v: Var| codes[var_position(self.k, n, v)];
        let mut factors = Vec::with_capacity(n * 3);
        for attr in 0..n {
            let x = at(Var::current(attr));
            factors.push(Factor { attr, kind: FactorKind::Value, value: self.value_factor(attr, x) });
            let cpt = &self.cpts[attr];
            let parent_codes: Vec<u32> = cpt.parents.iter().map(|&p| at(p)).collect();
            if let Some(value) = self.relation_factor(attr, &parent_codes, x) {
                factors.push(Factor { attr, kind: FactorKind::Relation, value });
            }
            for &i in &self.fds_into[attr] {
                let m = &self.fd_mappings[i];
                factors.push(Factor {
                    attr,
                    kind: FactorKind::Functional { source: m.edge.source },
                    value: m.probability(at(m.edge.source), x),
                });
            }
        }
        let log_probability = factors.iter().map(|f| f.value.ln()).sum();
        Ok(EventProbability { log_probability, factors })
    }

    /// Encodes the k-context rows of an event sequence against the training
    /// domains; values never seen in training get [`UNSEEN_CODE`].
    pub fn encode(&self, events: &[Event]) -> Result<Vec<Vec<u32>>> {
        for e in events {
            check_event(&self.schema, e)?;
        }
        Ok(encode_contexts(events, self.k, self.schema.len(), |a, v| self.domains[a].lookup(v)))
    }

    /// Per-event probabilities of a sequence, history taken from the
    /// sequence itself.
    pub fn sequence_probabilities(&self, events: &[Event]) -> Result<Vec<EventProbability>> {
        self.encode(events)?.iter().map(|codes| self.event_probability(codes)).collect()
    }

    /// `ln P(trace)`.
    pub fn trace_log_probability(&self, trace: &Trace) -> Result<f64> {
        if trace.is_empty() {
            return Err(EdbnError::invalid(format!("trace `{}` is empty", trace.trace_id)));
        }
        Ok(self.sequence_probabilities(&trace.events)?.iter().map(|p| p.log_probability).sum())
    }

    pub fn trace_probability(&self, trace: &Trace) -> Result<f64> {
        Ok(self.trace_log_probability(trace)?.exp())
    }

    /// Fails unless `schema` carries the same attributes in the same order.
    pub fn check_schema(&self, schema: &AttributeSchema) -> Result<()> {
        if schema.names() != self.schema.names() {
            return Err(EdbnError::SchemaMismatch(format!(
                "model attributes [{}] vs log attributes [{}]",
                self.schema.names().join(", "),
                schema.names().join(", ")
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    k: usize,
    #[serde(default)]
    fd_threshold: Option<f64>,
    schema: AttributeSchema,
    training_event_count: u64,
    domains: Vec<DomainEntry>,
    edges: Vec<EdgeEntry>,
    functional_dependencies: Vec<FdEntry>,
    cpts: Vec<CptEntry>,
    new_value: Vec<RateEntry>,
    new_relation: Vec<RateEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainEntry {
    attribute: String,
    values: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeEntry {
    from: String,
    to: String,
    functional: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FdEntry {
    source: String,
    target: String,
    strength: f64,
    violation: Ratio,
    mapping: Vec<[String; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CptEntry {
    child: String,
    parents: Vec<String>,
    rows: Vec<CptRowEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CptRowEntry {
    parents: Vec<String>,
    total: u64,
    counts: Vec<(String, u64)>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateEntry {
    attribute: String,
    rate: Ratio,
}

impl EdbnModel {
    fn value_str(&self, attr: usize, code: u32) -> String {
        self.domains[attr].value(code).unwrap_or(NONE_TOKEN).to_string()
    }

    fn to_file(&self) -> ModelFile {
        let names = self.schema.names();
        let fd_set: HashSet<Edge> =
            self.fd_mappings.iter().map(|m| Edge::new(m.edge.source, m.edge.target_var())).collect();

        let functional_dependencies = self
            .fd_mappings
            .iter()
            .map(|m| {
                let sorted: BTreeMap<u32, u32> = m.map.iter().map(|(&s, &t)| (s, t)).collect();
                FdEntry {
                    source: self.var_name(m.edge.source),
                    target: self.var_name(m.edge.target_var()),
                    strength: m.edge.strength,
                    violation: m.violation,
                    mapping: sorted
                        .into_iter()
                        .map(|(s, t)| [self.value_str(m.edge.source.attr, s), self.value_str(m.edge.target, t)])
                        .collect(),
                }
            })
            .collect();

        let cpts = self
            .cpts
            .iter()
            .map(|cpt| {
                let sorted: BTreeMap<&Vec<u32>, &CptRow> = cpt.rows.iter().collect();
                CptEntry {
                    child: names[cpt.child].clone(),
                    parents: cpt.parents.iter().map(|&p| self.var_name(p)).collect(),
                    rows: sorted
                        .into_iter()
                        .map(|(key, row)| CptRowEntry {
                            parents: cpt.parents.iter().zip(key).map(|(p, &c)| self.value_str(p.attr, c)).collect(),
                            total: row.total,
                            counts: row.counts.iter().map(|(&c, &n)| (self.value_str(cpt.child, c), n)).collect(),
                        })
                        .collect(),
                }
            })
            .collect();

        let rates = |rates: &[Ratio]| {
            names
                .iter()
                .zip(rates)
                .map(|(n, &rate)| RateEntry { attribute: n.clone(), rate })
                .collect()
        };

        ModelFile {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            k: self.k,
            fd_threshold: self.fd_threshold,
            schema: self.schema.clone(),
            training_event_count: self.training_event_count,
            domains: names
                .iter()
                .zip(&self.domains)
                .map(|(n, d)| DomainEntry { attribute: n.clone(), values: d.values().map(str::to_string).collect() })
                .collect(),
            edges: self
                .dag
                .edges()
                .iter()
                .map(|e| EdgeEntry {
                    from: self.var_name(e.from),
                    to: self.var_name(e.to),
                    functional: fd_set.contains(e),
                })
                .collect(),
            functional_dependencies,
            cpts,
            new_value: rates(&self.new_value),
            new_relation: rates(&self.new_relation),
        }
    }

    pub fn save<W: Write>(&self, output: W) -> Result<()> {
        serde_json::to_writer_pretty(output, &self.to_file())
            .map_err(|e| EdbnError::ModelFormat(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("model serializes")
    }

    pub fn load<R: Read>(input: R) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_reader(input).map_err(|e| EdbnError::ModelFormat(e.to_string()))?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(FORMAT_NAME) => {}
            other => return Err(EdbnError::ModelFormat(format!("not an eDBN model file (format {other:?})"))),
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            other => {
                return Err(EdbnError::ModelVersion(format!(
                    "unsupported version {other:?}, expected {FORMAT_VERSION}"
                )))
            }
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("unknown field") {
                EdbnError::ModelVersion(format!("{msg}: not part of format version {FORMAT_VERSION}"))
            } else {
                EdbnError::ModelFormat(msg)
            }
        })?;
        Self::from_file(file)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::load(text.as_bytes())
    }

    fn from_file(file: ModelFile) -> Result<Self> {
        let bad = |msg: String| EdbnError::ModelFormat(msg);
        file.schema.validate().map_err(|e| bad(e.to_string()))?;
        let schema = file.schema;
        let n = schema.len();
        if file.k == 0 {
            return Err(bad("k must be at least 1".into()));
        }
        if file.training_event_count == 0 {
            return Err(bad("training event count is zero".into()));
        }

        let attr = |name: &str| schema.index_of(name).ok_or_else(|| bad(format!("unknown attribute `{name}`")));
        let var = |name: &str| -> Result<Var> {
            let (a, s) = name.rsplit_once('_').ok_or_else(|| bad(format!("bad variable `{name}`")))?;
            let slice: usize = s.parse().map_err(|_| bad(format!("bad variable `{name}`")))?;
            if slice > file.k {
                return Err(bad(format!("variable `{name}` beyond k")));
            }
            Ok(Var::new(attr(a)?, slice))
        };

        if file.domains.len() != n {
            return Err(bad("one domain per attribute expected".into()));
        }
        let mut domains = vec![Domain::new(); n];
        for entry in &file.domains {
            let a = attr(&entry.attribute)?;
            for v in &entry.values {
                if v == NONE_TOKEN {
                    return Err(bad(format!("domain of `{}` contains the padding token", entry.attribute)));
                }
                domains[a].intern(v);
            }
            if domains[a].len() != entry.values.len() {
                return Err(bad(format!("duplicate values in domain of `{}`", entry.attribute)));
            }
        }
        let code = |a: usize, v: &str| -> Result<u32> {
            if v == NONE_TOKEN {
                return Ok(NONE_CODE);
            }
            match domains[a].lookup(v) {
                UNSEEN_CODE => Err(bad(format!("value `{v}` not in the domain of `{}`", schema.names()[a]))),
                c => Ok(c),
            }
        };

        let edges = file
            .edges
            .iter()
            .map(|e| Ok(Edge::new(var(&e.from)?, var(&e.to)?)))
            .collect::<Result<Vec<_>>>()?;
        let dag = Dag::new(edges.iter().copied()).map_err(|e| bad(e.to_string()))?;
        let marked_fd: HashSet<Edge> =
            file.edges.iter().zip(&edges).filter(|(e, _)| e.functional).map(|(_, &e)| e).collect();

        let check_rate = |r: Ratio| if r.is_valid() { Ok(r) } else { Err(bad(format!("invalid rate {r:?}"))) };

        let mut fd_mappings = Vec::with_capacity(file.functional_dependencies.len());
        for fd in &file.functional_dependencies {
            let source = var(&fd.source)?;
            let target = var(&fd.target)?;
            if target.slice != 0 {
                return Err(bad(format!("FD target `{}` not in the current slice", fd.target)));
            }
            if !marked_fd.contains(&Edge::new(source, target)) {
                return Err(bad(format!("FD {} -> {} is not a functional edge", fd.source, fd.target)));
            }
            let mut map = HashMap::with_capacity(fd.mapping.len());
            for [s, t] in &fd.mapping {
                map.insert(code(source.attr, s)?, code(target.attr, t)?);
            }
            fd_mappings.push(FdMapping {
                edge: FdEdge { source, target: target.attr, strength: fd.strength },
                map,
                violation: check_rate(fd.violation)?,
            });
        }
        if fd_mappings.len() != marked_fd.len() {
            return Err(bad("every functional edge needs exactly one mapping".into()));
        }
        let fd_set: HashSet<Edge> = marked_fd;
        if !dag.is_acyclic_excluding(&fd_set) {
            return Err(bad("conditional dependencies contain a cycle".into()));
        }

        if file.cpts.len() != n {
            return Err(bad("one CPT per attribute expected".into()));
        }
        let mut cpts: Vec<Option<Cpt>> = vec![None; n];
        for entry in &file.cpts {
            let child = attr(&entry.child)?;
            let parents = entry.parents.iter().map(|p| var(p)).collect::<Result<Vec<_>>>()?;
            if parents != dag.parents_excluding(child, &fd_set) {
                return Err(bad(format!("CPT parents of `{}` disagree with the graph", entry.child)));
            }
            let mut rows = HashMap::with_capacity(entry.rows.len());
            for row in &entry.rows {
                if row.parents.len() != parents.len() {
                    return Err(bad(format!("CPT row arity mismatch for `{}`", entry.child)));
                }
                let key = parents.iter().zip(&row.parents).map(|(p, v)| code(p.attr, v)).collect::<Result<Vec<_>>>()?;
                let mut counts = BTreeMap::new();
                for (v, c) in &row.counts {
                    counts.insert(code(child, v)?, *c);
                }
                if counts.values().sum::<u64>() != row.total || row.total == 0 {
                    return Err(bad(format!("CPT row counts of `{}` do not add up", entry.child)));
                }
                rows.insert(key, CptRow { total: row.total, counts });
            }
            if cpts[child].replace(Cpt { child, parents, rows }).is_some() {
                return Err(bad(format!("duplicate CPT for `{}`", entry.child)));
            }
        }
        let cpts: Vec<Cpt> = cpts.into_iter().map(|c| c.expect("count checked")).collect();

        let rates = |entries: &[RateEntry], what: &str| -> Result<Vec<Ratio>> {
            if entries.len() != n {
                return Err(bad(format!("one {what} rate per attribute expected")));
            }
            let mut out = vec![None; n];
            for e in entries {
                out[attr(&e.attribute)?] = Some(check_rate(e.rate)?);
            }
            out.into_iter().map(|r| r.ok_or_else(|| bad(format!("missing {what} rate")))).collect()
        };
        let new_value = rates(&file.new_value, "new_value")?;
        let new_relation = rates(&file.new_relation, "new_relation")?;

        let mut model = EdbnModel {
            k: file.k,
            schema,
            fd_threshold: file.fd_threshold,
            domains,
            dag,
            fd_mappings,
            fds_into: Vec::new(),
            cpts,
            new_value,
            new_relation,
            training_event_count: file.training_event_count,
        };
        model.index_fds();
        Ok(model)
    }
}
