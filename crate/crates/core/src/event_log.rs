//! Event logs, traces and k-context rows.
//!
//! A log is read from delimited text, grouped into traces by the trace id
//! column and turned into a k-context log: every event is prefixed with the
//! descriptions of its `k` predecessors in the same trace, padded with a
//! dedicated `None` value at the head of a trace.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{EdbnError, Result};

/// Reserved rendering of the padding value. Logs containing it are rejected.
pub const NONE_TOKEN: &str = "__NONE__";

/// Code of the padding value inside a [`Domain`].
pub const NONE_CODE: u32 = 0;

/// Code handed out for values that are not part of a training domain.
pub const UNSEEN_CODE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSchema {
    names: Vec<String>,
    trace_id_column: String,
    #[serde(default)]
    event_order_column: Option<String>,
    #[serde(default)]
    event_id_column: Option<String>,
}

impl AttributeSchema {
    pub fn new<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
        trace_id_column: impl Into<String>,
    ) -> Result<Self> {
        let schema = AttributeSchema {
            names: names.into_iter().map(Into::into).collect(),
            trace_id_column: trace_id_column.into(),
            event_order_column: None,
            event_id_column: None,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn with_order_column(mut self, column: impl Into<String>) -> Result<Self> {
        self.event_order_column = Some(column.into());
        self.validate()?;
        Ok(self)
    }

    pub fn with_event_id_column(mut self, column: impl Into<String>) -> Result<Self> {
        self.event_id_column = Some(column.into());
        self.validate()?;
        Ok(self)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.names.is_empty() {
            return Err(EdbnError::invalid("schema needs at least one attribute"));
        }
        let mut seen = HashSet::new();
        for name in &self.names {
            if name.trim().is_empty() {
                return Err(EdbnError::invalid("attribute names must be non-empty"));
            }
            if !seen.insert(name.as_str()) {
                return Err(EdbnError::invalid(format!("duplicate attribute `{name}`")));
            }
        }
        if self.trace_id_column.trim().is_empty() {
            return Err(EdbnError::invalid("trace id column must be named"));
        }
        let roles = [Some(&self.trace_id_column), self.event_order_column.as_ref(), self.event_id_column.as_ref()];
        for role in roles.into_iter().flatten() {
            if seen.contains(role.as_str()) {
                return Err(EdbnError::invalid(format!(
                    "column `{role}` cannot be both an attribute and an identifier"
                )));
            }
        }
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn trace_id_column(&self) -> &str {
        &self.trace_id_column
    }

    pub fn event_order_column(&self) -> Option<&str> {
        self.event_order_column.as_deref()
    }

    pub fn event_id_column(&self) -> Option<&str> {
        self.event_id_column.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub id: String,
    pub values: Vec<String>,
}

impl Event {
    pub fn new<S: Into<String>>(id: impl Into<String>, values: impl IntoIterator<Item = S>) -> Self {
        Event { id: id.into(), values: values.into_iter().map(Into::into).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub trace_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn new(trace_id: impl Into<String>, events: Vec<Event>) -> Self {
        Trace { trace_id: trace_id.into(), events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    schema: AttributeSchema,
    traces: Vec<Trace>,
}

impl EventLog {
    /// Builds a log, checking every event against the schema.
    pub fn new(schema: AttributeSchema, traces: Vec<Trace>) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut trace_ids = HashSet::new();
        for trace in &traces {
            if !trace_ids.insert(trace.trace_id.as_str()) {
                return Err(EdbnError::invalid(format!("duplicate trace id `{}`", trace.trace_id)));
            }
            if trace.events.is_empty() {
                return Err(EdbnError::invalid(format!("trace `{}` has no events", trace.trace_id)));
            }
            for event in &trace.events {
                check_event(&schema, event)?;
                if !ids.insert(event.id.as_str()) {
                    return Err(EdbnError::invalid(format!("duplicate event id `{}`", event.id)));
                }
            }
        }
        Ok(EventLog { schema, traces })
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn into_traces(self) -> Vec<Trace> {
        self.traces
    }

    pub fn trace(&self, trace_id: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.trace_id == trace_id)
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.traces.iter().flat_map(|t| t.events.iter())
    }

    /// Distinct value tuples taken by `attributes` over all events.
    pub fn active_domain(&self, attributes: &[&str]) -> Result<BTreeSet<Vec<String>>> {
        if attributes.is_empty() {
            return Err(EdbnError::invalid("active domain needs at least one attribute"));
        }
        let idx = attributes
            .iter()
            .map(|a| self.schema.index_of(a).ok_or_else(|| EdbnError::UnknownVariable(a.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Ok(self
            .events()
            .map(|e| idx.iter().map(|&i| e.values[i].clone()).collect())
            .collect())
    }
}

pub(crate) fn check_event(schema: &AttributeSchema, event: &Event) -> Result<()> {
    if event.values.len() != schema.len() {
        return Err(EdbnError::invalid(format!(
            "event `{}` has {} values, schema has {} attributes",
            event.id,
            event.values.len(),
            schema.len()
        )));
    }
    if event.values.iter().any(|v| v == NONE_TOKEN) {
        return Err(EdbnError::invalid(format!(
            "event `{}` contains the reserved value {NONE_TOKEN}",
            event.id
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { delimiter: b',', has_header: true }
    }
}

/// Reads delimited text into an [`EventLog`].
///
/// Without a header row, columns are named by their 1-based position.
/// Without an id column, an event's id is its 0-based data row index.
pub fn parse_log<R: Read>(input: R, schema: &AttributeSchema, options: ParseOptions) -> Result<EventLog> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut records = reader.records();
    let mut header: Option<Vec<String>> = None;
    if options.has_header {
        match records.next() {
            None => return Err(EdbnError::EmptyLog),
            Some(rec) => {
                let rec = rec.map_err(csv_error)?;
                header = Some(rec.iter().map(str::to_string).collect());
            }
        }
    }

    let mut width = header.as_ref().map(Vec::len);
    let mut layout: Option<Layout> = header.as_ref().map(|h| Layout::resolve(schema, h)).transpose()?;

    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<(Event, Option<String>)>> = HashMap::new();
    let mut row_index = 0usize;

    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        match width {
            None => {
                width = Some(rec.len());
                let names: Vec<String> = (1..=rec.len()).map(|i| i.to_string()).collect();
                layout = Some(Layout::resolve(schema, &names)?);
            }
            Some(w) if w != rec.len() => {
                return Err(EdbnError::Parse {
                    line,
                    message: format!("expected {w} fields, found {}", rec.len()),
                });
            }
            Some(_) => {}
        }
        let layout = layout.as_ref().expect("layout resolved with first row");

        let trace_id = rec[layout.trace].to_string();
        if trace_id.is_empty() {
            return Err(EdbnError::Parse { line, message: "missing trace id".into() });
        }
        let values: Vec<String> = layout.attrs.iter().map(|&i| rec[i].to_string()).collect();
        if values.iter().any(|v| v == NONE_TOKEN) {
            return Err(EdbnError::Parse {
                line,
                message: format!("value {NONE_TOKEN} is reserved"),
            });
        }
        let id = match layout.id {
            Some(i) => rec[i].to_string(),
            None => row_index.to_string(),
        };
        let order_key = layout.order.map(|i| rec[i].to_string());
        row_index += 1;

        let bucket = grouped.entry(trace_id.clone()).or_insert_with(|| {
            order.push(trace_id);
            Vec::new()
        });
        bucket.push((Event { id, values }, order_key));
    }

    if row_index == 0 {
        return Err(EdbnError::EmptyLog);
    }

    let traces = order
        .into_iter()
        .map(|trace_id| {
            let mut events = grouped.remove(&trace_id).unwrap_or_default();
            if schema.event_order_column.is_some() {
                sort_by_order_key(&mut events);
            }
            Trace { trace_id, events: events.into_iter().map(|(e, _)| e).collect() }
        })
        .collect();
    EventLog::new(schema.clone(), traces)
}

fn sort_by_order_key(events: &mut [(Event, Option<String>)]) {
    let numeric: Option<Vec<f64>> = events
        .iter()
        .map(|(_, k)| k.as_deref().and_then(|s| s.parse::<f64>().ok()))
        .collect();
    match numeric {
        Some(keys) => {
            let mut idx: Vec<usize> = (0..events.len()).collect();
            idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
            let sorted: Vec<_> = idx.iter().map(|&i| events[i].clone()).collect();
            events.clone_from_slice(&sorted);
        }
        None => events.sort_by(|a, b| a.1.cmp(&b.1)),
    }
}

fn csv_error(err: csv::Error) -> EdbnError {
    let line = err.position().map_or(0, |p| p.line());
    EdbnError::Parse { line, message: err.to_string() }
}

struct Layout {
    trace: usize,
    id: Option<usize>,
    order: Option<usize>,
    attrs: Vec<usize>,
}

impl Layout {
    fn resolve(schema: &AttributeSchema, header: &[String]) -> Result<Self> {
        let find = |name: &str| {
            header.iter().position(|h| h == name).ok_or_else(|| {
                EdbnError::SchemaMismatch(format!("column `{name}` not found in input"))
            })
        };
        Ok(Layout {
            trace: find(&schema.trace_id_column)?,
            id: schema.event_id_column.as_deref().map(find).transpose()?,
            order: schema.event_order_column.as_deref().map(find).transpose()?,
            attrs: schema.names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        })
    }
}

/// Writes a log as delimited text with a header row.
///
/// Columns are the event id column (named after the schema's id column, or
/// `event_id`), the trace id column, then the attributes in schema order.
pub fn write_log<W: Write>(log: &EventLog, output: W, delimiter: u8) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().delimiter(delimiter).from_writer(output);
    let schema = log.schema();
    let mut header = vec![schema.event_id_column().unwrap_or("event_id"), schema.trace_id_column()];
    header.extend(schema.names().iter().map(String::as_str));
    writer.write_record(&header).map_err(csv_write_error)?;
    for trace in log.traces() {
        for event in &trace.events {
            let mut row = vec![event.id.as_str(), trace.trace_id.as_str()];
            row.extend(event.values.iter().map(String::as_str));
            writer.write_record(&row).map_err(csv_write_error)?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn csv_write_error(err: csv::Error) -> EdbnError {
    match err.into_kind() {
        csv::ErrorKind::Io(e) => EdbnError::Io(e),
        other => EdbnError::Internal(format!("{other:?}")),
    }
}

/// A time-sliced attribute. Slice 0 is the current event, slice `l` the
/// `l`-th predecessor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Var {
    pub slice: usize,
    pub attr: usize,
}

impl Var {
    pub const fn new(attr: usize, slice: usize) -> Self {
        Var { slice, attr }
    }

    pub const fn current(attr: usize) -> Self {
        Var { slice: 0, attr }
    }

    pub fn display<'a>(&self, schema: &'a AttributeSchema) -> VarName<'a> {
        VarName { name: &schema.names()[self.attr], slice: self.slice }
    }
}

pub struct VarName<'a> {
    name: &'a str,
    slice: usize,
}

impl fmt::Display for VarName<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.name, self.slice)
    }
}

/// Interned values of one attribute. Code 0 is reserved for `None`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Domain {
    values: Vec<String>,
    index: HashMap<String, u32>,
}

impl Domain {
    pub fn new() -> Self {
        Domain { values: vec![NONE_TOKEN.to_string()], index: HashMap::new() }
    }

    pub fn intern(&mut self, value: &str) -> u32 {
        if let Some(&code) = self.index.get(value) {
            return code;
        }
        let code = self.values.len() as u32;
        self.values.push(value.to_string());
        self.index.insert(value.to_string(), code);
        code
    }

    /// Code of a value, or [`UNSEEN_CODE`] when the value was never interned.
    pub fn lookup(&self, value: &str) -> u32 {
        self.index.get(value).copied().unwrap_or(UNSEEN_CODE)
    }

    /// Value behind a code; `None` for the padding code.
    pub fn value(&self, code: u32) -> Option<&str> {
        match code {
            NONE_CODE => None,
            UNSEEN_CODE => Some("<unseen>"),
            c => self.values.get(c as usize).map(String::as_str),
        }
    }

    /// Number of real (non-padding) values.
    pub fn len(&self) -> usize {
        self.values.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> impl Iterator<Item = &str> {
        self.values.iter().skip(1).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KContextRow {
    pub event_id: String,
    pub trace_id: String,
    /// One code per variable, in [`KContextLog::variables`] order.
    pub codes: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct KContextLog {
    k: usize,
    schema: AttributeSchema,
    variables: Vec<Var>,
    domains: Vec<Domain>,
    rows: Vec<KContextRow>,
}

/// Variables of a k-context in positional order: slices `k..=1`, then the
/// current slice, attributes in schema order within each slice.
pub fn context_variables(k: usize, n_attrs: usize) -> Vec<Var> {
    (0..=k).rev().flat_map(|slice| (0..n_attrs).map(move |attr| Var { slice, attr })).collect()
}

/// Position of `var` in [`context_variables`] order.
pub fn var_position(k: usize, n_attrs: usize, var: Var) -> usize {
    (k - var.slice) * n_attrs + var.attr
}

/// Encodes the k-context rows of one event sequence.
pub(crate) fn encode_contexts(
    events: &[Event],
    k: usize,
    n_attrs: usize,
    mut encode: impl FnMut(usize, &str) -> u32,
) -> Vec<Vec<u32>> {
    let current: Vec<Vec<u32>> = events
        .iter()
        .map(|e| e.values.iter().enumerate().map(|(a, v)| encode(a, v)).collect())
        .collect();
    (0..events.len())
        .map(|i| {
            let mut codes = Vec::with_capacity((k + 1) * n_attrs);
            for l in (1..=k).rev() {
                match i.checked_sub(l) {
                    Some(p) => codes.extend_from_slice(&current[p]),
                    None => codes.extend(std::iter::repeat_n(NONE_CODE, n_attrs)),
                }
            }
            codes.extend_from_slice(&current[i]);
            codes
        })
        .collect()
}

/// Replaces every event with its k-context.
pub fn build_k_context(log: &EventLog, k: usize) -> Result<KContextLog> {
    if k == 0 {
        return Err(EdbnError::invalid("k must be at least 1"));
    }
    let n = log.schema().len();
    let mut domains = vec![Domain::new(); n];
    let mut rows = Vec::with_capacity(log.event_count());
    for trace in log.traces() {
        let encoded = encode_contexts(&trace.events, k, n, |a, v| domains[a].intern(v));
        for (event, codes) in trace.events.iter().zip(encoded) {
            rows.push(KContextRow {
                event_id: event.id.clone(),
                trace_id: trace.trace_id.clone(),
                codes,
            });
        }
    }
    Ok(KContextLog {
        k,
        schema: log.schema().clone(),
        variables: context_variables(k, n),
        domains,
        rows,
    })
}

impl KContextLog {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn variables(&self) -> &[Var] {
        &self.variables
    }

    pub fn rows(&self) -> &[KContextRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn domain(&self, attr: usize) -> &Domain {
        &self.domains[attr]
    }

    pub fn position(&self, var: Var) -> Result<usize> {
        if var.slice > self.k || var.attr >= self.schema.len() {
            return Err(EdbnError::UnknownVariable(format!("{var:?}")));
        }
        Ok(var_position(self.k, self.schema.len(), var))
    }

    /// Looks a variable up by its exported name, e.g. `UserID_1`.
    pub fn variable(&self, name: &str) -> Result<Var> {
        let unknown = || EdbnError::UnknownVariable(name.to_string());
        let (attr, slice) = name.rsplit_once('_').ok_or_else(unknown)?;
        let slice: usize = slice.parse().map_err(|_| unknown())?;
        let attr = self.schema.index_of(attr).ok_or_else(unknown)?;
        if slice > self.k {
            return Err(unknown());
        }
        Ok(Var { slice, attr })
    }

    pub fn var_name(&self, var: Var) -> String {
        var.display(&self.schema).to_string()
    }

    pub fn column(&self, var: Var) -> Result<Vec<u32>> {
        let pos = self.position(var)?;
        Ok(self.rows.iter().map(|r| r.codes[pos]).collect())
    }

    pub fn value(&self, row: usize, var: Var) -> Result<Option<&str>> {
        let pos = self.position(var)?;
        Ok(self.domains[var.attr].value(self.rows[row].codes[pos]))
    }

    /// Distinct value tuples of `vars` over all rows, `None` included.
    pub fn active_domain(&self, vars: &[Var]) -> Result<BTreeSet<Vec<Option<String>>>> {
        if vars.is_empty() {
            return Err(EdbnError::invalid("active domain needs at least one variable"));
        }
        let pos = vars.iter().map(|&v| self.position(v)).collect::<Result<Vec<_>>>()?;
        Ok(self
            .rows
            .iter()
            .map(|r| {
                vars.iter()
                    .zip(&pos)
                    .map(|(v, &p)| self.domains[v.attr].value(r.codes[p]).map(str::to_string))
                    .collect()
            })
            .collect())
    }

    /// Writes the k-context log as delimited text with `<Attr>_<slice>`
    /// columns, padding rendered as [`NONE_TOKEN`].
    pub fn write<W: Write>(&self, output: W, delimiter: u8) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().delimiter(delimiter).from_writer(output);
        let mut header = vec![self.schema.trace_id_column().to_string(), "event_id".to_string()];
        header.extend(self.variables.iter().map(|&v| self.var_name(v)));
        writer.write_record(&header).map_err(csv_write_error)?;
        for row in &self.rows {
            let mut record = vec![row.trace_id.as_str(), row.event_id.as_str()];
            record.extend(
                self.variables
                    .iter()
                    .zip(&row.codes)
                    .map(|(v, &c)| self.domains[v.attr].value(c).unwrap_or(NONE_TOKEN)),
            );
            writer.write_record(&record).map_err(csv_write_error)?;
        }
        writer.flush()?;
        Ok(())
    }
}
