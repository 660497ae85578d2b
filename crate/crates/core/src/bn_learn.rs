//! Conditional dependency structure over k-context variables.
//!
//! The structure is found by first-improvement hill climbing on
//! `AIC = LL - #params`, starting from the whitelist. Whitelisted edges are
//! the functional dependencies: they are fixed in the graph and never act as
//! CPT parents, so they take no part in the score or in the cycle check.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::error::{EdbnError, Result};
use crate::event_log::{KContextLog, Var};
use crate::fd::FdEdge;

/// Minimum score gain for a move to count as an improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from: Var,
    pub to: Var,
}

impl Edge {
    pub fn new(from: Var, to: Var) -> Self {
        Edge { from, to }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StructureConstraints {
    pub blacklist: BTreeSet<Edge>,
    pub whitelist: BTreeSet<Edge>,
}

/// Blacklists every edge into a history slice and whitelists the FDs.
///
/// The reverse of an FD edge is blacklisted as well (unless it is an FD
/// itself): a CPT edge `B -> A` next to the FD `A -> B` would count every
/// violation of the FD a second time.
pub fn make_constraints(variables: &[Var], fds: &[FdEdge]) -> Result<StructureConstraints> {
    let mut blacklist = BTreeSet::new();
    for &to in variables.iter().filter(|v| v.slice > 0) {
        for &from in variables {
            if from != to {
                blacklist.insert(Edge { from, to });
            }
        }
    }
    let whitelist: BTreeSet<Edge> =
        fds.iter().map(|fd| Edge { from: fd.source, to: fd.target_var() }).collect();
    for e in &whitelist {
        let reverse = Edge { from: e.to, to: e.from };
        if !whitelist.contains(&reverse) {
            blacklist.insert(reverse);
        }
    }
    if let Some(e) = whitelist.iter().find(|e| blacklist.contains(e)) {
        return Err(EdbnError::Internal(format!("FD edge {e:?} is blacklisted")));
    }
    Ok(StructureConstraints { blacklist, whitelist })
}

/// Edges of an eDBN graph. Every edge ends in the current slice.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dag {
    edges: BTreeSet<Edge>,
}

impl Dag {
    pub fn new(edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let edges: BTreeSet<Edge> = edges.into_iter().collect();
        if let Some(e) = edges.iter().find(|e| e.to.slice != 0) {
            return Err(EdbnError::invalid(format!("edge {e:?} does not end in the current slice")));
        }
        if let Some(e) = edges.iter().find(|e| e.from == e.to) {
            return Err(EdbnError::invalid(format!("self loop {e:?}")));
        }
        Ok(Dag { edges })
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn contains(&self, edge: &Edge) -> bool {
        self.edges.contains(edge)
    }

    /// Sources of edges into `attr` that are not in `exclude`, sorted.
    pub fn parents_excluding(&self, attr: usize, exclude: &HashSet<Edge>) -> Vec<Var> {
        self.edges
            .iter()
            .filter(|e| e.to == Var::current(attr) && !exclude.contains(e))
            .map(|e| e.from)
            .collect()
    }

    /// True when the edges outside `exclude` form no directed cycle.
    pub fn is_acyclic_excluding(&self, exclude: &HashSet<Edge>) -> bool {
        let within: Vec<&Edge> = self
            .edges
            .iter()
            .filter(|e| e.from.slice == 0 && !exclude.contains(e))
            .collect();
        let nodes: BTreeSet<usize> = within.iter().flat_map(|e| [e.from.attr, e.to.attr]).collect();
        let mut indegree: BTreeMap<usize, usize> = nodes.iter().map(|&n| (n, 0)).collect();
        for e in &within {
            *indegree.get_mut(&e.to.attr).unwrap() += 1;
        }
        let mut ready: Vec<usize> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
        let mut visited = 0;
        while let Some(n) = ready.pop() {
            visited += 1;
            for e in within.iter().filter(|e| e.from.attr == n) {
                let d = indegree.get_mut(&e.to.attr).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(e.to.attr);
                }
            }
        }
        visited == nodes.len()
    }
}

/// Column data and per-variable domain sizes used while scoring families.
struct FamilyScorer<'a> {
    ctx: &'a KContextLog,
    columns: HashMap<Var, Vec<u32>>,
    cardinality: HashMap<Var, usize>,
}

impl<'a> FamilyScorer<'a> {
    fn new(ctx: &'a KContextLog) -> Result<Self> {
        let mut columns = HashMap::new();
        let mut cardinality = HashMap::new();
        for &v in ctx.variables() {
            let col = ctx.column(v)?;
            let distinct: HashSet<u32> = col.iter().copied().collect();
            cardinality.insert(v, distinct.len());
            columns.insert(v, col);
        }
        Ok(FamilyScorer { ctx, columns, cardinality })
    }

    /// `LL(child | parents) - #params(child | parents)`.
    fn score(&self, child: usize, parents: &[Var]) -> f64 {
        let child_var = Var::current(child);
        let child_col = &self.columns[&child_var];
        let keys = self.parent_keys(parents);

        let mut joint: HashMap<(u64, u32), u64> = HashMap::new();
        let mut marginal: HashMap<u64, u64> = HashMap::new();
        for (&key, &c) in keys.iter().zip(child_col) {
            *joint.entry((key, c)).or_insert(0) += 1;
            *marginal.entry(key).or_insert(0) += 1;
        }
        let ll: f64 = joint
            .iter()
            .map(|(&(key, _), &n)| {
                let total = marginal[&key];
                if n == total {
                    0.0
                } else {
                    n as f64 * (n as f64 / total as f64).ln()
                }
            })
            .sum();

        let configs: f64 = parents.iter().map(|p| self.cardinality[p] as f64).product();
        let params = (self.cardinality[&child_var] as f64 - 1.0) * configs;
        ll - params
    }

    /// One integer per row identifying its parent configuration.
    fn parent_keys(&self, parents: &[Var]) -> Vec<u64> {
        let n = self.ctx.len();
        if parents.is_empty() {
            return vec![0; n];
        }
        let mut ids: HashMap<Vec<u32>, u64> = HashMap::new();
        (0..n)
            .map(|r| {
                let tuple: Vec<u32> = parents.iter().map(|p| self.columns[p][r]).collect();
                let next = ids.len() as u64;
                *ids.entry(tuple).or_insert(next)
            })
            .collect()
    }
}

/// Total AIC of the conditional (non-whitelisted) part of `dag`.
pub fn aic_score(ctx: &KContextLog, dag: &Dag, constraints: &StructureConstraints) -> Result<f64> {
    let scorer = FamilyScorer::new(ctx)?;
    let fixed: HashSet<Edge> = constraints.whitelist.iter().copied().collect();
    Ok((0..ctx.schema().len())
        .map(|a| scorer.score(a, &dag.parents_excluding(a, &fixed)))
        .sum())
}

/// Greedy hill climbing over single-edge additions and deletions.
///
/// Candidates are visited in (source slice, source attribute, target
/// attribute) order and the first move that improves the score by more
/// than [`MIN_IMPROVEMENT`] is taken, after which the scan restarts.
pub fn learn_structure(ctx: &KContextLog, constraints: &StructureConstraints) -> Result<Dag> {
    if ctx.is_empty() {
        return Err(EdbnError::EmptyLog);
    }
    if let Some(e) = constraints.whitelist.iter().find(|e| constraints.blacklist.contains(e)) {
        return Err(EdbnError::invalid(format!("edge {e:?} is both black- and whitelisted")));
    }
    let scorer = FamilyScorer::new(ctx)?;
    let n_attrs = ctx.schema().len();
    let fixed: HashSet<Edge> = constraints.whitelist.iter().copied().collect();

    let mut dag = Dag::new(constraints.whitelist.iter().copied())?;
    let mut parents: Vec<Vec<Var>> = (0..n_attrs).map(|a| dag.parents_excluding(a, &fixed)).collect();
    let mut family: Vec<f64> = (0..n_attrs).map(|a| scorer.score(a, &parents[a])).collect();

    let mut sources: Vec<Var> = ctx.variables().to_vec();
    sources.sort();
    let candidates: Vec<Edge> = sources
        .iter()
        .flat_map(|&from| (0..n_attrs).map(move |t| Edge { from, to: Var::current(t) }))
        .filter(|e| e.from != e.to && !constraints.blacklist.contains(e) && !fixed.contains(e))
        .collect();

    // score change of toggling a candidate, valid until its target changes
    let mut deltas: HashMap<Edge, f64> = HashMap::new();

    'search: loop {
        for &edge in &candidates {
            let target = edge.to.attr;
            let present = dag.contains(&edge);
            if !present && edge.from.slice == 0 {
                let mut trial = dag.clone();
                trial.edges.insert(edge);
                if !trial.is_acyclic_excluding(&fixed) {
                    continue;
                }
            }
            let delta = *deltas.entry(edge).or_insert_with(|| {
                let toggled = toggle(&parents[target], edge.from);
                scorer.score(target, &toggled) - family[target]
            });
            if delta > MIN_IMPROVEMENT {
                if present {
                    dag.edges.remove(&edge);
                } else {
                    dag.edges.insert(edge);
                }
                debug_assert!(dag.is_acyclic_excluding(&fixed));
                parents[target] = toggle(&parents[target], edge.from);
                family[target] = scorer.score(target, &parents[target]);
                deltas.retain(|e, _| e.to.attr != target);
                continue 'search;
            }
        }
        break;
    }
    Ok(dag)
}

fn toggle(parents: &[Var], var: Var) -> Vec<Var> {
    let mut out: Vec<Var> = parents.to_vec();
    match out.binary_search(&var) {
        Ok(i) => {
            out.remove(i);
        }
        Err(i) => out.insert(i, var),
    }
    out
}

/// Counts of the child's values for one parent configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CptRow {
    pub total: u64,
    pub counts: BTreeMap<u32, u64>,
}

impl CptRow {
    pub fn probability(&self, child: u32) -> f64 {
        self.counts.get(&child).map_or(0.0, |&c| c as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cpt {
    pub child: usize,
    pub parents: Vec<Var>,
    /// Parent codes (in `parents` order) to child value counts.
    pub rows: HashMap<Vec<u32>, CptRow>,
}

impl Cpt {
    /// `P(child | parent_codes)`, or `None` for an unseen parent configuration.
    pub fn probability(&self, parent_codes: &[u32], child: u32) -> Option<f64> {
        self.rows.get(parent_codes).map(|row| row.probability(child))
    }

    pub fn has_parents(&self) -> bool {
        !self.parents.is_empty()
    }
}

/// Maximum-likelihood CPTs for every current-slice attribute, with parents
/// taken from `dag` minus the FD edges.
pub fn fit_cpts(ctx: &KContextLog, dag: &Dag, fds: &[FdEdge]) -> Result<Vec<Cpt>> {
    let fd_edges: HashSet<Edge> = fds.iter().map(|f| Edge { from: f.source, to: f.target_var() }).collect();
    (0..ctx.schema().len())
        .map(|child| {
            let parents = dag.parents_excluding(child, &fd_edges);
            let positions = parents.iter().map(|&p| ctx.position(p)).collect::<Result<Vec<_>>>()?;
            let child_pos = ctx.position(Var::current(child))?;
            let mut rows: HashMap<Vec<u32>, CptRow> = HashMap::new();
            for r in ctx.rows() {
                let key: Vec<u32> = positions.iter().map(|&p| r.codes[p]).collect();
                let row = rows.entry(key).or_default();
                row.total += 1;
                *row.counts.entry(r.codes[child_pos]).or_insert(0) += 1;
            }
            Ok(Cpt { child, parents, rows })
        })
        .collect()
}
