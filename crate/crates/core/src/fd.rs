//! Functional dependency discovery and FD mapping functions.
//!
//! An FD `Y -> X` is assumed whenever `U(X|Y)` exceeds the threshold, with
//! `X` a current-slice attribute and `Y` any other context variable. The
//! mapping for a noisy FD keeps the majority target value per source value.

use std::collections::{BTreeMap, HashMap};

use crate::error::{EdbnError, Result};
use crate::event_log::{KContextLog, Var, NONE_CODE};
use crate::ratio::Ratio;
use crate::stats::uncertainty_coefficient;

pub const DEFAULT_FD_THRESHOLD: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdEdge {
    pub source: Var,
    /// Attribute index of the determined variable; always in slice 0.
    pub target: usize,
    /// `U(target | source)` on the training rows.
    pub strength: f64,
}

impl FdEdge {
    pub fn target_var(&self) -> Var {
        Var::current(self.target)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdMapping {
    pub edge: FdEdge,
    /// Source code to target code. Keys never include the padding code.
    pub map: HashMap<u32, u32>,
    /// Rows whose target differs from `map[source]`, over all rows.
    pub violation: Ratio,
}

/// Finds every `source -> target` pair with `U(target | source) > threshold`.
///
/// Edges come out ordered by (source slice, source attribute, target).
pub fn discover_fds(ctx: &KContextLog, threshold: f64) -> Result<Vec<FdEdge>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(EdbnError::invalid(format!("FD threshold {threshold} outside (0, 1]")));
    }
    if ctx.is_empty() {
        return Err(EdbnError::EmptyLog);
    }
    let columns: Vec<Vec<u32>> =
        ctx.variables().iter().map(|&v| ctx.column(v)).collect::<Result<_>>()?;
    let n_attrs = ctx.schema().len();

    let mut sources: Vec<(usize, Var)> = ctx.variables().iter().copied().enumerate().collect();
    sources.sort_by_key(|&(_, v)| v);

    let mut edges = Vec::new();
    for &(src_pos, source) in &sources {
        for target in 0..n_attrs {
            let target_var = Var::current(target);
            if source == target_var {
                continue;
            }
            let tgt_pos = ctx.position(target_var)?;
            let strength = uncertainty_coefficient(&columns[tgt_pos], &columns[src_pos])?;
            if strength > threshold {
                edges.push(FdEdge { source, target, strength });
            }
        }
    }
    Ok(edges)
}

/// Builds the mapping function of an FD and its violation rate.
pub fn build_mapping(ctx: &KContextLog, edge: FdEdge) -> Result<FdMapping> {
    let src = ctx.column(edge.source)?;
    let tgt = ctx.column(edge.target_var())?;
    let target_domain = ctx.domain(edge.target);

    let mut counts: HashMap<u32, BTreeMap<u32, u64>> = HashMap::new();
    for (&s, &t) in src.iter().zip(&tgt) {
        if s != NONE_CODE {
            *counts.entry(s).or_default().entry(t).or_insert(0) += 1;
        }
    }

    let mut map = HashMap::with_capacity(counts.len());
    let mut violations = 0u64;
    for (source_code, targets) in counts {
        let best = targets
            .iter()
            .max_by(|a, b| {
                a.1.cmp(b.1).then_with(|| {
                    // ties go to the lexicographically smallest target value
                    target_domain.value(*b.0).cmp(&target_domain.value(*a.0))
                })
            })
            .map(|(&code, _)| code)
            .expect("at least one target per source");
        let total: u64 = targets.values().sum();
        violations += total - targets[&best];
        map.insert(source_code, best);
    }

    Ok(FdMapping { edge, map, violation: Ratio::new(violations, ctx.len() as u64) })
}

impl FdMapping {
    /// Probability of target code `y` given source code `x`.
    ///
    /// A source value outside the mapping (unseen or padding) defers
    /// judgement and gets the non-violation probability.
    pub fn probability(&self, x: u32, y: u32) -> f64 {
        match self.map.get(&x) {
            Some(&mapped) if mapped != y => self.violation.value(),
            _ => self.violation.complement(),
        }
    }
}
