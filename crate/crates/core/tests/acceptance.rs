//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use edbn::bn_learn::{learn_structure, make_constraints, Dag, Edge};
use edbn::detect::{explain, rank_traces, score_trace};
use edbn::edbn::FactorKind;
use edbn::eval::{auc, run_experiment, LabeledScore};
use edbn::fd::{discover_fds, FdEdge};
use edbn::stats::{uncertainty_coefficient_in, InfoUnit};
use edbn::synth::{inject_anomalies, ProcessModel, SplitMix64};
use edbn::{build_k_context, fit_edbn, fixtures, learn_edbn, AttributeSchema, EdbnModel, Event, EventLog, Trace, Var};

type Check = Result<String, String>;
type Criterion = fn() -> Check;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// 1. Worked example: new-value rates and the UserRole factor group of event 2.
fn worked_example() -> Check {
    let log = fixtures::access_log_normal();
    let model = learn_edbn(&log, 1, 0.99).map_err(err)?;
    let s = model.schema();
    let role = s.index_of("UserRole").unwrap();
    let act = s.index_of("Activity").unwrap();
    let (nv_role, nv_act) = (model.new_value(role).value(), model.new_value(act).value());
    ensure(nv_role == 0.2, || format!("new_value(UserRole) = {nv_role}"))?;
    ensure(nv_act == 0.4, || format!("new_value(Activity) = {nv_act}"))?;

    let ctx = build_k_context(&log, 1).map_err(err)?;
    let v = |name: &str| ctx.variable(name).unwrap();
    let fd = |src: &str, tgt: &str| FdEdge { source: v(src), target: v(tgt).attr, strength: 1.0 };
    let fds = vec![
        fd("Activity_1", "Type_0"),
        fd("Activity_0", "Type_0"),
        fd("Type_1", "Type_0"),
        fd("UserName_0", "UserID_0"),
        fd("UserID_0", "UserName_0"),
        fd("UserID_0", "UserRole_0"),
        fd("UserName_0", "UserRole_0"),
    ];
    let mut edges: Vec<Edge> = fds.iter().map(|f| Edge::new(f.source, f.target_var())).collect();
    edges.push(Edge::new(v("Activity_1"), v("Activity_0")));
    edges.push(Edge::new(v("Activity_0"), v("UserRole_0")));
    let fixed = fit_edbn(&ctx, Dag::new(edges).map_err(err)?, &fds).map_err(err)?;
    let trace = log.trace("1").unwrap();
    let pos = trace.events.iter().position(|e| e.id == "2").ok_or("event 2 missing")?;
    let probs = fixed.sequence_probabilities(&trace.events).map_err(err)?;
    let group = probs[pos].attribute_probability(role);
    ensure((group - 0.48).abs() <= 1e-9, || format!("UserRole group of event 2 = {group}"))?;
    Ok(format!("nv(UserRole)={nv_role}, nv(Activity)={nv_act}, group={group:.12}"))
}

// 2. FD discovery against a grouping oracle.
fn fd_discovery() -> Check {
    let ctx = build_k_context(&fixtures::access_log_normal(), 1).map_err(err)?;
    let found: BTreeSet<(Var, usize)> =
        discover_fds(&ctx, 0.99).map_err(err)?.iter().map(|f| (f.source, f.target)).collect();

    // every source value sees exactly one target value
    let mut oracle = BTreeSet::new();
    for &src in ctx.variables() {
        for tgt in 0..ctx.schema().len() {
            if src == Var::current(tgt) {
                continue;
            }
            let mut seen: HashMap<Option<&str>, Option<&str>> = HashMap::new();
            let functional = (0..ctx.len()).all(|r| {
                let (s, t) = (ctx.value(r, src).unwrap(), ctx.value(r, Var::current(tgt)).unwrap());
                *seen.entry(s).or_insert(t) == t
            });
            if functional {
                oracle.insert((src, tgt));
            }
        }
    }
    ensure(found == oracle, || format!("discovered {} FDs, oracle {}", found.len(), oracle.len()))?;
    let s = ctx.schema();
    let (id, name, role) = (s.index_of("UserID").unwrap(), s.index_of("UserName").unwrap(), s.index_of("UserRole").unwrap());
    for (src, tgt) in [(id, role), (name, role), (id, name), (name, id)] {
        ensure(found.contains(&(Var::current(src), tgt)), || {
            format!("missing {} -> {}_0", ctx.var_name(Var::current(src)), s.names()[tgt])
        })?;
    }
    Ok(format!("{} FDs, equal to the oracle, user FDs present", found.len()))
}

// 3. The 2-context of event 3.
fn k_context() -> Check {
    let ctx = build_k_context(&fixtures::access_log_normal(), 2).map_err(err)?;
    let row = ctx.rows().iter().position(|r| r.event_id == "3").ok_or("event 3 missing")?;
    let got: Vec<Option<&str>> = ctx.variables().iter().map(|&v| ctx.value(row, v).unwrap()).collect();
    let history = [
        "User-Actions", "Logged in", "001", "User1", "employee",
        "Request Permission", "Create Request", "001", "User1", "employee",
    ];
    let current = ["Request Permission", "Send Mail", "001", "User1", "employee"];
    let expected: Vec<Option<&str>> = history.iter().chain(&current).map(|s| Some(*s)).collect();
    ensure(got == expected, || format!("context of event 3: {got:?}"))?;
    let n = ctx.schema().len();
    ensure(got[..2 * n] == expected[..2 * n], || "2-history differs".into())?;
    Ok("2-history and 2-context match token for token".into())
}

// 4. Ranking and explanation on the access log.
fn end_to_end() -> Check {
    let model = learn_edbn(&fixtures::access_log_normal(), 1, 0.99).map_err(err)?;
    let full = fixtures::access_log_full();
    let ranking = rank_traces(&model, &full).map_err(err)?;
    let first = &ranking.scores[0];
    ensure(first.trace_id == "4" && first.score == 0.0, || format!("first is {} at {}", first.trace_id, first.score))?;
    ensure(ranking.scores[1..].iter().all(|s| s.score > 0.0), || "a normal trace scored 0".into())?;
    let top = explain(first, 1).map_err(err)?;
    let s = model.schema();
    let (id, role) = (s.index_of("UserID").unwrap(), s.index_of("UserRole").unwrap());
    ensure(
        top[0].attr == role && top[0].kind == FactorKind::Functional { source: Var::current(id) },
        || format!("top factor {:?}", top[0]),
    )?;
    Ok(format!("trace 4 first with score 0, blamed on UserRole_0 via UserID_0 (event {})", top[0].event_id))
}

// 5. Synthetic AUC levels.
fn synthetic_auc() -> Check {
    let start = Instant::now();
    let process = ProcessModel::shipping();
    let clean_train = process.generate(5000, 101).map_err(err)?;
    let test_base = process.generate(1000, 202).map_err(err)?;
    let mut cells = Vec::new();
    let mut failed = Vec::new();
    for (train_frac, test_frac, floor) in [(0.0, 0.01, 0.95), (0.0, 0.05, 0.95), (0.0, 0.10, 0.95), (0.025, 0.10, 0.90)] {
        let train = if train_frac > 0.0 {
            inject_anomalies(&clean_train, train_frac, 303).map_err(err)?.log
        } else {
            clean_train.clone()
        };
        let test = inject_anomalies(&test_base, test_frac, 404).map_err(err)?;
        let auc = run_experiment(&train, &test, 1, 0.99).map_err(err)?.auc;
        cells.push(format!("train {train_frac}/test {test_frac}: {auc:.4}"));
        if auc < floor {
            failed.push(format!("AUC {auc:.4} < {floor} at train {train_frac}, test {test_frac}"));
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(120) {
        failed.push(format!("took {elapsed:.1?}"));
    }
    let summary = format!("{} in {elapsed:.1?}", cells.join(", "));
    if failed.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", failed.join("; ")))
    }
}

// 6. Trace probabilities against a brute-force factor product.

struct Oracle<'a> {
    k: usize,
    train: &'a EventLog,
    dag: &'a [Edge],
    fds: &'a [FdEdge],
}

fn value_at(events: &[Event], i: usize, v: Var) -> Option<&str> {
    (i >= v.slice).then(|| events[i - v.slice].values[v.attr].as_str())
}

fn parent_key<'e>(parents: &[Var], events: &'e [Event], i: usize) -> Vec<Option<&'e str>> {
    parents.iter().map(|&p| value_at(events, i, p)).collect()
}

impl Oracle<'_> {
    fn training_rows(&self) -> Vec<(&[Event], usize)> {
        self.train.traces().iter().flat_map(|t| (0..t.events.len()).map(move |i| (t.events.as_slice(), i))).collect()
    }

    fn event_log_probability(&self, events: &[Event], i: usize) -> f64 {
        let rows = self.training_rows();
        let total = rows.len() as f64;
        let n = self.train.schema().len();
        let mut log_p = 0.0;
        for a in 0..n {
            let x = events[i].values[a].as_str();
            let domain: BTreeSet<&str> = rows.iter().map(|(e, j)| e[*j].values[a].as_str()).collect();
            let nv = domain.len() as f64 / total;
            log_p += if domain.contains(x) { 1.0 - nv } else { nv }.ln();

            let fd_sources: Vec<Var> = self.fds.iter().filter(|f| f.target == a).map(|f| f.source).collect();
            let parents: Vec<Var> = self
                .dag
                .iter()
                .filter(|e| e.to == Var::current(a) && !fd_sources.contains(&e.from))
                .map(|e| e.from)
                .collect();
            if !parents.is_empty() {
                let mine = parent_key(&parents, events, i);
                let keys: HashSet<Vec<Option<&str>>> = rows.iter().map(|(e, j)| parent_key(&parents, e, *j)).collect();
                let nr = keys.len() as f64 / total;
                let matching: Vec<&str> =
                    rows.iter().filter(|(e, j)| parent_key(&parents, e, *j) == mine).map(|(e, j)| e[*j].values[a].as_str()).collect();
                log_p += if matching.is_empty() {
                    nr.ln()
                } else {
                    let hits = matching.iter().filter(|v| **v == x).count() as f64;
                    ((1.0 - nr) * hits / matching.len() as f64).ln()
                };
            }

            for f in self.fds.iter().filter(|f| f.target == a) {
                let mut by_source: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
                for (e, j) in &rows {
                    if let Some(s) = value_at(e, *j, f.source) {
                        *by_source.entry(s).or_default().entry(e[*j].values[a].as_str()).or_default() += 1;
                    }
                }
                let mut violations = 0;
                let mut mapping = BTreeMap::new();
                for (s, targets) in &by_source {
                    let best = targets.values().max().unwrap();
                    let winner = targets.iter().find(|(_, c)| *c == best).unwrap().0;
                    violations += targets.values().sum::<usize>() - best;
                    mapping.insert(*s, *winner);
                }
                let viol = violations as f64 / total;
                let broken = value_at(events, i, f.source).and_then(|s| mapping.get(s)).is_some_and(|m| *m != x);
                log_p += if broken { viol } else { 1.0 - viol }.ln();
            }
        }
        log_p
    }

    fn trace_log_probability(&self, events: &[Event]) -> f64 {
        (0..events.len()).map(|i| self.event_log_probability(events, i)).sum()
    }
}

fn random_log(rng: &mut SplitMix64, schema: &AttributeSchema, traces: usize, len: usize, card: u64, unseen: bool) -> EventLog {
    let n = schema.len();
    let mut next_id = 0;
    let traces = (0..traces)
        .map(|t| {
            let events = (0..len)
                .map(|_| {
                    let values: Vec<String> = (0..n)
                        .map(|a| {
                            let extra = if unseen { 2 } else { 0 };
                            format!("v{a}_{}", rng.below(card + extra))
                        })
                        .collect();
                    next_id += 1;
                    Event::new(format!("e{next_id}"), values)
                })
                .collect();
            Trace::new(format!("t{t}"), events)
        })
        .collect();
    EventLog::new(schema.clone(), traces).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a == f64::NEG_INFINITY && b == f64::NEG_INFINITY) || (a - b).abs() <= 1e-12
}

fn oracle_equivalence() -> Check {
    let schema = AttributeSchema::new(["a", "b", "c"], "t").unwrap();
    let mut compared = 0;
    for round in 0..10u64 {
        let mut rng = SplitMix64::new(1000 + round);
        let k = 1 + rng.index(2);
        let train = random_log(&mut rng, &schema, 12, 5, 3, false);
        let ctx = build_k_context(&train, k).map_err(err)?;
        let mut fds = Vec::new();
        let mut edges = Vec::new();
        for &src in ctx.variables() {
            for tgt in 0..schema.len() {
                let to = Var::current(tgt);
                if src == to {
                    continue;
                }
                match rng.below(10) {
                    0 | 1 => {
                        fds.push(FdEdge { source: src, target: tgt, strength: 1.0 });
                        edges.push(Edge::new(src, to));
                    }
                    // current-slice conditional edges only run forward, keeping the graph acyclic
                    2..=4 if src.slice > 0 || src.attr < tgt => edges.push(Edge::new(src, to)),
                    _ => {}
                }
            }
        }
        let model = fit_edbn(&ctx, Dag::new(edges.clone()).map_err(err)?, &fds).map_err(err)?;
        let oracle = Oracle { k, train: &train, dag: &edges, fds: &fds };
        let test = random_log(&mut rng, &schema, 10, 5, 3, true);
        for trace in test.traces() {
            let got = model.trace_log_probability(trace).map_err(err)?;
            let want = oracle.trace_log_probability(&trace.events);
            ensure(close(got, want), || format!("round {round} (k={}) trace {}: {got} vs {want}", oracle.k, trace.trace_id))?;
            let score = score_trace(&model, trace).map_err(err)?.score;
            let root = want.exp().powf(1.0 / trace.len() as f64);
            let by_log = (want / trace.len() as f64).exp();
            ensure((score - by_log).abs() <= 1e-12 && (score - root).abs() <= 1e-9 * root.max(1e-300), || {
                format!("score {score} vs n-th root {root}")
            })?;
            compared += 1;
        }
    }
    Ok(format!("{compared} random 5-event traces match the brute-force product"))
}

// 7. Property suites.
fn property_suites() -> Check {
    let mut runner = TestRunner::new(Config { cases: 32, failure_persistence: None, ..Config::default() });
    let logs = (1u64..u64::MAX, 1usize..3, 2u64..4).prop_map(|(seed, k, card)| {
        let schema = AttributeSchema::new(["a", "b", "c", "d"], "t").unwrap();
        let mut rng = SplitMix64::new(seed);
        (random_log(&mut rng, &schema, 8, 6, card, false), k)
    });

    runner
        .run(&logs, |(log, k)| {
            let model = learn_edbn(&log, k, 0.99).unwrap();
            for cpt in model.cpts() {
                for row in cpt.rows.values() {
                    let sum: f64 = row.counts.keys().map(|&c| row.probability(c)).sum();
                    prop_assert!((sum - 1.0).abs() < 1e-12);
                }
            }
            Ok(())
        })
        .map_err(|e| format!("CPT rows: {e}"))?;

    runner
        .run(&logs, |(log, k)| {
            let ctx = build_k_context(&log, k).unwrap();
            let fds = discover_fds(&ctx, 0.99).unwrap();
            let constraints = make_constraints(ctx.variables(), &fds).unwrap();
            let dag = learn_structure(&ctx, &constraints).unwrap();
            prop_assert!(constraints.whitelist.iter().all(|e| dag.contains(e)));
            prop_assert!(dag.edges().iter().all(|e| !constraints.blacklist.contains(e)));
            prop_assert!(dag.edges().iter().all(|e| e.to.slice == 0));
            let fixed: HashSet<Edge> = constraints.whitelist.iter().copied().collect();
            prop_assert!(dag.is_acyclic_excluding(&fixed));
            Ok(())
        })
        .map_err(|e| format!("DAG constraints: {e}"))?;

    let columns = prop::collection::vec((0u8..4, 0u8..4), 1..80);
    runner
        .run(&columns, |pairs| {
            let (x, y): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let nats = uncertainty_coefficient_in(&x, &y, InfoUnit::Nats).unwrap();
            let bits = uncertainty_coefficient_in(&x, &y, InfoUnit::Bits).unwrap();
            prop_assert!((nats - bits).abs() < 1e-12);
            Ok(())
        })
        .map_err(|e| format!("U base invariance: {e}"))?;

    let scored = prop::collection::vec((0u8..30, any::<bool>()), 2..200)
        .prop_filter("two classes", |v| v.iter().any(|p| p.1) && v.iter().any(|p| !p.1));
    runner
        .run(&scored, |v| {
            let scores: Vec<LabeledScore> = v
                .iter()
                .enumerate()
                .map(|(i, &(s, a))| LabeledScore { trace_id: i.to_string(), score: s as f64, anomalous: a })
                .collect();
            let (mut wins, mut pairs) = (0.0, 0.0);
            for p in scores.iter().filter(|s| s.anomalous) {
                for n in scores.iter().filter(|s| !s.anomalous) {
                    pairs += 1.0;
                    wins += if p.score < n.score { 1.0 } else if p.score == n.score { 0.5 } else { 0.0 };
                }
            }
            prop_assert!((auc(&scores).unwrap() - wins / pairs).abs() < 1e-12);
            Ok(())
        })
        .map_err(|e| format!("AUC pair counting: {e}"))?;

    runner
        .run(&logs, |(log, k)| {
            let model = learn_edbn(&log, k, 0.99).unwrap();
            let mut buf = Vec::new();
            model.save(&mut buf).unwrap();
            let loaded = EdbnModel::load(buf.as_slice()).unwrap();
            for t in log.traces() {
                let a = score_trace(&model, t).unwrap().log_score;
                let b = score_trace(&loaded, t).unwrap().log_score;
                prop_assert!(a == b || (a.is_nan() && b.is_nan()));
            }
            Ok(())
        })
        .map_err(|e| format!("save/load: {e}"))?;

    let process = ProcessModel::shipping();
    runner
        .run(&(any::<u64>(), 0u32..=20), |(seed, pct)| {
            let a = inject_anomalies(&process.generate(20, seed).unwrap(), pct as f64 / 100.0, seed).unwrap();
            let b = inject_anomalies(&process.generate(20, seed).unwrap(), pct as f64 / 100.0, seed).unwrap();
            prop_assert_eq!(a, b);
            Ok(())
        })
        .map_err(|e| format!("synth determinism: {e}"))?;

    Ok("CPT sums, DAG constraints, U base invariance, AUC pairs, save/load, synth determinism".into())
}

fn main() {
    let criteria: [(&str, Criterion); 7] = [
        ("1 worked-example fidelity", worked_example),
        ("2 FD discovery on the access log", fd_discovery),
        ("3 k-context fidelity", k_context),
        ("4 end-to-end ranking", end_to_end),
        ("5 synthetic AUC", synthetic_auc),
        ("6 oracle equivalence", oracle_equivalence),
        ("7 property suites", property_suites),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {name}: {detail} [{elapsed:.2?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
