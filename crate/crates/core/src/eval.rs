//! Detection quality against ground-truth labels.
//!
//! Anomalous traces are the positive class and lower scores are more
//! anomalous.

use std::io::Write;

use crate::detect::rank_traces;
use crate::edbn::learn_edbn;
use crate::error::{EdbnError, Result};
use crate::event_log::EventLog;
use crate::synth::{Label, LabeledLog};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScore {
    pub trace_id: String,
    pub score: f64,
    pub anomalous: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    pub pr_curve: Vec<PrPoint>,
    pub n_normal: usize,
    pub n_anomalous: usize,
    /// Most anomalous first.
    pub score_list: Vec<LabeledScore>,
}

fn class_counts(scores: &[LabeledScore]) -> Result<(usize, usize)> {
    if scores.iter().any(|s| s.score.is_nan()) {
        return Err(EdbnError::Evaluation("NaN score".into()));
    }
    let pos = scores.iter().filter(|s| s.anomalous).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EdbnError::Evaluation(format!(
            "both classes are needed ({pos} anomalous, {neg} normal)"
        )));
    }
    Ok((pos, neg))
}

/// Groups of equal score in ascending order, as (anomalous, normal, score).
fn tie_groups(scores: &[LabeledScore]) -> Vec<(usize, usize, f64)> {
    let mut sorted: Vec<&LabeledScore> = scores.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    let mut groups: Vec<(usize, usize, f64)> = Vec::new();
    for s in sorted {
        match groups.last_mut() {
            Some(g) if g.2 == s.score => {}
            _ => groups.push((0, 0, s.score)),
        }
        let g = groups.last_mut().unwrap();
        if s.anomalous {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Area under the ROC curve: the probability that a random anomalous trace
/// scores below a random normal one, ties counting one half.
pub fn auc(scores: &[LabeledScore]) -> Result<f64> {
    let (pos, neg) = class_counts(scores)?;
    let mut normals_above = neg as f64;
    let mut wins = 0.0;
    for (a, n, _) in tie_groups(scores) {
        normals_above -= n as f64;
        wins += a as f64 * (normals_above + 0.5 * n as f64);
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// One point per distinct score, flagging every trace at or below it.
/// Thresholds that flag no anomalous trace are left out.
pub fn precision_recall(scores: &[LabeledScore]) -> Result<Vec<PrPoint>> {
    let (pos, _) = class_counts(scores)?;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut curve = Vec::new();
    for (a, n, threshold) in tie_groups(scores) {
        tp += a;
        fp += n;
        if tp > 0 {
            curve.push(PrPoint {
                threshold,
                precision: tp as f64 / (tp + fp) as f64,
                recall: tp as f64 / pos as f64,
            });
        }
    }
    Ok(curve)
}

/// Learns on `train`, scores `test` and compares the ranking to its labels.
pub fn run_experiment(train: &EventLog, test: &LabeledLog, k: usize, fd_threshold: f64) -> Result<EvalReport> {
    let model = learn_edbn(train, k, fd_threshold)?;
    let ranking = rank_traces(&model, &test.log)?;
    let scores = ranking
        .scores
        .iter()
        .map(|s| {
            let label = test
                .label(&s.trace_id)
                .ok_or_else(|| EdbnError::Evaluation(format!("trace `{}` has no label", s.trace_id)))?;
            Ok(LabeledScore { trace_id: s.trace_id.clone(), score: s.score, anomalous: label == Label::Anomalous })
        })
        .collect::<Result<Vec<_>>>()?;
    report(scores)
}

pub fn report(scores: Vec<LabeledScore>) -> Result<EvalReport> {
    let (n_anomalous, n_normal) = class_counts(&scores)?;
    Ok(EvalReport { auc: auc(&scores)?, pr_curve: precision_recall(&scores)?, n_normal, n_anomalous, score_list: scores })
}

impl EvalReport {
    /// Best F1 over the curve, with its point.
    pub fn best_f1(&self) -> Option<(f64, PrPoint)> {
        self.pr_curve
            .iter()
            .map(|p| (2.0 * p.precision * p.recall / (p.precision + p.recall), *p))
            .max_by(|a, b| a.0.total_cmp(&b.0))
    }

    pub fn write_summary<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "traces: {} normal, {} anomalous", self.n_normal, self.n_anomalous)?;
        writeln!(out, "auc: {:.4}", self.auc)?;
        if let Some((f1, p)) = self.best_f1() {
            writeln!(
                out,
                "best f1: {f1:.4} (precision {:.4}, recall {:.4}, threshold {:e})",
                p.precision, p.recall, p.threshold
            )?;
        }
        Ok(())
    }

    /// CSV `threshold,precision,recall`.
    pub fn write_curve<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "threshold,precision,recall")?;
        for p in &self.pr_curve {
            writeln!(out, "{:e},{},{}", p.threshold, p.precision, p.recall)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ls(id: &str, score: f64, anomalous: bool) -> LabeledScore {
        LabeledScore { trace_id: id.into(), score, anomalous }
    }

    /// Direct count over all (anomalous, normal) pairs.
    fn pair_auc(scores: &[LabeledScore]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0.0;
        for a in scores.iter().filter(|s| s.anomalous) {
            for n in scores.iter().filter(|s| !s.anomalous) {
                pairs += 1.0;
                total += if a.score < n.score {
                    1.0
                } else if a.score == n.score {
                    0.5
                } else {
                    0.0
                };
            }
        }
        total / pairs
    }

    fn four() -> Vec<LabeledScore> {
        vec![ls("a", 0.1, true), ls("b", 0.2, false), ls("c", 0.15, true), ls("d", 0.9, false)]
    }

    #[test]
    fn perfect_separation() {
        assert_eq!(auc(&four()).unwrap(), 1.0);
        let curve = precision_recall(&four()).unwrap();
        let pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.recall, p.precision)).collect();
        assert_eq!(pts, [(0.5, 1.0), (1.0, 1.0), (1.0, 2.0 / 3.0), (1.0, 0.5)]);
    }

    #[test]
    fn ties_count_half() {
        let s = vec![ls("a", 0.5, true), ls("b", 0.5, false)];
        assert_eq!(auc(&s).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        let s = vec![ls("a", 0.5, true), ls("b", 0.1, true)];
        assert!(matches!(auc(&s), Err(EdbnError::Evaluation(_))));
        assert!(precision_recall(&s).is_err());
        assert!(auc(&[]).is_err());
    }

    #[test]
    fn summary_mentions_auc() {
        let r = report(four()).unwrap();
        let mut out = Vec::new();
        r.write_summary(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("auc: 1.0000"));
        let mut csv = Vec::new();
        r.write_curve(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
    }

    fn scored() -> impl Strategy<Value = Vec<LabeledScore>> {
        prop::collection::vec((0u8..20, any::<bool>()), 2..60)
            .prop_filter("both classes", |v| v.iter().any(|x| x.1) && v.iter().any(|x| !x.1))
            .prop_map(|v| v.into_iter().enumerate().map(|(i, (s, a))| ls(&i.to_string(), s as f64 / 20.0, a)).collect())
    }

    proptest! {
        #[test]
        fn matches_pair_counting(s in scored()) {
            prop_assert!((auc(&s).unwrap() - pair_auc(&s)).abs() < 1e-12);
        }

        #[test]
        fn reversing_scores_complements(s in scored()) {
            let rev: Vec<_> = s.iter().map(|x| ls(&x.trace_id, 1.0 - x.score, x.anomalous)).collect();
            prop_assert!((auc(&s).unwrap() + auc(&rev).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn curve_is_well_formed(s in scored()) {
            let c = precision_recall(&s).unwrap();
            prop_assert!(!c.is_empty());
            prop_assert!(c.windows(2).all(|w| w[0].recall <= w[1].recall && w[0].threshold < w[1].threshold));
            prop_assert!(c.iter().all(|p| p.precision > 0.0 && p.precision <= 1.0));
            prop_assert_eq!(c.last().unwrap().recall, 1.0);
        }
    }
}
