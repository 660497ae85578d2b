//! Entropy, mutual information and the uncertainty coefficient over
//! categorical columns, estimated from empirical frequencies.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{EdbnError, Result};

/// Logarithm used for the information measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InfoUnit {
    #[default]
    Nats,
    Bits,
}

impl InfoUnit {
    fn scale(self) -> f64 {
        match self {
            InfoUnit::Nats => 1.0,
            InfoUnit::Bits => std::f64::consts::LN_2,
        }
    }
}

/// Occurrence counts of the values of one column.
#[derive(Debug, Clone)]
pub struct FrequencyTable<T> {
    counts: HashMap<T, u64>,
    total: u64,
}

impl<T: Eq + Hash + Clone> FrequencyTable<T> {
    pub fn from_column(column: &[T]) -> Result<Self> {
        if column.is_empty() {
            return Err(EdbnError::invalid("frequency table of an empty column"));
        }
        let mut counts = HashMap::new();
        for v in column {
            *counts.entry(v.clone()).or_insert(0u64) += 1;
        }
        Ok(FrequencyTable { counts, total: column.len() as u64 })
    }

    pub fn count(&self, value: &T) -> u64 {
        self.counts.get(value).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, u64)> {
        self.counts.iter().map(|(k, &c)| (k, c))
    }

    fn entropy(&self) -> f64 {
        let n = self.total as f64;
        let h: f64 = self.counts.values().map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        }).sum();
        h.max(0.0)
    }
}

pub fn entropy<T: Eq + Hash + Clone>(column: &[T]) -> Result<f64> {
    entropy_in(column, InfoUnit::Nats)
}

pub fn entropy_in<T: Eq + Hash + Clone>(column: &[T], unit: InfoUnit) -> Result<f64> {
    Ok(FrequencyTable::from_column(column)?.entropy() / unit.scale())
}

/// `H(X | Y)` in nats. Terms where `y` fixes `x` contribute exactly zero.
fn conditional_entropy<T: Eq + Hash, U: Eq + Hash>(x: &[T], y: &[U]) -> f64 {
    let mut joint: HashMap<(&T, &U), u64> = HashMap::new();
    let mut marginal: HashMap<&U, u64> = HashMap::new();
    for (a, b) in x.iter().zip(y) {
        *joint.entry((a, b)).or_insert(0) += 1;
        *marginal.entry(b).or_insert(0) += 1;
    }
    let n = x.len() as f64;
    let h: f64 = joint
        .iter()
        .map(|((_, b), &c)| {
            let cy = marginal[b];
            if c == cy {
                0.0
            } else {
                -(c as f64 / n) * (c as f64 / cy as f64).ln()
            }
        })
        .sum();
    h.max(0.0)
}

fn check_pair<T, U>(x: &[T], y: &[U]) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(EdbnError::invalid("information measure of an empty column"));
    }
    if x.len() != y.len() {
        return Err(EdbnError::invalid(format!(
            "column lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

pub fn mutual_information<T, U>(x: &[T], y: &[U]) -> Result<f64>
where
    T: Eq + Hash + Clone,
    U: Eq + Hash + Clone,
{
    mutual_information_in(x, y, InfoUnit::Nats)
}

/// `I(X;Y) = H(X) - H(X|Y)`, clamped to be non-negative.
pub fn mutual_information_in<T, U>(x: &[T], y: &[U], unit: InfoUnit) -> Result<f64>
where
    T: Eq + Hash + Clone,
    U: Eq + Hash + Clone,
{
    check_pair(x, y)?;
    let hx = FrequencyTable::from_column(x)?.entropy();
    Ok((hx - conditional_entropy(x, y)).max(0.0) / unit.scale())
}

/// `U(X|Y) = I(X;Y) / H(X)`: the fraction of the uncertainty of `x` that is
/// explained by `y`. A constant `x` is explained by anything and yields 1.
pub fn uncertainty_coefficient<T, U>(x: &[T], y: &[U]) -> Result<f64>
where
    T: Eq + Hash + Clone,
    U: Eq + Hash + Clone,
{
    uncertainty_coefficient_in(x, y, InfoUnit::Nats)
}

pub fn uncertainty_coefficient_in<T, U>(x: &[T], y: &[U], unit: InfoUnit) -> Result<f64>
where
    T: Eq + Hash + Clone,
    U: Eq + Hash + Clone,
{
    check_pair(x, y)?;
    let hx = entropy_in(x, unit)?;
    if hx == 0.0 {
        return Ok(1.0);
    }
    let hxy = conditional_entropy(x, y) / unit.scale();
    if hxy == 0.0 {
        return Ok(1.0);
    }
    let mi = mutual_information_in(x, y, unit)?;
    Ok((mi / hx).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::build_k_context;
    use crate::fixtures;

    fn col(log: &crate::event_log::EventLog, attr: &str) -> Vec<String> {
        let i = log.schema().index_of(attr).unwrap();
        log.events().map(|e| e.values[i].clone()).collect()
    }

    // Direct double-sum forms, independent of the implementation above.
    fn oracle_entropy(col: &[String]) -> f64 {
        let n = col.len() as f64;
        let mut counts: HashMap<&String, f64> = HashMap::new();
        for v in col {
            *counts.entry(v).or_default() += 1.0;
        }
        counts.values().map(|c| -(c / n) * (c / n).ln()).sum()
    }

    fn oracle_mi(x: &[String], y: &[String]) -> f64 {
        let n = x.len() as f64;
        let mut px: HashMap<&String, f64> = HashMap::new();
        let mut py: HashMap<&String, f64> = HashMap::new();
        let mut pxy: HashMap<(&String, &String), f64> = HashMap::new();
        for (a, b) in x.iter().zip(y) {
            *px.entry(a).or_default() += 1.0 / n;
            *py.entry(b).or_default() += 1.0 / n;
            *pxy.entry((a, b)).or_default() += 1.0 / n;
        }
        pxy.iter().map(|((a, b), p)| p * (p / (px[a] * py[b])).ln()).sum()
    }

    #[test]
    fn constant_column_has_zero_entropy() {
        assert_eq!(entropy(&["a", "a", "a"]).unwrap(), 0.0);
    }

    #[test]
    fn fair_coin_is_ln_two() {
        let h = entropy(&["h", "t", "h", "t"]).unwrap();
        assert!((h - std::f64::consts::LN_2).abs() < 1e-15);
        let bits = entropy_in(&["h", "t"], InfoUnit::Bits).unwrap();
        assert!((bits - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_column_is_an_error() {
        assert!(entropy::<u32>(&[]).is_err());
        assert!(mutual_information::<u32, u32>(&[], &[]).is_err());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(mutual_information(&[1, 2], &[1]).is_err());
    }

    #[test]
    fn user_id_entropy_matches_hand_sum() {
        // counts 8, 2, 4, 1 over 15 events (001, 002, 003, 004)
        let log = fixtures::access_log_normal();
        let ids = col(&log, "UserID");
        let expected = -[8.0f64, 2.0, 4.0, 1.0].iter().map(|c| c / 15.0 * (c / 15.0).ln()).sum::<f64>();
        assert!((expected - 1.136_916_591_833_000_6).abs() < 1e-12);
        assert!((entropy(&ids).unwrap() - expected).abs() < 1e-12);
        assert!((oracle_entropy(&ids) - expected).abs() < 1e-12);
    }

    #[test]
    fn independent_columns_have_zero_information() {
        let x = ["a", "a", "b", "b"];
        let y = ["p", "q", "p", "q"];
        assert!(mutual_information(&x, &y).unwrap().abs() < 1e-15);
    }

    #[test]
    fn self_information_is_entropy() {
        let log = fixtures::access_log_normal();
        let act = col(&log, "Activity");
        let h = entropy(&act).unwrap();
        assert!((mutual_information(&act, &act).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn user_id_and_role_information_matches_joint_counts() {
        let log = fixtures::access_log_normal();
        let ids = col(&log, "UserID");
        let roles = col(&log, "UserRole");
        // UserID fixes UserRole, so I(ID; Role) = H(Role): roles 12/2/1 over 15
        let h_role = -[12.0f64, 2.0, 1.0].iter().map(|c| c / 15.0 * (c / 15.0).ln()).sum::<f64>();
        let mi = mutual_information(&ids, &roles).unwrap();
        assert!((mi - h_role).abs() < 1e-12);
        assert!((oracle_mi(&ids, &roles) - h_role).abs() < 1e-12);
        assert_eq!(uncertainty_coefficient(&roles, &ids).unwrap(), 1.0);
        assert!(uncertainty_coefficient(&ids, &roles).unwrap() < 1.0);
    }

    #[test]
    fn constant_target_is_fully_explained() {
        assert_eq!(uncertainty_coefficient(&["c", "c", "c"], &["1", "2", "3"]).unwrap(), 1.0);
    }

    #[test]
    fn previous_user_explains_half_of_current_user() {
        let log = fixtures::access_log_normal();
        let ctx = build_k_context(&log, 1).unwrap();
        let cur = ctx.column(ctx.variable("UserID_0").unwrap()).unwrap();
        let prev = ctx.column(ctx.variable("UserID_1").unwrap()).unwrap();
        let h = entropy(&cur).unwrap();
        let mi = mutual_information(&cur, &prev).unwrap();
        let u = uncertainty_coefficient(&cur, &prev).unwrap();
        assert!((h - 1.1369).abs() < 5e-5, "{h}");
        assert!((mi - 0.5597).abs() < 5e-5, "{mi}");
        assert!((u - 0.4923).abs() < 5e-5, "{u}");
        let strings = |c: &[u32]| c.iter().map(|v| v.to_string()).collect::<Vec<_>>();
        let oracle = oracle_mi(&strings(&cur), &strings(&prev)) / oracle_entropy(&strings(&cur));
        assert!((u - oracle).abs() < 1e-12);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn pair() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
        (1usize..60).prop_flat_map(|n| {
            (proptest::collection::vec(0u8..5, n), proptest::collection::vec(0u8..4, n))
        })
    }

    proptest! {
        #[test]
        fn mutual_information_is_symmetric((x, y) in pair()) {
            let a = mutual_information(&x, &y).unwrap();
            let b = mutual_information(&y, &x).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn mutual_information_is_bounded((x, y) in pair()) {
            let mi = mutual_information(&x, &y).unwrap();
            let hx = entropy(&x).unwrap();
            let hy = entropy(&y).unwrap();
            prop_assert!(mi >= 0.0);
            prop_assert!(mi <= hx.min(hy) + 1e-12);
        }

        #[test]
        fn uncertainty_is_base_invariant((x, y) in pair()) {
            let nats = uncertainty_coefficient_in(&x, &y, InfoUnit::Nats).unwrap();
            let bits = uncertainty_coefficient_in(&x, &y, InfoUnit::Bits).unwrap();
            prop_assert!((0.0..=1.0).contains(&nats));
            prop_assert!((nats - bits).abs() < 1e-12);
        }

        #[test]
        fn uncertainty_is_one_iff_mapping_is_single_valued((x, y) in pair()) {
            let mut seen: HashMap<u8, u8> = HashMap::new();
            let single = x.iter().zip(&y).all(|(a, b)| *seen.entry(*b).or_insert(*a) == *a);
            let u = uncertainty_coefficient(&x, &y).unwrap();
            prop_assert_eq!(u == 1.0, single);
        }
    }
}
