use std::fmt;

use serde::{Deserialize, Serialize};

/// An exact rate `numerator / denominator`, stored as integers so that a
/// saved model reproduces bit-identical probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u64; 2]", into = "[u64; 2]")]
pub struct Ratio {
    pub numerator: u64,
    pub denominator: u64,
}

impl Ratio {
    pub const ZERO: Ratio = Ratio { numerator: 0, denominator: 1 };

    pub fn new(numerator: u64, denominator: u64) -> Self {
        debug_assert!(denominator > 0 && numerator <= denominator);
        Ratio { numerator, denominator }
    }

    pub fn value(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    pub fn complement(self) -> f64 {
        (self.denominator - self.numerator) as f64 / self.denominator as f64
    }

    pub(crate) fn is_valid(self) -> bool {
        self.denominator > 0 && self.numerator <= self.denominator
    }
}

impl From<[u64; 2]> for Ratio {
    fn from([numerator, denominator]: [u64; 2]) -> Self {
        Ratio { numerator, denominator }
    }
}

impl From<Ratio> for [u64; 2] {
    fn from(r: Ratio) -> Self {
        [r.numerator, r.denominator]
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} ({:.4})", self.numerator, self.denominator, self.value())
    }
}
