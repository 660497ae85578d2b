//! SplitMix64, the generator behind all synthetic data.
//!
//! The algorithm is fixed so that a seed reproduces the same log on every
//! platform and in any language that ports these few lines:
//!
//! * state advances by `0x9E3779B97F4A7C15` (wrapping) and is finalized with
//!   the SplitMix64 mixer (shifts 30, 27, 31; multipliers
//!   `0xBF58476D1CE4E5B9`, `0x94D049BB133111EB`);
//! * `below(n)` rejects draws `>= n * floor(2^64 / n)` and returns `x % n`;
//! * `unit()` is `(x >> 11) * 2^-53`;
//! * `stream(seed, i)` seeds a child generator with
//!   `mix(seed ^ mix(i + 1))`, one stream per trace index.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Independent generator for item `index` of a seeded run.
    pub fn stream(seed: u64, index: u64) -> Self {
        SplitMix64::new(mix(seed ^ mix(index.wrapping_add(1))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let zone = (1u128 << 64) / n as u128 * n as u128;
        loop {
            let x = self.next_u64();
            if (x as u128) < zone {
                return x % n;
            }
        }
    }

    pub fn index(&mut self, len: usize) -> usize {
        self.below(len as u64) as usize
    }

    /// Uniform float in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Index drawn proportionally to `weights`.
    pub fn weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut r = self.unit() * total;
        for (i, &w) in weights.iter().enumerate() {
            if r < w {
                return i;
            }
            r -= w;
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}
