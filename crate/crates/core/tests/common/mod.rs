//! Shared test support: seeded randomness and exhaustive code-enumeration
//! oracles, kept independent of the closed-form encoders they check.
//!
//! Compiled into each integration-test binary; not every binary uses every
//! helper.
#![allow(dead_code)]

use dsa_forge::dsfp::{
    ActCode, CoefCode, FormatParams, ACT_EXPONENT_MAX, ACT_MANTISSA_MAX, ACT_SIGNED_MANTISSA_MAX,
    COEF_EXPONENT_MAX, COEF_MANTISSA_MAX,
};
use rand::rngs::StdRng;
use rand::SeedableRng;

/// Base seed for test-data generators; override with `DSA_FORGE_SEED`.
pub fn base_seed() -> u64 {
    std::env::var("DSA_FORGE_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0xD5AF_0001)
}

pub fn rng(salt: u64) -> StdRng {
    StdRng::seed_from_u64(base_seed() ^ salt)
}

/// Every code of one format, enumerated with its decoded value.
pub struct CodeTable {
    /// Sorted distinct decoded values.
    values: Vec<f64>,
}

impl CodeTable {
    fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        CodeTable { values }
    }

    pub fn act_unsigned(p: FormatParams) -> Self {
        let mut values = Vec::new();
        for m in 0..=ACT_MANTISSA_MAX {
            for e in 0..=ACT_EXPONENT_MAX {
                let c = ActCode {
                    negative: false,
                    mantissa: m,
                    exponent: e,
                };
                values.push(c.value(p));
            }
        }
        Self::from_values(values)
    }

    pub fn act_signed(p: FormatParams) -> Self {
        let mut values = Vec::new();
        for negative in [false, true] {
            for m in 0..=ACT_SIGNED_MANTISSA_MAX {
                for e in 0..=ACT_EXPONENT_MAX {
                    let c = ActCode {
                        negative,
                        mantissa: m,
                        exponent: e,
                    };
                    values.push(c.value(p));
                }
            }
        }
        Self::from_values(values)
    }

    pub fn coef(p: FormatParams) -> Self {
        let mut values = Vec::new();
        for negative in [false, true] {
            for m in 0..=COEF_MANTISSA_MAX {
                for e in 0..=COEF_EXPONENT_MAX {
                    let c = CoefCode {
                        negative,
                        mantissa: m,
                        exponent: e,
                    };
                    values.push(c.value(p));
                }
            }
        }
        Self::from_values(values)
    }

    pub fn max_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }

    /// Distance from `x` to the nearest representable value.
    pub fn nearest_distance(&self, x: f64) -> f64 {
        let idx = self.values.partition_point(|&v| v < x);
        let mut best = f64::INFINITY;
        if idx < self.values.len() {
            best = best.min((self.values[idx] - x).abs());
        }
        if idx > 0 {
            best = best.min((self.values[idx - 1] - x).abs());
        }
        best
    }

}
