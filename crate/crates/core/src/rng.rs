//! Named, seeded random streams and the small distribution family used by
//! stochastic instances.
//!
//! Every stochastic concern (releases, durations, breakdowns, demand, agent
//! exploration, ...) draws from its own xoshiro256** stream. A stream seed is
//! the run seed mixed with the FNV-1a hash of the stream name, then expanded
//! with splitmix64 by `seed_from_u64`.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RELEASES: &str = "releases";
pub const DURATIONS: &str = "durations";
pub const BREAKDOWNS: &str = "breakdowns";
pub const DEMAND: &str = "demand";
pub const AGENT: &str = "agent-exploration";
pub const INSTANCE: &str = "instance";
pub const BOOTSTRAP: &str = "bootstrap";

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    inner: Xoshiro256StarStar,
}

impl RngStream {
    pub fn new(seed: u64, name: &str) -> Self {
        RngStream {
            inner: Xoshiro256StarStar::seed_from_u64(seed ^ fnv1a(name.as_bytes())),
        }
    }

    /// A stream seeded directly, without a name.
    pub fn from_seed(seed: u64) -> Self {
        RngStream {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        // rejection sampling keeps the draw unbiased
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn range_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        lo + self.below((hi - lo + 1) as usize) as i64
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("uniform bounds must satisfy low <= high, got [{0}, {1}]")]
    UniformBounds(f64, f64),
    #[error("exponential rate must be positive, got {0}")]
    Rate(f64),
    #[error("normal standard deviation must be nonnegative, got {0}")]
    Sigma(f64),
    #[error("parameters must be finite")]
    NotFinite,
}

/// Distribution family for stochastic parameters. Normal draws are truncated
/// at zero by rejection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    Exponential { rate: f64 },
    Normal { mean: f64, std: f64 },
}

impl Distribution {
    pub fn check(&self) -> Result<(), DistributionError> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match *self {
            Distribution::Constant { value } if !finite(&[value]) => Err(DistributionError::NotFinite),
            Distribution::Uniform { low, high } => {
                if !finite(&[low, high]) {
                    Err(DistributionError::NotFinite)
                } else if low > high {
                    Err(DistributionError::UniformBounds(low, high))
                } else {
                    Ok(())
                }
            }
            Distribution::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => {
                Err(DistributionError::Rate(rate))
            }
            Distribution::Normal { mean, std } => {
                if !finite(&[mean, std]) {
                    Err(DistributionError::NotFinite)
                } else if std < 0.0 {
                    Err(DistributionError::Sigma(std))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            Distribution::Constant { value } => value,
            Distribution::Uniform { low, high } => low + (high - low) * rng.next_f64(),
            Distribution::Exponential { rate } => -(1.0 - rng.next_f64()).ln() / rate,
            Distribution::Normal { mean, std } => {
                if std == 0.0 {
                    return mean.max(0.0);
                }
                // give up on hopeless truncations instead of spinning
                for _ in 0..10_000 {
                    let x = mean + std * standard_normal(rng);
                    if x >= 0.0 {
                        return x;
                    }
                }
                0.0
            }
        }
    }

    /// Expected value used for deterministic projections. For the truncated
    /// normal this is the untruncated mean clamped at zero.
    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Constant { value } => value,
            Distribution::Uniform { low, high } => 0.5 * (low + high),
            Distribution::Exponential { rate } => 1.0 / rate,
            Distribution::Normal { mean, .. } => mean.max(0.0),
        }
    }
}

/// Box-Muller, one variate per call.
fn standard_normal(rng: &mut RngStream) -> f64 {
    let u1 = 1.0 - rng.next_f64();
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
