use serde::{Deserialize, Serialize};

use crate::rng::{RngStream, BOOTSTRAP};

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;
/// Fewest paired rows for which a sign test is reported.
pub const MIN_SIGN_PAIRS: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation (n - 1).
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Percentile-bootstrap 95% interval for the mean.
    pub ci95: Option<(f64, f64)>,
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Percentile bootstrap of the mean with `resamples` draws from a seeded
/// stream. Needs at least two values.
pub fn bootstrap_ci(xs: &[f64], resamples: usize, level: f64, seed: u64) -> Option<(f64, f64)> {
    if xs.len() < 2 || resamples == 0 {
        return None;
    }
    let mut rng = RngStream::new(seed, BOOTSTRAP);
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.below(n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Some((at(tail), at(1.0 - tail)))
}

pub fn summarize(xs: &[f64], seed: u64) -> Summary {
    let finite = |f: fn(f64, f64) -> f64| xs.iter().copied().reduce(f);
    Summary {
        n: xs.len(),
        mean: mean(xs),
        std: sample_std(xs),
        min: finite(f64::min),
        max: finite(f64::max),
        ci95: bootstrap_ci(xs, BOOTSTRAP_RESAMPLES, 0.95, seed),
    }
}

/// ln C(n, k).
fn ln_choose(n: u64, k: u64) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
}

/// Exact two-sided sign test p-value for `wins` against `losses` (ties
/// already dropped).
pub fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = (wins + losses) as u64;
    if n == 0 {
        return 1.0;
    }
    let k = wins.min(losses) as u64;
    let tail: f64 = (0..=k)
        .map(|i| (ln_choose(n, i) - n as f64 * std::f64::consts::LN_2).exp())
        .sum();
    (2.0 * tail).min(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Paired {
    pub n_pairs: usize,
    /// Pairs where the first value is lower (better under minimization).
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub p_value: Option<f64>,
}

/// Paired comparison of `a` against `b`, lower is better.
pub fn paired_sign_test(pairs: &[(f64, f64)]) -> Paired {
    let wins = pairs.iter().filter(|(a, b)| a < b).count();
    let losses = pairs.iter().filter(|(a, b)| a > b).count();
    Paired {
        n_pairs: pairs.len(),
        wins,
        losses,
        ties: pairs.len() - wins - losses,
        p_value: (pairs.len() >= MIN_SIGN_PAIRS).then(|| sign_test(wins, losses)),
    }
}
