//! Resampling as offspring counts.
//!
//! Every scheme maps normalised weights to a [`CountVector`] whose entries
//! sum to the requested population size; [`apply_counts`] then duplicates
//! particles accordingly. All three schemes are unbiased:
//! `E[count_i] = n w_i`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Result, SmcError};
use crate::particles::{Stage, WeightedParticleSet};
use crate::rng::RngStream;

/// Tolerance on `|Σ w - 1|` accepted by the schemes.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Offspring counts, one entry per parent particle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountVector(Vec<usize>);

impl CountVector {
    pub fn new(counts: Vec<usize>) -> Self {
        Self(counts)
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

pub trait Resampler {
    /// Offspring counts for `weights`, with total `weights.len()`.
    fn resample_counts(&self, weights: &[f64], rng: &mut RngStream) -> Result<CountVector>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResampleScheme {
    Multinomial,
    Stratified,
    Systematic,
}

impl ResampleScheme {
    pub const ALL: [ResampleScheme; 3] = [
        ResampleScheme::Multinomial,
        ResampleScheme::Stratified,
        ResampleScheme::Systematic,
    ];

    pub fn resample(&self, weights: &[f64], n: usize, rng: &mut RngStream) -> Result<CountVector> {
        match self {
            ResampleScheme::Multinomial => multinomial_resample(weights, n, rng),
            ResampleScheme::Stratified => stratified_resample(weights, n, rng),
            ResampleScheme::Systematic => systematic_resample(weights, n, rng),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ResampleScheme::Multinomial => "multinomial",
            ResampleScheme::Stratified => "stratified",
            ResampleScheme::Systematic => "systematic",
        }
    }
}

impl Resampler for ResampleScheme {
    fn resample_counts(&self, weights: &[f64], rng: &mut RngStream) -> Result<CountVector> {
        self.resample(weights, weights.len(), rng)
    }
}

impl fmt::Display for ResampleScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ResampleScheme {
    type Err = SmcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "multinomial" => Ok(ResampleScheme::Multinomial),
            "stratified" => Ok(ResampleScheme::Stratified),
            "systematic" => Ok(ResampleScheme::Systematic),
            other => Err(SmcError::InvalidParameter(format!(
                "unknown resampler `{other}` (expected multinomial, stratified or systematic)"
            ))),
        }
    }
}

/// Cumulative weights rescaled so the last entry past the final positive
/// weight is exactly `n`. Zero-weight entries repeat their predecessor, so
/// they can never receive offspring.
fn scaled_cumulative(weights: &[f64], n: usize) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(SmcError::InvalidParameter("no weights to resample".into()));
    }
    if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(SmcError::InvalidParameter(format!("invalid weight {w}")));
    }
    let sum: f64 = weights.iter().sum();
    if !((sum - 1.0).abs() <= NORMALIZATION_TOLERANCE) {
        return Err(SmcError::NotNormalized { sum });
    }
    let scale = n as f64 / sum;
    let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    let mut acc = 0.0;
    Ok(weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            acc += w;
            if i >= last_positive {
                n as f64
            } else {
                (acc * scale).min(n as f64)
            }
        })
        .collect())
}

/// Counts from `n` sorted points in `[0, n)` against the scaled cumulative sums.
fn counts_from_sorted_points(cum: &[f64], points: impl Iterator<Item = f64>) -> Vec<usize> {
    let mut counts = vec![0usize; cum.len()];
    let mut i = 0;
    for u in points {
        while i + 1 < cum.len() && cum[i] <= u {
            i += 1;
        }
        counts[i] += 1;
    }
    counts
}

/// One draw from `Multinomial(n, weights)`.
///
/// Sorted uniforms are built from normalised exponential spacings, so the
/// merge against the cumulative weights is linear.
pub fn multinomial_resample(weights: &[f64], n: usize, rng: &mut RngStream) -> Result<CountVector> {
    let cum = scaled_cumulative(weights, n)?;
    let gaps: Vec<f64> = (0..=n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = gaps.iter().sum();
    let scale = n as f64 / total;
    let mut acc = 0.0;
    let points = gaps[..n].iter().map(|g| {
        acc += g;
        // acc < total strictly, so every point lies in [0, n)
        (acc * scale).min(n as f64 * (1.0 - f64::EPSILON))
    });
    Ok(CountVector(counts_from_sorted_points(&cum, points)))
}

/// Systematic resampling: points `(u + k)` for `k = 0..n` with one `u ~ U[0,1)`.
///
/// Parent `i` receives `⌈a_i - u⌉ - ⌈a_{i-1} - u⌉` offspring where `a_i` is
/// the scaled cumulative weight, which is always `⌊n w_i⌋` or `⌈n w_i⌉`.
pub fn systematic_resample(weights: &[f64], n: usize, rng: &mut RngStream) -> Result<CountVector> {
    let cum = scaled_cumulative(weights, n)?;
    let u: f64 = rng.random();
    let below = |a: f64| -> usize { ((a - u).ceil().max(0.0) as usize).min(n) };
    let mut prev = 0usize;
    let counts = cum
        .iter()
        .map(|&a| {
            let k = below(a);
            let c = k - prev;
            prev = k;
            c
        })
        .collect();
    Ok(CountVector(counts))
}

/// Stratified resampling: one uniform point in each stratum `[k, k + 1)`.
pub fn stratified_resample(weights: &[f64], n: usize, rng: &mut RngStream) -> Result<CountVector> {
    let cum = scaled_cumulative(weights, n)?;
    let points: Vec<f64> = (0..n).map(|k| k as f64 + rng.random::<f64>()).collect();
    Ok(CountVector(counts_from_sorted_points(&cum, points.into_iter())))
}

/// Replace a normalised set by `counts[i]` copies of particle `i`, equally weighted.
pub fn apply_counts(set: WeightedParticleSet, counts: &CountVector) -> Result<WeightedParticleSet> {
    set.require(Stage::Normalized)?;
    let n = set.len();
    if counts.len() != n || counts.total() != n {
        return Err(SmcError::CountMismatch {
            expected_len: n,
            found_len: counts.len(),
            expected_total: n,
            found_total: counts.total(),
        });
    }
    let (particles, _) = set.into_parts();
    let mut out = Vec::with_capacity(n);
    for (&x, &c) in particles.iter().zip(counts.counts()) {
        out.extend(std::iter::repeat_n(x, c));
    }
    let log_w = -(n as f64).ln();
    Ok(WeightedParticleSet::from_parts(out, vec![log_w; n], Stage::Resampled))
}
