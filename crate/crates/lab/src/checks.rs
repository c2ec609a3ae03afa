//! Statistical contract checks for the resampling schemes.

use pfconv_core::{ResampleScheme, RngStream};
use rand::Rng;
use serde::Serialize;

use crate::LabError;

/// Fixed weights used for the unbiasedness check.
pub const MEAN_CHECK_WEIGHTS: [f64; 6] = [0.3, 0.25, 0.2, 0.15, 0.07, 0.03];
pub const MEAN_CHECK_N: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResamplerCheck {
    pub scheme: String,
    pub trials: usize,
    /// Trials whose counts did not sum to `N`.
    pub total_violations: usize,
    /// Trials giving offspring to a zero-weight parent.
    pub zero_weight_violations: usize,
    /// Parents outside `{⌊N w⌋, ⌈N w⌉}` (counted for every scheme, a
    /// contract only for systematic).
    pub bracket_violations: usize,
    /// Largest `|mean count − N w| / σ` over the fixed weights, with `σ`
    /// the multinomial standard error.
    pub max_mean_z: f64,
}

impl ResamplerCheck {
    pub fn passed(&self) -> bool {
        let bracket_ok = self.scheme != "systematic" || self.bracket_violations == 0;
        let mean_ok = self.scheme != "multinomial" || self.max_mean_z < 3.0;
        self.total_violations == 0 && self.zero_weight_violations == 0 && bracket_ok && mean_ok
    }
}

fn random_weights(rng: &mut RngStream) -> Vec<f64> {
    let k = rng.random_range(1..=50usize);
    let mut w: Vec<f64> = (0..k)
        .map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>().powi(3) })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        w[0] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// `trials` random weight vectors and sizes, then `trials` draws on the
/// fixed weights.
pub fn check_resampler(scheme: ResampleScheme, trials: usize, seed: u64) -> Result<ResamplerCheck, LabError> {
    let mut total_violations = 0;
    let mut zero_weight_violations = 0;
    let mut bracket_violations = 0;
    let mut rng = RngStream::derive(seed, &[0]);
    for _ in 0..trials {
        let w = random_weights(&mut rng);
        let n = rng.random_range(1..=1000usize);
        let counts = scheme.resample(&w, n, &mut rng)?;
        if counts.total() != n {
            total_violations += 1;
        }
        let mut zero_bad = false;
        for (&c, &wi) in counts.counts().iter().zip(&w) {
            if wi == 0.0 && c > 0 {
                zero_bad = true;
            }
            let e = n as f64 * wi;
            // slack for the rounding of the cumulative sums
            let tol = 1e-9 * n as f64;
            if (c as f64) < (e - tol).floor() || (c as f64) > (e + tol).ceil() {
                bracket_violations += 1;
            }
        }
        zero_weight_violations += usize::from(zero_bad);
    }

    let mut rng = RngStream::derive(seed, &[1]);
    let mut sums = [0f64; MEAN_CHECK_WEIGHTS.len()];
    for _ in 0..trials {
        let counts = scheme.resample(&MEAN_CHECK_WEIGHTS, MEAN_CHECK_N, &mut rng)?;
        for (s, &c) in sums.iter_mut().zip(counts.counts()) {
            *s += c as f64;
        }
    }
    let n = MEAN_CHECK_N as f64;
    let max_mean_z = sums
        .iter()
        .zip(MEAN_CHECK_WEIGHTS)
        .map(|(s, w)| {
            let sigma = (n * w * (1.0 - w) / trials as f64).sqrt();
            (s / trials as f64 - n * w).abs() / sigma
        })
        .fold(0.0, f64::max);

    Ok(ResamplerCheck {
        scheme: scheme.name().to_string(),
        trials,
        total_violations,
        zero_weight_violations,
        bracket_violations,
        max_mean_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_schemes_pass_a_small_check() {
        for scheme in ResampleScheme::ALL {
            let c = check_resampler(scheme, 2000, 3).unwrap();
            assert!(c.passed(), "{c:?}");
        }
    }
}
