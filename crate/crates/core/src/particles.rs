//! Weighted particle sets at the three stages of a filter step.

use std::fmt;

use crate::error::{Result, SmcError};
use crate::model::TestFunction;
use crate::special::{log_mean_exp, log_sum_exp};

/// Which empirical measure a [`WeightedParticleSet`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    /// `(1/N) Σ w_i δ_{x_i}` with raw importance weights.
    Unnormalized,
    /// `Σ w̃_i δ_{x_i}` with `Σ w̃_i = 1`.
    Normalized,
    /// `(1/N) Σ δ_{x_i}` after resampling.
    Resampled,
}

impl Stage {
    fn label(self) -> &'static str {
        match self {
            Stage::Unnormalized => "unnormalized",
            Stage::Normalized => "normalized",
            Stage::Resampled => "resampled",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedParticleSet {
    particles: Vec<f64>,
    log_weights: Vec<f64>,
    stage: Stage,
    log_mean_weight: Option<f64>,
}

impl WeightedParticleSet {
    /// Equally weighted set at stage [`Stage::Resampled`].
    pub fn uniform(particles: Vec<f64>) -> Self {
        let n = particles.len();
        Self {
            log_weights: vec![-(n as f64).ln(); n],
            particles,
            stage: Stage::Resampled,
            log_mean_weight: None,
        }
    }

    /// Set at stage [`Stage::Unnormalized`] from raw log-weights.
    pub fn unnormalized(particles: Vec<f64>, log_weights: Vec<f64>) -> Result<Self> {
        if particles.len() != log_weights.len() {
            return Err(SmcError::InvalidParameter(format!(
                "{} particles but {} weights",
                particles.len(),
                log_weights.len()
            )));
        }
        if let Some((i, &lw)) = log_weights
            .iter()
            .enumerate()
            .find(|(_, lw)| lw.is_nan() || **lw == f64::INFINITY)
        {
            return Err(SmcError::WeightNotFinite {
                index: Some(i),
                log_weight: lw,
            });
        }
        let log_mean_weight = Some(log_mean_exp(&log_weights));
        Ok(Self {
            particles,
            log_weights,
            stage: Stage::Unnormalized,
            log_mean_weight,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[f64] {
        &self.particles
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    /// `ln (π̂ᴺ, 1)`; only defined at stage [`Stage::Unnormalized`].
    pub fn log_mean_weight(&self) -> Option<f64> {
        self.log_mean_weight
    }

    /// Linear weights. At stage `Unnormalized` these are the raw weights.
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|lw| lw.exp()).collect()
    }

    pub(crate) fn require(&self, expected: Stage) -> Result<()> {
        if self.stage == expected {
            Ok(())
        } else {
            Err(SmcError::StageMismatch {
                expected: expected.label(),
                found: self.stage,
            })
        }
    }

    /// Divide the weights by their sum, in log space.
    pub fn normalize(self) -> Result<Self> {
        self.require(Stage::Unnormalized)?;
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(SmcError::DegenerateWeights);
        }
        // Shift by the max first; that subtraction is exact for nearby values.
        let shifted: Vec<f64> = self.log_weights.iter().map(|lw| lw - max).collect();
        let log_total = log_sum_exp(&shifted);
        let log_weights = shifted.iter().map(|lw| lw - log_total).collect();
        Ok(Self {
            particles: self.particles,
            log_weights,
            stage: Stage::Normalized,
            log_mean_weight: None,
        })
    }

    /// `(π, φ)` for the normalised or resampled measure.
    ///
    /// Computed as `Σ w φ / Σ w` so that `φ ≡ 1` gives exactly one.
    pub fn estimate(&self, phi: &TestFunction) -> Result<f64> {
        match self.stage {
            Stage::Unnormalized => Err(SmcError::StageMismatch {
                expected: "normalized or resampled",
                found: self.stage,
            }),
            Stage::Resampled => {
                let n = self.particles.len() as f64;
                let s: f64 = self.particles.iter().map(|&x| phi.eval(x)).sum();
                Ok(clamp_sup(s / n, phi))
            }
            Stage::Normalized => {
                let (mut num, mut den) = (0.0, 0.0);
                for (&x, &lw) in self.particles.iter().zip(&self.log_weights) {
                    let w = lw.exp();
                    num += w * phi.eval(x);
                    den += w;
                }
                Ok(clamp_sup(num / den, phi))
            }
        }
    }

    /// Weighted mean and variance of the particle positions.
    pub fn mean_and_variance(&self) -> Result<(f64, f64)> {
        if self.stage == Stage::Unnormalized {
            return Err(SmcError::StageMismatch {
                expected: "normalized or resampled",
                found: self.stage,
            });
        }
        let w = self.weights();
        let total: f64 = w.iter().sum();
        let mean = w.iter().zip(&self.particles).map(|(w, x)| w * x).sum::<f64>() / total;
        let var = w
            .iter()
            .zip(&self.particles)
            .map(|(w, x)| w * (x - mean) * (x - mean))
            .sum::<f64>()
            / total;
        Ok((mean, var))
    }

    /// Effective sample size `1 / Σ w̃²`, in `[1, N]`.
    pub fn ess(&self) -> Result<f64> {
        match self.stage {
            Stage::Resampled => Ok(self.len() as f64),
            Stage::Normalized => {
                let sum_sq: f64 = self.log_weights.iter().map(|lw| (2.0 * lw).exp()).sum();
                Ok((1.0 / sum_sq).clamp(1.0, self.len() as f64))
            }
            Stage::Unnormalized => Err(SmcError::StageMismatch {
                expected: "normalized",
                found: self.stage,
            }),
        }
    }

    pub(crate) fn from_parts(particles: Vec<f64>, log_weights: Vec<f64>, stage: Stage) -> Self {
        Self {
            particles,
            log_weights,
            stage,
            log_mean_weight: None,
        }
    }

    pub(crate) fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.particles, self.log_weights)
    }
}

// Rounding in the weighted sum can put the result an ulp outside [-‖φ‖, ‖φ‖].
fn clamp_sup(v: f64, phi: &TestFunction) -> f64 {
    let s = phi.sup_norm();
    v.clamp(-s, s)
}
