//! Moment conditions on the importance weights.
//!
//! For the Cox model with a Gamma proposal and `y = 0`, the weight obeys
//!
//! ```text
//! w(x, x_prev) ≤ K e^{(β - c) x} x^{1 - α},   K = 2 Γ(α) / (β^α √(2πη)),
//! ```
//!
//! because the folded kernel never exceeds `2 / √(2πη)`. Hence
//!
//! ```text
//! E[w^p | x_prev] ≤ (β^α / Γ(α)) K^p ∫₀^∞ e^{r x} x^{s - 1} dx = (β^α / Γ(α)) K^p Γ(s) / (-r)^s
//! ```
//!
//! with `s = (1 - p) α + p` and `r = (p - 1) β - p c`. The integral is finite
//! only for `s > 0` and `r < 0`; a negative non-integer `s` leaves it
//! divergent at zero even though `Γ(s)` itself is finite there.

use crate::error::{Result, SmcError};
use crate::model::{Proposal, StateSpaceModel};
use crate::particles::{Stage, WeightedParticleSet};
use crate::rng::RngStream;
use crate::special::ln_gamma_positive;

pub use crate::special::{gamma_signed, log_gamma};

/// Classification of `∫ w^p q dx` for the worst-case observation `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MomentStatus {
    Satisfied,
    /// `s ≤ 0`: the integrand behaves like `x^{s-1}` at zero.
    DivergentSingularity,
    /// `r ≥ 0`: the integrand does not decay at infinity.
    DivergentTail,
}

impl MomentStatus {
    pub fn name(&self) -> &'static str {
        match self {
            MomentStatus::Satisfied => "Satisfied",
            MomentStatus::DivergentSingularity => "DivergentSingularity",
            MomentStatus::DivergentTail => "DivergentTail",
        }
    }
}

impl std::fmt::Display for MomentStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCondition {
    pub p: u32,
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub eta: f64,
}

impl MomentCondition {
    pub fn new(p: u32, alpha: f64, beta: f64, c: f64, eta: f64) -> Result<Self> {
        if p != 2 && p != 4 {
            return Err(SmcError::InvalidParameter(format!("moment order must be 2 or 4, got {p}")));
        }
        for (name, v) in [("alpha", alpha), ("beta", beta), ("c", c), ("eta", eta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SmcError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { p, alpha, beta, c, eta })
    }

    /// `s = (1 - p) α + p`.
    pub fn singularity_exponent(&self) -> f64 {
        let p = self.p as f64;
        (1.0 - p) * self.alpha + p
    }

    /// `r = (p - 1) β - p c`.
    pub fn tail_rate(&self) -> f64 {
        let p = self.p as f64;
        (p - 1.0) * self.beta - p * self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentVerdict {
    pub status: MomentStatus,
    pub s: f64,
    pub tail_rate: f64,
    /// Uniform-in-`x_prev` bound on `E[w^p | x_prev]`, present iff satisfied.
    pub bound: Option<f64>,
}

impl MomentVerdict {
    pub fn is_satisfied(&self) -> bool {
        self.status == MomentStatus::Satisfied
    }
}

pub fn check_cox_moment_condition(cond: &MomentCondition) -> MomentVerdict {
    let s = cond.singularity_exponent();
    let tail_rate = cond.tail_rate();
    let status = if s <= 0.0 {
        MomentStatus::DivergentSingularity
    } else if tail_rate >= 0.0 {
        MomentStatus::DivergentTail
    } else {
        MomentStatus::Satisfied
    };
    let bound = (status == MomentStatus::Satisfied).then(|| {
        let p = cond.p as f64;
        let ln_gamma_alpha = ln_gamma_positive(cond.alpha);
        let ln_beta_alpha = cond.alpha * cond.beta.ln();
        let ln_k = 2f64.ln() + ln_gamma_alpha - ln_beta_alpha - 0.5 * (2.0 * std::f64::consts::PI * cond.eta).ln();
        let ln_prefactor = ln_beta_alpha - ln_gamma_alpha;
        let ln_integral = ln_gamma_positive(s) - s * (-tail_rate).ln();
        (ln_prefactor + p * ln_k + ln_integral).exp()
    });
    MomentVerdict {
        status,
        s,
        tail_rate,
        bound,
    }
}

const BAND_CELLS: usize = 64;
const OUTER_CELLS_PER_UNIT: usize = 256;
const MAX_OUTER_UNITS: usize = 10_000;
const TRUNCATION: f64 = 1e-16;

/// Composite-midpoint estimate of `E_q[w^p | x_prev] = ∫₀^∞ w^p q dx`.
///
/// `[0, 1]` is split into dyadic bands `[2^{-(k+1)}, 2^{-k}]` for
/// `k < level`, each with 64 midpoint cells, plus one innermost cell
/// `[0, 2^{-level}]`. Beyond 1 the rule uses cells of width 1/256 until a
/// whole unit interval past `x_prev` stays below `1e-16` of the peak.
pub fn quadrature_weight_moment<M, P>(
    model: &M,
    proposal: &P,
    x_prev: f64,
    y: M::Obs,
    p: f64,
    level: u32,
) -> Result<f64>
where
    M: StateSpaceModel,
    P: Proposal<M>,
{
    if level < 1 {
        return Err(SmcError::InvalidParameter("refinement level must be >= 1".into()));
    }
    let integrand = |x: f64| -> Result<f64> {
        let lw = proposal.log_weight(model, x, x_prev, y)?;
        if lw == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        Ok((p * lw + proposal.logdensity(model, x, x_prev, y)).exp())
    };

    let mut peak = 0f64;
    let mut total = 0.0;

    let inner = 0.5f64.powi(level as i32);
    let v = integrand(0.5 * inner)?;
    peak = peak.max(v);
    total += inner * v;

    for k in (0..level).rev() {
        let lo = 0.5f64.powi(k as i32 + 1);
        let width = lo / BAND_CELLS as f64;
        let mut band = 0.0;
        for j in 0..BAND_CELLS {
            let v = integrand(lo + (j as f64 + 0.5) * width)?;
            peak = peak.max(v);
            band += v;
        }
        total += band * width;
    }

    let width = 1.0 / OUTER_CELLS_PER_UNIT as f64;
    for unit in 1..=MAX_OUTER_UNITS {
        let lo = unit as f64;
        let mut block = 0.0;
        let mut block_max = 0f64;
        for j in 0..OUTER_CELLS_PER_UNIT {
            let v = integrand(lo + (j as f64 + 0.5) * width)?;
            block_max = block_max.max(v);
            block += v;
        }
        peak = peak.max(block_max);
        total += block * width;
        if !total.is_finite() {
            break;
        }
        if lo > x_prev + 1.0 && block_max < TRUNCATION * peak {
            break;
        }
    }
    Ok(total)
}

/// The quadrature value at each refinement level in `levels`.
pub fn quadrature_refinements<M, P>(
    model: &M,
    proposal: &P,
    x_prev: f64,
    y: M::Obs,
    p: f64,
    levels: impl IntoIterator<Item = u32>,
) -> Result<Vec<f64>>
where
    M: StateSpaceModel,
    P: Proposal<M>,
{
    levels
        .into_iter()
        .map(|l| quadrature_weight_moment(model, proposal, x_prev, y, p, l))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalMoment {
    pub estimate: f64,
    /// Jackknife standard error of the mean.
    pub stderr: f64,
    /// Mean over the first `k / 100` draws.
    pub prefix_estimate: f64,
    /// Largest single draw as a fraction of the sum.
    pub max_term_share: f64,
}

impl EmpiricalMoment {
    /// One draw carrying over 1% of the total mass, or the mean more than
    /// doubling between the prefix and the full sample.
    pub fn heavy_tail(&self) -> bool {
        self.max_term_share > 0.01 || self.estimate > 2.0 * self.prefix_estimate
    }
}

/// Monte Carlo estimate of `E_q[w^p | x_prev]` from `k` proposal draws.
pub fn empirical_weight_moment<M, P>(
    model: &M,
    proposal: &P,
    x_prev: f64,
    y: M::Obs,
    p: f64,
    k: usize,
    rng: &mut RngStream,
) -> Result<EmpiricalMoment>
where
    M: StateSpaceModel,
    P: Proposal<M>,
{
    if k < 100 {
        return Err(SmcError::InvalidParameter("need at least 100 draws".into()));
    }
    let mut values = Vec::with_capacity(k);
    for _ in 0..k {
        let x = proposal.propose(model, x_prev, y, rng);
        let lw = proposal.log_weight(model, x, x_prev, y)?;
        values.push((p * lw).exp());
    }
    let kf = k as f64;
    let sum: f64 = values.iter().sum();
    let estimate = sum / kf;
    // Leave-one-out means θ_i = (S - v_i) / (k - 1).
    let loo_mean = estimate;
    let ss: f64 = values
        .iter()
        .map(|v| {
            let theta = (sum - v) / (kf - 1.0);
            (theta - loo_mean) * (theta - loo_mean)
        })
        .sum();
    let stderr = ((kf - 1.0) / kf * ss).sqrt();
    let prefix = k / 100;
    let prefix_estimate = values[..prefix].iter().sum::<f64>() / prefix as f64;
    let max = values.iter().copied().fold(0.0, f64::max);
    Ok(EmpiricalMoment {
        estimate,
        stderr,
        prefix_estimate,
        max_term_share: if sum > 0.0 { max / sum } else { 0.0 },
    })
}

/// Effective sample size of a normalised set.
pub fn ess(set: &WeightedParticleSet) -> Result<f64> {
    set.require(Stage::Normalized)?;
    set.ess()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cox::{CoxModel, GammaProposal};
    use crate::model::Bootstrap;

    fn cox() -> CoxModel {
        CoxModel::new(0.5, 0.1).unwrap()
    }

    fn verdict(p: u32, alpha: f64, beta: f64) -> MomentVerdict {
        check_cox_moment_condition(&MomentCondition::new(p, alpha, beta, 0.5, 0.1).unwrap())
    }

    #[test]
    fn verdict_classification() {
        let v = verdict(2, 1.5, 0.5);
        assert_eq!(v.status, MomentStatus::Satisfied);
        assert_eq!((v.s, v.tail_rate), (0.5, -0.5));
        let v = verdict(4, 1.5, 0.5);
        assert_eq!(v.status, MomentStatus::DivergentSingularity);
        assert_eq!(v.s, -0.5);
        assert!(v.bound.is_none());
        let v = verdict(4, 1.25, 0.5);
        assert_eq!(v.status, MomentStatus::Satisfied);
        assert_eq!((v.s, v.tail_rate), (0.25, -0.5));
        let v = verdict(2, 1.5, 1.2);
        assert_eq!(v.status, MomentStatus::DivergentTail);
        assert!(MomentCondition::new(3, 1.5, 0.5, 0.5, 0.1).is_err());
        assert!(MomentCondition::new(2, 0.0, 0.5, 0.5, 0.1).is_err());
    }

    #[test]
    fn bound_closed_form() {
        // K = 2Γ(α) / (β^α √(2πη)); bound = β^α/Γ(α) K^p Γ(s) / (-r)^s
        let direct = |p: f64, a: f64, b: f64, c: f64, eta: f64| {
            let g = |x: f64| log_gamma(x).unwrap().exp();
            let k = 2.0 * g(a) / (b.powf(a) * (2.0 * std::f64::consts::PI * eta).sqrt());
            let s = (1.0 - p) * a + p;
            let r = (p - 1.0) * b - p * c;
            b.powf(a) / g(a) * k.powf(p) * g(s) / (-r).powf(s)
        };
        for (p, a, b) in [(2, 1.5, 0.5), (4, 1.25, 0.5), (2, 1.1, 0.3), (4, 1.25, 0.3)] {
            let v = verdict(p, a, b).bound.unwrap();
            let d = direct(p as f64, a, b, 0.5, 0.1);
            assert!((v - d).abs() < 1e-10 * d, "{v} {d}");
        }
        // (2Γ(1.5)/(0.5^1.5 √(0.2π)))² · 0.5^1.5/Γ(1.5) · √π / 0.5^0.5
        assert!((verdict(2, 1.5, 0.5).bound.unwrap() - 40.0).abs() < 1e-9);
    }

    #[test]
    fn quadrature_bootstrap_first_moment() {
        let m = cox();
        for y in [0u32, 1, 3] {
            let v = quadrature_weight_moment(&m, &Bootstrap, 1.0, y, 1.0, 8).unwrap();
            assert!(v > 0.0 && v <= 1.0, "{v}");
        }
        // y = 0: ∫ e^{-cx} f(x | 0) dx = 2 e^{c²η/2} Φ(-c√η)
        let v = quadrature_weight_moment(&m, &Bootstrap, 0.0, 0, 1.0, 8).unwrap();
        let want = 0.885_365_244_870_456_2;
        assert!((v - want).abs() < 2e-5, "{v}");
    }

    #[test]
    fn quadrature_converges_for_second_moment() {
        let m = cox();
        let q = GammaProposal::new(1.5, 0.5).unwrap();
        let vals = quadrature_refinements(&m, &q, 1.0, 0, 2.0, [10, 12, 14, 16]).unwrap();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
        assert!((vals[3] - vals[2]).abs() < 1e-4);
        assert!((vals[3] - 1.414_07).abs() < 1e-4, "{}", vals[3]);
    }

    #[test]
    fn quadrature_diverges_for_fourth_moment() {
        let m = cox();
        let q = GammaProposal::new(1.5, 0.5).unwrap();
        let vals = quadrature_refinements(&m, &q, 0.0, 0, 4.0, 6..=13).unwrap();
        for w in vals.windows(2) {
            assert!(w[1] > 1.2 * w[0], "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn quadrature_rejects_level_zero() {
        let q = GammaProposal::new(1.5, 0.5).unwrap();
        assert!(quadrature_weight_moment(&cox(), &q, 1.0, 0, 2.0, 0).is_err());
    }

    #[test]
    fn empirical_agrees_with_quadrature() {
        let m = cox();
        let mut rng = RngStream::derive(21, &[]);
        let e = empirical_weight_moment(&m, &Bootstrap, 1.0, 1, 1.0, 20_000, &mut rng).unwrap();
        let q = quadrature_weight_moment(&m, &Bootstrap, 1.0, 1, 1.0, 10).unwrap();
        assert!((e.estimate - q).abs() < 3.0 * e.stderr, "{} {} {}", e.estimate, e.stderr, q);
        assert!(empirical_weight_moment(&m, &Bootstrap, 1.0, 1, 1.0, 99, &mut rng).is_err());
    }

    #[test]
    fn jackknife_matches_sample_stderr() {
        // For the mean, the jackknife reproduces s / √k.
        let m = cox();
        let q = GammaProposal::new(1.5, 0.5).unwrap();
        let mut rng = RngStream::derive(4, &[]);
        let e = empirical_weight_moment(&m, &q, 1.0, 0, 1.0, 1000, &mut rng).unwrap();
        let mut rng = RngStream::derive(4, &[]);
        let v: Vec<f64> = (0..1000)
            .map(|_| {
                let x = q.sample(&mut rng);
                q.log_weight(&m, x, 1.0, 0).unwrap().exp()
            })
            .collect();
        let mean = v.iter().sum::<f64>() / 1000.0;
        let s2 = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 999.0;
        assert!((e.estimate - mean).abs() < 1e-12);
        assert!((e.stderr - (s2 / 1000.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn ess_examples() {
        let set = WeightedParticleSet::unnormalized(vec![0.0, 1.0, 2.0], vec![0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()])
            .unwrap()
            .normalize()
            .unwrap();
        assert!((ess(&set).unwrap() - 1.0 / 0.375).abs() < 1e-12);
        assert!(ess(&WeightedParticleSet::uniform(vec![0.0; 3])).is_err());
    }
}
