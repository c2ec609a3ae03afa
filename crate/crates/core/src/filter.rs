//! The particle filter loop.
//!
//! One step takes an equally weighted parent set, draws each child from the
//! importance density, weights it by `g f / q`, normalises, records the
//! estimates of the registered test functions, and resamples.

use crate::error::{Result, SmcError};
use crate::model::{Proposal, StateSpaceModel, TestFunction};
use crate::particles::{Stage, WeightedParticleSet};
use crate::resampling::{apply_counts, Resampler};
use crate::rng::RngStream;
use crate::special::log_sum_exp;

/// `n` independent prior draws with weights `1/n`.
pub fn init_filter<M: StateSpaceModel>(
    model: &M,
    n: usize,
    rng: &mut RngStream,
) -> Result<WeightedParticleSet> {
    if n == 0 {
        return Err(SmcError::InvalidParameter("particle count must be at least 1".into()));
    }
    let particles = (0..n).map(|_| model.sample_prior(rng)).collect();
    Ok(WeightedParticleSet::uniform(particles))
}

/// `ln w(x, x_prev) = ln g(y | x) + ln f(x | x_prev) - ln q(x | x_prev, y)`.
pub fn log_unnormalized_weight<M, P>(
    model: &M,
    proposal: &P,
    x: f64,
    x_prev: f64,
    y: M::Obs,
) -> Result<f64>
where
    M: StateSpaceModel,
    P: Proposal<M>,
{
    proposal.log_weight(model, x, x_prev, y)
}

/// Move every particle through the importance density and attach its weight.
///
/// The parent set is normally at stage `Resampled`. A `Normalized` parent
/// (when resampling was skipped by the ESS rule) carries its weights
/// forward multiplicatively, with `ln N` added so that the mean weight is
/// still the incremental evidence.
pub fn propose_and_weight<M, P>(
    prev: &WeightedParticleSet,
    model: &M,
    proposal: &P,
    y: M::Obs,
    rng: &mut RngStream,
) -> Result<WeightedParticleSet>
where
    M: StateSpaceModel,
    P: Proposal<M>,
{
    let carry = match prev.stage() {
        Stage::Resampled => false,
        Stage::Normalized => true,
        found => {
            return Err(SmcError::StageMismatch {
                expected: "resampled",
                found,
            })
        }
    };
    let n = prev.len();
    let log_n = (n as f64).ln();
    let mut particles = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for (i, (&x_prev, &lw_prev)) in prev.particles().iter().zip(prev.log_weights()).enumerate() {
        let x = proposal.propose(model, x_prev, y, rng);
        let mut lw = proposal.log_weight(model, x, x_prev, y).map_err(|e| match e {
            SmcError::WeightNotFinite { log_weight, .. } => SmcError::WeightNotFinite {
                index: Some(i),
                log_weight,
            },
            other => other,
        })?;
        if carry {
            lw += lw_prev + log_n;
        }
        particles.push(x);
        log_weights.push(lw);
    }
    WeightedParticleSet::unnormalized(particles, log_weights)
}

/// Quantities recorded for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    /// `(π̃ᴺ, φ)` before resampling, one per registered test function.
    pub estimates: Vec<f64>,
    /// `(πᴺ, φ)` after resampling (equal to `estimates` when resampling was skipped).
    pub resampled_estimates: Vec<f64>,
    pub ess: f64,
    /// `ln (π̂ᴺ, 1)`, the incremental log-evidence.
    pub log_mean_weight: f64,
    pub resampled: bool,
}

/// A recorded particle cloud at stage `Normalized`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cloud {
    pub t: usize,
    pub particles: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub test_functions: Vec<TestFunction>,
    /// Resample only when `ESS < threshold · N`. `None` resamples every step.
    pub ess_threshold: Option<f64>,
    /// Steps at which to keep the full pre-resampling cloud.
    pub full_cloud_steps: Vec<usize>,
    /// Keep an evenly thinned cloud of this many particles at every step.
    pub thinned_cloud_size: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            test_functions: vec![TestFunction::ExpNeg],
            ess_threshold: None,
            full_cloud_steps: Vec::new(),
            thinned_cloud_size: None,
        }
    }
}

impl RunOptions {
    pub fn with_test_functions(test_functions: Vec<TestFunction>) -> Self {
        Self {
            test_functions,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub n: usize,
    pub test_functions: Vec<TestFunction>,
    pub steps: Vec<StepRecord>,
    /// `Σ_t ln (π̂ᴺ_t, 1)`.
    pub log_evidence: f64,
    pub full_clouds: Vec<Cloud>,
    pub thinned_clouds: Vec<Cloud>,
}

impl FilterRun {
    pub fn ess_trace(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.ess).collect()
    }

    pub fn step(&self, t: usize) -> Option<&StepRecord> {
        self.steps.iter().find(|s| s.t == t)
    }
}

fn estimates(set: &WeightedParticleSet, fns: &[TestFunction]) -> Result<Vec<f64>> {
    fns.iter().map(|phi| set.estimate(phi)).collect()
}

struct Advance {
    normalized: WeightedParticleSet,
    ess: f64,
    log_mean_weight: f64,
}

fn advance<M, P>(
    state: &WeightedParticleSet,
    model: &M,
    proposal: &P,
    y: M::Obs,
    rng: &mut RngStream,
) -> Result<Advance>
where
    M: StateSpaceModel,
    P: Proposal<M>,
{
    let weighted = propose_and_weight(state, model, proposal, y, rng)?;
    let log_mean_weight = weighted.log_mean_weight().unwrap_or(f64::NEG_INFINITY);
    let normalized = weighted.normalize()?;
    let ess = normalized.ess()?;
    Ok(Advance {
        normalized,
        ess,
        log_mean_weight,
    })
}

fn resample_with<R: Resampler + ?Sized>(
    normalized: WeightedParticleSet,
    resampler: &R,
    rng: &mut RngStream,
) -> Result<WeightedParticleSet> {
    let counts = resampler.resample_counts(&normalized.weights(), rng)?;
    apply_counts(normalized, &counts)
}

/// One full step: propose, weight, normalise, estimate, resample.
#[allow(clippy::too_many_arguments)]
pub fn filter_step<M, P, R>(
    state: &WeightedParticleSet,
    model: &M,
    proposal: &P,
    y: M::Obs,
    t: usize,
    resampler: &R,
    test_functions: &[TestFunction],
    rng: &mut RngStream,
) -> Result<(WeightedParticleSet, StepRecord)>
where
    M: StateSpaceModel,
    P: Proposal<M>,
    R: Resampler + ?Sized,
{
    let adv = advance(state, model, proposal, y, rng)?;
    let pre = estimates(&adv.normalized, test_functions)?;
    let resampled = resample_with(adv.normalized, resampler, rng)?;
    let post = estimates(&resampled, test_functions)?;
    Ok((
        resampled,
        StepRecord {
            t,
            estimates: pre,
            resampled_estimates: post,
            ess: adv.ess,
            log_mean_weight: adv.log_mean_weight,
            resampled: true,
        },
    ))
}

/// Run the filter over `observations` (taken as `y_1, y_2, ...`) from a
/// single stream derived from `master_seed`.
pub fn run_filter<M, P, R>(
    model: &M,
    proposal: &P,
    observations: &[M::Obs],
    n: usize,
    resampler: &R,
    options: &RunOptions,
    master_seed: u64,
) -> Result<FilterRun>
where
    M: StateSpaceModel,
    P: Proposal<M>,
    R: Resampler + ?Sized,
{
    let mut rng = RngStream::derive(master_seed, &[]);
    run_filter_with_rng(model, proposal, observations, n, resampler, options, &mut rng)
}

pub fn run_filter_with_rng<M, P, R>(
    model: &M,
    proposal: &P,
    observations: &[M::Obs],
    n: usize,
    resampler: &R,
    options: &RunOptions,
    rng: &mut RngStream,
) -> Result<FilterRun>
where
    M: StateSpaceModel,
    P: Proposal<M>,
    R: Resampler + ?Sized,
{
    let mut state = init_filter(model, n, rng)?;
    let mut steps = Vec::with_capacity(observations.len());
    let mut full_clouds = Vec::new();
    let mut thinned_clouds = Vec::new();
    let mut log_increments = Vec::with_capacity(observations.len());

    for (idx, &y) in observations.iter().enumerate() {
        let t = idx + 1;
        let adv = advance(&state, model, proposal, y, rng).map_err(|e| e.at_step(t))?;
        let pre = estimates(&adv.normalized, &options.test_functions).map_err(|e| e.at_step(t))?;

        if options.full_cloud_steps.contains(&t) {
            full_clouds.push(Cloud {
                t,
                particles: adv.normalized.particles().to_vec(),
                weights: adv.normalized.weights(),
            });
        }
        if let Some(size) = options.thinned_cloud_size {
            thinned_clouds.push(thin(&adv.normalized, t, size));
        }

        let do_resample = match options.ess_threshold {
            None => true,
            Some(frac) => adv.ess < frac * n as f64,
        };
        let (next, post) = if do_resample {
            let next = resample_with(adv.normalized, resampler, rng).map_err(|e| e.at_step(t))?;
            let post = estimates(&next, &options.test_functions).map_err(|e| e.at_step(t))?;
            (next, post)
        } else {
            (adv.normalized, pre.clone())
        };
        log_increments.push(adv.log_mean_weight);
        steps.push(StepRecord {
            t,
            estimates: pre,
            resampled_estimates: post,
            ess: adv.ess,
            log_mean_weight: adv.log_mean_weight,
            resampled: do_resample,
        });
        state = next;
    }

    Ok(FilterRun {
        n,
        test_functions: options.test_functions.clone(),
        steps,
        log_evidence: log_increments.iter().sum(),
        full_clouds,
        thinned_clouds,
    })
}

fn thin(set: &WeightedParticleSet, t: usize, size: usize) -> Cloud {
    let n = set.len();
    let size = size.min(n).max(1);
    let idx: Vec<usize> = (0..size).map(|k| k * n / size).collect();
    let lw: Vec<f64> = idx.iter().map(|&i| set.log_weights()[i]).collect();
    let log_total = log_sum_exp(&lw);
    Cloud {
        t,
        particles: idx.iter().map(|&i| set.particles()[i]).collect(),
        weights: lw.iter().map(|l| (l - log_total).exp()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cox::{CoxModel, GammaProposal};
    use crate::model::Bootstrap;
    use crate::oracles::kalman::{kalman_step, LinearGaussianModel};
    use crate::resampling::ResampleScheme;

    fn cox() -> CoxModel {
        CoxModel::new(0.5, 0.1).unwrap()
    }

    #[test]
    fn init_examples() {
        let mut rng = RngStream::derive(11, &[]);
        let set = init_filter(&cox(), 4, &mut rng).unwrap();
        assert_eq!(set.stage(), Stage::Resampled);
        assert!(set.particles().iter().all(|&x| x >= 0.0));
        assert!(set.log_weights().iter().all(|&l| l == -(4f64).ln()));
        let again = init_filter(&cox(), 4, &mut RngStream::derive(11, &[])).unwrap();
        assert_eq!(set, again);
        assert!(init_filter(&cox(), 0, &mut rng).is_err());
    }

    #[test]
    fn init_mean_is_folded_normal_mean() {
        let n = 100_000;
        let set = init_filter(&cox(), n, &mut RngStream::derive(3, &[])).unwrap();
        let (mean, _) = set.mean_and_variance().unwrap();
        let mu = (2.0 / std::f64::consts::PI).sqrt();
        let sigma = (1.0 - mu * mu).sqrt();
        assert!((mean - mu).abs() < 3.0 * sigma / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn bootstrap_weights_are_the_likelihood() {
        let m = cox();
        let mut rng = RngStream::derive(5, &[]);
        let parents = init_filter(&m, 200, &mut rng).unwrap();
        let set = propose_and_weight(&parents, &m, &Bootstrap, 2, &mut rng).unwrap();
        assert_eq!(set.stage(), Stage::Unnormalized);
        for (&x, &lw) in set.particles().iter().zip(set.log_weights()) {
            assert_eq!(lw.to_bits(), m.likelihood_logdensity(2, x).to_bits());
        }
        let lme = set.log_mean_weight().unwrap();
        let direct = (set.log_weights().iter().map(|l| l.exp()).sum::<f64>() / 200.0).ln();
        assert!((lme - direct).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_weight_examples() {
        let m = cox();
        let q = GammaProposal::new(1.5, 0.5).unwrap();
        let w = log_unnormalized_weight(&m, &q, 0.3, 1.0, 0).unwrap().exp();
        assert!((w - 0.4995).abs() < 1e-4);
        assert_eq!(log_unnormalized_weight(&m, &q, 0.0, 1.0, 3).unwrap(), f64::NEG_INFINITY);
        let b = log_unnormalized_weight(&m, &Bootstrap, 0.7, 1.0, 1).unwrap();
        assert_eq!(b, m.likelihood_logdensity(1, 0.7));
    }

    #[test]
    fn stages_are_checked() {
        let m = cox();
        let mut rng = RngStream::derive(1, &[]);
        let u = WeightedParticleSet::unnormalized(vec![1.0, 2.0], vec![0.0, 0.0]).unwrap();
        let r = propose_and_weight(&u, &m, &Bootstrap, 0, &mut rng);
        assert!(matches!(r, Err(SmcError::StageMismatch { .. })));
    }

    #[test]
    fn degenerate_step_aborts_with_context() {
        // particles stuck at zero with a positive count: every weight vanishes
        struct AtZero;
        impl Proposal<CoxModel> for AtZero {
            fn propose(&self, _: &CoxModel, _: f64, _: u32, _: &mut RngStream) -> f64 {
                0.0
            }
            fn logdensity(&self, _: &CoxModel, _: f64, _: f64, _: u32) -> f64 {
                0.0
            }
        }
        let err = run_filter(&cox(), &AtZero, &[0, 4], 10, &ResampleScheme::Multinomial, &RunOptions::default(), 1)
            .unwrap_err();
        assert_eq!(
            err,
            SmcError::AtStep {
                t: 2,
                source: Box::new(SmcError::DegenerateWeights)
            }
        );
    }

    #[test]
    fn run_is_deterministic_and_bounded() {
        let m = cox();
        let q = GammaProposal::new(1.5, 0.5).unwrap();
        let obs = [1, 0, 2, 0, 0];
        let opts = RunOptions::with_test_functions(vec![TestFunction::One, TestFunction::ExpNeg]);
        let a = run_filter(&m, &q, &obs, 300, &ResampleScheme::Systematic, &opts, 9).unwrap();
        let b = run_filter(&m, &q, &obs, 300, &ResampleScheme::Systematic, &opts, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), 5);
        for s in &a.steps {
            assert_eq!(s.estimates[0], 1.0);
            assert!(s.estimates[1] > 0.0 && s.estimates[1] <= 1.0);
            assert!(s.ess >= 1.0 && s.ess <= 300.0);
        }
        let empty = run_filter(&m, &q, &[], 10, &ResampleScheme::Systematic, &opts, 9).unwrap();
        assert!(empty.steps.is_empty());
    }

    #[test]
    fn ess_threshold_skips_resampling() {
        let m = cox();
        let opts = RunOptions {
            ess_threshold: Some(1e-9),
            ..RunOptions::default()
        };
        let run = run_filter(&m, &Bootstrap, &[1, 1, 1], 100, &ResampleScheme::Multinomial, &opts, 2).unwrap();
        assert!(run.steps.iter().all(|s| !s.resampled));
        assert!(run.steps.iter().all(|s| s.estimates == s.resampled_estimates));
    }

    #[test]
    fn one_step_matches_kalman() {
        let lg = LinearGaussianModel::new(0.9, 0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
        let n = 5000;
        let mut rng = RngStream::derive(17, &[]);
        let init = init_filter(&lg, n, &mut rng).unwrap();
        let (next, rec) = filter_step(&init, &lg, &Bootstrap, 1.3, 1, &ResampleScheme::Systematic, &[], &mut rng).unwrap();
        assert_eq!(next.stage(), Stage::Resampled);
        assert!(rec.resampled && rec.log_mean_weight.is_finite());
        let adv = advance(&init, &lg, &Bootstrap, 1.3, &mut rng).unwrap();
        let (mean, var) = adv.normalized.mean_and_variance().unwrap();
        let exact = kalman_step(&lg.prior(), &lg, 1.3);
        let sigma = (var / adv.ess).sqrt();
        assert!((mean - exact.mean).abs() < 3.0 * sigma, "{mean} vs {}", exact.mean);
    }
}
