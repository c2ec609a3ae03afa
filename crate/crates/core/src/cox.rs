//! Reflected Brownian motion observed through Poisson counts.
//!
//! State: `x_t = |x_{t-1} + √η ε_t|`, `x_0 = |ξ|` with `ε, ξ` standard
//! normal. Measurement: `y_t ~ Poisson(c x_t)`. The Gamma importance
//! density ignores both the parent and the observation, and vanishes at
//! `x = 0` when `α > 1`, so for `y_t = 0` the weight diverges there.
//!
//! The experiment parameter written `q = 1/10` is taken to be `η = 0.1`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::error::{Result, SmcError};
use crate::model::{Proposal, StateSpaceModel};
use crate::rng::RngStream;
use crate::special::{ln_gamma_positive, log_add_exp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxParams {
    c: f64,
    eta: f64,
}

impl CoxParams {
    pub fn new(c: f64, eta: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(SmcError::InvalidParameter(format!("c must be positive, got {c}")));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(SmcError::InvalidParameter(format!("eta must be positive, got {eta}")));
        }
        Ok(Self { c, eta })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// Folded-Gaussian transition density, `x ≥ 0`, `x_prev ≥ 0`.
pub fn cox_transition_logdensity(x: f64, x_prev: f64, eta: f64) -> Result<f64> {
    if x < 0.0 || x_prev < 0.0 || x.is_nan() || x_prev.is_nan() {
        return Err(SmcError::Domain(format!(
            "transition density needs x, x_prev >= 0 (got {x}, {x_prev})"
        )));
    }
    Ok(folded_logdensity(x, x_prev, eta))
}

#[inline]
fn folded_logdensity(x: f64, x_prev: f64, eta: f64) -> f64 {
    let d = x - x_prev;
    let s = x + x_prev;
    let two_eta = 2.0 * eta;
    -0.5 * (2.0 * PI * eta).ln() + log_add_exp(-d * d / two_eta, -s * s / two_eta)
}

/// Poisson log-pmf `y ln(cx) - cx - ln y!`, with the `x → 0⁺` limit at `x = 0`.
pub fn cox_likelihood_logdensity(y: u32, x: f64, c: f64) -> Result<f64> {
    if x < 0.0 || x.is_nan() {
        return Err(SmcError::Domain(format!("likelihood needs x >= 0 (got {x})")));
    }
    Ok(poisson_logpmf(y, c * x))
}

#[inline]
fn poisson_logpmf(y: u32, lambda: f64) -> f64 {
    if y == 0 {
        -lambda
    } else if lambda == 0.0 {
        f64::NEG_INFINITY
    } else {
        let y = y as f64;
        y * lambda.ln() - lambda - ln_gamma_positive(y + 1.0)
    }
}

/// `|ξ|` for standard normal `ξ`.
pub fn cox_prior_sample(rng: &mut RngStream) -> f64 {
    let xi: f64 = StandardNormal.sample(rng);
    xi.abs()
}

/// Poisson draw; inversion from a single uniform below `λ = 30`.
pub fn sample_poisson(lambda: f64, rng: &mut RngStream) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda < 30.0 {
        let u: f64 = rng.random();
        let mut k = 0u32;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u > cdf && k < 1000 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            if p == 0.0 {
                break;
            }
        }
        k
    } else {
        let d = Poisson::new(lambda).expect("lambda is positive and finite");
        d.sample(rng) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxModel {
    pub params: CoxParams,
}

impl CoxModel {
    pub fn new(c: f64, eta: f64) -> Result<Self> {
        Ok(Self {
            params: CoxParams::new(c, eta)?,
        })
    }
}

impl StateSpaceModel for CoxModel {
    type Obs = u32;

    fn sample_prior(&self, rng: &mut RngStream) -> f64 {
        cox_prior_sample(rng)
    }

    fn sample_transition(&self, x_prev: f64, rng: &mut RngStream) -> f64 {
        let eps: f64 = StandardNormal.sample(rng);
        (x_prev + self.params.eta.sqrt() * eps).abs()
    }

    fn transition_logdensity(&self, x: f64, x_prev: f64) -> f64 {
        if x < 0.0 || x_prev < 0.0 {
            return f64::NEG_INFINITY;
        }
        folded_logdensity(x, x_prev, self.params.eta)
    }

    fn likelihood_logdensity(&self, y: u32, x: f64) -> f64 {
        if x < 0.0 {
            return f64::NEG_INFINITY;
        }
        poisson_logpmf(y, self.params.c * x)
    }

    fn likelihood_bound(&self) -> f64 {
        1.0
    }
}

/// `Gamma(α, rate β)` importance density, independent of parent and observation.
#[derive(Debug, Clone, Copy)]
pub struct GammaProposal {
    alpha: f64,
    beta: f64,
    log_norm: f64,
    sampler: Gamma<f64>,
}

impl PartialEq for GammaProposal {
    fn eq(&self, other: &Self) -> bool {
        self.alpha == other.alpha && self.beta == other.beta
    }
}

impl GammaProposal {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(SmcError::InvalidParameter(format!(
                "Gamma proposal needs alpha, beta > 0 (got {alpha}, {beta})"
            )));
        }
        let sampler = Gamma::new(alpha, 1.0 / beta)
            .map_err(|e| SmcError::InvalidParameter(format!("Gamma({alpha}, {beta}): {e}")))?;
        Ok(Self {
            alpha,
            beta,
            log_norm: alpha * beta.ln() - ln_gamma_positive(alpha),
            sampler,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `α > 1`: the density vanishes at zero and weights for `y = 0` are unbounded.
    pub fn is_singular(&self) -> bool {
        self.alpha > 1.0
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        self.sampler.sample(rng)
    }

    pub fn logdensity(&self, x: f64) -> f64 {
        if x < 0.0 || x.is_nan() {
            return f64::NEG_INFINITY;
        }
        if x == 0.0 {
            return match self.alpha.partial_cmp(&1.0) {
                Some(std::cmp::Ordering::Greater) => f64::NEG_INFINITY,
                Some(std::cmp::Ordering::Equal) => self.log_norm,
                _ => f64::INFINITY,
            };
        }
        self.log_norm + (self.alpha - 1.0) * x.ln() - self.beta * x
    }
}

/// Convenience wrapper for [`GammaProposal::sample`].
pub fn gamma_propose(prop: &GammaProposal, rng: &mut RngStream) -> f64 {
    prop.sample(rng)
}

pub fn gamma_logdensity(prop: &GammaProposal, x: f64) -> f64 {
    prop.logdensity(x)
}

impl Proposal<CoxModel> for GammaProposal {
    fn propose(&self, _model: &CoxModel, _x_prev: f64, _y: u32, rng: &mut RngStream) -> f64 {
        self.sample(rng)
    }

    fn logdensity(&self, _model: &CoxModel, x: f64, _x_prev: f64, _y: u32) -> f64 {
        GammaProposal::logdensity(self, x)
    }
}

/// Integer observations `y_1, ..., y_T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSeries {
    observations: Vec<(usize, u32)>,
}

impl ObservationSeries {
    pub fn new(observations: Vec<(usize, u32)>) -> Result<Self> {
        for (i, &(t, _)) in observations.iter().enumerate() {
            if t != i + 1 {
                return Err(SmcError::InvalidParameter(format!(
                    "observation times must run 1, 2, 3, ...; row {} has t = {t}",
                    i + 1
                )));
            }
        }
        Ok(Self { observations })
    }

    pub fn from_values(values: &[u32]) -> Self {
        Self {
            observations: values.iter().enumerate().map(|(i, &y)| (i + 1, y)).collect(),
        }
    }

    pub fn pairs(&self) -> &[(usize, u32)] {
        &self.observations
    }

    pub fn values(&self) -> Vec<u32> {
        self.observations.iter().map(|&(_, y)| y).collect()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// CSV with header `t,y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| SmcError::Io(e.to_string());
        w.write_record(["t", "y"]).map_err(io)?;
        for &(t, y) in &self.observations {
            w.write_record([t.to_string(), y.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| SmcError::Io(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = r.headers().map_err(|e| SmcError::Io(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "y" {
            return Err(SmcError::Io(format!("expected header `t,y`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| SmcError::Io(e.to_string()))?;
            let parse = |s: &str| -> Result<u64> {
                s.parse().map_err(|_| SmcError::Io(format!("not a nonnegative integer: `{s}`")))
            };
            let t = parse(&rec[0])? as usize;
            let y = u32::try_from(parse(&rec[1])?).map_err(|_| SmcError::Io("count too large".into()))?;
            rows.push((t, y));
        }
        Self::new(rows)
    }
}

/// Hidden states `x_0, ..., x_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<f64>,
}

impl Trajectory {
    /// CSV with header `t,x`, `x` at 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| SmcError::Io(e.to_string());
        writeln!(out, "t,x").map_err(io)?;
        for (t, x) in self.states.iter().enumerate() {
            writeln!(out, "{t},{x:.16e}").map_err(io)?;
        }
        Ok(())
    }
}

/// Simulate `T` steps of the model; deterministic in `master_seed`.
pub fn simulate(params: &CoxParams, steps: usize, master_seed: u64) -> Result<(Trajectory, ObservationSeries)> {
    if steps == 0 {
        return Err(SmcError::InvalidParameter("need at least one step".into()));
    }
    let model = CoxModel { params: *params };
    let mut rng = RngStream::derive(master_seed, &[]);
    let mut states = Vec::with_capacity(steps + 1);
    let mut obs = Vec::with_capacity(steps);
    let mut x = model.sample_prior(&mut rng);
    states.push(x);
    for t in 1..=steps {
        x = model.sample_transition(x, &mut rng);
        let y = sample_poisson(params.c * x, &mut rng);
        states.push(x);
        obs.push((t, y));
    }
    Ok((Trajectory { states }, ObservationSeries { observations: obs }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::log_unnormalized_weight;

    fn model() -> CoxModel {
        CoxModel::new(0.5, 0.1).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(CoxParams::new(0.5, 0.0).is_err());
        assert!(CoxParams::new(0.0, 0.1).is_err());
        assert!(CoxParams::new(-1.0, 0.1).is_err());
        assert!(GammaProposal::new(0.0, 1.0).is_err());
        assert!(GammaProposal::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn transition_density_values() {
        let f0 = cox_transition_logdensity(0.0, 0.0, 0.1).unwrap().exp();
        assert!((f0 - 2.0 / (2.0 * PI * 0.1).sqrt()).abs() < 1e-12);
        assert!((f0 - 2.5231).abs() < 1e-4);
        // (2π·0.1)^{-1/2} (1 + e^{-5})
        let f = cox_transition_logdensity(0.5, 0.5, 0.1).unwrap().exp();
        assert!((f - 1.270_066_627_612_6).abs() < 1e-12, "{f}");
        assert!((f - 1.2701).abs() < 1e-4);
        assert!(cox_transition_logdensity(-0.1, 0.5, 0.1).is_err());
        assert!(cox_transition_logdensity(0.1, -0.5, 0.1).is_err());
    }

    #[test]
    fn likelihood_values() {
        assert_eq!(cox_likelihood_logdensity(0, 0.0, 0.5).unwrap(), 0.0);
        assert_eq!(cox_likelihood_logdensity(3, 0.0, 0.5).unwrap(), f64::NEG_INFINITY);
        let g = cox_likelihood_logdensity(2, 2.0, 0.5).unwrap().exp();
        assert!((g - (-1.0f64).exp() / 2.0).abs() < 1e-14);
        assert!((g - 0.18394).abs() < 1e-5);
        assert!(cox_likelihood_logdensity(1, -1.0, 0.5).is_err());
        // large counts go through log-Γ
        assert!(cox_likelihood_logdensity(500, 1000.0, 0.5).unwrap().is_finite());
    }

    #[test]
    fn likelihood_bounded_by_one() {
        let m = model();
        for y in 0..60 {
            for k in 0..400 {
                let x = k as f64 * 0.25;
                assert!(m.likelihood_logdensity(y, x) <= 0.0, "y={y} x={x}");
            }
        }
    }

    #[test]
    fn gamma_density_values() {
        let q = GammaProposal::new(1.5, 0.5).unwrap();
        // β^α / Γ(α) e^{-β} at x = 1
        let want = 0.5f64.powf(1.5) / PI.sqrt() * 2.0 * (-0.5f64).exp();
        assert!((q.logdensity(1.0).exp() - want).abs() < 1e-14);
        assert!((q.logdensity(1.0).exp() - 0.24197).abs() < 1e-5);
        assert_eq!(q.logdensity(0.0), f64::NEG_INFINITY);
        assert_eq!(q.logdensity(-1.0), f64::NEG_INFINITY);
        assert!(q.is_singular());
        let exp = GammaProposal::new(1.0, 2.0).unwrap();
        assert!((exp.logdensity(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(GammaProposal::new(0.5, 1.0).unwrap().logdensity(0.0), f64::INFINITY);
    }

    #[test]
    fn weight_at_reference_point() {
        // high-precision evaluation of g f / q: 0.49945120857142118
        let m = model();
        let q = GammaProposal::new(1.5, 0.5).unwrap();
        let lw = log_unnormalized_weight(&m, &q, 0.3, 1.0, 0).unwrap();
        assert!((lw.exp() - 0.499_451_208_571_421_2).abs() < 1e-12, "{}", lw.exp());
    }

    #[test]
    fn weight_singularity_at_zero() {
        let m = model();
        let q = GammaProposal::new(1.5, 0.5).unwrap();
        let ws: Vec<f64> = (2..=8)
            .map(|k| log_unnormalized_weight(&m, &q, 10f64.powi(-k), 1.0, 0).unwrap())
            .collect();
        assert!(ws.windows(2).all(|p| p[1] > p[0]), "{ws:?}");
        // zero likelihood at the boundary for y >= 1
        assert_eq!(log_unnormalized_weight(&m, &q, 0.0, 1.0, 3).unwrap(), f64::NEG_INFINITY);
        // q(0) = 0 with g f > 0 cannot be weighted
        assert!(matches!(
            log_unnormalized_weight(&m, &q, 0.0, 1.0, 0),
            Err(SmcError::WeightNotFinite { .. })
        ));
    }

    #[test]
    fn poisson_sampler_moments() {
        let mut rng = RngStream::derive(3, &[]);
        for lambda in [0.3, 2.5, 12.0, 45.0] {
            let n = 100_000;
            let xs: Vec<f64> = (0..n).map(|_| sample_poisson(lambda, &mut rng) as f64).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (lambda / n as f64).sqrt();
            assert!((mean - lambda).abs() < 4.0 * se, "λ={lambda} mean={mean}");
            assert!((var / lambda - 1.0).abs() < 0.03, "λ={lambda} var={var}");
        }
        assert_eq!(sample_poisson(0.0, &mut rng), 0);
    }

    #[test]
    fn simulate_is_deterministic_and_valid() {
        let p = CoxParams::new(0.5, 0.1).unwrap();
        let (a, oa) = simulate(&p, 30, 7).unwrap();
        let (b, ob) = simulate(&p, 30, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa, ob);
        assert_eq!(a.states.len(), 31);
        assert!(a.states.iter().all(|&x| x >= 0.0));
        assert_eq!(oa.pairs().first().unwrap().0, 1);
        assert!(simulate(&p, 0, 7).is_err());
        let (c, _) = simulate(&p, 30, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn observation_csv_round_trip() {
        let s = ObservationSeries::from_values(&[0, 3, 1, 0]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "t,y\n1,0\n2,3\n3,1\n4,0\n");
        assert_eq!(ObservationSeries::read_csv(&buf[..]).unwrap(), s);
        assert!(ObservationSeries::read_csv(&b"t,y\n2,0\n"[..]).is_err());
        assert!(ObservationSeries::read_csv(&b"a,b\n1,0\n"[..]).is_err());
        assert!(ObservationSeries::read_csv(&b"t,y\n1,-2\n"[..]).is_err());
        let empty = ObservationSeries::read_csv(&b"t,y\n"[..]).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn trajectory_csv_digits() {
        let tr = Trajectory {
            states: vec![0.797_884_560_802_865_4, 1.0],
        };
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "t,x\n0,7.9788456080286541e-1\n1,1.0000000000000000e0\n");
    }
}
