//! Scalar linear-Gaussian model and its exact Kalman recursion.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SmcError};
use crate::model::StateSpaceModel;
use crate::rng::RngStream;

/// `x_t = a x_{t-1} + N(0, q_var)`, `y_t = h x_t + N(0, r_var)`, `x_0 ~ N(m0, p0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussianModel {
    pub a: f64,
    pub q_var: f64,
    pub h: f64,
    pub r_var: f64,
    pub m0: f64,
    pub p0: f64,
}

impl LinearGaussianModel {
    /// `q_var = 0` is allowed for the exact recursion; the particle filter
    /// needs `q_var > 0` for a transition density.
    pub fn new(a: f64, q_var: f64, h: f64, r_var: f64, m0: f64, p0: f64) -> Result<Self> {
        if !(q_var >= 0.0 && r_var > 0.0 && p0 > 0.0) {
            return Err(SmcError::InvalidParameter(format!(
                "variances must be positive (q_var={q_var}, r_var={r_var}, p0={p0})"
            )));
        }
        Ok(Self { a, q_var, h, r_var, m0, p0 })
    }

    pub fn prior(&self) -> GaussianBelief {
        GaussianBelief {
            mean: self.m0,
            variance: self.p0,
        }
    }
}

fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * PI * var).ln() + d * d / var)
}

impl StateSpaceModel for LinearGaussianModel {
    type Obs = f64;

    fn sample_prior(&self, rng: &mut RngStream) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.m0 + self.p0.sqrt() * z
    }

    fn sample_transition(&self, x_prev: f64, rng: &mut RngStream) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.a * x_prev + self.q_var.sqrt() * z
    }

    fn transition_logdensity(&self, x: f64, x_prev: f64) -> f64 {
        normal_logpdf(x, self.a * x_prev, self.q_var)
    }

    fn likelihood_logdensity(&self, y: f64, x: f64) -> f64 {
        normal_logpdf(y, self.h * x, self.r_var)
    }

    fn likelihood_bound(&self) -> f64 {
        1.0 / (2.0 * PI * self.r_var).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief {
    pub mean: f64,
    pub variance: f64,
}

/// Predict with the dynamics, then condition on `y`.
pub fn kalman_step(belief: &GaussianBelief, model: &LinearGaussianModel, y: f64) -> GaussianBelief {
    let m_pred = model.a * belief.mean;
    let p_pred = model.a * model.a * belief.variance + model.q_var;
    let s = model.h * model.h * p_pred + model.r_var;
    let gain = p_pred * model.h / s;
    GaussianBelief {
        mean: m_pred + gain * (y - model.h * m_pred),
        variance: (1.0 - gain * model.h) * p_pred,
    }
}

/// Filtering beliefs for `t = 1..=T`.
pub fn kalman_filter(model: &LinearGaussianModel, observations: &[f64]) -> Vec<GaussianBelief> {
    let mut belief = model.prior();
    observations
        .iter()
        .map(|&y| {
            belief = kalman_step(&belief, model, y);
            belief
        })
        .collect()
}

/// States `x_0..=x_T` and observations `y_1..=y_T`.
pub fn simulate_linear_gaussian(model: &LinearGaussianModel, steps: usize, master_seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = RngStream::derive(master_seed, &[]);
    let mut x = model.sample_prior(&mut rng);
    let mut xs = vec![x];
    let mut ys = Vec::with_capacity(steps);
    for _ in 0..steps {
        x = model.sample_transition(x, &mut rng);
        let z: f64 = StandardNormal.sample(&mut rng);
        ys.push(model.h * x + model.r_var.sqrt() * z);
        xs.push(x);
    }
    (xs, ys)
}
