//! Sequential Monte Carlo for one-dimensional state-space models with
//! arbitrary importance densities.
//!
//! The crate is organised around the standard particle filter loop
//! (propose, weight, normalise, resample) and the tooling needed to check
//! it numerically when the importance weights are not pointwise bounded:
//!
//! - [`filter`]: the engine, over any [`StateSpaceModel`] / [`Proposal`] pair.
//! - [`resampling`]: multinomial, stratified and systematic schemes producing
//!   explicit offspring counts.
//! - [`cox`]: reflected Brownian motion observed through Poisson counts,
//!   with a Gamma importance density whose weights blow up at zero.
//! - [`moments`]: weight-moment diagnostics, closed form and by quadrature.
//! - [`oracles`]: a dense-grid Bayes filter and a scalar Kalman filter.
//!
//! All randomness flows through [`RngStream`], which is derived
//! deterministically from a master seed and a list of integer labels.

pub mod cox;
pub mod error;
pub mod filter;
pub mod histogram;
pub mod model;
pub mod moments;
pub mod oracles;
pub mod particles;
pub mod resampling;
pub mod rng;
pub mod special;

pub use error::{Result, SmcError};
pub use filter::{
    filter_step, init_filter, log_unnormalized_weight, propose_and_weight, run_filter,
    run_filter_with_rng, FilterRun, RunOptions, StepRecord,
};
pub use model::{Bootstrap, Proposal, StateSpaceModel, TestFunction};
pub use particles::{Stage, WeightedParticleSet};
pub use resampling::{CountVector, ResampleScheme, Resampler};
pub use rng::RngStream;
