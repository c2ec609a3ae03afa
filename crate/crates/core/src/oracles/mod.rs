//! Reference filters used as ground truth.

pub mod grid;
pub mod kalman;

pub use grid::{grid_estimate, grid_init, grid_predict, grid_update, GridDensity, GridFilter, GridStep, TransitionKernel};
pub use kalman::{kalman_filter, kalman_step, simulate_linear_gaussian, GaussianBelief, LinearGaussianModel};
