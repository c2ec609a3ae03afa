//! Dense-grid Bayes filter on `[0, x_max]` by the midpoint rule.
//!
//! Densities live at cell midpoints `x_i = (i + ½) dx`. Prediction applies
//! the transition kernel as a dense matrix, update multiplies pointwise by
//! the likelihood; both renormalise so that `Σ v_i dx = 1`.

use crate::error::{Result, SmcError};
use crate::model::TestFunction;
use crate::special::pairwise_sum;

#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    x_max: f64,
    dx: f64,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|i| self.midpoint(i))
    }

    /// `Σ v_i dx`.
    pub fn mass(&self) -> f64 {
        pairwise_sum(&self.values) * self.dx
    }

    /// `Σ φ(x_i) v_i dx`.
    pub fn integrate(&self, phi: impl Fn(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| phi(self.midpoint(i)) * v)
            .collect();
        pairwise_sum(&terms) * self.dx
    }

    pub fn estimate(&self, phi: &TestFunction) -> f64 {
        self.integrate(|x| phi.eval(x))
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.integrate(|x| (x - m) * (x - m))
    }

    /// Probability mass per histogram bin on `[lo, hi)`, cells assigned by
    /// midpoint, followed by one overflow entry for the mass outside.
    pub fn bin_probabilities(&self, bins: usize, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = vec![0.0; bins + 1];
        let width = (hi - lo) / bins as f64;
        for (i, v) in self.values.iter().enumerate() {
            let x = self.midpoint(i);
            let b = if x >= lo && x < hi {
                (((x - lo) / width) as usize).min(bins - 1)
            } else {
                bins
            };
            out[b] += v * self.dx;
        }
        out
    }

    fn renormalized(mut self, after: &'static str) -> Result<Self> {
        let mass = self.mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(SmcError::ZeroMass(after));
        }
        for v in &mut self.values {
            *v /= mass;
        }
        Ok(self)
    }
}

fn check_geometry(x_max: f64, n_cells: usize) -> Result<()> {
    if n_cells < 10 {
        return Err(SmcError::InvalidParameter(format!("grid needs at least 10 cells, got {n_cells}")));
    }
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(SmcError::InvalidParameter(format!("x_max must be positive, got {x_max}")));
    }
    Ok(())
}

/// Prior density at the cell midpoints, renormalised.
pub fn grid_init(prior_density: impl Fn(f64) -> f64, x_max: f64, n_cells: usize) -> Result<GridDensity> {
    check_geometry(x_max, n_cells)?;
    let dx = x_max / n_cells as f64;
    let values = (0..n_cells)
        .map(|i| prior_density((i as f64 + 0.5) * dx).max(0.0))
        .collect();
    GridDensity { x_max, dx, values }.renormalized("initialisation")
}

/// Row-major matrix `K[i][j] = f(x_i | x_j) dx`.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    n: usize,
    dx: f64,
    entries: Vec<f64>,
}

impl TransitionKernel {
    pub fn new(x_max: f64, n_cells: usize, transition_logdensity: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_geometry(x_max, n_cells)?;
        let dx = x_max / n_cells as f64;
        let mut entries = Vec::with_capacity(n_cells * n_cells);
        for i in 0..n_cells {
            let x = (i as f64 + 0.5) * dx;
            for j in 0..n_cells {
                let x_prev = (j as f64 + 0.5) * dx;
                entries.push(transition_logdensity(x, x_prev).exp() * dx);
            }
        }
        Ok(Self { n: n_cells, dx, entries })
    }

    pub fn n_cells(&self) -> usize {
        self.n
    }

    pub fn apply(&self, grid: &GridDensity) -> Result<GridDensity> {
        if grid.n_cells() != self.n || grid.dx != self.dx {
            return Err(SmcError::InvalidParameter("kernel and grid geometry differ".into()));
        }
        let values = self
            .entries
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(&grid.values).map(|(k, v)| k * v).sum())
            .collect();
        GridDensity {
            x_max: grid.x_max,
            dx: grid.dx,
            values,
        }
        .renormalized("prediction")
    }
}

/// `v'_i = Σ_j f(x_i | x_j) v_j dx`, renormalised. Builds the kernel on every
/// call; [`GridFilter`] keeps it across steps.
pub fn grid_predict(grid: &GridDensity, transition_logdensity: impl Fn(f64, f64) -> f64) -> Result<GridDensity> {
    TransitionKernel::new(grid.x_max, grid.n_cells(), transition_logdensity)?.apply(grid)
}

/// Pointwise multiplication by `g(y | x_i)` (given in log form), renormalised.
pub fn grid_update<Y: Copy>(
    grid: &GridDensity,
    likelihood_logdensity: impl Fn(Y, f64) -> f64,
    y: Y,
) -> Result<GridDensity> {
    let values = grid
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v * likelihood_logdensity(y, grid.midpoint(i)).exp())
        .collect();
    GridDensity {
        x_max: grid.x_max,
        dx: grid.dx,
        values,
    }
    .renormalized("update")
}

pub fn grid_estimate(grid: &GridDensity, phi: &TestFunction) -> f64 {
    grid.estimate(phi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridStep {
    pub t: usize,
    pub estimates: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub density: GridDensity,
}

/// Grid filter with the transition kernel cached.
#[derive(Debug, Clone)]
pub struct GridFilter {
    kernel: TransitionKernel,
    initial: GridDensity,
}

impl GridFilter {
    pub fn new(
        prior_density: impl Fn(f64) -> f64,
        transition_logdensity: impl Fn(f64, f64) -> f64,
        x_max: f64,
        n_cells: usize,
    ) -> Result<Self> {
        Ok(Self {
            initial: grid_init(prior_density, x_max, n_cells)?,
            kernel: TransitionKernel::new(x_max, n_cells, transition_logdensity)?,
        })
    }

    pub fn initial(&self) -> &GridDensity {
        &self.initial
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    /// Filtering densities for `t = 1..=T`.
    pub fn run<Y: Copy>(
        &self,
        observations: &[Y],
        likelihood_logdensity: impl Fn(Y, f64) -> f64,
        test_functions: &[TestFunction],
    ) -> Result<Vec<GridStep>> {
        let mut grid = self.initial.clone();
        let mut out = Vec::with_capacity(observations.len());
        for (idx, &y) in observations.iter().enumerate() {
            let t = idx + 1;
            let predicted = self.kernel.apply(&grid).map_err(|e| e.at_step(t))?;
            grid = grid_update(&predicted, &likelihood_logdensity, y).map_err(|e| e.at_step(t))?;
            out.push(GridStep {
                t,
                estimates: test_functions.iter().map(|phi| grid.estimate(phi)).collect(),
                mean: grid.mean(),
                variance: grid.variance(),
                density: grid.clone(),
            });
        }
        Ok(out)
    }
}

/// Density of `|ξ|`, `ξ ~ N(0, 1)`.
pub fn folded_normal_density(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        2.0 * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }
}
