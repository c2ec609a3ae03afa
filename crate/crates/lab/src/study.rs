//! Monte Carlo convergence studies against the grid oracle.

use pfconv_core::cox::CoxModel;
use pfconv_core::oracles::grid::{folded_normal_density, GridFilter, GridStep};
use pfconv_core::{run_filter_with_rng, RngStream, RunOptions, SmcError, StateSpaceModel, TestFunction};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, StudyPlan};
use crate::fit::{fit_loglog_slope, RateFit};
use crate::LabError;

pub const SCHEMA_VERSION: u32 = 1;

/// Error moments for one `(φ, N, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCell {
    pub phi: String,
    pub n: usize,
    pub t: usize,
    pub mse: f64,
    pub mse_stderr: f64,
    pub l4: f64,
    pub l4_stderr: f64,
}

/// Which empirical measure the errors were taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Weighted particles before resampling.
    Filtered,
    /// Equally weighted particles after resampling.
    Resampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub phi: String,
    pub measure: Measure,
    /// 2 fits the mean squared error, 4 the fourth moment.
    pub p: u32,
    pub t: usize,
    pub fit: Option<RateFit>,
    pub error: Option<String>,
}

/// Slope averaged over every step where a fit succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedFit {
    pub phi: String,
    pub measure: Measure,
    pub p: u32,
    pub mean_slope: Option<f64>,
    pub steps_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTruth {
    pub phi: String,
    /// `(π_t, φ)` for `t = 1..=T`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub dx: f64,
    pub x_max: f64,
    pub n_cells: usize,
    /// The grid was rerun at `dx / 2`; largest change over `t` and `φ`.
    pub check_dx: f64,
    pub max_check_difference: f64,
    pub truth: Vec<OracleTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub n: usize,
    pub replicate: usize,
    pub t: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub proposal: String,
    pub observations: Vec<u32>,
    pub oracle: OracleSummary,
    pub filtered: Vec<ErrorCell>,
    pub resampled: Vec<ErrorCell>,
    pub fits: Vec<FitRecord>,
    pub averaged_fits: Vec<AveragedFit>,
    /// Set when a replicate failed; the tables then cover only the
    /// particle counts whose replicates all finished.
    pub partial: Option<Abort>,
}

impl ConvergenceReport {
    pub fn fit(&self, phi: &str, measure: Measure, p: u32, t: usize) -> Option<&FitRecord> {
        self.fits
            .iter()
            .find(|f| f.phi == phi && f.measure == measure && f.p == p && f.t == t)
    }

    pub fn cell(&self, measure: Measure, phi: &str, n: usize, t: usize) -> Option<&ErrorCell> {
        let table = match measure {
            Measure::Filtered => &self.filtered,
            Measure::Resampled => &self.resampled,
        };
        table.iter().find(|c| c.phi == phi && c.n == n && c.t == t)
    }
}

/// Errors of one replicate, indexed `[t - 1][φ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateErrors {
    pub filtered: Vec<Vec<f64>>,
    pub resampled: Vec<Vec<f64>>,
}

/// Grid filter run at the study resolution.
pub fn grid_oracle(
    model: &CoxModel,
    observations: &[u32],
    dx: f64,
    x_max: f64,
    test_functions: &[TestFunction],
) -> Result<Vec<GridStep>, SmcError> {
    let cells = (x_max / dx).round() as usize;
    let grid = GridFilter::new(folded_normal_density, |x, xp| model.transition_logdensity(x, xp), x_max, cells)?;
    grid.run(observations, |y, x| model.likelihood_logdensity(y, x), test_functions)
}

fn truth_table(steps: &[GridStep], phis: &[TestFunction]) -> Vec<OracleTruth> {
    phis.iter()
        .enumerate()
        .map(|(k, phi)| OracleTruth {
            phi: phi.name(),
            values: steps.iter().map(|s| s.estimates[k]).collect(),
        })
        .collect()
}

/// Worker count from `PFCONV_WORKERS`, else the number of logical cores.
pub fn workers_from_env() -> usize {
    std::env::var("PFCONV_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let m = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / m;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Error moments per `(φ, N, t)`, ordered by `φ`, then `N`, then `t`.
///
/// `errors[i][r]` holds replicate `r` at particle count `ns[i]`.
pub fn tabulate(
    phis: &[TestFunction],
    ns: &[usize],
    errors: &[Vec<ReplicateErrors>],
    measure: Measure,
) -> Vec<ErrorCell> {
    let mut cells = Vec::new();
    for (k, phi) in phis.iter().enumerate() {
        for (n, reps) in ns.iter().zip(errors) {
            let Some(first) = reps.first() else { continue };
            let steps = match measure {
                Measure::Filtered => first.filtered.len(),
                Measure::Resampled => first.resampled.len(),
            };
            for t in 0..steps {
                let e = |r: &ReplicateErrors| match measure {
                    Measure::Filtered => r.filtered[t][k],
                    Measure::Resampled => r.resampled[t][k],
                };
                let (mse, mse_stderr) = mean_and_stderr(reps.iter().map(|r| e(r).powi(2)));
                let (l4, l4_stderr) = mean_and_stderr(reps.iter().map(|r| e(r).powi(4)));
                cells.push(ErrorCell {
                    phi: phi.name(),
                    n: *n,
                    t: t + 1,
                    mse,
                    mse_stderr,
                    l4,
                    l4_stderr,
                });
            }
        }
    }
    cells
}

/// Slope fits for every `(φ, p, t)` plus the per-`(φ, p)` average over `t`.
pub fn fit_rates(cells: &[ErrorCell], phis: &[TestFunction], moments: &[u32], measure: Measure) -> (Vec<FitRecord>, Vec<AveragedFit>) {
    let mut fits = Vec::new();
    let mut averaged = Vec::new();
    let max_t = cells.iter().map(|c| c.t).max().unwrap_or(0);
    for phi in phis {
        let name = phi.name();
        for &p in moments {
            let mut slopes = Vec::new();
            for t in 1..=max_t {
                let points: Vec<(f64, f64)> = cells
                    .iter()
                    .filter(|c| c.phi == name && c.t == t)
                    .map(|c| (c.n as f64, if p == 2 { c.mse } else { c.l4 }))
                    .collect();
                let (fit, error) = match fit_loglog_slope(&points) {
                    Ok(f) => {
                        slopes.push(f.slope);
                        (Some(f), None)
                    }
                    Err(e) => (None, Some(e.to_string())),
                };
                fits.push(FitRecord {
                    phi: name.clone(),
                    measure,
                    p,
                    t,
                    fit,
                    error,
                });
            }
            averaged.push(AveragedFit {
                phi: name.clone(),
                measure,
                p,
                mean_slope: (!slopes.is_empty()).then(|| slopes.iter().sum::<f64>() / slopes.len() as f64),
                steps_used: slopes.len(),
            });
        }
    }
    (fits, averaged)
}

fn run_replicate(
    plan: &StudyPlan,
    observations: &[u32],
    truth: &[OracleTruth],
    n_index: usize,
    replicate: usize,
) -> Result<ReplicateErrors, SmcError> {
    let n = plan.particle_counts[n_index];
    let mut rng = RngStream::derive(plan.master_seed, &[n_index as u64, replicate as u64]);
    let options = RunOptions::with_test_functions(plan.test_functions.clone());
    let run = run_filter_with_rng(&plan.model, &plan.proposal, observations, n, &plan.resampler, &options, &mut rng)?;
    let diff = |row: &[f64], t: usize| -> Vec<f64> { row.iter().zip(truth).map(|(v, o)| v - o.values[t]).collect() };
    Ok(ReplicateErrors {
        filtered: run.steps.iter().enumerate().map(|(t, s)| diff(&s.estimates, t)).collect(),
        resampled: run.steps.iter().enumerate().map(|(t, s)| diff(&s.resampled_estimates, t)).collect(),
    })
}

/// Run every `(N, replicate)` cell and compare against the grid oracle.
///
/// Cell `(i, r)` draws from the stream derived from `(master_seed, [i, r])`,
/// and the reduction runs in a fixed order, so the report does not depend
/// on `workers`.
pub fn run_convergence_study(
    config: &ExperimentConfig,
    observations: &[u32],
    workers: usize,
) -> Result<ConvergenceReport, LabError> {
    let plan = config.plan()?;
    let phis = &plan.test_functions;
    let oracle = grid_oracle(&plan.model, observations, plan.dx, plan.x_max, phis)
        .map_err(|e| LabError::Oracle(format!("grid at dx={}: {e}", plan.dx)))?;
    let check = grid_oracle(&plan.model, observations, plan.dx / 2.0, plan.x_max, phis)
        .map_err(|e| LabError::Oracle(format!("grid at dx={}: {e}", plan.dx / 2.0)))?;
    let max_check_difference = oracle
        .iter()
        .zip(&check)
        .flat_map(|(a, b)| a.estimates.iter().zip(&b.estimates).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    let truth = truth_table(&oracle, phis);

    let jobs: Vec<(usize, usize)> = (0..plan.particle_counts.len())
        .flat_map(|i| (0..plan.replicates).map(move |r| (i, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LabError::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<ReplicateErrors, SmcError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, r)| run_replicate(&plan, observations, &truth, i, r))
            .collect()
    });

    let mut per_n: Vec<Vec<ReplicateErrors>> = Vec::new();
    let mut abort = None;
    let mut results = results.into_iter();
    'outer: for &n in &plan.particle_counts {
        let mut reps = Vec::with_capacity(plan.replicates);
        for r in 0..plan.replicates {
            match results.next().expect("one result per job") {
                Ok(e) => reps.push(e),
                Err(err) => {
                    let t = match &err {
                        SmcError::AtStep { t, .. } => Some(*t),
                        _ => None,
                    };
                    abort = Some((
                        Abort {
                            n,
                            replicate: r,
                            t,
                            message: err.to_string(),
                        },
                        err,
                    ));
                    break 'outer;
                }
            }
        }
        per_n.push(reps);
    }

    let ns = &plan.particle_counts[..per_n.len()];
    let filtered = tabulate(phis, ns, &per_n, Measure::Filtered);
    let resampled = tabulate(phis, ns, &per_n, Measure::Resampled);
    let (mut fits, mut averaged_fits) = fit_rates(&filtered, phis, &plan.moments, Measure::Filtered);
    let (rf, ra) = fit_rates(&resampled, phis, &plan.moments, Measure::Resampled);
    fits.extend(rf);
    averaged_fits.extend(ra);

    let report = ConvergenceReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        proposal: plan.proposal.label(),
        observations: observations.to_vec(),
        oracle: OracleSummary {
            dx: plan.dx,
            x_max: plan.x_max,
            n_cells: (plan.x_max / plan.dx).round() as usize,
            check_dx: plan.dx / 2.0,
            max_check_difference,
            truth,
        },
        filtered,
        resampled,
        fits,
        averaged_fits,
        partial: abort.as_ref().map(|(a, _)| a.clone()),
    };
    match abort {
        None => Ok(report),
        Some((a, source)) => Err(LabError::StudyAborted {
            n: a.n,
            replicate: a.replicate,
            source,
            report: Box::new(report),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn injected_errors_give_exact_slopes() {
        let ns = [128usize, 512, 2048, 8192];
        let phis = [TestFunction::ExpNeg];
        let errors: Vec<Vec<ReplicateErrors>> = ns
            .iter()
            .map(|&n| {
                let e = (n as f64).powf(-0.5);
                (0..6)
                    .map(|r| {
                        let s = if r % 2 == 0 { e } else { -e };
                        ReplicateErrors {
                            filtered: vec![vec![s]; 3],
                            resampled: vec![vec![s]; 3],
                        }
                    })
                    .collect()
            })
            .collect();
        let cells = tabulate(&phis, &ns, &errors, Measure::Filtered);
        assert_eq!(cells.len(), 12);
        let (fits, avg) = fit_rates(&cells, &phis, &[2, 4], Measure::Filtered);
        for f in &fits {
            let want = if f.p == 2 { -1.0 } else { -2.0 };
            assert!((f.fit.unwrap().slope - want).abs() < 1e-12);
        }
        assert_eq!(avg.len(), 2);
        assert_eq!(avg[0].steps_used, 3);
        for c in &cells {
            assert!(c.l4 >= c.mse * c.mse * (1.0 - 1e-12));
            assert_eq!(c.mse_stderr, 0.0);
        }
    }
}
