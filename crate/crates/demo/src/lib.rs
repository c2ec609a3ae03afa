//! Browser demo. Build with
//! `wasm-pack build crates/demo --target web --out-dir www/pkg` and serve
//! `crates/demo/www`.

use pfconv_core::cox::{CoxModel, GammaProposal, ObservationSeries};
use pfconv_core::histogram::{total_variation, weighted_histogram};
use pfconv_core::moments::{check_cox_moment_condition, quadrature_refinements, MomentCondition};
use pfconv_core::oracles::grid::{folded_normal_density, GridFilter};
use pfconv_core::{log_unnormalized_weight, run_filter, ResampleScheme, RunOptions, StateSpaceModel};
use serde_json::json;
use wasm_bindgen::prelude::*;

const FIXTURE: &str = include_str!("../../lab/fixtures/cox_obs_12.csv");

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

pub fn fixture() -> Vec<u32> {
    ObservationSeries::read_csv(FIXTURE.as_bytes()).expect("bundled fixture parses").values()
}

/// Verdict plus quadrature values at levels `1..=max_level`, as JSON.
pub fn moment_report(p: u32, alpha: f64, beta: f64, c: f64, eta: f64, x_prev: f64, max_level: u32) -> Result<String, String> {
    let cond = MomentCondition::new(p, alpha, beta, c, eta).map_err(|e| e.to_string())?;
    let v = check_cox_moment_condition(&cond);
    let model = CoxModel::new(c, eta).map_err(|e| e.to_string())?;
    let q = GammaProposal::new(alpha, beta).map_err(|e| e.to_string())?;
    let levels = quadrature_refinements(&model, &q, x_prev, 0, p as f64, 1..=max_level.clamp(1, 60)).map_err(|e| e.to_string())?;
    Ok(json!({
        "status": v.status.name(),
        "s": v.s,
        "tail_rate": v.tail_rate,
        "bound": v.bound,
        "levels": levels,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn moment_verdict(p: u32, alpha: f64, beta: f64, c: f64, eta: f64, x_prev: f64, max_level: u32) -> Result<String, JsError> {
    moment_report(p, alpha, beta, c, eta, x_prev, max_level).map_err(err)
}

/// `[x_0, w_0, x_1, w_1, ...]` for `x` log-spaced on `[1e-8, x_hi]`.
pub fn weight_points(alpha: f64, beta: f64, c: f64, eta: f64, x_prev: f64, y: u32, x_hi: f64, points: usize) -> Result<Vec<f64>, String> {
    let model = CoxModel::new(c, eta).map_err(|e| e.to_string())?;
    let q = GammaProposal::new(alpha, beta).map_err(|e| e.to_string())?;
    let (lo, hi) = (1e-8f64.log10(), x_hi.max(1e-7).log10());
    let points = points.max(2);
    let mut out = Vec::with_capacity(2 * points);
    for k in 0..points {
        let x = 10f64.powf(lo + (hi - lo) * k as f64 / (points - 1) as f64);
        let lw = log_unnormalized_weight(&model, &q, x, x_prev, y).map_err(|e| e.to_string())?;
        out.push(x);
        out.push(lw.exp());
    }
    Ok(out)
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn weight_curve(alpha: f64, beta: f64, c: f64, eta: f64, x_prev: f64, y: u32, x_hi: f64, points: usize) -> Result<Vec<f64>, JsError> {
    weight_points(alpha, beta, c, eta, x_prev, y, x_hi, points).map_err(err)
}

/// Particle histogram against the grid density at `step` on the bundled
/// observation series, as JSON.
pub fn overlay_report(n: usize, alpha: f64, beta: f64, seed: u64, step: usize, bins: usize) -> Result<String, String> {
    let obs = fixture();
    if step == 0 || step > obs.len() {
        return Err(format!("step must be in 1..={}", obs.len()));
    }
    let model = CoxModel::new(0.5, 0.1).map_err(|e| e.to_string())?;
    let q = GammaProposal::new(alpha, beta).map_err(|e| e.to_string())?;
    let opts = RunOptions {
        full_cloud_steps: vec![step],
        ..RunOptions::default()
    };
    let run = run_filter(&model, &q, &obs[..step], n.max(1), &ResampleScheme::Multinomial, &opts, seed).map_err(|e| e.to_string())?;
    let cloud = &run.full_clouds[0];
    let grid = GridFilter::new(folded_normal_density, |x, xp| model.transition_logdensity(x, xp), 15.0, 750)
        .and_then(|g| g.run(&obs[..step], |y, x| model.likelihood_logdensity(y, x), &[]))
        .map_err(|e| e.to_string())?;
    let density = &grid[step - 1].density;
    let bins = bins.clamp(5, 200);
    let hist = weighted_histogram(&cloud.particles, &cloud.weights, bins, 0.0, 6.0);
    let tv = total_variation(&hist, &density.bin_probabilities(bins, 0.0, 6.0));
    let curve: Vec<[f64; 2]> = density
        .midpoints()
        .zip(density.values())
        .filter(|(x, _)| *x <= 6.0)
        .map(|(x, v)| [x, *v])
        .collect();
    Ok(json!({
        "observations": &obs[..step],
        "bins": hist,
        "grid": curve,
        "tv": tv,
        "ess": run.steps[step - 1].ess,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn filter_overlay(n: usize, alpha: f64, beta: f64, seed: u64, step: usize, bins: usize) -> Result<String, JsError> {
    overlay_report(n, alpha, beta, seed, step, bins).map_err(err)
}
