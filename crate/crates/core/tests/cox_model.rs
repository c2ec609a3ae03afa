use pfconv_core::cox::{cox_transition_logdensity, simulate, CoxModel, CoxParams, GammaProposal};
use pfconv_core::{RngStream, StateSpaceModel};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

#[test]
fn one_step_samples_fit_the_folded_density() {
    let eta = 0.1;
    let model = CoxModel::new(0.5, eta).unwrap();
    let n = 100_000;
    let bins = 40;
    let hi = 2.6;
    let width = hi / (bins - 1) as f64;
    let mut rng = RngStream::derive(2024, &[]);
    let mut observed = vec![0f64; bins];
    for _ in 0..n {
        let x = model.sample_transition(1.0, &mut rng);
        assert!(x >= 0.0);
        observed[((x / width) as usize).min(bins - 1)] += 1.0;
    }
    let z = Normal::new(0.0, 1.0).unwrap();
    let sd = eta.sqrt();
    let cdf = |b: f64| z.cdf((b - 1.0) / sd) - z.cdf((-b - 1.0) / sd);
    let mut chi2 = 0.0;
    for (k, obs) in observed.iter().enumerate() {
        let lo = k as f64 * width;
        let p = if k == bins - 1 { 1.0 - cdf(lo) } else { cdf(lo + width) - cdf(lo) };
        let expect = p * n as f64;
        chi2 += (obs - expect).powi(2) / expect;
    }
    let critical = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(1.0 - 1e-3);
    assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
}

#[test]
fn transition_density_integrates_to_one() {
    let dx = 1e-4;
    for x_prev in [0.0, 0.5, 1.0, 3.0] {
        let cells = ((x_prev + 4.0) / dx) as usize;
        let total: f64 = (0..cells)
            .map(|i| cox_transition_logdensity((i as f64 + 0.5) * dx, x_prev, 0.1).unwrap().exp())
            .sum::<f64>()
            * dx;
        assert!((total - 1.0).abs() < 1e-6, "x_prev={x_prev}: {total}");
    }
}

#[test]
fn gamma_proposal_moments_and_density() {
    let q = GammaProposal::new(1.5, 0.5).unwrap();
    assert!((q.logdensity(1.0).exp() - 0.24197).abs() < 1e-5);
    assert_eq!(q.logdensity(0.0), f64::NEG_INFINITY);
    let n = 1_000_000;
    let mut rng = RngStream::derive(77, &[]);
    let mean = (0..n).map(|_| q.sample(&mut rng)).sum::<f64>() / n as f64;
    let sigma = (1.5f64 / 0.25 / n as f64).sqrt();
    assert!((mean - 3.0).abs() < 3.0 * sigma, "{mean}");
}

#[test]
fn increments_away_from_zero_have_variance_eta() {
    let params = CoxParams::new(0.5, 0.1).unwrap();
    let (traj, obs) = simulate(&params, 2000, 13).unwrap();
    assert_eq!(obs.len(), 2000);
    let inc: Vec<f64> = traj
        .states
        .windows(2)
        .filter(|w| w[0] > 1.5)
        .map(|w| w[1] - w[0])
        .collect();
    assert!(inc.len() > 200, "only {} increments away from zero", inc.len());
    let m = inc.iter().sum::<f64>() / inc.len() as f64;
    let var = inc.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (inc.len() - 1) as f64;
    assert!((var - 0.1).abs() < 0.01, "{var}");
}

#[test]
fn weight_grows_without_bound_at_zero() {
    let model = CoxModel::new(0.5, 0.1).unwrap();
    let q = GammaProposal::new(1.5, 0.5).unwrap();
    let w: Vec<f64> = (2..=8)
        .map(|k| pfconv_core::log_unnormalized_weight(&model, &q, 10f64.powi(-k), 1.0, 0).unwrap())
        .collect();
    assert!(w.windows(2).all(|p| p[1] > p[0]), "{w:?}");
}
