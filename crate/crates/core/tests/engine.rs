use pfconv_core::cox::{CoxModel, GammaProposal};
use pfconv_core::oracles::kalman::{kalman_filter, simulate_linear_gaussian, LinearGaussianModel};
use pfconv_core::{
    filter_step, init_filter, propose_and_weight, run_filter, Bootstrap, ResampleScheme, RngStream, RunOptions,
    StateSpaceModel, TestFunction,
};

#[test]
fn bootstrap_tracks_kalman_over_twenty_steps() {
    let lg = LinearGaussianModel::new(0.9, 0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
    let (_, ys) = simulate_linear_gaussian(&lg, 20, 8);
    let exact = kalman_filter(&lg, &ys);
    let n = 2000;
    let mut rng = RngStream::derive(31, &[]);
    let mut state = init_filter(&lg, n, &mut rng).unwrap();
    for (t, (&y, k)) in ys.iter().zip(&exact).enumerate() {
        let set = propose_and_weight(&state, &lg, &Bootstrap, y, &mut rng).unwrap().normalize().unwrap();
        let (mean, _) = set.mean_and_variance().unwrap();
        let sigma = (k.variance / set.ess().unwrap()).sqrt();
        assert!((mean - k.mean).abs() < 3.0 * sigma, "t={} {mean} vs {}", t + 1, k.mean);
        let counts = ResampleScheme::Multinomial.resample(&set.weights(), n, &mut rng).unwrap();
        state = pfconv_core::resampling::apply_counts(set, &counts).unwrap();
    }
}

/// Averaging `(π̂ᴺ, φ)` over fresh proposals with the parents held fixed
/// recovers `(πᴺ_{t-1}, f φ g)`.
#[test]
fn unnormalized_measure_is_conditionally_unbiased() {
    let model = CoxModel::new(0.5, 0.1).unwrap();
    let q = GammaProposal::new(1.5, 0.5).unwrap();
    let parents = init_filter(&model, 20, &mut RngStream::derive(99, &[0])).unwrap();
    let y = 1u32;
    let phi = TestFunction::ExpNeg;

    let reps = 4000;
    let mut rng = RngStream::derive(99, &[1]);
    let draws: Vec<f64> = (0..reps)
        .map(|_| {
            let set = propose_and_weight(&parents, &model, &q, y, &mut rng).unwrap();
            set.particles()
                .iter()
                .zip(set.log_weights())
                .map(|(&x, &lw)| lw.exp() * phi.eval(x))
                .sum::<f64>()
                / 20.0
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / reps as f64;
    let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();

    let dx = 1e-4;
    let exact = parents
        .particles()
        .iter()
        .map(|&xp| {
            (0..150_000)
                .map(|i| {
                    let x = (i as f64 + 0.5) * dx;
                    (model.transition_logdensity(x, xp) + model.likelihood_logdensity(y, x)).exp() * phi.eval(x)
                })
                .sum::<f64>()
                * dx
        })
        .sum::<f64>()
        / 20.0;
    assert!((mean - exact).abs() < 3.0 * sd / (reps as f64).sqrt(), "{mean} vs {exact}");
}

#[test]
fn step_and_run_agree_on_stream_use() {
    let model = CoxModel::new(0.5, 0.1).unwrap();
    let q = GammaProposal::new(1.5, 0.5).unwrap();
    let obs = [2u32, 0, 1];
    let fns = [TestFunction::ExpNeg];
    let run = run_filter(&model, &q, &obs, 64, &ResampleScheme::Stratified, &RunOptions::default(), 4).unwrap();

    let mut rng = RngStream::derive(4, &[]);
    let mut state = init_filter(&model, 64, &mut rng).unwrap();
    for (i, &y) in obs.iter().enumerate() {
        let (next, rec) = filter_step(&state, &model, &q, y, i + 1, &ResampleScheme::Stratified, &fns, &mut rng).unwrap();
        assert_eq!(&rec, &run.steps[i]);
        state = next;
    }
}
