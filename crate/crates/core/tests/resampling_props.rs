use pfconv_core::{ResampleScheme, RngStream};
use proptest::prelude::*;

fn normalise(raw: Vec<f64>) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / s).collect()
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 1e-6f64..1.0], 1..60)
        .prop_filter("positive mass", |v| v.iter().sum::<f64>() > 0.0)
        .prop_map(normalise)
}

proptest! {
    #[test]
    fn counts_total_n(w in weights(), n in 1usize..500, seed in any::<u64>()) {
        for scheme in ResampleScheme::ALL {
            let c = scheme.resample(&w, n, &mut RngStream::derive(seed, &[])).unwrap();
            prop_assert_eq!(c.len(), w.len());
            prop_assert_eq!(c.total(), n);
            for (ci, wi) in c.counts().iter().zip(&w) {
                if *wi == 0.0 {
                    prop_assert_eq!(*ci, 0);
                }
            }
        }
    }

    #[test]
    fn systematic_counts_bracket_expectation(w in weights(), n in 1usize..500, seed in any::<u64>()) {
        let c = ResampleScheme::Systematic.resample(&w, n, &mut RngStream::derive(seed, &[])).unwrap();
        for (ci, wi) in c.counts().iter().zip(&w) {
            let e = n as f64 * wi;
            prop_assert!((*ci as f64) >= e.floor() - 1e-9 * n as f64 && (*ci as f64) <= e.ceil() + 1e-9 * n as f64);
        }
    }

    #[test]
    fn stratified_counts_within_one_of_expectation(w in weights(), n in 1usize..500, seed in any::<u64>()) {
        let c = ResampleScheme::Stratified.resample(&w, n, &mut RngStream::derive(seed, &[])).unwrap();
        for (ci, wi) in c.counts().iter().zip(&w) {
            prop_assert!((*ci as f64 - n as f64 * wi).abs() < 2.0 + 1e-9);
        }
    }
}
