use lconf_core::gmm::{clean_posterior, fit_gmm2, gmm_confidence, GmmConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn bimodal(seed: u64, n_low: usize, n_high: usize, gap: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let low = Normal::new(0.3f64, 0.1).unwrap();
    let high = Normal::new(0.3f64 + gap, 0.3).unwrap();
    let mut v: Vec<f64> = (0..n_low).map(|_| low.sample(&mut rng).abs()).collect();
    v.extend((0..n_high).map(|_| high.sample(&mut rng).abs()));
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn log_likelihood_never_decreases(seed in 0u64..1000, n_low in 20usize..300, n_high in 20usize..300, gap in 0.0f64..3.0) {
        let losses = bimodal(seed, n_low, n_high, gap);
        if let Ok(fit) = fit_gmm2(&losses, &GmmConfig::default()) {
            for w in fit.log_likelihood.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12, "{} -> {}", w[0], w[1]);
            }
            prop_assert!(fit.model.means[0] <= fit.model.means[1]);
            prop_assert!(fit.model.variances.iter().all(|v| *v >= 1e-6));
        }
    }
}

#[test]
fn recovers_separated_components() {
    let losses = bimodal(1, 600, 400, 2.0);
    let fit = fit_gmm2(&losses, &GmmConfig::default()).unwrap();
    assert!((fit.model.means[0] - 0.3).abs() < 0.05);
    assert!((fit.model.means[1] - 2.3).abs() < 0.05);
    assert!((fit.model.weights[0] - 0.6).abs() < 0.03);
    let mut sorted = losses.clone();
    sorted.sort_by(f64::total_cmp);
    let post = clean_posterior(&fit.model, &sorted);
    assert!(post.values().windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn identical_losses_fall_back_to_full_trust() {
    let (w, model) = gmm_confidence(&[0.7; 50], &GmmConfig::default()).unwrap();
    assert!(model.is_none());
    assert!(w.values().iter().all(|v| *v == 1.0));
}
