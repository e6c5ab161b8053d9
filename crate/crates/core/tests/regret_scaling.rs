//! Dynamic regret of the ensemble against the drifting comparator, rescaled
//! by 8(1 + gamma) sqrt(T), should settle to a constant as the horizon grows.

use sadl_core::drift::run_profile;
use sadl_core::loss::composite_loss;
use sadl_core::{DriftScenario, LossConfig, SadlConfig, SadlEnsemble};

fn fitted_constant(t_len: u64, eta0: f64, seeds: u64) -> f64 {
    let loss = LossConfig::default();
    let (mut regret, mut gamma) = (0.0, 0.0);
    for seed in 0..seeds {
        let mut sc = DriftScenario::paper_shaped(t_len);
        sc.seed = seed;
        let mut ens = SadlEnsemble::new(SadlConfig::new(sc.dim, eta0, loss, seed)).unwrap();
        for step in run_profile(&sc).unwrap() {
            let s = step.unwrap();
            let rep = ens.sadl_step(&s.constraint).unwrap();
            regret += composite_loss(&rep.output, &s.constraint, &loss).unwrap()
                - composite_loss(&s.comparator, &s.constraint, &loss).unwrap();
            gamma += s.variation;
        }
    }
    let (regret, gamma) = (regret / seeds as f64, gamma / seeds as f64);
    regret / (8.0 * (1.0 + gamma) * (t_len as f64).sqrt())
}

#[test]
fn fitted_constant_is_stable_across_horizons() {
    let fits: Vec<f64> = [512, 1024, 2048].iter().map(|&t| fitted_constant(t, 0.003, 5)).collect();
    let lo = fits.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = fits.iter().cloned().fold(0.0, f64::max);
    assert!(lo > 0.0, "fits {fits:?}");
    assert!(hi / lo <= 2.0, "fits {fits:?}");
}
