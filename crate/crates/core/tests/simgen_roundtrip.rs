use sib_core::metrics::{memberships, relevance_recovery_f};
use sib_core::simgen::{generate, SimConfig};
use sib_core::{fit, Family, FitConfig};

#[test]
fn reference_design_is_recoverable_at_k3() {
    let rho = 0.99;
    let lambda = 4.0 * rho / (150.0 * 100.0);
    for seed in 0..2 {
        let data = generate(&SimConfig { seed, ..SimConfig::new(150, 100, Family::Gaussian) }).unwrap();
        let mut config = FitConfig::shared(3, rho, &[lambda, lambda]).unwrap();
        config.non_overlapping = true;
        let result = fit(&data.train.views, &data.train.outcome, &config).unwrap();
        let truth = memberships(&data.train.truth.assignments, &data.train.truth.variable_members, &[100, 100]).unwrap();
        let est = memberships(&result.assignments, &result.variable_members, &[100, 100]).unwrap();
        let acc = relevance_recovery_f(&est, &truth).unwrap();
        assert!(acc.f_score >= 0.9, "seed {seed}: {acc:?}");
    }
}

#[test]
fn test_split_shares_loadings_but_not_samples() {
    let data = generate(&SimConfig { seed: 3, n_test: Some(40), ..SimConfig::new(60, 40, Family::Bernoulli) }).unwrap();
    assert_eq!(data.test.views[0].n_samples(), 40);
    assert_eq!(data.train.truth.variable_members, data.test.truth.variable_members);
    assert!(data.test.outcome.y().iter().all(|&y| y == 0.0 || y == 1.0));
    assert_ne!(data.train.views[0].data().row(0), data.test.views[0].data().row(0));
}
