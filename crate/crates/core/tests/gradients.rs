mod common;

use common::draw_instance;
use proptest::prelude::*;
use sib_core::loss::{grad, loss_smooth, Block, Gradient};
use sib_core::{Family, LossWeights, ModelParams};

const FAMILIES: [Family; 3] = [Family::Gaussian, Family::Bernoulli, Family::Poisson];

fn flat(g: &Gradient) -> Vec<f64> {
    match g {
        Gradient::U(a) | Gradient::W(a) => a.iter().copied().collect(),
        Gradient::V(vs) => vs.iter().flat_map(|a| a.iter().copied()).collect(),
        Gradient::Mu(ms) => ms.iter().flat_map(|a| a.iter().copied()).collect(),
        Gradient::Beta(b) => b.to_vec(),
    }
}

fn coordinate(params: &mut ModelParams, block: Block, idx: usize) -> &mut f64 {
    match block {
        Block::U => params.u.iter_mut().nth(idx).unwrap(),
        Block::W => params.w.iter_mut().nth(idx).unwrap(),
        Block::V => params.v.iter_mut().flat_map(|a| a.iter_mut()).nth(idx).unwrap(),
        Block::Mu => params.mu.iter_mut().flat_map(|a| a.iter_mut()).nth(idx).unwrap(),
        Block::Beta => params.beta.iter_mut().nth(idx).unwrap(),
    }
}

/// Worst relative error between analytic and central-difference gradients
/// over all five blocks.
fn worst_error(view_family: Family, outcome_family: Family, seed: u64, rho: f64) -> f64 {
    let inst = draw_instance(view_family, outcome_family, seed);
    let k = inst.params.k();
    let weights = LossWeights::shared(rho, &vec![0.3; inst.views.len()], k).unwrap();
    let f = |p: &ModelParams| loss_smooth(&inst.views, &inst.outcome, p, &weights).unwrap();
    let mut worst = 0.0_f64;
    for block in [Block::U, Block::W, Block::V, Block::Mu, Block::Beta] {
        let analytic = flat(&grad(&inst.views, &inst.outcome, &inst.params, &weights, block).unwrap());
        let mut numeric = vec![0.0; analytic.len()];
        for (idx, slot) in numeric.iter_mut().enumerate() {
            let h = 1e-5;
            let mut plus = inst.params.clone();
            *coordinate(&mut plus, block, idx) += h;
            let mut minus = inst.params.clone();
            *coordinate(&mut minus, block, idx) -= h;
            *slot = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-6);
        worst = worst.max(diff / scale);
    }
    worst
}

#[test]
fn all_family_combinations_match_finite_differences() {
    for vf in FAMILIES {
        for of in FAMILIES {
            for seed in 0..20 {
                let err = worst_error(vf, of, seed, 0.5);
                assert!(err <= 1e-5, "{vf} views / {of} outcome, seed {seed}: relative error {err}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn gradients_hold_for_any_weighting(seed in 0u64..10_000, rho in 0.0f64..=1.0, vf in 0usize..3, of in 0usize..3) {
        let err = worst_error(FAMILIES[vf], FAMILIES[of], seed, rho);
        prop_assert!(err <= 1e-5, "relative error {}", err);
    }
}
