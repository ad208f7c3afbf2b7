#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sib_core::{Family, ModelParams, OutcomeSpec, ViewMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn draw_data(family: Family, n: usize, p: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| draw_value(family, rng))
}

pub fn draw_value(family: Family, rng: &mut ChaCha8Rng) -> f64 {
    match family {
        Family::Gaussian => rng.random_range(-2.0..2.0),
        Family::Bernoulli => f64::from(u8::from(rng.random_bool(0.5))),
        _ => f64::from(rng.random_range(0..5u8)),
    }
}

/// Random interior parameters of moderate size.
pub fn draw_params(n: usize, ps: &[usize], k: usize, n_cov: usize, rng: &mut ChaCha8Rng) -> ModelParams {
    let mut u: Array2<f64> = Array2::from_shape_fn((n, k), |_| rng.random_range(-1.0..1.0));
    for mut col in u.columns_mut() {
        let norm: f64 = col.dot(&col).sqrt();
        col /= norm;
    }
    let mut w = Array2::from_shape_fn((n, k), |_| rng.random_range(0.1..1.0));
    for mut row in w.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    ModelParams {
        u,
        v: ps.iter().map(|&p| Array2::from_shape_fn((p, k), |_| rng.random_range(-1.0..1.0))).collect(),
        w,
        mu: ps.iter().map(|&p| Array1::from_shape_fn(p, |_| rng.random_range(-0.5..0.5))).collect(),
        beta: Array1::from_shape_fn(k + n_cov, |_| rng.random_range(-1.0..1.0)),
    }
}

pub struct Instance {
    pub views: Vec<ViewMatrix>,
    pub outcome: OutcomeSpec,
    pub params: ModelParams,
}

pub fn draw_instance(view_family: Family, outcome_family: Family, seed: u64) -> Instance {
    let mut rng = rng(seed);
    let n = rng.random_range(2..=5);
    let k = rng.random_range(1..=3);
    let n_views = rng.random_range(1..=2);
    let ps: Vec<usize> = (0..n_views).map(|_| rng.random_range(1..=4)).collect();
    let n_cov = rng.random_range(0..=1);
    let views = ps
        .iter()
        .enumerate()
        .map(|(d, &p)| ViewMatrix::new(format!("v{d}"), draw_data(view_family, n, p, &mut rng), view_family).unwrap())
        .collect();
    let y = Array1::from_shape_fn(n, |_| draw_value(outcome_family, &mut rng));
    let cov = (n_cov > 0).then(|| Array2::from_shape_fn((n, n_cov), |_| rng.random_range(-1.0..1.0)));
    let outcome = OutcomeSpec::new(y, outcome_family, cov).unwrap();
    let params = draw_params(n, &ps, k, n_cov, &mut rng);
    Instance { views, outcome, params }
}

/// Two equal-sized groups of samples with distinct loading patterns on the
/// first few variables of each view.
pub fn planted_gaussian(n: usize, p: usize, noise: f64, seed: u64) -> (Vec<ViewMatrix>, OutcomeSpec, Vec<usize>) {
    let mut rng = rng(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let views = (0..2)
        .map(|d| {
            let x = Array2::from_shape_fn((n, p), |(i, j)| {
                let signal = match (labels[i], j) {
                    (0, j) if j < 3 => 4.0,
                    (1, j) if (3..6).contains(&j) => -4.0,
                    _ => 0.0,
                };
                signal + noise * rng.random_range(-1.0..1.0)
            });
            ViewMatrix::new(format!("v{d}"), x, Family::Gaussian).unwrap()
        })
        .collect();
    let y = Array1::from_shape_fn(n, |i| if labels[i] == 0 { 1.0 } else { -1.0 } + noise * rng.random_range(-0.5..0.5));
    (views, OutcomeSpec::new(y, Family::Gaussian, None).unwrap(), labels)
}

/// Whether two labelings induce the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    use std::collections::HashMap;
    let mut fwd = HashMap::new();
    let mut bwd = HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| *fwd.entry(x).or_insert(y) == y && *bwd.entry(y).or_insert(x) == x)
}
