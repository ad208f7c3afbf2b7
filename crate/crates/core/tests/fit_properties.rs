mod common;

use common::{planted_gaussian, same_partition};
use ndarray::{Array1, Array2};
use rand::Rng;
use sib_core::model::hard_assign;
use sib_core::simgen::{generate, SimConfig};
use sib_core::{fit, fit_from, initialize, refit_beta, Family, FitConfig, OutcomeSpec, StepRule, ViewMatrix};

/// Penalty on the scale of the per-entry view weight `rho / (n p)`.
fn scaled_lambda(delta: f64, rho: f64, n: usize, p: usize) -> f64 {
    delta * rho / (n * p) as f64
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
fn jacobi_eigen(mut a: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut vecs = Array2::<f64>::eye(n);
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[[i, j]].powi(2)).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (vecs[[k, p]], vecs[[k, q]]);
                    vecs[[k, p]] = c * vkp - s * vkq;
                    vecs[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[[i, i]]).collect(), vecs)
}

#[test]
fn initialization_matches_reference_svd() {
    let mut rng = common::rng(31);
    let x1 = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
    let x2 = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
    let psi = ndarray::concatenate(ndarray::Axis(1), &[x1.view(), x2.view()]).unwrap();
    let views = vec![
        ViewMatrix::new("a", x1, Family::Gaussian).unwrap(),
        ViewMatrix::new("b", x2, Family::Gaussian).unwrap(),
    ];
    let outcome = OutcomeSpec::new(Array1::zeros(6), Family::Gaussian, None).unwrap();
    let k = 3;
    let config = FitConfig::shared(k, 0.5, &[0.0, 0.0]).unwrap();
    let init = initialize(&views, &outcome, &config).unwrap();

    let (vals, vecs) = jacobi_eigen(psi.dot(&psi.t()));
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    for (c, &idx) in order.iter().take(k).enumerate() {
        let u_ref = vecs.column(idx).to_owned();
        let sign = init.u.column(c).dot(&u_ref).signum();
        let u_err = (&init.u.column(c) - &(&u_ref * sign)).mapv(f64::abs).fold(0.0_f64, |m, &x| m.max(x));
        assert!(u_err < 1e-8, "U column {c}: {u_err}");
        let v_ref = psi.t().dot(&u_ref) * sign;
        let v_fit = ndarray::concatenate(ndarray::Axis(0), &[init.v[0].column(c), init.v[1].column(c)]).unwrap();
        let v_err = (&v_fit - &v_ref).mapv(f64::abs).fold(0.0_f64, |m, &x| m.max(x));
        assert!(v_err < 1e-8, "V column {c}: {v_err}");
    }
    assert!(init.w.iter().all(|&x| x == 1.0));
    assert!(init.mu.iter().all(|m| m.iter().all(|&x| x == 0.0)));
    assert!(init.beta.iter().all(|&x| x == 0.0));
}

#[test]
fn noise_free_instances_are_recovered_exactly() {
    for seed in 0..10 {
        let mut sim = SimConfig::new(150, 100, Family::Gaussian);
        sim.sigma2_x = 0.0;
        sim.sigma2_y = 0.0;
        sim.seed = seed;
        let data = generate(&sim).unwrap();
        let mut config = FitConfig::shared(3, 0.99, &[0.0, 0.0]).unwrap();
        config.alpha = 1e-2;
        let result = fit(&data.train.views, &data.train.outcome, &config).unwrap();
        assert!(
            same_partition(&result.assignments, &data.train.truth.assignments),
            "seed {seed}: sizes {:?}",
            result.cluster_sizes()
        );
    }
}

#[test]
fn post_fit_invariants_hold() {
    let data = generate(&SimConfig { seed: 1, ..SimConfig::new(60, 40, Family::Gaussian) }).unwrap();
    let lambda = scaled_lambda(3.0, 0.99, 60, 40);
    let config = FitConfig::shared(3, 0.99, &[lambda, lambda]).unwrap();
    let result = fit(&data.train.views, &data.train.outcome, &config).unwrap();
    for col in result.params.u.columns() {
        assert!((col.dot(&col).sqrt() - 1.0).abs() < 1e-8);
    }
    for row in result.params.w.rows() {
        assert!(row.iter().all(|&x| x >= 0.0));
        assert!((row.sum() - 1.0).abs() < 1e-8);
    }
    let recorded = match result.stop_reason {
        sib_core::StopReason::EmptyComponent => result.iterations,
        _ => result.iterations + 1,
    };
    assert_eq!(result.loss_trace.len(), recorded);
}

#[test]
fn small_steps_give_a_non_increasing_trace() {
    for seed in 0..4 {
        let (views, outcome, _) = planted_gaussian(30, 8, 1.0, seed);
        for rule in [StepRule::BlockLipschitz, StepRule::Fixed] {
            let mut config = FitConfig::shared(2, 0.5, &[1e-3, 1e-3]).unwrap();
            config.alpha = 1e-2;
            config.step_rule = rule;
            config.max_iter = 300;
            let result = fit(&views, &outcome, &config).unwrap();
            for (it, pair) in result.loss_trace.windows(2).enumerate().skip(1) {
                assert!(pair[1] <= pair[0] + 1e-10, "seed {seed}, {rule:?}, iteration {}: {pair:?}", it + 1);
            }
        }
    }
}

#[test]
fn repeated_fits_are_bit_identical() {
    let (views, outcome, _) = planted_gaussian(40, 10, 1.0, 2);
    let lambda = scaled_lambda(3.0, 0.5, 40, 10);
    let config = FitConfig::shared(2, 0.5, &[lambda, 2.0 * lambda]).unwrap();
    let a = fit(&views, &outcome, &config).unwrap();
    let b = fit(&views, &outcome, &config).unwrap();
    assert_eq!(a, b);
}

#[test]
fn permuted_initialization_permutes_labels_only() {
    let sim = SimConfig { seed: 4, ..SimConfig::new(60, 40, Family::Gaussian) };
    let data = generate(&sim).unwrap();
    let (views, outcome) = (&data.train.views, &data.train.outcome);
    let lambda = scaled_lambda(3.0, 0.99, 60, 40);
    let config = FitConfig::shared(3, 0.99, &[lambda, lambda]).unwrap();
    let init = initialize(views, outcome, &config).unwrap();
    let perm = [2usize, 0, 1];
    let mut permuted = init.clone();
    for (new, &old) in perm.iter().enumerate() {
        permuted.u.column_mut(new).assign(&init.u.column(old));
        permuted.w.column_mut(new).assign(&init.w.column(old));
        for (pv, iv) in permuted.v.iter_mut().zip(&init.v) {
            pv.column_mut(new).assign(&iv.column(old));
        }
    }
    let a = fit_from(views, outcome, &config, init).unwrap();
    let b = fit_from(views, outcome, &config, permuted).unwrap();
    assert!(same_partition(&a.assignments, &b.assignments));
    for (&label_b, &label_a) in b.assignments.iter().zip(&a.assignments) {
        assert_eq!(perm[label_b], label_a);
    }
    let (la, lb) = (a.loss_trace.last().unwrap(), b.loss_trace.last().unwrap());
    assert!((la - lb).abs() <= 1e-8 * la.abs().max(1.0), "{la} vs {lb}");
    assert_eq!(a.iterations, b.iterations);
    assert_ne!(a.stop_reason, sib_core::StopReason::EmptyComponent);
}

#[test]
fn refit_on_true_memberships_recovers_group_means() {
    let sim = SimConfig { seed: 9, ..SimConfig::new(300, 50, Family::Gaussian) };
    let data = generate(&sim).unwrap();
    let truth = &data.train.truth.assignments;
    let w = Array2::from_shape_fn((truth.len(), 3), |(i, k)| f64::from(u8::from(truth[i] == k)));
    let refit = refit_beta(&data.train.outcome, &w).unwrap();
    let y = data.train.outcome.y();
    for k in 0..3 {
        let members: Vec<f64> = truth.iter().zip(y).filter(|(&a, _)| a == k).map(|(_, &v)| v).collect();
        let mean = members.iter().sum::<f64>() / members.len() as f64;
        assert!((refit.beta[k] - mean).abs() < 1e-8);
        let se = (sim.sigma2_y / members.len() as f64).sqrt();
        assert!((refit.beta[k] - sim.beta_true[k]).abs() < 4.0 * se, "beta {k}: {}", refit.beta[k]);
    }
}

#[test]
fn hard_assignment_follows_largest_weight() {
    let w = ndarray::array![[0.2, 0.5, 0.3], [0.6, 0.2, 0.2], [0.4, 0.1, 0.5]];
    assert_eq!(hard_assign(&w), vec![1, 0, 2]);
    let data = generate(&SimConfig { seed: 5, ..SimConfig::new(60, 40, Family::Gaussian) }).unwrap();
    let lambda = scaled_lambda(3.0, 0.99, 60, 40);
    let config = FitConfig::shared(3, 0.99, &[lambda, lambda]).unwrap();
    let result = fit(&data.train.views, &data.train.outcome, &config).unwrap();
    assert_eq!(result.assignments, hard_assign(&result.params.w));
}
