mod common;

use ndarray::Array2;
use rand::Rng;
use sib_core::metrics::{fp_fn, jaccard, relevance_recovery_f, MembershipMatrix};

type Cells = Vec<Vec<bool>>;

fn naive_jaccard(a: &Cells, b: &Cells) -> f64 {
    let mut inter = 0.0;
    let mut union = 0.0;
    for i in 0..a.len() {
        for j in 0..a[i].len() {
            if a[i][j] && b[i][j] {
                inter += 1.0;
            }
            if a[i][j] || b[i][j] {
                union += 1.0;
            }
        }
    }
    if union == 0.0 { 0.0 } else { inter / union }
}

fn naive_accuracy(est: &[Vec<Cells>], tru: &[Vec<Cells>]) -> (f64, f64, f64) {
    let d = tru.len() as f64;
    let mut rel = 0.0;
    let mut rec = 0.0;
    for v in 0..tru.len() {
        let mut r = 0.0;
        for e in &est[v] {
            let mut best = 0.0_f64;
            for t in &tru[v] {
                best = best.max(naive_jaccard(e, t));
            }
            r += best;
        }
        rel += r / est[v].len() as f64;
        let mut c = 0.0;
        for t in &tru[v] {
            let mut best = 0.0_f64;
            for e in &est[v] {
                best = best.max(naive_jaccard(e, t));
            }
            c += best;
        }
        rec += c / tru[v].len() as f64;
    }
    rel /= d;
    rec /= d;
    let f = if rel + rec > 0.0 { 2.0 * rel * rec / (rel + rec) } else { 0.0 };
    (rel, rec, f)
}

fn naive_rates(est: &[Vec<Cells>], tru: &[Vec<Cells>]) -> (f64, f64) {
    let mut fp_sum = 0.0;
    let mut fn_sum = 0.0;
    for v in 0..tru.len() {
        let mut fp_v = 0.0;
        let mut fn_v = 0.0;
        for t in &tru[v] {
            let cells = (t.len() * t[0].len()) as f64;
            let mut fp_best = f64::MAX;
            let mut fn_best = f64::MAX;
            for e in &est[v] {
                let mut fp = 0.0;
                let mut fneg = 0.0;
                for i in 0..t.len() {
                    for j in 0..t[i].len() {
                        if e[i][j] && !t[i][j] {
                            fp += 1.0;
                        }
                        if !e[i][j] && t[i][j] {
                            fneg += 1.0;
                        }
                    }
                }
                fp_best = fp_best.min(fp / cells);
                fn_best = fn_best.min(fneg / cells);
            }
            fp_v += fp_best;
            fn_v += fn_best;
        }
        fp_sum += fp_v / tru[v].len() as f64;
        fn_sum += fn_v / tru[v].len() as f64;
    }
    (fp_sum / tru.len() as f64, fn_sum / tru.len() as f64)
}

fn to_matrix(cells: &Cells) -> MembershipMatrix {
    let (n, p) = (cells.len(), cells[0].len());
    MembershipMatrix::new(Array2::from_shape_fn((n, p), |(i, j)| cells[i][j]))
}

fn random_cells(n: usize, p: usize, density: f64, rng: &mut impl Rng) -> Cells {
    (0..n).map(|_| (0..p).map(|_| rng.random_bool(density)).collect()).collect()
}

#[test]
fn metrics_match_naive_loops() {
    let mut rng = common::rng(21);
    for case in 0..100 {
        let n = rng.random_range(1..=12);
        let views = rng.random_range(1..=3);
        let ps: Vec<usize> = (0..views).map(|_| rng.random_range(1..=10)).collect();
        let k_est = rng.random_range(1..=4);
        let k_true = rng.random_range(1..=4);
        let density = rng.random_range(0.05..0.6);
        let est: Vec<Vec<Cells>> =
            ps.iter().map(|&p| (0..k_est).map(|_| random_cells(n, p, density, &mut rng)).collect()).collect();
        let tru: Vec<Vec<Cells>> =
            ps.iter().map(|&p| (0..k_true).map(|_| random_cells(n, p, density, &mut rng)).collect()).collect();
        let est_m: Vec<Vec<MembershipMatrix>> = est.iter().map(|v| v.iter().map(to_matrix).collect()).collect();
        let tru_m: Vec<Vec<MembershipMatrix>> = tru.iter().map(|v| v.iter().map(to_matrix).collect()).collect();

        let j = jaccard(&est_m[0][0], &tru_m[0][0]).unwrap();
        assert!((j - naive_jaccard(&est[0][0], &tru[0][0])).abs() <= 1e-12, "case {case}");

        let acc = relevance_recovery_f(&est_m, &tru_m).unwrap();
        let (rel, rec, f) = naive_accuracy(&est, &tru);
        assert!((acc.relevance - rel).abs() <= 1e-12, "case {case}");
        assert!((acc.recovery - rec).abs() <= 1e-12, "case {case}");
        assert!((acc.f_score - f).abs() <= 1e-12, "case {case}");

        let rates = fp_fn(&est_m, &tru_m).unwrap();
        let (fp, fneg) = naive_rates(&est, &tru);
        assert!((rates.false_positive - fp).abs() <= 1e-12, "case {case}");
        assert!((rates.false_negative - fneg).abs() <= 1e-12, "case {case}");
    }
}

#[test]
fn perfect_estimate_scores_one_and_zero() {
    let mut rng = common::rng(22);
    let tru: Vec<Vec<MembershipMatrix>> =
        (0..2).map(|_| (0..3).map(|_| to_matrix(&random_cells(8, 6, 0.4, &mut rng))).collect()).collect();
    let acc = relevance_recovery_f(&tru, &tru).unwrap();
    assert!((acc.f_score - 1.0).abs() <= 1e-12);
    let rates = fp_fn(&tru, &tru).unwrap();
    assert_eq!(rates.false_positive, 0.0);
    assert_eq!(rates.false_negative, 0.0);
}
