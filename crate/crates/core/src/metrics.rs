//! Bicluster accuracy (Jaccard, relevance, recovery, F-score, FP/FN) and
//! outcome error.

use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SibError};
use crate::expfam::Family;

/// `n x p` indicator of the cells covered by one bicluster in one view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipMatrix {
    entries: Array2<bool>,
}

impl MembershipMatrix {
    pub fn new(entries: Array2<bool>) -> Self {
        Self { entries }
    }

    /// Outer product of a sample set and a variable set.
    pub fn from_sets(n: usize, p: usize, samples: &[usize], variables: &[usize]) -> Result<Self> {
        if let Some(&i) = samples.iter().find(|&&i| i >= n) {
            return Err(SibError::Shape(format!("sample index {i} out of range for {n} samples")));
        }
        if let Some(&j) = variables.iter().find(|&&j| j >= p) {
            return Err(SibError::Shape(format!("variable index {j} out of range for {p} variables")));
        }
        let mut entries = Array2::from_elem((n, p), false);
        for &i in samples {
            for &j in variables {
                entries[[i, j]] = true;
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &Array2<bool> {
        &self.entries
    }

    pub fn dim(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn count(&self) -> usize {
        self.entries.iter().filter(|&&x| x).count()
    }
}

/// `[view][bicluster]` membership matrices built from hard sample labels and
/// per-view variable sets.
pub fn memberships(
    assignments: &[usize],
    variable_members: &[Vec<Vec<usize>>],
    n_vars: &[usize],
) -> Result<Vec<Vec<MembershipMatrix>>> {
    if variable_members.len() != n_vars.len() {
        return Err(SibError::Shape(format!(
            "{} variable membership lists for {} views",
            variable_members.len(),
            n_vars.len()
        )));
    }
    let n = assignments.len();
    variable_members
        .iter()
        .zip(n_vars)
        .map(|(members, &p)| {
            members
                .iter()
                .enumerate()
                .map(|(k, vars)| {
                    let samples: Vec<usize> = (0..n).filter(|&i| assignments[i] == k).collect();
                    MembershipMatrix::from_sets(n, p, &samples, vars)
                })
                .collect()
        })
        .collect()
}

fn check_same_shape(a: &MembershipMatrix, b: &MembershipMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(SibError::Shape(format!("membership shapes {:?} and {:?} differ", a.dim(), b.dim())));
    }
    Ok(())
}

/// `|A and B| / |A or B|`; zero when both are empty.
pub fn jaccard(a: &MembershipMatrix, b: &MembershipMatrix) -> Result<f64> {
    check_same_shape(a, b)?;
    let mut inter = 0usize;
    let mut union = 0usize;
    Zip::from(&a.entries).and(&b.entries).for_each(|&x, &y| {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    });
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub relevance: f64,
    pub recovery: f64,
    pub f_score: f64,
}

fn check_views(estimated: &[Vec<MembershipMatrix>], truth: &[Vec<MembershipMatrix>]) -> Result<()> {
    if estimated.len() != truth.len() {
        return Err(SibError::Shape(format!("{} estimated views, {} true views", estimated.len(), truth.len())));
    }
    if truth.is_empty() || truth.iter().any(Vec::is_empty) {
        return Err(SibError::InvalidInput("every view needs at least one true bicluster".into()));
    }
    Ok(())
}

/// `[k][k*]` Jaccard table for one view.
fn jaccard_table(est: &[MembershipMatrix], truth: &[MembershipMatrix]) -> Result<Vec<Vec<f64>>> {
    est.iter().map(|e| truth.iter().map(|t| jaccard(e, t)).collect()).collect()
}

/// Relevance averages, over estimated biclusters, the best Jaccard against
/// any true bicluster; recovery swaps the roles. Both are averaged over views.
/// An empty estimated list scores zero.
pub fn relevance_recovery_f(estimated: &[Vec<MembershipMatrix>], truth: &[Vec<MembershipMatrix>]) -> Result<Accuracy> {
    check_views(estimated, truth)?;
    if estimated.iter().any(Vec::is_empty) {
        return Ok(Accuracy { relevance: 0.0, recovery: 0.0, f_score: 0.0 });
    }
    let d = truth.len() as f64;
    let mut relevance = 0.0;
    let mut recovery = 0.0;
    for (est, tru) in estimated.iter().zip(truth) {
        let table = jaccard_table(est, tru)?;
        relevance += table.iter().map(|row| row.iter().copied().fold(0.0, f64::max)).sum::<f64>() / est.len() as f64;
        recovery += (0..tru.len())
            .map(|t| table.iter().map(|row| row[t]).fold(0.0, f64::max))
            .sum::<f64>()
            / tru.len() as f64;
    }
    relevance /= d;
    recovery /= d;
    let f_score = if relevance + recovery > 0.0 {
        2.0 * relevance * recovery / (relevance + recovery)
    } else {
        0.0
    };
    Ok(Accuracy { relevance, recovery, f_score })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub false_positive: f64,
    pub false_negative: f64,
}

/// For each view, a true-by-estimated table of cell fractions that are
/// selected-but-false (FP) and true-but-missed (FN); each true bicluster keeps
/// its smallest entry in each table, and those minima are averaged over true
/// biclusters and views.
pub fn fp_fn(estimated: &[Vec<MembershipMatrix>], truth: &[Vec<MembershipMatrix>]) -> Result<ErrorRates> {
    check_views(estimated, truth)?;
    if estimated.iter().any(Vec::is_empty) {
        return Err(SibError::InvalidInput("every view needs at least one estimated bicluster".into()));
    }
    let mut fp_total = 0.0;
    let mut fn_total = 0.0;
    for (est, tru) in estimated.iter().zip(truth) {
        let mut fp_view = 0.0;
        let mut fn_view = 0.0;
        for t in tru {
            let mut fp_min = f64::INFINITY;
            let mut fn_min = f64::INFINITY;
            for e in est {
                check_same_shape(e, t)?;
                let mut fp = 0usize;
                let mut fneg = 0usize;
                Zip::from(&e.entries).and(&t.entries).for_each(|&x, &y| {
                    fp += usize::from(x && !y);
                    fneg += usize::from(!x && y);
                });
                let cells = t.entries.len() as f64;
                fp_min = fp_min.min(fp as f64 / cells);
                fn_min = fn_min.min(fneg as f64 / cells);
            }
            fp_view += fp_min;
            fn_view += fn_min;
        }
        fp_total += fp_view / tru.len() as f64;
        fn_total += fn_view / tru.len() as f64;
    }
    let d = truth.len() as f64;
    Ok(ErrorRates { false_positive: fp_total / d, false_negative: fn_total / d })
}

/// Mean squared error for Gaussian outcomes; misclassification rate at 0.5
/// for Bernoulli outcomes. `y_pred` is on the mean scale.
pub fn outcome_error(y_true: &Array1<f64>, y_pred: &Array1<f64>, family: Family) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(SibError::Shape(format!("{} outcomes but {} predictions", y_true.len(), y_pred.len())));
    }
    if y_true.is_empty() {
        return Err(SibError::InvalidInput("no outcomes to score".into()));
    }
    let n = y_true.len() as f64;
    match family {
        Family::Bernoulli => {
            let wrong = y_true.iter().zip(y_pred).filter(|(&y, &p)| (p >= 0.5) != (y >= 0.5)).count();
            Ok(wrong as f64 / n)
        }
        Family::Gaussian | Family::Poisson => {
            Ok(y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / n)
        }
        Family::NegBinInit { .. } => Err(SibError::InvalidFamily(family.to_string())),
    }
}
