//! Data containers and the deterministic maps from parameters to natural
//! parameters, hard assignments and variable memberships.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SibError};
use crate::expfam::Family;

/// One data view: `n` samples by `p` variables drawn from a single family.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMatrix {
    name: String,
    data: Array2<f64>,
    family: Family,
}

impl ViewMatrix {
    pub fn new(name: impl Into<String>, data: Array2<f64>, family: Family) -> Result<Self> {
        let name = name.into();
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(SibError::Config(format!("view {name:?} is empty")));
        }
        for (idx, &x) in data.indexed_iter() {
            family.check_value(x).map_err(|_| {
                SibError::InvalidData(format!(
                    "view {name:?} entry ({}, {}) = {x} is outside the {family} support",
                    idx.0, idx.1
                ))
            })?;
        }
        Ok(Self { name, data, family })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.data.ncols()
    }
}

/// The supervising outcome, optionally with covariates that enter the
/// outcome's natural parameter directly.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeSpec {
    y: Array1<f64>,
    family: Family,
    covariates: Option<Array2<f64>>,
}

impl OutcomeSpec {
    pub fn new(y: Array1<f64>, family: Family, covariates: Option<Array2<f64>>) -> Result<Self> {
        family.ensure_likelihood()?;
        for (i, &v) in y.iter().enumerate() {
            family
                .check_value(v)
                .map_err(|_| SibError::InvalidData(format!("outcome entry {i} = {v} is outside the {family} support")))?;
        }
        if let Some(x) = &covariates {
            if x.nrows() != y.len() {
                return Err(SibError::Shape(format!(
                    "covariates have {} rows but the outcome has {} entries",
                    x.nrows(),
                    y.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(SibError::InvalidData("covariates contain non-finite values".into()));
            }
        }
        Ok(Self { y, family, covariates })
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn covariates(&self) -> Option<&Array2<f64>> {
        self.covariates.as_ref()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.as_ref().map_or(0, |x| x.ncols())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Parameters of the factorization `Psi_d = 1 mu_d^T + (U o W) V_d^T` and of
/// the outcome model `psi_y = [W | X_E] beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub u: Array2<f64>,
    pub v: Vec<Array2<f64>>,
    pub w: Array2<f64>,
    pub mu: Vec<Array1<f64>>,
    /// First `k` entries belong to the biclusters, the rest to covariates.
    pub beta: Array1<f64>,
}

impl ModelParams {
    pub fn k(&self) -> usize {
        self.u.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.u.nrows()
    }

    /// Checks that every block agrees with the views and the covariate count.
    pub fn check_dims(&self, views: &[ViewMatrix], n_covariates: usize) -> Result<()> {
        let (n, k) = self.u.dim();
        if self.w.dim() != (n, k) {
            return Err(SibError::Shape(format!("W is {:?}, U is {:?}", self.w.dim(), (n, k))));
        }
        if self.v.len() != views.len() || self.mu.len() != views.len() {
            return Err(SibError::Shape(format!(
                "{} views but {} loading matrices and {} intercepts",
                views.len(),
                self.v.len(),
                self.mu.len()
            )));
        }
        for (d, view) in views.iter().enumerate() {
            if view.n_samples() != n {
                return Err(SibError::Shape(format!(
                    "view {:?} has {} samples, parameters have {n}",
                    view.name(),
                    view.n_samples()
                )));
            }
            if self.v[d].dim() != (view.n_vars(), k) {
                return Err(SibError::Shape(format!(
                    "V for view {:?} is {:?}, expected {:?}",
                    view.name(),
                    self.v[d].dim(),
                    (view.n_vars(), k)
                )));
            }
            if self.mu[d].len() != view.n_vars() {
                return Err(SibError::Shape(format!("mu for view {:?} has wrong length", view.name())));
            }
        }
        if self.beta.len() != k + n_covariates {
            return Err(SibError::Shape(format!(
                "beta has length {}, expected {}",
                self.beta.len(),
                k + n_covariates
            )));
        }
        Ok(())
    }

    /// The elementwise product `U o W`.
    pub fn scores(&self) -> Array2<f64> {
        &self.u * &self.w
    }
}

/// Why the alternating descent stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Tolerance,
    MaxIterations,
    EmptyComponent,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::Tolerance => "tolerance",
            StopReason::MaxIterations => "max-iterations",
            StopReason::EmptyComponent => "empty-component",
        })
    }
}

/// Per view, per bicluster, the sorted indices of member variables.
pub type VariableMembers = Vec<Vec<Vec<usize>>>;

/// Output of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiclusterResult {
    /// Zero-based bicluster index of each sample.
    pub assignments: Vec<usize>,
    pub variable_members: VariableMembers,
    pub params: ModelParams,
    pub beta_hat: Array1<f64>,
    /// Total objective after initialization and after every iteration.
    pub loss_trace: Vec<f64>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub non_overlapping: bool,
    /// Set when the outcome refit hit (quasi-)separation.
    pub separation_warning: bool,
    pub view_families: Vec<Family>,
    pub outcome_family: Family,
}

impl BiclusterResult {
    pub fn k(&self) -> usize {
        self.params.k()
    }

    /// Number of samples assigned to each bicluster.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Number of variables, summed over views, with at least one non-zero
    /// loading.
    pub fn selected_variables(&self) -> usize {
        self.params.v.iter().map(count_selected_rows).sum()
    }

    /// True when some bicluster got no sample, or some component has an
    /// all-zero loading column in every view.
    pub fn has_empty_bicluster(&self) -> bool {
        if self.cluster_sizes().contains(&0) {
            return true;
        }
        (0..self.k()).any(|k| self.params.v.iter().all(|v| v.column(k).iter().all(|&x| x == 0.0)))
    }
}

pub(crate) fn count_selected_rows(v: &Array2<f64>) -> usize {
    v.rows().into_iter().filter(|row| row.iter().any(|&x| x != 0.0)).count()
}

/// `1 mu_d^T + (U o W) V_d^T` for view `d`.
pub fn natural_params_view(params: &ModelParams, d: usize) -> Result<Array2<f64>> {
    let v = params
        .v
        .get(d)
        .ok_or_else(|| SibError::Shape(format!("no view with index {d}")))?;
    let mu = &params.mu[d];
    if params.w.dim() != params.u.dim() || v.ncols() != params.k() || mu.len() != v.nrows() {
        return Err(SibError::Shape(format!("inconsistent parameter shapes for view {d}")));
    }
    Ok(view_natural_params(params.scores().view(), v, mu))
}

pub(crate) fn view_natural_params(scores: ArrayView2<f64>, v: &Array2<f64>, mu: &Array1<f64>) -> Array2<f64> {
    let mut psi = scores.dot(&v.t());
    psi += &mu.view().insert_axis(Axis(0));
    psi
}

/// `W beta_K + X_E beta_E`.
pub fn natural_param_outcome(params: &ModelParams, outcome: &OutcomeSpec) -> Result<Array1<f64>> {
    let k = params.k();
    if params.beta.len() != k + outcome.n_covariates() || params.w.nrows() != outcome.len() {
        return Err(SibError::Shape(format!(
            "beta has length {} for K = {k} with {} covariates over {} samples",
            params.beta.len(),
            outcome.n_covariates(),
            outcome.len()
        )));
    }
    Ok(outcome_natural_param(&params.w, &params.beta, outcome.covariates()))
}

pub(crate) fn outcome_natural_param(w: &Array2<f64>, beta: &Array1<f64>, covariates: Option<&Array2<f64>>) -> Array1<f64> {
    let k = w.ncols();
    let mut psi = w.dot(&beta.slice(ndarray::s![..k]));
    if let Some(x) = covariates {
        psi += &x.dot(&beta.slice(ndarray::s![k..]));
    }
    psi
}

/// Row-wise argmax; ties go to the lowest column.
pub fn hard_assign(w: &Array2<f64>) -> Vec<usize> {
    w.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Reads bicluster membership of variables off the loading matrices.
///
/// Overlapping: variable `j` belongs to every bicluster with a non-zero
/// loading. Non-overlapping: only to the bicluster with the largest absolute
/// loading (lowest index on ties). All-zero rows belong nowhere.
pub fn variable_membership(v: &[Array2<f64>], non_overlapping: bool) -> VariableMembers {
    v.iter()
        .map(|loadings| {
            let mut members = vec![Vec::new(); loadings.ncols()];
            for (j, row) in loadings.rows().into_iter().enumerate() {
                if non_overlapping {
                    if let Some(k) = max_abs_index(row.iter().copied()) {
                        members[k].push(j);
                    }
                } else {
                    for (k, &x) in row.iter().enumerate() {
                        if x != 0.0 {
                            members[k].push(j);
                        }
                    }
                }
            }
            members
        })
        .collect()
}

/// Zeroes every loading except the row's max-abs entry, so the parameters
/// agree with the non-overlapping membership reading.
pub fn apply_non_overlapping(v: &mut [Array2<f64>]) {
    for loadings in v.iter_mut() {
        for mut row in loadings.rows_mut() {
            let keep = max_abs_index(row.iter().copied());
            for (k, x) in row.iter_mut().enumerate() {
                if Some(k) != keep {
                    *x = 0.0;
                }
            }
        }
    }
}

fn max_abs_index(row: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, x) in row.enumerate() {
        let a = x.abs();
        if a > 0.0 && best.is_none_or(|(_, b)| a > b) {
            best = Some((k, a));
        }
    }
    best.map(|(k, _)| k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn params_1x1() -> ModelParams {
        ModelParams {
            u: array![[1.0]],
            v: vec![array![[2.0]]],
            w: array![[1.0]],
            mu: vec![array![0.5]],
            beta: array![0.0],
        }
    }

    #[test]
    fn scalar_natural_parameter() {
        assert_eq!(natural_params_view(&params_1x1(), 0).unwrap(), array![[2.5]]);
        assert!(natural_params_view(&params_1x1(), 1).is_err());
    }

    #[test]
    fn zero_loadings_give_intercept() {
        let n = 4;
        let params = ModelParams {
            u: Array2::from_elem((n, 2), 0.5),
            v: vec![Array2::zeros((3, 2))],
            w: Array2::from_elem((n, 2), 0.5),
            mu: vec![Array1::from_elem(3, 1.25)],
            beta: Array1::zeros(2),
        };
        let psi = natural_params_view(&params, 0).unwrap();
        assert!(psi.iter().all(|&x| x == 1.25));
    }

    #[test]
    fn outcome_natural_parameter() {
        let mut params = ModelParams {
            u: Array2::zeros((3, 3)),
            v: vec![],
            w: array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            mu: vec![],
            beta: array![1.0, -1.0, -5.0],
        };
        let outcome = OutcomeSpec::new(array![0.0, 0.0, 0.0], Family::Gaussian, None).unwrap();
        assert_eq!(natural_param_outcome(&params, &outcome).unwrap(), array![1.0, -1.0, -5.0]);
        params.beta.fill(0.0);
        assert_eq!(natural_param_outcome(&params, &outcome).unwrap(), array![0.0, 0.0, 0.0]);

        let half = ModelParams {
            u: Array2::zeros((1, 2)),
            v: vec![],
            w: array![[0.5, 0.5]],
            mu: vec![],
            beta: array![2.0, 4.0],
        };
        let y = OutcomeSpec::new(array![0.0], Family::Gaussian, None).unwrap();
        assert_eq!(natural_param_outcome(&half, &y).unwrap(), array![3.0]);

        let with_cov = OutcomeSpec::new(array![0.0], Family::Gaussian, Some(array![[2.0]])).unwrap();
        let p = ModelParams { beta: array![2.0, 4.0, 0.5], ..half.clone() };
        assert_eq!(natural_param_outcome(&p, &with_cov).unwrap(), array![4.0]);
        assert!(natural_param_outcome(&half, &with_cov).is_err());
    }

    #[test]
    fn hard_assignment_rules() {
        let w = array![[0.1, 0.7, 0.2], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]];
        // zero-based: the second column is index 1
        assert_eq!(hard_assign(&w), vec![1, 0, 2]);
        let onehot = array![[0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert_eq!(hard_assign(&onehot), vec![1, 0, 1]);
    }

    #[test]
    fn membership_rules() {
        let v = vec![array![[0.0, 0.0, 0.0], [0.4, -0.9, 0.0]]];
        assert_eq!(variable_membership(&v, true), vec![vec![vec![], vec![1], vec![]]]);
        assert_eq!(variable_membership(&v, false), vec![vec![vec![1], vec![1], vec![]]]);
        let mut zeroed = v.clone();
        apply_non_overlapping(&mut zeroed);
        assert_eq!(zeroed[0], array![[0.0, 0.0, 0.0], [0.0, -0.9, 0.0]]);
    }

    #[test]
    fn view_validation() {
        assert!(ViewMatrix::new("b", array![[0.0, 1.0], [0.5, 1.0]], Family::Bernoulli).is_err());
        assert!(ViewMatrix::new("e", Array2::zeros((0, 3)), Family::Gaussian).is_err());
        assert!(OutcomeSpec::new(array![0.0, 2.0], Family::Bernoulli, None).is_err());
        assert!(OutcomeSpec::new(array![0.0], Family::NegBinInit { r: 2 }, None).is_err());
        assert!(OutcomeSpec::new(array![0.0, 1.0], Family::Gaussian, Some(Array2::zeros((3, 1)))).is_err());
    }

    fn naive_psi(p: &ModelParams, d: usize) -> Array2<f64> {
        let (n, k) = p.u.dim();
        let pd = p.v[d].nrows();
        let mut out = Array2::zeros((n, pd));
        for i in 0..n {
            for j in 0..pd {
                let mut s = p.mu[d][j];
                for c in 0..k {
                    s += p.u[[i, c]] * p.w[[i, c]] * p.v[d][[j, c]];
                }
                out[[i, j]] = s;
            }
        }
        out
    }

    fn arb_params() -> impl Strategy<Value = ModelParams> {
        (1usize..=5, 1usize..=5, 1usize..=5).prop_flat_map(|(n, p, k)| {
            (
                prop::collection::vec(-2.0f64..2.0, n * k),
                prop::collection::vec(-2.0f64..2.0, n * k),
                prop::collection::vec(-2.0f64..2.0, p * k),
                prop::collection::vec(-2.0f64..2.0, p),
            )
                .prop_map(move |(u, w, v, mu)| ModelParams {
                    u: Array2::from_shape_vec((n, k), u).unwrap(),
                    w: Array2::from_shape_vec((n, k), w).unwrap(),
                    v: vec![Array2::from_shape_vec((p, k), v).unwrap()],
                    mu: vec![Array1::from(mu)],
                    beta: Array1::zeros(k),
                })
        })
    }

    proptest! {
        #[test]
        fn natural_params_match_triple_loop(p in arb_params()) {
            let fast = natural_params_view(&p, 0).unwrap();
            let slow = naive_psi(&p, 0);
            for (a, b) in fast.iter().zip(slow.iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn hard_assign_is_scale_invariant(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..8),
            scale in 0.01f64..100.0,
            which in 0usize..8,
        ) {
            let n = rows.len();
            let w = Array2::from_shape_vec((n, 3), rows.concat()).unwrap();
            let mut scaled = w.clone();
            scaled.row_mut(which % n).mapv_inplace(|x| x * scale);
            prop_assert_eq!(hard_assign(&w), hard_assign(&scaled));
        }

        #[test]
        fn non_overlapping_members_are_disjoint(
            vals in prop::collection::vec(prop_oneof![Just(0.0), -3.0f64..3.0], 1..40),
        ) {
            let k = 3;
            let rows = vals.len() / k;
            prop_assume!(rows > 0);
            let v = Array2::from_shape_vec((rows, k), vals[..rows * k].to_vec()).unwrap();
            let members = variable_membership(std::slice::from_ref(&v), true);
            let mut all: Vec<usize> = members[0].iter().flatten().copied().collect();
            let total = all.len();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), total);
            prop_assert!(total <= rows);
        }
    }
}
