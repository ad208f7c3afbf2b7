//! Bicluster assignment and outcome prediction for new samples.
//!
//! With the fitted `V` and `mu` frozen, `U` and `W` for the new samples are
//! estimated by alternating projected gradient steps on the view-only loss
//! `l_x`. The outcome is then predicted from `W_new` and the fitted `beta`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SibError};
use crate::expfam::{init_transform, mean_link_unchecked, Family};
use crate::fit::{check_finite, normalize_columns, project_rows, to_dmatrix, FitConfig, StepRule, Steps};
use crate::loss::{grad_u, grad_w, score_pressure, Evaluation};
use crate::model::{hard_assign, outcome_natural_param, BiclusterResult, ModelParams, ViewMatrix};

const LS_RIDGE: f64 = 1e-8;

/// Step and stopping settings for the prediction updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictConfig {
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub step_rule: StepRule,
    /// Mean-scale cut-off for reporting binary classes.
    pub threshold: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self { alpha: 1.0, tol: 1e-5, max_iter: 2000, step_rule: StepRule::default(), threshold: 0.5 }
    }
}

impl PredictConfig {
    /// Reuses the step and stopping settings of a fit.
    pub fn from_fit(config: &FitConfig) -> Self {
        Self {
            alpha: config.alpha,
            tol: config.tol,
            max_iter: config.max_iter,
            step_rule: config.step_rule,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite() && self.tol > 0.0 && self.max_iter >= 1) {
            return Err(SibError::Config("prediction needs alpha > 0, tol > 0 and max_iter >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(SibError::Config("threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub w_new: Array2<f64>,
    pub u_new: Array2<f64>,
    pub assignments: Vec<usize>,
    pub psi_y_hat: Array1<f64>,
    /// Predictions on the mean scale.
    pub y_hat: Array1<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub loss_trace: Vec<f64>,
}

impl PredictionResult {
    /// Hard class labels at `threshold` for binary outcomes.
    pub fn classes(&self, threshold: f64) -> Vec<u8> {
        self.y_hat.iter().map(|&p| u8::from(p >= threshold)).collect()
    }
}

fn check_schema(new_views: &[ViewMatrix], fitted: &BiclusterResult, covariates: Option<&Array2<f64>>) -> Result<usize> {
    let params = &fitted.params;
    if new_views.len() != params.v.len() {
        return Err(SibError::Shape(format!("model has {} views, got {}", params.v.len(), new_views.len())));
    }
    let m = new_views[0].n_samples();
    for (d, view) in new_views.iter().enumerate() {
        if view.n_vars() != params.v[d].nrows() {
            return Err(SibError::Shape(format!(
                "view {:?} has {} variables, the model expects {}",
                view.name(),
                view.n_vars(),
                params.v[d].nrows()
            )));
        }
        if view.n_samples() != m {
            return Err(SibError::Shape(format!("view {:?} has {} samples, expected {m}", view.name(), view.n_samples())));
        }
        if let Some(&f) = fitted.view_families.get(d) {
            if f != view.family() {
                return Err(SibError::Shape(format!(
                    "view {:?} is {}, the model was fitted on {f}",
                    view.name(),
                    view.family()
                )));
            }
        }
    }
    let n_cov = fitted.beta_hat.len() - params.k();
    match (covariates, n_cov) {
        (None, 0) => {}
        (Some(x), c) if x.ncols() == c && x.nrows() == m && c > 0 => {}
        _ => {
            return Err(SibError::Shape(format!("the model expects {n_cov} covariate columns for {m} samples")));
        }
    }
    Ok(m)
}

/// Least-squares scores `(Psi_h - 1 mu^T) V (V^T V + eps I)^-1` with unit
/// columns, and uniform `W`.
pub fn initial_scores(new_views: &[ViewMatrix], fitted: &BiclusterResult) -> Result<(Array2<f64>, Array2<f64>)> {
    let params = &fitted.params;
    let k = params.k();
    let m = new_views[0].n_samples();
    let mut cross = Array2::<f64>::zeros((m, k));
    let mut gram = Array2::<f64>::zeros((k, k));
    for (d, view) in new_views.iter().enumerate() {
        let family = view.family();
        let mut centred = Array2::zeros((m, view.n_vars()));
        for ((i, j), &x) in view.data().indexed_iter() {
            centred[[i, j]] = init_transform(family, x)? - params.mu[d][j];
        }
        cross += &centred.dot(&params.v[d]);
        gram += &params.v[d].t().dot(&params.v[d]);
    }
    let system = to_dmatrix(&gram) + DMatrix::<f64>::identity(k, k) * LS_RIDGE;
    let inverse = system
        .try_inverse()
        .ok_or_else(|| SibError::numerical(0, "prediction initialization", "singular loading Gram matrix"))?;
    let inv = Array2::from_shape_fn((k, k), |(i, j)| inverse[(i, j)]);
    let mut u = cross.dot(&inv);
    normalize_columns(&mut u).map_err(|e| SibError::numerical(0, "prediction initialization", e.to_string()))?;
    Ok((u, Array2::from_elem((m, k), 1.0 / k as f64)))
}

/// Assigns new samples to the fitted biclusters and predicts their outcome.
/// Outcomes of the new samples are never needed.
pub fn predict(
    new_views: &[ViewMatrix],
    fitted: &BiclusterResult,
    covariates: Option<&Array2<f64>>,
    config: &PredictConfig,
) -> Result<PredictionResult> {
    config.validate()?;
    if new_views.is_empty() {
        return Err(SibError::Config("at least one view is required".into()));
    }
    check_schema(new_views, fitted, covariates)?;
    let (u, w) = initial_scores(new_views, fitted)?;
    predict_from(new_views, fitted, covariates, config, u, w)
}

/// As [`predict`], starting from the given `U` and `W`.
pub fn predict_from(
    new_views: &[ViewMatrix],
    fitted: &BiclusterResult,
    covariates: Option<&Array2<f64>>,
    config: &PredictConfig,
    u_init: Array2<f64>,
    w_init: Array2<f64>,
) -> Result<PredictionResult> {
    config.validate()?;
    if new_views.is_empty() {
        return Err(SibError::Config("at least one view is required".into()));
    }
    let m = check_schema(new_views, fitted, covariates)?;
    let k = fitted.params.k();
    if u_init.dim() != (m, k) || w_init.dim() != (m, k) {
        return Err(SibError::Shape(format!("initial U and W must be {m} x {k}")));
    }

    let mut params = ModelParams {
        u: u_init,
        v: fitted.params.v.clone(),
        w: w_init,
        mu: fitted.params.mu.clone(),
        beta: fitted.beta_hat.clone(),
    };
    let families: Vec<Family> = new_views.iter().map(ViewMatrix::family).collect();
    let steps = Steps { rule: config.step_rule, alpha: config.alpha, rho: 1.0, n: m };
    let mut eval = Evaluation::compute(new_views, None, &params);
    check_finite(&eval, 0, "prediction initialization")?;
    let mut loss = eval.smooth(new_views, 1.0);
    let mut loss_trace = vec![loss];
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=config.max_iter {
        iterations = it;
        let resid = eval.scaled_view_resid(new_views, 1.0);
        let t = score_pressure(&resid, &params.v, m, k);
        let step = steps.u(&params, &eval, new_views, &families);
        params.u.scaled_add(-step, &grad_u(&t, &params.w));
        normalize_columns(&mut params.u).map_err(|e| SibError::numerical(it, "U", e.to_string()))?;
        eval.refresh_views(new_views, &params);
        check_finite(&eval, it, "U")?;

        let resid = eval.scaled_view_resid(new_views, 1.0);
        let t = score_pressure(&resid, &params.v, m, k);
        let step = steps.w(&params, &eval, new_views, &families, fitted.outcome_family);
        params.w.scaled_add(-step, &grad_w(&t, &params.u, None, &params.beta));
        project_rows(&mut params.w).map_err(|e| SibError::numerical(it, "W", e.to_string()))?;
        eval.refresh_views(new_views, &params);
        check_finite(&eval, it, "W")?;

        let new_loss = eval.smooth(new_views, 1.0);
        loss_trace.push(new_loss);
        let change = (new_loss - loss).abs() / (loss.abs() + 1e-12);
        loss = new_loss;
        if change < config.tol {
            converged = true;
            break;
        }
    }

    let psi_y_hat = outcome_natural_param(&params.w, &fitted.beta_hat, covariates);
    let y_hat = psi_y_hat.mapv(|p| mean_link_unchecked(fitted.outcome_family, p));
    Ok(PredictionResult {
        assignments: hard_assign(&params.w),
        w_new: params.w,
        u_new: params.u,
        psi_y_hat,
        y_hat,
        converged,
        iterations,
        loss_trace,
    })
}

/// Pairs biclusters of two fits by their outcome coefficients, greedily
/// taking the closest remaining pair. Returns `(reference, other)` index
/// pairs ordered by reference index.
pub fn match_by_beta(reference: &[f64], other: &[f64]) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = reference
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| other.iter().enumerate().map(move |(j, &b)| ((a - b).abs(), i, j)))
        .collect();
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_ref = vec![false; reference.len()];
    let mut used_other = vec![false; other.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_ref[i] && !used_other[j] {
            used_ref[i] = true;
            used_other[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Mean of `y` within each hard-assigned group, for reporting.
pub fn group_means(y: &Array1<f64>, assignments: &[usize], k: usize) -> Vec<Option<f64>> {
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&a, &v) in assignments.iter().zip(y) {
        sums[a] += v;
        counts[a] += 1;
    }
    sums.iter().zip(&counts).map(|(&s, &c)| (c > 0).then(|| s / c as f64)).collect()
}
