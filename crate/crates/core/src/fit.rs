//! Alternating projected gradient descent for the supervised factorization.
//!
//! Each iteration updates the blocks `U -> W -> V -> mu -> beta` in turn, and
//! every block sees the residuals left by the block before it. After the loop
//! the outcome coefficients are refit as a GLM of `y` on `[W | X_E]`.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SibError};
use crate::expfam::{cumulant_unchecked, init_transform, mean_link_unchecked, Family};
use crate::loss::{
    grad_beta, grad_mu, grad_u, grad_v, grad_w, penalty, score_pressure, Evaluation, LossWeights,
};
use crate::model::{
    apply_non_overlapping, hard_assign, variable_membership, BiclusterResult, ModelParams,
    OutcomeSpec, StopReason, ViewMatrix,
};
use crate::projections::{normalize_in_place, project_simplex_in_place, shrink};

/// How the step for each block is derived from `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// Every block moves by `alpha` times its gradient.
    Fixed,
    /// Block `B` moves by `alpha / L_B`, where `L_B` bounds the curvature of
    /// the smooth loss along that block at the current iterate.
    #[default]
    BlockLipschitz,
}

/// Settings for a single fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub weights: LossWeights,
    pub k: usize,
    pub non_overlapping: bool,
    pub seed: u64,
    pub outcome_refit: bool,
    pub step_rule: StepRule,
}

impl FitConfig {
    pub fn new(k: usize, weights: LossWeights) -> Self {
        Self {
            alpha: 1.0,
            tol: 1e-5,
            max_iter: 2000,
            weights,
            k,
            non_overlapping: false,
            seed: 0,
            outcome_refit: true,
            step_rule: StepRule::default(),
        }
    }

    /// One penalty per view shared by all components.
    pub fn shared(k: usize, rho: f64, lambdas: &[f64]) -> Result<Self> {
        Ok(Self::new(k, LossWeights::shared(rho, lambdas, k)?))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(SibError::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(SibError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(SibError::Config("max_iter must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(SibError::Config("K must be at least 1".into()));
        }
        Ok(())
    }

    fn check_against(&self, views: &[ViewMatrix], outcome: &OutcomeSpec) -> Result<()> {
        self.validate()?;
        if views.is_empty() {
            return Err(SibError::Config("at least one view is required".into()));
        }
        for v in views {
            v.family().ensure_likelihood()?;
        }
        let n = views[0].n_samples();
        if let Some(v) = views.iter().find(|v| v.n_samples() != n) {
            return Err(SibError::Shape(format!(
                "view {:?} has {} samples, expected {n}",
                v.name(),
                v.n_samples()
            )));
        }
        if outcome.len() != n {
            return Err(SibError::Shape(format!("outcome has {} entries, views have {n} samples", outcome.len())));
        }
        self.weights.check(views.len(), self.k)
    }
}

/// Warm start from the truncated SVD of the transformed, concatenated views.
///
/// `U` holds the leading left singular vectors and `V` the matching columns of
/// `Q Sigma`, split by view. `W` is all ones, `mu` and `beta` are zero. Each
/// singular pair is signed so that the largest-magnitude entry of the `U`
/// column is positive.
pub fn initialize(views: &[ViewMatrix], outcome: &OutcomeSpec, config: &FitConfig) -> Result<ModelParams> {
    config.check_against(views, outcome)?;
    let n = views[0].n_samples();
    let total_p: usize = views.iter().map(ViewMatrix::n_vars).sum();
    let k = config.k;
    if k > n.min(total_p) {
        return Err(SibError::Config(format!(
            "K = {k} exceeds min(n, total variables) = {}",
            n.min(total_p)
        )));
    }

    let mut psi = DMatrix::<f64>::zeros(n, total_p);
    let mut offset = 0;
    for view in views {
        let family = view.family();
        for ((i, j), &x) in view.data().indexed_iter() {
            psi[(i, offset + j)] = init_transform(family, x)?;
        }
        offset += view.n_vars();
    }

    let svd = psi.try_svd(true, true, f64::EPSILON, 10_000).ok_or_else(|| {
        SibError::numerical(0, "initialization", "SVD did not converge")
    })?;
    let (left, right_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(SibError::numerical(0, "initialization", "SVD returned no singular vectors")),
    };
    let sigma = svd.singular_values;
    if sigma.iter().any(|s| !s.is_finite()) {
        return Err(SibError::numerical(0, "initialization", "non-finite singular values"));
    }
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));

    let mut u = Array2::zeros((n, k));
    let mut v_all = Array2::zeros((total_p, k));
    for (c, &idx) in order.iter().take(k).enumerate() {
        let col = left.column(idx);
        let pivot = col.iter().copied().fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            u[[i, c]] = sign * col[i];
        }
        for j in 0..total_p {
            v_all[[j, c]] = sign * sigma[idx] * right_t[(idx, j)];
        }
    }

    let mut v = Vec::with_capacity(views.len());
    let mut offset = 0;
    for view in views {
        let p = view.n_vars();
        v.push(v_all.slice(ndarray::s![offset..offset + p, ..]).to_owned());
        offset += p;
    }
    Ok(ModelParams {
        u,
        v,
        w: Array2::ones((n, k)),
        mu: views.iter().map(|x| Array1::zeros(x.n_vars())).collect(),
        beta: Array1::zeros(k + outcome.n_covariates()),
    })
}

/// Fits the model from the SVD warm start.
pub fn fit(views: &[ViewMatrix], outcome: &OutcomeSpec, config: &FitConfig) -> Result<BiclusterResult> {
    let init = initialize(views, outcome, config)?;
    fit_from(views, outcome, config, init)
}

/// Fits the model from caller-supplied starting parameters.
pub fn fit_from(
    views: &[ViewMatrix],
    outcome: &OutcomeSpec,
    config: &FitConfig,
    init: ModelParams,
) -> Result<BiclusterResult> {
    config.check_against(views, outcome)?;
    init.check_dims(views, outcome.n_covariates())?;
    if init.k() != config.k {
        return Err(SibError::Shape(format!("initial parameters have K = {}, config has {}", init.k(), config.k)));
    }

    let rho = config.weights.rho();
    let (n, k) = init.u.dim();
    let view_families: Vec<Family> = views.iter().map(ViewMatrix::family).collect();
    let steps = Steps { rule: config.step_rule, alpha: config.alpha, rho, n };

    let mut params = init;
    let mut eval = Evaluation::compute(views, Some(outcome), &params);
    check_finite(&eval, 0, "initialization")?;
    let mut loss = eval.smooth(views, rho) + penalty(&params, &config.weights);
    let mut loss_trace = vec![loss];
    let mut stop_reason = StopReason::MaxIterations;
    let mut iterations = 0;

    for it in 1..=config.max_iter {
        iterations = it;
        let previous = params.clone();

        // U
        let resid = eval.scaled_view_resid(views, rho);
        let t = score_pressure(&resid, &params.v, n, k);
        let step = steps.u(&params, &eval, views, &view_families);
        params.u.scaled_add(-step, &grad_u(&t, &params.w));
        normalize_columns(&mut params.u).map_err(|e| stage_error(e, it, "U"))?;
        eval.refresh_views(views, &params);
        check_finite(&eval, it, "U")?;

        // W
        let resid = eval.scaled_view_resid(views, rho);
        let t = score_pressure(&resid, &params.v, n, k);
        let r = eval.scaled_outcome_resid(rho);
        let step = steps.w(&params, &eval, views, &view_families, outcome.family());
        params.w.scaled_add(-step, &grad_w(&t, &params.u, r.as_ref(), &params.beta));
        project_rows(&mut params.w).map_err(|e| stage_error(e, it, "W"))?;
        eval.refresh_views(views, &params);
        eval.refresh_outcome(outcome, &params);
        check_finite(&eval, it, "W")?;

        // V
        let resid = eval.scaled_view_resid(views, rho);
        let scores = params.scores();
        let grads = grad_v(&resid, &scores);
        for (d, g) in grads.iter().enumerate() {
            let step = steps.v(&scores, &eval, views, &view_families, d);
            let vd = &mut params.v[d];
            vd.scaled_add(-step, g);
            for (c, mut col) in vd.axis_iter_mut(Axis(1)).enumerate() {
                let threshold = config.weights.lambda(d, c) * step;
                col.mapv_inplace(|x| shrink(x, threshold));
            }
        }
        if has_zero_column(&params.v) {
            stop_reason = StopReason::EmptyComponent;
            params = previous;
            if it == 1 {
                normalize_columns(&mut params.u).map_err(|e| stage_error(e, it, "U"))?;
                project_rows(&mut params.w).map_err(|e| stage_error(e, it, "W"))?;
            }
            break;
        }
        eval.refresh_views(views, &params);
        check_finite(&eval, it, "V")?;

        // mu
        let resid = eval.scaled_view_resid(views, rho);
        for (d, g) in grad_mu(&resid).iter().enumerate() {
            let step = steps.mu(&eval, views, &view_families, d);
            params.mu[d].scaled_add(-step, g);
        }
        eval.refresh_views(views, &params);
        check_finite(&eval, it, "mu")?;

        // beta
        if let Some(r) = eval.scaled_outcome_resid(rho) {
            let step = steps.beta(&params, &eval, outcome);
            params.beta.scaled_add(-step, &grad_beta(&r, &params.w, outcome.covariates()));
        }
        eval.refresh_outcome(outcome, &params);
        check_finite(&eval, it, "beta")?;

        let new_loss = eval.smooth(views, rho) + penalty(&params, &config.weights);
        loss_trace.push(new_loss);
        let change = (new_loss - loss).abs() / (loss.abs() + 1e-12);
        loss = new_loss;
        if change < config.tol {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }

    if config.non_overlapping {
        apply_non_overlapping(&mut params.v);
    }
    let (beta_hat, separation_warning) = if config.outcome_refit {
        let refit = refit_beta(outcome, &params.w)?;
        (refit.beta, refit.separation_warning)
    } else {
        (params.beta.clone(), false)
    };

    Ok(BiclusterResult {
        assignments: hard_assign(&params.w),
        variable_members: variable_membership(&params.v, config.non_overlapping),
        params,
        beta_hat,
        loss_trace,
        converged: stop_reason == StopReason::Tolerance,
        stop_reason,
        iterations,
        non_overlapping: config.non_overlapping,
        separation_warning,
        view_families,
        outcome_family: outcome.family(),
    })
}

/// Outcome coefficients refit on fixed `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaRefit {
    pub beta: Array1<f64>,
    /// Newton did not converge, or the fitted natural parameters ran off
    /// towards infinity (perfect or quasi-separation).
    pub separation_warning: bool,
    pub iterations: usize,
}

const REFIT_RIDGE: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 100;
const NEWTON_GRAD_TOL: f64 = 1e-8;
const SEPARATION_PSI: f64 = 12.0;

/// GLM fit of the outcome on `[W | X_E]` without intercept.
///
/// Gaussian outcomes use ridge-jittered normal equations. Other families use
/// Newton-Raphson with backtracking from `beta = 0`.
pub fn refit_beta(outcome: &OutcomeSpec, w_hat: &Array2<f64>) -> Result<BetaRefit> {
    if w_hat.nrows() != outcome.len() {
        return Err(SibError::Shape(format!(
            "W has {} rows, outcome has {} entries",
            w_hat.nrows(),
            outcome.len()
        )));
    }
    let design = match outcome.covariates() {
        Some(x) => ndarray::concatenate(Axis(1), &[w_hat.view(), x.view()]).expect("row counts checked"),
        None => w_hat.clone(),
    };
    let z = to_dmatrix(&design);
    let y = DVector::from_iterator(outcome.len(), outcome.y().iter().copied());
    let dim = design.ncols();
    let ridge = DMatrix::<f64>::identity(dim, dim) * REFIT_RIDGE;
    let zt = z.transpose();

    let family = outcome.family();
    if family == Family::Gaussian {
        let beta = solve_spd(&zt * &z + ridge, &zt * &y)
            .ok_or_else(|| SibError::numerical(0, "beta refit", "singular normal equations"))?;
        return Ok(BetaRefit { beta: Array1::from_iter(beta.iter().copied()), separation_warning: false, iterations: 1 });
    }

    let objective = |beta: &DVector<f64>| -> f64 {
        let psi = &z * beta;
        psi.iter().zip(y.iter()).map(|(&p, &yi)| -yi * p + cumulant_unchecked(family, p)).sum()
    };
    let mut beta = DVector::<f64>::zeros(dim);
    let mut f = objective(&beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=NEWTON_MAX_ITER {
        iterations = it;
        let psi = &z * &beta;
        let mean = psi.map(|p| mean_link_unchecked(family, p));
        let grad = &zt * (&mean - &y);
        if grad.norm() < NEWTON_GRAD_TOL {
            converged = true;
            break;
        }
        let curvature = psi.map(|p| second_derivative(family, p));
        let mut weighted = z.clone();
        for (mut row, c) in weighted.row_iter_mut().zip(curvature.iter()) {
            row *= *c;
        }
        let hessian = &zt * weighted + &ridge;
        let Some(direction) = solve_spd(hessian, -&grad) else {
            break;
        };
        let slope = grad.dot(&direction);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let candidate = &beta + &direction * t;
            let fc = objective(&candidate);
            if fc.is_finite() && fc <= f + 1e-4 * t * slope {
                beta = candidate;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !beta.iter().all(|b| b.is_finite()) {
        return Err(SibError::numerical(iterations, "beta refit", "non-finite coefficients"));
    }
    let max_psi = (&z * &beta).amax();
    let separated = family == Family::Bernoulli && max_psi > SEPARATION_PSI;
    Ok(BetaRefit {
        beta: Array1::from_iter(beta.iter().copied()),
        separation_warning: !converged || separated,
        iterations,
    })
}

fn second_derivative(family: Family, psi: f64) -> f64 {
    match family {
        Family::Gaussian => 1.0,
        Family::Bernoulli => {
            let s = mean_link_unchecked(family, psi);
            s * (1.0 - s)
        }
        Family::Poisson => psi.exp(),
        Family::NegBinInit { .. } => f64::NAN,
    }
}

fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    match a.clone().cholesky() {
        Some(chol) => Some(chol.solve(&b)),
        None => a.lu().solve(&b),
    }
}

pub(crate) fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Largest eigenvalue of `A^T A`.
pub(crate) fn gram_spectral(a: &Array2<f64>) -> f64 {
    let g = to_dmatrix(&a.t().dot(a));
    g.symmetric_eigenvalues().max().max(0.0)
}

pub(crate) fn normalize_columns(u: &mut Array2<f64>) -> Result<()> {
    for mut col in u.axis_iter_mut(Axis(1)) {
        let mut buf = col.to_vec();
        normalize_in_place(&mut buf)?;
        col.iter_mut().zip(buf).for_each(|(x, b)| *x = b);
    }
    Ok(())
}

pub(crate) fn project_rows(w: &mut Array2<f64>) -> Result<()> {
    for mut row in w.rows_mut() {
        match row.as_slice_mut() {
            Some(slice) => project_simplex_in_place(slice)?,
            None => {
                let mut buf = row.to_vec();
                project_simplex_in_place(&mut buf)?;
                row.iter_mut().zip(buf).for_each(|(x, b)| *x = b);
            }
        }
    }
    Ok(())
}

fn has_zero_column(v: &[Array2<f64>]) -> bool {
    v.iter().any(|vd| vd.axis_iter(Axis(1)).any(|col| col.iter().all(|&x| x == 0.0)))
}

pub(crate) fn check_finite(eval: &Evaluation, iteration: usize, stage: &str) -> Result<()> {
    if eval.is_finite() {
        Ok(())
    } else {
        Err(SibError::numerical(iteration, stage, "non-finite loss"))
    }
}

fn stage_error(err: SibError, iteration: usize, stage: &str) -> SibError {
    SibError::numerical(iteration, stage, err.to_string())
}

/// Per-block step sizes.
pub(crate) struct Steps {
    pub rule: StepRule,
    pub alpha: f64,
    pub rho: f64,
    pub n: usize,
}

const MIN_CURVATURE: f64 = 1e-12;

impl Steps {
    fn scaled(&self, lipschitz: f64) -> f64 {
        match self.rule {
            StepRule::Fixed => self.alpha,
            StepRule::BlockLipschitz => self.alpha / lipschitz.max(MIN_CURVATURE),
        }
    }

    fn view_weight(&self, eval: &Evaluation, views: &[ViewMatrix], families: &[Family], d: usize) -> f64 {
        let c = families[d].curvature_bound(eval.views[d].max_psi);
        self.rho * c / (self.n as f64 * views[d].n_vars() as f64)
    }

    fn loading_term(&self, v: &[Array2<f64>], eval: &Evaluation, views: &[ViewMatrix], families: &[Family]) -> f64 {
        if self.rule == StepRule::Fixed {
            return 0.0;
        }
        (0..views.len()).map(|d| self.view_weight(eval, views, families, d) * gram_spectral(&v[d])).sum()
    }

    pub fn u(&self, params: &ModelParams, eval: &Evaluation, views: &[ViewMatrix], families: &[Family]) -> f64 {
        let max_w2 = params.w.iter().fold(0.0_f64, |m, x| m.max(x * x));
        self.scaled(self.loading_term(&params.v, eval, views, families) * max_w2)
    }

    pub fn w(
        &self,
        params: &ModelParams,
        eval: &Evaluation,
        views: &[ViewMatrix],
        families: &[Family],
        outcome_family: Family,
    ) -> f64 {
        if self.rule == StepRule::Fixed {
            return self.alpha;
        }
        let max_u2 = params.u.iter().fold(0.0_f64, |m, x| m.max(x * x));
        let k = params.k();
        let beta_k = params.beta.slice(ndarray::s![..k]);
        let c_y = eval.outcome.as_ref().map_or(0.0, |o| outcome_family.curvature_bound(o.max_psi));
        let outcome_term = (1.0 - self.rho) * c_y / self.n as f64 * beta_k.dot(&beta_k);
        self.scaled(self.loading_term(&params.v, eval, views, families) * max_u2 + outcome_term)
    }

    pub fn v(&self, scores: &Array2<f64>, eval: &Evaluation, views: &[ViewMatrix], families: &[Family], d: usize) -> f64 {
        if self.rule == StepRule::Fixed {
            return self.alpha;
        }
        self.scaled(self.view_weight(eval, views, families, d) * gram_spectral(scores))
    }

    pub fn mu(&self, eval: &Evaluation, views: &[ViewMatrix], families: &[Family], d: usize) -> f64 {
        self.scaled(self.view_weight(eval, views, families, d) * self.n as f64)
    }

    pub fn beta(&self, params: &ModelParams, eval: &Evaluation, outcome: &OutcomeSpec) -> f64 {
        if self.rule == StepRule::Fixed {
            return self.alpha;
        }
        let c_y = eval.outcome.as_ref().map_or(0.0, |o| outcome.family().curvature_bound(o.max_psi));
        let design = match outcome.covariates() {
            Some(x) => ndarray::concatenate(Axis(1), &[params.w.view(), x.view()]).expect("row counts checked"),
            None => params.w.clone(),
        };
        self.scaled((1.0 - self.rho) * c_y / self.n as f64 * gram_spectral(&design))
    }
}
