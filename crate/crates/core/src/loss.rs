//! The supervised multi-view objective and its gradients.
//!
//! ```text
//! l0 = (1 - rho) / n * sum_i nll(y_i, psi_y_i)
//!    + rho * sum_d 1 / (n p_d) * sum_ij nll(x_ij, psi_ij)
//! L  = l0 + sum_d sum_k lambda_kd * |V_d[., k]|_1
//! ```
//!
//! The L1 term is never differentiated; the fit applies it through the
//! soft-threshold prox.

use ndarray::{Array1, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SibError};
use crate::expfam::{cumulant_unchecked, mean_link_unchecked};
use crate::model::{outcome_natural_param, view_natural_params, ModelParams, OutcomeSpec, ViewMatrix};

/// Supervision weight and L1 penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    rho: f64,
    /// `lambdas[d][k]` penalizes column `k` of view `d`.
    lambdas: Vec<Vec<f64>>,
}

impl LossWeights {
    pub fn new(rho: f64, lambdas: Vec<Vec<f64>>) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(SibError::Config(format!("rho must lie in [0, 1], got {rho}")));
        }
        if lambdas.iter().flatten().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(SibError::Config("penalties must be finite and non-negative".into()));
        }
        Ok(Self { rho, lambdas })
    }

    /// One penalty per view, shared by all `k` components.
    pub fn shared(rho: f64, per_view: &[f64], k: usize) -> Result<Self> {
        Self::new(rho, per_view.iter().map(|&l| vec![l; k]).collect())
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn lambdas(&self) -> &[Vec<f64>] {
        &self.lambdas
    }

    pub fn lambda(&self, view: usize, component: usize) -> f64 {
        self.lambdas[view][component]
    }

    pub(crate) fn check(&self, n_views: usize, k: usize) -> Result<()> {
        if self.lambdas.len() != n_views || self.lambdas.iter().any(|l| l.len() != k) {
            return Err(SibError::Config(format!(
                "penalties must be given for {n_views} views x {k} components"
            )));
        }
        Ok(())
    }
}

/// Parameter block selector for [`grad`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    U,
    V,
    W,
    Mu,
    Beta,
}

/// Gradient of `l0` with the same shape as the selected block.
#[derive(Debug, Clone, PartialEq)]
pub enum Gradient {
    U(Array2<f64>),
    V(Vec<Array2<f64>>),
    W(Array2<f64>),
    Mu(Vec<Array1<f64>>),
    Beta(Array1<f64>),
}

/// Residuals `G'(psi) - x` and unaveraged likelihood sums at one parameter
/// state.
#[derive(Debug, Clone)]
pub(crate) struct ViewEval {
    pub nll: f64,
    pub resid: Array2<f64>,
    pub max_psi: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct OutcomeEval {
    pub nll: f64,
    pub resid: Array1<f64>,
    pub max_psi: f64,
}

pub(crate) fn eval_view(view: &ViewMatrix, scores: &Array2<f64>, v: &Array2<f64>, mu: &Array1<f64>) -> ViewEval {
    let family = view.family();
    let mut psi = view_natural_params(scores.view(), v, mu);
    let mut nll = 0.0;
    let mut max_psi = f64::NEG_INFINITY;
    Zip::from(&mut psi).and(view.data()).for_each(|p, &x| {
        let s = *p;
        nll += -x * s + cumulant_unchecked(family, s);
        max_psi = max_psi.max(s);
        *p = mean_link_unchecked(family, s) - x;
    });
    ViewEval { nll, resid: psi, max_psi }
}

pub(crate) fn eval_outcome(outcome: &OutcomeSpec, w: &Array2<f64>, beta: &Array1<f64>) -> OutcomeEval {
    let family = outcome.family();
    let mut psi = outcome_natural_param(w, beta, outcome.covariates());
    let mut nll = 0.0;
    let mut max_psi = f64::NEG_INFINITY;
    Zip::from(&mut psi).and(outcome.y()).for_each(|p, &y| {
        let s = *p;
        nll += -y * s + cumulant_unchecked(family, s);
        max_psi = max_psi.max(s);
        *p = mean_link_unchecked(family, s) - y;
    });
    OutcomeEval { nll, resid: psi, max_psi }
}

/// Likelihood state of all views plus the (optional) outcome.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub views: Vec<ViewEval>,
    pub outcome: Option<OutcomeEval>,
}

impl Evaluation {
    pub fn compute(views: &[ViewMatrix], outcome: Option<&OutcomeSpec>, params: &ModelParams) -> Self {
        let scores = params.scores();
        let views = views
            .iter()
            .enumerate()
            .map(|(d, view)| eval_view(view, &scores, &params.v[d], &params.mu[d]))
            .collect();
        let outcome = outcome.map(|o| eval_outcome(o, &params.w, &params.beta));
        Self { views, outcome }
    }

    pub fn refresh_views(&mut self, views: &[ViewMatrix], params: &ModelParams) {
        let scores = params.scores();
        for (d, view) in views.iter().enumerate() {
            self.views[d] = eval_view(view, &scores, &params.v[d], &params.mu[d]);
        }
    }

    pub fn refresh_outcome(&mut self, outcome: &OutcomeSpec, params: &ModelParams) {
        self.outcome = Some(eval_outcome(outcome, &params.w, &params.beta));
    }

    /// `rho`-weighted, size-averaged smooth loss.
    pub fn smooth(&self, views: &[ViewMatrix], rho: f64) -> f64 {
        let n = views[0].n_samples() as f64;
        let view_part: f64 = self
            .views
            .iter()
            .zip(views)
            .map(|(e, v)| e.nll / (n * v.n_vars() as f64))
            .sum();
        let outcome_part = self.outcome.as_ref().map_or(0.0, |o| o.nll / n);
        rho * view_part + (1.0 - rho) * outcome_part
    }

    /// Unaveraged, unweighted negative log-likelihood (constants dropped).
    pub fn nll_sum(&self) -> f64 {
        self.views.iter().map(|e| e.nll).sum::<f64>() + self.outcome.as_ref().map_or(0.0, |o| o.nll)
    }

    pub fn is_finite(&self) -> bool {
        self.views.iter().all(|e| e.nll.is_finite())
            && self.outcome.as_ref().is_none_or(|o| o.nll.is_finite())
    }

    /// Residual matrices scaled by `rho / (n p_d)`.
    pub fn scaled_view_resid(&self, views: &[ViewMatrix], rho: f64) -> Vec<Array2<f64>> {
        let n = views[0].n_samples() as f64;
        self.views
            .iter()
            .zip(views)
            .map(|(e, v)| &e.resid * (rho / (n * v.n_vars() as f64)))
            .collect()
    }

    /// Outcome residual scaled by `(1 - rho) / n`.
    pub fn scaled_outcome_resid(&self, rho: f64) -> Option<Array1<f64>> {
        self.outcome.as_ref().map(|o| {
            let n = o.resid.len() as f64;
            &o.resid * ((1.0 - rho) / n)
        })
    }
}

/// `T = sum_d R_d V_d`, shared by the U and W gradients.
pub(crate) fn score_pressure(resid: &[Array2<f64>], v: &[Array2<f64>], n: usize, k: usize) -> Array2<f64> {
    let mut t = Array2::zeros((n, k));
    for (r, vd) in resid.iter().zip(v) {
        t += &r.dot(vd);
    }
    t
}

pub(crate) fn grad_u(t: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
    t * w
}

pub(crate) fn grad_w(t: &Array2<f64>, u: &Array2<f64>, outcome_resid: Option<&Array1<f64>>, beta: &Array1<f64>) -> Array2<f64> {
    let mut g = t * u;
    if let Some(r) = outcome_resid {
        let k = u.ncols();
        let bk = beta.slice(ndarray::s![..k]);
        g += &(&r.view().insert_axis(Axis(1)) * &bk.insert_axis(Axis(0)));
    }
    g
}

pub(crate) fn grad_v(resid: &[Array2<f64>], scores: &Array2<f64>) -> Vec<Array2<f64>> {
    resid.iter().map(|r| r.t().dot(scores)).collect()
}

pub(crate) fn grad_mu(resid: &[Array2<f64>]) -> Vec<Array1<f64>> {
    resid.iter().map(|r| r.sum_axis(Axis(0))).collect()
}

pub(crate) fn grad_beta(outcome_resid: &Array1<f64>, w: &Array2<f64>, covariates: Option<&Array2<f64>>) -> Array1<f64> {
    let gw = w.t().dot(outcome_resid);
    match covariates {
        Some(x) => {
            let gx = x.t().dot(outcome_resid);
            ndarray::concatenate(Axis(0), &[gw.view(), gx.view()]).expect("1-d concatenation")
        }
        None => gw,
    }
}

/// Sum of `lambda_kd * |v_jk|` over all views, components and variables.
pub fn penalty(params: &ModelParams, weights: &LossWeights) -> f64 {
    params
        .v
        .iter()
        .enumerate()
        .map(|(d, v)| {
            v.axis_iter(Axis(1))
                .enumerate()
                .map(|(k, col)| weights.lambda(d, k) * col.iter().map(|x| x.abs()).sum::<f64>())
                .sum::<f64>()
        })
        .sum()
}

fn validate(views: &[ViewMatrix], outcome: &OutcomeSpec, params: &ModelParams, weights: &LossWeights) -> Result<()> {
    if views.is_empty() {
        return Err(SibError::Config("at least one view is required".into()));
    }
    for v in views {
        v.family().ensure_likelihood()?;
    }
    params.check_dims(views, outcome.n_covariates())?;
    if outcome.len() != params.n_samples() {
        return Err(SibError::Shape(format!(
            "outcome has {} entries, views have {} samples",
            outcome.len(),
            params.n_samples()
        )));
    }
    weights.check(views.len(), params.k())
}

fn evaluate_checked(views: &[ViewMatrix], outcome: Option<&OutcomeSpec>, params: &ModelParams) -> Result<Evaluation> {
    let eval = Evaluation::compute(views, outcome, params);
    if !eval.is_finite() {
        return Err(SibError::numerical(0, "loss evaluation", "non-finite likelihood"));
    }
    Ok(eval)
}

/// The differentiable part `l0`.
pub fn loss_smooth(views: &[ViewMatrix], outcome: &OutcomeSpec, params: &ModelParams, weights: &LossWeights) -> Result<f64> {
    validate(views, outcome, params, weights)?;
    Ok(evaluate_checked(views, Some(outcome), params)?.smooth(views, weights.rho()))
}

/// `l0` plus the L1 penalty on the loadings.
pub fn loss_total(views: &[ViewMatrix], outcome: &OutcomeSpec, params: &ModelParams, weights: &LossWeights) -> Result<f64> {
    Ok(loss_smooth(views, outcome, params, weights)? + penalty(params, weights))
}

/// Unaveraged, unweighted negative log-likelihood of views and outcome, the
/// quantity information criteria are built on.
pub fn nll_sum(views: &[ViewMatrix], outcome: &OutcomeSpec, params: &ModelParams) -> Result<f64> {
    params.check_dims(views, outcome.n_covariates())?;
    Ok(evaluate_checked(views, Some(outcome), params)?.nll_sum())
}

/// View-only averaged loss used when the outcome is unknown.
pub fn view_loss(views: &[ViewMatrix], params: &ModelParams) -> Result<f64> {
    if views.is_empty() {
        return Err(SibError::Config("at least one view is required".into()));
    }
    let n_cov = params.beta.len().saturating_sub(params.k());
    params.check_dims(views, n_cov)?;
    Ok(evaluate_checked(views, None, params)?.smooth(views, 1.0))
}

/// Analytic gradient of `l0` with respect to one parameter block.
pub fn grad(
    views: &[ViewMatrix],
    outcome: &OutcomeSpec,
    params: &ModelParams,
    weights: &LossWeights,
    block: Block,
) -> Result<Gradient> {
    validate(views, outcome, params, weights)?;
    let eval = evaluate_checked(views, Some(outcome), params)?;
    let rho = weights.rho();
    let resid = eval.scaled_view_resid(views, rho);
    let (n, k) = params.u.dim();
    Ok(match block {
        Block::U => Gradient::U(grad_u(&score_pressure(&resid, &params.v, n, k), &params.w)),
        Block::W => {
            let r = eval.scaled_outcome_resid(rho);
            Gradient::W(grad_w(&score_pressure(&resid, &params.v, n, k), &params.u, r.as_ref(), &params.beta))
        }
        Block::V => Gradient::V(grad_v(&resid, &params.scores())),
        Block::Mu => Gradient::Mu(grad_mu(&resid)),
        Block::Beta => {
            let r = eval.scaled_outcome_resid(rho).expect("outcome present");
            Gradient::Beta(grad_beta(&r, &params.w, outcome.covariates()))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::Family;
    use ndarray::array;

    fn zero_instance() -> (Vec<ViewMatrix>, OutcomeSpec, ModelParams) {
        let views = vec![ViewMatrix::new("a", Array2::zeros((3, 2)), Family::Gaussian).unwrap()];
        let outcome = OutcomeSpec::new(Array1::zeros(3), Family::Gaussian, None).unwrap();
        let params = ModelParams {
            u: Array2::zeros((3, 2)),
            v: vec![Array2::zeros((2, 2))],
            w: Array2::zeros((3, 2)),
            mu: vec![Array1::zeros(2)],
            beta: Array1::zeros(2),
        };
        (views, outcome, params)
    }

    #[test]
    fn all_zero_gaussian_loss_is_zero() {
        let (views, outcome, params) = zero_instance();
        let w = LossWeights::shared(0.5, &[0.3], 2).unwrap();
        assert_eq!(loss_total(&views, &outcome, &params, &w).unwrap(), 0.0);
    }

    #[test]
    fn weight_endpoints() {
        let views = vec![ViewMatrix::new("a", array![[1.0, 2.0], [0.5, -1.0]], Family::Gaussian).unwrap()];
        let outcome = OutcomeSpec::new(array![1.0, 0.0], Family::Bernoulli, None).unwrap();
        let params = ModelParams {
            u: array![[0.6, 0.0], [0.8, 1.0]],
            v: vec![array![[1.0, 0.0], [0.0, -2.0]]],
            w: array![[0.5, 0.5], [1.0, 0.0]],
            mu: vec![array![0.1, 0.2]],
            beta: array![1.0, -1.0],
        };
        let free = LossWeights::shared(1.0, &[0.0], 2).unwrap();
        let l = loss_total(&views, &outcome, &params, &free).unwrap();
        let views_only = view_loss(&views, &params).unwrap();
        assert!((l - views_only).abs() < 1e-15);

        let outcome_only = LossWeights::shared(0.0, &[0.0], 2).unwrap();
        let l = loss_smooth(&views, &outcome, &params, &outcome_only).unwrap();
        let psi_y = outcome_natural_param(&params.w, &params.beta, None);
        let expect: f64 = psi_y
            .iter()
            .zip(outcome.y())
            .map(|(&p, &y)| -y * p + (1.0 + p.exp()).ln())
            .sum::<f64>()
            / 2.0;
        assert!((l - expect).abs() < 1e-15);

        match grad(&views, &outcome, &params, &free, Block::Beta).unwrap() {
            Gradient::Beta(g) => assert!(g.iter().all(|&x| x == 0.0)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn penalty_free_total_equals_smooth() {
        let (views, outcome, mut params) = zero_instance();
        params.v[0][[0, 1]] = 2.0;
        let w = LossWeights::shared(0.4, &[0.0], 2).unwrap();
        assert_eq!(
            loss_total(&views, &outcome, &params, &w).unwrap(),
            loss_smooth(&views, &outcome, &params, &w).unwrap()
        );
        let w = LossWeights::new(0.4, vec![vec![0.0, 0.25]]).unwrap();
        let diff = loss_total(&views, &outcome, &params, &w).unwrap() - loss_smooth(&views, &outcome, &params, &w).unwrap();
        assert!((diff - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mu_gradient_vanishes_at_residual_zero() {
        let x = array![[1.0, 2.0], [1.0, 2.0]];
        let views = vec![ViewMatrix::new("a", x, Family::Gaussian).unwrap()];
        let outcome = OutcomeSpec::new(array![0.0, 0.0], Family::Gaussian, None).unwrap();
        let params = ModelParams {
            u: array![[1.0], [0.0]],
            v: vec![array![[0.0], [0.0]]],
            w: array![[1.0], [1.0]],
            mu: vec![array![1.0, 2.0]],
            beta: array![0.0],
        };
        let w = LossWeights::shared(0.5, &[0.0], 1).unwrap();
        match grad(&views, &outcome, &params, &w, Block::Mu).unwrap() {
            Gradient::Mu(g) => assert!(g[0].iter().all(|&x| x == 0.0)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn rejects_bad_weights_and_shapes() {
        assert!(LossWeights::shared(1.5, &[0.0], 2).is_err());
        assert!(LossWeights::shared(0.5, &[-1.0], 2).is_err());
        let (views, outcome, params) = zero_instance();
        let wrong_k = LossWeights::shared(0.5, &[0.0], 3).unwrap();
        assert!(loss_total(&views, &outcome, &params, &wrong_k).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let views = vec![ViewMatrix::new("c", array![[1.0]], Family::Poisson).unwrap()];
        let outcome = OutcomeSpec::new(array![0.0], Family::Gaussian, None).unwrap();
        let params = ModelParams {
            u: array![[1.0]],
            v: vec![array![[1000.0]]],
            w: array![[1.0]],
            mu: vec![array![0.0]],
            beta: array![0.0],
        };
        let w = LossWeights::shared(0.5, &[0.0], 1).unwrap();
        assert!(matches!(loss_total(&views, &outcome, &params, &w), Err(SibError::Numerical { .. })));
    }
}
