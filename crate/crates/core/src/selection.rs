//! Information criteria, random search over penalty grids, and choice of the
//! number of biclusters.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SibError};
use crate::fit::{fit, FitConfig};
use crate::loss::{Evaluation, LossWeights};
use crate::model::{BiclusterResult, ModelParams, OutcomeSpec, StopReason, ViewMatrix};

const LOG_GUARD: f64 = 1e-300;

/// Which loss enters an information criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcLoss {
    /// Unaveraged negative log-likelihood of all views and the outcome.
    #[default]
    TotalNll,
    /// The averaged, `rho`-weighted smooth loss the fit minimizes.
    SmoothL0,
}

/// How the loss is turned into the likelihood term of the criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcForm {
    /// `-2 log L = 2 * loss`, reading the loss as a negative log-likelihood.
    #[default]
    Likelihood,
    /// `-2 log(loss)`, with the loss floored at a tiny positive value.
    LogLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcOptions {
    pub loss: IcLoss,
    pub form: IcForm,
    /// Supervision weight used when `loss` is [`IcLoss::SmoothL0`].
    pub rho: f64,
}

impl Default for IcOptions {
    fn default() -> Self {
        Self { loss: IcLoss::default(), form: IcForm::default(), rho: 0.5 }
    }
}

/// One information-criterion evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcScore {
    pub score: f64,
    /// Selected variables summed over views.
    pub q: usize,
    pub loss: f64,
    /// The log-loss form floored a non-positive loss.
    pub guard_hit: bool,
}

/// Parameters of a fit with the refit outcome coefficients swapped in.
fn final_params(result: &BiclusterResult) -> ModelParams {
    ModelParams { beta: result.beta_hat.clone(), ..result.params.clone() }
}

/// The loss value an information criterion is built on.
pub fn criterion_loss(
    result: &BiclusterResult,
    views: &[ViewMatrix],
    outcome: &OutcomeSpec,
    options: &IcOptions,
) -> Result<f64> {
    let params = final_params(result);
    params.check_dims(views, outcome.n_covariates())?;
    let eval = Evaluation::compute(views, Some(outcome), &params);
    if !eval.is_finite() {
        return Err(SibError::numerical(result.iterations, "information criterion", "non-finite likelihood"));
    }
    Ok(match options.loss {
        IcLoss::TotalNll => eval.nll_sum(),
        IcLoss::SmoothL0 => eval.smooth(views, options.rho),
    })
}

fn likelihood_term(loss: f64, form: IcForm) -> (f64, bool) {
    match form {
        IcForm::Likelihood => (2.0 * loss, false),
        IcForm::LogLoss => {
            let guard_hit = !(loss > LOG_GUARD);
            (-2.0 * loss.max(LOG_GUARD).ln(), guard_hit)
        }
    }
}

/// `q log n` plus the likelihood term.
pub fn bic(result: &BiclusterResult, views: &[ViewMatrix], outcome: &OutcomeSpec, options: &IcOptions) -> Result<IcScore> {
    ebic(result, views, outcome, 0.0, options)
}

/// BIC plus `2 sigma sum_d q log p_d`, with the global `q` in every term.
pub fn ebic(
    result: &BiclusterResult,
    views: &[ViewMatrix],
    outcome: &OutcomeSpec,
    sigma: f64,
    options: &IcOptions,
) -> Result<IcScore> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(SibError::Config(format!("eBIC sigma must lie in [0, 1], got {sigma}")));
    }
    let loss = criterion_loss(result, views, outcome, options)?;
    let q = result.selected_variables();
    let n_vars: Vec<usize> = views.iter().map(ViewMatrix::n_vars).collect();
    Ok(score_from_parts(q, outcome.len(), &n_vars, loss, sigma, options.form))
}

/// Criterion arithmetic on precomputed ingredients.
pub fn score_from_parts(q: usize, n: usize, n_vars: &[usize], loss: f64, sigma: f64, form: IcForm) -> IcScore {
    let (lik, guard_hit) = likelihood_term(loss, form);
    let qf = q as f64;
    let mut score = qf * (n as f64).ln() + lik;
    if sigma != 0.0 {
        score += 2.0 * sigma * n_vars.iter().map(|&p| qf * (p as f64).ln()).sum::<f64>();
    }
    IcScore { score, q, loss, guard_hit }
}

/// Candidate penalties and scoring rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Candidate penalties for each view.
    pub lambda_grid: Vec<Vec<f64>>,
    /// One penalty per view; otherwise each component draws its own.
    pub shared_lambda: bool,
    pub sigma_ebic: f64,
    pub use_ebic: bool,
    pub ic: IcOptions,
    pub max_draws: usize,
    /// Inclusive range of K to scan.
    pub k_range: (usize, usize),
}

impl SearchSpace {
    pub fn new(lambda_grid: Vec<Vec<f64>>, k_range: (usize, usize)) -> Self {
        Self {
            lambda_grid,
            shared_lambda: true,
            sigma_ebic: 0.0,
            use_ebic: false,
            ic: IcOptions::default(),
            max_draws: 60,
            k_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(Vec::is_empty) {
            return Err(SibError::Config("every view needs a non-empty penalty grid".into()));
        }
        if self.lambda_grid.iter().flatten().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(SibError::Config("penalty grids must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.sigma_ebic) {
            return Err(SibError::Config(format!("eBIC sigma must lie in [0, 1], got {}", self.sigma_ebic)));
        }
        if self.max_draws == 0 {
            return Err(SibError::Config("max_draws must be positive".into()));
        }
        let (lo, hi) = self.k_range;
        if lo == 0 || lo > hi {
            return Err(SibError::Config(format!("invalid K range {lo}..={hi}")));
        }
        Ok(())
    }

    /// Grid axes in mixed-radix order: views, then (unshared) components.
    fn axes(&self, k: usize) -> Vec<&[f64]> {
        if self.shared_lambda {
            self.lambda_grid.iter().map(Vec::as_slice).collect()
        } else {
            self.lambda_grid.iter().flat_map(|g| std::iter::repeat_n(g.as_slice(), k)).collect()
        }
    }

    /// Number of distinct candidates at `k` components.
    pub fn size(&self, k: usize) -> Result<usize> {
        self.axes(k)
            .iter()
            .try_fold(1usize, |acc, g| acc.checked_mul(g.len()))
            .ok_or_else(|| SibError::Config("penalty search space is too large to index".into()))
    }

    /// Penalties `[view][component]` of candidate `index`.
    pub fn candidate(&self, index: usize, k: usize) -> Vec<Vec<f64>> {
        let axes = self.axes(k);
        let mut rest = index;
        let mut picks = Vec::with_capacity(axes.len());
        for g in axes.iter().rev() {
            picks.push(g[rest % g.len()]);
            rest /= g.len();
        }
        picks.reverse();
        if self.shared_lambda {
            picks.iter().map(|&l| vec![l; k]).collect()
        } else {
            picks.chunks(k).map(<[f64]>::to_vec).collect()
        }
    }
}

/// One row of the search table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    /// Position in the draw sequence.
    pub draw: usize,
    /// Mixed-radix index into the grid.
    pub index: usize,
    pub lambdas: Vec<Vec<f64>>,
    pub ic: Option<IcScore>,
    pub stop_reason: Option<StopReason>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best_config: FitConfig,
    pub best_result: BiclusterResult,
    pub best_draw: usize,
    pub table: Vec<CandidateScore>,
}

/// Fits `min(|grid|, max_draws)` distinct candidates drawn uniformly without
/// replacement and keeps the lowest criterion. Ties go to fewer selected
/// variables, then to the earlier draw. Candidates that stopped on an empty
/// component only win when every candidate did.
pub fn random_search<R: Rng + ?Sized>(
    views: &[ViewMatrix],
    outcome: &OutcomeSpec,
    base: &FitConfig,
    space: &SearchSpace,
    rng: &mut R,
) -> Result<SearchOutcome> {
    space.validate()?;
    if space.lambda_grid.len() != views.len() {
        return Err(SibError::Config(format!(
            "penalty grids given for {} views, data has {}",
            space.lambda_grid.len(),
            views.len()
        )));
    }
    let k = base.k;
    let size = space.size(k)?;
    let draws = size.min(space.max_draws);
    let indices = index::sample(rng, size, draws).into_vec();

    let sigma = if space.use_ebic { space.sigma_ebic } else { 0.0 };
    let ic = IcOptions { rho: base.weights.rho(), ..space.ic };
    let runs: Vec<(CandidateScore, Option<(FitConfig, BiclusterResult)>)> = indices
        .par_iter()
        .enumerate()
        .map(|(draw, &idx)| {
            let lambdas = space.candidate(idx, k);
            let attempt = LossWeights::new(base.weights.rho(), lambdas.clone()).and_then(|weights| {
                let cfg = FitConfig { weights, ..base.clone() };
                let result = fit(views, outcome, &cfg)?;
                let score = ebic(&result, views, outcome, sigma, &ic)?;
                Ok((cfg, result, score))
            });
            match attempt {
                Ok((cfg, result, score)) => (
                    CandidateScore {
                        draw,
                        index: idx,
                        lambdas,
                        ic: Some(score),
                        stop_reason: Some(result.stop_reason),
                        error: None,
                    },
                    Some((cfg, result)),
                ),
                Err(e) => (
                    CandidateScore { draw, index: idx, lambdas, ic: None, stop_reason: None, error: Some(e.to_string()) },
                    None,
                ),
            }
        })
        .collect();

    let scored: Vec<usize> = runs
        .iter()
        .enumerate()
        .filter(|(_, (row, _))| row.ic.is_some_and(|s| !s.score.is_nan()))
        .map(|(i, _)| i)
        .collect();
    if scored.is_empty() {
        let detail = runs
            .iter()
            .map(|(row, _)| format!("draw {}: {}", row.draw, row.error.as_deref().unwrap_or("unscored")))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(SibError::SearchFailure(detail));
    }
    let non_empty: Vec<usize> = scored
        .iter()
        .copied()
        .filter(|&i| runs[i].0.stop_reason != Some(StopReason::EmptyComponent))
        .collect();
    let pool = if non_empty.is_empty() { scored } else { non_empty };
    let best = *pool
        .iter()
        .min_by(|&&a, &&b| {
            let sa = runs[a].0.ic.expect("scored");
            let sb = runs[b].0.ic.expect("scored");
            sa.score.total_cmp(&sb.score).then(sa.q.cmp(&sb.q)).then(a.cmp(&b))
        })
        .expect("non-empty pool");

    let mut table = Vec::with_capacity(runs.len());
    let mut winner = None;
    for (i, (row, fitted)) in runs.into_iter().enumerate() {
        if i == best {
            winner = fitted;
        }
        table.push(row);
    }
    let (best_config, best_result) = winner.expect("winner was scored");
    Ok(SearchOutcome { best_config, best_result, best_draw: best, table })
}

/// Search results at one K.
#[derive(Debug, Clone)]
pub struct KFit {
    pub k: usize,
    pub outcome: std::result::Result<SearchOutcome, SibError>,
    pub empty: bool,
}

#[derive(Debug, Clone)]
pub struct KSelection {
    pub k_hat: usize,
    /// True when the range was a single K supplied by the user.
    pub user_fixed: bool,
    pub per_k: Vec<KFit>,
}

impl KSelection {
    /// The search outcome at the selected K.
    pub fn chosen(&self) -> &SearchOutcome {
        self.per_k
            .iter()
            .find(|f| f.k == self.k_hat)
            .and_then(|f| f.outcome.as_ref().ok())
            .expect("selected K has a successful search")
    }
}

/// Whether a fit counts as producing an empty bicluster.
pub fn is_empty_fit(result: &BiclusterResult) -> bool {
    result.stop_reason == StopReason::EmptyComponent || result.has_empty_bicluster()
}

/// Seed for the penalty search at `k`.
fn k_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64)
}

/// Scans K upward from the lower bound, running a penalty search at each,
/// and returns the largest K before the first one that yields an empty
/// bicluster.
pub fn select_k(views: &[ViewMatrix], outcome: &OutcomeSpec, base: &FitConfig, space: &SearchSpace) -> Result<KSelection> {
    space.validate()?;
    let (lo, hi) = space.k_range;
    let run = |k: usize| -> std::result::Result<SearchOutcome, SibError> {
        let weights = LossWeights::shared(base.weights.rho(), &vec![0.0; views.len()], k)?;
        let cfg = FitConfig { k, weights, ..base.clone() };
        let mut rng = ChaCha8Rng::seed_from_u64(k_seed(base.seed, k));
        random_search(views, outcome, &cfg, space, &mut rng)
    };

    if lo == hi {
        let outcome = run(lo)?;
        let empty = is_empty_fit(&outcome.best_result);
        return Ok(KSelection { k_hat: lo, user_fixed: true, per_k: vec![KFit { k: lo, outcome: Ok(outcome), empty }] });
    }

    let mut per_k = Vec::new();
    let mut k_hat = None;
    for k in lo..=hi {
        let outcome = match run(k) {
            Err(e @ SibError::Config(_)) => return Err(e),
            other => other,
        };
        let empty = outcome.as_ref().map_or(true, |o| is_empty_fit(&o.best_result));
        per_k.push(KFit { k, outcome, empty });
        if empty {
            break;
        }
        k_hat = Some(k);
    }
    match k_hat {
        Some(k_hat) => Ok(KSelection { k_hat, user_fixed: false, per_k }),
        None => Err(SibError::Selection(format!(
            "K = {lo} already yields an empty bicluster; try smaller penalties"
        ))),
    }
}
