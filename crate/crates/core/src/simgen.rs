//! Synthetic multi-view data with planted biclusters.
//!
//! ```text
//! Psi_d = 1 mu_d^T + (U o W) S (V_d o Gamma_d)^T,   x ~ N(Psi_d, sigma2_x)
//! psi_y = W beta,                                   y ~ N(psi_y, sigma2_y) or Ber(sigmoid(psi_y))
//! ```
//!
//! The test split reuses `V`, `Gamma` and `mu` with freshly drawn `U` and `W`.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SibError};
use crate::expfam::{sigmoid, Family};
use crate::model::{OutcomeSpec, VariableMembers, ViewMatrix};

const MIN_GROUP_SIZE: usize = 2;
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    /// Test-split size; `None` means the same as `n`.
    pub n_test: Option<usize>,
    /// Variables per view.
    pub p: usize,
    pub n_views: usize,
    pub k: usize,
    /// Diagonal of `S`, one entry per bicluster.
    pub scales: Vec<f64>,
    pub important_frac: f64,
    pub sigma2_x: f64,
    pub sigma2_y: f64,
    pub outcome_family: Family,
    pub beta_true: Vec<f64>,
    pub seed: u64,
}

impl SimConfig {
    /// The reference design for the given outcome family.
    pub fn new(n: usize, p: usize, outcome_family: Family) -> Self {
        let beta_true = match outcome_family {
            Family::Bernoulli => vec![1.5, 0.0, -1.5],
            _ => vec![1.0, -1.0, -5.0],
        };
        Self {
            n,
            n_test: None,
            p,
            n_views: 2,
            k: 3,
            scales: vec![27.0, 15.0, 10.0],
            important_frac: 0.10,
            sigma2_x: 1.0,
            sigma2_y: 1.0,
            outcome_family,
            beta_true,
            seed: 0,
        }
    }

    /// Important variables per bicluster and view, `floor(frac * p)`.
    pub fn block_size(&self) -> usize {
        (self.important_frac * self.p as f64 + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_views == 0 || self.k == 0 || self.p == 0 {
            return Err(SibError::Config("views, biclusters and variables must be positive".into()));
        }
        let n_test = self.n_test.unwrap_or(self.n);
        if self.n.min(n_test) < MIN_GROUP_SIZE * self.k {
            return Err(SibError::Config(format!(
                "need at least {} samples per split for {} biclusters",
                MIN_GROUP_SIZE * self.k,
                self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.important_frac) {
            return Err(SibError::Config("important_frac must lie in [0, 1]".into()));
        }
        let l = self.block_size();
        if l == 0 || self.k * l > self.p {
            return Err(SibError::Config(format!(
                "{} biclusters of {l} important variables do not fit in {} variables",
                self.k, self.p
            )));
        }
        if self.scales.len() != self.k || self.beta_true.len() != self.k {
            return Err(SibError::Config(format!("scales and beta_true need {} entries", self.k)));
        }
        if !(self.sigma2_x >= 0.0 && self.sigma2_y >= 0.0) {
            return Err(SibError::Config("noise variances must be non-negative".into()));
        }
        match self.outcome_family {
            Family::Gaussian | Family::Bernoulli => Ok(()),
            f => Err(SibError::Config(format!("simulated outcomes must be gaussian or bernoulli, got {f}"))),
        }
    }
}

/// Planted structure of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    /// Zero-based bicluster of each sample.
    pub assignments: Vec<usize>,
    pub variable_members: VariableMembers,
}

#[derive(Debug, Clone)]
pub struct SimSplit {
    pub views: Vec<ViewMatrix>,
    pub outcome: OutcomeSpec,
    pub truth: Truth,
    pub u: Array2<f64>,
    pub w: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct SimBundle {
    pub train: SimSplit,
    pub test: SimSplit,
    pub gamma: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub mu: Vec<Array1<f64>>,
}

/// `p x k` indicator with `l` ones per column on disjoint, shuffled rows.
pub fn assign_gamma<R: Rng + ?Sized>(p: usize, k: usize, l: usize, rng: &mut R) -> Result<Array2<f64>> {
    if k * l > p {
        return Err(SibError::Config(format!("{k} columns of {l} ones do not fit in {p} rows")));
    }
    let mut rows: Vec<usize> = (0..p).collect();
    rows.shuffle(rng);
    let mut gamma = Array2::zeros((p, k));
    for c in 0..k {
        for &j in &rows[c * l..(c + 1) * l] {
            gamma[[j, c]] = 1.0;
        }
    }
    Ok(gamma)
}

/// Draws a full train/test bundle.
pub fn generate(config: &SimConfig) -> Result<SimBundle> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let l = config.block_size();
    let loading = Uniform::new(0.5, 1.0).expect("valid range");

    let gamma: Vec<Array2<f64>> = (0..config.n_views)
        .map(|_| assign_gamma(config.p, config.k, l, &mut rng))
        .collect::<Result<_>>()?;
    let v: Vec<Array2<f64>> = (0..config.n_views)
        .map(|_| Array2::from_shape_fn((config.p, config.k), |_| loading.sample(&mut rng)))
        .collect();
    let mu: Vec<Array1<f64>> = (0..config.n_views)
        .map(|_| Array1::from_shape_fn(config.p, |_| rng.sample::<f64, _>(rand_distr::StandardNormal)))
        .collect();

    let variable_members: VariableMembers = gamma
        .iter()
        .map(|g| {
            g.axis_iter(Axis(1))
                .map(|col| col.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(j, _)| j).collect())
                .collect()
        })
        .collect();
    let effective: Vec<Array2<f64>> = v
        .iter()
        .zip(&gamma)
        .map(|(vd, gd)| {
            let mut e = vd * gd;
            for (mut col, &s) in e.axis_iter_mut(Axis(1)).zip(&config.scales) {
                col *= s;
            }
            e
        })
        .collect();

    let train = draw_split(config, config.n, &effective, &mu, &variable_members, &mut rng)?;
    let test = draw_split(
        config,
        config.n_test.unwrap_or(config.n),
        &effective,
        &mu,
        &variable_members,
        &mut rng,
    )?;
    Ok(SimBundle { train, test, gamma, v, mu })
}

fn draw_split(
    config: &SimConfig,
    n: usize,
    effective: &[Array2<f64>],
    mu: &[Array1<f64>],
    variable_members: &VariableMembers,
    rng: &mut ChaCha8Rng,
) -> Result<SimSplit> {
    let k = config.k;
    let assignments = draw_groups(n, k, rng)?;
    let mut w = Array2::zeros((n, k));
    for (i, &g) in assignments.iter().enumerate() {
        w[[i, g]] = 1.0;
    }
    let loading = Uniform::new(0.5, 1.0).expect("valid range");
    let u = Array2::from_shape_fn((n, k), |_| loading.sample(rng));
    let scores = &u * &w;

    let sd_x = config.sigma2_x.sqrt();
    let views = effective
        .iter()
        .zip(mu)
        .enumerate()
        .map(|(d, (e, m))| {
            let mut x = scores.dot(&e.t());
            x += &m.view().insert_axis(Axis(0));
            if sd_x > 0.0 {
                let noise = Normal::new(0.0, sd_x).expect("finite sd");
                x.mapv_inplace(|psi| psi + noise.sample(rng));
            }
            ViewMatrix::new(format!("view{}", d + 1), x, Family::Gaussian)
        })
        .collect::<Result<Vec<_>>>()?;

    let beta = Array1::from(config.beta_true.clone());
    let psi_y = w.dot(&beta);
    let y = match config.outcome_family {
        Family::Bernoulli => draw_binary(&psi_y, &assignments, k, rng),
        _ => {
            let sd_y = config.sigma2_y.sqrt();
            if sd_y > 0.0 {
                let noise = Normal::new(0.0, sd_y).expect("finite sd");
                psi_y.mapv(|p| p + noise.sample(rng))
            } else {
                psi_y
            }
        }
    };
    let outcome = OutcomeSpec::new(y, config.outcome_family, None)?;
    Ok(SimSplit {
        views,
        outcome,
        truth: Truth { assignments, variable_members: variable_members.clone() },
        u,
        w,
    })
}

/// Uniform group labels, redrawn until every group has at least two members.
fn draw_groups(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    for _ in 0..MAX_REDRAWS {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut sizes = vec![0; k];
        labels.iter().for_each(|&g| sizes[g] += 1);
        if sizes.iter().all(|&s| s >= MIN_GROUP_SIZE) {
            return Ok(labels);
        }
    }
    Err(SibError::Config(format!("could not draw {k} groups of size {MIN_GROUP_SIZE} from {n} samples")))
}

/// Bernoulli outcomes, redrawn while some group lacks one of the classes.
fn draw_binary(psi: &Array1<f64>, groups: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let draw = |rng: &mut ChaCha8Rng| -> Array1<f64> {
        psi.mapv(|p| {
            let b = Bernoulli::new(sigmoid(p)).expect("probability in [0, 1]");
            if b.sample(rng) { 1.0 } else { 0.0 }
        })
    };
    let mut y = draw(rng);
    for _ in 0..MAX_REDRAWS {
        let mut ones = vec![0usize; k];
        let mut sizes = vec![0usize; k];
        for (&g, &v) in groups.iter().zip(&y) {
            sizes[g] += 1;
            ones[g] += v as usize;
        }
        if ones.iter().zip(&sizes).all(|(&o, &s)| o > 0 && o < s) {
            break;
        }
        y = draw(rng);
    }
    y
}
