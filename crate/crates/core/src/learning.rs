//! Maximum-likelihood estimation of the mode transition matrix.
//!
//! The marginal likelihood of a sequence factors into one-step predictive
//! densities, each of which is the total unnormalized weight of the
//! children generated by one filter-bank step. Free transition
//! probabilities are parameterized per column by a softmax over logits, and
//! the log-likelihood is maximized with BFGS on finite-difference
//! gradients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eskf::GaussianBelief;
use crate::error::{Error, Result};
use crate::filterbank::{FilterBank, DEFAULT_MAX_LEAVES};
use crate::models::{Entry, ModeIndex, MotionModel, TransitionMatrix};
use crate::strapdown::{ImuSample, NoiseConfig};

/// One recorded sequence with the belief and mode prior it starts from.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub samples: Vec<ImuSample>,
    pub prior: GaussianBelief,
    pub mode_prior: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnConfig {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Stop once an iteration improves the log-likelihood by less than this.
    #[serde(default = "default_tol")]
    pub tol_loglik: f64,
    #[serde(default = "default_leaves")]
    pub max_leaves: Option<usize>,
    /// Finite-difference step in logit space. The pruned likelihood is only
    /// piecewise smooth, so this is kept well above rounding level.
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Smallest logit step the line search will try before declaring the
    /// point stationary.
    #[serde(default = "default_min_step")]
    pub min_step: f64,
}

fn default_max_iter() -> usize {
    50
}

fn default_tol() -> f64 {
    1e-4
}

fn default_leaves() -> Option<usize> {
    Some(DEFAULT_MAX_LEAVES)
}

fn default_fd_step() -> f64 {
    0.05
}

fn default_min_step() -> f64 {
    0.01
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            max_iter: default_max_iter(),
            tol_loglik: default_tol(),
            max_leaves: default_leaves(),
            fd_step: default_fd_step(),
            min_step: default_min_step(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnReport {
    pub transition: TransitionMatrix,
    /// Log-likelihood at the initial point and after each accepted step.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Percentage of samples whose most probable mode is each mode, from a
    /// filter-bank pass under the learned matrix.
    pub occupancy: Vec<f64>,
    /// Number of likelihood evaluations.
    pub evaluations: usize,
}

/// `Σ_n log p(y_n | y_{1:n-1})` over all sequences, excluding the first
/// sample of each (whose density does not depend on the transition matrix).
pub fn log_marginal_likelihood(
    data: &[Sequence],
    model: &MotionModel,
    noise: &NoiseConfig,
    max_leaves: Option<usize>,
) -> Result<f64> {
    let mut total = 0.0;
    for seq in data {
        let mut bank = FilterBank::new(model.clone(), *noise, seq.prior.clone(), &seq.mode_prior, max_leaves)?;
        for (k, u) in seq.samples.iter().enumerate() {
            let step = bank.step(u).map_err(|e| e.at_sample(k))?;
            if k == 0 {
                continue;
            }
            if !step.log_likelihood.is_finite() {
                return Err(Error::NonFinite(format!("predictive density at sample {k}")));
            }
            total += step.log_likelihood;
        }
    }
    Ok(total)
}

/// Percentage of samples whose most probable mode is each mode.
pub fn mode_occupancy(
    data: &[Sequence],
    model: &MotionModel,
    noise: &NoiseConfig,
    max_leaves: Option<usize>,
) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; model.num_modes()];
    for seq in data {
        let mut bank = FilterBank::new(model.clone(), *noise, seq.prior.clone(), &seq.mode_prior, max_leaves)?;
        for (k, u) in seq.samples.iter().enumerate() {
            bank.step(u).map_err(|e| e.at_sample(k))?;
            let p = bank.mode_posterior();
            counts[crate::filterbank::argmax_mode(&p).zero_based()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    Ok(counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 })
        .collect())
}

/// Softmax coordinates of the columns of a transition matrix that have at
/// least two free entries. The first free entry of each column has its
/// logit fixed at zero.
#[derive(Clone, Debug)]
pub struct SimplexMap {
    base: TransitionMatrix,
    columns: Vec<(usize, Vec<usize>)>,
}

impl SimplexMap {
    pub fn new(base: &TransitionMatrix) -> Result<Self> {
        let n = base.num_modes();
        let mut columns = Vec::new();
        for j in 0..n {
            let free = base.free_rows(ModeIndex::from_zero_based(j));
            if free.len() >= 2 {
                for &i in &free {
                    let p = base.get(ModeIndex::from_zero_based(i), ModeIndex::from_zero_based(j));
                    if !(p > 0.0) {
                        return Err(Error::Config(format!(
                            "free entry ({}, {}) of the initial matrix must be positive",
                            i + 1,
                            j + 1
                        )));
                    }
                }
                columns.push((j, free));
            }
        }
        if columns.is_empty() {
            return Err(Error::Config("transition matrix has no learnable column".into()));
        }
        Ok(SimplexMap {
            base: base.clone(),
            columns,
        })
    }

    pub fn dim(&self) -> usize {
        self.columns.iter().map(|(_, free)| free.len() - 1).sum()
    }

    pub fn to_logits(&self, pi: &TransitionMatrix) -> DVector<f64> {
        let mut theta = Vec::with_capacity(self.dim());
        for (j, free) in &self.columns {
            let col = ModeIndex::from_zero_based(*j);
            let anchor = pi.get(ModeIndex::from_zero_based(free[0]), col);
            for &i in &free[1..] {
                theta.push((pi.get(ModeIndex::from_zero_based(i), col) / anchor).ln());
            }
        }
        DVector::from_vec(theta)
    }

    pub fn from_logits(&self, theta: &DVector<f64>) -> Result<TransitionMatrix> {
        let mut rows = self.base.rows();
        let mut k = 0;
        for (j, free) in &self.columns {
            let logits: Vec<f64> = std::iter::once(0.0).chain(free[1..].iter().map(|_| {
                k += 1;
                theta[k - 1]
            }))
            .collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = logits.iter().map(|a| (a - max).exp()).collect();
            let sum: f64 = exp.iter().sum();
            let mass: f64 = 1.0
                - (0..rows.len())
                    .filter(|i| !free.contains(i))
                    .map(|i| rows[i][*j])
                    .sum::<f64>();
            for (&i, e) in free.iter().zip(&exp) {
                rows[i][*j] = mass * e / sum;
            }
        }
        if !rows.iter().flatten().all(|p| p.is_finite()) {
            return Err(Error::NonFinite("transition logits".into()));
        }
        self.base.with_values(&rows)
    }
}

/// Fits the free entries of the model's transition matrix to `data`,
/// starting from `pi_init`.
pub fn learn_transition_matrix(
    data: &[Sequence],
    model: &MotionModel,
    noise: &NoiseConfig,
    pi_init: &TransitionMatrix,
    cfg: &LearnConfig,
) -> Result<LearnReport> {
    let structure = model.transition().structure_rows();
    for (i, row) in pi_init.structure_rows().iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            if *e != structure[i][j] {
                return Err(Error::Config(format!(
                    "initial matrix entry ({}, {}) is {e:?}, the model requires {:?}",
                    i + 1,
                    j + 1,
                    structure[i][j]
                )));
            }
        }
    }
    let init_model = model.with_transition(pi_init.clone())?;
    if !(cfg.tol_loglik > 0.0 && cfg.fd_step > 0.0 && cfg.min_step > 0.0) {
        return Err(Error::Config("tolerance, finite-difference step and minimum step must be positive".into()));
    }
    let map = SimplexMap::new(pi_init)?;
    let mut evaluations = 0;
    let mut objective = |theta: &DVector<f64>| -> Result<f64> {
        evaluations += 1;
        let pi = map.from_logits(theta)?;
        let m = init_model.with_transition(pi)?;
        log_marginal_likelihood(data, &m, noise, cfg.max_leaves)
    };

    let result = maximize(&mut objective, map.to_logits(pi_init), cfg)?;
    let transition = map.from_logits(&result.theta)?;
    let final_model = init_model.with_transition(transition.clone())?;
    let occupancy = mode_occupancy(data, &final_model, noise, cfg.max_leaves)?;
    Ok(LearnReport {
        transition,
        loglik_trace: result.trace,
        iterations: result.iterations,
        converged: result.converged,
        occupancy,
        evaluations,
    })
}

struct Maximum {
    theta: DVector<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Largest logit change allowed in one step.
const MAX_STEP: f64 = 4.0;

fn gradient(
    f: &mut dyn FnMut(&DVector<f64>) -> Result<f64>,
    x: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(&xp)? - f(&xm)?) / (2.0 * h);
    }
    Ok(g)
}

/// BFGS ascent. The line search backtracks on the sufficient-increase
/// condition and, when the full step is accepted, keeps doubling it while the
/// objective rises.
fn maximize(
    f: &mut dyn FnMut(&DVector<f64>) -> Result<f64>,
    start: DVector<f64>,
    cfg: &LearnConfig,
) -> Result<Maximum> {
    let n = start.len();
    let mut x = start;
    let mut fx = f(&x)?;
    let mut g = gradient(f, &x, cfg.fd_step)?;
    let mut inv_hessian: Option<DMatrix<f64>> = None;
    let mut trace = vec![fx];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        let h = inv_hessian.clone().unwrap_or_else(|| DMatrix::identity(n, n) / g.amax().max(1.0));
        let mut dir = &h * &g;
        if dir.dot(&g) <= 0.0 {
            inv_hessian = None;
            dir = &g / g.amax().max(1.0);
        }
        let largest = dir.amax();
        if largest > MAX_STEP {
            dir *= MAX_STEP / largest;
        }
        let slope = dir.dot(&g);

        let mut alpha = 1.0;
        let mut accepted = None;
        let min_alpha = cfg.min_step / dir.amax().max(f64::MIN_POSITIVE);
        while alpha >= min_alpha.min(1.0) {
            let trial = &x + alpha * &dir;
            let ft = f(&trial)?;
            if ft >= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        if alpha == 1.0 {
            // keep doubling while the objective keeps rising
            while let Some((_, best)) = accepted.as_ref() {
                let next = 2.0 * alpha;
                if next * dir.amax() > MAX_STEP {
                    break;
                }
                let trial = &x + next * &dir;
                let ft = f(&trial)?;
                if ft <= *best {
                    break;
                }
                alpha = next;
                accepted = Some((trial, ft));
            }
        }
        let Some((x_new, f_new)) = accepted else {
            if inv_hessian.take().is_some() {
                // retry along the gradient before giving up
                continue;
            }
            // no ascent along the gradient: stationary to within the
            // resolution of the line search
            converged = true;
            break;
        };
        iterations += 1;
        let gain = f_new - fx;
        let g_new = gradient(f, &x_new, cfg.fd_step)?;
        let s = &x_new - &x;
        let y = &g - &g_new;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let base = inv_hessian.take().unwrap_or_else(|| DMatrix::identity(n, n) * (sy / y.dot(&y)));
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &s * y.transpose();
            let right = &eye - rho * &y * s.transpose();
            inv_hessian = Some(&left * base * &right + rho * &s * s.transpose());
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);
        if gain < cfg.tol_loglik {
            converged = true;
            break;
        }
    }
    Ok(Maximum {
        theta: x,
        trace,
        iterations,
        converged,
    })
}

/// Free entries of the transition matrix, in row-major order.
pub fn free_entries(pi: &TransitionMatrix) -> Vec<((usize, usize), f64)> {
    let mut out = Vec::new();
    for (i, row) in pi.structure_rows().iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            if *e == Entry::Free {
                out.push(((i + 1, j + 1), pi.rows()[i][j]));
            }
        }
    }
    out
}
