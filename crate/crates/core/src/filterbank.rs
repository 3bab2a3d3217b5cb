//! Hypothesis-tree filter bank over motion-mode sequences.
//!
//! Each [`Branch`] is an error-state Kalman filter conditioned on one mode
//! sequence. Every sample, each branch spawns one child per admissible next
//! mode; the child's weight is the parent's weight times the transition
//! probability times the likelihood of the pseudo-measurement under the
//! child's mode. Weights are kept in the log domain and the tree is pruned
//! back to a fixed number of leaves, keeping the most probable ones.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::eskf::{update, GaussianBelief};
use crate::error::{Error, Result};
use crate::geometry::{euler_covariance, euler_from_rotmat, polar_project, EulerAngles, Mat3, Quaternion};
use crate::models::{ModeIndex, MotionModel};
use crate::strapdown::{ImuSample, NavState, NoiseConfig, ATT, AUX, POS, VEL};

pub const DEFAULT_MAX_LEAVES: usize = 9;

/// Length of the mode history kept on each branch.
pub const HISTORY_LEN: usize = 64;

/// Child log-weights below this (before normalization) count as underflow.
pub const LOG_WEIGHT_FLOOR: f64 = -700.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub belief: GaussianBelief,
    pub mode: ModeIndex,
    pub log_weight: f64,
    history: VecDeque<ModeIndex>,
}

impl Branch {
    pub fn new(belief: GaussianBelief, mode: ModeIndex, log_weight: f64) -> Self {
        Branch {
            belief,
            mode,
            log_weight,
            history: VecDeque::new(),
        }
    }

    /// Most recent modes of this branch's sequence, oldest first; the last
    /// entry is the current mode once the branch has processed a sample.
    pub fn history(&self) -> &VecDeque<ModeIndex> {
        &self.history
    }

    fn push_history(&mut self, mode: ModeIndex) {
        if self.history.len() == HISTORY_LEN {
            self.history.pop_front();
        }
        self.history.push_back(mode);
    }

    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// Output of one filter-bank step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSummary {
    /// `log p(y_k | y_{1:k-1})` summed over the children generated this step.
    pub log_likelihood: f64,
    /// Children generated before pruning.
    pub children: usize,
}

#[derive(Clone, Debug)]
pub struct FusedEstimate {
    /// Weighted mean position, velocity and height reference; attitude from
    /// the weighted rotation average.
    pub state: NavState,
    /// Covariance of the Euclidean sub-state `[r, v, (ξ)]`.
    pub cov: DMatrix<f64>,
    pub euler: EulerAngles,
    pub euler_cov: Mat3,
    pub mode_posterior: Vec<f64>,
    pub map_mode: ModeIndex,
}

#[derive(Clone, Debug)]
pub struct FilterBank {
    model: MotionModel,
    noise: NoiseConfig,
    branches: Vec<Branch>,
    max_leaves: Option<usize>,
    steps: usize,
    last_t: Option<f64>,
}

impl FilterBank {
    /// One branch per mode with nonzero prior probability. The first call
    /// to [`FilterBank::step`] conditions each initial branch on its own
    /// mode; later calls expand through the transition matrix.
    pub fn new(
        model: MotionModel,
        noise: NoiseConfig,
        prior: GaussianBelief,
        mode_prior: &[f64],
        max_leaves: Option<usize>,
    ) -> Result<Self> {
        if mode_prior.len() != model.num_modes() {
            return Err(Error::Config(format!(
                "mode prior has {} entries, model has {} modes",
                mode_prior.len(),
                model.num_modes()
            )));
        }
        if mode_prior.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("mode prior entries must lie in [0, 1]".into()));
        }
        let total: f64 = mode_prior.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mode prior sums to {total}, not 1")));
        }
        let branches = mode_prior
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| Branch::new(prior.clone(), ModeIndex::from_zero_based(i), p.ln()))
            .collect();
        Self::from_branches(model, noise, branches, max_leaves)
    }

    /// Bank built from explicit branches, e.g. for replaying a saved state.
    /// Weights are normalized; branches need not have processed a sample.
    pub fn from_branches(
        model: MotionModel,
        noise: NoiseConfig,
        mut branches: Vec<Branch>,
        max_leaves: Option<usize>,
    ) -> Result<Self> {
        noise.validate()?;
        if max_leaves == Some(0) {
            return Err(Error::Config("max_leaves must be positive".into()));
        }
        if branches.is_empty() {
            return Err(Error::Config("a filter bank needs at least one branch".into()));
        }
        let dim = model.error_dim();
        for b in &branches {
            model.check_mode(b.mode)?;
            if b.belief.dim() != dim || b.belief.mean.error_dim() != dim {
                return Err(Error::Config(format!(
                    "branch belief has dimension {}, model expects {dim}",
                    b.belief.dim()
                )));
            }
            if !b.log_weight.is_finite() {
                return Err(Error::Config("branch log-weight must be finite".into()));
            }
        }
        normalize(&mut branches)?;
        Ok(FilterBank {
            model,
            noise,
            branches,
            max_leaves,
            steps: 0,
            last_t: None,
        })
    }

    pub fn model(&self) -> &MotionModel {
        &self.model
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn max_leaves(&self) -> Option<usize> {
        self.max_leaves
    }

    pub fn step_count(&self) -> usize {
        self.steps
    }

    pub fn weights(&self) -> Vec<f64> {
        self.branches.iter().map(Branch::weight).collect()
    }

    /// Processes one IMU sample.
    pub fn step(&mut self, u: &ImuSample) -> Result<StepSummary> {
        let dt = self.noise.step_dt(self.last_t, u.t)?;
        let cfg = self.noise.with_dt(dt);
        let g = cfg.gravity();
        let first = self.steps == 0;

        let mut children = Vec::with_capacity(self.branches.len() * self.model.num_modes());
        for (index, parent) in self.branches.iter().enumerate() {
            let wrap = |e: Error| Error::InBranch {
                branch: index,
                mode: parent.mode,
                source: Box::new(e),
            };
            let predicted = self.model.predict(&parent.belief, parent.mode, u, &cfg).map_err(wrap)?;
            let next_modes: Vec<(ModeIndex, f64)> = if first {
                vec![(parent.mode, 0.0)]
            } else {
                self.model
                    .transition()
                    .successors(parent.mode)
                    .map(|(m, p)| (m, p.ln()))
                    .collect()
            };
            for (mode, log_prior) in next_modes {
                let constraint = self.model.constraint(mode, &predicted.mean, u, &g);
                let (belief, ll) = update(&predicted, &constraint).map_err(|e| Error::InBranch {
                    branch: index,
                    mode,
                    source: Box::new(e),
                })?;
                let mut child = Branch {
                    belief,
                    mode,
                    log_weight: parent.log_weight + log_prior + ll,
                    history: parent.history.clone(),
                };
                child.push_history(mode);
                children.push(child);
            }
        }

        let max = children.iter().map(|c| c.log_weight).fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() || max < LOG_WEIGHT_FLOOR {
            return Err(Error::AllBranchesDead { max_log_weight: max });
        }
        let log_likelihood = max + children.iter().map(|c| (c.log_weight - max).exp()).sum::<f64>().ln();
        let count = children.len();
        self.branches = children;
        normalize(&mut self.branches)?;
        self.prune();
        self.steps += 1;
        self.last_t = Some(u.t);
        Ok(StepSummary {
            log_likelihood,
            children: count,
        })
    }

    /// Keeps the `max_leaves` most probable branches and renormalizes.
    /// Ties are broken by lower mode, then by position in the bank.
    pub fn prune(&mut self) {
        let Some(limit) = self.max_leaves else { return };
        if self.branches.len() <= limit {
            return;
        }
        let mut order: Vec<usize> = (0..self.branches.len()).collect();
        order.sort_by(|&a, &b| {
            let (x, y) = (&self.branches[a], &self.branches[b]);
            y.log_weight
                .total_cmp(&x.log_weight)
                .then(x.mode.cmp(&y.mode))
                .then(a.cmp(&b))
        });
        let mut keep = vec![false; self.branches.len()];
        for &i in order.iter().take(limit) {
            keep[i] = true;
        }
        let mut k = 0;
        self.branches.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        normalize(&mut self.branches).expect("surviving branches have finite weights");
    }

    /// Posterior probability of each mode at the current sample.
    pub fn mode_posterior(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.model.num_modes()];
        for b in &self.branches {
            p[b.mode.zero_based()] += b.weight();
        }
        p
    }

    /// Gaussian-mixture fusion of the branches.
    pub fn fuse(&self) -> Result<FusedEstimate> {
        let weights = self.weights();
        let dim = self.model.error_dim();
        let euclid: Vec<usize> = euclidean_indices(dim);
        let m = euclid.len();

        let means: Vec<Vec<f64>> = self.branches.iter().map(|b| euclidean_mean(&b.belief.mean)).collect();
        let mut mean = vec![0.0; m];
        for (w, x) in weights.iter().zip(&means) {
            for k in 0..m {
                mean[k] += w * x[k];
            }
        }
        let mut cov = DMatrix::zeros(m, m);
        for ((w, x), b) in weights.iter().zip(&means).zip(&self.branches) {
            for i in 0..m {
                for j in 0..m {
                    let d = (x[i] - mean[i]) * (x[j] - mean[j]);
                    cov[(i, j)] += w * (b.belief.cov[(euclid[i], euclid[j])] + d);
                }
            }
        }

        let mut chordal = Mat3::zeros();
        for (w, b) in weights.iter().zip(&self.branches) {
            chordal += *w * b.belief.mean.attitude.rotation_matrix().0;
        }
        let fused_rot = polar_project(&chordal)?;
        let euler = euler_from_rotmat(&fused_rot)?;

        let mut euler_cov = Mat3::zeros();
        for (w, b) in weights.iter().zip(&self.branches) {
            let c = b.belief.mean.attitude.rotation_matrix();
            let branch_euler = euler_from_rotmat(&c)?;
            let att_cov: Mat3 = b.belief.cov.fixed_view::<3, 3>(ATT, ATT).into_owned();
            let sigma = euler_covariance(&branch_euler, &att_cov)?;
            let delta = attitude_difference(&fused_rot.0, &c.0)?;
            euler_cov += *w * (sigma + delta * delta.transpose());
        }
        euler_cov = 0.5 * (euler_cov + euler_cov.transpose());

        let mode_posterior = self.mode_posterior();
        let map_mode = argmax_mode(&mode_posterior);
        let mut state = NavState::new(
            [mean[0], mean[1], mean[2]].into(),
            [mean[3], mean[4], mean[5]].into(),
            Quaternion::from_rotation_matrix(&fused_rot),
        );
        if dim > AUX {
            state.height_ref = Some(mean[6]);
        }
        Ok(FusedEstimate {
            state,
            cov,
            euler,
            euler_cov,
            mode_posterior,
            map_mode,
        })
    }
}

fn euclidean_indices(dim: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (POS..POS + 3).chain(VEL..VEL + 3).collect();
    if dim > AUX {
        idx.push(AUX);
    }
    idx
}

fn euclidean_mean(x: &NavState) -> Vec<f64> {
    let mut v: Vec<f64> = x.position.iter().chain(x.velocity.iter()).copied().collect();
    if let Some(h) = x.height_ref {
        v.push(h);
    }
    v
}

/// Euler angles of `fused · branchᵀ`, with yaw and roll wrapped to
/// `(-π, π]` so that small rotations give small angles.
pub fn attitude_difference(fused: &Mat3, branch: &Mat3) -> Result<nalgebra::Vector3<f64>> {
    let rel = crate::geometry::RotationMatrix(fused * branch.transpose());
    Ok(euler_from_rotmat(&rel)?.wrapped_signed())
}

/// Index of the largest entry; ties go to the lower mode.
pub fn argmax_mode(p: &[f64]) -> ModeIndex {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    ModeIndex::from_zero_based(best)
}

/// Log-domain normalization with a single max subtraction.
fn normalize(branches: &mut [Branch]) -> Result<()> {
    let max = branches.iter().map(|b| b.log_weight).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::AllBranchesDead { max_log_weight: max });
    }
    let log_sum = max + branches.iter().map(|b| (b.log_weight - max).exp()).sum::<f64>().ln();
    for b in branches.iter_mut() {
        b.log_weight -= log_sum;
    }
    Ok(())
}
