//! Jump Markov motion models: mode sets, mode-conditioned pseudo-measurement
//! constraints, height-reference dynamics and the mode transition matrix.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eskf::{predict_linearized, Constraint, GaussianBelief};
use crate::error::{Error, Result};
use crate::geometry::{skew, Vec3};
use crate::strapdown::{
    error_transition, propagate, ImuSample, NavState, NoiseConfig, ATT, AUX, BASE_DIM, POS, VEL,
};

/// Rows of the zero-motion constraint `h0 = [v; ω; C(q)s + g]`.
pub const H0_ROWS: usize = 9;

/// One-based motion mode index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeIndex(usize);

impl ModeIndex {
    /// Mode from its one-based number. Panics on zero.
    pub fn new(mode: usize) -> Self {
        assert!(mode >= 1, "mode numbers start at 1");
        ModeIndex(mode)
    }

    pub fn from_zero_based(index: usize) -> Self {
        ModeIndex(index + 1)
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn zero_based(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Role of one entry of the transition matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Entry {
    /// Inadmissible transition, exactly zero.
    Zero,
    /// Unknown probability.
    Free,
    /// Known probability that is never learned.
    Pinned,
}

/// Column-stochastic mode transition matrix: entry `(i, j)` is the
/// probability of moving to mode `i + 1` from mode `j + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    size: usize,
    values: Vec<f64>,
    structure: Vec<Entry>,
}

/// Accepted deviation of a column sum from one before renormalization.
const COLUMN_SUM_TOL: f64 = 1e-6;

impl TransitionMatrix {
    /// Builds a matrix from rows and an explicit structure. Columns are
    /// renormalized to sum to one after validation.
    pub fn new(rows: &[Vec<f64>], structure: &[Vec<Entry>]) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::Config("transition matrix is empty".into()));
        }
        if rows.iter().any(|r| r.len() != size) || structure.len() != size || structure.iter().any(|r| r.len() != size) {
            return Err(Error::Config("transition matrix and structure must be square and equally sized".into()));
        }
        let mut values: Vec<f64> = rows.iter().flatten().copied().collect();
        let structure: Vec<Entry> = structure.iter().flatten().copied().collect();
        for (k, (&v, &e)) in values.iter().zip(&structure).enumerate() {
            let (i, j) = (k / size + 1, k % size + 1);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("transition probability ({i},{j}) = {v} is outside [0, 1]")));
            }
            if e == Entry::Zero && v != 0.0 {
                return Err(Error::Config(format!("transition ({i},{j}) is structurally zero but has value {v}")));
            }
        }
        for j in 0..size {
            let sum: f64 = (0..size).map(|i| values[i * size + j]).sum();
            if (sum - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(Error::Config(format!("transition column {} sums to {sum}, not 1", j + 1)));
            }
            for i in 0..size {
                values[i * size + j] /= sum;
            }
        }
        Ok(TransitionMatrix { size, values, structure })
    }

    /// Builds a matrix whose zero entries are structural and whose other
    /// entries are free.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let structure: Vec<Vec<Entry>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| if v == 0.0 { Entry::Zero } else { Entry::Free }).collect())
            .collect();
        Self::new(rows, &structure)
    }

    pub fn identity(size: usize) -> Self {
        let rows: Vec<Vec<f64>> = (0..size)
            .map(|i| (0..size).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::from_rows(&rows).expect("identity is column stochastic")
    }

    pub fn num_modes(&self) -> usize {
        self.size
    }

    /// Probability of moving to `next` from `current`.
    pub fn get(&self, next: ModeIndex, current: ModeIndex) -> f64 {
        self.values[next.zero_based() * self.size + current.zero_based()]
    }

    pub fn entry(&self, next: ModeIndex, current: ModeIndex) -> Entry {
        self.structure[next.zero_based() * self.size + current.zero_based()]
    }

    pub fn column(&self, current: ModeIndex) -> Vec<f64> {
        (0..self.size)
            .map(|i| self.values[i * self.size + current.zero_based()])
            .collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.size).map(|r| r.to_vec()).collect()
    }

    pub fn structure_rows(&self) -> Vec<Vec<Entry>> {
        self.structure.chunks(self.size).map(|r| r.to_vec()).collect()
    }

    /// Modes reachable from `current` with nonzero probability, ascending.
    pub fn successors(&self, current: ModeIndex) -> impl Iterator<Item = (ModeIndex, f64)> + '_ {
        (0..self.size).filter_map(move |i| {
            let p = self.values[i * self.size + current.zero_based()];
            (p > 0.0).then(|| (ModeIndex::from_zero_based(i), p))
        })
    }

    /// Same structure with new values; structural zeros and pinned entries
    /// must be reproduced exactly.
    pub fn with_values(&self, rows: &[Vec<f64>]) -> Result<Self> {
        let candidate = Self::new(rows, &self.structure_rows())?;
        self.check_compatible(&candidate)?;
        Ok(candidate)
    }

    /// Verifies that `other` honors this matrix's structural zeros and
    /// pinned entries.
    pub fn check_compatible(&self, other: &TransitionMatrix) -> Result<()> {
        if other.size != self.size {
            return Err(Error::Config(format!(
                "transition matrix has {} modes, model has {}",
                other.size, self.size
            )));
        }
        for k in 0..self.values.len() {
            let (i, j) = (k / self.size + 1, k % self.size + 1);
            match self.structure[k] {
                Entry::Zero if other.values[k] != 0.0 => {
                    return Err(Error::Config(format!(
                        "transition ({i},{j}) must be zero, got {}",
                        other.values[k]
                    )))
                }
                Entry::Pinned if (other.values[k] - self.values[k]).abs() > 1e-12 => {
                    return Err(Error::Config(format!(
                        "transition ({i},{j}) is pinned to {}, got {}",
                        self.values[k], other.values[k]
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Free entries of a column (zero-based rows).
    pub fn free_rows(&self, current: ModeIndex) -> Vec<usize> {
        (0..self.size)
            .filter(|&i| self.structure[i * self.size + current.zero_based()] == Entry::Free)
            .collect()
    }

    /// Long-run mode occupancy, by power iteration.
    pub fn stationary_distribution(&self) -> Vec<f64> {
        let n = self.size;
        let mut p = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let mut next = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    next[i] += self.values[i * n + j] * p[j];
                }
            }
            let change: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
            p = next;
            if change < 1e-15 {
                break;
            }
        }
        p
    }
}

/// Standard deviations of the zero-motion constraint rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroMotionNoise {
    /// Velocity (m/s).
    pub sigma_v: f64,
    /// Angular rate (rad/s).
    pub sigma_w: f64,
    /// Specific force residual `C(q)s + g` (m/s²).
    pub sigma_s: f64,
}

impl ZeroMotionNoise {
    pub const STATIONARY: ZeroMotionNoise = ZeroMotionNoise {
        sigma_v: 0.01,
        sigma_w: 0.05,
        sigma_s: 0.3,
    };

    pub const ALMOST_STATIONARY: ZeroMotionNoise = ZeroMotionNoise {
        sigma_v: 0.1,
        sigma_w: 0.5,
        sigma_s: 3.0,
    };

    fn validate(&self, what: &str) -> Result<()> {
        for (name, v) in [("sigma_v", self.sigma_v), ("sigma_w", self.sigma_w), ("sigma_s", self.sigma_s)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{what}.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `σ_v² I₃ ⊕ σ_ω² I₃ ⊕ σ_s² I₃`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(H0_ROWS, H0_ROWS);
        for k in 0..3 {
            r[(k, k)] = self.sigma_v * self.sigma_v;
            r[(3 + k, 3 + k)] = self.sigma_w * self.sigma_w;
            r[(6 + k, 6 + k)] = self.sigma_s * self.sigma_s;
        }
        r
    }
}

/// Constraint applied while in one mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModeConstraint {
    /// No constraint: `h = 0` with covariance `σ_nc² I`.
    Unconstrained,
    /// Zero velocity, angular rate and acceleration.
    ZeroMotion(ZeroMotionNoise),
    /// Zero motion at the height of the previous stationary period.
    ZeroMotionSameHeight { motion: ZeroMotionNoise, sigma_h: f64 },
}

impl ModeConstraint {
    pub fn is_unconstrained(&self) -> bool {
        matches!(self, ModeConstraint::Unconstrained)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    VaryingGait,
    SameHeight,
    Custom,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::VaryingGait => "varying-gait",
            ModelKind::SameHeight => "same-height",
            ModelKind::Custom => "custom",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaryingGaitParams {
    #[serde(default = "almost_stationary")]
    pub almost_stationary: ZeroMotionNoise,
    #[serde(default = "stationary")]
    pub stationary: ZeroMotionNoise,
    #[serde(default = "unit")]
    pub sigma_nc: f64,
    /// Rows of Π; the learned matrix of the reference walking/running
    /// experiment when omitted.
    #[serde(default)]
    pub transition: Option<Vec<Vec<f64>>>,
}

impl Default for VaryingGaitParams {
    fn default() -> Self {
        VaryingGaitParams {
            almost_stationary: ZeroMotionNoise::ALMOST_STATIONARY,
            stationary: ZeroMotionNoise::STATIONARY,
            sigma_nc: 1.0,
            transition: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SameHeightParams {
    #[serde(default = "stationary")]
    pub new_height: ZeroMotionNoise,
    #[serde(default = "stationary")]
    pub same_height: ZeroMotionNoise,
    #[serde(default = "default_sigma_h")]
    pub sigma_h: f64,
    #[serde(default = "unit")]
    pub sigma_nc: f64,
    #[serde(default)]
    pub transition: Option<Vec<Vec<f64>>>,
}

impl Default for SameHeightParams {
    fn default() -> Self {
        SameHeightParams {
            new_height: ZeroMotionNoise::STATIONARY,
            same_height: ZeroMotionNoise::STATIONARY,
            sigma_h: default_sigma_h(),
            sigma_nc: 1.0,
            transition: None,
        }
    }
}

fn almost_stationary() -> ZeroMotionNoise {
    ZeroMotionNoise::ALMOST_STATIONARY
}

fn stationary() -> ZeroMotionNoise {
    ZeroMotionNoise::STATIONARY
}

fn unit() -> f64 {
    1.0
}

fn default_sigma_h() -> f64 {
    0.01
}

/// Structure of the varying-gait-speed model: no direct transitions
/// between unconstrained motion and stationary.
pub fn varying_gait_structure() -> Vec<Vec<Entry>> {
    use Entry::*;
    vec![
        vec![Free, Free, Zero],
        vec![Free, Free, Free],
        vec![Zero, Free, Free],
    ]
}

/// Structure of the return-to-same-height model: a stationary-at-new-height
/// sample is always followed by stationary-at-same-height.
pub fn same_height_structure() -> Vec<Vec<Entry>> {
    use Entry::*;
    vec![
        vec![Free, Zero, Free],
        vec![Free, Zero, Zero],
        vec![Free, Pinned, Free],
    ]
}

/// Learned transition matrix reported for the walking/running data set.
pub fn varying_gait_reference_transition() -> Vec<Vec<f64>> {
    vec![
        vec![0.993, 0.073, 0.0],
        vec![0.007, 0.893, 0.005],
        vec![0.0, 0.034, 0.995],
    ]
}

/// Initial guess used when learning the varying-gait transition matrix.
pub fn varying_gait_initial_transition() -> Vec<Vec<f64>> {
    vec![
        vec![1.0 / 2.0, 1.0 / 3.0, 0.0],
        vec![1.0 / 2.0, 1.0 / 3.0, 1.0 / 2.0],
        vec![0.0, 1.0 / 3.0, 1.0 / 2.0],
    ]
}

/// Learned transition matrix reported for the flat-ground/stair data set.
pub fn same_height_reference_transition() -> Vec<Vec<f64>> {
    vec![
        vec![0.976, 0.0, 0.031],
        vec![0.003, 0.0, 0.0],
        vec![0.021, 1.0, 0.969],
    ]
}

pub fn same_height_initial_transition() -> Vec<Vec<f64>> {
    vec![
        vec![1.0 / 3.0, 0.0, 1.0 / 2.0],
        vec![1.0 / 3.0, 0.0, 0.0],
        vec![1.0 / 3.0, 1.0, 1.0 / 2.0],
    ]
}

/// Zero-motion constraint `h0 = [v; ω; C(q)s + g]` for a state with
/// `error_dim` error-state components. Returns the innovation `0 - h0(x̂)`
/// and the Jacobian with respect to the error state.
pub fn h0(x: &NavState, u: &ImuSample, g: &Vec3, error_dim: usize) -> (DVector<f64>, DMatrix<f64>) {
    let force_nav = x.attitude.rotation_matrix().rotate(&u.specific_force);
    let residual = force_nav + g;
    let mut z = DVector::zeros(H0_ROWS);
    for k in 0..3 {
        z[k] = -x.velocity[k];
        z[3 + k] = -u.angular_rate[k];
        z[6 + k] = -residual[k];
    }
    let mut h = DMatrix::zeros(H0_ROWS, error_dim);
    for k in 0..3 {
        h[(k, VEL + k)] = 1.0;
    }
    h.view_mut((6, ATT), (3, 3)).copy_from(&(-skew(&force_nav)));
    (z, h)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionModel {
    kind: ModelKind,
    modes: Vec<ModeConstraint>,
    transition: TransitionMatrix,
    sigma_nc: f64,
    unconstrained_rows: usize,
    height_ref: bool,
    noise: Vec<DMatrix<f64>>,
}

impl MotionModel {
    /// General constructor. `height_ref` adds the auxiliary height state,
    /// which holds its value in unconstrained modes and tracks the current
    /// height otherwise.
    pub fn custom(
        modes: Vec<ModeConstraint>,
        transition: TransitionMatrix,
        sigma_nc: f64,
        height_ref: bool,
    ) -> Result<Self> {
        Self::build(ModelKind::Custom, modes, transition, sigma_nc, height_ref)
    }

    fn build(
        kind: ModelKind,
        modes: Vec<ModeConstraint>,
        transition: TransitionMatrix,
        sigma_nc: f64,
        height_ref: bool,
    ) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Config("a motion model needs at least one mode".into()));
        }
        if transition.num_modes() != modes.len() {
            return Err(Error::Config(format!(
                "{} modes but a {}x{} transition matrix",
                modes.len(),
                transition.num_modes(),
                transition.num_modes()
            )));
        }
        if !(sigma_nc > 0.0 && sigma_nc.is_finite()) {
            return Err(Error::Config(format!("sigma_nc must be positive, got {sigma_nc}")));
        }
        for (k, m) in modes.iter().enumerate() {
            let name = format!("mode {}", k + 1);
            match m {
                ModeConstraint::Unconstrained => {}
                ModeConstraint::ZeroMotion(noise) => noise.validate(&name)?,
                ModeConstraint::ZeroMotionSameHeight { motion, sigma_h } => {
                    motion.validate(&name)?;
                    if !(*sigma_h > 0.0 && sigma_h.is_finite()) {
                        return Err(Error::Config(format!("{name}.sigma_h must be positive, got {sigma_h}")));
                    }
                    if !height_ref {
                        return Err(Error::Config(format!(
                            "{name} constrains height but the model has no height reference"
                        )));
                    }
                }
            }
        }
        let unconstrained_rows = H0_ROWS;
        let noise = modes
            .iter()
            .map(|m| match m {
                ModeConstraint::Unconstrained => {
                    DMatrix::identity(unconstrained_rows, unconstrained_rows) * (sigma_nc * sigma_nc)
                }
                ModeConstraint::ZeroMotion(n) => n.covariance(),
                ModeConstraint::ZeroMotionSameHeight { motion, sigma_h } => {
                    let mut r = DMatrix::zeros(H0_ROWS + 1, H0_ROWS + 1);
                    r.view_mut((0, 0), (H0_ROWS, H0_ROWS)).copy_from(&motion.covariance());
                    r[(H0_ROWS, H0_ROWS)] = sigma_h * sigma_h;
                    r
                }
            })
            .collect();
        Ok(MotionModel {
            kind,
            modes,
            transition,
            sigma_nc,
            unconstrained_rows,
            height_ref,
            noise,
        })
    }

    /// Three modes: unconstrained, almost stationary, stationary.
    pub fn varying_gait(params: &VaryingGaitParams) -> Result<Self> {
        let (a, s) = (&params.almost_stationary, &params.stationary);
        a.validate("almost_stationary")?;
        s.validate("stationary")?;
        if !(a.sigma_v > s.sigma_v && a.sigma_w > s.sigma_w && a.sigma_s > s.sigma_s) {
            return Err(Error::Config(
                "almost-stationary variances must exceed the stationary ones componentwise".into(),
            ));
        }
        let rows = params
            .transition
            .clone()
            .unwrap_or_else(varying_gait_reference_transition);
        let transition = TransitionMatrix::new(&rows, &varying_gait_structure())?;
        Self::build(
            ModelKind::VaryingGait,
            vec![
                ModeConstraint::Unconstrained,
                ModeConstraint::ZeroMotion(*a),
                ModeConstraint::ZeroMotion(*s),
            ],
            transition,
            params.sigma_nc,
            false,
        )
    }

    /// Three modes: unconstrained, stationary at a new height, stationary at
    /// the same height as the previous stationary period.
    pub fn same_height(params: &SameHeightParams) -> Result<Self> {
        let rows = params
            .transition
            .clone()
            .unwrap_or_else(same_height_reference_transition);
        let reference = TransitionMatrix::new(&same_height_reference_transition(), &same_height_structure())?;
        let transition = TransitionMatrix::new(&rows, &same_height_structure())?;
        reference.check_compatible(&transition)?;
        Self::build(
            ModelKind::SameHeight,
            vec![
                ModeConstraint::Unconstrained,
                ModeConstraint::ZeroMotion(params.new_height),
                ModeConstraint::ZeroMotionSameHeight {
                    motion: params.same_height,
                    sigma_h: params.sigma_h,
                },
            ],
            transition,
            params.sigma_nc,
            true,
        )
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> impl Iterator<Item = ModeIndex> {
        (1..=self.modes.len()).map(ModeIndex::new)
    }

    pub fn mode_constraint(&self, mode: ModeIndex) -> &ModeConstraint {
        &self.modes[mode.zero_based()]
    }

    pub fn has_height_ref(&self) -> bool {
        self.height_ref
    }

    pub fn error_dim(&self) -> usize {
        BASE_DIM + usize::from(self.height_ref)
    }

    pub fn sigma_nc(&self) -> f64 {
        self.sigma_nc
    }

    pub fn transition(&self) -> &TransitionMatrix {
        &self.transition
    }

    /// Same model with a different transition matrix of identical structure.
    pub fn with_transition(&self, transition: TransitionMatrix) -> Result<Self> {
        if transition.structure != self.transition.structure {
            return Err(Error::Config("transition matrix structure differs from the model's".into()));
        }
        self.transition.check_compatible(&transition)?;
        Ok(MotionModel {
            transition,
            ..self.clone()
        })
    }

    /// Constraint covariance `R(δ)`.
    pub fn noise(&self, mode: ModeIndex) -> &DMatrix<f64> {
        &self.noise[mode.zero_based()]
    }

    pub fn check_mode(&self, mode: ModeIndex) -> Result<()> {
        if mode.get() > self.modes.len() {
            return Err(Error::Config(format!("mode {mode} is outside 1..={}", self.modes.len())));
        }
        Ok(())
    }

    /// Pseudo-measurement for `mode` linearized about `x`.
    pub fn constraint(&self, mode: ModeIndex, x: &NavState, u: &ImuSample, g: &Vec3) -> Constraint {
        let n = x.error_dim();
        let noise = self.noise(mode).clone();
        let (innovation, jacobian) = match self.mode_constraint(mode) {
            ModeConstraint::Unconstrained => (
                DVector::zeros(self.unconstrained_rows),
                DMatrix::zeros(self.unconstrained_rows, n),
            ),
            ModeConstraint::ZeroMotion(_) => h0(x, u, g, n),
            ModeConstraint::ZeroMotionSameHeight { .. } => {
                let (z0, h0m) = h0(x, u, g, n);
                let reference = x.height_ref.unwrap_or(x.position.z);
                let mut z = DVector::zeros(H0_ROWS + 1);
                z.rows_mut(0, H0_ROWS).copy_from(&z0);
                z[H0_ROWS] = -(x.position.z - reference);
                let mut h = DMatrix::zeros(H0_ROWS + 1, n);
                h.view_mut((0, 0), (H0_ROWS, n)).copy_from(&h0m);
                h[(H0_ROWS, POS + 2)] = 1.0;
                if n > AUX {
                    h[(H0_ROWS, AUX)] = -1.0;
                }
                (z, h)
            }
        };
        Constraint {
            innovation,
            jacobian,
            noise,
        }
    }

    /// Mechanization and linearization for one step taken while in `mode`,
    /// including the height-reference dynamics
    /// `ξ' = ξ` when unconstrained and `ξ' = r_z` otherwise.
    pub fn transition_linearization(
        &self,
        mode: ModeIndex,
        x: &NavState,
        u: &ImuSample,
        cfg: &NoiseConfig,
    ) -> (NavState, DMatrix<f64>, DMatrix<f64>) {
        let (mut f, q) = error_transition(x, u, cfg);
        let mut next = propagate(x, u, cfg);
        if self.height_ref && x.height_ref.is_some() && !self.mode_constraint(mode).is_unconstrained() {
            next.height_ref = Some(x.position.z);
            f.row_mut(AUX).fill(0.0);
            f[(AUX, POS + 2)] = 1.0;
        }
        (next, f, q)
    }

    /// Time update of a belief whose current mode is `mode`.
    pub fn predict(
        &self,
        b: &GaussianBelief,
        mode: ModeIndex,
        u: &ImuSample,
        cfg: &NoiseConfig,
    ) -> Result<GaussianBelief> {
        let (mean, f, q) = self.transition_linearization(mode, &b.mean, u, cfg);
        predict_linearized(b, mean, &f, &q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eskf::update;
    use crate::geometry::{quat_from_euler, EulerAngles, Quaternion};
    use approx::assert_relative_eq;

    fn gravity() -> Vec3 {
        NoiseConfig::default().gravity()
    }

    fn at_rest(g: &Vec3) -> ImuSample {
        ImuSample::new(0.0, -g, Vec3::zeros())
    }

    #[test]
    fn h0_vanishes_for_a_resting_level_foot() {
        let g = gravity();
        let (z, _) = h0(&NavState::default(), &at_rest(&g), &g, 9);
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn h0_velocity_innovation() {
        let g = gravity();
        let mut x = NavState::default();
        x.velocity = Vec3::new(1.0, 0.0, 0.0);
        let (z, h) = h0(&x, &at_rest(&g), &g, 9);
        assert_eq!(z.rows(0, 3).as_slice(), &[-1.0, 0.0, 0.0]);
        assert!(h.rows(3, 3).iter().all(|&v| v == 0.0), "angular-rate rows carry no state coupling");
        for k in 0..3 {
            assert_eq!(h[(k, VEL + k)], 1.0);
        }
    }

    #[test]
    fn h0_force_block_matches_finite_differences() {
        let g = gravity();
        let x = NavState::new(
            Vec3::zeros(),
            Vec3::zeros(),
            quat_from_euler(&EulerAngles::new(0.4, 0.3, 0.2)),
        );
        let u = ImuSample::new(0.0, Vec3::new(1.5, -0.7, 10.2), Vec3::new(0.1, 0.0, 0.2));
        let (_, h) = h0(&x, &u, &g, 9);
        let eps = 1e-6;
        for k in 0..3 {
            let mut d = Vec3::zeros();
            d[k] = eps;
            let f = |q: Quaternion| q.rotation_matrix().rotate(&u.specific_force) + g;
            let col = (f(x.attitude.perturb_nav(&d)) - f(x.attitude.perturb_nav(&-d))) / (2.0 * eps);
            for r in 0..3 {
                assert_relative_eq!(h[(6 + r, ATT + k)], col[r], epsilon = 1e-5, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn varying_gait_structure_has_no_direct_motion_stationary_edges() {
        let m = MotionModel::varying_gait(&VaryingGaitParams::default()).unwrap();
        let t = m.transition();
        let (one, three) = (ModeIndex::new(1), ModeIndex::new(3));
        assert_eq!(t.get(three, one), 0.0);
        assert_eq!(t.get(one, three), 0.0);
        assert_eq!(t.entry(three, one), Entry::Zero);
        // seven admissible edges
        let edges = varying_gait_structure().iter().flatten().filter(|e| **e != Entry::Zero).count();
        assert_eq!(edges, 7);
        assert_eq!(m.error_dim(), 9);
        assert!(!m.has_height_ref());
    }

    #[test]
    fn stationary_noise_is_a_direct_sum() {
        let m = MotionModel::varying_gait(&VaryingGaitParams::default()).unwrap();
        let r = m.noise(ModeIndex::new(3));
        let s = ZeroMotionNoise::STATIONARY;
        for i in 0..9 {
            for j in 0..9 {
                let expected = if i != j {
                    0.0
                } else if i < 3 {
                    s.sigma_v.powi(2)
                } else if i < 6 {
                    s.sigma_w.powi(2)
                } else {
                    s.sigma_s.powi(2)
                };
                assert_eq!(r[(i, j)], expected, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn unconstrained_mode_constraint() {
        let m = MotionModel::varying_gait(&VaryingGaitParams::default()).unwrap();
        let g = gravity();
        let mut x = NavState::default();
        x.velocity = Vec3::new(3.0, 1.0, 0.0);
        let c = m.constraint(ModeIndex::new(1), &x, &at_rest(&g), &g);
        assert_eq!(c.jacobian, DMatrix::zeros(9, 9));
        assert_eq!(c.innovation, DVector::zeros(9));
        assert_eq!(c.noise, DMatrix::identity(9, 9) * m.sigma_nc().powi(2));
    }

    #[test]
    fn ordering_and_positivity_are_enforced() {
        let mut p = VaryingGaitParams::default();
        p.almost_stationary.sigma_w = 0.01;
        assert!(matches!(MotionModel::varying_gait(&p), Err(Error::Config(_))));
        let mut p = VaryingGaitParams::default();
        p.stationary.sigma_v = 0.0;
        assert!(matches!(MotionModel::varying_gait(&p), Err(Error::Config(_))));
        let mut p = SameHeightParams::default();
        p.sigma_h = -1.0;
        assert!(matches!(MotionModel::same_height(&p), Err(Error::Config(_))));
        let p = VaryingGaitParams {
            transition: Some(vec![vec![0.9, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.0, 0.1, 0.8]]),
            ..VaryingGaitParams::default()
        };
        assert!(matches!(MotionModel::varying_gait(&p), Err(Error::Config(_))));
    }

    #[test]
    fn same_height_structure_pins_new_height_to_same_height() {
        let m = MotionModel::same_height(&SameHeightParams::default()).unwrap();
        assert_eq!(m.transition().column(ModeIndex::new(2)), vec![0.0, 0.0, 1.0]);
        assert_eq!(m.transition().entry(ModeIndex::new(3), ModeIndex::new(2)), Entry::Pinned);
        assert_eq!(m.error_dim(), 10);
        let bad = vec![vec![0.976, 0.1, 0.031], vec![0.003, 0.0, 0.0], vec![0.021, 0.9, 0.969]];
        let p = SameHeightParams {
            transition: Some(bad),
            ..SameHeightParams::default()
        };
        assert!(MotionModel::same_height(&p).is_err());
    }

    #[test]
    fn same_height_noise_blocks() {
        let m = MotionModel::same_height(&SameHeightParams::default()).unwrap();
        assert_eq!(m.noise(ModeIndex::new(2)).nrows(), 9);
        let r = m.noise(ModeIndex::new(3));
        assert_eq!(r.nrows(), 10);
        assert_eq!(r[(9, 9)], 0.01f64.powi(2));
        assert!(r.row(9).iter().take(9).all(|&v| v == 0.0));
    }

    #[test]
    fn height_innovation() {
        let m = MotionModel::same_height(&SameHeightParams::default()).unwrap();
        let g = gravity();
        let x = NavState::new(Vec3::new(0.0, 0.0, 1.0), Vec3::zeros(), Quaternion::IDENTITY).with_height_ref(0.8);
        let c = m.constraint(ModeIndex::new(3), &x, &at_rest(&g), &g);
        assert_relative_eq!(c.innovation[9], -0.2, epsilon = 1e-15);
        assert_eq!(c.jacobian[(9, POS + 2)], 1.0);
        assert_eq!(c.jacobian[(9, AUX)], -1.0);
    }

    #[test]
    fn height_reference_follows_stationary_modes() {
        let m = MotionModel::same_height(&SameHeightParams::default()).unwrap();
        let cfg = NoiseConfig::default();
        let g = cfg.gravity();
        let x = NavState::new(Vec3::new(0.0, 0.0, 0.4), Vec3::zeros(), Quaternion::IDENTITY).with_height_ref(0.1);
        let mut cov = DMatrix::identity(10, 10) * 1e-4;
        cov[(2, 2)] = 2e-4;
        cov[(2, 4)] = 1e-5;
        cov[(4, 2)] = 1e-5;
        let b = GaussianBelief::new(x, cov).unwrap();
        let (b2, _) = update(&b, &m.constraint(ModeIndex::new(2), &b.mean, &at_rest(&g), &g)).unwrap();

        let p = m.predict(&b2, ModeIndex::new(2), &at_rest(&g), &cfg).unwrap();
        assert_eq!(p.mean.height_ref, Some(b2.mean.position.z));
        // δξ' = δr_z: the reference inherits the height's variance and covariances
        assert_relative_eq!(p.cov[(AUX, AUX)], b2.cov[(2, 2)], epsilon = 1e-18);
        for j in 0..9 {
            let (f, _) = error_transition(&b2.mean, &at_rest(&g), &cfg);
            let expected: f64 = (0..10).map(|k| b2.cov[(2, k)] * f[(j, k)]).sum();
            assert_relative_eq!(p.cov[(AUX, j)], expected, epsilon = 1e-18);
        }

        let held = m.predict(&b2, ModeIndex::new(1), &at_rest(&g), &cfg).unwrap();
        assert_eq!(held.mean.height_ref, b2.mean.height_ref);
    }

    #[test]
    fn mode_two_converges_to_mode_three() {
        let g = gravity();
        let s = ZeroMotionNoise::STATIONARY;
        let nearly = ZeroMotionNoise {
            sigma_v: s.sigma_v * (1.0 + 1e-12),
            sigma_w: s.sigma_w * (1.0 + 1e-12),
            sigma_s: s.sigma_s * (1.0 + 1e-12),
        };
        let m = MotionModel::varying_gait(&VaryingGaitParams {
            almost_stationary: nearly,
            stationary: s,
            ..VaryingGaitParams::default()
        })
        .unwrap();
        let mut x = NavState::default();
        x.velocity = Vec3::new(0.02, -0.01, 0.005);
        let b = GaussianBelief::new(x, DMatrix::identity(9, 9) * 1e-3).unwrap();
        let u = ImuSample::new(0.0, Vec3::new(0.1, 0.05, 9.7), Vec3::new(0.01, 0.02, 0.0));
        let (b2, l2) = update(&b, &m.constraint(ModeIndex::new(2), &x, &u, &g)).unwrap();
        let (b3, l3) = update(&b, &m.constraint(ModeIndex::new(3), &x, &u, &g)).unwrap();
        assert_relative_eq!(l2, l3, max_relative = 1e-10);
        assert_relative_eq!(b2.cov, b3.cov, max_relative = 1e-9);
        assert_relative_eq!(b2.mean.velocity, b3.mean.velocity, epsilon = 1e-12);
    }

    #[test]
    fn transition_matrix_validation() {
        assert!(TransitionMatrix::from_rows(&[vec![0.5, 0.5], vec![0.4, 0.5]]).is_err());
        assert!(TransitionMatrix::from_rows(&[vec![1.2, 0.5], vec![-0.2, 0.5]]).is_err());
        let t = TransitionMatrix::from_rows(&varying_gait_initial_transition()).unwrap();
        for j in 1..=3 {
            let s: f64 = t.column(ModeIndex::new(j)).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let succ: Vec<usize> = t.successors(ModeIndex::new(1)).map(|(m, _)| m.get()).collect();
        assert_eq!(succ, vec![1, 2]);
    }

    #[test]
    fn stationary_distribution_of_reference_matrix() {
        let t = TransitionMatrix::new(&varying_gait_reference_transition(), &varying_gait_structure()).unwrap();
        let p = t.stationary_distribution();
        assert!(p[0] > p[2] && p[2] > p[1], "{p:?}");
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}
