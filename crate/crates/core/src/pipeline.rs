//! Running a filter bank over a recorded sequence and scoring the result.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::eskf::GaussianBelief;
use crate::error::{Error, Result};
use crate::filterbank::FilterBank;
use crate::geometry::{quat_from_euler, wrap_two_pi, EulerAngles, Vec3};
use crate::models::{ModeIndex, MotionModel};
use crate::strapdown::{ImuSample, NavState, NoiseConfig, ATT, AUX, POS, VEL};

/// One output sample of an estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub euler: EulerAngles,
    pub map_mode: ModeIndex,
    pub mode_posterior: Vec<f64>,
    pub loglik_increment: f64,
}

/// Standard deviations of the initial error state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialUncertainty {
    #[serde(default = "default_position")]
    pub position: f64,
    #[serde(default = "default_velocity")]
    pub velocity: f64,
    /// Roll and pitch (rad).
    #[serde(default = "default_tilt")]
    pub tilt: f64,
    #[serde(default = "default_yaw")]
    pub yaw: f64,
}

fn default_position() -> f64 {
    1e-3
}

fn default_velocity() -> f64 {
    0.01
}

fn default_tilt() -> f64 {
    1f64.to_radians()
}

fn default_yaw() -> f64 {
    0.1
}

impl Default for InitialUncertainty {
    fn default() -> Self {
        InitialUncertainty {
            position: default_position(),
            velocity: default_velocity(),
            tilt: default_tilt(),
            yaw: default_yaw(),
        }
    }
}

/// Roll and pitch from the mean specific force of a stationary window;
/// yaw is set to zero.
pub fn level_attitude(window: &[ImuSample]) -> Result<EulerAngles> {
    if window.is_empty() {
        return Err(Error::DegenerateInput("leveling window is empty".into()));
    }
    let mean = window.iter().fold(Vec3::zeros(), |acc, u| acc + u.specific_force) / window.len() as f64;
    if !(mean.norm() > 1e-6) {
        return Err(Error::DegenerateInput(format!(
            "mean specific force {:.3e} is too small to level",
            mean.norm()
        )));
    }
    let pitch = (-mean.x).atan2((mean.y * mean.y + mean.z * mean.z).sqrt());
    let roll = wrap_two_pi(mean.y.atan2(mean.z));
    Ok(EulerAngles::new(0.0, pitch, roll))
}

/// Belief at rest at the origin with attitude from the first `window`
/// samples.
pub fn initial_belief(
    samples: &[ImuSample],
    window: usize,
    sigma: &InitialUncertainty,
    with_height_ref: bool,
) -> Result<GaussianBelief> {
    let n = window.clamp(1, samples.len().max(1));
    let euler = level_attitude(&samples[..n.min(samples.len())])?;
    let mut mean = NavState::new(Vec3::zeros(), Vec3::zeros(), quat_from_euler(&euler));
    let dim = if with_height_ref {
        mean = mean.with_height_ref(0.0);
        AUX + 1
    } else {
        AUX
    };
    let mut cov = DMatrix::zeros(dim, dim);
    for k in 0..3 {
        cov[(POS + k, POS + k)] = sigma.position * sigma.position;
        cov[(VEL + k, VEL + k)] = sigma.velocity * sigma.velocity;
    }
    cov[(ATT, ATT)] = sigma.tilt * sigma.tilt;
    cov[(ATT + 1, ATT + 1)] = sigma.tilt * sigma.tilt;
    cov[(ATT + 2, ATT + 2)] = sigma.yaw * sigma.yaw;
    if with_height_ref {
        cov[(AUX, AUX)] = sigma.position * sigma.position;
    }
    GaussianBelief::new(mean, cov)
}

/// Mode prior putting all mass on the last (most constrained) mode, which
/// matches a sequence starting at rest.
pub fn resting_mode_prior(model: &MotionModel) -> Vec<f64> {
    let mut p = vec![0.0; model.num_modes()];
    *p.last_mut().expect("models have at least one mode") = 1.0;
    p
}

/// Filter-bank pass over `samples`, one row per sample. Errors carry the
/// index of the failing sample.
pub fn run_bank(
    model: &MotionModel,
    noise: &NoiseConfig,
    samples: &[ImuSample],
    prior: GaussianBelief,
    mode_prior: &[f64],
    max_leaves: Option<usize>,
) -> Result<Vec<TrajectoryRow>> {
    let mut bank = FilterBank::new(model.clone(), *noise, prior, mode_prior, max_leaves)?;
    let mut rows = Vec::with_capacity(samples.len());
    for (k, u) in samples.iter().enumerate() {
        let step = bank.step(u).map_err(|e| e.at_sample(k))?;
        let fused = bank.fuse().map_err(|e| e.at_sample(k))?;
        rows.push(TrajectoryRow {
            t: u.t,
            position: fused.state.position,
            velocity: fused.state.velocity,
            euler: fused.euler,
            map_mode: fused.map_mode,
            mode_posterior: fused.mode_posterior,
            loglik_increment: step.log_likelihood,
        });
    }
    Ok(rows)
}

/// Reference trajectory sample used for scoring.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthPoint {
    pub t: f64,
    pub position: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub final_horizontal: f64,
    /// Signed error along the start-to-end direction of the reference
    /// (negative when the estimate falls short).
    pub along_track: f64,
    /// Signed error to the left of the reference direction.
    pub cross_track: f64,
    pub vertical_rms: f64,
    /// Signed final height error.
    pub final_vertical: f64,
}

pub fn error_metrics(estimate: &[TrajectoryRow], truth: &[TruthPoint]) -> Result<ErrorMetrics> {
    if estimate.is_empty() || estimate.len() != truth.len() {
        return Err(Error::DegenerateInput(format!(
            "estimate has {} samples, reference has {}",
            estimate.len(),
            truth.len()
        )));
    }
    let last = estimate.len() - 1;
    let err = estimate[last].position - truth[last].position;
    let travel = truth[last].position - truth[0].position;
    let horizontal = Vec3::new(travel.x, travel.y, 0.0);
    let (along, cross) = if horizontal.norm() > 1e-9 {
        let a = horizontal / horizontal.norm();
        let left = Vec3::new(-a.y, a.x, 0.0);
        (err.dot(&a), err.dot(&left))
    } else {
        (err.x, err.y)
    };
    let sq: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e.position.z - t.position.z).powi(2))
        .sum();
    Ok(ErrorMetrics {
        final_horizontal: (err.x * err.x + err.y * err.y).sqrt(),
        along_track: along,
        cross_track: cross,
        vertical_rms: (sq / estimate.len() as f64).sqrt(),
        final_vertical: err.z,
    })
}
