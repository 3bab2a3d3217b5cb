//! Strapdown mechanization in a local-level navigation frame (z up by
//! default) and its error-state linearization.
//!
//! Error-state layout:
//! ```text
//!  [0..3]  δr   position (m)
//!  [3..6]  δv   velocity (m/s)
//!  [6..9]  δθ   attitude, navigation frame: C_true = (I + [δθ]×) C(q̂)
//!  [9]     δξ   height reference (m), only when the state carries one
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{skew, Mat3, Quaternion, Vec3};

pub const POS: usize = 0;
pub const VEL: usize = 3;
pub const ATT: usize = 6;
pub const AUX: usize = 9;

/// Base error-state dimension without auxiliary states.
pub const BASE_DIM: usize = 9;

/// Largest accepted sampling period.
pub const MAX_DT: f64 = 0.1;

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Quaternion,
    /// Height of the last stationary period; present only for models with
    /// a return-to-same-height constraint.
    pub height_ref: Option<f64>,
}

impl NavState {
    pub fn new(position: Vec3, velocity: Vec3, attitude: Quaternion) -> Self {
        NavState {
            position,
            velocity,
            attitude,
            height_ref: None,
        }
    }

    pub fn with_height_ref(mut self, height: f64) -> Self {
        self.height_ref = Some(height);
        self
    }

    pub fn error_dim(&self) -> usize {
        BASE_DIM + usize::from(self.height_ref.is_some())
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.attitude.is_finite()
            && self.height_ref.map_or(true, f64::is_finite)
    }

    /// Applies an error-state correction: additive for position, velocity
    /// and height reference, multiplicative (navigation frame) for attitude.
    pub fn apply_correction(&self, dx: &[f64]) -> NavState {
        let mut out = *self;
        for k in 0..3 {
            out.position[k] += dx[POS + k];
            out.velocity[k] += dx[VEL + k];
        }
        let dtheta = Vec3::new(dx[ATT], dx[ATT + 1], dx[ATT + 2]);
        out.attitude = self.attitude.perturb_nav(&dtheta);
        if let Some(h) = out.height_ref.as_mut() {
            *h += dx[AUX];
        }
        out
    }
}

impl Default for NavState {
    fn default() -> Self {
        NavState::new(Vec3::zeros(), Vec3::zeros(), Quaternion::IDENTITY)
    }
}

/// One inertial measurement: specific force (m/s²) and angular rate
/// (rad/s), both in the body frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub specific_force: Vec3,
    pub angular_rate: Vec3,
}

impl ImuSample {
    pub fn new(t: f64, specific_force: Vec3, angular_rate: Vec3) -> Self {
        ImuSample {
            t,
            specific_force,
            angular_rate,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.specific_force.iter().all(|v| v.is_finite())
            && self.angular_rate.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Accelerometer noise standard deviation (m/s²).
    pub sigma_s: f64,
    /// Gyroscope noise standard deviation (rad/s).
    pub sigma_w: f64,
    /// Nominal sampling period (s).
    pub dt: f64,
    /// Gravity in the navigation frame (m/s²).
    pub gravity: [f64; 3],
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -STANDARD_GRAVITY]
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma_s: 0.1,
            sigma_w: 0.01,
            dt: 0.01,
            gravity: default_gravity(),
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_s >= 0.0 && self.sigma_w >= 0.0) {
            return Err(Error::Config(format!(
                "noise standard deviations must be non-negative (sigma_s = {}, sigma_w = {})",
                self.sigma_s, self.sigma_w
            )));
        }
        check_dt(self.dt)?;
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::Config("gravity must be finite".into()));
        }
        Ok(())
    }

    pub fn gravity(&self) -> Vec3 {
        Vec3::from(self.gravity)
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        NoiseConfig { dt, ..*self }
    }

    /// Sampling period for a sample at `t` following one at `previous`;
    /// falls back to the nominal period for the first sample.
    pub fn step_dt(&self, previous: Option<f64>, t: f64) -> Result<f64> {
        let dt = previous.map_or(self.dt, |p| t - p);
        check_dt(dt)?;
        Ok(dt)
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt <= MAX_DT {
        Ok(())
    } else {
        Err(Error::InvalidTimeStep { dt })
    }
}

/// Noise-free mechanization over one period of `cfg.dt`:
/// `r' = r + Δt v`, `v' = v + Δt (C(q) s + g)`, `q' = q ⊗ exp(Δt ω)`.
/// The height reference is carried through unchanged.
pub fn propagate(x: &NavState, u: &ImuSample, cfg: &NoiseConfig) -> NavState {
    let dt = cfg.dt;
    let c = x.attitude.rotation_matrix();
    let accel = c.rotate(&u.specific_force) + cfg.gravity();
    NavState {
        position: x.position + dt * x.velocity,
        velocity: x.velocity + dt * accel,
        attitude: x.attitude.increment(&(dt * u.angular_rate)),
        height_ref: x.height_ref,
    }
}

/// Error-state transition matrix and discrete process-noise covariance of
/// [`propagate`] about `x`.
pub fn error_transition(x: &NavState, u: &ImuSample, cfg: &NoiseConfig) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = x.error_dim();
    let dt = cfg.dt;
    let c = x.attitude.rotation_matrix();
    let force_nav = c.rotate(&u.specific_force);

    let mut f = DMatrix::<f64>::identity(n, n);
    for k in 0..3 {
        f[(POS + k, VEL + k)] = dt;
    }
    f.view_mut((VEL, ATT), (3, 3)).copy_from(&(-dt * skew(&force_nav)));

    // v picks up Δt C η_s, θ picks up Δt C(q') η_ω
    let mut q = DMatrix::<f64>::zeros(n, n);
    let c_next = x.attitude.increment(&(dt * u.angular_rate)).rotation_matrix();
    let qv: Mat3 = (dt * dt * cfg.sigma_s * cfg.sigma_s) * c.0 * c.0.transpose();
    let qa: Mat3 = (dt * dt * cfg.sigma_w * cfg.sigma_w) * c_next.0 * c_next.0.transpose();
    q.view_mut((VEL, VEL), (3, 3)).copy_from(&(0.5 * (qv + qv.transpose())));
    q.view_mut((ATT, ATT), (3, 3)).copy_from(&(0.5 * (qa + qa.transpose())));
    (f, q)
}
