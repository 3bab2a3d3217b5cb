//! Loosely integrated reference system: a fixed-threshold stance detector
//! (the SHOE statistic) gating velocity-only zero-velocity updates of a
//! single error-state filter.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eskf::{predict, update, Constraint, GaussianBelief};
use crate::error::{Error, Result};
use crate::geometry::euler_from_quat;
use crate::models::ModeIndex;
use crate::pipeline::TrajectoryRow;
use crate::strapdown::{ImuSample, NoiseConfig, BASE_DIM, STANDARD_GRAVITY, VEL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// Window length in samples.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Stance is declared when the statistic falls below this threshold.
    pub gamma: f64,
    #[serde(default = "default_sigma_a")]
    pub sigma_a: f64,
    #[serde(default = "default_sigma_g")]
    pub sigma_g: f64,
    #[serde(default = "default_g_mag")]
    pub g_mag: f64,
}

fn default_window() -> usize {
    5
}

fn default_sigma_a() -> f64 {
    0.01
}

fn default_sigma_g() -> f64 {
    0.1f64.to_radians()
}

fn default_g_mag() -> f64 {
    STANDARD_GRAVITY
}

impl DetectorConfig {
    pub const DEFAULT_GAMMA: f64 = 0.3e5;

    pub fn with_gamma(gamma: f64) -> Self {
        DetectorConfig {
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("detector window must be at least one sample".into()));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("detector threshold must be non-negative, got {}", self.gamma)));
        }
        if !(self.sigma_a > 0.0 && self.sigma_g > 0.0 && self.g_mag > 0.0) {
            return Err(Error::Config("detector noise levels and gravity magnitude must be positive".into()));
        }
        Ok(())
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window: default_window(),
            gamma: Self::DEFAULT_GAMMA,
            sigma_a: default_sigma_a(),
            sigma_g: default_sigma_g(),
            g_mag: default_g_mag(),
        }
    }
}

/// `(1/W) Σ ‖s − g·s̄/‖s̄‖‖²/σ_a² + ‖ω‖²/σ_g²` over the window.
pub fn shoe_statistic(window: &[ImuSample], cfg: &DetectorConfig) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::DegenerateInput("empty detector window".into()));
    }
    let n = window.len() as f64;
    let mean = window.iter().fold(nalgebra::Vector3::zeros(), |acc, u| acc + u.specific_force) / n;
    let norm = mean.norm();
    if !(norm >= 1e-6) {
        return Err(Error::DegenerateWindow { norm });
    }
    let up = mean * (cfg.g_mag / norm);
    let (va, vg) = (cfg.sigma_a * cfg.sigma_a, cfg.sigma_g * cfg.sigma_g);
    let total: f64 = window
        .iter()
        .map(|u| (u.specific_force - up).norm_squared() / va + u.angular_rate.norm_squared() / vg)
        .sum();
    Ok(total / n)
}

/// Stance decision per sample from a window centred on it, shifted inward
/// at the ends of the sequence.
pub fn detect_stance(samples: &[ImuSample], cfg: &DetectorConfig) -> Result<Vec<bool>> {
    cfg.validate()?;
    let n = samples.len();
    let w = cfg.window.min(n);
    (0..n)
        .map(|k| {
            let start = k.saturating_sub(cfg.window / 2).min(n - w);
            let stat = shoe_statistic(&samples[start..start + w], cfg).map_err(|e| e.at_sample(k))?;
            Ok(stat < cfg.gamma)
        })
        .collect()
}

/// Velocity-only zero-velocity pseudo-measurement.
pub fn zupt_constraint(belief: &GaussianBelief, sigma_v: f64) -> Constraint {
    let n = belief.dim();
    let v = belief.mean.velocity;
    let mut h = DMatrix::zeros(3, n);
    for k in 0..3 {
        h[(k, VEL + k)] = 1.0;
    }
    Constraint {
        innovation: DVector::from_iterator(3, v.iter().map(|x| -x)),
        jacobian: h,
        noise: DMatrix::identity(3, 3) * (sigma_v * sigma_v),
    }
}

pub const DEFAULT_ZUPT_SIGMA: f64 = 0.01;

/// Strapdown filter with zero-velocity updates wherever the detector fires.
/// Rows report mode 2 for updated samples and mode 1 otherwise.
pub fn run_zupt_ins(
    samples: &[ImuSample],
    detector: &DetectorConfig,
    noise: &NoiseConfig,
    prior: GaussianBelief,
    sigma_v: f64,
) -> Result<Vec<TrajectoryRow>> {
    noise.validate()?;
    if prior.dim() != BASE_DIM {
        return Err(Error::Config(format!("baseline prior must have dimension {BASE_DIM}")));
    }
    if !(sigma_v > 0.0) {
        return Err(Error::Config("zero-velocity update noise must be positive".into()));
    }
    let stance = detect_stance(samples, detector)?;
    let mut belief = prior;
    let mut last_t = None;
    let mut rows = Vec::with_capacity(samples.len());
    for (k, (u, &still)) in samples.iter().zip(&stance).enumerate() {
        let at = |e: Error| e.at_sample(k);
        let dt = noise.step_dt(last_t, u.t).map_err(at)?;
        belief = predict(&belief, u, &noise.with_dt(dt)).map_err(at)?;
        let mut loglik = 0.0;
        if still {
            let (b, ll) = update(&belief, &zupt_constraint(&belief, sigma_v)).map_err(at)?;
            belief = b;
            loglik = ll;
        }
        last_t = Some(u.t);
        let mode = if still { 2 } else { 1 };
        rows.push(TrajectoryRow {
            t: u.t,
            position: belief.mean.position,
            velocity: belief.mean.velocity,
            euler: euler_from_quat(&belief.mean.attitude).map_err(at)?,
            map_mode: ModeIndex::new(mode),
            mode_posterior: if still { vec![0.0, 1.0] } else { vec![1.0, 0.0] },
            loglik_increment: loglik,
        });
    }
    Ok(rows)
}
