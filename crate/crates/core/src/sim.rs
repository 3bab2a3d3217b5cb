//! Synthetic foot-mounted IMU data with ground truth.
//!
//! A profile is a list of gait phases. Each phase is laid out on the sample
//! grid, giving a discrete truth trajectory of positions and attitudes. The
//! inertial samples are then obtained by inverting the strapdown
//! mechanization sample by sample, so integrating noise-free output
//! reproduces the truth up to rounding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{euler_from_quat, quat_from_euler, EulerAngles, Quaternion, Vec3};
use crate::models::{ModeIndex, TransitionMatrix};
use crate::strapdown::{ImuSample, NavState, NoiseConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseKind {
    /// Foot flat and still.
    Stance,
    /// Foot in the air, landing at the same height.
    Swing,
    StairUp,
    StairDown,
    /// Foot on the ground but rocking in place.
    Shuffle,
}

impl PhaseKind {
    fn is_swing(self) -> bool {
        matches!(self, PhaseKind::Swing | PhaseKind::StairUp | PhaseKind::StairDown)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub kind: PhaseKind,
    /// Seconds; rounded to whole samples.
    pub duration: f64,
    /// Horizontal distance covered (swing phases).
    #[serde(default)]
    pub stride: f64,
    /// Height change (stair phases).
    #[serde(default)]
    pub step_height: f64,
}

impl Phase {
    pub fn stance(duration: f64) -> Self {
        Phase {
            kind: PhaseKind::Stance,
            duration,
            stride: 0.0,
            step_height: 0.0,
        }
    }

    pub fn shuffle(duration: f64) -> Self {
        Phase {
            kind: PhaseKind::Shuffle,
            ..Phase::stance(duration)
        }
    }

    pub fn swing(duration: f64, stride: f64) -> Self {
        Phase {
            kind: PhaseKind::Swing,
            duration,
            stride,
            step_height: 0.0,
        }
    }

    pub fn stair(up: bool, duration: f64, stride: f64, step_height: f64) -> Self {
        Phase {
            kind: if up { PhaseKind::StairUp } else { PhaseKind::StairDown },
            duration,
            stride,
            step_height,
        }
    }

    fn height_change(&self) -> f64 {
        match self.kind {
            PhaseKind::StairUp => self.step_height,
            PhaseKind::StairDown => -self.step_height,
            _ => 0.0,
        }
    }
}

/// Slow final approach of the foot before touchdown.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Glide {
    pub duration: f64,
    /// Horizontal speed (m/s).
    pub speed: f64,
    /// Descent speed (m/s).
    pub sink: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwingShape {
    /// Height of the foot arc above the higher of the two stance heights.
    pub clearance: f64,
    /// Peak toe-off pitch (rad).
    pub pitch_amplitude: f64,
    /// Time to accelerate to and from cruise speed (s).
    pub ramp: f64,
    #[serde(default)]
    pub glide: Option<Glide>,
}

impl Default for SwingShape {
    fn default() -> Self {
        SwingShape {
            clearance: 0.08,
            pitch_amplitude: 0.5,
            ramp: 0.1,
            glide: None,
        }
    }
}

/// Which mode set the truth labels refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Labeling {
    /// 1 moving, 2 rocking in place, 3 still.
    VaryingGait,
    /// 1 moving, 2 first still sample at a new height, 3 still at the
    /// height of the previous stance.
    SameHeight,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitProfile {
    pub phases: Vec<Phase>,
    #[serde(default = "default_rate")]
    pub sample_rate: f64,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_labeling")]
    pub labeling: Labeling,
    #[serde(default)]
    pub swing: SwingShape,
    /// Angular rate while rocking in place (rad/s).
    #[serde(default = "default_shuffle_rate")]
    pub shuffle_rate: f64,
    /// Walking direction (rad).
    #[serde(default)]
    pub heading: f64,
}

fn default_rate() -> f64 {
    100.0
}

fn default_labeling() -> Labeling {
    Labeling::VaryingGait
}

fn default_shuffle_rate() -> f64 {
    0.4
}

/// Pitch change of a swing too short to translate.
const FLICK_ANGLE: f64 = 0.02;

/// Time to settle at rest before any motion, used by the presets.
pub const LEAD_IN: f64 = 1.0;

/// Steady gait description used to build the preset profiles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cadence {
    /// Steps per second.
    pub rate: f64,
    /// Fraction of the cycle spent in the air.
    pub swing_fraction: f64,
    pub stride: f64,
    /// Ground contact while running is a rolling contact.
    pub rolling_contact: bool,
}

impl Cadence {
    pub const WALK: Cadence = Cadence {
        rate: 0.9,
        swing_fraction: 0.55,
        stride: 1.4,
        rolling_contact: false,
    };

    pub const RUN: Cadence = Cadence {
        rate: 1.5,
        swing_fraction: 0.75,
        stride: 2.6,
        rolling_contact: true,
    };

    fn swing_time(&self) -> f64 {
        self.swing_fraction / self.rate
    }

    fn contact_time(&self) -> f64 {
        (1.0 - self.swing_fraction) / self.rate
    }

    fn contact(&self) -> Phase {
        if self.rolling_contact {
            Phase::shuffle(self.contact_time())
        } else {
            Phase::stance(self.contact_time())
        }
    }

    /// Steps filling `duration` seconds, ending on ground contact.
    fn steps(&self, duration: f64) -> Vec<Phase> {
        let n = (duration * self.rate).floor() as usize;
        let mut phases = Vec::with_capacity(2 * n);
        for _ in 0..n {
            phases.push(Phase::swing(self.swing_time(), self.stride));
            phases.push(self.contact());
        }
        phases
    }
}

/// Swing shape with a slow glide before touchdown; a threshold detector
/// fires during the glide while the foot is still moving.
pub fn gliding_swing() -> SwingShape {
    SwingShape {
        glide: Some(Glide {
            duration: 0.15,
            speed: 0.3,
            sink: 0.1,
        }),
        ..SwingShape::default()
    }
}

impl GaitProfile {
    pub fn new(phases: Vec<Phase>) -> Self {
        GaitProfile {
            phases,
            sample_rate: default_rate(),
            noise: NoiseConfig::default(),
            seed: 0,
            labeling: default_labeling(),
            swing: SwingShape::default(),
            shuffle_rate: default_shuffle_rate(),
            heading: 0.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, noise: NoiseConfig) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_labeling(mut self, labeling: Labeling) -> Self {
        self.labeling = labeling;
        self
    }

    pub fn with_swing(mut self, swing: SwingShape) -> Self {
        self.swing = swing;
        self
    }

    /// Appends a stance so the profile lasts `duration` seconds.
    pub fn padded(mut self, duration: f64) -> Self {
        let missing = duration - self.num_samples() as f64 / self.sample_rate;
        if missing * self.sample_rate >= 0.5 {
            self.phases.push(Phase::stance(missing));
        }
        self
    }

    /// Standing still.
    pub fn stationary(duration: f64) -> Self {
        GaitProfile::new(vec![Phase::stance(duration)])
    }

    /// Walking on flat ground for roughly `duration` seconds.
    pub fn walk(duration: f64) -> Self {
        let mut phases = vec![Phase::stance(LEAD_IN)];
        phases.extend(Cadence::WALK.steps(duration - LEAD_IN));
        GaitProfile::new(phases).with_swing(gliding_swing()).padded(duration)
    }

    pub fn run(duration: f64) -> Self {
        let mut phases = vec![Phase::stance(LEAD_IN)];
        phases.extend(Cadence::RUN.steps(duration - LEAD_IN));
        GaitProfile::new(phases).padded(duration)
    }

    /// Alternating walking and running segments of `segment` seconds,
    /// starting with walking.
    pub fn walk_run(duration: f64, segment: f64) -> Self {
        let mut phases = vec![Phase::stance(LEAD_IN)];
        let mut t = LEAD_IN;
        let mut walking = true;
        while t + 1e-9 < duration {
            let len = segment.min(duration - t);
            let cadence = if walking { Cadence::WALK } else { Cadence::RUN };
            phases.extend(cadence.steps(len));
            t += len;
            walking = !walking;
        }
        GaitProfile::new(phases).padded(duration)
    }

    /// Flat walking, a staircase going up, then flat walking again, each
    /// taking a third of the duration.
    pub fn flat_stair_flat(duration: f64, step_height: f64) -> Self {
        let third = (duration - LEAD_IN) / 3.0;
        let walk = Cadence::WALK;
        let mut phases = vec![Phase::stance(LEAD_IN)];
        phases.extend(walk.steps(third));
        for _ in 0..(third * walk.rate).floor() as usize {
            phases.push(Phase::stair(true, walk.swing_time(), 0.6, step_height));
            phases.push(walk.contact());
        }
        phases.extend(walk.steps(third));
        GaitProfile::new(phases)
            .with_swing(gliding_swing())
            .with_labeling(Labeling::SameHeight)
            .padded(duration)
    }

    /// Phases realizing a varying-gait mode sequence: runs of mode 1 become
    /// strides at `speed`, runs of mode 2 rocking in place, runs of mode 3
    /// stance. A stance of [`LEAD_IN`] seconds is prepended.
    pub fn from_modes(modes: &[ModeIndex], sample_rate: f64, speed: f64) -> Result<Self> {
        let dt = 1.0 / sample_rate;
        let mut phases = vec![Phase::stance(LEAD_IN)];
        let mut k = 0;
        while k < modes.len() {
            let mode = modes[k];
            let len = modes[k..].iter().take_while(|&&m| m == mode).count();
            let duration = len as f64 * dt;
            phases.push(match mode.get() {
                1 => {
                    let travel = if len >= 3 { speed * (len - 1) as f64 * dt } else { 0.0 };
                    Phase::swing(duration, travel)
                }
                2 => Phase::shuffle(duration),
                3 => Phase::stance(duration),
                m => return Err(Error::Config(format!("mode {m} has no varying-gait phase"))),
            });
            k += len;
        }
        let mut profile = GaitProfile::new(phases);
        profile.sample_rate = sample_rate;
        profile.noise.dt = dt;
        profile.swing = SwingShape {
            ramp: 0.06,
            ..SwingShape::default()
        };
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate >= 20.0 && self.sample_rate.is_finite()) {
            return Err(Error::Config(format!("sample rate must be at least 20 Hz, got {}", self.sample_rate)));
        }
        self.noise.validate()?;
        if self.phases.is_empty() {
            return Err(Error::Config("profile has no phases".into()));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if !(p.duration > 0.0 && p.duration.is_finite()) {
                return Err(Error::Config(format!("phase {i} has non-positive duration {}", p.duration)));
            }
            if self.samples_in(p) == 0 {
                return Err(Error::Config(format!("phase {i} is shorter than one sample")));
            }
            if !(p.stride.is_finite() && p.step_height.is_finite() && p.step_height >= 0.0) {
                return Err(Error::Config(format!("phase {i} has invalid stride or step height")));
            }
            let moves = p.stride != 0.0 || p.height_change() != 0.0;
            if p.kind.is_swing() && moves && self.samples_in(p) < 3 {
                return Err(Error::Config(format!("phase {i} moves the foot but lasts fewer than 3 samples")));
            }
        }
        let s = &self.swing;
        if !(s.clearance >= 0.0 && s.ramp > 0.0 && s.pitch_amplitude.abs() < 1.2) {
            return Err(Error::Config("invalid swing shape".into()));
        }
        if let Some(g) = s.glide {
            if !(g.duration > 0.0 && g.speed >= 0.0 && g.sink >= 0.0) {
                return Err(Error::Config("invalid glide".into()));
            }
        }
        Ok(())
    }

    fn samples_in(&self, p: &Phase) -> usize {
        (p.duration * self.sample_rate).round() as usize
    }

    pub fn num_samples(&self) -> usize {
        self.phases.iter().map(|p| self.samples_in(p)).sum()
    }
}

/// Ground truth for one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthRecord {
    pub t: f64,
    pub state: NavState,
    pub mode: ModeIndex,
    pub stance: bool,
}

impl TruthRecord {
    pub fn euler(&self) -> Result<EulerAngles> {
        euler_from_quat(&self.state.attitude)
    }
}

/// Piecewise velocity profile: consecutive knots `(t, v)` are joined by a
/// quintic smoothstep, so acceleration is continuous and zero at each knot.
#[derive(Clone, Debug, PartialEq)]
struct VelocityProfile(Vec<(f64, f64)>);

#[cfg(test)]
fn smoothstep(tau: f64) -> f64 {
    tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau))
}

fn smoothstep_integral(tau: f64) -> f64 {
    let t4 = tau * tau * tau * tau;
    t4 * (2.5 + tau * (-3.0 + tau))
}

impl VelocityProfile {
    #[cfg(test)]
    fn velocity(&self, t: f64) -> f64 {
        let knots = &self.0;
        if t <= knots[0].0 {
            return knots[0].1;
        }
        for w in knots.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t < t1 {
                return v0 + (v1 - v0) * smoothstep((t - t0) / (t1 - t0));
            }
        }
        knots[knots.len() - 1].1
    }

    fn position(&self, t: f64) -> f64 {
        let knots = &self.0;
        let mut x = 0.0;
        if t <= knots[0].0 {
            return knots[0].1 * (t - knots[0].0);
        }
        for w in knots.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            let d = t1 - t0;
            if d <= 0.0 {
                continue;
            }
            if t >= t1 {
                x += 0.5 * (v0 + v1) * d;
            } else {
                let tau = (t - t0) / d;
                return x + d * (v0 * tau + (v1 - v0) * smoothstep_integral(tau));
            }
        }
        let (tl, vl) = knots[knots.len() - 1];
        x + vl * (t - tl)
    }
}

/// Foot kinematics over one swing of duration `T`, relative to the
/// lift-off point: along-track distance, height, and pitch.
#[derive(Clone, Debug)]
struct SwingKinematics {
    along: Vec<VelocityProfile>,
    vertical: Vec<VelocityProfile>,
    flight: f64,
    pitch_amplitude: f64,
}

impl SwingKinematics {
    fn new(shape: &SwingShape, duration: f64, stride: f64, rise: f64) -> Result<Self> {
        let t = duration;
        let (glide_time, entry, stop, speed, sink) = match shape.glide {
            Some(g) => (
                g.duration.min(0.3 * t),
                shape.ramp.min(0.15 * t),
                shape.ramp.min(0.15 * t),
                g.speed,
                g.sink,
            ),
            None => (0.0, 0.0, 0.0, 0.0, 0.0),
        };
        let flight = t - glide_time - stop;
        let mut along = Vec::new();
        let mut vertical = Vec::new();
        let (mut glide_along, mut glide_down) = (0.0, 0.0);
        if shape.glide.is_some() {
            let knots = |v: f64| {
                VelocityProfile(vec![
                    (flight - entry, 0.0),
                    (flight, v),
                    (flight + glide_time, v),
                    (t, 0.0),
                ])
            };
            let span = 0.5 * entry + glide_time + 0.5 * stop;
            glide_along = speed * span;
            glide_down = sink * span;
            along.push(knots(speed));
            vertical.push(knots(-sink));
        }
        let ramp = shape.ramp.min(flight / 3.0);
        let cruise = (stride - glide_along) / (flight - ramp);
        if stride != 0.0 && cruise * stride.signum() <= 0.0 {
            return Err(Error::Config(format!(
                "stride {stride} m is too short for the glide of this swing"
            )));
        }
        along.push(VelocityProfile(vec![
            (0.0, 0.0),
            (ramp, cruise),
            (flight - ramp, cruise),
            (flight, 0.0),
        ]));
        let climb = rise + glide_down;
        let up = climb.max(0.0) + shape.clearance;
        let down = up - climb;
        let q = 0.25 * flight;
        vertical.push(VelocityProfile(vec![
            (0.0, 0.0),
            (q, up / q),
            (2.0 * q, 0.0),
            (3.0 * q, -down / q),
            (flight, 0.0),
        ]));
        Ok(SwingKinematics {
            along,
            vertical,
            flight,
            pitch_amplitude: shape.pitch_amplitude,
        })
    }

    fn offset(&self, t: f64) -> (f64, f64) {
        (
            self.along.iter().map(|p| p.position(t)).sum(),
            self.vertical.iter().map(|p| p.position(t)).sum(),
        )
    }

    fn pitch(&self, t: f64) -> f64 {
        if t >= self.flight {
            return 0.0;
        }
        let phase = 2.0 * std::f64::consts::PI * t / self.flight;
        0.5 * self.pitch_amplitude * (1.0 - phase.cos())
    }
}

/// Moves `offset` by `step` towards (and possibly past) zero, keeping a
/// rocking foot from drifting away from level.
fn rock(offset: f64, step: f64) -> f64 {
    if offset > 0.0 {
        offset - step
    } else {
        offset + step
    }
}

struct Layout {
    positions: Vec<Vec3>,
    attitudes: Vec<Quaternion>,
    modes: Vec<ModeIndex>,
    stance: Vec<bool>,
}

fn layout(profile: &GaitProfile) -> Result<Layout> {
    let dt = 1.0 / profile.sample_rate;
    let n = profile.num_samples();
    let heading = Vec3::new(profile.heading.cos(), profile.heading.sin(), 0.0);
    let attitude = |pitch: f64| quat_from_euler(&EulerAngles::new(profile.heading, pitch, 0.0));
    let mut out = Layout {
        positions: Vec::with_capacity(n),
        attitudes: Vec::with_capacity(n),
        modes: Vec::with_capacity(n),
        stance: Vec::with_capacity(n),
    };
    let mut foot = Vec3::zeros();
    let mut pitch = 0.0;
    let mut last_stance_height = 0.0;
    let shuffle_step = profile.shuffle_rate * dt;

    for phase in &profile.phases {
        let m = profile.samples_in(phase);
        match phase.kind {
            PhaseKind::Stance => {
                let new_height = (foot.z - last_stance_height).abs() > 1e-9;
                for j in 0..m {
                    out.positions.push(foot);
                    out.attitudes.push(attitude(pitch));
                    out.stance.push(true);
                    out.modes.push(ModeIndex::new(match profile.labeling {
                        Labeling::VaryingGait => 3,
                        Labeling::SameHeight if new_height && j == 0 => 2,
                        Labeling::SameHeight => 3,
                    }));
                }
                last_stance_height = foot.z;
            }
            PhaseKind::Shuffle => {
                for _ in 0..m {
                    pitch = rock(pitch, shuffle_step);
                    out.positions.push(foot);
                    out.attitudes.push(attitude(pitch));
                    out.stance.push(false);
                    out.modes.push(ModeIndex::new(match profile.labeling {
                        Labeling::VaryingGait => 2,
                        Labeling::SameHeight => 1,
                    }));
                }
            }
            _ if m < 3 => {
                // too short to translate: a quick flick of the foot
                if m == 1 {
                    pitch = rock(pitch, FLICK_ANGLE);
                    out.attitudes.push(attitude(pitch));
                } else {
                    out.attitudes.push(attitude(pitch + FLICK_ANGLE));
                    out.attitudes.push(attitude(pitch));
                }
                for _ in 0..m {
                    out.positions.push(foot);
                    out.stance.push(false);
                    out.modes.push(ModeIndex::new(1));
                }
            }
            _ => {
                let span = (m - 1) as f64 * dt;
                let kin = SwingKinematics::new(&profile.swing, span, phase.stride, phase.height_change())?;
                let target = foot + heading * phase.stride + Vec3::new(0.0, 0.0, phase.height_change());
                for j in 0..m {
                    let position = if j + 1 == m {
                        target
                    } else {
                        let (a, h) = kin.offset(j as f64 * dt);
                        foot + heading * a + Vec3::new(0.0, 0.0, h)
                    };
                    let t_att = (j + 1) as f64 * span / m as f64;
                    let theta = if j + 1 == m { 0.0 } else { kin.pitch(t_att) };
                    out.positions.push(position);
                    out.attitudes.push(attitude(pitch + theta));
                    out.stance.push(false);
                    out.modes.push(ModeIndex::new(1));
                }
                foot = target;
            }
        }
    }
    Ok(out)
}

/// Generates IMU samples and ground truth for `profile`.
///
/// Sample `k` carries the specific force and angular rate that take the
/// truth state at `k - 1` to the one at `k` under
/// [`propagate`](crate::strapdown::propagate); the first sample is taken to
/// follow a state at rest equal to the first truth state.
pub fn simulate(profile: &GaitProfile) -> Result<(Vec<ImuSample>, Vec<TruthRecord>)> {
    profile.validate()?;
    let dt = 1.0 / profile.sample_rate;
    let g = profile.noise.gravity();
    let lay = layout(profile)?;
    let n = lay.positions.len();
    let velocity = |k: usize| -> Vec3 {
        let next = if k + 1 < n { lay.positions[k + 1] } else { lay.positions[k] };
        (next - lay.positions[k]) / dt
    };

    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let accel_noise = Normal::new(0.0, profile.noise.sigma_s).map_err(|e| Error::Config(e.to_string()))?;
    let gyro_noise = Normal::new(0.0, profile.noise.sigma_w).map_err(|e| Error::Config(e.to_string()))?;

    let mut samples = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut prev_v = Vec3::zeros();
    let mut prev_q = lay.attitudes[0];
    for k in 0..n {
        let t = k as f64 * dt;
        let v = velocity(k);
        let q = lay.attitudes[k];
        let c_prev = prev_q.rotation_matrix();
        let mut s = c_prev.transpose().rotate(&((v - prev_v) / dt - g));
        let mut w = (prev_q.conjugate() * q).to_rotation_vector() / dt;
        if profile.noise.sigma_s > 0.0 {
            s += Vec3::from_fn(|_, _| accel_noise.sample(&mut rng));
        }
        if profile.noise.sigma_w > 0.0 {
            w += Vec3::from_fn(|_, _| gyro_noise.sample(&mut rng));
        }
        samples.push(ImuSample::new(t, s, w));
        truth.push(TruthRecord {
            t,
            state: NavState::new(lay.positions[k], v, q),
            mode: lay.modes[k],
            stance: lay.stance[k],
        });
        prev_v = v;
        prev_q = q;
    }
    Ok((samples, truth))
}

/// Markov-chain sample of `n` modes starting at `initial`.
pub fn sample_mode_sequence(pi: &TransitionMatrix, n: usize, seed: u64, initial: ModeIndex) -> Vec<ModeIndex> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::with_capacity(n);
    let mut current = initial;
    for _ in 0..n {
        modes.push(current);
        let u: f64 = rng.gen();
        let column = pi.column(current);
        let mut acc = 0.0;
        let mut next = current;
        for (i, p) in column.iter().enumerate() {
            acc += p;
            if *p > 0.0 {
                next = ModeIndex::from_zero_based(i);
            }
            if u < acc {
                break;
            }
        }
        current = next;
    }
    modes
}
