//! Attitude parameterizations and the small fixed-size algebra used by the
//! navigation filters.
//!
//! Conventions held throughout the crate:
//! - quaternions are scalar-first `(w, x, y, z)` with Hamilton products;
//! - `C(q)` rotates body-frame vectors into the navigation frame;
//! - Euler angles are the yaw-pitch-roll (Z-Y-X intrinsic) sequence,
//!   `C = Rz(yaw) Ry(pitch) Rx(roll)`, reported on
//!   `[0, 2π) × [-π/2, π/2) × [0, 2π)`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Distance from ±π/2 pitch inside which Euler angles are rejected.
pub const GIMBAL_MARGIN: f64 = 1e-6;

const SMALL_ANGLE: f64 = 1e-12;

/// Skew-symmetric cross-product matrix, `skew(a) * b == a × b`.
pub fn skew(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Unit quaternion, scalar first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Builds a quaternion from raw components and normalizes it.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }.normalized()
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Returns the unit quaternion in the same direction; a zero or
    /// non-finite input maps to the identity.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if !(n.is_finite() && n > 0.0) {
            return Self::IDENTITY;
        }
        Quaternion {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    pub fn conjugate(&self) -> Self {
        Quaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Exponential map of a rotation vector (axis times angle).
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        let angle = v.norm();
        if angle < SMALL_ANGLE {
            return Self::IDENTITY;
        }
        let half = 0.5 * angle;
        let s = half.sin() / angle;
        Quaternion {
            w: half.cos(),
            x: s * v.x,
            y: s * v.y,
            z: s * v.z,
        }
        .normalized()
    }

    /// Logarithm map; the returned rotation vector has angle in `[0, π]`.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let q = if self.w < 0.0 { -*self } else { *self };
        let v = q.vector();
        let s = v.norm();
        if s < SMALL_ANGLE {
            return 2.0 * v;
        }
        let angle = 2.0 * s.atan2(q.w);
        v * (angle / s)
    }

    pub fn rotation_matrix(&self) -> RotationMatrix {
        let q = self.normalized();
        let (w, x, y, z) = (q.w, q.x, q.y, q.z);
        RotationMatrix(Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ))
    }

    /// Quaternion of a rotation matrix (Shepperd's method), sign chosen with `w >= 0`.
    pub fn from_rotation_matrix(c: &RotationMatrix) -> Self {
        let m = &c.0;
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if trace > 0.0 {
            let s = 2.0 * (trace + 1.0).sqrt();
            Quaternion {
                w: 0.25 * s,
                x: (m[(2, 1)] - m[(1, 2)]) / s,
                y: (m[(0, 2)] - m[(2, 0)]) / s,
                z: (m[(1, 0)] - m[(0, 1)]) / s,
            }
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            Quaternion {
                w: (m[(2, 1)] - m[(1, 2)]) / s,
                x: 0.25 * s,
                y: (m[(0, 1)] + m[(1, 0)]) / s,
                z: (m[(0, 2)] + m[(2, 0)]) / s,
            }
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
            Quaternion {
                w: (m[(0, 2)] - m[(2, 0)]) / s,
                x: (m[(0, 1)] + m[(1, 0)]) / s,
                y: 0.25 * s,
                z: (m[(1, 2)] + m[(2, 1)]) / s,
            }
        } else {
            let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
            Quaternion {
                w: (m[(1, 0)] - m[(0, 1)]) / s,
                x: (m[(0, 2)] + m[(2, 0)]) / s,
                y: (m[(1, 2)] + m[(2, 1)]) / s,
                z: 0.25 * s,
            }
        };
        let q = q.normalized();
        if q.w < 0.0 {
            -q
        } else {
            q
        }
    }

    /// Rotation by a body-frame increment: `q ⊗ exp(dtheta)`.
    pub fn increment(&self, dtheta: &Vec3) -> Self {
        if dtheta.norm() < SMALL_ANGLE {
            return *self;
        }
        (*self * Self::from_rotation_vector(dtheta)).normalized()
    }

    /// Rotation by a navigation-frame perturbation: `exp(dtheta) ⊗ q`, so that
    /// `C(result) = exp([dtheta]×) C(q)`.
    pub fn perturb_nav(&self, dtheta: &Vec3) -> Self {
        if dtheta.norm() < SMALL_ANGLE {
            return *self;
        }
        (Self::from_rotation_vector(dtheta) * *self).normalized()
    }
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, r: Quaternion) -> Quaternion {
        Quaternion {
            w: self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            x: self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            y: self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            z: self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        }
    }
}

impl std::ops::Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        Quaternion {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

/// Body-to-navigation direction cosine matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix(pub Mat3);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Mat3::identity())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        RotationMatrix(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Frobenius distance of `CᵀC` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).norm()
    }

    pub fn to_quaternion(&self) -> Quaternion {
        Quaternion::from_rotation_matrix(self)
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

/// Yaw-pitch-roll angles in radians.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerAngles {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        EulerAngles { yaw, pitch, roll }
    }

    pub fn as_vector(&self) -> Vec3 {
        Vec3::new(self.yaw, self.pitch, self.roll)
    }

    /// Yaw and roll wrapped to `(-π, π]`; used for small angular differences.
    pub fn wrapped_signed(&self) -> Vec3 {
        Vec3::new(wrap_pi(self.yaw), self.pitch, wrap_pi(self.roll))
    }

    pub fn is_in_domain(&self) -> bool {
        (0.0..TAU).contains(&self.yaw)
            && (-FRAC_PI_2..FRAC_PI_2).contains(&self.pitch)
            && (0.0..TAU).contains(&self.roll)
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_two_pi(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w + 0.0
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_pi(a: f64) -> f64 {
    let w = wrap_two_pi(a);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

pub fn rotmat_from_quat(q: &Quaternion) -> RotationMatrix {
    q.rotation_matrix()
}

pub fn euler_from_rotmat(c: &RotationMatrix) -> Result<EulerAngles> {
    let m = &c.0;
    let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    if FRAC_PI_2 - pitch.abs() <= GIMBAL_MARGIN {
        return Err(Error::GimbalLock { pitch });
    }
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    Ok(EulerAngles {
        yaw: wrap_two_pi(yaw),
        pitch,
        roll: wrap_two_pi(roll),
    })
}

pub fn euler_from_quat(q: &Quaternion) -> Result<EulerAngles> {
    euler_from_rotmat(&q.rotation_matrix())
}

pub fn quat_from_euler(e: &EulerAngles) -> Quaternion {
    let (sy, cy) = (0.5 * e.yaw).sin_cos();
    let (sp, cp) = (0.5 * e.pitch).sin_cos();
    let (sr, cr) = (0.5 * e.roll).sin_cos();
    Quaternion {
        w: cy * cp * cr + sy * sp * sr,
        x: cy * cp * sr - sy * sp * cr,
        y: cy * sp * cr + sy * cp * sr,
        z: sy * cp * cr - cy * sp * sr,
    }
    .normalized()
}

pub fn rotmat_from_euler(e: &EulerAngles) -> RotationMatrix {
    quat_from_euler(e).rotation_matrix()
}

/// Body-frame exponential-map update `q ⊗ exp(dtheta)`.
pub fn quat_increment(q: &Quaternion, dtheta: &Vec3) -> Quaternion {
    q.increment(dtheta)
}

/// Maps Euler-angle rates `(yaw, pitch, roll)` to the navigation-frame
/// rotation vector they produce, `dθ = E · de`.
pub fn euler_rate_matrix(e: &EulerAngles) -> Mat3 {
    let (sy, cy) = e.yaw.sin_cos();
    let (sp, cp) = e.pitch.sin_cos();
    Mat3::new(0.0, -sy, cy * cp, 0.0, cy, sy * cp, 1.0, 0.0, -sp)
}

/// Converts a navigation-frame attitude error covariance to Euler angles.
pub fn euler_covariance(e: &EulerAngles, attitude_cov: &Mat3) -> Result<Mat3> {
    let inv = euler_rate_matrix(e)
        .try_inverse()
        .ok_or(Error::GimbalLock { pitch: e.pitch })?;
    let cov = inv * attitude_cov * inv.transpose();
    Ok(0.5 * (cov + cov.transpose()))
}

/// Closest rotation to `m` in the Frobenius norm.
///
/// Computed from the singular value decomposition `m = U Σ Vᵀ` as
/// `U diag(1, 1, d) Vᵀ` where `d = det(U Vᵀ)` is applied to the smallest
/// singular direction. Fails when that choice is not unique.
pub fn polar_project(m: &Mat3) -> Result<RotationMatrix> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite matrix".into()));
    }
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateInput("SVD failed".into())),
    };
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let (largest, middle, smallest) = (sv[order[0]], sv[order[1]], sv[order[2]]);
    let tol = 1e-12 * largest.max(1.0);
    if largest <= tol {
        return Err(Error::DegenerateInput("zero matrix has no closest rotation".into()));
    }
    let d = (u.determinant() * v_t.determinant()).signum();
    let flip_needed = d < 0.0 || smallest <= tol;
    if flip_needed && (middle - smallest).abs() <= tol {
        return Err(Error::DegenerateInput(format!(
            "closest rotation is not unique (singular values {largest:e}, {middle:e}, {smallest:e})"
        )));
    }
    let mut diag = Vec3::new(1.0, 1.0, 1.0);
    diag[order[2]] = d;
    let r = u * Mat3::from_diagonal(&diag) * v_t;
    Ok(RotationMatrix(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_quat() -> impl Strategy<Value = Quaternion> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
            .prop_map(|(w, x, y, z)| Quaternion::new(w, x, y, z))
    }

    #[test]
    fn identity_quaternion_gives_identity_matrix() {
        let c = rotmat_from_quat(&Quaternion::IDENTITY);
        assert_eq!(c.0, Mat3::identity());
    }

    #[test]
    fn quarter_turn_about_z_maps_x_to_y() {
        let h = std::f64::consts::FRAC_PI_4;
        let q = Quaternion::new(h.cos(), 0.0, 0.0, h.sin());
        let y = rotmat_from_quat(&q).rotate(&Vec3::x());
        assert_relative_eq!(y, Vec3::y(), epsilon = 1e-15);
    }

    #[test]
    fn euler_of_identity_is_zero() {
        let e = euler_from_quat(&Quaternion::IDENTITY).unwrap();
        assert_eq!((e.yaw, e.pitch, e.roll), (0.0, 0.0, 0.0));
    }

    #[test]
    fn yaw_only_euler_to_quaternion() {
        let q = quat_from_euler(&EulerAngles::new(FRAC_PI_2, 0.0, 0.0));
        let h = std::f64::consts::FRAC_PI_4;
        assert_relative_eq!(q.w, h.cos(), epsilon = 1e-15);
        assert_relative_eq!(q.z, h.sin(), epsilon = 1e-15);
        assert_eq!((q.x, q.y), (0.0, 0.0));
    }

    #[test]
    fn gimbal_lock_is_reported() {
        let q = quat_from_euler(&EulerAngles::new(0.3, FRAC_PI_2 - 1e-8, 0.1));
        assert!(matches!(euler_from_quat(&q), Err(Error::GimbalLock { .. })));
    }

    #[test]
    fn euler_matches_elementary_rotations() {
        let e = EulerAngles::new(0.4, -0.3, 1.1);
        let rz = Mat3::new(
            e.yaw.cos(), -e.yaw.sin(), 0.0,
            e.yaw.sin(), e.yaw.cos(), 0.0,
            0.0, 0.0, 1.0,
        );
        let ry = Mat3::new(
            e.pitch.cos(), 0.0, e.pitch.sin(),
            0.0, 1.0, 0.0,
            -e.pitch.sin(), 0.0, e.pitch.cos(),
        );
        let rx = Mat3::new(
            1.0, 0.0, 0.0,
            0.0, e.roll.cos(), -e.roll.sin(),
            0.0, e.roll.sin(), e.roll.cos(),
        );
        assert_relative_eq!(rotmat_from_euler(&e).0, rz * ry * rx, epsilon = 1e-14);
    }

    #[test]
    fn zero_increment_is_a_no_op() {
        let q = Quaternion::new(0.3, -0.2, 0.5, 0.1);
        assert_eq!(quat_increment(&q, &Vec3::zeros()), q);
    }

    #[test]
    fn quarter_turn_increment_from_identity() {
        let q = quat_increment(&Quaternion::IDENTITY, &Vec3::new(0.0, 0.0, FRAC_PI_2));
        let expected = quat_from_euler(&EulerAngles::new(FRAC_PI_2, 0.0, 0.0));
        assert_relative_eq!(q.w, expected.w, epsilon = 1e-15);
        assert_relative_eq!(q.z, expected.z, epsilon = 1e-15);
    }

    #[test]
    fn polar_projection_of_rotation_is_itself() {
        let c = rotmat_from_euler(&EulerAngles::new(1.0, 0.2, 2.0));
        assert_relative_eq!(polar_project(&c.0).unwrap().0, c.0, epsilon = 1e-14);
    }

    #[test]
    fn polar_projection_of_scaled_identity() {
        let r = polar_project(&(2.0 * Mat3::identity())).unwrap();
        assert_relative_eq!(r.0, Mat3::identity(), epsilon = 1e-14);
    }

    #[test]
    fn polar_projection_flips_reflections() {
        let m = Mat3::from_diagonal(&Vec3::new(3.0, 2.0, -1.0));
        let r = polar_project(&m).unwrap();
        assert_relative_eq!(r.0, Mat3::identity(), epsilon = 1e-14);
    }

    #[test]
    fn antipodal_average_is_degenerate() {
        let a = Mat3::identity();
        let b = rotmat_from_euler(&EulerAngles::new(PI, 0.0, 0.0)).0;
        let m = 0.5 * a + 0.5 * b;
        assert!(matches!(polar_project(&m), Err(Error::DegenerateInput(_))));
        let reflection = Mat3::from_diagonal(&Vec3::new(2.0, 1.0, -1.0));
        assert!(matches!(polar_project(&reflection), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn euler_covariance_matches_finite_differences() {
        let e = EulerAngles::new(0.7, 0.3, 5.9);
        let q = quat_from_euler(&e);
        let h = 1e-7;
        // d euler / d theta by perturbing the attitude in the navigation frame
        let mut jac = Mat3::zeros();
        for k in 0..3 {
            let mut d = Vec3::zeros();
            d[k] = h;
            let plus = euler_from_quat(&q.perturb_nav(&d)).unwrap().wrapped_signed();
            let minus = euler_from_quat(&q.perturb_nav(&-d)).unwrap().wrapped_signed();
            let col = (plus - minus) / (2.0 * h);
            jac.set_column(k, &col);
        }
        let p = Mat3::new(0.04, 0.01, 0.0, 0.01, 0.02, 0.003, 0.0, 0.003, 0.01);
        let fd = jac * p * jac.transpose();
        assert_relative_eq!(euler_covariance(&e, &p).unwrap(), fd, epsilon = 1e-7);
    }

    proptest! {
        #[test]
        fn rotation_matrices_are_orthonormal(q in unit_quat()) {
            let c = rotmat_from_quat(&q);
            prop_assert!(c.orthonormality_error() < 1e-12);
            prop_assert!((c.0.determinant() - 1.0).abs() < 1e-10);
            prop_assert!((q.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn negated_quaternion_is_same_rotation(q in unit_quat()) {
            let d = rotmat_from_quat(&q).0 - rotmat_from_quat(&-q).0;
            prop_assert!(d.norm() < 1e-15);
        }

        #[test]
        fn euler_round_trip(
            yaw in 0.0..TAU,
            pitch in -1.5..1.5f64,
            roll in 0.0..TAU,
        ) {
            let e = EulerAngles::new(yaw, pitch, roll);
            let q = quat_from_euler(&e);
            let back = euler_from_quat(&q).unwrap();
            prop_assert!(back.is_in_domain());
            let d = rotmat_from_euler(&back).0 - rotmat_from_euler(&e).0;
            prop_assert!(d.norm() < 1e-10);
        }

        #[test]
        fn matrix_quaternion_round_trip(q in unit_quat()) {
            let back = Quaternion::from_rotation_matrix(&q.rotation_matrix());
            let d = back.rotation_matrix().0 - q.rotation_matrix().0;
            prop_assert!(d.norm() < 1e-12);
        }

        #[test]
        fn half_increments_compose(
            q in unit_quat(),
            axis in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
            angle in 0.0..PI,
        ) {
            let a = Vec3::new(axis.0, axis.1, axis.2);
            prop_assume!(a.norm() > 1e-3);
            let step = a.normalize() * angle;
            let twice = quat_increment(&quat_increment(&q, &(0.5 * step)), &(0.5 * step));
            let once = quat_increment(&q, &step);
            let d = twice.rotation_matrix().0 - once.rotation_matrix().0;
            prop_assert!(d.norm() < 1e-12);
            prop_assert!((twice.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn log_inverts_exp(v in (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64)) {
            let v = Vec3::new(v.0, v.1, v.2);
            prop_assume!(v.norm() < PI - 1e-6);
            let back = Quaternion::from_rotation_vector(&v).to_rotation_vector();
            prop_assert!((back - v).norm() < 1e-12);
        }
    }
}
