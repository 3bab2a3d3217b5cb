//! Single-hypothesis error-state Kalman filter.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::strapdown::{error_transition, propagate, ImuSample, NavState, NoiseConfig};

/// Covariance diagonal entries above this are treated as divergence.
pub const BLOWUP_LIMIT: f64 = 1e12;

/// Smallest accepted reciprocal condition number of an innovation covariance.
pub const MIN_RCOND: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: NavState,
    /// Error-state covariance, `mean.error_dim()` square.
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: NavState, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.error_dim();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::Config(format!(
                "covariance is {}x{}, state error dimension is {n}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(GaussianBelief { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }
}

/// Pseudo-measurement `0 = h(x) + e`, linearized about the current mean:
/// `innovation = 0 - h(x̂)`, `jacobian = ∂h/∂δx`, `noise = Cov(e)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub innovation: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub noise: DMatrix<f64>,
}

impl Constraint {
    pub fn new(innovation: DVector<f64>, jacobian: DMatrix<f64>, noise: DMatrix<f64>) -> Result<Self> {
        let m = innovation.len();
        if jacobian.nrows() != m || noise.nrows() != m || noise.ncols() != m {
            return Err(Error::Config(format!(
                "constraint dimensions disagree: innovation {m}, jacobian {}x{}, noise {}x{}",
                jacobian.nrows(),
                jacobian.ncols(),
                noise.nrows(),
                noise.ncols()
            )));
        }
        Ok(Constraint {
            innovation,
            jacobian,
            noise,
        })
    }

    pub fn rows(&self) -> usize {
        self.innovation.len()
    }

    /// The sub-constraint made of the given rows.
    pub fn select(&self, rows: &[usize]) -> Constraint {
        Constraint {
            innovation: self.innovation.select_rows(rows),
            jacobian: self.jacobian.select_rows(rows),
            noise: self.noise.select_rows(rows).select_columns(rows),
        }
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn check_covariance(cov: &DMatrix<f64>) -> Result<()> {
    for (index, &value) in cov.diagonal().iter().enumerate() {
        if !value.is_finite() || value > BLOWUP_LIMIT {
            return Err(Error::NumericalBlowup { index, value });
        }
    }
    Ok(())
}

/// Applies a linearized transition: the mean is replaced by `mean` and the
/// covariance becomes `F P Fᵀ + Q`.
pub fn predict_linearized(
    b: &GaussianBelief,
    mean: NavState,
    f: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<GaussianBelief> {
    let n = b.dim();
    let cov = match n {
        9 => predict_fixed::<9>(&b.cov, f, q),
        10 => predict_fixed::<10>(&b.cov, f, q),
        _ => {
            let mut cov = f * &b.cov * f.transpose() + q;
            symmetrize(&mut cov);
            cov
        }
    };
    check_covariance(&cov)?;
    Ok(GaussianBelief { mean, cov })
}

fn fixed<const R: usize, const C: usize>(m: &DMatrix<f64>) -> SMatrix<f64, R, C> {
    SMatrix::from_column_slice(m.as_slice())
}

fn predict_fixed<const N: usize>(p: &DMatrix<f64>, f: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, f, q) = (fixed::<N, N>(p), fixed::<N, N>(f), fixed::<N, N>(q));
    let c = f * p * f.transpose() + q;
    let c = 0.5 * (c + c.transpose());
    DMatrix::from_column_slice(N, N, c.as_slice())
}

/// Time update through the strapdown mechanization.
pub fn predict(b: &GaussianBelief, u: &ImuSample, cfg: &NoiseConfig) -> Result<GaussianBelief> {
    let (f, q) = error_transition(&b.mean, u, cfg);
    predict_linearized(b, propagate(&b.mean, u, cfg), &f, &q)
}

/// Cholesky factor of an innovation covariance plus the pieces of the
/// Gaussian log-density that depend only on it.
struct InnovationFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_det: f64,
}

impl InnovationFactor {
    fn new(s: DMatrix<f64>) -> Result<Self> {
        let m = s.nrows();
        let chol = s.cholesky().ok_or(Error::SingularInnovation { rcond: 0.0 })?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        let rcond = if m == 0 { 1.0 } else { (lo / hi).powi(2) };
        if !(rcond >= MIN_RCOND) {
            return Err(Error::SingularInnovation { rcond });
        }
        let log_det = 2.0 * diag.iter().map(|d| d.ln()).sum::<f64>();
        Ok(InnovationFactor { chol, log_det })
    }

    fn log_density(&self, z: &DVector<f64>) -> f64 {
        let m = z.len() as f64;
        let w = self.chol.l_dirty().solve_lower_triangular(z).unwrap_or_else(|| z.clone());
        -0.5 * (w.norm_squared() + self.log_det + m * (2.0 * PI).ln())
    }
}

/// Log-density of `z` under `N(0, s)`.
pub fn gaussian_log_density(z: &DVector<f64>, s: &DMatrix<f64>) -> Result<f64> {
    Ok(InnovationFactor::new(s.clone())?.log_density(z))
}

/// Measurement update with a pseudo-measurement constraint.
///
/// Returns the posterior belief (error state folded back into the nominal
/// state) and `log N(z; 0, S)` with `S = H P Hᵀ + R`. Rows of `H` that are
/// identically zero still contribute to the likelihood through `R`.
pub fn update(b: &GaussianBelief, c: &Constraint) -> Result<(GaussianBelief, f64)> {
    let n = b.dim();
    if c.jacobian.ncols() != n {
        return Err(Error::Config(format!(
            "constraint jacobian has {} columns, belief dimension is {n}",
            c.jacobian.ncols()
        )));
    }
    if c.rows() == 0 {
        return Ok((b.clone(), 0.0));
    }
    // rows of H that are zero leave the state alone and, with R
    // block-diagonal across the split, contribute an independent factor
    let m = c.rows();
    let mut rows = Vec::with_capacity(m);
    let mut idle_rows = Vec::new();
    for i in 0..m {
        if c.jacobian.row(i).iter().all(|&v| v == 0.0) {
            idle_rows.push(i);
        } else {
            rows.push(i);
        }
    }
    if rows.is_empty() {
        return Ok((b.clone(), idle_log_density(c, &idle_rows)?));
    }
    let separable = idle_rows
        .iter()
        .all(|&i| rows.iter().all(|&j| c.noise[(i, j)] == 0.0 && c.noise[(j, i)] == 0.0));
    let ll_idle = if separable && !idle_rows.is_empty() {
        idle_log_density(c, &idle_rows)?
    } else {
        rows = (0..m).collect();
        0.0
    };
    let (dx, cov, ll) = match (n, rows.len()) {
        (9, 3) => update_fixed::<9, 3>(b, c, &rows)?,
        (9, 6) => update_fixed::<9, 6>(b, c, &rows)?,
        (9, 9) => update_fixed::<9, 9>(b, c, &rows)?,
        (10, 3) => update_fixed::<10, 3>(b, c, &rows)?,
        (10, 6) => update_fixed::<10, 6>(b, c, &rows)?,
        (10, 7) => update_fixed::<10, 7>(b, c, &rows)?,
        (10, 10) => update_fixed::<10, 10>(b, c, &rows)?,
        _ => update_dynamic(b, &c.select(&rows))?,
    };
    let mean = b.mean.apply_correction(&dx);
    if !mean.is_finite() {
        return Err(Error::NonFinite("state after measurement update".into()));
    }
    Ok((GaussianBelief { mean, cov }, ll + ll_idle))
}

/// Log-density of the innovation rows in `rows`, whose noise block is
/// assumed uncorrelated with the remaining rows.
fn idle_log_density(c: &Constraint, rows: &[usize]) -> Result<f64> {
    let diagonal = rows.iter().all(|&i| rows.iter().all(|&j| i == j || c.noise[(i, j)] == 0.0));
    if !diagonal {
        let sub = c.select(rows);
        return Ok(InnovationFactor::new(sub.noise)?.log_density(&sub.innovation));
    }
    let (lo, hi) = rows
        .iter()
        .map(|&i| c.noise[(i, i)])
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let rcond = lo / hi;
    if !(lo > 0.0 && rcond >= MIN_RCOND) {
        return Err(Error::SingularInnovation { rcond: if lo > 0.0 { rcond } else { 0.0 } });
    }
    Ok(rows
        .iter()
        .map(|&i| {
            let v = c.noise[(i, i)];
            -0.5 * (c.innovation[i] * c.innovation[i] / v + (2.0 * PI * v).ln())
        })
        .sum())
}

fn innovation_rcond(diag: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi, mut log_det) = (f64::INFINITY, 0.0f64, 0.0);
    for d in diag {
        lo = lo.min(d);
        hi = hi.max(d);
        log_det += 2.0 * d.ln();
    }
    ((lo / hi).powi(2), log_det)
}

fn update_fixed<const N: usize, const M: usize>(
    b: &GaussianBelief,
    c: &Constraint,
    rows: &[usize],
) -> Result<(Vec<f64>, DMatrix<f64>, f64)> {
    let p = fixed::<N, N>(&b.cov);
    let h = SMatrix::<f64, M, N>::from_fn(|i, j| c.jacobian[(rows[i], j)]);
    let r = SMatrix::<f64, M, M>::from_fn(|i, j| c.noise[(rows[i], rows[j])]);
    let z = SVector::<f64, M>::from_fn(|i, _| c.innovation[rows[i]]);

    let pht = p * h.transpose();
    let s = h * pht + r;
    let s = 0.5 * (s + s.transpose());
    let chol = s.cholesky().ok_or(Error::SingularInnovation { rcond: 0.0 })?;
    let (rcond, log_det) = innovation_rcond(chol.l_dirty().diagonal().iter().copied());
    if !(rcond >= MIN_RCOND) {
        return Err(Error::SingularInnovation { rcond });
    }
    let w = chol.l_dirty().solve_lower_triangular(&z).unwrap_or(z);
    let ll = -0.5 * (w.norm_squared() + log_det + M as f64 * (2.0 * PI).ln());

    // K = P Hᵀ S⁻¹
    let gain = chol.solve(&pht.transpose()).transpose();
    let dx = gain * z;

    // Joseph form keeps the covariance positive semidefinite
    let ikh = SMatrix::<f64, N, N>::identity() - gain * h;
    let cov = ikh * p * ikh.transpose() + gain * r * gain.transpose();
    let cov = 0.5 * (cov + cov.transpose());
    Ok((dx.as_slice().to_vec(), DMatrix::from_column_slice(N, N, cov.as_slice()), ll))
}

fn update_dynamic(b: &GaussianBelief, c: &Constraint) -> Result<(Vec<f64>, DMatrix<f64>, f64)> {
    let n = b.dim();
    let pht = &b.cov * c.jacobian.transpose();
    let mut s = &c.jacobian * &pht + &c.noise;
    symmetrize(&mut s);
    let factor = InnovationFactor::new(s)?;
    let ll = factor.log_density(&c.innovation);

    // K = P Hᵀ S⁻¹
    let gain = factor.chol.solve(&pht.transpose()).transpose();
    let dx = &gain * &c.innovation;

    // Joseph form keeps the covariance positive semidefinite
    let mut ikh = -&gain * &c.jacobian;
    for i in 0..n {
        ikh[(i, i)] += 1.0;
    }
    let mut cov = &ikh * &b.cov * ikh.transpose() + &gain * &c.noise * gain.transpose();
    symmetrize(&mut cov);
    Ok((dx.as_slice().to_vec(), cov, ll))
}
