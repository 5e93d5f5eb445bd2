//! Scalar Gaussian excitation written as `F_i = psi_i . x`, `x ~ N(0, I_d)`.
//!
//! Two constructions are provided: the spectral representation of a
//! (possibly evolutionary) power spectrum, with `d = 2q`, and the
//! eigen-decomposition of the covariance matrix induced by a correlation
//! function, with `d <= n` after dropping clamped eigenvalues.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Uniform grid `t_i = i dt`, `i = 1..=n`. Index 0 in code is `t_1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("grid needs at least one step".into()));
        }
        Ok(Self { dt, steps })
    }

    /// Grid covering `(0, duration]`; `duration / dt` must be integral.
    pub fn from_duration(dt: f64, duration: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0 && duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid needs dt > 0 and duration > 0, got dt = {dt}, duration = {duration}"
            )));
        }
        let ratio = duration / dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "duration {duration} is not an integer multiple of dt {dt}"
            )));
        }
        Self::new(dt, steps as usize)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    /// Time of 0-based sample `i`.
    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dt
    }
}

/// Power spectral density `S_F(omega, t)`.
#[derive(Clone)]
pub struct SpectralDensity(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl SpectralDensity {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }
    #[inline]
    pub fn eval(&self, omega: f64, t: f64) -> f64 {
        (self.0)(omega, t)
    }
}

impl fmt::Debug for SpectralDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SpectralDensity(..)")
    }
}

/// Constant two-sided spectrum `S` [m^2/s^3].
pub fn white_noise_spectrum(s: f64) -> Result<SpectralDensity> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "white-noise intensity must be positive, got {s}"
        )));
    }
    Ok(SpectralDensity::new(move |_, _| s))
}

/// A spectral density together with its frequency discretization.
#[derive(Debug, Clone)]
pub struct SpectrumModel {
    pub density: SpectralDensity,
    pub omega_min: f64,
    pub omega_max: f64,
    pub intervals: usize,
}

impl SpectrumModel {
    pub fn new(density: SpectralDensity, omega_min: f64, omega_max: f64, intervals: usize) -> Result<Self> {
        if !(omega_min >= 0.0 && omega_min < omega_max && omega_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= omega_min < omega_max, got [{omega_min}, {omega_max}]"
            )));
        }
        if intervals == 0 {
            return Err(Error::InvalidArgument("q must be at least 1".into()));
        }
        Ok(Self {
            density,
            omega_min,
            omega_max,
            intervals,
        })
    }

    pub fn delta_omega(&self) -> f64 {
        (self.omega_max - self.omega_min) / self.intervals as f64
    }

    /// Midpoint frequency of 0-based interval `k`.
    pub fn omega(&self, k: usize) -> f64 {
        self.omega_min + (k as f64 + 0.5) * self.delta_omega()
    }
}

/// Correlation function `R_F(t, tau) = E[F(t) F(t + tau)]`.
#[derive(Clone)]
pub struct CorrelationModel(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl CorrelationModel {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }
    #[inline]
    pub fn eval(&self, t: f64, tau: f64) -> f64 {
        (self.0)(t, tau)
    }
}

impl fmt::Debug for CorrelationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CorrelationModel(..)")
    }
}

/// Kanai-Tajimi-type stationary ground acceleration times a piecewise
/// envelope: quadratic rise to `t_a`, flat to `t_b`, exponential decay to `t_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulatedProcess {
    pub s0: f64,
    pub omega_g: f64,
    pub zeta_g: f64,
    pub t_a: f64,
    pub t_b: f64,
    pub t_c: f64,
    pub lambda: f64,
}

impl ModulatedProcess {
    pub fn new(s0: f64, omega_g: f64, zeta_g: f64, t_a: f64, t_b: f64, t_c: f64, lambda: f64) -> Result<Self> {
        if !(s0 > 0.0 && omega_g > 0.0 && lambda >= 0.0) {
            return Err(Error::InvalidArgument(
                "modulated process needs S0 > 0, omega_g > 0, lambda >= 0".into(),
            ));
        }
        if !(zeta_g > 0.0 && zeta_g < 1.0) {
            return Err(Error::InvalidArgument(format!("zeta_g must lie in (0, 1), got {zeta_g}")));
        }
        if !(0.0 < t_a && t_a < t_b && t_b < t_c) {
            return Err(Error::InvalidArgument(format!(
                "envelope needs 0 < t_a < t_b < t_c, got ({t_a}, {t_b}, {t_c})"
            )));
        }
        Ok(Self {
            s0,
            omega_g,
            zeta_g,
            t_a,
            t_b,
            t_c,
            lambda,
        })
    }

    pub fn damped_frequency(&self) -> f64 {
        self.omega_g * (1.0 - self.zeta_g * self.zeta_g).sqrt()
    }

    pub fn mu1(&self) -> f64 {
        self.omega_g * (1.0 + 4.0 * self.zeta_g * self.zeta_g) / self.zeta_g
    }

    pub fn mu2(&self) -> f64 {
        self.omega_g * (1.0 - 4.0 * self.zeta_g * self.zeta_g) / (1.0 - self.zeta_g * self.zeta_g).sqrt()
    }

    /// Envelope `g(t)`; zero outside `[0, t_c]`.
    pub fn modulation(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.t_c {
            0.0
        } else if t <= self.t_a {
            (t / self.t_a).powi(2)
        } else if t <= self.t_b {
            1.0
        } else {
            (-self.lambda * (t - self.t_b)).exp()
        }
    }

    /// Stationary correlation `R_0(tau)`.
    pub fn stationary(&self, tau: f64) -> f64 {
        let wd = self.damped_frequency();
        let a = tau.abs();
        0.5 * PI * self.s0
            * (-self.zeta_g * self.omega_g * a).exp()
            * (self.mu1() * (wd * tau).cos() + self.mu2() * (wd * a).sin())
    }

    pub fn correlation(&self, t: f64, tau: f64) -> f64 {
        self.modulation(t) * self.modulation(t + tau) * self.stationary(tau)
    }
}

pub fn modulated_correlation(process: ModulatedProcess) -> CorrelationModel {
    CorrelationModel::new(move |t, tau| process.correlation(t, tau))
}

/// The `n x d` matrix whose rows `psi_i` map `x` to the excitation samples.
#[derive(Debug, Clone)]
pub struct ExcitationBasis {
    psi: DMatrix<f64>,
    grid: TimeGrid,
}

impl ExcitationBasis {
    pub fn from_matrix(psi: DMatrix<f64>, grid: TimeGrid) -> Result<Self> {
        if psi.nrows() != grid.steps() {
            return Err(Error::DimensionMismatch {
                what: "basis rows",
                expected: grid.steps(),
                got: psi.nrows(),
            });
        }
        if psi.ncols() == 0 {
            return Err(Error::InvalidModel("excitation basis has no columns".into()));
        }
        Ok(Self { psi, grid })
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn dim(&self) -> usize {
        self.psi.ncols()
    }
    pub fn steps(&self) -> usize {
        self.psi.nrows()
    }

    /// `z_i = psi_i . x` for every sample.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "random vector",
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut z = DVector::zeros(self.steps());
        z.gemv(1.0, &self.psi, &DVector::from_column_slice(x), 0.0);
        Ok(z.data.into())
    }

    /// Gram matrix `G_jl = psi_j . psi_l`, the covariance actually represented.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.psi * self.psi.transpose()
    }

    /// `Var[F_i] = |psi_i|^2`.
    pub fn variances(&self) -> Vec<f64> {
        self.psi.row_iter().map(|r| r.norm_squared()).collect()
    }
}

/// Spectral-representation basis; row `i` holds the cosine terms followed by
/// the sine terms, so `d = 2q`.
pub fn spectral_basis(spec: &SpectrumModel, grid: &TimeGrid) -> Result<ExcitationBasis> {
    let nyquist = PI / grid.dt();
    if spec.omega_max > nyquist * (1.0 + 1e-12) {
        return Err(Error::Aliasing {
            omega_max: spec.omega_max,
            nyquist,
        });
    }
    let q = spec.intervals;
    let dw = spec.delta_omega();
    let n = grid.steps();
    let mut psi = DMatrix::zeros(n, 2 * q);
    for k in 0..q {
        let w = spec.omega(k);
        for i in 0..n {
            let t = grid.time(i);
            let s = spec.density.eval(w, t);
            if !(s >= 0.0) {
                return Err(Error::InvalidModel(format!(
                    "spectral density is {s} at omega = {w}, t = {t}"
                )));
            }
            let amp = (2.0 * dw * s).sqrt();
            let (sin, cos) = (w * t).sin_cos();
            psi[(i, k)] = amp * cos;
            psi[(i, q + k)] = amp * sin;
        }
    }
    ExcitationBasis::from_matrix(psi, *grid)
}

/// Default relative eigenvalue clamp for [`orthogonal_basis`].
pub const DEFAULT_EIG_CLIP: f64 = 1e-12;

/// Covariance matrix `Sigma_ij = R_F(t_i, t_j - t_i)`.
pub fn covariance_matrix(corr: &CorrelationModel, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    let n = grid.steps();
    let mut sigma = DMatrix::zeros(n, n);
    let mut scale = 0.0f64;
    let mut asym = 0.0f64;
    for i in 0..n {
        let ti = grid.time(i);
        for j in 0..=i {
            let tj = grid.time(j);
            let upper = corr.eval(tj, ti - tj);
            let lower = corr.eval(ti, tj - ti);
            if !(upper.is_finite() && lower.is_finite()) {
                return Err(Error::InvalidModel(format!("correlation is not finite at ({ti}, {tj})")));
            }
            scale = scale.max(upper.abs()).max(lower.abs());
            asym = asym.max((upper - lower).abs());
            let v = 0.5 * (upper + lower);
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    if asym > 1e-9 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidModel(format!(
            "correlation function induces an asymmetric covariance (max defect {asym:.3e})"
        )));
    }
    Ok(sigma)
}

/// Orthogonal-decomposition basis `psi = Psi Lambda^{1/2}`.
///
/// Eigenvalues below `eig_clip * lambda_max` are dropped together with their
/// eigenvectors; eigenvalues below `-eig_clip * lambda_max` reject the model.
/// Columns are ordered by decreasing eigenvalue.
pub fn orthogonal_basis(corr: &CorrelationModel, grid: &TimeGrid, eig_clip: f64) -> Result<ExcitationBasis> {
    if !(eig_clip >= 0.0) {
        return Err(Error::InvalidArgument(format!("eig_clip must be >= 0, got {eig_clip}")));
    }
    let sigma = covariance_matrix(corr, grid)?;
    basis_from_covariance(sigma, grid, eig_clip)
}

pub fn basis_from_covariance(sigma: DMatrix<f64>, grid: &TimeGrid, eig_clip: f64) -> Result<ExcitationBasis> {
    let eig = SymmetricEigen::try_new(sigma, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigen-solver did not converge".into()))?;
    let lambda_max = eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    if !(lambda_max > 0.0) {
        return Err(Error::InvalidModel("covariance matrix has no positive eigenvalue".into()));
    }
    let floor = eig_clip * lambda_max;
    if let Some(bad) = eig.eigenvalues.iter().find(|l| **l < -floor) {
        return Err(Error::InvalidModel(format!(
            "covariance has a negative eigenvalue {bad:.3e} (lambda_max {lambda_max:.3e})"
        )));
    }
    let mut keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&k| eig.eigenvalues[k] > floor)
        .collect();
    keep.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let n = grid.steps();
    let mut psi = DMatrix::zeros(n, keep.len());
    for (col, &k) in keep.iter().enumerate() {
        let s = eig.eigenvalues[k].sqrt();
        psi.set_column(col, &(eig.eigenvectors.column(k) * s));
    }
    ExcitationBasis::from_matrix(psi, *grid)
}
