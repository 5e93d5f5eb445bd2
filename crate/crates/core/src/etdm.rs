//! Explicit time-domain representation of responses.
//!
//! One unit-impulse time history per model yields the first-column
//! coefficients `h_k[i]` of every observer; the full coefficient matrix is a
//! lower-triangular Toeplitz shift of that column, so any response is
//! `r_i = sum_j h[i - j] F_j = a_i . x` with `a_i = sum_j h[i - j] psi_j`.
//! The same holds for response sensitivities, with one extra time history
//! per structural parameter.
//!
//! The integrator is Newmark average acceleration with the excitation applied
//! as nodal samples. `h[i]` is by definition the response at `t_i` to the
//! sampled series `F = (1, 0, 0, ...)`, which makes the convolution form an
//! exact identity for the discrete scheme.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::excitation::{ExcitationBasis, TimeGrid};
use crate::model::{ParameterBinding, SystemModel};

const NEWMARK_GAMMA: f64 = 0.5;
const NEWMARK_BETA: f64 = 0.25;
const BLOW_UP: f64 = 1e12;

/// Dense coefficient storage is kept when `observers * steps * dim` is at most this.
pub const DENSE_LIMIT: usize = 25_000_000;

/// Displacement, velocity and acceleration at `t_1..t_n`.
#[derive(Debug, Clone)]
pub struct StateHistory {
    pub disp: Vec<DVector<f64>>,
    pub vel: Vec<DVector<f64>>,
    pub acc: Vec<DVector<f64>>,
}

/// First-column coefficients per observer.
#[derive(Debug, Clone)]
pub struct ImpulseSeries {
    grid: TimeGrid,
    observers: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl ImpulseSeries {
    pub fn new(grid: TimeGrid, observers: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if observers.len() != values.len() {
            return Err(Error::DimensionMismatch {
                what: "observer series",
                expected: observers.len(),
                got: values.len(),
            });
        }
        for v in &values {
            if v.len() != grid.steps() {
                return Err(Error::DimensionMismatch {
                    what: "series length",
                    expected: grid.steps(),
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Integration("non-finite impulse coefficient".into()));
            }
        }
        Ok(Self {
            grid,
            observers,
            values,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn observer_names(&self) -> &[String] {
        &self.observers
    }
    pub fn observer_count(&self) -> usize {
        self.values.len()
    }
    pub fn steps(&self) -> usize {
        self.grid.steps()
    }
    /// `h_k[0..n]` for observer `k`.
    pub fn series(&self, k: usize) -> &[f64] {
        &self.values[k]
    }
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Explicit convolution `r_i = sum_{j <= i} h[i - j] F_j` with sampled excitation.
    pub fn reconstruct(&self, k: usize, forcing: &[f64]) -> Vec<f64> {
        let h = &self.values[k];
        (0..forcing.len().min(h.len()))
            .map(|i| (0..=i).map(|j| h[i - j] * forcing[j]).sum())
            .collect()
    }
}

/// Impulse-response series together with the state histories needed by the
/// sensitivity runs.
#[derive(Debug, Clone)]
pub struct ImpulseRun {
    pub series: ImpulseSeries,
    pub states: Option<StateHistory>,
}

impl ImpulseRun {
    pub fn without_states(self) -> Self {
        Self {
            states: None,
            ..self
        }
    }
}

struct Newmark<'a> {
    model: &'a SystemModel,
    dt: f64,
    effective: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> Newmark<'a> {
    fn new(model: &'a SystemModel, dt: f64) -> Result<Self> {
        let eff = model.mass()
            + model.damping() * (NEWMARK_GAMMA * dt)
            + model.stiffness() * (NEWMARK_BETA * dt * dt);
        let lu = eff.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular("Newmark effective matrix".into()));
        }
        Ok(Self {
            model,
            dt,
            effective: lu,
        })
    }

    /// Integrate from rest. `load(i, p)` writes the nodal load at `t_{i+1}`.
    fn run(&self, steps: usize, mut load: impl FnMut(usize, &mut DVector<f64>)) -> Result<StateHistory> {
        let n = self.model.dof_count();
        let dt = self.dt;
        let (m_c, m_k) = (self.model.damping(), self.model.stiffness());
        let mut u = DVector::zeros(n);
        let mut v = DVector::zeros(n);
        let mut a = DVector::zeros(n);
        let mut p = DVector::zeros(n);
        let mut hist = StateHistory {
            disp: Vec::with_capacity(steps),
            vel: Vec::with_capacity(steps),
            acc: Vec::with_capacity(steps),
        };
        for i in 0..steps {
            let u_pred = &u + &v * dt + &a * ((0.5 - NEWMARK_BETA) * dt * dt);
            let v_pred = &v + &a * ((1.0 - NEWMARK_GAMMA) * dt);
            p.fill(0.0);
            load(i, &mut p);
            let rhs = &p - m_c * &v_pred - m_k * &u_pred;
            a = self
                .effective
                .solve(&rhs)
                .ok_or_else(|| Error::Singular("Newmark effective matrix".into()))?;
            u = u_pred + &a * (NEWMARK_BETA * dt * dt);
            v = v_pred + &a * (NEWMARK_GAMMA * dt);
            let worst = u.amax().max(v.amax()).max(a.amax());
            if !(worst <= BLOW_UP) {
                return Err(Error::Integration(format!(
                    "state magnitude {worst:.3e} at step {} exceeds {BLOW_UP:.0e}",
                    i + 1
                )));
            }
            hist.disp.push(u.clone());
            hist.vel.push(v.clone());
            hist.acc.push(a.clone());
        }
        Ok(hist)
    }
}

fn observe(model: &SystemModel, grid: TimeGrid, states: &StateHistory) -> Result<ImpulseSeries> {
    let names = model.observers().iter().map(|o| o.name.clone()).collect();
    let values: Vec<Vec<f64>> = model
        .observers()
        .iter()
        .map(|o| {
            (0..grid.steps())
                .map(|i| o.observe(&states.disp[i], &states.vel[i], &states.acc[i]))
                .collect()
        })
        .collect();
    for v in values.iter().flatten() {
        if !(v.abs() <= BLOW_UP) {
            return Err(Error::Integration(format!("observed response {v:.3e} blew up")));
        }
    }
    ImpulseSeries::new(grid, names, values)
}

/// Direct Newmark run under a sampled excitation `F_1..F_n`; returns the observers.
pub fn direct_response(model: &SystemModel, grid: &TimeGrid, forcing: &[f64]) -> Result<ImpulseSeries> {
    if forcing.len() != grid.steps() {
        return Err(Error::DimensionMismatch {
            what: "forcing samples",
            expected: grid.steps(),
            got: forcing.len(),
        });
    }
    let nm = Newmark::new(model, grid.dt())?;
    let l = model.orientation();
    let states = nm.run(grid.steps(), |i, p| p.axpy(forcing[i], l, 0.0))?;
    observe(model, *grid, &states)
}

/// Unit-impulse time history: `F_1 = 1`, `F_j = 0` for `j > 1`.
pub fn impulse_response(model: &SystemModel, grid: &TimeGrid) -> Result<ImpulseRun> {
    let nm = Newmark::new(model, grid.dt())?;
    let l = model.orientation();
    let states = nm.run(grid.steps(), |i, p| {
        if i == 0 {
            p.copy_from(l);
        }
    })?;
    let series = observe(model, *grid, &states)?;
    Ok(ImpulseRun {
        series,
        states: Some(states),
    })
}

/// Sensitivity time history for parameter `theta`: the same integrator driven by
/// `dL F - (dM U'' + dC U' + dK U)` with the impulse-run states.
pub fn impulse_sensitivity(
    model: &SystemModel,
    theta: &str,
    grid: &TimeGrid,
    base: &ImpulseRun,
) -> Result<ImpulseSeries> {
    let binding = model.parameter(theta)?;
    let states = base.states.as_ref().ok_or_else(|| {
        Error::InvalidArgument("impulse run was stored without state histories".into())
    })?;
    if base.series.grid() != grid || states.disp.len() != grid.steps() {
        return Err(Error::InvalidArgument(
            "impulse run was computed on a different grid".into(),
        ));
    }
    if states.disp.first().map(|u| u.len()) != Some(model.dof_count()) {
        return Err(Error::InvalidArgument(
            "impulse run belongs to a model with a different dof count".into(),
        ));
    }
    sensitivity_run(model, binding, grid, states)
}

fn sensitivity_run(
    model: &SystemModel,
    binding: &ParameterBinding,
    grid: &TimeGrid,
    states: &StateHistory,
) -> Result<ImpulseSeries> {
    let nm = Newmark::new(model, grid.dt())?;
    let dstates = nm.run(grid.steps(), |i, p| {
        if i == 0 {
            p.copy_from(&binding.d_orientation);
        }
        p.gemv(-1.0, &binding.d_mass, &states.acc[i], 1.0);
        p.gemv(-1.0, &binding.d_damping, &states.vel[i], 1.0);
        p.gemv(-1.0, &binding.d_stiffness, &states.disp[i], 1.0);
    })?;
    observe(model, *grid, &dstates)
}

/// Dot product with independent partial sums so it vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[derive(Debug, Clone)]
enum Kernel {
    Convolution {
        basis: Arc<ExcitationBasis>,
        series: Vec<Vec<f64>>,
    },
    Explicit,
}

/// Linear map from `x` to every observer response at every step: row
/// `(k, i)` is the coefficient vector `a_i^{s_k}`.
#[derive(Debug, Clone)]
pub struct CoefficientMap {
    observers: usize,
    steps: usize,
    dim: usize,
    kernel: Kernel,
    /// Per observer a `dim x steps` matrix whose column `i` is `a_i`.
    dense: Option<Vec<DMatrix<f64>>>,
}

/// Precomputed data for evaluating a map at one `x`.
#[derive(Debug, Clone)]
pub struct Projection {
    x: Vec<f64>,
    basis: Option<Arc<ExcitationBasis>>,
    /// `psi . x` in reversed order, so convolution sums are contiguous dots.
    z_rev: Vec<f64>,
}

impl Projection {
    pub fn x(&self) -> &[f64] {
        &self.x
    }
}

impl CoefficientMap {
    /// Convolution of impulse series with an excitation basis.
    pub fn convolution(basis: Arc<ExcitationBasis>, series: &ImpulseSeries) -> Result<Self> {
        if series.steps() != basis.steps() {
            return Err(Error::DimensionMismatch {
                what: "impulse series vs basis rows",
                expected: basis.steps(),
                got: series.steps(),
            });
        }
        Ok(Self {
            observers: series.observer_count(),
            steps: series.steps(),
            dim: basis.dim(),
            kernel: Kernel::Convolution {
                basis,
                series: series.values().to_vec(),
            },
            dense: None,
        })
    }

    /// Explicitly given rows; `columns[k]` is `dim x steps` with column `i` = `a_i^{s_k}`.
    pub fn explicit(columns: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = columns
            .first()
            .ok_or_else(|| Error::InvalidArgument("explicit map needs at least one observer".into()))?;
        let (dim, steps) = first.shape();
        if dim == 0 || steps == 0 {
            return Err(Error::InvalidArgument("explicit map has an empty block".into()));
        }
        for c in &columns {
            if c.shape() != (dim, steps) {
                return Err(Error::DimensionMismatch {
                    what: "explicit coefficient block",
                    expected: dim * steps,
                    got: c.nrows() * c.ncols(),
                });
            }
        }
        Ok(Self {
            observers: columns.len(),
            steps,
            dim,
            kernel: Kernel::Explicit,
            dense: Some(columns),
        })
    }

    /// Explicit map with one step per observer, from plain rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        let cols = rows
            .iter()
            .map(|r| {
                if r.len() != d {
                    return Err(Error::DimensionMismatch {
                        what: "explicit row",
                        expected: d,
                        got: r.len(),
                    });
                }
                Ok(DMatrix::from_column_slice(d, 1, r))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::explicit(cols)
    }

    /// The map with every row multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        if let Kernel::Convolution { series, .. } = &mut out.kernel {
            for v in series.iter_mut().flatten() {
                *v *= factor;
            }
        }
        if let Some(dense) = &mut out.dense {
            for m in dense.iter_mut() {
                *m *= factor;
            }
        }
        out
    }

    pub fn observers(&self) -> usize {
        self.observers
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    fn observer_block(&self, k: usize) -> DMatrix<f64> {
        if let Some(d) = &self.dense {
            return d[k].clone();
        }
        let Kernel::Convolution { basis, series } = &self.kernel else {
            unreachable!("explicit maps are always dense");
        };
        let n = self.steps;
        let h = &series[k];
        // Upper-triangular Toeplitz T^T with (T^T)_{j,i} = h[i - j].
        let mut tt = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                tt[(j, i)] = h[i - j];
            }
        }
        basis.psi().transpose() * tt
    }

    /// Store every coefficient vector explicitly when the total size is at most `limit`.
    pub fn materialize(mut self, limit: usize) -> Self {
        if self.dense.is_none() && self.observers * self.steps * self.dim <= limit {
            let blocks = (0..self.observers).map(|k| self.observer_block(k)).collect();
            self.dense = Some(blocks);
        }
        self
    }

    /// Coefficient vector `a_i` of observer `k` (0-based `i`).
    pub fn row(&self, k: usize, i: usize) -> DVector<f64> {
        if let Some(d) = &self.dense {
            return d[k].column(i).into_owned();
        }
        let Kernel::Convolution { basis, series } = &self.kernel else {
            unreachable!("explicit maps are always dense");
        };
        let h = &series[k];
        let w = DVector::from_iterator(i + 1, (0..=i).map(|j| h[i - j]));
        basis.psi().rows(0, i + 1).tr_mul(&w)
    }

    /// `|a_i^{s_k}|` for every observer and step.
    pub fn norms(&self) -> Vec<Vec<f64>> {
        (0..self.observers)
            .map(|k| {
                let block = match &self.dense {
                    Some(d) => std::borrow::Cow::Borrowed(&d[k]),
                    None => std::borrow::Cow::Owned(self.observer_block(k)),
                };
                block.column_iter().map(|c| c.norm()).collect()
            })
            .collect()
    }

    /// Prepare evaluation at `x`.
    pub fn project(&self, x: &[f64]) -> Result<Projection> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "random vector",
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(match &self.kernel {
            Kernel::Convolution { basis, .. } => {
                let mut z = basis.project(x)?;
                z.reverse();
                Projection {
                    x: x.to_vec(),
                    basis: Some(basis.clone()),
                    z_rev: z,
                }
            }
            Kernel::Explicit => Projection {
                x: x.to_vec(),
                basis: None,
                z_rev: Vec::new(),
            },
        })
    }

    fn shares_basis(&self, proj: &Projection) -> Option<&[Vec<f64>]> {
        match (&self.kernel, &proj.basis) {
            (Kernel::Convolution { basis, series }, Some(pb)) if Arc::ptr_eq(basis, pb) => Some(series),
            _ => None,
        }
    }

    /// `a_i^{s_k} . x`.
    pub fn value_at(&self, proj: &Projection, k: usize, i: usize) -> f64 {
        if let Some(series) = self.shares_basis(proj) {
            let n = self.steps;
            return dot(&series[k][..=i], &proj.z_rev[n - 1 - i..]);
        }
        self.dot_row(k, i, &proj.x)
    }

    /// `a_i^{s_k} . x` straight from `x`; cheap only for dense maps.
    pub fn dot_row(&self, k: usize, i: usize, x: &[f64]) -> f64 {
        match &self.dense {
            Some(d) => dot(d[k].column(i).as_slice(), x),
            None => dot(self.row(k, i).as_slice(), x),
        }
    }

    /// All responses, flattened as `out[k * steps + i]`.
    pub fn responses_into(&self, proj: &Projection, out: &mut [f64]) {
        let n = self.steps;
        debug_assert_eq!(out.len(), self.observers * n);
        if let Some(series) = self.shares_basis(proj) {
            for (k, h) in series.iter().enumerate() {
                let row = &mut out[k * n..(k + 1) * n];
                for (i, r) in row.iter_mut().enumerate() {
                    *r = dot(&h[..=i], &proj.z_rev[n - 1 - i..]);
                }
            }
            return;
        }
        let x = DVector::from_column_slice(&proj.x);
        match &self.dense {
            Some(d) => {
                for (k, block) in d.iter().enumerate() {
                    let r = block.tr_mul(&x);
                    out[k * n..(k + 1) * n].copy_from_slice(r.as_slice());
                }
            }
            None => {
                for k in 0..self.observers {
                    for i in 0..n {
                        out[k * n + i] = self.dot_row(k, i, &proj.x);
                    }
                }
            }
        }
    }

    /// All responses per observer (`project_series`).
    pub fn responses(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let proj = self.project(x)?;
        let mut flat = vec![0.0; self.observers * self.steps];
        self.responses_into(&proj, &mut flat);
        Ok(flat.chunks(self.steps).map(|c| c.to_vec()).collect())
    }
}

/// Sensitivity map of a parameter that enters only through the excitation:
/// `b_i = sum_j h[i - j] dpsi_j`, reusing the impulse series.
pub fn excitation_param_sensitivity(
    basis: &ExcitationBasis,
    dpsi: DMatrix<f64>,
    series: &ImpulseSeries,
) -> Result<CoefficientMap> {
    if dpsi.shape() != basis.psi().shape() {
        return Err(Error::DimensionMismatch {
            what: "basis derivative",
            expected: basis.psi().len(),
            got: dpsi.len(),
        });
    }
    let d = ExcitationBasis::from_matrix(dpsi, *basis.grid())?;
    CoefficientMap::convolution(Arc::new(d), series)
}

/// `|a_i|^2 = sum_{j,l <= i} h[i-j] h[i-l] G_jl` from the basis Gram matrix.
pub fn gram_norms(series: &[f64], gram: &DMatrix<f64>) -> Vec<f64> {
    let n = series.len();
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..=i {
                let hj = series[i - j];
                for l in 0..=i {
                    s += hj * series[i - l] * gram[(j, l)];
                }
            }
            s.max(0.0).sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excitation::{spectral_basis, white_noise_spectrum, SpectrumModel};
    use crate::model::{build_sdof, ResponseObserver};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn white_basis(q: usize, grid: TimeGrid) -> Arc<ExcitationBasis> {
        let spec = SpectrumModel::new(white_noise_spectrum(5.5e-4).unwrap(), 0.0, 25.0 * PI, q).unwrap();
        Arc::new(spectral_basis(&spec, &grid).unwrap())
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn convolution_matches_direct_run() {
        let model = build_sdof(4.0 * PI, 0.05).unwrap();
        let grid = TimeGrid::new(0.02, 20).unwrap();
        let run = impulse_response(&model, &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_vec(&mut rng, 20);
        let direct = direct_response(&model, &grid, &f).unwrap();
        let conv = run.series.reconstruct(0, &f);
        for (a, b) in conv.iter().zip(direct.series(0)) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-6), "{a} vs {b}");
        }
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let model = build_sdof(4.0 * PI, 0.05).unwrap();
        let grid = TimeGrid::new(0.02, 50).unwrap();
        let out = direct_response(&model, &grid, &vec![0.0; 50]).unwrap();
        assert!(out.series(0).iter().all(|v| *v == 0.0));
    }

    /// Closed-form unit-sample response of the trapezoidal (average
    /// acceleration) discretization of `u'' + 2 z w u' + w^2 u = -F`.
    fn newmark_sdof_closed_form(omega: f64, zeta: f64, dt: f64, n: usize) -> Vec<f64> {
        // The scheme is the bilinear map s -> (2/dt)(z-1)/(z+1) applied to
        // H(s) = -1 / (s^2 + 2 zeta omega s + omega^2).
        let c = 2.0 / dt;
        let a0 = c * c + 2.0 * zeta * omega * c + omega * omega;
        let a1 = 2.0 * omega * omega - 2.0 * c * c;
        let a2 = c * c - 2.0 * zeta * omega * c + omega * omega;
        let (b0, b1, b2) = (-1.0 / a0, -2.0 / a0, -1.0 / a0);
        let (d1, d2) = (a1 / a0, a2 / a0);
        let mut y = vec![0.0; n];
        // Input is delta at index 0; y[i] = b0 x[i] + b1 x[i-1] + b2 x[i-2] - d1 y[i-1] - d2 y[i-2].
        for i in 0..n {
            let x = |k: isize| if k == 0 { 1.0 } else { 0.0 };
            let ii = i as isize;
            let mut v = b0 * x(ii) + b1 * x(ii - 1) + b2 * x(ii - 2);
            if i >= 1 {
                v -= d1 * y[i - 1];
            }
            if i >= 2 {
                v -= d2 * y[i - 2];
            }
            y[i] = v;
        }
        y
    }

    #[test]
    fn sdof_series_matches_discrete_closed_form() {
        let (w, z, dt) = (4.0 * PI, 0.05, 0.02);
        let model = build_sdof(w, z).unwrap();
        let grid = TimeGrid::new(dt, 250).unwrap();
        let run = impulse_response(&model, &grid).unwrap();
        let exact = newmark_sdof_closed_form(w, z, dt, 250);
        assert!(rel_l2(run.series.series(0), &exact) < 1e-10);
    }

    #[test]
    fn sdof_series_tracks_continuous_impulse_response() {
        let (w, z, dt) = (4.0 * PI, 0.05, 0.02);
        let model = build_sdof(w, z).unwrap();
        let grid = TimeGrid::new(dt, 250).unwrap();
        let h = impulse_response(&model, &grid).unwrap().series;
        let wd = w * (1.0 - z * z).sqrt();
        // A nodal sample spreads a hat pulse of area dt centred on t_1.
        let cont: Vec<f64> = (0..250)
            .map(|i| {
                let t = i as f64 * dt;
                -dt * (-z * w * t).exp() * (wd * t).sin() / wd
            })
            .collect();
        // Average acceleration elongates the period, so a pointwise phase
        // drift builds up; compare the per-period peak envelope and energy.
        let window = 25;
        for (a, b) in h.series(0).chunks(window).zip(cont.chunks(window)) {
            let pa = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let pb = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((pa / pb - 1.0).abs() < 0.02, "{}", pa / pb);
        }
        let e_num: f64 = h.series(0).iter().map(|v| v * v).sum();
        let e_cont: f64 = cont.iter().map(|v| v * v).sum();
        assert!((e_num / e_cont - 1.0).abs() < 0.02, "{}", e_num / e_cont);
    }

    fn fd_series(model: &SystemModel, theta: &str, grid: &TimeGrid) -> Vec<Vec<f64>> {
        let p = model.parameter(theta).unwrap();
        let h = 1e-6 * p.value;
        let up = impulse_response(&model.with_parameter(theta, p.value + h).unwrap(), grid).unwrap();
        let dn = impulse_response(&model.with_parameter(theta, p.value - h).unwrap(), grid).unwrap();
        up.series
            .values()
            .iter()
            .zip(dn.series.values())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) / (2.0 * h)).collect())
            .collect()
    }

    #[test]
    fn sdof_sensitivity_matches_finite_difference() {
        let model = build_sdof(4.0 * PI, 0.05).unwrap();
        let grid = TimeGrid::new(0.02, 1000).unwrap();
        let run = impulse_response(&model, &grid).unwrap();
        for theta in ["omega_n", "zeta_n"] {
            let b = impulse_sensitivity(&model, theta, &grid, &run).unwrap();
            let fd = fd_series(&model, theta, &grid);
            let err = rel_l2(b.series(0), &fd[0]);
            assert!(err < 1e-4, "{theta}: {err}");
        }
    }

    #[test]
    fn zero_binding_gives_zero_sensitivity() {
        let mut p = ParameterBinding::zero("nothing", 1, 1.0);
        p.value = 3.0;
        let model = SystemModel::new(
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, 0.3),
            DMatrix::from_element(1, 1, 4.0),
            DVector::from_element(1, 1.0),
            vec![p],
            vec![ResponseObserver::displacement("u", DVector::from_element(1, 1.0))],
        )
        .unwrap();
        let grid = TimeGrid::new(0.05, 40).unwrap();
        let run = impulse_response(&model, &grid).unwrap();
        let b = impulse_sensitivity(&model, "nothing", &grid, &run).unwrap();
        assert!(b.series(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sensitivity_errors() {
        let model = build_sdof(4.0 * PI, 0.05).unwrap();
        let grid = TimeGrid::new(0.02, 10).unwrap();
        let run = impulse_response(&model, &grid).unwrap();
        assert!(matches!(
            impulse_sensitivity(&model, "mass", &grid, &run),
            Err(Error::UnknownParameter(_))
        ));
        let bare = run.without_states();
        assert!(matches!(
            impulse_sensitivity(&model, "zeta_n", &grid, &bare),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn unstable_model_fails() {
        // Negative damping grows without bound over a long horizon.
        let model = SystemModel::new(
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, -5.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
            vec![],
            vec![ResponseObserver::displacement("u", DVector::from_element(1, 1.0))],
        )
        .unwrap();
        let grid = TimeGrid::new(0.1, 2000).unwrap();
        assert!(matches!(impulse_response(&model, &grid), Err(Error::Integration(_))));
    }

    #[test]
    fn projection_matches_explicit_rows() {
        let model = build_sdof(4.0 * PI, 0.05).unwrap();
        let grid = TimeGrid::new(0.02, 50).unwrap();
        let run = impulse_response(&model, &grid).unwrap();
        let basis = white_basis(40, grid);
        let map = CoefficientMap::convolution(basis.clone(), &run.series).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_vec(&mut rng, map.dim());
        let fast = map.responses(&x).unwrap();
        // Direct assembly of a_i = sum_j h[i-j] psi_j, then a_i . x.
        let h = run.series.series(0);
        for i in 0..50 {
            let mut a = DVector::zeros(map.dim());
            for j in 0..=i {
                a += basis.psi().row(j).transpose() * h[i - j];
            }
            let direct = a.dot(&DVector::from_column_slice(&x));
            assert!((fast[0][i] - direct).abs() <= 1e-12 * direct.abs().max(1e-12));
            assert!((map.row(0, i) - &a).norm() <= 1e-14 * a.norm().max(1e-300));
        }
        // Dense storage gives the same values.
        let dense = map.clone().materialize(usize::MAX);
        let again = dense.responses(&x).unwrap();
        for (a, b) in again[0].iter().zip(&fast[0]) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-12));
        }
        // Zero x.
        let zero = map.responses(&vec![0.0; map.dim()]).unwrap();
        assert!(zero[0].iter().all(|v| *v == 0.0));
        assert!(matches!(map.project(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn unit_vector_projection_is_convolution_with_first_column() {
        let model = build_sdof(4.0 * PI, 0.05).unwrap();
        let grid = TimeGrid::new(0.02, 30).unwrap();
        let run = impulse_response(&model, &grid).unwrap();
        let basis = white_basis(10, grid);
        let map = CoefficientMap::convolution(basis.clone(), &run.series).unwrap();
        let mut e1 = vec![0.0; map.dim()];
        e1[0] = 1.0;
        let r = map.responses(&e1).unwrap();
        let col: Vec<f64> = basis.psi().column(0).iter().copied().collect();
        let expect = run.series.reconstruct(0, &col);
        for (a, b) in r[0].iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-14 + 1e-12 * b.abs());
        }
    }

    #[test]
    fn causality() {
        let model = build_sdof(4.0 * PI, 0.05).unwrap();
        let grid = TimeGrid::new(0.02, 40).unwrap();
        let run = impulse_response(&model, &grid).unwrap();
        let basis = white_basis(15, grid);
        let mut truncated = basis.psi().clone();
        for j in 21..40 {
            truncated.row_mut(j).fill(0.0);
        }
        let cut = Arc::new(ExcitationBasis::from_matrix(truncated, grid).unwrap());
        let full = CoefficientMap::convolution(basis, &run.series).unwrap();
        let part = CoefficientMap::convolution(cut, &run.series).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_vec(&mut rng, full.dim());
        let a = full.responses(&x).unwrap();
        let b = part.responses(&x).unwrap();
        for i in 0..=20 {
            assert_eq!(a[0][i], b[0][i]);
        }
    }

    #[test]
    fn norms_agree_with_gram_form_and_rows() {
        let model = build_sdof(4.0 * PI, 0.05).unwrap();
        let grid = TimeGrid::new(0.02, 10).unwrap();
        let run = impulse_response(&model, &grid).unwrap();
        let basis = white_basis(7, grid);
        let map = CoefficientMap::convolution(basis.clone(), &run.series).unwrap();
        let norms = map.norms();
        let gram = gram_norms(run.series.series(0), &basis.gram());
        for i in 0..10 {
            let row = map.row(0, i).norm();
            assert!((norms[0][i] - row).abs() <= 1e-12 * row);
            assert!((norms[0][i] - gram[i]).abs() <= 1e-10 * row);
        }
        let first = run.series.series(0)[0].abs() * basis.psi().row(0).norm();
        assert_relative_eq!(norms[0][0], first, max_relative = 1e-14);
    }

    #[test]
    fn stationary_norm_matches_white_noise_variance() {
        let (w, z, s) = (4.0 * PI, 0.05, 5.5e-4);
        let model = build_sdof(w, z).unwrap();
        let grid = TimeGrid::from_duration(0.02, 20.0).unwrap();
        let run = impulse_response(&model, &grid).unwrap();
        let map = CoefficientMap::convolution(white_basis(500, grid), &run.series).unwrap();
        let norms = map.norms();
        let var = PI * s / (2.0 * z * w.powi(3));
        assert_relative_eq!(var, 8.707e-6, max_relative = 1e-3);
        let last = norms[0][999];
        assert!((last * last / var - 1.0).abs() < 0.03, "{}", last * last / var);
    }

    #[test]
    fn excitation_parameter_sensitivity() {
        let model = build_sdof(4.0 * PI, 0.05).unwrap();
        let grid = TimeGrid::new(0.02, 60).unwrap();
        let run = impulse_response(&model, &grid).unwrap();
        let basis = white_basis(20, grid);
        let a = CoefficientMap::convolution(basis.clone(), &run.series).unwrap();
        // Zero derivative.
        let zero = excitation_param_sensitivity(&basis, DMatrix::zeros(60, 40), &run.series).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_vec(&mut rng, 40);
        assert!(zero.responses(&x).unwrap()[0].iter().all(|v| *v == 0.0));
        // S -> theta S at theta = 1: dpsi = psi / 2, so b_i = a_i / 2.
        let b = excitation_param_sensitivity(&basis, basis.psi() * 0.5, &run.series).unwrap();
        for i in 0..60 {
            assert!((b.row(0, i) * 2.0 - a.row(0, i)).norm() <= 1e-14 * a.row(0, i).norm());
        }
        // d|a_i|^2 / dS = |a_i|^2 / S, checked by rescaling the spectrum.
        let s = 5.5e-4;
        let eps = 1e-6;
        let spec_up = SpectrumModel::new(white_noise_spectrum(s * (1.0 + eps)).unwrap(), 0.0, 25.0 * PI, 20).unwrap();
        let up = CoefficientMap::convolution(Arc::new(spectral_basis(&spec_up, &grid).unwrap()), &run.series).unwrap();
        let (n0, n1) = (a.norms(), up.norms());
        for i in 0..60 {
            let deriv = (n1[0][i].powi(2) - n0[0][i].powi(2)) / (s * eps);
            assert_relative_eq!(deriv, n0[0][i].powi(2) / s, max_relative = 1e-6);
        }
        assert!(excitation_param_sensitivity(&basis, DMatrix::zeros(3, 3), &run.series).is_err());
    }

    #[test]
    fn explicit_map_values() {
        let map = CoefficientMap::from_rows(&[vec![-2.0, 1.0], vec![2.0, -1.0]]).unwrap();
        assert_eq!(map.observers(), 2);
        assert_eq!(map.steps(), 1);
        let r = map.responses(&[4.0, -2.0]).unwrap();
        assert_eq!(r[0][0], -10.0);
        assert_eq!(r[1][0], 10.0);
        assert_relative_eq!(map.norms()[1][0], 5.0f64.sqrt());
    }
}
