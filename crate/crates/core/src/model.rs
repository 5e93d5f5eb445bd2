//! Linear system definitions: `M u'' + C u' + K u = L F(t)`.
//!
//! A [`SystemModel`] carries the assembled matrices, the exact derivatives of
//! every matrix with respect to each named design parameter, and the scalar
//! response observers that define the limit states.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Derivatives of `M`, `C`, `K`, `L` with respect to one design parameter.
#[derive(Debug, Clone)]
pub struct ParameterBinding {
    pub name: String,
    pub d_mass: DMatrix<f64>,
    pub d_damping: DMatrix<f64>,
    pub d_stiffness: DMatrix<f64>,
    pub d_orientation: DVector<f64>,
    pub value: f64,
}

impl ParameterBinding {
    /// A binding whose derivative matrices are all zero.
    pub fn zero(name: impl Into<String>, dof: usize, value: f64) -> Self {
        Self {
            name: name.into(),
            d_mass: DMatrix::zeros(dof, dof),
            d_damping: DMatrix::zeros(dof, dof),
            d_stiffness: DMatrix::zeros(dof, dof),
            d_orientation: DVector::zeros(dof),
            value,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.d_mass.iter().all(|v| *v == 0.0)
            && self.d_damping.iter().all(|v| *v == 0.0)
            && self.d_stiffness.iter().all(|v| *v == 0.0)
            && self.d_orientation.iter().all(|v| *v == 0.0)
    }
}

/// Scalar response `s = disp . U + vel . U' + acc . U''`.
#[derive(Debug, Clone)]
pub struct ResponseObserver {
    pub name: String,
    pub disp_row: DVector<f64>,
    pub vel_row: DVector<f64>,
    pub acc_row: DVector<f64>,
}

impl ResponseObserver {
    pub fn displacement(name: impl Into<String>, row: DVector<f64>) -> Self {
        let n = row.len();
        Self {
            name: name.into(),
            disp_row: row,
            vel_row: DVector::zeros(n),
            acc_row: DVector::zeros(n),
        }
    }

    #[inline]
    pub fn observe(&self, u: &DVector<f64>, v: &DVector<f64>, a: &DVector<f64>) -> f64 {
        self.disp_row.dot(u) + self.vel_row.dot(v) + self.acc_row.dot(a)
    }
}

/// Rayleigh damping fitted to one damping ratio at two modes (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighSpec {
    pub mode_a: usize,
    pub mode_b: usize,
    pub zeta: f64,
}

/// Kelvin viscoelastic damper acting on one story through an inclined brace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Damper {
    /// Stiffness coefficient [N/m].
    pub k_ve: f64,
    /// Damping coefficient [N s/m].
    pub c_ve: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShearBuildingSpec {
    pub masses: Vec<f64>,
    pub stiffnesses: Vec<f64>,
    pub rayleigh: Option<RayleighSpec>,
    pub dampers: Vec<Damper>,
    pub brace_cos: f64,
}

/// How a model was produced, so it can be rebuilt at a different parameter value.
#[derive(Debug, Clone)]
enum Recipe {
    Sdof { omega_n: f64, zeta_n: f64 },
    ShearBuilding(ShearBuildingSpec),
    /// Hand-assembled; perturbation applies the stored derivatives linearly.
    Affine,
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    mass: DMatrix<f64>,
    damping: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    orientation: DVector<f64>,
    parameters: Vec<ParameterBinding>,
    observers: Vec<ResponseObserver>,
    recipe: Recipe,
}

impl SystemModel {
    /// Assemble and validate a model from explicit matrices.
    pub fn new(
        mass: DMatrix<f64>,
        damping: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        orientation: DVector<f64>,
        parameters: Vec<ParameterBinding>,
        observers: Vec<ResponseObserver>,
    ) -> Result<Self> {
        let model = Self {
            mass,
            damping,
            stiffness,
            orientation,
            parameters,
            observers,
            recipe: Recipe::Affine,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let n = self.mass.nrows();
        if n == 0 {
            return Err(Error::InvalidModel("dof_count must be positive".into()));
        }
        for (what, m) in [
            ("mass", &self.mass),
            ("damping", &self.damping),
            ("stiffness", &self.stiffness),
        ] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    got: if m.nrows() != n { m.nrows() } else { m.ncols() },
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("{what} matrix has non-finite entries")));
            }
        }
        if self.orientation.len() != n {
            return Err(Error::DimensionMismatch {
                what: "orientation",
                expected: n,
                got: self.orientation.len(),
            });
        }
        if !is_symmetric(&self.mass) {
            return Err(Error::InvalidModel("mass matrix is not symmetric".into()));
        }
        if self.mass.clone().cholesky().is_none() {
            return Err(Error::InvalidModel("mass matrix is not positive definite".into()));
        }
        if !is_symmetric(&self.stiffness) {
            return Err(Error::InvalidModel("stiffness matrix is not symmetric".into()));
        }
        let eig = self.stiffness.clone().symmetric_eigen().eigenvalues;
        let scale = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if eig.iter().any(|&l| l < -1e-10 * scale.max(f64::MIN_POSITIVE)) {
            return Err(Error::InvalidModel(
                "stiffness matrix is not positive semidefinite".into(),
            ));
        }
        for (i, p) in self.parameters.iter().enumerate() {
            if self.parameters[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::InvalidModel(format!("duplicate parameter `{}`", p.name)));
            }
            let shapes_ok = p.d_mass.shape() == (n, n)
                && p.d_damping.shape() == (n, n)
                && p.d_stiffness.shape() == (n, n)
                && p.d_orientation.len() == n;
            if !shapes_ok {
                return Err(Error::InvalidModel(format!(
                    "derivative shapes of parameter `{}` do not match the model",
                    p.name
                )));
            }
        }
        for o in &self.observers {
            if o.disp_row.len() != n || o.vel_row.len() != n || o.acc_row.len() != n {
                return Err(Error::InvalidModel(format!(
                    "observer `{}` row length differs from dof_count {n}",
                    o.name
                )));
            }
            let nonzero = o
                .disp_row
                .iter()
                .chain(o.vel_row.iter())
                .chain(o.acc_row.iter())
                .any(|v| *v != 0.0);
            if !nonzero {
                return Err(Error::InvalidModel(format!("observer `{}` is identically zero", o.name)));
            }
        }
        Ok(())
    }

    pub fn dof_count(&self) -> usize {
        self.mass.nrows()
    }
    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }
    pub fn damping(&self) -> &DMatrix<f64> {
        &self.damping
    }
    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }
    pub fn orientation(&self) -> &DVector<f64> {
        &self.orientation
    }
    pub fn parameters(&self) -> &[ParameterBinding] {
        &self.parameters
    }
    pub fn observers(&self) -> &[ResponseObserver] {
        &self.observers
    }

    pub fn parameter(&self, name: &str) -> Result<&ParameterBinding> {
        self.parameters
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// Rebuild the model with parameter `name` set to `value`.
    ///
    /// Preset-built models are reassembled from their physical description, so
    /// nonlinear dependencies (e.g. `K = omega_n^2`) are honoured. Hand-built
    /// models are shifted along their stored derivatives.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<SystemModel> {
        let binding = self.parameter(name)?;
        match &self.recipe {
            Recipe::Sdof { omega_n, zeta_n } => match name {
                "omega_n" => build_sdof(value, *zeta_n),
                "zeta_n" => build_sdof(*omega_n, value),
                _ => Err(Error::UnknownParameter(name.to_string())),
            },
            Recipe::ShearBuilding(spec) => {
                let mut spec = spec.clone();
                let (kind, story) = parse_damper_parameter(name)
                    .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
                let damper = spec
                    .dampers
                    .get_mut(story)
                    .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
                match kind {
                    DamperField::Stiffness => damper.k_ve = value,
                    DamperField::Damping => damper.c_ve = value,
                }
                build_shear_building(&spec)
            }
            Recipe::Affine => {
                let step = value - binding.value;
                let mut model = self.clone();
                model.mass += &binding.d_mass * step;
                model.damping += &binding.d_damping * step;
                model.stiffness += &binding.d_stiffness * step;
                model.orientation += &binding.d_orientation * step;
                for p in &mut model.parameters {
                    if p.name == name {
                        p.value = value;
                    }
                }
                model.validate()?;
                Ok(model)
            }
        }
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DamperField {
    Stiffness,
    Damping,
}

/// `k_ve_3` -> (Stiffness, 2); `c_ve_1` -> (Damping, 0).
fn parse_damper_parameter(name: &str) -> Option<(DamperField, usize)> {
    let (kind, rest) = match name.strip_prefix("k_ve_") {
        Some(rest) => (DamperField::Stiffness, rest),
        None => (DamperField::Damping, name.strip_prefix("c_ve_")?),
    };
    let story: usize = rest.parse().ok()?;
    story.checked_sub(1).map(|s| (kind, s))
}

/// Normalized single-degree-of-freedom oscillator under ground acceleration:
/// `u'' + 2 omega_n zeta_n u' + omega_n^2 u = -a_g`.
pub fn build_sdof(omega_n: f64, zeta_n: f64) -> Result<SystemModel> {
    if !(omega_n.is_finite() && omega_n > 0.0) {
        return Err(Error::InvalidArgument(format!("omega_n must be positive, got {omega_n}")));
    }
    if !(zeta_n > 0.0 && zeta_n < 1.0) {
        return Err(Error::InvalidArgument(format!("zeta_n must lie in (0, 1), got {zeta_n}")));
    }
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let mut d_omega = ParameterBinding::zero("omega_n", 1, omega_n);
    d_omega.d_damping = one(2.0 * zeta_n);
    d_omega.d_stiffness = one(2.0 * omega_n);
    let mut d_zeta = ParameterBinding::zero("zeta_n", 1, zeta_n);
    d_zeta.d_damping = one(2.0 * omega_n);

    let mut model = SystemModel::new(
        one(1.0),
        one(2.0 * omega_n * zeta_n),
        one(omega_n * omega_n),
        DVector::from_element(1, -1.0),
        vec![d_omega, d_zeta],
        vec![ResponseObserver::displacement("u", DVector::from_element(1, 1.0))],
    )?;
    model.recipe = Recipe::Sdof { omega_n, zeta_n };
    Ok(model)
}

/// Unit stiffness pattern of story `story` (0-based) in an `n`-story shear building.
pub fn story_pattern(n: usize, story: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    p[(story, story)] = 1.0;
    if story > 0 {
        p[(story - 1, story - 1)] = 1.0;
        p[(story - 1, story)] = -1.0;
        p[(story, story - 1)] = -1.0;
    }
    p
}

/// Natural circular frequencies of `K phi = omega^2 M phi`, ascending.
pub fn modal_frequencies(mass: &DMatrix<f64>, stiffness: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidModel("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("mass Cholesky factor".into()))?;
    let a = &l_inv * stiffness * l_inv.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let mut lambda: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
    lambda.sort_by(|x, y| x.total_cmp(y));
    Ok(lambda.into_iter().map(|l| l.max(0.0).sqrt()).collect())
}

/// Solve `zeta = (a0 / omega + a1 omega) / 2` at two frequencies.
pub fn rayleigh_from_frequencies(omega_a: f64, omega_b: f64, zeta: f64) -> Result<(f64, f64)> {
    if !(omega_a > 0.0 && omega_b > 0.0) {
        return Err(Error::InvalidArgument("modal frequencies must be positive".into()));
    }
    if (omega_a - omega_b).abs() <= 1e-12 * omega_a.max(omega_b) {
        return Err(Error::Singular(format!(
            "Rayleigh fit needs distinct frequencies, got {omega_a} and {omega_b}"
        )));
    }
    let a1 = 2.0 * zeta / (omega_a + omega_b);
    let a0 = 2.0 * zeta * omega_a * omega_b / (omega_a + omega_b);
    Ok((a0, a1))
}

/// Rayleigh coefficients `(a0, a1)` for `C = a0 M + a1 K`.
pub fn rayleigh_coefficients(
    mass: &DMatrix<f64>,
    stiffness: &DMatrix<f64>,
    spec: &RayleighSpec,
) -> Result<(f64, f64)> {
    let n = mass.nrows();
    if !(spec.mode_a >= 1 && spec.mode_a < spec.mode_b && spec.mode_b <= n) {
        return Err(Error::InvalidArgument(format!(
            "Rayleigh modes must satisfy 1 <= mode_a < mode_b <= {n}, got ({}, {})",
            spec.mode_a, spec.mode_b
        )));
    }
    if !(spec.zeta > 0.0 && spec.zeta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Rayleigh zeta must lie in (0, 1), got {}",
            spec.zeta
        )));
    }
    let omegas = modal_frequencies(mass, stiffness)?;
    rayleigh_from_frequencies(omegas[spec.mode_a - 1], omegas[spec.mode_b - 1], spec.zeta)
}

/// Shear building with optional braced Kelvin dampers, loaded by ground
/// acceleration (`L = -M 1`) and observed through interstory drifts.
pub fn build_shear_building(spec: &ShearBuildingSpec) -> Result<SystemModel> {
    let n = spec.masses.len();
    if n == 0 {
        return Err(Error::InvalidArgument("at least one story is required".into()));
    }
    if spec.stiffnesses.len() != n {
        return Err(Error::DimensionMismatch {
            what: "story stiffnesses",
            expected: n,
            got: spec.stiffnesses.len(),
        });
    }
    if !spec.dampers.is_empty() && spec.dampers.len() != n {
        return Err(Error::DimensionMismatch {
            what: "dampers",
            expected: n,
            got: spec.dampers.len(),
        });
    }
    if !(spec.brace_cos > 0.0 && spec.brace_cos <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "brace_cos must lie in (0, 1], got {}",
            spec.brace_cos
        )));
    }
    let positive = |v: &f64| v.is_finite() && *v > 0.0;
    if !spec.masses.iter().all(positive) {
        return Err(Error::InvalidModel("story masses must be positive".into()));
    }
    if !spec.stiffnesses.iter().all(positive) {
        return Err(Error::InvalidArgument("story stiffnesses must be positive".into()));
    }
    if !spec
        .dampers
        .iter()
        .all(|d| positive(&d.k_ve) && positive(&d.c_ve))
    {
        return Err(Error::InvalidArgument("damper coefficients must be positive".into()));
    }

    let mass = DMatrix::from_diagonal(&DVector::from_column_slice(&spec.masses));
    let patterns: Vec<DMatrix<f64>> = (0..n).map(|k| story_pattern(n, k)).collect();
    let mut k_struct = DMatrix::zeros(n, n);
    for (p, k) in patterns.iter().zip(&spec.stiffnesses) {
        k_struct += p * *k;
    }
    let mut damping = match &spec.rayleigh {
        Some(r) => {
            let (a0, a1) = rayleigh_coefficients(&mass, &k_struct, r)?;
            &mass * a0 + &k_struct * a1
        }
        None => DMatrix::zeros(n, n),
    };
    let proj = spec.brace_cos * spec.brace_cos;
    let mut stiffness = k_struct;
    let mut parameters = Vec::with_capacity(2 * spec.dampers.len());
    for (story, d) in spec.dampers.iter().enumerate() {
        stiffness += &patterns[story] * (proj * d.k_ve);
        damping += &patterns[story] * (proj * d.c_ve);
        let mut pk = ParameterBinding::zero(format!("k_ve_{}", story + 1), n, d.k_ve);
        pk.d_stiffness = &patterns[story] * proj;
        parameters.push(pk);
    }
    for (story, d) in spec.dampers.iter().enumerate() {
        let mut pc = ParameterBinding::zero(format!("c_ve_{}", story + 1), n, d.c_ve);
        pc.d_damping = &patterns[story] * proj;
        parameters.push(pc);
    }
    let orientation = -(&mass * DVector::from_element(n, 1.0));
    let observers = (0..n)
        .map(|story| {
            let mut row = DVector::zeros(n);
            row[story] = 1.0;
            if story > 0 {
                row[story - 1] = -1.0;
            }
            ResponseObserver::displacement(format!("drift_{}", story + 1), row)
        })
        .collect();

    let mut model = SystemModel::new(mass, damping, stiffness, orientation, parameters, observers)?;
    model.recipe = Recipe::ShearBuilding(spec.clone());
    Ok(model)
}
