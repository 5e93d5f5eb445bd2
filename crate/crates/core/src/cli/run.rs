//! Orchestration: impulse run, sensitivity runs, component table, estimator.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::*;
use crate::error::{Error, Result};
use crate::etdm::{impulse_response, impulse_sensitivity, CoefficientMap, ImpulseRun, DENSE_LIMIT};
use crate::excitation::{
    modulated_correlation, orthogonal_basis, spectral_basis, white_noise_spectrum, ExcitationBasis, ModulatedProcess,
    SpectrumModel, TimeGrid,
};
use crate::fdmis::{fdmis_estimate, Family, PerturbedPair};
use crate::model::{build_sdof, build_shear_building, Damper, RayleighSpec, ShearBuildingSpec, SystemModel};
use crate::reliability::{isee_estimate, ComponentTable, LimitStateSystem};
use crate::sampling::SamplerConfig;
use crate::sdm::{importance_pmf, sdm_estimate, uniform_pmf, ParameterMap};

/// Parameter of `linear_components` models that scales every row.
pub const AMPLITUDE: &str = "amplitude";
/// Row label of the failure probability in reports.
pub const PROBABILITY: &str = "probability";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub impulse_runs: usize,
    pub sensitivity_runs: usize,
}

pub fn build_model(cfg: &ModelConfig) -> Result<Option<SystemModel>> {
    Ok(match cfg {
        ModelConfig::Sdof { omega_n_rad_s, zeta_n } => Some(build_sdof(*omega_n_rad_s, *zeta_n)?),
        ModelConfig::ShearBuilding {
            masses_kg,
            story_stiffness_n_m,
            rayleigh,
            dampers,
            brace_cos,
        } => Some(build_shear_building(&ShearBuildingSpec {
            masses: masses_kg.clone(),
            stiffnesses: story_stiffness_n_m.clone(),
            rayleigh: rayleigh.map(|r| RayleighSpec {
                mode_a: r.mode_a,
                mode_b: r.mode_b,
                zeta: r.zeta,
            }),
            dampers: dampers
                .iter()
                .map(|d| Damper {
                    k_ve: d.k_ve_n_m,
                    c_ve: d.c_ve_n_s_m,
                })
                .collect(),
            brace_cos: *brace_cos,
        })?),
        ModelConfig::LinearComponents { .. } => None,
    })
}

pub fn build_basis(exc: &ExcitationConfig, grid: &TimeGrid) -> Result<ExcitationBasis> {
    match *exc {
        ExcitationConfig::WhiteNoiseSpectral {
            s_m2_s3,
            omega_min_rad_s,
            omega_max_rad_s,
            q,
        } => {
            let spec = SpectrumModel::new(white_noise_spectrum(s_m2_s3)?, omega_min_rad_s, omega_max_rad_s, q)?;
            spectral_basis(&spec, grid)
        }
        ExcitationConfig::ModulatedCorrelation {
            s0_m2_s3,
            omega_g_rad_s,
            zeta_g,
            t_a_s,
            t_b_s,
            t_c_s,
            lambda_1_s,
            eig_clip,
        } => {
            let p = ModulatedProcess::new(s0_m2_s3, omega_g_rad_s, zeta_g, t_a_s, t_b_s, t_c_s, lambda_1_s)?;
            orthogonal_basis(&modulated_correlation(p), grid, eig_clip)
        }
    }
}

struct Dynamics {
    model: SystemModel,
    basis: Arc<ExcitationBasis>,
    run: ImpulseRun,
    excitation: ExcitationConfig,
}

/// Everything needed by the estimators for one configuration.
pub struct Problem {
    dynamics: Option<Dynamics>,
    map: CoefficientMap,
    table: ComponentTable,
    pub counters: Counters,
}

impl Problem {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let (dynamics, map) = match &cfg.model {
            ModelConfig::LinearComponents { rows } => (None, CoefficientMap::from_rows(rows)?),
            _ => {
                let model = build_model(&cfg.model)?.expect("dynamic model");
                let g = cfg.grid.ok_or_else(|| Error::config("grid", "missing"))?;
                let grid = TimeGrid::from_duration(g.dt_s, g.duration_s)?;
                let excitation = cfg.excitation.clone().ok_or_else(|| Error::config("excitation", "missing"))?;
                let basis = Arc::new(build_basis(&excitation, &grid)?);
                let run = impulse_response(&model, &grid)?;
                let map = CoefficientMap::convolution(basis.clone(), &run.series)?.materialize(DENSE_LIMIT);
                (
                    Some(Dynamics {
                        model,
                        basis,
                        run,
                        excitation,
                    }),
                    map,
                )
            }
        };
        if map.observers() != cfg.thresholds.c.len() {
            return Err(Error::config(
                "thresholds.c",
                format!("expected {} entries, got {}", map.observers(), cfg.thresholds.c.len()),
            ));
        }
        let table = ComponentTable::from_map(&map, &cfg.thresholds.c, cfg.thresholds.symmetric)?;
        let counters = Counters {
            impulse_runs: dynamics.is_some() as usize,
            sensitivity_runs: 0,
        };
        Ok(Self {
            dynamics,
            map,
            table,
            counters,
        })
    }

    pub fn map(&self) -> &CoefficientMap {
        &self.map
    }
    pub fn table(&self) -> &ComponentTable {
        &self.table
    }
    pub fn model(&self) -> Option<&SystemModel> {
        self.dynamics.as_ref().map(|d| &d.model)
    }
    pub fn basis(&self) -> Option<&Arc<ExcitationBasis>> {
        self.dynamics.as_ref().map(|d| &d.basis)
    }

    pub fn system(&self) -> LimitStateSystem<'_> {
        LimitStateSystem {
            table: &self.table,
            map: &self.map,
        }
    }

    /// Every parameter this problem can differentiate with respect to.
    pub fn parameter_names(&self) -> Vec<String> {
        match &self.dynamics {
            None => vec![AMPLITUDE.to_string()],
            Some(d) => {
                let mut v: Vec<String> = d.model.parameters().iter().map(|p| p.name.clone()).collect();
                v.push(d.excitation.intensity_name().to_string());
                v
            }
        }
    }

    fn intensity(&self, name: &str) -> Option<f64> {
        self.dynamics
            .as_ref()
            .filter(|d| d.excitation.intensity_name() == name)
            .map(|d| d.excitation.intensity())
    }

    /// Coefficient map of `d r / d theta`.
    pub fn sensitivity_map(&mut self, name: &str) -> Result<CoefficientMap> {
        if self.dynamics.is_none() {
            return match name {
                AMPLITUDE => Ok(self.map.clone()),
                other => Err(Error::UnknownParameter(other.to_string())),
            };
        }
        if let Some(s) = self.intensity(name) {
            // psi scales with sqrt(S).
            return Ok(self.map.scaled(0.5 / s));
        }
        let d = self.dynamics.as_ref().expect("dynamics");
        let grid = *d.basis.grid();
        let series = impulse_sensitivity(&d.model, name, &grid, &d.run)?;
        self.counters.sensitivity_runs += 1;
        CoefficientMap::convolution(d.basis.clone(), &series)
    }

    /// Base and `theta (1 + rel_step)` problems for the finite-difference reference.
    pub fn perturbed_pair(&mut self, name: &str, rel_step: f64, cfg: &RunConfig) -> Result<PerturbedPair> {
        let (c, sym) = (&cfg.thresholds.c, cfg.thresholds.symmetric);
        let base = Family {
            table: self.table.clone(),
            map: self.map.clone(),
        };
        let (map, delta) = match &self.dynamics {
            None if name == AMPLITUDE => (self.map.scaled(1.0 + rel_step), rel_step),
            None => return Err(Error::UnknownParameter(name.to_string())),
            Some(_) if self.intensity(name).is_some() => {
                let s = self.intensity(name).expect("intensity");
                (self.map.scaled((1.0 + rel_step).sqrt()), s * rel_step)
            }
            Some(d) => {
                let value = d.model.parameter(name)?.value;
                let delta = value * rel_step;
                let shifted = d.model.with_parameter(name, value + delta)?;
                let run = impulse_response(&shifted, d.basis.grid())?;
                self.counters.impulse_runs += 1;
                (
                    CoefficientMap::convolution(d.basis.clone(), &run.series)?.materialize(DENSE_LIMIT),
                    delta,
                )
            }
        };
        PerturbedPair::new(base, Family::new(map, c, sym)?, delta)
    }
}

mod num {
    use serde::{Deserialize, Deserializer, Serializer};

    /// Finite values as numbers, others as `"NaN"`, `"inf"`, `"-inf"`.
    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Num {
            F(f64),
            S(String),
        }
        match Num::deserialize(d)? {
            Num::F(v) => Ok(v),
            Num::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub parameter: String,
    #[serde(with = "num")]
    pub value: f64,
    #[serde(with = "num")]
    pub cov: f64,
    pub n_evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub j: usize,
    pub parameter: String,
    #[serde(with = "num")]
    pub mu_j: f64,
    #[serde(with = "num")]
    pub delta_j: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub method: Method,
    pub estimates: Vec<EstimateRow>,
    #[serde(skip)]
    pub history: Vec<HistoryRow>,
    pub wall_time_s: f64,
    pub seed: u64,
    pub workers: usize,
    pub counters: Counters,
    pub components: usize,
    pub warnings: Vec<String>,
    pub config: RunConfig,
}

impl RunReport {
    pub fn converged(&self) -> bool {
        self.estimates.iter().all(|e| e.converged)
    }
}

fn push_history(out: &mut Vec<HistoryRow>, name: &str, h: &[(f64, f64)]) {
    out.extend(h.iter().enumerate().map(|(j, &(mu, delta))| HistoryRow {
        j: j + 1,
        parameter: name.to_string(),
        mu_j: mu,
        delta_j: delta,
    }));
}

/// Execute the configured estimator.
pub fn run(cfg: &RunConfig, workers: usize) -> Result<RunReport> {
    let start = Instant::now();
    let mut problem = Problem::build(cfg)?;
    let e = cfg.estimator;
    let sampler = SamplerConfig {
        tol: e.tol,
        n_max: e.n_max,
        seed: e.seed,
        workers,
        ..Default::default()
    };
    let mut warnings = Vec::new();
    if !problem.table().excluded().is_empty() {
        warnings.push(format!(
            "{} components with zero coefficient norm were excluded",
            problem.table().excluded().len()
        ));
    }
    let names = if cfg.parameters.is_empty() {
        problem.parameter_names()
    } else {
        cfg.parameters.clone()
    };
    let mut estimates = Vec::new();
    let mut history = Vec::new();
    match e.method {
        Method::Isee => {
            let est = isee_estimate(&problem.system(), &sampler)?;
            estimates.push(EstimateRow {
                parameter: PROBABILITY.into(),
                value: est.value,
                cov: est.cov,
                n_evals: est.n_evals,
                converged: est.converged,
            });
            push_history(&mut history, PROBABILITY, &est.history);
        }
        Method::Sdm => {
            let maps = names
                .iter()
                .map(|n| problem.sensitivity_map(n))
                .collect::<Result<Vec<_>>>()?;
            let params: Vec<ParameterMap> = names
                .iter()
                .zip(&maps)
                .map(|(name, map)| ParameterMap { name, map })
                .collect();
            let pmf = match e.pmf {
                PmfKind::Importance => importance_pmf(problem.table())?,
                PmfKind::Uniform => uniform_pmf(problem.table())?,
            };
            let est = sdm_estimate(&problem.system(), &pmf, &params, &sampler)?;
            for p in &est.parameters {
                estimates.push(EstimateRow {
                    parameter: p.name.clone(),
                    value: p.mean,
                    cov: p.cov,
                    n_evals: est.n_evals,
                    converged: p.converged,
                });
            }
            // Rows ordered by sample index, then parameter.
            for j in 0..est.n_samples {
                for p in &est.parameters {
                    let (mu, delta) = p.history[j];
                    history.push(HistoryRow {
                        j: j + 1,
                        parameter: p.name.clone(),
                        mu_j: mu,
                        delta_j: delta,
                    });
                }
            }
        }
        Method::Fdmis => {
            for name in &names {
                let pair = problem.perturbed_pair(name, e.fd_rel_step, cfg)?;
                let est = fdmis_estimate(&pair, &sampler)?;
                estimates.push(EstimateRow {
                    parameter: name.clone(),
                    value: est.value,
                    cov: est.cov,
                    n_evals: est.n_evals,
                    converged: est.converged,
                });
                push_history(&mut history, name, &est.history);
            }
        }
    }
    Ok(RunReport {
        method: e.method,
        estimates,
        history,
        wall_time_s: start.elapsed().as_secs_f64(),
        seed: e.seed,
        workers,
        counters: problem.counters,
        components: problem.table().len(),
        warnings,
        config: cfg.clone(),
    })
}
