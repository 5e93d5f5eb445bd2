//! Finite-difference sensitivity reference with a two-family mixture
//! importance density.
//!
//! Components of the base and perturbed problems form one mixture with
//! weights proportional to their `P`; the summand is
//! `Z [H(-G') - H(-G)] / (failing components of both families at x)`.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::etdm::{impulse_response, CoefficientMap, DENSE_LIMIT};
use crate::excitation::ExcitationBasis;
use crate::model::SystemModel;
use crate::reliability::{ComponentTable, DiscretePmf, LimitStateSystem};
use crate::sampling::{run_batched, RunningStats, SamplerConfig};

pub const DEFAULT_REL_STEP: f64 = 1e-3;

/// A component table with the coefficient map it came from.
#[derive(Debug, Clone)]
pub struct Family {
    pub table: ComponentTable,
    pub map: CoefficientMap,
}

impl Family {
    pub fn new(map: CoefficientMap, thresholds: &[f64], symmetric: bool) -> Result<Self> {
        let table = ComponentTable::from_map(&map, thresholds, symmetric)?;
        Ok(Self { table, map })
    }

    fn system(&self) -> LimitStateSystem<'_> {
        LimitStateSystem {
            table: &self.table,
            map: &self.map,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbedPair {
    pub base: Family,
    pub perturbed: Family,
    /// Absolute perturbation.
    pub delta_theta: f64,
}

impl PerturbedPair {
    pub fn new(base: Family, perturbed: Family, delta_theta: f64) -> Result<Self> {
        if !(delta_theta != 0.0 && delta_theta.is_finite()) {
            return Err(Error::InvalidArgument("perturbation must be nonzero".into()));
        }
        let (b, p) = (&base.map, &perturbed.map);
        if (b.observers(), b.steps(), b.dim()) != (p.observers(), p.steps(), p.dim())
            || base.table.thresholds() != perturbed.table.thresholds()
            || base.table.symmetric() != perturbed.table.symmetric()
        {
            return Err(Error::InvalidArgument(
                "base and perturbed problems must share the grid, basis and thresholds".into(),
            ));
        }
        Ok(Self {
            base,
            perturbed,
            delta_theta,
        })
    }

    /// `Z_B = sum P(theta) + sum P(theta + d theta)`.
    pub fn z(&self) -> f64 {
        self.base.table.total_prob() + self.perturbed.table.total_prob()
    }

    /// Base and perturbed exchanged, with the step negated.
    pub fn swapped(self) -> Self {
        Self {
            base: self.perturbed,
            perturbed: self.base,
            delta_theta: -self.delta_theta,
        }
    }
}

/// Both problems for `theta` and `theta (1 + rel_step)` on one basis.
pub fn build_perturbed_pair(
    model: &SystemModel,
    theta: &str,
    rel_step: f64,
    basis: Arc<ExcitationBasis>,
    thresholds: &[f64],
    symmetric: bool,
) -> Result<PerturbedPair> {
    if !(rel_step > 0.0 && rel_step.is_finite()) {
        return Err(Error::InvalidArgument(format!("rel_step must be positive, got {rel_step}")));
    }
    let value = model.parameter(theta)?.value;
    let delta = value * rel_step;
    let shifted = model.with_parameter(theta, value + delta)?;
    let grid = *basis.grid();
    let family = |m: &SystemModel| -> Result<Family> {
        let run = impulse_response(m, &grid)?;
        let map = CoefficientMap::convolution(basis.clone(), &run.series)?.materialize(DENSE_LIMIT / 2);
        Family::new(map, thresholds, symmetric)
    };
    PerturbedPair::new(family(model)?, family(&shifted)?, delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdEstimate {
    /// Sensitivity `dP / d theta`.
    pub value: f64,
    /// Estimated `P(theta + d theta) - P(theta)`.
    pub difference: f64,
    pub cov: f64,
    pub n_samples: usize,
    /// Two limit-state passes per sample.
    pub n_evals: usize,
    pub converged: bool,
    /// Running `(sensitivity, cov)`.
    pub history: Vec<(f64, f64)>,
}

impl FdEstimate {
    pub fn std_error(&self) -> f64 {
        self.cov * self.value.abs()
    }
}

/// Orders the two families independently of which one is the base, so that
/// swapping them negates the estimate under the same seed.
fn canonical_order(pair: &PerturbedPair) -> (&Family, &Family, f64) {
    let (zb, zp) = (pair.base.table.total_prob(), pair.perturbed.table.total_prob());
    let base_first = match zb.total_cmp(&zp) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => {
            let key = |f: &Family| f.table.components().iter().map(|c| c.norm).collect::<Vec<_>>();
            let (kb, kp) = (key(&pair.base), key(&pair.perturbed));
            kb.iter()
                .zip(&kp)
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .map(|o| o.is_lt())
                .unwrap_or(true)
        }
    };
    if base_first {
        (&pair.base, &pair.perturbed, 1.0)
    } else {
        (&pair.perturbed, &pair.base, -1.0)
    }
}

pub fn fdmis_estimate(pair: &PerturbedPair, cfg: &SamplerConfig) -> Result<FdEstimate> {
    cfg.validate()?;
    let (first, second, sign) = canonical_order(pair);
    let families = [first, second];
    let weights: Vec<f64> = families
        .iter()
        .flat_map(|f| f.table.components().iter().map(|c| c.prob))
        .collect();
    if weights.is_empty() {
        return Err(Error::NoFailureRegion);
    }
    let pmf = DiscretePmf::from_weights(&weights)?;
    let split = first.table.len();
    let z = pair.z();
    let draw = |_: usize, rng: &mut ChaCha8Rng| -> Result<f64> {
        let pos = pmf.sample(rng);
        let (own, other, local) = if pos < split { (0, 1, pos) } else { (1, 0, pos - split) };
        let comp = &families[own].table.components()[local];
        let sys = families[own].system();
        let x = sys.sample_component_conditional(comp.id, rng)?;
        // When the same component also fails in the other family both
        // indicators are one and the summand vanishes.
        if families[other].table.position(comp.id).is_some() {
            let g = families[other].system().g(comp.id, &x)?;
            if g <= 0.0 {
                return Ok(0.0);
            }
        }
        let proj = families[0].map.project(&x)?;
        let mut counts = [0usize; 2];
        for f in 0..2 {
            let s = families[f].system();
            let r = s.responses(&proj);
            counts[f] = if f == own {
                s.failing_count(&r, Some(comp.id)) + 1
            } else {
                s.failing_count(&r, None)
            };
        }
        let h = |c: usize| if c > 0 { 1.0 } else { 0.0 };
        Ok(z * (h(counts[1]) - h(counts[0])) / (counts[0] + counts[1]) as f64)
    };
    let mut stats = RunningStats::default();
    let mut history = Vec::new();
    let dt = pair.delta_theta;
    let n = run_batched(cfg, draw, |j, v| {
        stats.push(sign * v);
        history.push((stats.mean() / dt, stats.cov()));
        j + 1 >= cfg.min_samples && stats.cov() <= cfg.tol
    })?;
    let cov = stats.cov();
    Ok(FdEstimate {
        value: stats.mean() / dt,
        difference: stats.mean(),
        cov,
        n_samples: n,
        n_evals: 2 * n,
        converged: stats.any_nonzero() && n >= cfg.min_samples && cov <= cfg.tol,
        history,
    })
}
