//! Failure-probability sensitivities by surface decomposition.
//!
//! The derivative of the system failure probability is a sum of integrals
//! over the pieces of each component hyperplane on which every other
//! component is safe. One importance-sampling stream over signed component
//! indices and hyperplane points estimates all parameters at once:
//!
//! `temp[theta] = (1/h) * (sigma b_I . x / |a_I|) * 1[others safe at x] * phi(beta)`.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::etdm::CoefficientMap;
use crate::reliability::{normal, DiscretePmf, LimitStateSystem};
use crate::reliability::ComponentTable;
use crate::sampling::{run_batched, RunningStats, SamplerConfig};

pub type SdmConfig = SamplerConfig;

/// `h(k, i, sigma) = P / sum P` over table positions.
pub fn importance_pmf(table: &ComponentTable) -> Result<DiscretePmf> {
    let w: Vec<f64> = table.components().iter().map(|c| c.prob).collect();
    if w.is_empty() {
        return Err(Error::NoFailureRegion);
    }
    DiscretePmf::from_weights(&w)
}

/// Equal weight on every signed component in the table.
pub fn uniform_pmf(table: &ComponentTable) -> Result<DiscretePmf> {
    if table.is_empty() {
        return Err(Error::NoFailureRegion);
    }
    DiscretePmf::from_weights(&vec![1.0; table.len()])
}

/// Sensitivity map for one parameter.
#[derive(Debug, Clone, Copy)]
pub struct ParameterMap<'a> {
    pub name: &'a str,
    pub map: &'a CoefficientMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterEstimate {
    pub name: String,
    pub mean: f64,
    /// `NaN` when every sample contributed zero.
    pub cov: f64,
    pub converged: bool,
    pub history: Vec<(f64, f64)>,
}

impl ParameterEstimate {
    pub fn std_error(&self) -> f64 {
        self.cov * self.mean.abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityEstimate {
    pub parameters: Vec<ParameterEstimate>,
    pub n_samples: usize,
    /// Indicator passes, one per sample and shared by all parameters.
    pub n_evals: usize,
}

impl SensitivityEstimate {
    pub fn get(&self, name: &str) -> Option<&ParameterEstimate> {
        self.parameters.iter().find(|p| p.name == name)
    }
    pub fn converged(&self) -> bool {
        self.parameters.iter().all(|p| p.converged)
    }
}

pub fn sdm_estimate(
    system: &LimitStateSystem,
    pmf: &DiscretePmf,
    params: &[ParameterMap],
    cfg: &SdmConfig,
) -> Result<SensitivityEstimate> {
    cfg.validate()?;
    if params.is_empty() {
        return Err(Error::InvalidArgument("no parameters to estimate".into()));
    }
    let table = system.table;
    if pmf.len() != table.len() {
        return Err(Error::DimensionMismatch {
            what: "pmf length",
            expected: table.len(),
            got: pmf.len(),
        });
    }
    let a = system.map;
    for p in params {
        if (p.map.observers(), p.map.steps(), p.map.dim()) != (a.observers(), a.steps(), a.dim()) {
            return Err(Error::DimensionMismatch {
                what: "sensitivity map shape",
                expected: a.observers() * a.steps() * a.dim(),
                got: p.map.observers() * p.map.steps() * p.map.dim(),
            });
        }
    }
    let draw = |_: usize, rng: &mut ChaCha8Rng| -> Result<Vec<f64>> {
        let pos = pmf.sample(rng);
        let comp = &table.components()[pos];
        let x = system.sample_on_hyperplane(comp.id, rng)?;
        let proj = a.project(&x)?;
        let r = system.responses(&proj);
        if !system.all_safe_except(&r, comp.id) {
            return Ok(vec![0.0; params.len()]);
        }
        let scale = normal::pdf(comp.beta) / (pmf.prob(pos) * comp.norm) * comp.id.sign.factor();
        Ok(params
            .iter()
            .map(|p| scale * p.map.value_at(&proj, comp.id.observer, comp.id.step))
            .collect())
    };
    let mut stats = vec![RunningStats::default(); params.len()];
    let mut history: Vec<Vec<(f64, f64)>> = vec![Vec::new(); params.len()];
    let n = run_batched(cfg, draw, |j, temps| {
        let mut done = j + 1 >= cfg.min_samples;
        for ((s, h), t) in stats.iter_mut().zip(history.iter_mut()).zip(temps) {
            s.push(t);
            h.push((s.mean(), s.cov()));
            done &= s.cov() < cfg.tol;
        }
        done
    })?;
    let parameters = params
        .iter()
        .zip(stats)
        .zip(history)
        .map(|((p, s), history)| {
            let (cov, converged) = if s.any_nonzero() {
                (s.cov(), s.cov() < cfg.tol)
            } else {
                (f64::NAN, false)
            };
            ParameterEstimate {
                name: p.name.to_string(),
                mean: s.mean(),
                cov,
                converged,
                history,
            }
        })
        .collect();
    Ok(SensitivityEstimate {
        parameters,
        n_samples: n,
        n_evals: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reliability::{Sign, SignedComponentId};
    use rand::SeedableRng;

    fn fig1() -> (CoefficientMap, Vec<f64>) {
        (
            CoefficientMap::from_rows(&[vec![-2.0, 1.0], vec![-1.0, 3.0], vec![6.0, 7.0], vec![2.0, -1.0]]).unwrap(),
            vec![12.0, 18.0, 36.0, 10.0],
        )
    }

    #[test]
    fn pmf_shapes() {
        let (map, c) = fig1();
        let table = ComponentTable::from_map(&map, &c, true).unwrap();
        let u = uniform_pmf(&table).unwrap();
        assert!(u.probs().iter().all(|p| *p == 1.0 / 8.0));
        let t = build_equal();
        let h = importance_pmf(&t).unwrap();
        assert_eq!(h.probs(), &[0.5, 0.5]);
        assert!((importance_pmf(&table).unwrap().total_mass() - 1.0).abs() <= 1e-15);
    }

    fn build_equal() -> ComponentTable {
        crate::reliability::build_component_table(&[vec![1.0]], &[2.0], true).unwrap()
    }

    #[test]
    fn hyperplane_samples_lie_on_the_plane() {
        let (map, c) = fig1();
        let table = ComponentTable::from_map(&map, &c, true).unwrap();
        let sys = LimitStateSystem::new(&table, &map).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for comp in table.components() {
            let u = sys.unit_vector(comp.id).unwrap();
            for _ in 0..100 {
                let x = sys.sample_on_hyperplane(comp.id, &mut rng).unwrap();
                assert!(sys.g(comp.id, &x).unwrap().abs() / comp.threshold <= 1e-10);
                let along: f64 = x.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                assert!((along - comp.beta).abs() <= 1e-12 * comp.beta);
            }
        }
    }

    #[test]
    fn single_component_indicator_is_one() {
        let map = CoefficientMap::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let table = ComponentTable::from_map(&map, &[3.0], false).unwrap();
        let sys = LimitStateSystem::new(&table, &map).unwrap();
        let id = SignedComponentId::new(0, 0, Sign::Plus);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = sys.sample_on_hyperplane(id, &mut rng).unwrap();
            let r = sys.responses(&map.project(&x).unwrap());
            assert!(sys.all_safe_except(&r, id));
        }
    }

    #[test]
    fn zero_sensitivity_is_flagged() {
        let (map, c) = fig1();
        let zero = CoefficientMap::from_rows(&vec![vec![0.0; 2]; 4]).unwrap();
        let table = ComponentTable::from_map(&map, &c, false).unwrap();
        let sys = LimitStateSystem::new(&table, &map).unwrap();
        let pmf = importance_pmf(&table).unwrap();
        let cfg = SdmConfig {
            n_max: 40,
            ..Default::default()
        };
        let est = sdm_estimate(&sys, &pmf, &[ParameterMap { name: "z", map: &zero }], &cfg).unwrap();
        let p = &est.parameters[0];
        assert_eq!(p.mean, 0.0);
        assert!(p.cov.is_nan());
        assert!(!p.converged);
        assert_eq!(est.n_samples, 40);
        assert_eq!(p.history.len(), 40);
    }

    #[test]
    fn negated_sensitivity_negates_exactly() {
        let (map, c) = fig1();
        let neg = map.scaled(-1.0);
        let table = ComponentTable::from_map(&map, &c, true).unwrap();
        let sys = LimitStateSystem::new(&table, &map).unwrap();
        let pmf = importance_pmf(&table).unwrap();
        let cfg = SdmConfig {
            seed: 5,
            ..Default::default()
        };
        let est = sdm_estimate(
            &sys,
            &pmf,
            &[ParameterMap { name: "a", map: &map }, ParameterMap { name: "b", map: &neg }],
            &cfg,
        )
        .unwrap();
        let (a, b) = (&est.parameters[0], &est.parameters[1]);
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.0, -y.0);
        }
        // Adding a parameter leaves the evaluation stream untouched.
        let alone = sdm_estimate(&sys, &pmf, &[ParameterMap { name: "a", map: &map }], &cfg).unwrap();
        assert_eq!(alone.parameters[0].history[..], a.history[..alone.n_samples]);
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let (map, c) = fig1();
        let table = ComponentTable::from_map(&map, &c, false).unwrap();
        let sys = LimitStateSystem::new(&table, &map).unwrap();
        let pmf = importance_pmf(&table).unwrap();
        assert!(sdm_estimate(&sys, &pmf, &[], &SdmConfig::default()).is_err());
        let small = CoefficientMap::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(sdm_estimate(&sys, &pmf, &[ParameterMap { name: "s", map: &small }], &SdmConfig::default()).is_err());
    }
}
