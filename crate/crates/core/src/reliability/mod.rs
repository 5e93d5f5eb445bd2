//! Component reliability in closed form, the system limit state, and the
//! component-mixture importance sampler for the system failure probability.
//!
//! A component is the event that observer `k` crosses its threshold at step
//! `i`. With `symmetric` thresholds each `(k, i)` yields two signed
//! components: `c_k - r <= 0` (`+`) and `c_k + r <= 0` (`-`). For a signed
//! component the coefficient vector is `sigma * a_i`, so `beta = c_k / |a_i|`
//! and `P = Phi(-beta)` for both signs.

pub mod normal;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::etdm::{dot, CoefficientMap, Projection};
use crate::sampling::{run_batched, RunningStats, SamplerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// `(k, i, sigma)`, 0-based. Ordering is `k`, then `i`, then `+` before `-`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignedComponentId {
    pub observer: usize,
    pub step: usize,
    pub sign: Sign,
}

impl SignedComponentId {
    pub fn new(observer: usize, step: usize, sign: Sign) -> Self {
        Self { observer, step, sign }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub id: SignedComponentId,
    pub beta: f64,
    pub prob: f64,
    pub norm: f64,
    pub threshold: f64,
}

const NO_SLOT: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct ComponentTable {
    observers: usize,
    steps: usize,
    symmetric: bool,
    thresholds: Vec<f64>,
    components: Vec<Component>,
    slots: Vec<u32>,
    excluded: Vec<SignedComponentId>,
}

/// Closed-form `beta` and `P` for every signed component.
///
/// Components with zero norm cannot fail; they are left out and listed in
/// [`ComponentTable::excluded`].
pub fn build_component_table(norms: &[Vec<f64>], thresholds: &[f64], symmetric: bool) -> Result<ComponentTable> {
    if norms.is_empty() {
        return Err(Error::InvalidArgument("no observers".into()));
    }
    if thresholds.len() != norms.len() {
        return Err(Error::DimensionMismatch {
            what: "thresholds",
            expected: norms.len(),
            got: thresholds.len(),
        });
    }
    if let Some(c) = thresholds.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(Error::InvalidArgument(format!("thresholds must be positive, got {c}")));
    }
    let steps = norms[0].len();
    if let Some(bad) = norms.iter().find(|n| n.len() != steps) {
        return Err(Error::DimensionMismatch {
            what: "norm series",
            expected: steps,
            got: bad.len(),
        });
    }
    let signs: &[Sign] = if symmetric { &[Sign::Plus, Sign::Minus] } else { &[Sign::Plus] };
    let mut components = Vec::with_capacity(norms.len() * steps * signs.len());
    let mut slots = Vec::with_capacity(norms.len() * steps * signs.len());
    let mut excluded = Vec::new();
    for (k, series) in norms.iter().enumerate() {
        let c = thresholds[k];
        for (i, &norm) in series.iter().enumerate() {
            for &sign in signs {
                let id = SignedComponentId::new(k, i, sign);
                if !(norm > 0.0 && norm.is_finite()) {
                    excluded.push(id);
                    slots.push(NO_SLOT);
                    continue;
                }
                let beta = c / norm;
                slots.push(components.len() as u32);
                components.push(Component {
                    id,
                    beta,
                    prob: normal::tail(beta),
                    norm,
                    threshold: c,
                });
            }
        }
    }
    Ok(ComponentTable {
        observers: norms.len(),
        steps,
        symmetric,
        thresholds: thresholds.to_vec(),
        components,
        slots,
        excluded,
    })
}

impl ComponentTable {
    /// Table straight from a coefficient map.
    pub fn from_map(map: &CoefficientMap, thresholds: &[f64], symmetric: bool) -> Result<Self> {
        build_component_table(&map.norms(), thresholds, symmetric)
    }

    pub fn observers(&self) -> usize {
        self.observers
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn symmetric(&self) -> bool {
        self.symmetric
    }
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
    pub fn components(&self) -> &[Component] {
        &self.components
    }
    pub fn len(&self) -> usize {
        self.components.len()
    }
    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
    /// Zero-norm components left out of the table.
    pub fn excluded(&self) -> &[SignedComponentId] {
        &self.excluded
    }

    fn slot_index(&self, id: SignedComponentId) -> Option<usize> {
        if id.observer >= self.observers || id.step >= self.steps {
            return None;
        }
        if !self.symmetric && id.sign == Sign::Minus {
            return None;
        }
        let per = if self.symmetric { 2 } else { 1 };
        let s = (id.observer * self.steps + id.step) * per + (id.sign == Sign::Minus) as usize;
        Some(s)
    }

    /// Position of `id` in [`components`](Self::components).
    pub fn position(&self, id: SignedComponentId) -> Option<usize> {
        self.slot_index(id)
            .map(|s| self.slots[s])
            .filter(|&p| p != NO_SLOT)
            .map(|p| p as usize)
    }

    pub fn get(&self, id: SignedComponentId) -> Result<&Component> {
        match self.position(id) {
            Some(p) => Ok(&self.components[p]),
            None if self.slot_index(id).is_some() => Err(Error::ExcludedComponent(format!("{id:?}"))),
            None => Err(Error::InvalidArgument(format!("component {id:?} out of range"))),
        }
    }

    /// Sum of component probabilities.
    pub fn total_prob(&self) -> f64 {
        compensated_sum(self.components.iter().map(|c| c.prob))
    }

    /// Largest component probability.
    pub fn max_prob(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.prob))
    }

    /// Smallest `beta` in the table.
    pub fn min_beta(&self) -> f64 {
        self.components.iter().fold(f64::INFINITY, |m, c| m.min(c.beta))
    }
}

pub(crate) fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        comp += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    }
    s + comp
}

/// Discrete distribution over table positions.
#[derive(Debug, Clone)]
pub struct DiscretePmf {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscretePmf {
    /// Normalize nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let total = compensated_sum(weights.iter().copied());
        if !(total > 0.0) {
            return Err(Error::NoFailureRegion);
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        Ok(Self { probs, cumulative })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
    /// Compensated sum of all probabilities.
    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    /// Index whose cumulative interval contains `u` in `[0, 1)`.
    pub fn index_for(&self, u: f64) -> usize {
        let last = *self.cumulative.last().expect("non-empty pmf");
        let target = u * last;
        let mut i = self.cumulative.partition_point(|&c| c <= target);
        if i >= self.probs.len() {
            i = self.probs.len() - 1;
        }
        while self.probs[i] == 0.0 && i > 0 {
            i -= 1;
        }
        i
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        self.index_for(rng.random::<f64>())
    }
}

/// Draw `x` from the standard normal conditioned on `x . u >= beta`, `|u| = 1`.
pub fn conditional_from_unit(u: &[f64], beta: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v = 1.0 - rng.random::<f64>();
    let t = normal::truncated_tail_quantile(beta, v);
    let mut x: Vec<f64> = (0..u.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let along = dot(&x, u);
    for (xi, ui) in x.iter_mut().zip(u) {
        *xi += (t - along) * ui;
    }
    x
}

/// Draw a standard normal `x` and move it onto `x . u = beta`.
pub fn hyperplane_from_unit(u: &[f64], beta: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x: Vec<f64> = (0..u.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let along = dot(&x, u);
    for (xi, ui) in x.iter_mut().zip(u) {
        *xi += (beta - along) * ui;
    }
    x
}

/// Component table paired with the coefficient map it was built from.
#[derive(Debug, Clone, Copy)]
pub struct LimitStateSystem<'a> {
    pub table: &'a ComponentTable,
    pub map: &'a CoefficientMap,
}

impl<'a> LimitStateSystem<'a> {
    pub fn new(table: &'a ComponentTable, map: &'a CoefficientMap) -> Result<Self> {
        if table.observers() != map.observers() || table.steps() != map.steps() {
            return Err(Error::DimensionMismatch {
                what: "component table vs coefficient map",
                expected: map.observers() * map.steps(),
                got: table.observers() * table.steps(),
            });
        }
        Ok(Self { table, map })
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    /// `u = sigma a_i / |a_i|`.
    pub fn unit_vector(&self, id: SignedComponentId) -> Result<DVector<f64>> {
        self.table.get(id)?;
        let row = self.map.row(id.observer, id.step);
        Ok(row.normalize() * id.sign.factor())
    }

    /// `x* = beta u`.
    pub fn design_point(&self, id: SignedComponentId) -> Result<DVector<f64>> {
        let beta = self.table.get(id)?.beta;
        Ok(self.unit_vector(id)? * beta)
    }

    /// `g_id(x) = c_k - sigma a_i . x`.
    pub fn g(&self, id: SignedComponentId, x: &[f64]) -> Result<f64> {
        let c = self.table.get(id)?.threshold;
        Ok(c - id.sign.factor() * self.map.dot_row(id.observer, id.step, x))
    }

    /// All responses at a projected point, flattened as `k * steps + i`.
    pub fn responses(&self, proj: &Projection) -> Vec<f64> {
        let mut buf = vec![0.0; self.map.observers() * self.map.steps()];
        self.map.responses_into(proj, &mut buf);
        buf
    }

    /// `G(x) = min g` with the first minimizer in `(k, i, +, -)` order.
    pub fn system_g(&self, x: &[f64]) -> Result<(f64, SignedComponentId)> {
        let proj = self.map.project(x)?;
        let r = self.responses(&proj);
        let n = self.map.steps();
        let mut best = (f64::INFINITY, SignedComponentId::new(0, 0, Sign::Plus));
        for (k, &c) in self.table.thresholds().iter().enumerate() {
            for i in 0..n {
                let v = r[k * n + i];
                if c - v < best.0 {
                    best = (c - v, SignedComponentId::new(k, i, Sign::Plus));
                }
                if self.table.symmetric() && c + v < best.0 {
                    best = (c + v, SignedComponentId::new(k, i, Sign::Minus));
                }
            }
        }
        Ok(best)
    }

    /// Number of signed components with `g <= 0`, skipping `skip`.
    pub fn failing_count(&self, responses: &[f64], skip: Option<SignedComponentId>) -> usize {
        let n = self.map.steps();
        let mut count = 0;
        for (k, &c) in self.table.thresholds().iter().enumerate() {
            for (i, &v) in responses[k * n..(k + 1) * n].iter().enumerate() {
                if c - v <= 0.0 && skip != Some(SignedComponentId::new(k, i, Sign::Plus)) {
                    count += 1;
                }
                if self.table.symmetric() && c + v <= 0.0 && skip != Some(SignedComponentId::new(k, i, Sign::Minus))
                {
                    count += 1;
                }
            }
        }
        count
    }

    /// `true` iff every signed component other than `id` has `g > 0`.
    pub fn all_safe_except(&self, responses: &[f64], id: SignedComponentId) -> bool {
        let n = self.map.steps();
        for (k, &c) in self.table.thresholds().iter().enumerate() {
            for (i, &v) in responses[k * n..(k + 1) * n].iter().enumerate() {
                let plus_safe = c - v > 0.0 || id == SignedComponentId::new(k, i, Sign::Plus);
                let minus_safe = !self.table.symmetric() || c + v > 0.0 || id == SignedComponentId::new(k, i, Sign::Minus);
                if !(plus_safe && minus_safe) {
                    return false;
                }
            }
        }
        true
    }

    /// Conditional sample from the component-optimal density of `id`.
    pub fn sample_component_conditional(&self, id: SignedComponentId, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let beta = self.table.get(id)?.beta;
        let u = self.unit_vector(id)?;
        Ok(conditional_from_unit(u.as_slice(), beta, rng))
    }

    /// Standard normal sample moved onto the hyperplane `g_id = 0`.
    pub fn sample_on_hyperplane(&self, id: SignedComponentId, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let beta = self.table.get(id)?.beta;
        let u = self.unit_vector(id)?;
        Ok(hyperplane_from_unit(u.as_slice(), beta, rng))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityEstimate {
    pub value: f64,
    pub cov: f64,
    pub n_samples: usize,
    /// Limit-state passes, one per sample.
    pub n_evals: usize,
    pub converged: bool,
    /// Running `(value, cov)` after each sample.
    pub history: Vec<(f64, f64)>,
}

/// System failure probability by sampling a mixture of component-optimal densities.
///
/// Each sample draws a component with weight proportional to its `P`, then
/// `x` from the standard normal restricted to that component's failure
/// half-space; the summand is `Z / (number of failing components at x)`.
pub fn isee_estimate(system: &LimitStateSystem, cfg: &SamplerConfig) -> Result<ProbabilityEstimate> {
    cfg.validate()?;
    let table = system.table;
    let weights: Vec<f64> = table.components().iter().map(|c| c.prob).collect();
    if weights.is_empty() {
        return Err(Error::NoFailureRegion);
    }
    let pmf = DiscretePmf::from_weights(&weights)?;
    let z = table.total_prob();
    let draw = |_: usize, rng: &mut ChaCha8Rng| -> Result<f64> {
        let comp = &table.components()[pmf.sample(rng)];
        let x = system.sample_component_conditional(comp.id, rng)?;
        let proj = system.map.project(&x)?;
        let r = system.responses(&proj);
        // The drawn component fails by construction; counting it explicitly
        // keeps rounding at t = beta from producing a zero denominator.
        let count = system.failing_count(&r, Some(comp.id)) + 1;
        Ok(z / count as f64)
    };
    let mut stats = RunningStats::default();
    let mut history = Vec::new();
    let n = run_batched(cfg, draw, |j, v| {
        stats.push(v);
        history.push((stats.mean(), stats.cov()));
        j + 1 >= cfg.min_samples && stats.cov() <= cfg.tol
    })?;
    let cov = stats.cov();
    Ok(ProbabilityEstimate {
        value: stats.mean(),
        cov,
        n_samples: n,
        n_evals: n,
        converged: n >= cfg.min_samples && cov <= cfg.tol,
        history,
    })
}
