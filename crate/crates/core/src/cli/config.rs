//! Run configuration. Every physical field carries its unit in its name.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::fdmis::DEFAULT_REL_STEP;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelConfig {
    Sdof {
        omega_n_rad_s: f64,
        zeta_n: f64,
    },
    ShearBuilding {
        masses_kg: Vec<f64>,
        story_stiffness_n_m: Vec<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        rayleigh: Option<RayleighConfig>,
        dampers: Vec<DamperConfig>,
        brace_cos: f64,
    },
    /// Limit states `c_k - a_k . x` given directly; no dynamics.
    LinearComponents {
        rows: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayleighConfig {
    pub mode_a: usize,
    pub mode_b: usize,
    pub zeta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DamperConfig {
    pub k_ve_n_m: f64,
    pub c_ve_n_s_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExcitationConfig {
    WhiteNoiseSpectral {
        #[serde(rename = "S_m2_s3")]
        s_m2_s3: f64,
        omega_min_rad_s: f64,
        omega_max_rad_s: f64,
        q: usize,
    },
    ModulatedCorrelation {
        #[serde(rename = "S0_m2_s3")]
        s0_m2_s3: f64,
        omega_g_rad_s: f64,
        zeta_g: f64,
        t_a_s: f64,
        t_b_s: f64,
        t_c_s: f64,
        lambda_1_s: f64,
        eig_clip: f64,
    },
}

impl ExcitationConfig {
    /// Name of the intensity parameter, usable as a sensitivity parameter.
    pub fn intensity_name(&self) -> &'static str {
        match self {
            ExcitationConfig::WhiteNoiseSpectral { .. } => "S_m2_s3",
            ExcitationConfig::ModulatedCorrelation { .. } => "S0_m2_s3",
        }
    }
    pub fn intensity(&self) -> f64 {
        match self {
            ExcitationConfig::WhiteNoiseSpectral { s_m2_s3, .. } => *s_m2_s3,
            ExcitationConfig::ModulatedCorrelation { s0_m2_s3, .. } => *s0_m2_s3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridConfig {
    pub dt_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdConfig {
    /// One threshold per observer, in the observer's response units.
    pub c: Vec<f64>,
    pub symmetric: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Isee,
    Sdm,
    Fdmis,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isee" => Ok(Method::Isee),
            "sdm" => Ok(Method::Sdm),
            "fdmis" => Ok(Method::Fdmis),
            other => Err(Error::config("estimator.method", format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PmfKind {
    Importance,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorConfig {
    pub method: Method,
    pub tol: f64,
    pub n_max: usize,
    pub seed: u64,
    pub fd_rel_step: f64,
    pub pmf: PmfKind,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            method: Method::Sdm,
            tol: 0.1,
            n_max: 10_000,
            seed: 0,
            fd_rel_step: DEFAULT_REL_STEP,
            pmf: PmfKind::Importance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excitation: Option<ExcitationConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    pub thresholds: ThresholdConfig,
    pub parameters: Vec<String>,
    pub estimator: EstimatorConfig,
}

impl RunConfig {
    /// Number of time steps, if the model has dynamics.
    pub fn steps(&self) -> Option<usize> {
        self.grid.map(|g| (g.duration_s / g.dt_s).round() as usize)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        parse_config(&value)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
    RunConfig::from_json(&text)
}

/// JSON object reader that records the dotted path of every field.
struct Obj<'a> {
    path: String,
    map: &'a Map<String, Value>,
    seen: std::cell::RefCell<BTreeSet<String>>,
}

impl<'a> Obj<'a> {
    fn root(v: &'a Value) -> Result<Self> {
        match v {
            Value::Object(map) => Ok(Self {
                path: String::new(),
                map,
                seen: Default::default(),
            }),
            _ => Err(Error::config("<root>", "expected a JSON object")),
        }
    }

    fn field(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.seen.borrow_mut().insert(key.to_string());
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn req(&self, key: &str) -> Result<&'a Value> {
        self.get(key).ok_or_else(|| Error::config(self.field(key), "missing"))
    }

    fn num(&self, key: &str, v: &Value) -> Result<f64> {
        v.as_f64()
            .ok_or_else(|| Error::config(self.field(key), "expected a number"))
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.num(key, self.req(key)?)
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| self.num(key, v)).transpose()
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v = self.f64(key)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::config(self.field(key), format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    fn uint(&self, key: &str, v: &Value) -> Result<u64> {
        v.as_u64()
            .or_else(|| v.as_f64().filter(|f| *f >= 0.0 && f.fract() == 0.0 && *f < 1.8e19).map(|f| f as u64))
            .ok_or_else(|| Error::config(self.field(key), "expected a nonnegative integer"))
    }

    fn usize(&self, key: &str) -> Result<usize> {
        Ok(self.uint(key, self.req(key)?)? as usize)
    }

    fn opt_uint(&self, key: &str) -> Result<Option<u64>> {
        self.get(key).map(|v| self.uint(key, v)).transpose()
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| v.as_bool().ok_or_else(|| Error::config(self.field(key), "expected true or false")))
            .transpose()
    }

    fn str(&self, key: &str) -> Result<Option<&'a str>> {
        self.get(key)
            .map(|v| v.as_str().ok_or_else(|| Error::config(self.field(key), "expected a string")))
            .transpose()
    }

    fn array(&self, key: &str) -> Result<&'a Vec<Value>> {
        self.req(key)?
            .as_array()
            .ok_or_else(|| Error::config(self.field(key), "expected an array"))
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.array(key)?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_f64()
                    .ok_or_else(|| Error::config(format!("{}[{i}]", self.field(key)), "expected a number"))
            })
            .collect()
    }

    fn child(&self, key: &str) -> Result<Obj<'a>> {
        self.child_from(self.field(key), self.req(key)?)
    }

    fn opt_child(&self, key: &str) -> Result<Option<Obj<'a>>> {
        self.get(key).map(|v| self.child_from(self.field(key), v)).transpose()
    }

    fn child_from(&self, path: String, v: &'a Value) -> Result<Obj<'a>> {
        match v {
            Value::Object(map) => Ok(Obj {
                path,
                map,
                seen: Default::default(),
            }),
            _ => Err(Error::config(path, "expected an object")),
        }
    }

    /// Reject keys that were never read.
    fn finish(&self) -> Result<()> {
        let seen = self.seen.borrow();
        match self.map.keys().find(|k| !seen.contains(k.as_str())) {
            Some(k) => Err(Error::config(self.field(k), "unknown field")),
            None => Ok(()),
        }
    }
}

fn parse_model(o: &Obj) -> Result<ModelConfig> {
    let kind = o.str("type")?.ok_or_else(|| Error::config(o.field("type"), "missing"))?;
    let model = match kind {
        "sdof" => {
            let omega = o.positive("omega_n_rad_s")?;
            let zeta = o.f64("zeta_n")?;
            if !(zeta > 0.0 && zeta < 1.0) {
                return Err(Error::config(o.field("zeta_n"), format!("must lie in (0, 1), got {zeta}")));
            }
            ModelConfig::Sdof {
                omega_n_rad_s: omega,
                zeta_n: zeta,
            }
        }
        "shear_building" => {
            let masses = o.f64_list("masses_kg")?;
            let stiff = o.f64_list("story_stiffness_n_m")?;
            if masses.is_empty() {
                return Err(Error::config(o.field("masses_kg"), "at least one story is required"));
            }
            if stiff.len() != masses.len() {
                return Err(Error::config(
                    o.field("story_stiffness_n_m"),
                    format!("expected {} entries, got {}", masses.len(), stiff.len()),
                ));
            }
            let rayleigh = match o.opt_child("rayleigh")? {
                Some(r) => {
                    let cfg = RayleighConfig {
                        mode_a: r.usize("mode_a")?,
                        mode_b: r.usize("mode_b")?,
                        zeta: r.f64("zeta")?,
                    };
                    if !(cfg.mode_a >= 1 && cfg.mode_a < cfg.mode_b && cfg.mode_b <= masses.len()) {
                        return Err(Error::config(r.field("mode_b"), "need 1 <= mode_a < mode_b <= stories"));
                    }
                    if !(cfg.zeta > 0.0 && cfg.zeta < 1.0) {
                        return Err(Error::config(r.field("zeta"), "must lie in (0, 1)"));
                    }
                    r.finish()?;
                    Some(cfg)
                }
                None => None,
            };
            let mut dampers = Vec::new();
            if o.get("dampers").is_some() {
                for (i, v) in o.array("dampers")?.iter().enumerate() {
                    let d = o.child_from(format!("{}[{i}]", o.field("dampers")), v)?;
                    dampers.push(DamperConfig {
                        k_ve_n_m: d.positive("k_ve_n_m")?,
                        c_ve_n_s_m: d.positive("c_ve_n_s_m")?,
                    });
                    d.finish()?;
                }
            }
            if !dampers.is_empty() && dampers.len() != masses.len() {
                return Err(Error::config(
                    o.field("dampers"),
                    format!("expected {} entries, got {}", masses.len(), dampers.len()),
                ));
            }
            let brace_cos = o.opt_f64("brace_cos")?.unwrap_or(1.0);
            if !(brace_cos > 0.0 && brace_cos <= 1.0) {
                return Err(Error::config(o.field("brace_cos"), "must lie in (0, 1]"));
            }
            ModelConfig::ShearBuilding {
                masses_kg: masses,
                story_stiffness_n_m: stiff,
                rayleigh,
                dampers,
                brace_cos,
            }
        }
        "linear_components" => {
            let mut rows = Vec::new();
            for (i, v) in o.array("rows")?.iter().enumerate() {
                let field = format!("{}[{i}]", o.field("rows"));
                let row: Option<Vec<f64>> = v.as_array().and_then(|a| a.iter().map(|x| x.as_f64()).collect());
                rows.push(row.ok_or_else(|| Error::config(field, "expected an array of numbers"))?);
            }
            if rows.is_empty() || rows[0].is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
                return Err(Error::config(o.field("rows"), "need equal-length, non-empty rows"));
            }
            ModelConfig::LinearComponents { rows }
        }
        other => return Err(Error::config(o.field("type"), format!("unknown model type `{other}`"))),
    };
    o.finish()?;
    Ok(model)
}

fn parse_excitation(o: &Obj) -> Result<ExcitationConfig> {
    let kind = o.str("type")?.ok_or_else(|| Error::config(o.field("type"), "missing"))?;
    let exc = match kind {
        "white_noise_spectral" => {
            let lo = o.f64("omega_min_rad_s")?;
            let hi = o.positive("omega_max_rad_s")?;
            if !(lo >= 0.0 && lo < hi) {
                return Err(Error::config(o.field("omega_min_rad_s"), "need 0 <= omega_min < omega_max"));
            }
            let q = o.usize("q")?;
            if q == 0 {
                return Err(Error::config(o.field("q"), "must be at least 1"));
            }
            ExcitationConfig::WhiteNoiseSpectral {
                s_m2_s3: o.positive("S_m2_s3")?,
                omega_min_rad_s: lo,
                omega_max_rad_s: hi,
                q,
            }
        }
        "modulated_correlation" => {
            let zeta_g = o.f64("zeta_g")?;
            if !(zeta_g > 0.0 && zeta_g < 1.0) {
                return Err(Error::config(o.field("zeta_g"), "must lie in (0, 1)"));
            }
            let (ta, tb, tc) = (o.positive("t_a_s")?, o.positive("t_b_s")?, o.positive("t_c_s")?);
            if !(ta < tb && tb < tc) {
                return Err(Error::config(o.field("t_b_s"), "need t_a < t_b < t_c"));
            }
            let eig_clip = o.opt_f64("eig_clip")?.unwrap_or(crate::excitation::DEFAULT_EIG_CLIP);
            if !(0.0..1.0).contains(&eig_clip) {
                return Err(Error::config(o.field("eig_clip"), "must lie in [0, 1)"));
            }
            ExcitationConfig::ModulatedCorrelation {
                s0_m2_s3: o.positive("S0_m2_s3")?,
                omega_g_rad_s: o.positive("omega_g_rad_s")?,
                zeta_g,
                t_a_s: ta,
                t_b_s: tb,
                t_c_s: tc,
                lambda_1_s: o.positive("lambda_1_s")?,
                eig_clip,
            }
        }
        other => return Err(Error::config(o.field("type"), format!("unknown excitation type `{other}`"))),
    };
    o.finish()?;
    Ok(exc)
}

fn parse_estimator(o: Option<&Obj>) -> Result<EstimatorConfig> {
    let mut e = EstimatorConfig::default();
    let Some(o) = o else { return Ok(e) };
    if let Some(m) = o.str("method")? {
        e.method = m.parse()?;
    }
    if let Some(t) = o.opt_f64("tol")? {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::config(o.field("tol"), format!("must lie in (0, 1), got {t}")));
        }
        e.tol = t;
    }
    if let Some(n) = o.opt_uint("n_max")? {
        if n < crate::sampling::MIN_SAMPLES as u64 {
            return Err(Error::config(o.field("n_max"), "below the minimum sample count"));
        }
        e.n_max = n as usize;
    }
    if let Some(s) = o.opt_uint("seed")? {
        e.seed = s;
    }
    if let Some(r) = o.opt_f64("fd_rel_step")? {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::config(o.field("fd_rel_step"), "must lie in (0, 1)"));
        }
        e.fd_rel_step = r;
    }
    if let Some(p) = o.str("pmf")? {
        e.pmf = match p {
            "importance" => PmfKind::Importance,
            "uniform" => PmfKind::Uniform,
            other => return Err(Error::config(o.field("pmf"), format!("unknown pmf `{other}`"))),
        };
    }
    o.finish()?;
    Ok(e)
}

fn parse_config(v: &Value) -> Result<RunConfig> {
    let root = Obj::root(v)?;
    let model = parse_model(&root.child("model")?)?;
    let dynamic = !matches!(model, ModelConfig::LinearComponents { .. });
    let (excitation, grid) = if dynamic {
        let exc = parse_excitation(&root.child("excitation")?)?;
        let g = root.child("grid")?;
        let grid = GridConfig {
            dt_s: g.positive("dt_s")?,
            duration_s: g.positive("duration_s")?,
        };
        let ratio = grid.duration_s / grid.dt_s;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::config(g.field("duration_s"), "must be a whole number of steps dt_s"));
        }
        g.finish()?;
        (Some(exc), Some(grid))
    } else {
        for key in ["excitation", "grid"] {
            if root.get(key).is_some() {
                return Err(Error::config(key, "not used by linear_components models"));
            }
        }
        (None, None)
    };
    let observers = match &model {
        ModelConfig::Sdof { .. } => 1,
        ModelConfig::ShearBuilding { masses_kg, .. } => masses_kg.len(),
        ModelConfig::LinearComponents { rows } => rows.len(),
    };
    let t = root.child("thresholds")?;
    let mut c = t.f64_list("c")?;
    if c.len() == 1 && observers > 1 {
        c = vec![c[0]; observers];
    }
    if c.len() != observers {
        return Err(Error::config(t.field("c"), format!("expected 1 or {observers} entries, got {}", c.len())));
    }
    if let Some(bad) = c.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::config(t.field("c"), format!("thresholds must be positive, got {bad}")));
    }
    let symmetric = t.bool("symmetric")?.unwrap_or(true);
    t.finish()?;
    let parameters = match root.get("parameters") {
        None => Vec::new(),
        Some(Value::Array(a)) => a
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| Error::config(format!("parameters[{i}]"), "expected a string"))
            })
            .collect::<Result<_>>()?,
        Some(_) => return Err(Error::config("parameters", "expected an array of names")),
    };
    let estimator = parse_estimator(root.opt_child("estimator")?.as_ref())?;
    root.finish()?;
    Ok(RunConfig {
        model,
        excitation,
        grid,
        thresholds: ThresholdConfig { c, symmetric },
        parameters,
        estimator,
    })
}
