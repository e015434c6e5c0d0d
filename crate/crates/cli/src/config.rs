//! Run configuration: a TOML document with one table per concern.
//!
//! ```toml
//! [scheme]
//! order = 2
//!
//! [model]
//! velocity = "slab16"
//!
//! [mesh]
//! domain = [0.0, 1.0]
//! cells = 40
//! boundary = "inflow"
//!
//! [material]
//! epsilon = 1e-2
//! sigma_s = { kind = "polynomial", coefficients = [1.0, 0.0, 100.0] }
//!
//! [inflow]
//! left = 0.0
//! right = 0.0
//!
//! [initial]
//! kind = "zero"
//!
//! [time]
//! t_end = 0.4
//! dt = "cfl"
//! ```
//!
//! Coefficient functions are chosen by name plus numeric parameters; there is
//! no expression language.

use crate::CliError;
use kinetic_dg::boundary::InflowData;
use kinetic_dg::dg_ops::assemble_operators;
use kinetic_dg::field::{project_initial, DGDegree, KineticState};
use kinetic_dg::imex::ImexStepper;
use kinetic_dg::material::MaterialCoefficients;
use kinetic_dg::mesh::{BoundaryKind, Mesh1D};
use kinetic_dg::quadrature::VelocityQuadrature;
use kinetic_dg::stability::cfl_dt;
use kinetic_dg::tableau::ButcherTableau;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub mesh: MeshConfig,
    pub material: MaterialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflow: Option<InflowConfig>,
    pub initial: InitialData,
    pub time: TimeConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// IMEX order `p` and DG order `k` (polynomial degree `k - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub order: usize,
    /// Defaults to `order`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_order: Option<usize>,
}

impl SchemeConfig {
    pub fn p(&self) -> usize {
        self.time_order.unwrap_or(self.order)
    }

    pub fn k(&self) -> usize {
        self.order
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Velocity {
    /// 16-point Gauss rule on `[-1, 1]`.
    #[default]
    Slab16,
    /// `v = ±1`.
    Telegraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub velocity: Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryChoice {
    Periodic,
    Inflow,
}

impl From<BoundaryChoice> for BoundaryKind {
    fn from(b: BoundaryChoice) -> Self {
        match b {
            BoundaryChoice::Periodic => BoundaryKind::Periodic,
            BoundaryChoice::Inflow => BoundaryKind::Inflow,
        }
    }
}

/// Uniform (`cells`) or piecewise-uniform (`segments`) partition of `domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub domain: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<Segment>,
    pub boundary: BoundaryChoice,
}

/// Consecutive segments start where the previous one ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub end: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FunctionSpec {
    Constant { value: f64 },
    /// `Σ_i c_i x^i`.
    Polynomial { coefficients: Vec<f64> },
    /// `values[i]` on the `i`-th interval cut by the increasing `breaks`;
    /// a point on a break belongs to the left interval.
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

impl FunctionSpec {
    pub fn constant(value: f64) -> Self {
        FunctionSpec::Constant { value }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FunctionSpec::Constant { value } => *value,
            FunctionSpec::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c),
            FunctionSpec::Piecewise { breaks, values } => values[breaks.partition_point(|&b| b < x)],
        }
    }

    fn validate(&self, what: &str) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(format!("{what}: {msg}")));
        match self {
            FunctionSpec::Constant { value } if !value.is_finite() => bad(format!("value {value} is not finite")),
            FunctionSpec::Polynomial { coefficients } if coefficients.is_empty() => bad("no coefficients".into()),
            FunctionSpec::Piecewise { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return bad(format!("{} breaks need {} values", breaks.len(), breaks.len() + 1));
                }
                if breaks.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("breaks must increase".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn to_fn(&self) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
        let spec = self.clone();
        move |x| spec.eval(x)
    }
}

fn zero_function() -> FunctionSpec {
    FunctionSpec::constant(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub epsilon: f64,
    pub sigma_s: FunctionSpec,
    #[serde(default = "zero_function")]
    pub sigma_a: FunctionSpec,
    #[serde(default = "zero_function")]
    pub source: FunctionSpec,
    /// Lower bound of `σ_s`; sampled from the mesh when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_m: Option<f64>,
}

/// Isotropic incoming values and the right-boundary penalty `c_R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InflowConfig {
    pub left: f64,
    pub right: f64,
    #[serde(default = "unit")]
    pub penalty: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialData {
    Zero {},
    /// `ρ = value`, `g = 0`.
    Constant { value: f64 },
    /// `ρ = sin x`, `g = −v cos x`.
    Sine {},
    /// `ρ = left` for `x ≤ at`, `right` beyond, `g = 0`.
    Riemann { left: f64, right: f64, at: f64 },
}

impl InitialData {
    pub fn rho(&self, x: f64) -> f64 {
        match *self {
            InitialData::Zero {} => 0.0,
            InitialData::Constant { value } => value,
            InitialData::Sine {} => x.sin(),
            InitialData::Riemann { left, right, at } => {
                if x <= at {
                    left
                } else {
                    right
                }
            }
        }
    }

    pub fn g(&self, x: f64, v: f64) -> f64 {
        match self {
            InitialData::Sine {} => -v * x.cos(),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtRule {
    Cfl,
}

/// `"cfl"` for the stability-derived step or a fixed positive number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtPolicy {
    Fixed(f64),
    Rule(DtRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt: DtPolicy,
    /// Caps the CFL step at `cfl_cap · h_min`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Default output file; the command line `--out` wins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

/// Everything needed to advance one configuration.
pub struct Run {
    pub mesh: Mesh1D,
    pub quad: VelocityQuadrature,
    pub degree: DGDegree,
    pub stepper: ImexStepper,
    pub state: KineticState,
    pub t_end: f64,
}

impl Run {
    pub fn dt(&self) -> f64 {
        self.stepper.dt()
    }

    /// Advances to `t_end`.
    pub fn finish(&self) -> Result<KineticState, CliError> {
        Ok(self.stepper.run_to(&self.state, self.t_end)?)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    /// Applies `section.key=value` overrides. Values are parsed as TOML and
    /// fall back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, sets: &[S]) -> Result<Self, CliError> {
        if sets.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = toml::Value::try_from(self).map_err(|e| CliError::Config(e.to_string()))?;
        for set in sets {
            let set = set.as_ref();
            let (path, raw) = set
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{set}` is not key=value")))?;
            let value = parse_value(raw.trim());
            let keys: Vec<&str> = path.trim().split('.').collect();
            let (last, parents) = keys.split_last().expect("split yields at least one key");
            let mut node = &mut doc;
            for key in parents {
                let table = node
                    .as_table_mut()
                    .ok_or_else(|| CliError::Config(format!("`{path}`: `{key}` is not a table")))?;
                node = table
                    .entry(key.to_string())
                    .or_insert_with(|| toml::Value::Table(Default::default()));
            }
            let table = node
                .as_table_mut()
                .ok_or_else(|| CliError::Config(format!("`{path}` does not name a table entry")))?;
            table.insert(last.to_string(), value);
        }
        let cfg: RunConfig = doc.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let err = |m: String| Err(CliError::Config(m));
        let (p, k) = (self.scheme.p(), self.scheme.k());
        if !(1..=3).contains(&p) || !(1..=3).contains(&k) {
            return err(format!("scheme orders must lie in 1..=3 (time {p}, space {k})"));
        }
        let [a, b] = self.mesh.domain;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return err(format!("domain [{a}, {b}] is empty or not finite"));
        }
        match (self.mesh.cells, self.mesh.segments.is_empty()) {
            (Some(_), false) => return err("mesh takes either `cells` or `segments`, not both".into()),
            (None, true) => return err("mesh needs `cells` or `segments`".into()),
            (Some(n), true) if n < 2 => return err(format!("mesh needs at least 2 cells, got {n}")),
            _ => {}
        }
        if let Some(last) = self.mesh.segments.last() {
            if (last.end - b).abs() > 1e-12 * (b - a) {
                return err(format!("segments end at {} but the domain ends at {b}", last.end));
            }
        }
        let m = &self.material;
        if !(m.epsilon > 0.0) || !m.epsilon.is_finite() {
            return err(format!("epsilon must be positive, got {}", m.epsilon));
        }
        m.sigma_s.validate("sigma_s")?;
        m.sigma_a.validate("sigma_a")?;
        m.source.validate("source")?;
        if let Some(s) = m.sigma_m {
            if !(s >= 0.0) {
                return err(format!("sigma_m must be non-negative, got {s}"));
            }
        }
        match (self.mesh.boundary, &self.inflow) {
            (BoundaryChoice::Inflow, None) => return err("inflow boundaries need an [inflow] table".into()),
            (BoundaryChoice::Periodic, Some(_)) => return err("periodic meshes take no [inflow] table".into()),
            (_, Some(f)) if !(f.penalty >= 0.0) => return err(format!("penalty must be non-negative, got {}", f.penalty)),
            _ => {}
        }
        let t = &self.time;
        if !(t.t_end >= 0.0) || !t.t_end.is_finite() {
            return err(format!("t_end must be non-negative, got {}", t.t_end));
        }
        if let DtPolicy::Fixed(dt) = t.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return err(format!("dt must be positive, got {dt}"));
            }
        }
        if let Some(c) = t.cfl_cap {
            if !(c > 0.0) {
                return err(format!("cfl_cap must be positive, got {c}"));
            }
        }
        Ok(())
    }

    pub fn quadrature(&self) -> VelocityQuadrature {
        match self.model.velocity {
            Velocity::Slab16 => VelocityQuadrature::slab16(),
            Velocity::Telegraph => VelocityQuadrature::telegraph(),
        }
    }

    pub fn degree(&self) -> Result<DGDegree, CliError> {
        Ok(DGDegree::for_order(self.scheme.k())?)
    }

    pub fn mesh(&self) -> Result<Mesh1D, CliError> {
        let kind = self.mesh.boundary.into();
        let [a, b] = self.mesh.domain;
        let mesh = match self.mesh.cells {
            Some(n) => Mesh1D::uniform(a, b, n, kind),
            None => {
                let mut start = a;
                let segs: Vec<(f64, f64, usize)> = self
                    .mesh
                    .segments
                    .iter()
                    .map(|s| {
                        let seg = (start, s.end, s.cells);
                        start = s.end;
                        seg
                    })
                    .collect();
                Mesh1D::piecewise(&segs, kind)
            }
        };
        mesh.map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn coefficients(&self) -> Result<MaterialCoefficients, CliError> {
        let m = &self.material;
        let mut c = MaterialCoefficients::new(m.sigma_s.to_fn(), m.sigma_a.to_fn(), m.epsilon)
            .map_err(|e| CliError::Config(e.to_string()))?
            .with_source(m.source.to_fn());
        if let Some(s) = m.sigma_m {
            c = c.with_sigma_m(s);
        }
        Ok(c)
    }

    pub fn inflow(&self) -> Result<Option<InflowData>, CliError> {
        self.inflow
            .as_ref()
            .map(|f| InflowData::isotropic(f.left, f.right).with_penalty(f.penalty))
            .transpose()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Time step on `mesh`; the CFL rule uses the smallest cell.
    pub fn dt(&self, mesh: &Mesh1D) -> Result<f64, CliError> {
        match self.time.dt {
            DtPolicy::Fixed(dt) => Ok(dt),
            DtPolicy::Rule(DtRule::Cfl) => {
                let h = mesh.h_min();
                let dt = cfl_dt(self.scheme.k(), self.material.epsilon, h, mesh.boundary())?;
                Ok(self.time.cfl_cap.map_or(dt, |c| dt.min(c * h)))
            }
        }
    }

    /// Assembles operators, projects the initial data and builds the stepper.
    pub fn prepare(&self) -> Result<Run, CliError> {
        let mesh = self.mesh()?;
        let quad = self.quadrature();
        let degree = self.degree()?;
        let coeff = self.coefficients()?;
        let ops = assemble_operators(&mesh, degree, &coeff).map_err(|e| CliError::Config(e.to_string()))?;
        let init = self.initial.clone();
        let init_g = init.clone();
        let state = project_initial(move |x| init.rho(x), move |x, v| init_g.g(x, v), &mesh, degree, &quad);
        let tableau = ButcherTableau::for_order(self.scheme.p())?;
        let dt = self.dt(&mesh)?;
        let stepper = ImexStepper::new(ops, quad.clone(), tableau, dt, self.inflow()?)?;
        Ok(Run {
            mesh,
            quad,
            degree,
            stepper,
            state,
            t_end: self.time.t_end,
        })
    }
}

fn parse_value(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Probe {
        v: toml::Value,
    }
    toml::from_str::<Probe>(&format!("v = {raw}"))
        .map(|p| p.v)
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[scheme]
order = 2

[mesh]
domain = [0.0, 11.0]
segments = [{ end = 1.0, cells = 20 }, { end = 11.0, cells = 20 }]
boundary = "inflow"

[material]
epsilon = 1.0
sigma_s = { kind = "piecewise", breaks = [1.0], values = [0.0, 100.0] }
sigma_a = { kind = "piecewise", breaks = [1.0], values = [1.0, 0.0] }

[inflow]
left = 5.0
right = 0.0

[initial]
kind = "zero"

[time]
t_end = 1.5
dt = "cfl"
"#;

    #[test]
    fn parse_and_round_trip() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.scheme.p(), 2);
        assert_eq!(cfg.model.velocity, Velocity::Slab16);
        assert_eq!(cfg.inflow.as_ref().unwrap().penalty, 1.0);
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        let mesh = cfg.mesh().unwrap();
        assert_eq!(mesh.cells(), 40);
        assert!((mesh.h_min() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SAMPLE.replace("t_end = 1.5", "t_end = 1.5\nsteps = 3");
        assert!(matches!(RunConfig::from_toml(&text), Err(CliError::Config(_))));
        let text = SAMPLE.replace("kind = \"zero\"", "kind = \"zero\"\nvalue = 1.0");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn inconsistent_tables_are_rejected() {
        let periodic = SAMPLE.replace("boundary = \"inflow\"", "boundary = \"periodic\"");
        assert!(RunConfig::from_toml(&periodic).is_err());
        let both = SAMPLE.replace("boundary = \"inflow\"", "boundary = \"inflow\"\ncells = 4");
        assert!(RunConfig::from_toml(&both).is_err());
        let order = SAMPLE.replace("order = 2", "order = 4");
        assert!(RunConfig::from_toml(&order).is_err());
        let short = SAMPLE.replace("end = 11.0, cells", "end = 10.0, cells");
        assert!(RunConfig::from_toml(&short).is_err());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        let cfg = cfg
            .with_overrides(&["material.epsilon=1e-3", "time.dt=0.01", "model.velocity=telegraph"])
            .unwrap();
        assert_eq!(cfg.material.epsilon, 1e-3);
        assert_eq!(cfg.time.dt, DtPolicy::Fixed(0.01));
        assert_eq!(cfg.model.velocity, Velocity::Telegraph);
        assert!(cfg.with_overrides(&["time.bogus=1"]).is_err());
        assert!(cfg.with_overrides(&["time.t_end"]).is_err());
    }

    #[test]
    fn function_specs_evaluate() {
        let p = FunctionSpec::Polynomial { coefficients: vec![1.0, 0.0, 100.0] };
        assert_eq!(p.eval(0.5), 26.0);
        let pw = FunctionSpec::Piecewise { breaks: vec![1.0, 2.0], values: vec![3.0, 4.0, 5.0] };
        assert_eq!(pw.eval(1.0), 3.0);
        assert_eq!(pw.eval(1.5), 4.0);
        assert_eq!(pw.eval(7.0), 5.0);
    }

    #[test]
    fn cfl_cap_limits_the_step() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        let mesh = cfg.mesh().unwrap();
        let free = cfg.dt(&mesh).unwrap();
        let capped = cfg.with_overrides(&["time.cfl_cap=0.01"]).unwrap().dt(&mesh).unwrap();
        assert!(capped < free);
        assert!((capped - 0.01 * 0.05).abs() < 1e-15);
    }
}
