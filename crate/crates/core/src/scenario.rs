//! JSON scenario files.
//!
//! A scenario names a convex set, a reaction term, initial data, boundary
//! condition, horizon and time step, plus either a flat `domain` or a
//! `base` interval with `metric` and `connection` for the covariant mode.
//! Fields are given as built-ins with parameter maps or as expression
//! strings (see [`crate::expr`]).
//!
//! ```json
//! {
//!   "domain": { "extent": [[0, 10]], "cells": [256] },
//!   "set": { "type": "box", "lo": [0], "hi": [1] },
//!   "phi": { "builtin": "logistic", "params": { "r": 1 } },
//!   "f0": { "expr": ["0.5 + 0.4 * sin(2 * pi * x1 / 10)"] },
//!   "bc": { "type": "neumann" },
//!   "T": 5,
//!   "dt": "auto"
//! }
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bundle::{self, BaseGeometry, BundleScenario, Connection, CovariantGrid};
use crate::diagnostics::{write_diagnostics_csv, InvarianceVerdict};
use crate::convex::ConvexSet;
use crate::error::{Error, Result};
use crate::expr::{Expr, Scope};
use crate::field::{Integrator, TimeStep, VectorField};
use crate::flat::{self, BoundaryCondition, Domain, ObliqueData, RunOutput, Scenario};
use crate::tangency::{ReactionTerm, TangencyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Flat,
    Bundle,
}

/// A field given either by name or by expressions, one per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Builtin {
        builtin: String,
        #[serde(default)]
        params: BTreeMap<String, Value>,
    },
    Expr {
        expr: Exprs,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exprs {
    One(String),
    Many(Vec<String>),
}

impl Exprs {
    fn list(&self) -> Vec<&str> {
        match self {
            Exprs::One(s) => vec![s.as_str()],
            Exprs::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub extent: Vec<(f64, f64)>,
    pub cells: Vec<usize>,
    #[serde(default)]
    pub periodic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSpec {
    pub length: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BcSpec {
    Neumann,
    Dirichlet {
        value: FieldSpec,
    },
    Oblique {
        flux: FieldSpec,
        #[serde(default)]
        lambda_bar: Option<FieldSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtSpec {
    Fixed(f64),
    Named(String),
}

impl Default for DtSpec {
    fn default() -> Self {
        DtSpec::Named("auto".into())
    }
}

/// Sampling settings for `check-tangency`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TangencySpec {
    #[serde(default)]
    pub t_samples: Option<Vec<f64>>,
    #[serde(default)]
    pub x_samples: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub boundary_density: Option<usize>,
    #[serde(default)]
    pub random_points: Option<usize>,
    #[serde(default)]
    pub margin_tol: Option<f64>,
}

/// Raw scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub base: Option<BaseSpec>,
    #[serde(default)]
    pub metric: Option<FieldSpec>,
    #[serde(default)]
    pub connection: Option<ConnectionSpec>,
    pub set: ConvexSet,
    pub phi: FieldSpec,
    #[serde(default)]
    pub zeta: Option<FieldSpec>,
    pub f0: FieldSpec,
    pub bc: BcSpec,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub dt: DtSpec,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub cadence: Option<usize>,
    #[serde(default)]
    pub exit_threshold: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tangency: Option<TangencySpec>,
}

/// Connection coefficients by name or as an `m × m` matrix of expressions
/// in `x1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConnectionSpec {
    Builtin {
        builtin: String,
        #[serde(default)]
        params: BTreeMap<String, Value>,
    },
    Matrix {
        expr: Vec<Vec<String>>,
    },
}

/// A validated, ready-to-run scenario.
#[derive(Debug, Clone)]
pub enum Model {
    Flat(Scenario),
    Bundle(BundleScenario),
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub model: Model,
    pub t_samples: Vec<f64>,
    pub x_samples: Vec<Vec<f64>>,
    pub tangency: TangencyConfig,
}

impl Loaded {
    pub fn set(&self) -> &ConvexSet {
        match &self.model {
            Model::Flat(s) => &s.set,
            Model::Bundle(s) => &s.set,
        }
    }

    pub fn phi(&self) -> &ReactionTerm {
        match &self.model {
            Model::Flat(s) => &s.phi,
            Model::Bundle(s) => &s.phi,
        }
    }

    /// Apply command-line overrides.
    pub fn override_run(&mut self, seed: Option<u64>, cadence: Option<usize>, threshold: Option<f64>) {
        macro_rules! apply {
            ($s:expr) => {{
                if let Some(seed) = seed {
                    $s.seed = seed;
                }
                if cadence.is_some() {
                    $s.cadence = cadence;
                }
                if threshold.is_some() {
                    $s.exit_threshold = threshold;
                }
            }};
        }
        match &mut self.model {
            Model::Flat(s) => apply!(s),
            Model::Bundle(s) => apply!(s),
        }
        if let Some(seed) = seed {
            self.tangency.seed = seed;
        }
    }
}

impl Model {
    pub fn solve(&self) -> Result<RunOutput> {
        match self {
            Model::Flat(s) => flat::solve(s),
            Model::Bundle(s) => bundle::solve_bundle(s),
        }
    }

    /// Write `trajectory.csv`, `diagnostics.csv` and `verdict.json` into
    /// `dir`, creating it if needed.
    pub fn write_outputs(&self, output: &RunOutput, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let trajectory = BufWriter::new(File::create(dir.join("trajectory.csv"))?);
        match self {
            Model::Flat(s) => flat::write_trajectory_csv(trajectory, &s.domain, &output.trajectory)?,
            Model::Bundle(s) => {
                let grid = CovariantGrid::new(&s.geometry, &s.connection)?;
                flat::write_trajectory_csv(trajectory, &grid, &output.trajectory)?
            }
        }
        let diagnostics = BufWriter::new(File::create(dir.join("diagnostics.csv"))?);
        write_diagnostics_csv(diagnostics, &output.diagnostics)?;
        let mut verdict = BufWriter::new(File::create(dir.join("verdict.json"))?);
        serde_json::to_writer_pretty(&mut verdict, &RunReport::from(output))?;
        writeln!(verdict)?;
        verdict.flush()?;
        Ok(())
    }
}

/// Contents of `verdict.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport<'a> {
    #[serde(flatten)]
    pub verdict: &'a InvarianceVerdict,
    pub dt: f64,
    pub steps: usize,
    pub epsilon_grid: f64,
    pub warnings: &'a [String],
    pub failure: Option<String>,
}

impl<'a> From<&'a RunOutput> for RunReport<'a> {
    fn from(out: &'a RunOutput) -> Self {
        Self {
            verdict: &out.verdict,
            dt: out.dt,
            steps: out.steps,
            epsilon_grid: out.epsilon_grid,
            warnings: &out.warnings,
            failure: out.failure.as_ref().map(ToString::to_string),
        }
    }
}

struct Params<'a> {
    name: &'a str,
    map: &'a BTreeMap<String, Value>,
}

impl Params<'_> {
    fn num(&self, key: &str, default: Option<f64>) -> Result<f64> {
        match self.map.get(key) {
            Some(v) => v.as_f64().ok_or_else(|| {
                Error::InvalidScenario(format!("`{}` parameter `{key}` is not a number", self.name))
            }),
            None => default.ok_or_else(|| {
                Error::InvalidScenario(format!("`{}` needs parameter `{key}`", self.name))
            }),
        }
    }

    fn vector(&self, key: &str) -> Result<Vec<f64>> {
        let bad = || Error::InvalidScenario(format!("`{}` parameter `{key}` must be a list of numbers", self.name));
        match self.map.get(key) {
            Some(Value::Array(items)) => items.iter().map(|v| v.as_f64().ok_or_else(bad)).collect(),
            Some(Value::Number(n)) => Ok(vec![n.as_f64().ok_or_else(bad)?]),
            _ => Err(bad()),
        }
    }
}

fn compile(exprs: &Exprs, dim: usize, scope: Scope, what: &str) -> Result<Vec<Expr>> {
    let list = exprs.list();
    if list.len() != dim {
        return Err(Error::InvalidScenario(format!(
            "{what} has {} expressions, expected {dim}",
            list.len()
        )));
    }
    list.iter().map(|s| Expr::parse(s, scope)).collect()
}

/// `φ(t, x, v)`: builtins `zero`, `linear{rate}`, `logistic{r}`,
/// `fitzhugh-nagumo{a, b, eps, I}`.
pub fn reaction_from_spec(spec: &FieldSpec, m: usize, space_dim: usize) -> Result<ReactionTerm> {
    match spec {
        FieldSpec::Builtin { builtin, params } => {
            let p = Params { name: builtin, map: params };
            match builtin.as_str() {
                "zero" => Ok(ReactionTerm::zero(m)),
                "linear" => Ok(ReactionTerm::linear(m, p.num("rate", None)?)),
                "logistic" => Ok(ReactionTerm::logistic(m, p.num("r", Some(1.0))?)),
                "fitzhugh-nagumo" => {
                    if m != 2 {
                        return Err(Error::InvalidScenario(
                            "fitzhugh-nagumo needs a two-dimensional set".into(),
                        ));
                    }
                    Ok(ReactionTerm::fitzhugh_nagumo(
                        p.num("a", Some(0.7))?,
                        p.num("b", Some(0.8))?,
                        p.num("eps", Some(0.08))?,
                        p.num("I", Some(0.0))?,
                    ))
                }
                other => Err(Error::InvalidScenario(format!("unknown reaction `{other}`"))),
            }
        }
        FieldSpec::Expr { expr } => {
            let scope = Scope { space_dim, components: m };
            let parts = compile(expr, m, scope, "phi")?;
            Ok(ReactionTerm::new(m, move |t, x, v, out| {
                for (o, e) in out.iter_mut().zip(&parts) {
                    *o = e.eval(t, x, v);
                }
            }))
        }
    }
}

/// `F(t, x)`: builtins `constant{value}`, `zero`.
pub fn vector_field_from_spec(spec: &FieldSpec, dim: usize, space_dim: usize, what: &str) -> Result<VectorField> {
    match spec {
        FieldSpec::Builtin { builtin, params } => {
            let p = Params { name: builtin, map: params };
            match builtin.as_str() {
                "zero" => Ok(VectorField::constant(vec![0.0; dim])),
                "constant" => {
                    let value = p.vector("value")?;
                    if value.len() != dim {
                        return Err(Error::InvalidScenario(format!(
                            "{what} constant has {} components, expected {dim}",
                            value.len()
                        )));
                    }
                    Ok(VectorField::constant(value))
                }
                other => Err(Error::InvalidScenario(format!("unknown {what} builtin `{other}`"))),
            }
        }
        FieldSpec::Expr { expr } => {
            let scope = Scope { space_dim, components: 0 };
            let parts = compile(expr, dim, scope, what)?;
            Ok(VectorField::new(dim, move |t, x, out| {
                for (o, e) in out.iter_mut().zip(&parts) {
                    *o = e.eval(t, x, &[]);
                }
            }))
        }
    }
}

/// Metric coefficient `g(x)`: builtins `euclidean`,
/// `gaussian-bump{amplitude, center, width}` giving
/// `1 + a·exp(−(x − c)² / (2 w²))`, or one expression in `x1`.
pub fn metric_from_spec(spec: &FieldSpec) -> Result<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
    match spec {
        FieldSpec::Builtin { builtin, params } => {
            let p = Params { name: builtin, map: params };
            match builtin.as_str() {
                "euclidean" | "flat" => Ok(Box::new(|_| 1.0)),
                "gaussian-bump" => {
                    let a = p.num("amplitude", Some(0.5))?;
                    let c = p.num("center", None)?;
                    let w = p.num("width", None)?;
                    if !(w > 0.0) || a <= -1.0 {
                        return Err(Error::InvalidScenario(
                            "gaussian-bump needs width > 0 and amplitude > -1".into(),
                        ));
                    }
                    Ok(Box::new(move |x| 1.0 + a * (-(x - c) * (x - c) / (2.0 * w * w)).exp()))
                }
                other => Err(Error::InvalidScenario(format!("unknown metric `{other}`"))),
            }
        }
        FieldSpec::Expr { expr } => {
            let e = compile(expr, 1, Scope { space_dim: 1, components: 0 }, "metric")?.remove(0);
            Ok(Box::new(move |x| e.eval(0.0, &[x], &[])))
        }
    }
}

/// Connection: builtins `flat`, `constant-rotation{omega}`, or a matrix
/// of expressions in `x1`.
pub fn connection_from_spec(spec: &ConnectionSpec, m: usize) -> Result<Connection> {
    match spec {
        ConnectionSpec::Builtin { builtin, params } => {
            let p = Params { name: builtin, map: params };
            match builtin.as_str() {
                "flat" | "trivial" => Ok(Connection::trivial(m)),
                "constant-rotation" => {
                    if m < 2 {
                        return Err(Error::InvalidScenario(
                            "constant-rotation needs fibre rank at least 2".into(),
                        ));
                    }
                    Ok(Connection::constant_rotation(m, p.num("omega", None)?))
                }
                other => Err(Error::InvalidScenario(format!("unknown connection `{other}`"))),
            }
        }
        ConnectionSpec::Matrix { expr } => {
            if expr.len() != m || expr.iter().any(|row| row.len() != m) {
                return Err(Error::InvalidScenario(format!("connection matrix must be {m}×{m}")));
            }
            let scope = Scope { space_dim: 1, components: 0 };
            let cells: Vec<Expr> = expr
                .iter()
                .flatten()
                .map(|s| Expr::parse(s, scope))
                .collect::<Result<_>>()?;
            Ok(Connection::new(m, move |x| {
                DMatrix::from_row_iterator(m, m, cells.iter().map(|e| e.eval(0.0, &[x], &[])))
            }))
        }
    }
}

fn boundary_from_spec(spec: &BcSpec, m: usize, space_dim: usize) -> Result<BoundaryCondition> {
    Ok(match spec {
        BcSpec::Neumann => BoundaryCondition::NeumannZero,
        BcSpec::Dirichlet { value } => {
            BoundaryCondition::Dirichlet(vector_field_from_spec(value, m, space_dim, "dirichlet value")?)
        }
        BcSpec::Oblique { flux, lambda_bar } => BoundaryCondition::Oblique(ObliqueData {
            flux: reaction_from_spec(flux, m, space_dim)?,
            lambda_bar: lambda_bar
                .as_ref()
                .map(|s| reaction_from_spec(s, m, space_dim))
                .transpose()?,
        }),
    })
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Build the runnable model; `mode` overrides the file's own mode.
    pub fn build(&self, mode: Option<Mode>) -> Result<Loaded> {
        let mode = mode.unwrap_or(self.mode);
        let m = self.set.dim();
        let dt = match &self.dt {
            DtSpec::Fixed(v) if *v > 0.0 => TimeStep::Fixed(*v),
            DtSpec::Named(s) if s == "auto" => TimeStep::Auto,
            other => return Err(Error::InvalidScenario(format!("dt must be \"auto\" or positive, got {other:?}"))),
        };
        let (model, x_default) = match mode {
            Mode::Flat => {
                if self.metric.is_some() || self.connection.is_some() {
                    return Err(Error::InvalidScenario(
                        "metric and connection only apply in bundle mode".into(),
                    ));
                }
                let domain = match (&self.domain, &self.base) {
                    (Some(d), _) => Domain::new(d.extent.clone(), d.cells.clone(), d.periodic)?,
                    (None, Some(b)) => Domain::interval(0.0, b.length, b.cells)?,
                    (None, None) => return Err(Error::InvalidScenario("missing domain".into())),
                };
                let dim = domain.dim();
                let mut sc = Scenario::new(
                    domain,
                    self.set.clone(),
                    reaction_from_spec(&self.phi, m, dim)?,
                    boundary_from_spec(&self.bc, m, dim)?,
                    vector_field_from_spec(&self.f0, m, dim, "f0")?,
                    self.horizon,
                );
                sc.zeta = self
                    .zeta
                    .as_ref()
                    .map(|z| vector_field_from_spec(z, dim, dim, "zeta"))
                    .transpose()?;
                sc.dt = dt;
                sc.integrator = self.integrator;
                sc.cadence = self.cadence;
                sc.exit_threshold = self.exit_threshold;
                sc.seed = self.seed;
                sc.validate()?;
                let axes: Vec<[f64; 3]> = sc
                    .domain
                    .extent()
                    .iter()
                    .map(|&(a, b)| [a, 0.5 * (a + b), b])
                    .collect();
                let xs = match axes.len() {
                    1 => axes[0].iter().map(|&x| vec![x]).collect(),
                    _ => axes[0]
                        .iter()
                        .flat_map(|&x| axes[1].iter().map(move |&y| vec![x, y]))
                        .collect(),
                };
                (Model::Flat(sc), xs)
            }
            Mode::Bundle => {
                let base = match (&self.base, &self.domain) {
                    (Some(b), _) => b.clone(),
                    (None, Some(d)) if d.extent.len() == 1 && d.extent[0].0 == 0.0 && !d.periodic => BaseSpec {
                        length: d.extent[0].1,
                        cells: d.cells[0],
                    },
                    _ => {
                        return Err(Error::InvalidScenario(
                            "bundle mode needs `base` or a non-periodic 1-D domain starting at 0".into(),
                        ))
                    }
                };
                let metric = match &self.metric {
                    Some(spec) => metric_from_spec(spec)?,
                    None => Box::new(|_| 1.0),
                };
                let connection = match &self.connection {
                    Some(spec) => connection_from_spec(spec, m)?,
                    None => Connection::trivial(m),
                };
                let mut sc = BundleScenario::new(
                    BaseGeometry::new(base.length, base.cells, metric),
                    connection,
                    self.set.clone(),
                    reaction_from_spec(&self.phi, m, 1)?,
                    boundary_from_spec(&self.bc, m, 1)?,
                    vector_field_from_spec(&self.f0, m, 1, "f0")?,
                    self.horizon,
                );
                sc.zeta = self
                    .zeta
                    .as_ref()
                    .map(|z| vector_field_from_spec(z, 1, 1, "zeta"))
                    .transpose()?;
                sc.dt = dt;
                sc.integrator = self.integrator;
                sc.cadence = self.cadence;
                sc.exit_threshold = self.exit_threshold;
                sc.seed = self.seed;
                sc.validate()?;
                let l = base.length;
                (Model::Bundle(sc), vec![vec![0.0], vec![0.5 * l], vec![l]])
            }
        };
        let tspec = self.tangency.clone().unwrap_or(TangencySpec {
            t_samples: None,
            x_samples: None,
            boundary_density: None,
            random_points: None,
            margin_tol: None,
        });
        let defaults = TangencyConfig::default();
        Ok(Loaded {
            model,
            t_samples: tspec
                .t_samples
                .unwrap_or_else(|| vec![0.0, 0.5 * self.horizon, self.horizon]),
            x_samples: tspec.x_samples.unwrap_or(x_default),
            tangency: TangencyConfig {
                boundary_density: tspec.boundary_density.unwrap_or(defaults.boundary_density),
                random_points: tspec.random_points.unwrap_or(defaults.random_points),
                margin_tol: tspec.margin_tol.unwrap_or(defaults.margin_tol),
                seed: self.seed,
            },
        })
    }
}

/// Parse and build a scenario from JSON text.
pub fn load_str(text: &str, mode: Option<Mode>) -> Result<Loaded> {
    ScenarioFile::from_json(text)?.build(mode)
}

/// Parse and build a scenario file.
pub fn load(path: &Path, mode: Option<Mode>) -> Result<Loaded> {
    ScenarioFile::from_path(path)?.build(mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOGISTIC: &str = r#"{
        "domain": { "extent": [[0, 10]], "cells": [64] },
        "set": { "type": "box", "lo": [0], "hi": [1] },
        "phi": { "builtin": "logistic", "params": { "r": 1 } },
        "f0": { "expr": "0.5 + 0.4 * sin(2 * pi * x1 / 10)" },
        "bc": { "type": "neumann" },
        "T": 1
    }"#;

    #[test]
    fn parses_flat_scenario() {
        let loaded = load_str(LOGISTIC, None).unwrap();
        let Model::Flat(sc) = &loaded.model else { panic!() };
        assert_eq!(sc.domain.cells(), &[64]);
        assert_eq!(sc.dt, TimeStep::Auto);
        assert_eq!(sc.phi.eval(0.0, &[0.0], &[0.5]), vec![0.25]);
        assert!((sc.f0.eval(0.0, &[2.5])[0] - 0.9).abs() < 1e-15);
        assert_eq!(loaded.x_samples, vec![vec![0.0], vec![5.0], vec![10.0]]);
    }

    #[test]
    fn expression_phi_matches_builtin() {
        let text = LOGISTIC.replace(
            r#"{ "builtin": "logistic", "params": { "r": 1 } }"#,
            r#"{ "expr": ["v1 * (1 - v1)"] }"#,
        );
        let loaded = load_str(&text, None).unwrap();
        for v in [0.0, 0.3, 1.4] {
            assert_eq!(loaded.phi().eval(0.0, &[1.0], &[v]), vec![v * (1.0 - v)]);
        }
    }

    #[test]
    fn bundle_mode_from_interval() {
        let text = r#"{
            "mode": "bundle",
            "base": { "length": 1, "cells": 32 },
            "metric": { "builtin": "gaussian-bump", "params": { "amplitude": 0.5, "center": 0.5, "width": 0.1 } },
            "connection": { "builtin": "constant-rotation", "params": { "omega": 2 } },
            "set": { "type": "ball", "center": [0, 0], "radius": 1 },
            "phi": { "builtin": "linear", "params": { "rate": -1 } },
            "f0": { "expr": ["0.5 * cos(x1)", "0"] },
            "bc": { "type": "neumann" },
            "T": 0.1
        }"#;
        let loaded = load_str(text, None).unwrap();
        let Model::Bundle(sc) = &loaded.model else { panic!() };
        assert!((sc.geometry.metric(0.5) - 1.5).abs() < 1e-15);
        assert_eq!(sc.connection.coefficient(0.3)[(1, 0)], 2.0);
        assert!(matches!(load_str(text, Some(Mode::Flat)), Err(Error::InvalidScenario(_))));
    }

    #[test]
    fn matrix_connection() {
        let spec = ConnectionSpec::Matrix {
            expr: vec![vec!["0".into(), "-x1".into()], vec!["x1".into(), "0".into()]],
        };
        let c = connection_from_spec(&spec, 2).unwrap();
        assert_eq!(c.coefficient(0.25)[(0, 1)], -0.25);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(load_str("{", None), Err(Error::Json(_))));
        let missing_set = LOGISTIC.replace(r#""set": { "type": "box", "lo": [0], "hi": [1] },"#, "");
        assert!(load_str(&missing_set, None).is_err());
        let bad_dt = LOGISTIC.replace(r#""T": 1"#, r#""T": 1, "dt": "often""#);
        assert!(matches!(load_str(&bad_dt, None), Err(Error::InvalidScenario(_))));
        let wrong_len = LOGISTIC.replace(r#""expr": "0.5"#, r#""expr": ["1", "0.5"#);
        assert!(load_str(&wrong_len.replace(r#"x1 / 10)""#, r#"x1 / 10)"]"#), None).is_err());
        let unknown = LOGISTIC.replace("logistic", "gompertz");
        assert!(matches!(load_str(&unknown, None), Err(Error::InvalidScenario(_))));
    }
}
