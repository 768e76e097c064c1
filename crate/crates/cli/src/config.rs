//! Experiment configuration: one JSON document, scalar leaves overridable
//! from the command line.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use infgame::field::{FnField, ScalarField};
use infgame::geometry::{make_domain, Domain, DomainSpec};
use infgame::tugofwar::MoveSet;
use infgame::verify::{ExactSpec, SkipPolicy};
use serde::{Deserialize, Serialize};

use crate::fail::{Failure, Status};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isaacs: Option<IsaacsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: DomainSpec,
    pub h: HSpec,
    pub g: GSpec,
}

/// Running payoff.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HSpec {
    Constant { value: f64 },
    /// `Σ coeffs[k] · x_axis^k`, with `axis` counted from 1.
    Polynomial {
        coeffs: Vec<f64>,
        #[serde(default = "first_axis")]
        axis: usize,
    },
}

fn first_axis() -> usize {
    1
}

/// Terminal payoff.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GSpec {
    Constant {
        value: f64,
    },
    /// Piecewise-linear in `|x - center|` through `(radii[i], values[i])`,
    /// constant beyond the ends.
    Radial {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        radii: Vec<f64>,
        values: Vec<f64>,
    },
    /// Arithmetic expression over `x1..xm` and `r = |x|`.
    Expression {
        expr: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub eps: f64,
    /// Lattice spacing; defaults to `eps`.
    #[serde(default)]
    pub spacing: Option<f64>,
    /// Width of the boundary layer; defaults to the spacing.
    #[serde(default)]
    pub boundary_layer: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default)]
    pub moves: MoveSet,
    #[serde(default = "one")]
    pub relaxation: f64,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_sweeps() -> usize {
    10_000_000
}

fn one() -> f64 {
    1.0
}

impl SolverConfig {
    pub fn spacing(&self) -> f64 {
        self.spacing.unwrap_or(self.eps)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub x0: Vec<f64>,
    pub dt: f64,
    #[serde(default)]
    pub gamma: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Censoring horizon; defaults to `50 · diam²`.
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default = "yes")]
    pub bridge: bool,
    pub strategy_max: StrategyConfig,
    pub strategy_min: StrategyConfig,
    /// Value function for near-optimal play.
    #[serde(default)]
    pub value: Option<ValueSource>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategyConfig {
    Constant {
        a: Vec<f64>,
        c: f64,
    },
    NearOptimal {
        bound: f64,
    },
    ExitForcing {
        /// Defaults to `x0`.
        #[serde(default)]
        anchor: Option<Vec<f64>>,
        /// Defaults to `8 (2κ + 1) + 1`.
        #[serde(default)]
        c0: Option<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValueSource {
    /// An analytic oracle.
    Exact { oracle: ExactSpec },
    /// A solution CSV on the lattice of the `solver` section,
    /// differentiated by central differences of width `fd_step`
    /// (default four spacings).
    Solution {
        path: PathBuf,
        #[serde(default)]
        fd_step: Option<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsaacsConfig {
    pub p: Vec<f64>,
    /// Row-major symmetric matrix.
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    /// Scale of the maximizer's bound: row `n` uses `k · n`.
    #[serde(default = "one")]
    pub k: f64,
    /// Scale of the minimizer's bound: row `n` uses `l · n`.
    #[serde(default = "one")]
    pub l: f64,
    #[serde(default)]
    pub side: SideChoice,
    pub n_max: usize,
    /// When set, the last row must be this close to the limit.
    #[serde(default)]
    pub diag_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideChoice {
    Plus,
    Minus,
    #[default]
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Defaults to four lattice spacings.
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default = "default_samples")]
    pub sample_count: usize,
    #[serde(default)]
    pub skip_policy: SkipPolicy,
    /// Solution CSV to check; `--solution` overrides it.
    #[serde(default)]
    pub solution: Option<PathBuf>,
    /// Check an analytic oracle instead of a solution file.
    #[serde(default)]
    pub oracle: Option<ExactSpec>,
}

fn default_samples() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub eps: Vec<f64>,
    /// Lattice spacing is `eps / refine`.
    #[serde(default = "one")]
    pub refine: f64,
    /// Reference solution; without it every level is compared with the
    /// finest one.
    #[serde(default)]
    pub oracle: Option<ExactSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "here")]
    pub dir: PathBuf,
    /// File stem; defaults to the subcommand name.
    #[serde(default)]
    pub prefix: Option<String>,
    /// Also write one CSV row per simulated path.
    #[serde(default)]
    pub paths_csv: bool,
}

fn here() -> PathBuf {
    PathBuf::from(".")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: here(),
            prefix: None,
            paths_csv: false,
        }
    }
}

/// Reads the config as JSON, applies `key.path=value` overrides and parses
/// it. Parse errors carry `file:line:column`.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, Failure> {
    let (label, text) = match path {
        Some(p) => (
            p.display().to_string(),
            std::fs::read_to_string(p).map_err(|e| Failure::invalid(format!("{}: {e}", p.display())))?,
        ),
        None => ("<empty>".to_string(), "{}".to_string()),
    };
    let mut doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| located(&label, &e))?;
    for item in overrides {
        apply_override(&mut doc, item)?;
    }
    if overrides.is_empty() {
        // Re-parse the text itself so schema errors point at a line.
        serde_json::from_str(&text)
            .map_err(|e| located(&label, &e))
    } else {
        serde_json::from_value(doc).map_err(|e| Failure::invalid(format!("{label} (after --set): {e}")))
    }
}

fn located(label: &str, e: &serde_json::Error) -> Failure {
    let text = e.to_string();
    let suffix = format!(" at line {} column {}", e.line(), e.column());
    let msg = text.strip_suffix(&suffix).unwrap_or(&text);
    Failure::invalid(format!("{label}:{}:{}: {msg}", e.line(), e.column()))
}

/// `a.b.c=value`; the value is read as JSON when it parses, else as a string.
pub fn apply_override(doc: &mut serde_json::Value, item: &str) -> Result<(), Failure> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Failure::invalid(format!("--set {item}: expected key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Failure::invalid(format!("--set {item}: empty key segment")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Failure::invalid(format!("--set {item}: '{}' is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("split always yields a segment")
}

pub fn section<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T, Failure> {
    value
        .as_ref()
        .ok_or_else(|| Failure::invalid(format!("config has no '{name}' section")))
}

impl ProblemConfig {
    pub fn domain(&self) -> Result<Domain, Failure> {
        make_domain(self.domain.clone()).map_err(Failure::from)
    }

    pub fn h_field(&self, dim: usize) -> Result<Arc<dyn ScalarField>, Failure> {
        Ok(match &self.h {
            HSpec::Constant { value } => {
                let v = *value;
                Arc::new(FnField::new(dim, move |_: &[f64]| v))
            }
            HSpec::Polynomial { coeffs, axis } => {
                if coeffs.is_empty() {
                    return Err(Failure::invalid("problem.h.coeffs is empty"));
                }
                if *axis == 0 || *axis > dim {
                    return Err(Failure::invalid(format!("problem.h.axis {axis} outside 1..={dim}")));
                }
                let (c, i) = (coeffs.clone(), axis - 1);
                Arc::new(FnField::new(dim, move |x: &[f64]| {
                    c.iter().rev().fold(0.0, |acc, v| acc * x[i] + v)
                }))
            }
        })
    }

    pub fn g_field(&self, dim: usize) -> Result<Arc<dyn ScalarField>, Failure> {
        Ok(match &self.g {
            GSpec::Constant { value } => {
                let v = *value;
                Arc::new(FnField::new(dim, move |_: &[f64]| v))
            }
            GSpec::Radial { center, radii, values } => {
                if radii.is_empty() || radii.len() != values.len() {
                    return Err(Failure::invalid("problem.g: radii and values must be nonempty and of equal length"));
                }
                if radii.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Failure::invalid("problem.g.radii must be strictly increasing"));
                }
                let center = center.clone().unwrap_or_else(|| vec![0.0; dim]);
                if center.len() != dim {
                    return Err(Failure::invalid("problem.g.center has the wrong dimension"));
                }
                let (radii, values) = (radii.clone(), values.clone());
                Arc::new(FnField::new(dim, move |x: &[f64]| {
                    let r = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    table(&radii, &values, r)
                }))
            }
            GSpec::Expression { expr } => Arc::new(ExprField::new(expr, dim)?),
        })
    }
}

fn table(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    for i in 1..xs.len() {
        if x <= xs[i] {
            let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            return ys[i - 1] + t * (ys[i] - ys[i - 1]);
        }
    }
    ys[ys.len() - 1]
}

struct ExprField {
    dim: usize,
    tree: Node<DefaultNumericTypes>,
}

impl ExprField {
    fn new(expr: &str, dim: usize) -> Result<Self, Failure> {
        let tree = build_operator_tree::<DefaultNumericTypes>(expr)
            .map_err(|e| Failure::invalid(format!("problem.g.expr: {e}")))?;
        let field = Self { dim, tree };
        // Evaluate once so unknown variables fail at load time.
        field
            .eval(&vec![0.5; dim])
            .map_err(|e| Failure::invalid(format!("problem.g.expr: {e}")))?;
        Ok(field)
    }

    fn eval(&self, x: &[f64]) -> Result<f64, evalexpr::EvalexprError<DefaultNumericTypes>> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        for (i, v) in x.iter().enumerate() {
            ctx.set_value(format!("x{}", i + 1), Value::Float(*v))?;
        }
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        ctx.set_value("r".into(), Value::Float(r))?;
        self.tree.eval_number_with_context(&ctx)
    }
}

impl ScalarField for ExprField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).unwrap_or(f64::NAN)
    }
}

impl ExperimentConfig {
    /// Checks the documented ranges of the sections a subcommand reads.
    pub fn validate(&self, command: &str) -> Result<(), Failure> {
        if let Some(s) = &self.solver {
            if !(s.eps > 0.0 && s.eps.is_finite()) {
                return Err(Failure::invalid("solver.eps must be positive"));
            }
            if !(s.spacing() > 0.0) || s.eps < s.spacing() * (1.0 - 1e-12) {
                return Err(Failure::invalid(format!(
                    "solver.eps {} must be at least solver.spacing {}",
                    s.eps,
                    s.spacing()
                )));
            }
            if !(s.tol > 0.0) {
                return Err(Failure::invalid("solver.tol must be positive"));
            }
            if !(1.0..2.0).contains(&s.relaxation) {
                return Err(Failure::invalid("solver.relaxation must lie in [1, 2)"));
            }
        }
        if let Some(s) = &self.simulate {
            if !(s.dt > 0.0 && s.dt.is_finite()) {
                return Err(Failure::invalid("simulate.dt must be positive"));
            }
            if !(0.0..1.0).contains(&s.gamma) {
                return Err(Failure::invalid("simulate.gamma must lie in [0, 1)"));
            }
            if s.n_paths == 0 {
                return Err(Failure::invalid("simulate.n_paths must be at least 1"));
            }
            if let Some(t) = s.t_max {
                if !(t > 0.0) {
                    return Err(Failure::invalid("simulate.t_max must be positive"));
                }
            }
        }
        if let Some(v) = &self.verify {
            if let Some(step) = v.step {
                if !(step > 0.0) {
                    return Err(Failure::invalid("verify.step must be positive"));
                }
            }
            if v.sample_count == 0 {
                return Err(Failure::invalid("verify.sample_count must be at least 1"));
            }
        }
        if let Some(c) = &self.converge {
            if c.eps.is_empty() || c.eps.iter().any(|e| !(*e > 0.0)) {
                return Err(Failure::invalid("converge.eps must be a nonempty list of positive radii"));
            }
            if !(c.refine >= 1.0) {
                return Err(Failure::invalid("converge.refine must be at least 1"));
            }
        }
        let need = |present: bool, name: &str| {
            if present {
                Ok(())
            } else {
                Err(Failure::invalid(format!("'{command}' needs a '{name}' section")))
            }
        };
        match command {
            "solve" => {
                need(self.problem.is_some(), "problem")?;
                need(self.solver.is_some(), "solver")
            }
            "simulate" => {
                need(self.problem.is_some(), "problem")?;
                need(self.simulate.is_some(), "simulate")
            }
            "isaacs" => need(self.isaacs.is_some(), "isaacs"),
            "verify" => {
                need(self.verify.is_some(), "verify")?;
                let v = self.verify.as_ref().unwrap();
                if v.oracle.is_none() {
                    need(self.problem.is_some(), "problem")?;
                    need(self.solver.is_some(), "solver")?;
                }
                Ok(())
            }
            "converge" => {
                need(self.problem.is_some(), "problem")?;
                need(self.solver.is_some(), "solver")?;
                need(self.converge.is_some(), "converge")
            }
            _ => Ok(()),
        }
    }
}

impl From<infgame::Error> for Failure {
    fn from(e: infgame::Error) -> Self {
        let status = match &e {
            infgame::Error::NotConverged { .. } => Status::NotConverged,
            infgame::Error::Io(_) | infgame::Error::Csv(_) => Status::Runtime,
            _ => Status::Invalid,
        };
        Failure::new(status, e.to_string())
    }
}

pub fn output_stem(cfg: &ExperimentConfig, command: &str) -> PathBuf {
    let stem = cfg.output.prefix.clone().unwrap_or_else(|| command.to_string());
    cfg.output.dir.join(stem)
}
