//! JSON run configurations. Every field has an explicit default so the
//! resolved copy written next to the outputs reproduces the run.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use probscale::linalg::from_rows;
use probscale::sas::SasKind;
use probscale::scaling::{ConstantMode, ScalingConfig};
use probscale::smpc::{Benchmark, PsConfig, SmpcProblem, SystemJson, UncertainLtiSystem};
use probscale::uncertainty::{DistributionSpec, UncertainConstraintSystem};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const OUT_DIR_ENV: &str = "PROBSCALE_OUT_DIR";

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn check_schema(v: u32) -> Result<(), CliError> {
    if v != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema_version {v} (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

/// Flag, then environment, then config file.
pub fn resolve_out_dir(flag: Option<&Path>, configured: &Path) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured.to_path_buf(),
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("probscale_out")
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintProblem {
    /// `(s·d)ᵀξ ≤ rhs` with `s` the scalar factor block and `d` its target.
    Product { rhs: f64 },
    /// `F(q) = F₀ + Σ q_k F_k`, `g(q) = g₀ + Σ q_k g_k`.
    Affine {
        f0: Vec<Vec<f64>>,
        #[serde(default)]
        f_terms: Vec<Vec<Vec<f64>>>,
        g0: Vec<f64>,
        #[serde(default)]
        g_terms: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleMethod {
    pub sas_kind: SasKind,
    /// Design sample count (`N_D` for norm sets, `N_S` for the sampled set).
    pub n_design: usize,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub constant_mode: ConstantMode,
    /// Domain intersected with the design polytope.
    #[serde(default)]
    pub domain: Option<BoxBounds>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleExecution {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_interior")]
    pub n_interior: usize,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

fn one() -> usize {
    1
}

fn default_n_test() -> usize {
    10_000
}

fn default_interior() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleConfig {
    pub schema_version: u32,
    pub problem: ConstraintProblem,
    pub distribution: DistributionSpec,
    pub method: ScaleMethod,
    pub execution: ScaleExecution,
}

impl ScaleConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_schema(self.schema_version)?;
        self.scaling(0)?;
        if self.method.n_design == 0 {
            return Err(CliError::Config("n_design must be at least 1".into()));
        }
        if self.execution.repeats == 0 {
            return Err(CliError::Config("repeats must be at least 1".into()));
        }
        if self.execution.n_test < 1000 {
            return Err(CliError::Config("n_test must be at least 1000".into()));
        }
        let sys = self.constraint_system()?;
        if let Some(d) = &self.method.domain {
            if d.lower.len() != sys.dim() || d.upper.len() != sys.dim() {
                return Err(CliError::Config(format!("domain bounds need {} entries", sys.dim())));
            }
        }
        Ok(())
    }

    pub fn scaling(&self, seed: u64) -> Result<ScalingConfig, CliError> {
        Ok(ScalingConfig::new(self.method.epsilon, self.method.delta)
            .map_err(|e| CliError::Config(e.to_string()))?
            .with_constant_mode(self.method.constant_mode)
            .with_seed(seed))
    }

    pub fn constraint_system(&self) -> Result<UncertainConstraintSystem, CliError> {
        let cfg = |e: probscale::Error| CliError::Config(e.to_string());
        match &self.problem {
            ConstraintProblem::Product { rhs } => {
                UncertainConstraintSystem::product_from_spec(&self.distribution, *rhs).map_err(cfg)
            }
            ConstraintProblem::Affine {
                f0,
                f_terms,
                g0,
                g_terms,
            } => {
                let n = f0.first().map_or(0, |r| r.len());
                let f0 = from_rows(f0, n).map_err(cfg)?;
                let f_terms = f_terms
                    .iter()
                    .map(|t| from_rows(t, n))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(cfg)?;
                let g_terms = g_terms.iter().map(|t| DVector::from_column_slice(t)).collect();
                UncertainConstraintSystem::affine(f0, f_terms, DVector::from_column_slice(g0), g_terms).map_err(cfg)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomProblem {
    pub system: SystemJson,
    pub horizon: usize,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub h_x: Vec<Vec<f64>>,
    pub h_u: Vec<Vec<f64>>,
    /// One level for all rows, or one per row.
    pub epsilon: Vec<f64>,
    pub delta: f64,
    pub x0: Vec<f64>,
    /// Operating box on `(x_k, v)`; defaults to ±10 per coordinate.
    #[serde(default)]
    pub operating_box: Option<BoxBounds>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmpcProblemConfig {
    Chain(Benchmark),
    Custom(Box<CustomProblem>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsMethod {
    pub sas_kind: SasKind,
    pub n_design: usize,
    #[serde(default)]
    pub constant_mode: ConstantMode,
}

impl Default for PsMethod {
    fn default() -> Self {
        PsMethod {
            sas_kind: SasKind::Sampled,
            n_design: 100,
            constant_mode: ConstantMode::Exact,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmpcExecution {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_n_cost")]
    pub n_cost: usize,
    /// Write measured solve times; turn off for byte-identical reruns.
    #[serde(default = "default_true")]
    pub record_timing: bool,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

fn default_runs() -> usize {
    5
}

fn default_steps() -> usize {
    50
}

fn default_n_cost() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmpcConfig {
    pub schema_version: u32,
    pub problem: SmpcProblemConfig,
    #[serde(default)]
    pub ps: PsMethod,
    pub execution: SmpcExecution,
}

/// A problem together with everything needed to run it.
pub struct ResolvedSmpc {
    pub problem: SmpcProblem,
    pub x0: DVector<f64>,
    pub ps: PsConfig,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    let ncols = rows.first().map_or(0, |r| r.len());
    from_rows(rows, ncols).map_err(|e| CliError::Config(format!("{what}: {e}")))
}

impl SmpcConfig {
    pub fn resolve(&self) -> Result<ResolvedSmpc, CliError> {
        check_schema(self.schema_version)?;
        let e = &self.execution;
        if e.runs == 0 || e.steps == 0 {
            return Err(CliError::Config("runs and steps must be at least 1".into()));
        }
        if e.n_cost < probscale::smpc::MIN_COST_SAMPLES {
            return Err(CliError::Config(format!(
                "n_cost must be at least {}",
                probscale::smpc::MIN_COST_SAMPLES
            )));
        }
        if self.ps.n_design == 0 {
            return Err(CliError::Config("ps.n_design must be at least 1".into()));
        }
        let cfg = |e: probscale::Error| CliError::Config(e.to_string());
        match &self.problem {
            SmpcProblemConfig::Chain(b) => {
                let problem = b.problem().map_err(cfg)?;
                let scaling = self.scaling(problem.eps[0])?;
                Ok(ResolvedSmpc {
                    x0: b.initial_state().map_err(cfg)?,
                    ps: b.ps_config(self.ps.sas_kind, self.ps.n_design, scaling).map_err(cfg)?,
                    problem,
                })
            }
            SmpcProblemConfig::Custom(c) => {
                let system = UncertainLtiSystem::try_from(c.system.clone()).map_err(cfg)?;
                let problem = SmpcProblem::new(
                    system,
                    c.horizon,
                    matrix(&c.q, "q")?,
                    matrix(&c.r, "r")?,
                    matrix(&c.h_x, "h_x")?,
                    matrix(&c.h_u, "h_u")?,
                    c.epsilon.clone(),
                    c.delta,
                )
                .map_err(cfg)?;
                if c.x0.len() != problem.n() {
                    return Err(CliError::Config(format!("x0 needs {} entries", problem.n())));
                }
                let eps = problem.eps.iter().copied().fold(f64::INFINITY, f64::min);
                let scaling = self.scaling(eps)?;
                let mut ps = PsConfig::with_default_box(&problem, self.ps.sas_kind, self.ps.n_design, scaling);
                if let Some(b) = &c.operating_box {
                    ps.box_lower = b.lower.clone();
                    ps.box_upper = b.upper.clone();
                }
                Ok(ResolvedSmpc {
                    x0: DVector::from_column_slice(&c.x0),
                    problem,
                    ps,
                })
            }
        }
    }

    /// The PS scaling uses the tightest per-row level.
    fn scaling(&self, epsilon: f64) -> Result<ScalingConfig, CliError> {
        let delta = match &self.problem {
            SmpcProblemConfig::Chain(b) => b.delta,
            SmpcProblemConfig::Custom(c) => c.delta,
        };
        Ok(ScalingConfig::new(epsilon, delta)
            .map_err(|e| CliError::Config(e.to_string()))?
            .with_constant_mode(self.ps.constant_mode)
            .with_seed(self.execution.seed))
    }
}
