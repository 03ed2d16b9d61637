//! Run configuration files.
//!
//! ```toml
//! problem = "lshape-goal"   # required
//! output = "out/lshape"     # relative to the config file; default `<stem>-out`
//! seed = 0
//!
//! [params]                  # problem parameters, all optional
//! bx = 1.0
//! by = 1.0
//! c = 1.0
//! eps = 0.25
//! cells = 1
//! omega = { x0 = -0.75, x1 = -0.25, y0 = 0.25, y1 = 0.75 }
//!
//! [mark]
//! theta = 0.5               # in (0, 1]
//! strategy = "union"        # or "min-cardinality"
//! bins = 30
//!
//! [driver]
//! max_iterations = 40
//! dof_budget = 100000
//! p = 2
//! degree = 1
//! refinement = "adaptive"   # or "uniform"
//! # gamma_p = 0.1          # default: balanced at the first iteration
//! # gamma_d = 0.1
//! quasi_orthogonality = true
//! estimator_reduction = true
//! reference_errors = true
//!
//! [solver]
//! tol = 1e-10
//! max_iter = 20000
//! method = "auto"           # "cg", "bicgstab", "direct"
//!
//! [export]
//! csv = true
//! vtk = true
//! gnuplot = true
//! snapshot_every = 0        # 0 disables per-iteration snapshots
//!
//! [duality]
//! levels = 7
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{Diagnostics, DriverConfig, Refinement};
use crate::marking::MarkingConfig;
use crate::problem::{manufactured_with, ManufacturedCase, ProblemError, ProblemParams, PROBLEM_NAMES};
use crate::solver::{SolverConfig, SolverMethod};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Range(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefinementMode {
    #[default]
    Adaptive,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriverSection {
    pub max_iterations: usize,
    pub dof_budget: usize,
    pub p: u32,
    pub degree: usize,
    pub refinement: RefinementMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_d: Option<f64>,
    pub quasi_orthogonality: bool,
    pub estimator_reduction: bool,
    pub reference_errors: bool,
}

impl Default for DriverSection {
    fn default() -> Self {
        let d = DriverConfig::default();
        DriverSection {
            max_iterations: d.max_iterations,
            dof_budget: d.dof_budget,
            p: d.p,
            degree: d.degree,
            refinement: RefinementMode::Adaptive,
            gamma_p: None,
            gamma_d: None,
            quasi_orthogonality: d.diagnostics.quasi_orthogonality,
            estimator_reduction: d.diagnostics.estimator_reduction,
            reference_errors: d.diagnostics.reference_errors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolverMethod,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverConfig::default();
        SolverSection {
            tol: s.tol,
            max_iter: s.max_iter,
            method: s.method,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportSection {
    pub csv: bool,
    pub vtk: bool,
    pub gnuplot: bool,
    pub snapshot_every: usize,
}

impl Default for ExportSection {
    fn default() -> Self {
        ExportSection {
            csv: true,
            vtk: true,
            gnuplot: true,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualitySection {
    pub levels: usize,
}

impl Default for DualitySection {
    fn default() -> Self {
        DualitySection { levels: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: ProblemParams,
    #[serde(default)]
    pub mark: MarkingConfig,
    #[serde(default)]
    pub driver: DriverSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub export: ExportSection,
    #[serde(default)]
    pub duality: DualitySection,
}

impl RunConfig {
    /// Minimal configuration for a named problem with every default applied.
    pub fn for_problem(name: &str) -> Self {
        RunConfig {
            problem: name.to_string(),
            output: None,
            seed: 0,
            params: ProblemParams::default(),
            mark: MarkingConfig::default(),
            driver: DriverSection::default(),
            solver: SolverSection::default(),
            export: ExportSection::default(),
            duality: DualitySection::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !PROBLEM_NAMES.contains(&self.problem.as_str()) {
            return Err(ConfigError::Problem(ProblemError::Unknown(self.problem.clone())));
        }
        let t = self.mark.theta;
        if !(t > 0.0 && t <= 1.0) {
            return Err(ConfigError::Range(format!("mark.theta = {t} is outside (0, 1]")));
        }
        if self.mark.bins == 0 {
            return Err(ConfigError::Range("mark.bins must be positive".into()));
        }
        let d = &self.driver;
        if d.p != 1 && d.p != 2 {
            return Err(ConfigError::Range(format!("driver.p = {} must be 1 or 2", d.p)));
        }
        if !(1..=2).contains(&d.degree) {
            return Err(ConfigError::Range(format!("driver.degree = {} must be 1 or 2", d.degree)));
        }
        if d.max_iterations == 0 {
            return Err(ConfigError::Range("driver.max_iterations must be positive".into()));
        }
        for (key, g) in [("gamma_p", d.gamma_p), ("gamma_d", d.gamma_d)] {
            if let Some(g) = g {
                if !(g > 0.0 && g.is_finite()) {
                    return Err(ConfigError::Range(format!("driver.{key} = {g} must be positive")));
                }
            }
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return Err(ConfigError::Range(format!("solver.tol = {} is outside (0, 1)", self.solver.tol)));
        }
        if self.solver.max_iter == 0 {
            return Err(ConfigError::Range("solver.max_iter must be positive".into()));
        }
        if self.duality.levels < 2 {
            return Err(ConfigError::Range("duality.levels must be at least 2".into()));
        }
        self.case()?;
        Ok(())
    }

    pub fn case(&self) -> Result<ManufacturedCase, ProblemError> {
        manufactured_with(&self.problem, &self.params)
    }

    pub fn driver_config(&self) -> DriverConfig {
        let d = &self.driver;
        DriverConfig {
            gamma_p: d.gamma_p,
            gamma_d: d.gamma_d,
            marking: self.mark,
            max_iterations: d.max_iterations,
            dof_budget: d.dof_budget,
            p: d.p,
            degree: d.degree,
            solver: SolverConfig {
                tol: self.solver.tol,
                max_iter: self.solver.max_iter,
                method: self.solver.method,
            },
            refinement: match d.refinement {
                RefinementMode::Adaptive => Refinement::Adaptive,
                RefinementMode::Uniform => Refinement::Uniform,
            },
            diagnostics: Diagnostics {
                quasi_orthogonality: d.quasi_orthogonality,
                estimator_reduction: d.estimator_reduction,
                reference_errors: d.reference_errors,
            },
        }
    }

    /// Output directory, resolved against `base` when relative.
    pub fn output_dir(&self, base: &Path, stem: &str) -> PathBuf {
        match &self.output {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => base.join(p),
            None => base.join(format!("{stem}-out")),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

pub fn parse_config_str(text: &str, path: &Path) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, path)
}
