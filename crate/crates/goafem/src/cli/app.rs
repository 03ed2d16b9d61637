use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::driver::{run_observed, ConvergenceHistory, DriverError};
use crate::mesh::write_mesh;

use super::config::{parse_config, ConfigError, RunConfig};
use super::output::{emit_csv, emit_sidecar, emit_vtk, gnuplot_script, summary_string};
use super::studies::{compare_table, duality_study, CompareRow};

const AFTER_HELP: &str = "\
Configuration files are TOML. Only `problem` is required; unknown keys are errors.
Problems: square-smooth, square-convect, lshape-corner, lshape-goal.

Defaults:
  [params]  bx = 1, by = 1, c = 1, eps = 0.25, cells = 2 (square) / 1 (L-shape),
            omega = { x0 = -0.75, x1 = -0.25, y0 = 0.25, y1 = 0.75 }
  [mark]    theta = 0.5, strategy = \"union\", bins = 30
  [driver]  max_iterations = 40, dof_budget = 100000, p = 2, degree = 1,
            refinement = \"adaptive\", gamma_p/gamma_d from the first iteration,
            quasi_orthogonality = true, estimator_reduction = true, reference_errors = true
  [solver]  tol = 1e-10, max_iter = 20000, method = \"auto\"
  [export]  csv = true, vtk = true, gnuplot = true, snapshot_every = 0
  [duality] levels = 7
  output = \"<config stem>-out\" next to the config file, seed = 0

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 diagnostic failure (only with --strict-theory).";

#[derive(Debug, Parser)]
#[command(name = "goafem", version, about = "Goal-oriented adaptive finite elements", after_help = AFTER_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the adaptive loop for one configuration.
    Run {
        config: PathBuf,
        /// Exit with code 4 when a per-iteration diagnostic fails.
        #[arg(long)]
        strict_theory: bool,
    },
    /// Run every configuration matching a glob and compare fitted rates.
    Sweep {
        pattern: String,
        #[arg(long)]
        strict_theory: bool,
    },
    /// Tabulate L2 over energy error on uniform meshes and fit the exponent.
    Duality { config: PathBuf },
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Solver(String),
    #[error("diagnostics failed: {0}")]
    Diagnostic(String),
    #[error("{0}")]
    Other(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Solver(_) => 3,
            AppError::Diagnostic(_) => 4,
            AppError::Other(_) => 1,
        }
    }
}

impl From<DriverError> for AppError {
    fn from(e: DriverError) -> Self {
        match e {
            DriverError::Solver { .. } => AppError::Solver(e.to_string()),
            DriverError::Config(m) => AppError::Config(ConfigError::Range(m)),
            DriverError::Problem(p) => AppError::Config(ConfigError::Problem(p)),
            DriverError::Marking(m) => AppError::Config(ConfigError::Range(m.to_string())),
            other => AppError::Other(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> AppError + '_ {
    move |e| AppError::Other(format!("{}: {e}", path.display()))
}

fn base_and_stem(path: &Path) -> (PathBuf, String) {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    (base, stem)
}

/// Runs one configuration and writes its exports.
pub fn execute(cfg: &RunConfig, config_path: &Path) -> Result<ConvergenceHistory, AppError> {
    let (base, stem) = base_and_stem(config_path);
    let dir = cfg.output_dir(&base, &stem);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let case = cfg.case().map_err(ConfigError::from)?;
    let every = cfg.export.snapshot_every;
    let mut snapshot_error = None;
    let result = run_observed(&case, &cfg.driver_config(), &mut |state, _| {
        if every > 0 && state.k % every == 0 && snapshot_error.is_none() {
            let mesh_path = dir.join(format!("mesh_{:04}.txt", state.k));
            let vtk_path = dir.join(format!("state_{:04}.vtk", state.k));
            let r = std::fs::write(&mesh_path, write_mesh(state.mesh())).and_then(|_| emit_vtk(state, &vtk_path));
            if let Err(e) = r {
                snapshot_error = Some(AppError::Other(format!("{}: {e}", dir.display())));
            }
        }
    });
    let out = match result {
        Ok(o) => o,
        Err(DriverError::Solver {
            side,
            residual,
            iterations,
            partial,
        }) => {
            // flush what was computed before the failure
            if cfg.export.csv && !partial.is_empty() {
                let p = dir.join("history.csv");
                std::fs::write(&p, super::output::csv_string(&partial)).map_err(io_err(&p))?;
            }
            return Err(DriverError::Solver {
                side,
                residual,
                iterations,
                partial,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(e) = snapshot_error {
        return Err(e);
    }
    let h = out.history;
    if cfg.export.csv {
        let p = dir.join("history.csv");
        emit_csv(&h, &p).map_err(io_err(&p))?;
    }
    if cfg.export.vtk {
        let p = dir.join("final.vtk");
        emit_vtk(&out.state, &p).map_err(io_err(&p))?;
    }
    if cfg.export.gnuplot {
        let p = dir.join("plot.gp");
        std::fs::write(&p, gnuplot_script("history.csv", &cfg.problem)).map_err(io_err(&p))?;
    }
    let p = dir.join("summary.txt");
    std::fs::write(&p, summary_string(&h)).map_err(io_err(&p))?;
    emit_sidecar(&dir, config_path, cfg.seed).map_err(io_err(&dir))?;
    Ok(h)
}

fn failed_verdicts(h: &ConvergenceHistory) -> Vec<&'static str> {
    let v = &h.verdicts;
    let mut out = Vec::new();
    if !v.dorfler {
        out.push("dorfler");
    }
    if !v.goal_bound {
        out.push("goal-bound");
    }
    if !v.contraction {
        out.push("contraction");
    }
    if !v.estimator_reduction {
        out.push("estimator-reduction");
    }
    if !v.osc_dominated {
        out.push("oscillation");
    }
    out
}

fn print_history(h: &ConvergenceHistory) {
    if let Some(r) = h.records.last() {
        println!(
            "{}: {} iterations, N = {}, eta = {:.4e}, zeta = {:.4e}, goal error = {:.4e}",
            h.problem,
            h.records.len(),
            r.n_dofs,
            r.eta,
            r.zeta,
            r.goal_err
        );
    }
    let fmt = |r: Option<f64>| r.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    println!(
        "rates: energy {} / {}, goal {}",
        fmt(h.rates.err_p),
        fmt(h.rates.err_d),
        fmt(h.rates.goal)
    );
}

pub fn cmd_run(path: &Path, strict: bool) -> Result<(), AppError> {
    let cfg = parse_config(path)?;
    let h = execute(&cfg, path)?;
    print_history(&h);
    let failed = failed_verdicts(&h);
    if !failed.is_empty() {
        eprintln!("warning: diagnostics failed: {}", failed.join(", "));
        if strict {
            return Err(AppError::Diagnostic(failed.join(", ")));
        }
    }
    Ok(())
}

pub fn cmd_sweep(pattern: &str, strict: bool) -> Result<(), AppError> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| AppError::Config(ConfigError::Range(format!("bad pattern: {e}"))))?
        .filter_map(Result::ok)
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(AppError::Config(ConfigError::Range(format!("no configuration matches `{pattern}`"))));
    }
    let configs: Vec<(PathBuf, RunConfig)> = paths
        .into_iter()
        .map(|p| parse_config(&p).map(|c| (p, c)))
        .collect::<Result<_, _>>()?;
    let results: Vec<Result<(CompareRow, Vec<&'static str>), AppError>> = configs
        .par_iter()
        .map(|(p, c)| {
            let h = execute(c, p)?;
            let row = CompareRow {
                label: p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                problem: c.problem.clone(),
                theta: c.mark.theta,
                strategy: c.mark.strategy.to_string(),
                iterations: h.records.len(),
                final_n: h.records.last().map(|r| r.n_dofs).unwrap_or(0),
                goal_rate: h.rates.goal,
                err_rate_p: h.rates.err_p,
                err_rate_d: h.rates.err_d,
            };
            Ok((row, failed_verdicts(&h)))
        })
        .collect();
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        let (row, f) = r?;
        if !f.is_empty() {
            failed.push(format!("{}: {}", row.label, f.join(", ")));
        }
        rows.push(row);
    }
    print!("{}", compare_table(&rows));
    if !failed.is_empty() {
        eprintln!("warning: diagnostics failed: {}", failed.join("; "));
        if strict {
            return Err(AppError::Diagnostic(failed.join("; ")));
        }
    }
    Ok(())
}

pub fn cmd_duality(path: &Path) -> Result<(), AppError> {
    let cfg = parse_config(path)?;
    let case = cfg.case().map_err(ConfigError::from)?;
    let d = cfg.driver_config();
    let report = duality_study(&case, d.degree, cfg.duality.levels, &d.solver)?;
    let (base, stem) = base_and_stem(path);
    let dir = cfg.output_dir(&base, &stem);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let p = dir.join("duality.csv");
    std::fs::write(&p, report.table()).map_err(io_err(&p))?;
    print!("{}", report.table());
    println!("{}: fitted exponent s = {:.4}", report.problem, report.exponent);
    Ok(())
}

/// Parses arguments, dispatches, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run { config, strict_theory } => cmd_run(config, *strict_theory),
        Command::Sweep { pattern, strict_theory } => cmd_sweep(pattern, *strict_theory),
        Command::Duality { config } => cmd_duality(config),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
