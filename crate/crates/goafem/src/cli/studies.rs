//! Uniform-refinement duality study and side-by-side comparison of runs.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::driver::{fit_rate, run, DriverError, FitError};
use crate::fem::{assemble, energy_norm_diff, l2_norm_diff, FeSolution, FeSpace};
use crate::problem::ManufacturedCase;
use crate::solver::{solve, SolverConfig};

use super::config::RunConfig;
use super::output::format_real;

#[derive(Debug, Clone, PartialEq)]
pub struct DualityRow {
    pub level: usize,
    pub n_dofs: usize,
    pub h: f64,
    pub l2: f64,
    pub energy: f64,
    /// `‖u - u_k‖ / ⫴u - u_k⫴`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    pub problem: String,
    pub rows: Vec<DualityRow>,
    /// Fitted exponent `s` of `ratio ~ h^s` over the finest levels.
    pub exponent: f64,
}

impl DualityReport {
    pub fn table(&self) -> String {
        let mut s = String::from("level,N,h,l2_err,energy_err,ratio\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.level,
                r.n_dofs,
                format_real(r.h),
                format_real(r.l2),
                format_real(r.energy),
                format_real(r.ratio)
            );
        }
        s
    }
}

/// Number of finest levels entering the exponent fit.
pub const FIT_LEVELS: usize = 4;

/// Solves the primal problem on `levels` nested uniform meshes, each with
/// half the mesh size of the previous one, and fits `‖e‖_{L2} / ⫴e⫴`
/// against the mesh size.
pub fn duality_study(
    case: &ManufacturedCase,
    degree: usize,
    levels: usize,
    solver: &SolverConfig,
) -> Result<DualityReport, DriverError> {
    let exact = case
        .exact_u
        .clone()
        .ok_or_else(|| DriverError::Config(format!("{} has no exact solution", case.name)))?;
    let mut mesh = case.initial_mesh();
    let mut rows = Vec::with_capacity(levels);
    for level in 0..levels {
        if level > 0 {
            // two bisection sweeps halve the mesh size
            mesh.refine_uniform()?;
            mesh.refine_uniform()?;
        }
        let space = Arc::new(FeSpace::new(Arc::new(mesh.clone()), degree)?);
        let sys = assemble(&space, &case.data)?;
        let (x, report) = solve(&sys.matrix, &sys.rhs, solver, None);
        if !report.converged {
            return Err(DriverError::Solver {
                side: crate::estimator::Side::Primal,
                residual: report.final_residual_norm,
                iterations: report.iterations,
                partial: Vec::new(),
            });
        }
        let u = FeSolution::new(space.clone(), x)?;
        let l2 = l2_norm_diff(&u, &exact);
        let energy = energy_norm_diff(&space, &case.data, &u, &exact);
        rows.push(DualityRow {
            level,
            n_dofs: space.num_dofs(),
            h: mesh.stats().h_max,
            l2,
            energy,
            ratio: l2 / energy,
        });
    }
    let fit: Vec<&DualityRow> = rows.iter().skip(rows.len().saturating_sub(FIT_LEVELS)).collect();
    let h: Vec<f64> = fit.iter().map(|r| r.h).collect();
    let ratio: Vec<f64> = fit.iter().map(|r| r.ratio).collect();
    let exponent = fit_rate(&h, &ratio).map_err(|e: FitError| DriverError::Config(e.to_string()))?;
    Ok(DualityReport {
        problem: case.name.clone(),
        rows,
        exponent,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub label: String,
    pub problem: String,
    pub theta: f64,
    pub strategy: String,
    pub iterations: usize,
    pub final_n: usize,
    pub goal_rate: Option<f64>,
    pub err_rate_p: Option<f64>,
    pub err_rate_d: Option<f64>,
}

/// Runs every configuration (concurrently) and tabulates fitted rates.
pub fn compare_runs(configs: &[(String, RunConfig)]) -> Result<Vec<CompareRow>, DriverError> {
    configs
        .par_iter()
        .map(|(label, cfg)| {
            let case = cfg.case()?;
            let h = run(&case, &cfg.driver_config())?;
            Ok(CompareRow {
                label: label.clone(),
                problem: cfg.problem.clone(),
                theta: cfg.mark.theta,
                strategy: cfg.mark.strategy.to_string(),
                iterations: h.records.len(),
                final_n: h.records.last().map(|r| r.n_dofs).unwrap_or(0),
                goal_rate: h.rates.goal,
                err_rate_p: h.rates.err_p,
                err_rate_d: h.rates.err_d,
            })
        })
        .collect()
}

pub fn compare_table(rows: &[CompareRow]) -> String {
    let rate = |r: Option<f64>| r.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    let mut s = format!(
        "{:<28} {:<15} {:>6} {:<16} {:>5} {:>8} {:>9} {:>9} {:>9}\n",
        "config", "problem", "theta", "strategy", "iters", "final_N", "goal", "err_p", "err_d"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<28} {:<15} {:>6.3} {:<16} {:>5} {:>8} {:>9} {:>9} {:>9}",
            r.label,
            r.problem,
            r.theta,
            r.strategy,
            r.iterations,
            r.final_n,
            rate(r.goal_rate),
            rate(r.err_rate_p),
            rate(r.err_rate_d)
        );
    }
    s
}
