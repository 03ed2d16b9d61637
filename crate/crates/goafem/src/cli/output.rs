//! Data files written by a run. Only the sidecar carries a timestamp.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::driver::{Cell, ConvergenceHistory, ConvergenceRecord, GoafemState, RECORD_COLUMNS};

/// Seventeen significant digits; NaN as `nan`.
pub fn format_real(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn format_cell(c: Cell) -> String {
    match c {
        Cell::Int(i) => i.to_string(),
        Cell::Real(v) => format_real(v),
        Cell::Flag(b) => u8::from(b).to_string(),
    }
}

pub fn csv_header() -> String {
    RECORD_COLUMNS.join(",")
}

pub fn csv_string(records: &[ConvergenceRecord]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for r in records {
        let row: Vec<String> = r.row().into_iter().map(format_cell).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn emit_csv(history: &ConvergenceHistory, path: &Path) -> io::Result<()> {
    if history.records.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "empty history"));
    }
    std::fs::write(path, csv_string(&history.records))
}

/// Legacy ASCII unstructured grid with solutions at the vertices and
/// indicators per cell. Quadratic solutions are written at the vertices only.
pub fn vtk_string(state: &GoafemState) -> String {
    let space = &state.space;
    let mesh = space.mesh();
    let leaves = space.leaves();
    let mut used = vec![usize::MAX; mesh.num_vertices()];
    let mut order = Vec::new();
    for &e in leaves {
        for v in mesh.element(e).vertices {
            if used[v.idx()] == usize::MAX {
                used[v.idx()] = order.len();
                order.push(v);
            }
        }
    }
    let mut u = vec![0.0; order.len()];
    let mut z = vec![0.0; order.len()];
    for (leaf, &e) in leaves.iter().enumerate() {
        let cu = state.u.local_coeffs(leaf);
        let cz = state.z.local_coeffs(leaf);
        for (l, v) in mesh.element(e).vertices.iter().enumerate() {
            u[used[v.idx()]] = cu[l];
            z[used[v.idx()]] = cz[l];
        }
    }

    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "goafem iteration {}", state.k);
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", order.len());
    for v in &order {
        let p = mesh.vertex(*v).point();
        let _ = writeln!(s, "{} {} 0", p[0], p[1]);
    }
    let _ = writeln!(s, "CELLS {} {}", leaves.len(), 4 * leaves.len());
    for &e in leaves {
        let [a, b, c] = mesh.element(e).vertices;
        let _ = writeln!(s, "3 {} {} {}", used[a.idx()], used[b.idx()], used[c.idx()]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", leaves.len());
    for _ in leaves {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {}", order.len());
    for (name, vals) in [("u", &u), ("z", &z)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in vals.iter() {
            let _ = writeln!(s, "{v}");
        }
    }
    let _ = writeln!(s, "CELL_DATA {}", leaves.len());
    let cell_fields: [(&str, &[f64]); 4] = [
        ("eta", &state.eta.values),
        ("zeta", &state.zeta.values),
        ("osc_p", &state.eta.osc),
        ("osc_d", &state.zeta.osc),
    ];
    for (name, vals) in cell_fields {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in vals {
            let _ = writeln!(s, "{v}");
        }
    }
    s.push_str("SCALARS generation int 1\nLOOKUP_TABLE default\n");
    for &e in leaves {
        let _ = writeln!(s, "{}", mesh.element(e).generation);
    }
    s
}

pub fn emit_vtk(state: &GoafemState, path: &Path) -> io::Result<()> {
    std::fs::write(path, vtk_string(state))
}

/// Log-log plots of errors, estimators and the goal error against `N`.
pub fn gnuplot_script(csv_name: &str, title: &str) -> String {
    let col = |name: &str| RECORD_COLUMNS.iter().position(|c| *c == name).expect("column") + 1;
    let n = col("N");
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set logscale xy");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set xlabel 'N'");
    let _ = writeln!(s, "set title '{title}'");
    let _ = writeln!(s, "set terminal pngcairo size 900,650");
    let _ = writeln!(s, "set output 'convergence.png'");
    let series = ["err_p", "err_d", "eta", "zeta", "goal_err", "goal_bound"];
    let parts: Vec<String> = series
        .iter()
        .map(|c| format!("'{csv_name}' using {n}:{} with linespoints", col(c)))
        .collect();
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    s
}

/// Fitted rates, weights and verdicts; deterministic.
pub fn summary_string(h: &ConvergenceHistory) -> String {
    let rate = |r: Option<f64>| r.map(format_real).unwrap_or_else(|| "nan".into());
    let mut s = String::new();
    let _ = writeln!(s, "problem = {}", h.problem);
    let _ = writeln!(s, "iterations = {}", h.records.len());
    if let Some(r) = h.records.last() {
        let _ = writeln!(s, "final_dofs = {}", r.n_dofs);
    }
    let _ = writeln!(s, "theta = {}", format_real(h.theta));
    let _ = writeln!(s, "gamma_p = {}", format_real(h.gamma_p));
    let _ = writeln!(s, "gamma_d = {}", format_real(h.gamma_d));
    let _ = writeln!(s, "reference_based_p = {}", h.reference_based_p);
    let _ = writeln!(s, "reference_based_d = {}", h.reference_based_d);
    let _ = writeln!(s, "rate_err_p = {}", rate(h.rates.err_p));
    let _ = writeln!(s, "rate_err_d = {}", rate(h.rates.err_d));
    let _ = writeln!(s, "rate_goal = {}", rate(h.rates.goal));
    let _ = writeln!(s, "rate_eta = {}", rate(h.rates.eta));
    let _ = writeln!(s, "rate_zeta = {}", rate(h.rates.zeta));
    let v = &h.verdicts;
    let _ = writeln!(s, "dorfler_ok = {}", v.dorfler);
    let _ = writeln!(s, "goal_bound_ok = {}", v.goal_bound);
    let _ = writeln!(s, "contraction_ok = {}", v.contraction);
    let _ = writeln!(s, "estimator_reduction_ok = {}", v.estimator_reduction);
    let _ = writeln!(s, "osc_dominated_ok = {}", v.osc_dominated);
    s
}

/// Wall-clock time and provenance, kept out of the data files.
pub fn emit_sidecar(dir: &Path, config_path: &Path, seed: u64) -> io::Result<()> {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let text = format!(
        "unix_time = {now}\nconfig = {}\nseed = {seed}\nversion = {}\n",
        config_path.display(),
        env!("CARGO_PKG_VERSION")
    );
    std::fs::write(dir.join("run.meta"), text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_format_has_seventeen_digits() {
        assert_eq!(format_real(0.1), "1.0000000000000001e-1");
        assert_eq!(format_real(f64::NAN), "nan");
        assert_eq!(format_real(2.0), "2.0000000000000000e0");
        let back: f64 = format_real(1.0 / 3.0).parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
    }

    #[test]
    fn header_lists_the_schema() {
        let h = csv_header();
        assert!(h.starts_with("k,N,"));
        for c in ["eta", "zeta", "goal_err", "goal_bound", "Q_p", "Q_d", "E_p", "E_d", "qo_defect", "contraction_ratio"] {
            assert!(h.split(',').any(|x| x == c), "{c}");
        }
    }
}
