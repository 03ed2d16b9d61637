use std::collections::HashMap;
use std::fs;
use std::path::Path;

use goafem::cli::main_with_args;
use goafem::driver::RECORD_COLUMNS;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn goafem(args: &[&str]) -> i32 {
    let mut all = vec!["goafem"];
    all.extend_from_slice(args);
    main_with_args(all)
}

/// Minimal legacy-VTK reader: section name to its numeric payload.
struct Vtk {
    points: usize,
    coords: Vec<[f64; 2]>,
    cells: Vec<Vec<usize>>,
    point_data: HashMap<String, Vec<f64>>,
    cell_data: HashMap<String, Vec<f64>>,
}

fn read_vtk(text: &str) -> Vtk {
    let mut lines = text.lines().peekable();
    assert_eq!(lines.next(), Some("# vtk DataFile Version 3.0"));
    lines.next();
    assert_eq!(lines.next(), Some("ASCII"));
    assert_eq!(lines.next(), Some("DATASET UNSTRUCTURED_GRID"));
    let mut vtk = Vtk {
        points: 0,
        coords: Vec::new(),
        cells: Vec::new(),
        point_data: HashMap::new(),
        cell_data: HashMap::new(),
    };
    let mut section = "";
    let mut count = 0;
    while let Some(line) = lines.next() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.first().copied() {
            Some("POINTS") => {
                vtk.points = words[1].parse().unwrap();
                for _ in 0..vtk.points {
                    let p: Vec<f64> = lines.next().unwrap().split_whitespace().map(|w| w.parse().unwrap()).collect();
                    assert_eq!(p.len(), 3);
                    vtk.coords.push([p[0], p[1]]);
                }
            }
            Some("CELLS") => {
                let n: usize = words[1].parse().unwrap();
                for _ in 0..n {
                    let c: Vec<usize> = lines.next().unwrap().split_whitespace().map(|w| w.parse().unwrap()).collect();
                    assert_eq!(c[0], 3);
                    vtk.cells.push(c[1..].to_vec());
                }
            }
            Some("CELL_TYPES") => {
                let n: usize = words[1].parse().unwrap();
                for _ in 0..n {
                    assert_eq!(lines.next(), Some("5"));
                }
            }
            Some("POINT_DATA") => {
                section = "point";
                count = words[1].parse().unwrap();
            }
            Some("CELL_DATA") => {
                section = "cell";
                count = words[1].parse().unwrap();
            }
            Some("SCALARS") => {
                let name = words[1].to_string();
                assert_eq!(lines.next(), Some("LOOKUP_TABLE default"));
                let vals: Vec<f64> = (0..count).map(|_| lines.next().unwrap().trim().parse().unwrap()).collect();
                if section == "point" {
                    vtk.point_data.insert(name, vals);
                } else {
                    vtk.cell_data.insert(name, vals);
                }
            }
            None => {}
            Some(other) => panic!("unexpected line {other}"),
        }
    }
    vtk
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(goafem(&["--help"]), 0);
    assert_eq!(goafem(&["frobnicate"]), 2);
    assert_eq!(goafem(&["run", "/nonexistent/config.toml"]), 2);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let theta = write(dir.path(), "theta.toml", "problem = \"square-smooth\"\n[mark]\ntheta = 1.5\n");
    let key = write(dir.path(), "key.toml", "problem = \"square-smooth\"\nbogus = 1\n");
    let name = write(dir.path(), "name.toml", "problem = \"circle\"\n");
    let syntax = write(dir.path(), "syntax.toml", "problem = \n");
    for p in [&theta, &key, &name, &syntax] {
        assert_eq!(goafem(&["run", p]), 2, "{p}");
    }
    assert_eq!(goafem(&["sweep", &format!("{}/none-*.toml", dir.path().display())]), 2);
}

#[test]
fn short_run_writes_every_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "short.toml",
        "problem = \"lshape-goal\"\n[driver]\nmax_iterations = 3\n[export]\nsnapshot_every = 2\n",
    );
    assert_eq!(goafem(&["run", &cfg]), 0);
    let out = dir.path().join("short-out");
    let csv = fs::read_to_string(out.join("history.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], RECORD_COLUMNS.join(","));
    assert_eq!(
        lines[0],
        "k,N,leaves,eta,zeta,osc_p,osc_d,err_p,err_d,Q_p,Q_d,E_p,E_d,goal_value,goal_err,goal_bound,\
dorfler_p,dorfler_d,marked,marked_p,marked_d,contraction_ratio,contraction_ratio_d,qo_defect,qo_defect_d,\
est_reduction_ok,est_monotone_ok,est_reduction_slack,osc_dominated,solver_iterations_p,solver_iterations_d,\
solver_residual_p,solver_residual_d"
    );
    for (k, l) in lines[1..].iter().enumerate() {
        let cells: Vec<&str> = l.split(',').collect();
        assert_eq!(cells.len(), RECORD_COLUMNS.len());
        assert_eq!(cells[0], k.to_string());
    }
    for f in ["final.vtk", "plot.gp", "summary.txt", "run.meta", "mesh_0000.txt", "mesh_0002.txt", "state_0002.vtk"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join("mesh_0001.txt").exists());

    let vtk = read_vtk(&fs::read_to_string(out.join("final.vtk")).unwrap());
    let last: Vec<&str> = lines[3].split(',').collect();
    let leaves: usize = last[2].parse().unwrap();
    assert_eq!(vtk.cells.len(), leaves);
    assert!(vtk.cells.iter().flatten().all(|&v| v < vtk.points));
    for name in ["u", "z"] {
        assert_eq!(vtk.point_data[name].len(), vtk.points);
    }
    for name in ["eta", "zeta", "osc_p", "osc_d", "generation"] {
        let v = &vtk.cell_data[name];
        assert_eq!(v.len(), leaves);
        assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0));
    }
    let eta: f64 = vtk.cell_data["eta"].iter().map(|v| v * v).sum::<f64>().sqrt();
    let reported: f64 = last[3].parse().unwrap();
    assert!((eta - reported).abs() <= 1e-12 * reported);
    assert!(vtk.point_data["u"].iter().any(|v| *v != 0.0));

    // snapshot coordinates are exactly the vertices of the saved mesh
    let snap = read_vtk(&fs::read_to_string(out.join("state_0002.vtk")).unwrap());
    let mesh = goafem::mesh::read_mesh(&fs::read_to_string(out.join("mesh_0002.txt")).unwrap()).unwrap();
    assert_eq!(snap.cells.len(), mesh.num_leaves());
    for (cell, e) in snap.cells.iter().zip(mesh.leaves()) {
        let pts = mesh.points(e);
        for (k, &v) in cell.iter().enumerate() {
            assert_eq!(snap.coords[v], pts[k]);
        }
    }

    // reruns reproduce the data files byte for byte
    let first = fs::read(out.join("history.csv")).unwrap();
    let summary = fs::read(out.join("summary.txt")).unwrap();
    assert_eq!(goafem(&["run", &cfg]), 0);
    assert_eq!(fs::read(out.join("history.csv")).unwrap(), first);
    assert_eq!(fs::read(out.join("summary.txt")).unwrap(), summary);
}

#[test]
fn solver_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "fail.toml",
        "problem = \"square-convect\"\n[solver]\ntol = 1e-300\nmax_iter = 1\nmethod = \"bicgstab\"\n",
    );
    assert_eq!(goafem(&["run", &cfg]), 3);
}

#[test]
fn strict_theory_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    // a negligible estimator weight with tiny bulk steps cannot contract
    let cfg = write(
        dir.path(),
        "weak.toml",
        "problem = \"square-convect\"\n[mark]\ntheta = 0.02\n[driver]\nmax_iterations = 8\ngamma_p = 1e-12\ngamma_d = 1e-12\n",
    );
    assert_eq!(goafem(&["run", &cfg]), 0);
    assert_eq!(goafem(&["run", "--strict-theory", &cfg]), 4);
}

#[test]
fn theta_sweep_and_marking_rules() {
    let dir = tempfile::tempdir().unwrap();
    for theta in ["0.3", "0.5", "0.7"] {
        write(
            dir.path(),
            &format!("theta-{theta}.toml"),
            &format!("problem = \"lshape-goal\"\n[mark]\ntheta = {theta}\n[driver]\ndof_budget = 3000\nmax_iterations = 60\n"),
        );
    }
    let pattern = format!("{}/theta-*.toml", dir.path().display());
    assert_eq!(goafem(&["sweep", &pattern]), 0);
    for theta in ["0.3", "0.5", "0.7"] {
        assert!(dir.path().join(format!("theta-{theta}-out/history.csv")).exists());
    }

    let mut configs = Vec::new();
    for rule in ["union", "min-cardinality"] {
        let text = format!("problem = \"square-convect\"\n[mark]\nstrategy = \"{rule}\"\n[driver]\ndof_budget = 3000\n");
        let c = goafem::cli::parse_config_str(&text, Path::new("inline.toml")).unwrap();
        configs.push((rule.to_string(), c));
    }
    let rows = goafem::cli::compare_runs(&configs).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let g = r.goal_rate.unwrap();
        assert!(g < -0.5, "{}: {g}", r.label);
    }
    let table = goafem::cli::compare_table(&rows);
    assert!(table.contains("min-cardinality"));
}

#[test]
fn duality_subcommand_writes_its_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "dual.toml", "problem = \"square-smooth\"\n[duality]\nlevels = 4\n");
    assert_eq!(goafem(&["duality", &cfg]), 0);
    let table = fs::read_to_string(dir.path().join("dual-out/duality.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.starts_with("level,N,h,l2_err,energy_err,ratio"));
}

#[test]
fn duality_ratios_are_positive_with_and_without_convection() {
    let solver = goafem::solver::SolverConfig::default();
    for b in [0.0, 1.0] {
        let params = goafem::problem::ProblemParams {
            bx: Some(b),
            by: Some(b),
            ..Default::default()
        };
        let case = goafem::problem::manufactured_with("square-smooth", &params).unwrap();
        let report = goafem::cli::duality_study(&case, 1, 4, &solver).unwrap();
        assert!(report.rows.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0));
        assert!(report.exponent.is_finite());
    }
}
