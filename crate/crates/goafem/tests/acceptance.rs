//! End-to-end acceptance checks. All criteria run sequentially inside one
//! test so that timings are not distorted by parallel test threads.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use goafem::cli::{csv_string, duality_study, parse_config, RunConfig};
use goafem::driver::{geometric_factor, run_with_state, ConvergenceHistory, RunOutput};
use goafem::estimator::{IndicatorField, Side};
use goafem::fem::{assemble, assemble_dual, FeSpace};
use goafem::marking::{dorfler_mark, minimal_cardinality, verify_dorfler, MarkingConfig};
use goafem::mesh::{criss_cross_lshape, criss_cross_square, nvb_min_angle_bound, ElemId, Mesh};
use goafem::problem::{manufactured, PROBLEM_NAMES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(name: &str) -> (PathBuf, RunConfig) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    let cfg = parse_config(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
    (path, cfg)
}

fn run_cfg(cfg: &RunConfig) -> (RunOutput, Duration) {
    let case = cfg.case().expect("case");
    let t = Instant::now();
    let out = run_with_state(&case, &cfg.driver_config()).expect("run");
    (out, t.elapsed())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Records that carry a transition to the next mesh.
fn stepped(h: &ConvergenceHistory) -> &[goafem::driver::ConvergenceRecord] {
    &h.records[..h.records.len() - 1]
}

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

struct Report(Vec<Outcome>);

impl Report {
    fn record(&mut self, id: usize, pass: bool, detail: String) {
        println!("[C{id:>2}] {} {detail}", if pass { "PASS" } else { "FAIL" });
        self.0.push(Outcome { id, pass, detail });
    }
}

fn random_field(rng: &mut ChaCha8Rng) -> IndicatorField {
    let n = rng.gen_range(1..400);
    let spread: f64 = rng.gen_range(0.0..12.0);
    let values: Vec<f64> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.05) {
                0.0
            } else {
                10f64.powf(-rng.gen_range(0.0..spread))
            }
        })
        .collect();
    IndicatorField {
        leaves: (0..n as u32).map(ElemId).collect(),
        interior: values.clone(),
        jump: vec![0.0; n],
        osc: vec![0.0; n],
        values,
        p: 2,
        side: Side::Primal,
        revision: 0,
    }
}

fn random_refinement(base: &Mesh, rng: &mut ChaCha8Rng) -> Mesh {
    let mut m = base.clone();
    for _ in 0..rng.gen_range(1..6) {
        let leaves = m.leaves();
        let marked: Vec<ElemId> = leaves.iter().copied().filter(|_| rng.gen_bool(0.2)).collect();
        m.refine(&marked).expect("refine");
    }
    m
}

fn q_over_e_band(h: &ConvergenceHistory) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for r in &h.records {
        for (q, e) in [(r.q_p, r.e_p), (r.q_d, r.e_d)] {
            if q.is_finite() && e.is_finite() && e > 0.0 {
                lo = lo.min(q / e);
                hi = hi.max(q / e);
            }
        }
    }
    hi / lo
}

#[test]
fn acceptance() {
    let mut report = Report(Vec::new());
    let mut runs: Vec<(&str, ConvergenceHistory)> = Vec::new();

    // mesh kernel after 20 refinements of the goal problem
    let (_, goal_cfg) = config("lshape-goal.toml");
    let (goal_run, t) = run_cfg(&goal_cfg);
    {
        let mesh = goal_run.state.mesh();
        let inv = mesh.check_invariants();
        let bound = nvb_min_angle_bound(&mesh.root_triangles(), 4);
        let angle = mesh.stats().min_angle;
        let pass = goal_run.state.k == 20 && inv.is_ok() && angle >= bound * (1.0 - 1e-12) && t.as_secs_f64() < 60.0;
        report.record(
            1,
            pass,
            format!(
                "k = {}, invariants {:?}, min angle {:.4} vs bound {:.4}, {:.1?}",
                goal_run.state.k, inv, angle, bound, t
            ),
        );
    }
    runs.push(("lshape-goal", goal_run.history));

    // contraction and goal convergence on the convective square
    let (_, convect_cfg) = config("square-convect.toml");
    let (convect, t4) = run_cfg(&convect_cfg);
    let convect = convect.history;
    {
        let qp = convect.column(|r| r.q_p);
        let qd = convect.column(|r| r.q_d);
        let ap = geometric_factor(&qp).unwrap_or(f64::NAN);
        let ad = geometric_factor(&qd).unwrap_or(f64::NAN);
        let worst = stepped(&convect)
            .iter()
            .skip(2)
            .map(|r| r.contraction_ratio.max(r.contraction_ratio_d))
            .fold(0.0f64, f64::max);
        let pass = convect.records.len() == 25
            && worst <= 0.99
            && ap > 0.0
            && ap < 1.0
            && ad > 0.0
            && ad < 1.0
            && t4.as_secs_f64() < 120.0;
        report.record(
            4,
            pass,
            format!("max ratio (k >= 2) {worst:.4}, alpha_p {ap:.4}, alpha_d {ad:.4}, {t4:.1?}"),
        );

        let bound_ok = convect.records.iter().all(|r| r.goal_err <= r.goal_bound + 1e-10);
        let rate = convect.rates.goal.unwrap_or(f64::NAN);
        let pass = bound_ok && (-1.25..=-0.75).contains(&rate);
        report.record(5, pass, format!("goal bound holds {bound_ok}, goal rate {rate:.4}"));
    }

    // optimality restoration on the corner singularity
    let (_, corner_cfg) = config("lshape-corner.toml");
    let (adaptive, ta) = run_cfg(&corner_cfg);
    let mut uniform_cfg = corner_cfg.clone();
    uniform_cfg.driver.refinement = goafem::cli::config::RefinementMode::Uniform;
    let (uniform, tu) = run_cfg(&uniform_cfg);
    let (adaptive, uniform) = (adaptive.history, uniform.history);
    {
        let ra = adaptive.rates.err_p.unwrap_or(f64::NAN);
        let ru = uniform.rates.err_p.unwrap_or(f64::NAN);
        let na = adaptive.records.last().unwrap().n_dofs;
        let nu = uniform.records.last().unwrap().n_dofs;
        let total = ta + tu;
        let pass = (-0.40..=-0.27).contains(&ru)
            && ra <= -0.45
            && na <= 100_000
            && nu <= 100_000
            && total.as_secs_f64() < 180.0;
        report.record(
            6,
            pass,
            format!("uniform {ru:.4} (N = {nu}), adaptive {ra:.4} (N = {na}), {total:.1?}"),
        );
    }

    // quasi-orthogonality
    let (_, sym_cfg) = config("square-symmetric.toml");
    let (sym, _) = run_cfg(&sym_cfg);
    let sym = sym.history;
    {
        let worst_sym = stepped(&sym)
            .iter()
            .flat_map(|r| [r.qo_defect, r.qo_defect_d])
            .fold(0.0f64, f64::max);
        let defects: Vec<f64> = stepped(&convect).iter().map(|r| r.qo_defect).collect();
        let early = median(defects[..5].to_vec());
        let late = median(defects[defects.len() - 10..].to_vec());
        let pass = worst_sym <= 1e-8 && stepped(&sym).len() >= 5 && late < early;
        report.record(
            7,
            pass,
            format!("b = 0 max defect {worst_sym:.2e}; b = (1,1) median first 5 {early:.2e}, last 10 {late:.2e}"),
        );
    }

    // estimator reduction on the contraction and optimality runs
    {
        let mut pass = true;
        let mut worst = f64::NEG_INFINITY;
        for h in [&convect, &adaptive, &uniform] {
            for r in stepped(h) {
                pass &= r.est_reduction_ok && r.est_monotone_ok;
                worst = worst.max(r.est_reduction_slack);
            }
        }
        report.record(8, pass, format!("largest lhs - rhs {worst:.3e}"));
    }

    runs.push(("square-convect", convect));
    runs.push(("lshape-corner adaptive", adaptive));
    runs.push(("lshape-corner uniform", uniform));
    runs.push(("square-symmetric", sym));

    // Dörfler property at every iteration and the cardinality bound
    {
        let mut pass = true;
        let mut detail = Vec::new();
        for (name, h) in &runs {
            if name.contains("uniform") {
                continue;
            }
            let ok = h.verdicts.dorfler;
            pass &= ok;
            if !ok {
                detail.push(format!("{name} violates the bulk criterion"));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let f = random_field(&mut rng);
            let theta = rng.gen_range(0.05..1.0);
            let cfg = MarkingConfig {
                theta,
                ..MarkingConfig::default()
            };
            let m = dorfler_mark(&f, &cfg).expect("mark");
            let min = minimal_cardinality(&f, theta);
            pass &= verify_dorfler(&f, &m.elements, theta).passed;
            if min > 0 {
                worst = worst.max(m.len() as f64 / min as f64);
            }
            pass &= m.len() <= 2 * min;
        }
        detail.push(format!("worst cardinality ratio {worst:.3}"));
        report.record(2, pass, detail.join("; "));
    }

    // transpose identity
    {
        let mut worst = 0.0f64;
        for name in PROBLEM_NAMES {
            let case = manufactured(name).expect("case");
            let mut mesh = case.initial_mesh();
            for gen in 0..3 {
                if gen > 0 {
                    mesh.refine_uniform().expect("refine");
                }
                let space = FeSpace::new(Arc::new(mesh.clone()), 1).expect("space");
                let a = assemble(&space, &case.data).expect("primal");
                let b = assemble_dual(&space, &case.data).expect("dual");
                worst = worst.max(b.matrix.max_abs_diff(&a.matrix.transpose()));
            }
        }
        report.record(3, worst <= 1e-12, format!("max |A*_ij - A_ji| = {worst:.2e}"));
    }

    // oscillation dominance and quasi-error equivalence
    {
        let mut pass = true;
        let mut parts = Vec::new();
        for (name, h) in &runs {
            let band = q_over_e_band(h);
            pass &= h.verdicts.osc_dominated && band <= 10.0;
            parts.push(format!("{name} {band:.2}"));
        }
        report.record(9, pass, format!("Q/E band: {}", parts.join(", ")));
    }

    // overlay
    {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pass = true;
        for i in 0..100 {
            let base = if i % 2 == 0 { criss_cross_square(2) } else { criss_cross_lshape(1) };
            let a = random_refinement(&base, &mut rng);
            let b = random_refinement(&base, &mut rng);
            match a.overlay(&b) {
                Ok(o) => {
                    pass &= o.check_invariants().is_ok();
                    pass &= o.num_leaves() + base.num_leaves() <= a.num_leaves() + b.num_leaves();
                }
                Err(_) => pass = false,
            }
        }
        report.record(10, pass, "100 random pairs".into());
    }

    // duality study
    {
        let solver = goafem::solver::SolverConfig::default();
        let t = Instant::now();
        let sq = duality_study(&manufactured("square-smooth").unwrap(), 1, 7, &solver).expect("square");
        let ls = duality_study(&manufactured("lshape-corner").unwrap(), 1, 7, &solver).expect("lshape");
        let t = t.elapsed();
        let pass = (0.9..=1.1).contains(&sq.exponent) && (0.55..=0.8).contains(&ls.exponent) && t.as_secs_f64() < 60.0;
        report.record(
            11,
            pass,
            format!("square s = {:.4}, L-shape s = {:.4}, {t:.1?}", sq.exponent, ls.exponent),
        );
    }

    // determinism: rerun the cheaper acceptance configurations
    {
        let mut pass = true;
        let mut names = Vec::new();
        for (file, key) in [
            ("lshape-goal.toml", "lshape-goal"),
            ("square-convect.toml", "square-convect"),
            ("square-symmetric.toml", "square-symmetric"),
        ] {
            let (_, cfg) = config(file);
            let (again, _) = run_cfg(&cfg);
            let first = &runs.iter().find(|(n, _)| *n == key).unwrap().1;
            pass &= csv_string(&first.records) == csv_string(&again.history.records);
            names.push(key);
        }
        report.record(12, pass, format!("byte-identical CSV for {}", names.join(", ")));
    }

    report.0.sort_by_key(|o| o.id);
    let failed: Vec<String> = report
        .0
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("C{}: {}", o.id, o.detail))
        .collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
