use goafem::driver::{fit_rate, run, run_with_state, DriverConfig, DriverError, Refinement};
use goafem::fem::quasi_orthogonality_defect;
use goafem::problem::{manufactured, manufactured_with, ProblemParams};
use goafem::solver::{SolverConfig, SolverMethod};

fn cfg(max_iterations: usize, dof_budget: usize) -> DriverConfig {
    DriverConfig {
        max_iterations,
        dof_budget,
        ..DriverConfig::default()
    }
}

#[test]
fn smooth_problem_reaches_the_optimal_rate() {
    let case = manufactured("square-smooth").unwrap();
    let h = run(&case, &cfg(100, 50_000)).unwrap();
    assert!(h.records.len() >= 10);
    let first = &h.records[0];
    assert_eq!(first.k, 0);
    assert!(first.eta > 0.0 && first.zeta > 0.0);
    let theta2 = h.theta * h.theta;
    for pair in h.records.windows(2) {
        assert!(pair[1].n_dofs > pair[0].n_dofs);
        assert!(pair[0].dorfler_p >= theta2 * (1.0 - 1e-14));
        assert!(pair[0].dorfler_d >= theta2 * (1.0 - 1e-14));
        assert!(pair[0].est_reduction_ok && pair[0].est_monotone_ok);
    }
    for r in &h.records {
        assert!(r.goal_err <= r.goal_bound + 1e-10, "k = {}", r.k);
        // total error is controlled by the quasi-error when osc ≤ η
        assert!(r.e_p <= r.q_p / h.gamma_p.min(1.0).sqrt() * (1.0 + 1e-12));
        assert!(r.e_d <= r.q_d / h.gamma_d.min(1.0).sqrt() * (1.0 + 1e-12));
    }
    let rate = h.rates.err_p.unwrap();
    assert!((-0.6..=-0.4).contains(&rate), "{rate}");
    assert!(h.verdicts.all(), "{:?}", h.verdicts);

    let eff: Vec<f64> = h.records.iter().skip(3).map(|r| r.eta / r.err_p).collect();
    let hi = eff.iter().cloned().fold(0.0, f64::max);
    let lo = eff.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(hi / lo <= 3.0, "{lo} .. {hi}");
}

#[test]
fn uniform_baseline_on_the_corner() {
    let case = manufactured("lshape-goal").unwrap();
    let mut c = cfg(100, 40_000);
    c.refinement = Refinement::Uniform;
    let h = run(&case, &c).unwrap();
    let rate = h.rates.err_p.unwrap();
    assert!((-0.42..=-0.27).contains(&rate), "{rate}");
    assert!(h.records[..h.records.len() - 1].iter().all(|r| r.est_reduction_ok));
}

#[test]
fn symmetric_problem_is_orthogonal() {
    let params = ProblemParams {
        bx: Some(0.0),
        by: Some(0.0),
        ..ProblemParams::default()
    };
    let case = manufactured_with("square-smooth", &params).unwrap();
    let h = run(&case, &cfg(8, 100_000)).unwrap();
    for r in &h.records[..h.records.len() - 1] {
        assert!(r.qo_defect <= 1e-8 && r.qo_defect_d <= 1e-8, "{} {}", r.qo_defect, r.qo_defect_d);
    }
}

#[test]
fn convective_defect_decreases() {
    let case = manufactured("square-convect").unwrap();
    let out = run_with_state(&case, &cfg(16, 100_000)).unwrap();
    let h = out.history;
    let steps = &h.records[..h.records.len() - 1];
    let tail = &steps[steps.len() - 10..];
    let k: Vec<f64> = (1..=tail.len()).map(|i| i as f64).collect();
    let d: Vec<f64> = tail.iter().map(|r| r.qo_defect).collect();
    // slope against the iteration index on a log scale
    let trend = fit_rate(&k.iter().map(|v| v.exp()).collect::<Vec<_>>(), &d).unwrap();
    assert!(trend < 0.0, "{d:?}");

    let u = case.exact_u.clone().unwrap();
    let same = quasi_orthogonality_defect(&case.data, &u, &out.state.u, &out.state.u).unwrap();
    assert_eq!(same.defect, 0.0);
}

#[test]
fn solver_failure_keeps_the_partial_history() {
    let case = manufactured("square-convect").unwrap();
    let mut c = cfg(10, 100_000);
    c.solver = SolverConfig {
        tol: 1e-300,
        max_iter: 1,
        method: SolverMethod::Bicgstab,
    };
    match run(&case, &c) {
        Err(DriverError::Solver { partial, .. }) => assert!(partial.len() < 10),
        other => panic!("expected a solver failure, got {:?}", other.map(|h| h.records.len())),
    }
}

#[test]
fn bad_configuration_is_rejected() {
    let case = manufactured("square-smooth").unwrap();
    let mut c = cfg(5, 1000);
    c.marking.theta = 0.0;
    assert!(run(&case, &c).is_err());
    let mut c = cfg(5, 1000);
    c.p = 3;
    assert!(matches!(run(&case, &c), Err(DriverError::Config(_))));
}
