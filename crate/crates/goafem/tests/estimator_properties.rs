use std::sync::Arc;

use goafem::estimator::{data_estimates, indicators, Side};
use goafem::fem::{assemble, prolongate, FeSolution, FeSpace};
use goafem::mesh::{criss_cross_square, ElemId, Mesh};
use goafem::problem::{manufactured, PROBLEM_NAMES};
use goafem::solver::{solve, SolverConfig};
use proptest::prelude::*;

fn space(m: Mesh, degree: usize) -> Arc<FeSpace> {
    Arc::new(FeSpace::new(Arc::new(m), degree).unwrap())
}

fn random_function(s: &Arc<FeSpace>, coeffs: &[f64]) -> FeSolution {
    let x = (0..s.num_dofs()).map(|i| coeffs[i % coeffs.len()]).collect();
    FeSolution::new(s.clone(), x).unwrap()
}

fn partial_refinement(m: &Mesh, picks: &[usize]) -> Mesh {
    let mut r = m.clone();
    let leaves = r.leaves();
    let marked: Vec<ElemId> = picks.iter().map(|i| leaves[i % leaves.len()]).collect();
    r.refine(&marked).unwrap();
    r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn oscillation_is_dominated(
        problem in 0usize..4,
        degree in 1usize..=2,
        coeffs in prop::collection::vec(-1.0f64..1.0, 1..40),
    ) {
        let case = manufactured(PROBLEM_NAMES[problem]).unwrap();
        let mut m = case.initial_mesh();
        m.refine_uniform().unwrap();
        let s = space(m, degree);
        let v = random_function(&s, &coeffs);
        for side in [Side::Primal, Side::Dual] {
            for p in [1, 2] {
                let f = indicators(&s, &case.data, &v, p, side);
                for (o, e) in f.osc.iter().zip(&f.values) {
                    prop_assert!(o.is_finite() && e.is_finite() && *o >= 0.0);
                    prop_assert!(o <= e);
                }
            }
        }
    }

    #[test]
    fn carried_function_estimator_is_monotone(
        degree in 1usize..=2,
        coeffs in prop::collection::vec(-1.0f64..1.0, 1..40),
        picks in prop::collection::vec(0usize..1000, 1..8),
    ) {
        let case = manufactured("square-convect").unwrap();
        let mut coarse_mesh = case.initial_mesh();
        coarse_mesh.refine_uniform().unwrap();
        let coarse = space(coarse_mesh.clone(), degree);
        let fine = space(partial_refinement(&coarse_mesh, &picks), degree);
        let v = random_function(&coarse, &coeffs);
        let carried = prolongate(&v, &fine).unwrap();
        for side in [Side::Primal, Side::Dual] {
            let before = indicators(&coarse, &case.data, &v, 2, side).total();
            let after = indicators(&fine, &case.data, &carried, 2, side).total();
            prop_assert!(after <= before * (1.0 + 1e-12), "{after} > {before}");
        }
    }
}

#[test]
fn l2_and_l1_combinations_are_ordered() {
    let case = manufactured("square-convect").unwrap();
    let mut m = criss_cross_square(2);
    m.refine_uniform().unwrap();
    assert_eq!(m.num_leaves(), 32);
    let s = space(m, 1);
    let sys = assemble(&s, &case.data).unwrap();
    let (x, _) = solve(&sys.matrix, &sys.rhs, &SolverConfig::default(), None);
    let u = FeSolution::new(s.clone(), x).unwrap();
    let two = indicators(&s, &case.data, &u, 2, Side::Primal);
    let one = indicators(&s, &case.data, &u, 1, Side::Primal);
    assert!(two.total().powi(2) <= one.total().powi(2));
    for i in 0..two.len() {
        assert!((one.values[i] - (one.interior[i] + one.jump[i])).abs() <= 1e-14 * one.values[i].max(1.0));
        assert!((two.values[i] - two.interior[i].hypot(two.jump[i])).abs() <= 1e-14 * two.values[i].max(1.0));
    }
}

#[test]
fn data_estimator_does_not_grow() {
    for name in PROBLEM_NAMES {
        let case = manufactured(name).unwrap();
        let mut m = case.initial_mesh();
        let mut prev = data_estimates(&case.data, &space(m.clone(), 1), 2);
        for _ in 0..3 {
            m.refine_uniform().unwrap();
            let next = data_estimates(&case.data, &space(m.clone(), 1), 2);
            assert!(next.eta_max <= prev.eta_max * (1.0 + 1e-12), "{name}");
            assert!(next.osc_max <= prev.osc_max * (1.0 + 1e-12) + 1e-14, "{name}");
            prev = next;
        }
    }
}
