//! One SOLVE, ESTIMATE, MARK, REFINE pass by hand on the L-shape goal problem,
//! comparing the two rules that combine primal and dual marks.
//!
//! cargo run --release --example estimate_and_mark -- [theta]

use std::sync::Arc;

use goafem::estimator::{indicators, Side};
use goafem::fem::{assemble, assemble_dual, FeSolution, FeSpace};
use goafem::marking::{combine, dorfler_mark, minimal_cardinality, verify_dorfler, MarkingConfig, Strategy};
use goafem::problem::manufactured;
use goafem::solver::{solve, SolverConfig};

fn main() {
    let theta: f64 = std::env::args().nth(1).map(|t| t.parse().expect("theta")).unwrap_or(0.5);
    let case = manufactured("lshape-goal").unwrap();
    let mut mesh = case.initial_mesh();
    for _ in 0..4 {
        mesh.refine_uniform().unwrap();
    }
    let space = Arc::new(FeSpace::new(Arc::new(mesh.clone()), 1).unwrap());
    let cfg = SolverConfig::default();
    let sp = assemble(&space, &case.data).unwrap();
    let sd = assemble_dual(&space, &case.data).unwrap();
    let u = FeSolution::new(space.clone(), solve(&sp.matrix, &sp.rhs, &cfg, None).0).unwrap();
    let z = FeSolution::new(space.clone(), solve(&sd.matrix, &sd.rhs, &cfg, None).0).unwrap();

    let eta = indicators(&space, &case.data, &u, 2, Side::Primal);
    let zeta = indicators(&space, &case.data, &z, 2, Side::Dual);
    println!("{} elements, eta = {:.4e}, zeta = {:.4e}", eta.len(), eta.total(), zeta.total());
    println!("oscillation: primal {:.3e}, dual {:.3e}", eta.osc_total(), zeta.osc_total());

    let mc = MarkingConfig { theta, ..MarkingConfig::default() };
    let mp = dorfler_mark(&eta, &mc).unwrap();
    let md = dorfler_mark(&zeta, &mc).unwrap();
    println!(
        "primal marks {} (minimum {}), dual marks {} (minimum {})",
        mp.len(),
        minimal_cardinality(&eta, theta),
        md.len(),
        minimal_cardinality(&zeta, theta)
    );
    for strategy in [Strategy::Union, Strategy::MinCardinality] {
        let m = combine(&mp, &md, strategy).unwrap();
        let cp = verify_dorfler(&eta, &m.elements, theta);
        let cd = verify_dorfler(&zeta, &m.elements, theta);
        let mut refined = mesh.clone();
        refined.refine(&m.elements).unwrap();
        println!(
            "{strategy:>16}: {:>4} marked, bulk ratios {:.3} / {:.3} (need {:.3}), leaves {} -> {}",
            m.len(),
            cp.ratio,
            cd.ratio,
            theta * theta,
            mesh.num_leaves(),
            refined.num_leaves()
        );
    }
}
