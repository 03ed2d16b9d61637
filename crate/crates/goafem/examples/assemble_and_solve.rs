//! Assembles the primal and adjoint systems of `square-convect` on a uniform
//! mesh, solves both and reports errors, the goal value and the transpose
//! identity between the two matrices.
//!
//! cargo run --release --example assemble_and_solve -- [sweeps] [degree]

use std::sync::Arc;

use goafem::fem::{assemble, assemble_dual, energy_norm_diff, goal_value, l2_norm_diff, FeSolution, FeSpace};
use goafem::problem::manufactured;
use goafem::solver::{solve, SolverConfig};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer")).collect();
    let sweeps = args.first().copied().unwrap_or(6);
    let degree = args.get(1).copied().unwrap_or(1);

    let case = manufactured("square-convect").unwrap();
    let mut mesh = case.initial_mesh();
    for _ in 0..sweeps {
        mesh.refine_uniform().unwrap();
    }
    let space = Arc::new(FeSpace::new(Arc::new(mesh), degree).unwrap());
    let primal = assemble(&space, &case.data).unwrap();
    let dual = assemble_dual(&space, &case.data).unwrap();
    println!(
        "N = {}, nnz = {}, max |A*_ij - A_ji| = {:.2e}",
        space.num_dofs(),
        primal.matrix.nnz(),
        dual.matrix.max_abs_diff(&primal.matrix.transpose())
    );

    let cfg = SolverConfig::default();
    let (x, rp) = solve(&primal.matrix, &primal.rhs, &cfg, None);
    let (y, rd) = solve(&dual.matrix, &dual.rhs, &cfg, None);
    println!("primal: {rp:?}");
    println!("dual:   {rd:?}");
    let u = FeSolution::new(space.clone(), x).unwrap();
    let z = FeSolution::new(space.clone(), y).unwrap();

    let eu = case.exact_u.as_ref().unwrap();
    let ez = case.exact_z.as_ref().unwrap();
    let err_u = energy_norm_diff(&space, &case.data, &u, eu);
    let err_z = energy_norm_diff(&space, &case.data, &z, ez);
    println!("energy errors: u {err_u:.4e}, z {err_z:.4e}; L2 error of u {:.4e}", l2_norm_diff(&u, eu));
    let g = goal_value(&space, &case.data.goal, &u);
    let exact = case.exact_goal.unwrap();
    println!(
        "goal {g:.12e}, exact {exact:.12e}, error {:.3e} <= 2 |e_u| |e_z| = {:.3e}",
        (g - exact).abs(),
        2.0 * err_u * err_z
    );
}
