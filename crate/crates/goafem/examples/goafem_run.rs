//! Runs the adaptive loop on a built-in problem and prints the history.
//!
//! cargo run --release --example goafem_run -- [problem] [max_iterations] [dof_budget] [uniform]

use std::time::Instant;

use goafem::driver::{run, DriverConfig, Refinement};
use goafem::problem::manufactured;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map(String::as_str).unwrap_or("square-convect");
    let mut cfg = DriverConfig::default();
    if let Some(k) = args.get(1) {
        cfg.max_iterations = k.parse().expect("max_iterations");
    }
    if let Some(n) = args.get(2) {
        cfg.dof_budget = n.parse().expect("dof_budget");
    }
    if args.get(3).map(String::as_str) == Some("uniform") {
        cfg.refinement = Refinement::Uniform;
    }
    let case = manufactured(name).expect("known problem");

    let t = Instant::now();
    let h = run(&case, &cfg).expect("run");
    println!(
        "{:>3} {:>7} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>7} {:>7} {:>9}",
        "k", "N", "eta", "zeta", "err_u", "err_z", "goal_err", "bound", "ratio", "ratio_d", "qo"
    );
    for r in &h.records {
        println!(
            "{:>3} {:>7} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>7.4} {:>7.4} {:>9.2e}",
            r.k,
            r.n_dofs,
            r.eta,
            r.zeta,
            r.err_p,
            r.err_d,
            r.goal_err,
            r.goal_bound,
            r.contraction_ratio,
            r.contraction_ratio_d,
            r.qo_defect
        );
    }
    println!("rates (final decade): {:?}", h.rates);
    println!("verdicts: {:?}", h.verdicts);
    println!("gamma_p = {:.4e}, gamma_d = {:.4e}", h.gamma_p, h.gamma_d);
    println!("elapsed {:.2?}", t.elapsed());
}
