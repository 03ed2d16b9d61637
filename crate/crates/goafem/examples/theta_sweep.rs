//! Goal-error rates of the L-shape goal problem for several bulk parameters,
//! run concurrently.
//!
//! cargo run --release --example theta_sweep -- [dof_budget]

use goafem::cli::{compare_runs, compare_table, RunConfig};

fn main() {
    let budget = std::env::args().nth(1).map(|b| b.parse().expect("budget")).unwrap_or(20_000);
    let configs: Vec<(String, RunConfig)> = [0.3, 0.5, 0.7]
        .into_iter()
        .map(|theta| {
            let mut c = RunConfig::for_problem("lshape-goal");
            c.mark.theta = theta;
            c.driver.dof_budget = budget;
            c.driver.max_iterations = 200;
            (format!("theta = {theta}"), c)
        })
        .collect();
    let rows = compare_runs(&configs).expect("runs");
    print!("{}", compare_table(&rows));
}
