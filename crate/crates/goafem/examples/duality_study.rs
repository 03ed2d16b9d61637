//! L2 error over energy error on nested uniform meshes. The fitted exponent
//! approaches 1 for smooth duals and stays below 1 near a re-entrant corner.
//!
//! cargo run --release --example duality_study -- [levels]

use goafem::cli::duality_study;
use goafem::problem::manufactured;
use goafem::solver::SolverConfig;

fn main() {
    let levels = std::env::args().nth(1).map(|l| l.parse().expect("levels")).unwrap_or(6);
    for name in ["square-smooth", "lshape-corner"] {
        let case = manufactured(name).unwrap();
        let report = duality_study(&case, 1, levels, &SolverConfig::default()).expect("study");
        print!("{}", report.table());
        println!("{name}: s = {:.4}\n", report.exponent);
    }
}
