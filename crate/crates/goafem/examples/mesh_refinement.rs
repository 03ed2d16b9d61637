//! Newest-vertex bisection on the criss-cross square: refine around a corner,
//! check the mesh invariants after every step and print shape statistics.
//!
//! cargo run --example mesh_refinement

use goafem::mesh::{criss_cross_square, nvb_min_angle_bound, ElemId};

fn main() {
    let mut mesh = criss_cross_square(2);
    let bound = nvb_min_angle_bound(&mesh.root_triangles(), 4);
    println!("min angle bound over all descendants: {:.2} deg", bound.to_degrees());

    for step in 0..12 {
        // mark every leaf touching the origin
        let marked: Vec<ElemId> = mesh
            .leaves()
            .into_iter()
            .filter(|&e| mesh.points(e).iter().any(|p| p[0] == 0.0 && p[1] == 0.0))
            .collect();
        let report = mesh.refine(&marked).expect("refine");
        mesh.check_invariants().expect("conforming mesh");
        let s = mesh.stats();
        println!(
            "step {step:>2}: marked {:>2}, refined {:>3}, leaves {:>4}, h in [{:.2e}, {:.2e}], max generation {:>2}, min angle {:.2} deg",
            marked.len(),
            report.refined_set.len(),
            s.num_leaves,
            s.h_min,
            s.h_max,
            s.generation_max,
            s.min_angle.to_degrees()
        );
        assert!(s.min_angle >= bound * (1.0 - 1e-12));
    }
}
