//! Two independent refinements of one initial mesh and their overlay.
//!
//! cargo run --example overlay

use goafem::mesh::{criss_cross_lshape, ElemId, Mesh};

fn refine_towards(mut m: Mesh, target: [f64; 2], steps: usize) -> Mesh {
    for _ in 0..steps {
        let hit: Vec<ElemId> = m
            .leaves()
            .into_iter()
            .filter(|&e| {
                let p = m.points(e);
                let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
                (c[0] - target[0]).hypot(c[1] - target[1]) < 1.5 * m.h(e)
            })
            .collect();
        m.refine(&hit).expect("refine");
    }
    m
}

fn main() {
    let t0 = criss_cross_lshape(1);
    let a = refine_towards(t0.clone(), [0.0, 0.0], 6);
    let b = refine_towards(t0.clone(), [-0.8, 0.8], 6);
    let o = a.overlay(&b).expect("same initial mesh");
    o.check_invariants().expect("conforming overlay");
    println!("#T0 = {}, #T1 = {}, #T2 = {}, #overlay = {}", t0.num_leaves(), a.num_leaves(), b.num_leaves(), o.num_leaves());
    println!(
        "bound #T1 + #T2 - #T0 = {} holds: {}",
        a.num_leaves() + b.num_leaves() - t0.num_leaves(),
        o.num_leaves() + t0.num_leaves() <= a.num_leaves() + b.num_leaves()
    );
}
