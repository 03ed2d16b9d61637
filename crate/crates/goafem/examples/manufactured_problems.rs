//! The built-in test problems: domains, data checks and exact goal values.
//!
//! cargo run --example manufactured_problems

use goafem::problem::{manufactured, validate, PROBLEM_NAMES};

fn main() {
    for name in PROBLEM_NAMES {
        let case = manufactured(name).expect("registered");
        let report = validate(&case.data, case.domain, 256).expect("valid data");
        let mesh = case.initial_mesh();
        println!("{name}");
        println!("  domain {:?}, area {}, initial leaves {}", case.domain, case.domain.area(), mesh.num_leaves());
        println!("  {report:?}");
        println!(
            "  exact u: {}, exact z: {}, exact goal: {}",
            case.exact_u.is_some(),
            case.exact_z.is_some(),
            case.exact_goal.map(|g| format!("{g:.12e}")).unwrap_or_else(|| "-".into())
        );
        if let Some(u) = &case.exact_u {
            let [x, y] = [0.3, 0.4];
            let (jx, jy) = goafem::jet::Jet::coords(x, y);
            let v = u(jx, jy);
            println!("  u(0.3, 0.4) = {:.6}, f(0.3, 0.4) = {:.6}", v.v, case.data.f.value(x, y));
        }
    }
}
