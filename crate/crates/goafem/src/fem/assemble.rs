use std::sync::Arc;

use rayon::prelude::*;

use super::{basis_gradients, basis_values, ElemGeom, FeSolution, FeSpace, FemError, NO_DOF};
use crate::mesh::Point;
use crate::problem::{ProblemData, Rect, ScalarField};
use crate::quadrature::TriangleRule;
use crate::solver::CsrMatrix;

/// Matrix and load vector over the interior dofs.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

/// Which parts of the bilinear form to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    pub diffusion: bool,
    pub convection: bool,
    pub reaction: bool,
}

impl Terms {
    pub const ALL: Terms = Terms {
        diffusion: true,
        convection: true,
        reaction: true,
    };
    pub const CONVECTION: Terms = Terms {
        diffusion: false,
        convection: true,
        reaction: false,
    };
}

/// Rule degree for bilinear forms: exact for constant coefficients.
pub(crate) fn matrix_degree(n: usize) -> usize {
    2 * n + 2
}

/// Rule degree for loads, goals and norms with non-polynomial data.
pub(crate) fn integrand_degree(n: usize) -> usize {
    2 * n + 8
}

fn element_matrix(
    space: &FeSpace,
    leaf: usize,
    d: &ProblemData,
    terms: Terms,
) -> Result<[[f64; 6]; 6], FemError> {
    let n = space.degree();
    let nl = space.local_dofs();
    let geom = space.geom(leaf);
    let rule = TriangleRule::cached(matrix_degree(n));
    let mut m = [[0.0; 6]; 6];
    for (l, w) in rule.points.iter().zip(&rule.weights) {
        let [x, y] = geom.point(l);
        let a = d.a.value(x, y);
        let b = d.b.value(x, y);
        let c = d.c.value(x, y);
        if ![a[0][0], a[0][1], a[1][1], b[0], b[1], c].iter().all(|v| v.is_finite()) {
            return Err(FemError::NonFinite(space.leaves()[leaf]));
        }
        let wa = w * geom.area;
        let phi = basis_values(n, l);
        let dphi = basis_gradients(n, l, &geom.grad);
        for j in 0..nl {
            let adj = [
                a[0][0] * dphi[j][0] + a[0][1] * dphi[j][1],
                a[1][0] * dphi[j][0] + a[1][1] * dphi[j][1],
            ];
            let bdj = b[0] * dphi[j][0] + b[1] * dphi[j][1];
            for i in 0..nl {
                let mut v = 0.0;
                if terms.diffusion {
                    v += adj[0] * dphi[i][0] + adj[1] * dphi[i][1];
                }
                if terms.convection {
                    v += bdj * phi[i];
                }
                if terms.reaction {
                    v += c * phi[j] * phi[i];
                }
                m[i][j] += wa * v;
            }
        }
    }
    Ok(m)
}

/// Clips a triangle to a rectangle; returns the convex polygon (possibly empty).
pub fn clip_to_rect(tri: &[Point; 3], r: &Rect) -> Vec<Point> {
    let mut poly: Vec<Point> = tri.to_vec();
    // each half-plane as (axis, bound, keep_greater)
    let planes = [(0, r.x0, true), (0, r.x1, false), (1, r.y0, true), (1, r.y1, false)];
    for (axis, bound, greater) in planes {
        if poly.is_empty() {
            break;
        }
        let inside = |p: &Point| if greater { p[axis] >= bound } else { p[axis] <= bound };
        let mut out = Vec::with_capacity(poly.len() + 2);
        for k in 0..poly.len() {
            let cur = poly[k];
            let prev = poly[(k + poly.len() - 1) % poly.len()];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
                let mut q = [prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])];
                q[axis] = bound;
                out.push(q);
            }
            if ci {
                out.push(cur);
            }
        }
        poly = out;
    }
    poly
}

/// `∫_T field φ_k` for every local basis function.
pub fn integrate_against_basis(geom: &ElemGeom, degree: usize, field: &ScalarField) -> [f64; 6] {
    let mut out = [0.0; 6];
    match field {
        ScalarField::Indicator { rect, value } => {
            let poly = clip_to_rect(&geom.p, rect);
            if poly.len() < 3 {
                return out;
            }
            let rule = TriangleRule::cached(degree + 1);
            for k in 1..poly.len() - 1 {
                let sub = ElemGeom::new([poly[0], poly[k], poly[k + 1]]);
                if sub.area <= 0.0 {
                    continue;
                }
                for (l, w) in rule.points.iter().zip(&rule.weights) {
                    let lp = geom.barycentric(sub.point(l));
                    let phi = basis_values(degree, &lp);
                    for (o, p) in out.iter_mut().zip(phi) {
                        *o += w * sub.area * value * p;
                    }
                }
            }
        }
        ScalarField::Constant(c) if *c == 0.0 => {}
        _ => {
            let rule = TriangleRule::cached(integrand_degree(degree));
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let [x, y] = geom.point(l);
                let f = field.value(x, y);
                let phi = basis_values(degree, l);
                for (o, p) in out.iter_mut().zip(phi) {
                    *o += w * geom.area * f * p;
                }
            }
        }
    }
    out
}

/// Assembles the selected terms of `a(φ_j, φ_i)` and `∫ f φ_i`.
pub fn assemble_terms(space: &FeSpace, d: &ProblemData, terms: Terms) -> Result<SparseSystem, FemError> {
    let n = space.degree();
    let nl = space.local_dofs();
    let locals: Vec<([[f64; 6]; 6], [f64; 6])> = (0..space.num_elements())
        .into_par_iter()
        .map(|leaf| {
            let m = element_matrix(space, leaf, d, terms)?;
            let f = integrate_against_basis(space.geom(leaf), n, &d.f);
            if f.iter().any(|v| !v.is_finite()) {
                return Err(FemError::NonFinite(space.leaves()[leaf]));
            }
            Ok((m, f))
        })
        .collect::<Result<_, _>>()?;
    let nd = space.num_dofs();
    let mut triplets = Vec::with_capacity(space.num_elements() * nl * nl);
    let mut rhs = vec![0.0; nd];
    for (leaf, (m, f)) in locals.iter().enumerate() {
        let dofs = space.dofs(leaf);
        for i in 0..nl {
            let gi = dofs[i];
            if gi == NO_DOF {
                continue;
            }
            rhs[gi as usize] += f[i];
            for j in 0..nl {
                let gj = dofs[j];
                if gj != NO_DOF {
                    triplets.push((gi as usize, gj as usize, m[i][j]));
                }
            }
        }
    }
    Ok(SparseSystem {
        matrix: CsrMatrix::from_triplets(nd, triplets),
        rhs,
    })
}

/// Primal system `a(φ_j, φ_i) = f(φ_i)`.
pub fn assemble(space: &FeSpace, d: &ProblemData) -> Result<SparseSystem, FemError> {
    assemble_terms(space, d, Terms::ALL)
}

/// Adjoint system: the primal assembly applied to the dual data.
pub fn assemble_dual(space: &FeSpace, d: &ProblemData) -> Result<SparseSystem, FemError> {
    assemble_terms(space, &d.dual(), Terms::ALL)
}

/// `∫ g fh`.
pub fn goal_value(space: &Arc<FeSpace>, g: &ScalarField, fh: &FeSolution) -> f64 {
    let n = space.degree();
    let parts: Vec<f64> = (0..space.num_elements())
        .into_par_iter()
        .map(|leaf| {
            let mom = integrate_against_basis(space.geom(leaf), n, g);
            let c = fh.local_coeffs(leaf);
            (0..space.local_dofs()).map(|k| c[k] * mom[k]).sum()
        })
        .collect();
    parts.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::interpolate;
    use crate::mesh::{criss_cross_square, Mesh};
    use crate::problem::{MatrixField, VectorField};

    fn data(b: [f64; 2], c: f64, f: f64) -> ProblemData {
        ProblemData {
            a: MatrixField::identity(),
            b: VectorField::Constant(b),
            c: ScalarField::Constant(c),
            f: ScalarField::Constant(f),
            goal: ScalarField::Constant(1.0),
        }
    }

    fn reference_element() -> (ElemGeom, FeSpace) {
        let m = Mesh::from_labeled(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &[[1, 2, 0]]).unwrap();
        let s = FeSpace::new(Arc::new(m), 1).unwrap();
        (*s.geom(0), s)
    }

    #[test]
    fn reference_local_matrices() {
        let (_, s) = reference_element();
        // local order is (1,0), (0,1), (0,0); permute to (0,0), (1,0), (0,1)
        let perm = [2, 0, 1];
        let k = element_matrix(&s, 0, &data([0.0, 0.0], 0.0, 0.0), Terms::ALL).unwrap();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[perm[i]][perm[j]] - expect[i][j]).abs() < 1e-14);
            }
        }
        let c = element_matrix(&s, 0, &data([1.0, 0.0], 0.0, 0.0), Terms::CONVECTION).unwrap();
        for i in 0..3 {
            assert!((c[perm[i]][perm[1]] - 1.0 / 6.0).abs() < 1e-14);
        }
        let mass = element_matrix(
            &s,
            0,
            &data([0.0, 0.0], 1.0, 0.0),
            Terms {
                diffusion: false,
                convection: false,
                reaction: true,
            },
        )
        .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.0 } else { 1.0 } / 24.0;
                assert!((mass[i][j] - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_goal_moments() {
        let m = Arc::new(criss_cross_square(2));
        let s = Arc::new(FeSpace::new(m, 1).unwrap());
        let sys = assemble_dual(&s, &data([1.0, 1.0], 1.0, 0.0)).unwrap();
        // rhs_k = sum of |T|/3 over the support of the hat function
        for (k, p) in s.dof_points().iter().enumerate() {
            let mut expect = 0.0;
            for leaf in 0..s.num_elements() {
                let g = s.geom(leaf);
                if g.p.iter().any(|q| q == p) {
                    expect += g.area / 3.0;
                }
            }
            assert!((sys.rhs[k] - expect).abs() < 1e-15);
        }
        let hat_sum = interpolate(&s, |_, _| 1.0);
        let v = goal_value(&s, &ScalarField::Constant(1.0), &hat_sum);
        assert!((v - sys.rhs.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn indicator_goal_is_exact_for_constants() {
        let m = Arc::new(criss_cross_square(3));
        let s = FeSpace::new(m, 2).unwrap();
        let rect = Rect {
            x0: 0.21,
            x1: 0.67,
            y0: 0.13,
            y1: 0.58,
        };
        let g = ScalarField::Indicator {
            rect,
            value: 1.0 / rect.area(),
        };
        // sum of all basis moments = ∫ g = 1
        let mut total = 0.0;
        for leaf in 0..s.num_elements() {
            let mom = integrate_against_basis(s.geom(leaf), 2, &g);
            total += mom.iter().sum::<f64>();
        }
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn clip_keeps_inner_triangle() {
        let t = [[0.1, 0.1], [0.2, 0.1], [0.1, 0.2]];
        let r = Rect {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        };
        assert_eq!(clip_to_rect(&t, &r), t.to_vec());
        let far = Rect {
            x0: 2.0,
            x1: 3.0,
            y0: 0.0,
            y1: 1.0,
        };
        assert!(clip_to_rect(&t, &far).is_empty());
    }
}
