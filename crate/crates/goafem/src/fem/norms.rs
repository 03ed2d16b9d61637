use std::sync::Arc;

use rayon::prelude::*;

use super::assemble::integrand_degree;
use super::{prolongate, ElemGeom, FeSolution, FeSpace, FemError};
use crate::jet::Jet;
use crate::problem::{JetFn, ProblemData};
use crate::quadrature::TriangleRule;

/// `∫ A∇e·∇e + c e²` per element for `e = exact - fh` (or `e = fh` without exact).
fn energy_sq_per_element(space: &FeSpace, d: &ProblemData, fh: &FeSolution, exact: Option<&JetFn>) -> Vec<f64> {
    let rule = TriangleRule::cached(integrand_degree(space.degree()));
    (0..space.num_elements())
        .into_par_iter()
        .map(|leaf| {
            let geom = space.geom(leaf);
            let mut s = 0.0;
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let [x, y] = geom.point(l);
                let (v, g) = fh.value_grad(leaf, l);
                let (ev, eg) = match exact {
                    Some(u) => {
                        let (jx, jy) = Jet::coords(x, y);
                        let j = u(jx, jy);
                        (j.v - v, [j.g[0] - g[0], j.g[1] - g[1]])
                    }
                    None => (v, g),
                };
                let a = d.a.value(x, y);
                let c = d.c.value(x, y);
                let aeg = [a[0][0] * eg[0] + a[0][1] * eg[1], a[1][0] * eg[0] + a[1][1] * eg[1]];
                s += w * (aeg[0] * eg[0] + aeg[1] * eg[1] + c * ev * ev);
            }
            s * geom.area
        })
        .collect()
}

/// `⫴exact - fh⫴`; the convection term drops out for divergence-free `b`.
pub fn energy_norm_diff(space: &FeSpace, d: &ProblemData, fh: &FeSolution, exact: &JetFn) -> f64 {
    energy_sq_per_element(space, d, fh, Some(exact)).iter().sum::<f64>().sqrt()
}

/// `⫴fh⫴`
pub fn energy_norm(space: &FeSpace, d: &ProblemData, fh: &FeSolution) -> f64 {
    energy_sq_per_element(space, d, fh, None).iter().sum::<f64>().sqrt()
}

/// `⫴a - b⫴` for two functions on the same space.
pub fn energy_norm_diff_fe(d: &ProblemData, a: &FeSolution, b: &FeSolution) -> Result<f64, FemError> {
    let diff = a.difference(b)?;
    Ok(energy_norm(&diff.space, d, &diff))
}

/// `‖exact - fh‖_{L2}`
pub fn l2_norm_diff(fh: &FeSolution, exact: &JetFn) -> f64 {
    let space = &fh.space;
    let rule = TriangleRule::cached(integrand_degree(space.degree()));
    let parts: Vec<f64> = (0..space.num_elements())
        .into_par_iter()
        .map(|leaf| {
            let geom = space.geom(leaf);
            let mut s = 0.0;
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let [x, y] = geom.point(l);
                let (jx, jy) = Jet::coords(x, y);
                let e = exact(jx, jy).v - fh.value_grad(leaf, l).0;
                s += w * e * e;
            }
            s * geom.area
        })
        .collect();
    parts.iter().sum::<f64>().sqrt()
}

/// Monomials `λ1^a λ2^b`, `a + b <= m`.
fn monomials(m: usize, l: &[f64; 3]) -> Vec<f64> {
    let mut out = Vec::with_capacity((m + 1) * (m + 2) / 2);
    for total in 0..=m {
        for a in 0..=total {
            out.push(l[1].powi(a as i32) * l[2].powi((total - a) as i32));
        }
    }
    out
}

fn cholesky_solve(mut g: Vec<Vec<f64>>, mut r: Vec<f64>) -> Vec<f64> {
    let n = r.len();
    for k in 0..n {
        let d = g[k][k].sqrt();
        for i in k..n {
            g[i][k] /= d;
        }
        for j in (k + 1)..n {
            for i in j..n {
                g[i][j] -= g[i][k] * g[j][k];
            }
        }
    }
    for i in 0..n {
        for k in 0..i {
            r[i] -= g[i][k] * r[k];
        }
        r[i] /= g[i][i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            r[i] -= g[k][i] * r[k];
        }
        r[i] /= g[i][i];
    }
    r
}

/// Best approximation in `P_m` of values sampled at the rule's points, in
/// the rule's discrete inner product; returns the projection at the same
/// points. Negative `m` projects onto `{0}`.
pub fn l2_project_values(rule: &TriangleRule, values: &[f64], m: i32) -> Vec<f64> {
    assert_eq!(values.len(), rule.len());
    if m < 0 {
        return vec![0.0; values.len()];
    }
    let m = m as usize;
    let basis: Vec<Vec<f64>> = rule.points.iter().map(|l| monomials(m, l)).collect();
    let nb = basis[0].len();
    let mut gram = vec![vec![0.0; nb]; nb];
    let mut rhs = vec![0.0; nb];
    for ((phi, w), v) in basis.iter().zip(&rule.weights).zip(values) {
        for i in 0..nb {
            rhs[i] += w * phi[i] * v;
            for j in 0..=i {
                gram[i][j] += w * phi[i] * phi[j];
            }
        }
    }
    let coef = cholesky_solve(gram, rhs);
    basis
        .iter()
        .map(|phi| phi.iter().zip(&coef).map(|(p, c)| p * c).sum())
        .collect()
}

/// Coefficients of the `L2(T)` projection of `f` onto `P_m` in the basis
/// `λ1^a λ2^b` ordered by total degree, then by `a`.
pub fn l2_project(geom: &ElemGeom, m: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let rule = TriangleRule::cached(2 * m + 12);
    let basis: Vec<Vec<f64>> = rule.points.iter().map(|l| monomials(m, l)).collect();
    let nb = basis[0].len();
    let mut gram = vec![vec![0.0; nb]; nb];
    let mut rhs = vec![0.0; nb];
    for ((phi, w), l) in basis.iter().zip(&rule.weights).zip(&rule.points) {
        let [x, y] = geom.point(l);
        let v = f(x, y);
        for i in 0..nb {
            rhs[i] += w * phi[i] * v;
            for j in 0..=i {
                gram[i][j] += w * phi[i] * phi[j];
            }
        }
    }
    cholesky_solve(gram, rhs)
}

/// Measured quasi-orthogonality on nested spaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QoDefect {
    /// `⫴u - u₂⫴² + ⫴u₂ - u₁⫴² - ⫴u - u₁⫴²`
    pub defect: f64,
    /// `|defect| / ⫴u - u₁⫴²`
    pub relative: f64,
    pub err_prev: f64,
    pub err_next: f64,
    pub increment: f64,
}

/// All three norms are evaluated on the finer space.
pub fn quasi_orthogonality_defect(
    d: &ProblemData,
    exact: &JetFn,
    u_prev: &FeSolution,
    u_next: &FeSolution,
) -> Result<QoDefect, FemError> {
    let fine: &Arc<FeSpace> = &u_next.space;
    let carried = prolongate(u_prev, fine)?;
    let e1 = energy_norm_diff(fine, d, &carried, exact);
    let e2 = energy_norm_diff(fine, d, u_next, exact);
    let inc = energy_norm_diff_fe(d, u_next, &carried)?;
    let defect = e2 * e2 + inc * inc - e1 * e1;
    let relative = if e1 > 0.0 { defect.abs() / (e1 * e1) } else { defect.abs() };
    Ok(QoDefect {
        defect,
        relative,
        err_prev: e1,
        err_next: e2,
        increment: inc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::interpolate;
    use crate::mesh::single_triangle;
    use crate::problem::{MatrixField, ScalarField, VectorField};

    fn laplace() -> ProblemData {
        ProblemData {
            a: MatrixField::identity(),
            b: VectorField::Constant([0.0, 0.0]),
            c: ScalarField::Constant(0.0),
            f: ScalarField::Constant(0.0),
            goal: ScalarField::Constant(0.0),
        }
    }

    #[test]
    fn projection_fixes_its_range() {
        let g = ElemGeom::new([[0.2, 0.1], [1.3, 0.4], [0.5, 1.1]]);
        let rule = TriangleRule::cached(10);
        for m in 0..=2 {
            let vals: Vec<f64> = rule
                .points
                .iter()
                .map(|l| {
                    let [x, y] = g.point(l);
                    match m {
                        0 => 3.0,
                        1 => 2.0 * x - y + 0.5,
                        _ => x * x + 2.0 * x * y - y,
                    }
                })
                .collect();
            let p = l2_project_values(rule, &vals, m);
            for (a, b) in p.iter().zip(&vals) {
                assert!((a - b).abs() < 1e-13);
            }
        }
        assert!(l2_project_values(rule, &vec![1.0; rule.len()], -1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_projection_is_the_mean() {
        let g = ElemGeom::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let c = l2_project(&g, 0, |x, _| x);
        assert!((c[0] - 1.0 / 3.0).abs() < 1e-15);
        let rule = TriangleRule::cached(8);
        let vals: Vec<f64> = rule.points.iter().map(|l| g.point(l)[0]).collect();
        let p = l2_project_values(rule, &vals, 0);
        let r2: f64 = rule
            .weights
            .iter()
            .zip(vals.iter().zip(&p))
            .map(|(w, (v, q))| w * (v - q).powi(2))
            .sum::<f64>()
            * g.area;
        assert!((r2.sqrt() - (1.0f64 / 36.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn energy_of_unit_gradient() {
        let s = Arc::new(FeSpace::new(Arc::new(single_triangle()), 1).unwrap());
        let zero = FeSolution::zero(s.clone());
        let ex: JetFn = Arc::new(|x, _| x);
        // area 1/2, so ⫴x⫴² = 1/2 on the reference triangle
        let e = energy_norm_diff(&s, &laplace(), &zero, &ex);
        assert!((e * e - 0.5).abs() < 1e-15);
        let p: JetFn = Arc::new(|x, y| x * y * 0.0);
        assert_eq!(energy_norm_diff(&s, &laplace(), &interpolate(&s, |_, _| 0.0), &p), 0.0);
    }
}
