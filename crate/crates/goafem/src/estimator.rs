//! Residual-based error indicators, oscillation and data terms.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fem::{basis_gradients, l2_project, l2_project_values, FeSolution, FeSpace, LOCAL_EDGES};
use crate::mesh::{EdgeKey, ElemId, Point};
use crate::problem::{ProblemData, ScalarField};
use crate::quadrature::{sample_points_15, LineRule, TriangleRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Primal,
    Dual,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Primal => "primal",
            Side::Dual => "dual",
        })
    }
}

/// Per-leaf indicators, in the leaf order of the space they were computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    pub leaves: Vec<ElemId>,
    /// `η(v, T)`, the `p`-th root of the combined indicator.
    pub values: Vec<f64>,
    /// `h_T ‖R(v)‖_{L2(T)}`
    pub interior: Vec<f64>,
    /// `h_T^{1/2} ‖J(v)‖_{L2(∂T)}`
    pub jump: Vec<f64>,
    /// `h_T ‖(I - Π_{2n-2}) R(v)‖_{L2(T)}`
    pub osc: Vec<f64>,
    pub p: u32,
    pub side: Side,
    pub revision: u64,
}

impl IndicatorField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Squared indicators (the Dörfler weights).
    pub fn squares(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * v).collect()
    }

    /// `(Σ η^p)^{1/p}` over all leaves.
    pub fn total(&self) -> f64 {
        lp_sum(&self.values, self.p).powf(1.0 / self.p as f64)
    }

    /// `(Σ osc^p)^{1/p}` over all leaves.
    pub fn osc_total(&self) -> f64 {
        lp_sum(&self.osc, self.p).powf(1.0 / self.p as f64)
    }
}

fn lp_sum(v: &[f64], p: u32) -> f64 {
    v.iter().map(|x| x.powi(p as i32)).sum()
}

/// `Σ_{T ∈ subset} η^p(T)`, the raw `p`-sum; `subset` holds leaf positions.
pub fn estimator_sum(field: &IndicatorField, subset: &[usize]) -> f64 {
    subset.iter().map(|&i| field.values[i].powi(field.p as i32)).sum()
}

/// `(Σ_{T ∈ subset} η^p(T))^{1/p}`.
pub fn estimator_total(field: &IndicatorField, subset: &[usize]) -> f64 {
    estimator_sum(field, subset).powf(1.0 / field.p as f64)
}

/// `R(v) = f + div(A grad v) - b . grad v - c v` at the points of `rule`.
pub fn strong_residual(space: &FeSpace, d: &ProblemData, fh: &FeSolution, leaf: usize, rule: &TriangleRule) -> Vec<f64> {
    let geom = space.geom(leaf);
    let hess = fh.hessian(leaf);
    let quadratic = space.degree() > 1;
    rule.points
        .iter()
        .map(|l| {
            let [x, y] = geom.point(l);
            let (v, g) = fh.value_grad(leaf, l);
            let mut div_agrad = 0.0;
            if quadratic || !d.a.is_constant() {
                let a = d.a.value(x, y);
                let da = d.a.divergence(x, y);
                div_agrad = da[0] * g[0] + da[1] * g[1];
                for i in 0..2 {
                    for j in 0..2 {
                        div_agrad += a[i][j] * hess[i][j];
                    }
                }
            }
            let b = d.b.value(x, y);
            d.f.value(x, y) + div_agrad - (b[0] * g[0] + b[1] * g[1]) - d.c.value(x, y) * v
        })
        .collect()
}

fn residual_degree(n: usize) -> usize {
    2 * n + 4
}

fn edge_degree(n: usize) -> usize {
    2 * n + 4
}

/// `‖[A grad v] . n‖_{L2(σ)}` for an edge; zero on the boundary.
pub fn jump_residual(space: &FeSpace, d: &ProblemData, fh: &FeSolution, edge: EdgeKey) -> f64 {
    let mesh = space.mesh();
    if mesh.is_boundary_edge(edge) {
        return 0.0;
    }
    let elems = mesh.edge_elements(edge);
    if elems.len() != 2 {
        return 0.0;
    }
    let leaves = [
        space.leaf_index(elems[0]).expect("edge element is a leaf"),
        space.leaf_index(elems[1]).expect("edge element is a leaf"),
    ];
    let rule = LineRule::with_degree(edge_degree(space.degree()));
    jump_sq(space, d, fh, edge, leaves, &rule).sqrt()
}

fn local_index(space: &FeSpace, leaf: usize, v: crate::mesh::VertId) -> usize {
    let e = space.leaves()[leaf];
    space.mesh().element(e).vertices.iter().position(|&w| w == v).expect("vertex on element")
}

fn jump_sq(space: &FeSpace, d: &ProblemData, fh: &FeSolution, edge: EdgeKey, leaves: [usize; 2], rule: &LineRule) -> f64 {
    let mesh = space.mesh();
    let pa: Point = mesh.vertex(edge.0).point();
    let pb: Point = mesh.vertex(edge.1).point();
    let t = [pb[0] - pa[0], pb[1] - pa[1]];
    let len = t[0].hypot(t[1]);
    let normal = [t[1] / len, -t[0] / len];
    let idx: Vec<(usize, usize)> = leaves
        .iter()
        .map(|&lf| (local_index(space, lf, edge.0), local_index(space, lf, edge.1)))
        .collect();
    let n = space.degree();
    let mut s = 0.0;
    for (&tq, &w) in rule.points.iter().zip(&rule.weights) {
        let x = [pa[0] + tq * t[0], pa[1] + tq * t[1]];
        let a = d.a.value(x[0], x[1]);
        let mut flux = [0.0; 2];
        for (side, (&lf, &(ia, ib))) in leaves.iter().zip(&idx).enumerate() {
            let mut l = [0.0; 3];
            l[ia] = 1.0 - tq;
            l[ib] = tq;
            let c = fh.local_coeffs(lf);
            let dphi = basis_gradients(n, &l, &space.geom(lf).grad);
            let mut g = [0.0; 2];
            for k in 0..space.local_dofs() {
                g[0] += c[k] * dphi[k][0];
                g[1] += c[k] * dphi[k][1];
            }
            let ag = [a[0][0] * g[0] + a[0][1] * g[1], a[1][0] * g[0] + a[1][1] * g[1]];
            flux[side] = ag[0] * normal[0] + ag[1] * normal[1];
        }
        let j = flux[0] - flux[1];
        s += w * j * j;
    }
    s * len
}

/// Indicators for `fh` on its own space. `Side::Dual` uses the adjoint data.
pub fn indicators(space: &FeSpace, d: &ProblemData, fh: &FeSolution, p: u32, side: Side) -> IndicatorField {
    assert!(p == 1 || p == 2, "indicator exponent must be 1 or 2");
    let dual;
    let data = match side {
        Side::Primal => d,
        Side::Dual => {
            dual = d.dual();
            &dual
        }
    };
    let n = space.degree();
    let rule = TriangleRule::cached(residual_degree(n));
    let line = LineRule::with_degree(edge_degree(n));
    let mesh = space.mesh();
    let per: Vec<(f64, f64, f64)> = (0..space.num_elements())
        .into_par_iter()
        .map(|leaf| {
            let geom = space.geom(leaf);
            let h = geom.h();
            let r = strong_residual(space, data, fh, leaf, rule);
            let r2: f64 = rule.weights.iter().zip(&r).map(|(w, v)| w * v * v).sum::<f64>() * geom.area;
            let proj = l2_project_values(rule, &r, 2 * n as i32 - 2);
            let o2: f64 = rule
                .weights
                .iter()
                .zip(r.iter().zip(&proj))
                .map(|(w, (v, q))| w * (v - q) * (v - q))
                .sum::<f64>()
                * geom.area;
            let e = space.leaves()[leaf];
            let verts = mesh.element(e).vertices;
            let mut j2 = 0.0;
            for &(i, k) in &LOCAL_EDGES {
                let key = EdgeKey::new(verts[i], verts[k]);
                if mesh.is_boundary_edge(key) {
                    continue;
                }
                let other = mesh
                    .edge_elements(key)
                    .into_iter()
                    .find(|&o| o != e)
                    .and_then(|o| space.leaf_index(o));
                if let Some(o) = other {
                    // fixed order so both neighbors see the same value
                    let pair = if leaf < o { [leaf, o] } else { [o, leaf] };
                    j2 += jump_sq(space, data, fh, key, pair, &line);
                }
            }
            (h * r2.sqrt(), h.sqrt() * j2.sqrt(), h * o2.sqrt().min(r2.sqrt()))
        })
        .collect();
    let values = per
        .iter()
        .map(|&(ri, ji, _)| if p == 2 { ri.hypot(ji) } else { ri + ji })
        .collect();
    IndicatorField {
        leaves: space.leaves().to_vec(),
        values,
        interior: per.iter().map(|t| t.0).collect(),
        jump: per.iter().map(|t| t.1).collect(),
        osc: per.iter().map(|t| t.2).collect(),
        p,
        side,
        revision: mesh.revision(),
    }
}

/// `osc(v, T)` for one leaf.
pub fn oscillation(space: &FeSpace, d: &ProblemData, fh: &FeSolution, leaf: usize) -> f64 {
    let n = space.degree();
    let rule = TriangleRule::cached(residual_degree(n));
    let geom = space.geom(leaf);
    let r = strong_residual(space, d, fh, leaf, rule);
    let proj = l2_project_values(rule, &r, 2 * n as i32 - 2);
    let o2: f64 = rule
        .weights
        .iter()
        .zip(r.iter().zip(&proj))
        .map(|(w, (v, q))| w * (v - q) * (v - q))
        .sum::<f64>()
        * geom.area;
    geom.h() * o2.sqrt()
}

/// Data estimator and data oscillation per leaf, with their maxima.
#[derive(Debug, Clone, PartialEq)]
pub struct DataEstimates {
    pub eta: Vec<f64>,
    pub osc: Vec<f64>,
    pub eta_max: f64,
    pub osc_max: f64,
}

/// Max over the sample lattice of `|f - Π_m f|`; `m < 0` means no projection.
fn sampled_remainder(space: &FeSpace, leaf: usize, m: i32, f: impl Fn(f64, f64) -> f64) -> f64 {
    let geom = space.geom(leaf);
    let coef = if m >= 0 { l2_project(geom, m as usize, &f) } else { Vec::new() };
    let mut worst: f64 = 0.0;
    for l in sample_points_15() {
        let [x, y] = geom.point(l);
        let mut proj = 0.0;
        if m >= 0 {
            let mut k = 0;
            for total in 0..=m {
                for a in 0..=total {
                    proj += coef[k] * l[1].powi(a) * l[2].powi(total - a);
                    k += 1;
                }
            }
        }
        worst = worst.max((f(x, y) - proj).abs());
    }
    worst
}

fn sampled_max(space: &FeSpace, leaf: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    sampled_remainder(space, leaf, -1, f)
}

/// `η(D, T)` and `osc(D, T)` with sampled sup norms. Vector and matrix
/// norms combine componentwise sups in the Euclidean way.
pub fn data_estimates(d: &ProblemData, space: &FeSpace, p: u32) -> DataEstimates {
    let n = space.degree() as i32;
    let mesh = space.mesh();
    let pf = p as i32;
    let const_c = matches!(d.c, ScalarField::Constant(_));
    let a_norm: Vec<f64> = (0..space.num_elements())
        .into_par_iter()
        .map(|leaf| {
            let comps = [
                sampled_max(space, leaf, |x, y| d.a.value(x, y)[0][0]),
                sampled_max(space, leaf, |x, y| d.a.value(x, y)[0][1]),
                sampled_max(space, leaf, |x, y| d.a.value(x, y)[1][0]),
                sampled_max(space, leaf, |x, y| d.a.value(x, y)[1][1]),
            ];
            comps.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect();
    let per: Vec<(f64, f64)> = (0..space.num_elements())
        .into_par_iter()
        .map(|leaf| {
            let h = space.geom(leaf).h();
            let e = space.leaves()[leaf];
            let a_patch = mesh
                .patch(e)
                .expect("leaf")
                .iter()
                .filter_map(|&t| space.leaf_index(t))
                .map(|i| a_norm[i])
                .fold(0.0, f64::max);
            let vec_norm = |m: i32, f: &dyn Fn(f64, f64) -> [f64; 2]| {
                let c0 = sampled_remainder(space, leaf, m, |x, y| f(x, y)[0]);
                let c1 = sampled_remainder(space, leaf, m, |x, y| f(x, y)[1]);
                c0.hypot(c1)
            };
            let mat_norm = |m: i32| {
                let mut s = 0.0;
                for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let v = sampled_remainder(space, leaf, m, |x, y| d.a.value(x, y)[i][j]);
                    s += v * v;
                }
                s.sqrt()
            };
            let div_a = vec_norm(-1, &|x, y| d.a.divergence(x, y));
            let b = vec_norm(-1, &|x, y| d.b.value(x, y));
            let c = sampled_max(space, leaf, |x, y| d.c.value(x, y));
            let hp = h.powi(pf);
            let eta = hp * (div_a.powi(pf) + h.powi(-pf) * a_patch.powi(pf) + c.powi(pf) + b.powi(pf));

            let osc_div = vec_norm(n - 1, &|x, y| d.a.divergence(x, y));
            let osc_a = if d.a.is_constant() { 0.0 } else { mat_norm(n) };
            let osc_c_low = sampled_remainder(space, leaf, n - 2, |x, y| d.c.value(x, y));
            let osc_c_high = if const_c && 2 * n - 2 >= 0 {
                0.0
            } else {
                sampled_remainder(space, leaf, 2 * n - 2, |x, y| d.c.value(x, y))
            };
            let osc_b = if d.b.is_constant() && n >= 1 {
                0.0
            } else {
                vec_norm(n - 1, &|x, y| d.b.value(x, y))
            };
            let osc = hp
                * (osc_div.powi(pf)
                    + h.powi(-pf) * osc_a.powi(pf)
                    + hp * osc_c_low.powi(pf)
                    + osc_c_high.powi(pf)
                    + osc_b.powi(pf));
            let root = 1.0 / p as f64;
            (eta.powf(root), osc.powf(root))
        })
        .collect();
    let eta: Vec<f64> = per.iter().map(|t| t.0).collect();
    let osc: Vec<f64> = per.iter().map(|t| t.1).collect();
    DataEstimates {
        eta_max: eta.iter().copied().fold(0.0, f64::max),
        osc_max: osc.iter().copied().fold(0.0, f64::max),
        eta,
        osc,
    }
}
