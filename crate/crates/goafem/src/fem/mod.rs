//! Continuous Lagrange spaces of degree 1 and 2 with homogeneous Dirichlet
//! conditions, assembly of the primal and adjoint forms, and norms.

mod assemble;
mod norms;

pub use assemble::{
    assemble, assemble_dual, assemble_terms, clip_to_rect, goal_value, integrate_against_basis, SparseSystem,
    Terms,
};
pub use norms::{
    energy_norm, energy_norm_diff, energy_norm_diff_fe, l2_norm_diff, l2_project, l2_project_values,
    quasi_orthogonality_defect, QoDefect,
};

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::{EdgeKey, ElemId, Mesh, Point};

/// Marks a Dirichlet (eliminated) local dof.
pub const NO_DOF: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("unsupported polynomial degree {0}")]
    UnsupportedDegree(usize),
    #[error("non-finite coefficient value on element {0}")]
    NonFinite(ElemId),
    #[error("{0}")]
    Incompatible(String),
}

/// Affine geometry of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElemGeom {
    pub p: [Point; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub grad: [[f64; 2]; 3],
}

impl ElemGeom {
    pub fn new(p: [Point; 3]) -> Self {
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        let mut grad = [[0.0; 2]; 3];
        for (k, g) in grad.iter_mut().enumerate() {
            let a = p[(k + 1) % 3];
            let b = p[(k + 2) % 3];
            // normal to the opposite edge, scaled so that grad . (p_k - a) = 1
            *g = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
        }
        ElemGeom { p, area, grad }
    }

    /// `|T|^{1/2}`
    pub fn h(&self) -> f64 {
        self.area.sqrt()
    }

    pub fn point(&self, l: &[f64; 3]) -> Point {
        [
            l[0] * self.p[0][0] + l[1] * self.p[1][0] + l[2] * self.p[2][0],
            l[0] * self.p[0][1] + l[1] * self.p[1][1] + l[2] * self.p[2][1],
        ]
    }

    pub fn barycentric(&self, x: Point) -> [f64; 3] {
        let mut l = [0.0; 3];
        for (k, lk) in l.iter_mut().enumerate() {
            let a = self.p[(k + 1) % 3];
            *lk = self.grad[k][0] * (x[0] - a[0]) + self.grad[k][1] * (x[1] - a[1]);
        }
        l
    }
}

/// Local edges as barycentric index pairs, in local dof order after vertices.
pub const LOCAL_EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

pub fn local_dof_count(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Basis values at barycentric point `l`.
pub fn basis_values(degree: usize, l: &[f64; 3]) -> [f64; 6] {
    let mut v = [0.0; 6];
    if degree == 1 {
        v[..3].copy_from_slice(l);
    } else {
        for k in 0..3 {
            v[k] = l[k] * (2.0 * l[k] - 1.0);
        }
        for (e, &(i, j)) in LOCAL_EDGES.iter().enumerate() {
            v[3 + e] = 4.0 * l[i] * l[j];
        }
    }
    v
}

/// Basis gradients at barycentric point `l`.
pub fn basis_gradients(degree: usize, l: &[f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    if degree == 1 {
        out[..3].copy_from_slice(g);
    } else {
        for k in 0..3 {
            let s = 4.0 * l[k] - 1.0;
            out[k] = [s * g[k][0], s * g[k][1]];
        }
        for (e, &(i, j)) in LOCAL_EDGES.iter().enumerate() {
            out[3 + e] = [
                4.0 * (l[i] * g[j][0] + l[j] * g[i][0]),
                4.0 * (l[i] * g[j][1] + l[j] * g[i][1]),
            ];
        }
    }
    out
}

/// Basis Hessians (constant on each element for degree <= 2).
pub fn basis_hessians(degree: usize, g: &[[f64; 2]; 3]) -> [[[f64; 2]; 2]; 6] {
    let mut out = [[[0.0; 2]; 2]; 6];
    if degree == 2 {
        for k in 0..3 {
            for a in 0..2 {
                for b in 0..2 {
                    out[k][a][b] = 4.0 * g[k][a] * g[k][b];
                }
            }
        }
        for (e, &(i, j)) in LOCAL_EDGES.iter().enumerate() {
            for a in 0..2 {
                for b in 0..2 {
                    out[3 + e][a][b] = 4.0 * (g[i][a] * g[j][b] + g[j][a] * g[i][b]);
                }
            }
        }
    }
    out
}

/// Lagrange space on the leaves of one mesh generation.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    degree: usize,
    leaves: Vec<ElemId>,
    leaf_of: Vec<u32>,
    geom: Vec<ElemGeom>,
    dofs: Vec<[u32; 6]>,
    dof_points: Vec<Point>,
    num_boundary_nodes: usize,
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Result<Self, FemError> {
        if !(1..=2).contains(&degree) {
            return Err(FemError::UnsupportedDegree(degree));
        }
        let leaves = mesh.leaves();
        let mut leaf_of = vec![NO_DOF; mesh.num_elements()];
        for (i, e) in leaves.iter().enumerate() {
            leaf_of[e.idx()] = i as u32;
        }
        let geom: Vec<ElemGeom> = leaves.par_iter().map(|&e| ElemGeom::new(mesh.points(e))).collect();
        let mut vert_dof = vec![None::<u32>; mesh.num_vertices()];
        let mut edge_dof: HashMap<EdgeKey, u32> = HashMap::new();
        let mut dof_points = Vec::new();
        let mut boundary_nodes = 0;
        let mut dofs = Vec::with_capacity(leaves.len());
        for &e in &leaves {
            let el = mesh.element(e);
            let mut local = [NO_DOF; 6];
            for (k, v) in el.vertices.iter().enumerate() {
                let slot = &mut vert_dof[v.idx()];
                if slot.is_none() {
                    let vx = mesh.vertex(*v);
                    if vx.on_boundary {
                        *slot = Some(NO_DOF);
                        boundary_nodes += 1;
                    } else {
                        *slot = Some(dof_points.len() as u32);
                        dof_points.push(vx.point());
                    }
                }
                local[k] = slot.unwrap();
            }
            if degree == 2 {
                for (k, &(i, j)) in LOCAL_EDGES.iter().enumerate() {
                    let key = EdgeKey::new(el.vertices[i], el.vertices[j]);
                    let d = *edge_dof.entry(key).or_insert_with(|| {
                        if mesh.is_boundary_edge(key) {
                            boundary_nodes += 1;
                            NO_DOF
                        } else {
                            let (a, b) = (mesh.vertex(key.0), mesh.vertex(key.1));
                            dof_points.push([0.5 * (a.x + b.x), 0.5 * (a.y + b.y)]);
                            (dof_points.len() - 1) as u32
                        }
                    });
                    local[3 + k] = d;
                }
            }
            dofs.push(local);
        }
        Ok(FeSpace {
            mesh,
            degree,
            leaves,
            leaf_of,
            geom,
            dofs,
            dof_points,
            num_boundary_nodes: boundary_nodes,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn local_dofs(&self) -> usize {
        local_dof_count(self.degree)
    }

    /// Number of interior (unknown) dofs.
    pub fn num_dofs(&self) -> usize {
        self.dof_points.len()
    }

    /// Interior plus Dirichlet nodes.
    pub fn num_nodes(&self) -> usize {
        self.dof_points.len() + self.num_boundary_nodes
    }

    pub fn num_elements(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaves(&self) -> &[ElemId] {
        &self.leaves
    }

    pub fn leaf_index(&self, e: ElemId) -> Option<usize> {
        match self.leaf_of.get(e.idx()) {
            Some(&i) if i != NO_DOF => Some(i as usize),
            _ => None,
        }
    }

    pub fn geom(&self, leaf: usize) -> &ElemGeom {
        &self.geom[leaf]
    }

    /// Global dof per local basis function; [`NO_DOF`] on the boundary.
    pub fn dofs(&self, leaf: usize) -> &[u32] {
        &self.dofs[leaf][..self.local_dofs()]
    }

    pub fn dof_points(&self) -> &[Point] {
        &self.dof_points
    }
}

/// Coefficients over the interior dofs of a space.
#[derive(Debug, Clone)]
pub struct FeSolution {
    pub space: Arc<FeSpace>,
    pub coeffs: Vec<f64>,
}

impl FeSolution {
    pub fn new(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Self, FemError> {
        if coeffs.len() != space.num_dofs() {
            return Err(FemError::Incompatible(format!(
                "{} coefficients for {} dofs",
                coeffs.len(),
                space.num_dofs()
            )));
        }
        Ok(FeSolution { space, coeffs })
    }

    pub fn zero(space: Arc<FeSpace>) -> Self {
        let n = space.num_dofs();
        FeSolution {
            space,
            coeffs: vec![0.0; n],
        }
    }

    pub fn local_coeffs(&self, leaf: usize) -> [f64; 6] {
        let mut c = [0.0; 6];
        for (k, &d) in self.space.dofs(leaf).iter().enumerate() {
            if d != NO_DOF {
                c[k] = self.coeffs[d as usize];
            }
        }
        c
    }

    pub fn value_grad(&self, leaf: usize, l: &[f64; 3]) -> (f64, [f64; 2]) {
        let n = self.space.degree;
        let c = self.local_coeffs(leaf);
        let g = &self.space.geom[leaf].grad;
        let phi = basis_values(n, l);
        let dphi = basis_gradients(n, l, g);
        let mut v = 0.0;
        let mut gr = [0.0; 2];
        for k in 0..self.space.local_dofs() {
            v += c[k] * phi[k];
            gr[0] += c[k] * dphi[k][0];
            gr[1] += c[k] * dphi[k][1];
        }
        (v, gr)
    }

    pub fn hessian(&self, leaf: usize) -> [[f64; 2]; 2] {
        let c = self.local_coeffs(leaf);
        let hs = basis_hessians(self.space.degree, &self.space.geom[leaf].grad);
        let mut h = [[0.0; 2]; 2];
        for k in 0..self.space.local_dofs() {
            for a in 0..2 {
                for b in 0..2 {
                    h[a][b] += c[k] * hs[k][a][b];
                }
            }
        }
        h
    }

    /// `self - other` on a shared space.
    pub fn difference(&self, other: &FeSolution) -> Result<FeSolution, FemError> {
        if !Arc::ptr_eq(&self.space, &other.space) {
            return Err(FemError::Incompatible("solutions live on different spaces".into()));
        }
        Ok(FeSolution {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        })
    }
}

/// Nodal interpolant of a continuous function.
pub fn interpolate(space: &Arc<FeSpace>, f: impl Fn(f64, f64) -> f64 + Sync) -> FeSolution {
    let coeffs = space.dof_points.par_iter().map(|p| f(p[0], p[1])).collect();
    FeSolution {
        space: space.clone(),
        coeffs,
    }
}

/// Carries a solution onto a refinement of its mesh; exact for nested spaces.
pub fn prolongate(sol: &FeSolution, target: &Arc<FeSpace>) -> Result<FeSolution, FemError> {
    let src = &sol.space;
    if target.degree != src.degree {
        return Err(FemError::Incompatible("degree mismatch".into()));
    }
    let tm = &target.mesh;
    if tm.num_elements() < src.mesh.num_elements() || !tm.same_roots(&src.mesh) {
        return Err(FemError::Incompatible("target mesh is not a refinement".into()));
    }
    let n = target.num_dofs();
    let mut coeffs = vec![0.0; n];
    let mut done = vec![false; n];
    for (leaf, &e) in target.leaves.iter().enumerate() {
        let mut anc = e;
        let old = loop {
            if let Some(i) = src.leaf_index(anc) {
                break i;
            }
            anc = tm
                .element(anc)
                .parent
                .ok_or_else(|| FemError::Incompatible(format!("{e} has no ancestor in the source mesh")))?;
        };
        let geom = &target.geom[leaf];
        let nodes = local_nodes(target.degree);
        for (k, &d) in target.dofs(leaf).iter().enumerate() {
            if d == NO_DOF || done[d as usize] {
                continue;
            }
            let x = geom.point(&nodes[k]);
            let l = src.geom[old].barycentric(x);
            coeffs[d as usize] = sol.value_grad(old, &l).0;
            done[d as usize] = true;
        }
    }
    Ok(FeSolution {
        space: target.clone(),
        coeffs,
    })
}

/// Barycentric coordinates of the local Lagrange nodes.
pub fn local_nodes(degree: usize) -> [[f64; 3]; 6] {
    let mut n = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0; 3], [0.0; 3], [0.0; 3]];
    if degree == 2 {
        for (e, &(i, j)) in LOCAL_EDGES.iter().enumerate() {
            n[3 + e][i] = 0.5;
            n[3 + e][j] = 0.5;
        }
    }
    n
}
