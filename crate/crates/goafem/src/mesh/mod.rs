//! Conforming triangulations refined by newest vertex bisection.
//!
//! Every element stores its vertices as `(v0, v1, v2)`: the edge `(v0, v1)`
//! is the refinement edge and `v2` is the newest vertex. Elements are never
//! removed; a bisected element keeps its slot and points to its two
//! children, so the element list is a forest rooted at the initial mesh.

mod builders;
mod io;

pub use builders::{criss_cross_lshape, criss_cross_square, single_triangle};
pub use io::{read_mesh, write_mesh, MESH_HEADER};

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

/// Index of a vertex; dense in `[0, num_vertices)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertId(pub u32);

/// Index of an element in the forest (alive or not).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElemId(pub u32);

impl VertId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl ElemId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for ElemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

/// Unordered vertex pair, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeKey(pub VertId, pub VertId);

impl EdgeKey {
    pub fn new(a: VertId, b: VertId) -> Self {
        if a <= b {
            EdgeKey(a, b)
        } else {
            EdgeKey(b, a)
        }
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0, self.1)
    }
}

pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("input mesh is not conforming at edge {0}")]
    NonConforming(EdgeKey),
    #[error("edge {0} is shared by more than two triangles")]
    OverSharedEdge(EdgeKey),
    #[error("triangle {0} is degenerate")]
    Degenerate(usize),
    #[error("vertex index {index} out of range in triangle {triangle}")]
    BadVertex { triangle: usize, index: usize },
    #[error("non-finite coordinate at vertex {0}")]
    NonFinite(usize),
    #[error("element {0} does not exist")]
    UnknownElement(ElemId),
    #[error("element {0} is not a leaf")]
    NotAlive(ElemId),
    #[error("conforming completion exceeded depth {0}")]
    CompletionDepth(usize),
    #[error("meshes do not share the same initial triangulation")]
    DifferentRoots,
    #[error("mesh invariant violated: {0}")]
    Invariant(String),
    #[error("mesh file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub x: f64,
    pub y: f64,
    pub on_boundary: bool,
}

impl Vertex {
    pub fn point(&self) -> Point {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    /// `(v0, v1)` is the refinement edge, `v2` the newest vertex.
    pub vertices: [VertId; 3],
    pub generation: u32,
    pub parent: Option<ElemId>,
    pub children: Option<[ElemId; 2]>,
}

impl Element {
    pub fn is_alive(&self) -> bool {
        self.children.is_none()
    }

    pub fn refinement_edge(&self) -> EdgeKey {
        EdgeKey::new(self.vertices[0], self.vertices[1])
    }

    /// Local edges `(0,1)`, `(1,2)`, `(2,0)`.
    pub fn edges(&self) -> [EdgeKey; 3] {
        let [a, b, c] = self.vertices;
        [EdgeKey::new(a, b), EdgeKey::new(b, c), EdgeKey::new(c, a)]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct EdgeSlot([Option<ElemId>; 2]);

impl EdgeSlot {
    fn insert(&mut self, e: ElemId) {
        if self.0[0].is_none() {
            self.0[0] = Some(e);
        } else if self.0[1].is_none() {
            self.0[1] = Some(e);
        } else {
            panic!("edge already has two incident elements");
        }
    }

    fn remove(&mut self, e: ElemId) {
        if self.0[0] == Some(e) {
            self.0[0] = self.0[1].take();
        } else if self.0[1] == Some(e) {
            self.0[1] = None;
        }
    }

    fn count(&self) -> usize {
        self.0.iter().filter(|s| s.is_some()).count()
    }

    fn other(&self, e: ElemId) -> Option<ElemId> {
        match self.0 {
            [Some(a), b] if a == e => b,
            [Some(a), Some(b)] if b == e => Some(a),
            _ => None,
        }
    }
}

/// Summary statistics over the leaves of a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    pub num_leaves: usize,
    pub h_max: f64,
    pub h_min: f64,
    pub min_angle: f64,
    pub generation_max: u32,
}

/// Result of [`Mesh::refine`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementReport {
    /// Leaves of the input mesh that are no longer leaves, ascending.
    pub refined_set: Vec<ElemId>,
    pub new_leaf_count: usize,
}

const COMPLETION_DEPTH_LIMIT: usize = 10_000;

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Vertex>,
    elements: Vec<Element>,
    num_roots: usize,
    num_root_vertices: usize,
    edges: HashMap<EdgeKey, EdgeSlot>,
    boundary: HashSet<EdgeKey>,
    midpoints: HashMap<EdgeKey, VertId>,
    num_leaves: usize,
    revision: u64,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Counts triangle incidences per edge of a raw triangle list.
fn raw_edge_counts(tris: &[[usize; 3]]) -> Result<HashMap<(usize, usize), usize>, MeshError> {
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    for t in tris {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let c = counts.entry(key).or_insert(0);
            *c += 1;
            if *c > 2 {
                return Err(MeshError::OverSharedEdge(EdgeKey::new(
                    VertId(key.0 as u32),
                    VertId(key.1 as u32),
                )));
            }
        }
    }
    Ok(counts)
}

fn validate_raw(points: &[Point], tris: &[[usize; 3]]) -> Result<(), MeshError> {
    for (i, p) in points.iter().enumerate() {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(MeshError::NonFinite(i));
        }
    }
    for (ti, t) in tris.iter().enumerate() {
        for &v in t {
            if v >= points.len() {
                return Err(MeshError::BadVertex {
                    triangle: ti,
                    index: v,
                });
            }
        }
        let area = signed_area(points[t[0]], points[t[1]], points[t[2]]);
        let scale = dist2(points[t[0]], points[t[1]])
            .max(dist2(points[t[1]], points[t[2]]))
            .max(dist2(points[t[2]], points[t[0]]));
        if area.abs() <= 1e-14 * scale {
            return Err(MeshError::Degenerate(ti));
        }
    }
    let counts = raw_edge_counts(tris)?;
    // a hanging node shows up as a vertex strictly inside a one-sided edge
    let single: Vec<(usize, usize)> = {
        let mut v: Vec<_> = counts
            .iter()
            .filter(|(_, c)| **c == 1)
            .map(|(k, _)| *k)
            .collect();
        v.sort_unstable();
        v
    };
    let mut candidates: Vec<usize> = single.iter().flat_map(|&(a, b)| [a, b]).collect();
    candidates.sort_unstable();
    candidates.dedup();
    for &(a, b) in &single {
        let (pa, pb) = (points[a], points[b]);
        let len2 = dist2(pa, pb);
        for &v in &candidates {
            if v == a || v == b {
                continue;
            }
            let pv = points[v];
            let cross = (pb[0] - pa[0]) * (pv[1] - pa[1]) - (pb[1] - pa[1]) * (pv[0] - pa[0]);
            if cross.abs() > 1e-12 * len2 {
                continue;
            }
            let t = ((pv[0] - pa[0]) * (pb[0] - pa[0]) + (pv[1] - pa[1]) * (pb[1] - pa[1])) / len2;
            if t > 1e-12 && t < 1.0 - 1e-12 {
                return Err(MeshError::NonConforming(EdgeKey::new(
                    VertId(a as u32),
                    VertId(b as u32),
                )));
            }
        }
    }
    Ok(())
}

/// Index of the longest local edge `(k, k+1)`; ties go to the smaller sorted id pair.
fn longest_edge(points: &[Point], t: &[usize; 3]) -> usize {
    let mut best = 0;
    let mut best_key = (f64::NEG_INFINITY, usize::MAX, usize::MAX);
    for k in 0..3 {
        let (a, b) = (t[k], t[(k + 1) % 3]);
        let l = dist2(points[a], points[b]);
        let (lo, hi) = (a.min(b), a.max(b));
        let better = l > best_key.0 || (l == best_key.0 && (lo, hi) < (best_key.1, best_key.2));
        if better {
            best = k;
            best_key = (l, lo, hi);
        }
    }
    best
}

impl Mesh {
    /// Builds a mesh from a raw conforming triangulation, choosing refinement
    /// edges (longest edge, verified for pairwise compatibility).
    ///
    /// If the longest-edge labeling is not compatible, every triangle is split
    /// at its centroid into three and each child is labeled with its outer edge;
    /// that labeling is always compatible.
    pub fn from_raw(points: &[Point], tris: &[[usize; 3]]) -> Result<Mesh, MeshError> {
        validate_raw(points, tris)?;
        let labeled: Vec<[usize; 3]> = tris
            .iter()
            .map(|t| {
                let k = longest_edge(points, t);
                [t[k], t[(k + 1) % 3], t[(k + 2) % 3]]
            })
            .collect();
        if labeling_is_compatible(&labeled)? {
            return Mesh::from_labeled(points, &labeled);
        }
        let mut pts = points.to_vec();
        let mut split = Vec::with_capacity(3 * tris.len());
        for t in tris {
            let c = [
                (points[t[0]][0] + points[t[1]][0] + points[t[2]][0]) / 3.0,
                (points[t[0]][1] + points[t[1]][1] + points[t[2]][1]) / 3.0,
            ];
            let ci = pts.len();
            pts.push(c);
            for k in 0..3 {
                split.push([t[k], t[(k + 1) % 3], ci]);
            }
        }
        debug_assert!(labeling_is_compatible(&split)?);
        Mesh::from_labeled(&pts, &split)
    }

    /// Builds a mesh whose triangles already carry their labeling: `(v0, v1)`
    /// is the refinement edge. Orientation is fixed by swapping `v0` and `v1`.
    pub fn from_labeled(points: &[Point], tris: &[[usize; 3]]) -> Result<Mesh, MeshError> {
        validate_raw(points, tris)?;
        let counts = raw_edge_counts(tris)?;
        let mut vertices: Vec<Vertex> = points
            .iter()
            .map(|p| Vertex {
                x: p[0],
                y: p[1],
                on_boundary: false,
            })
            .collect();
        let mut boundary = HashSet::new();
        for (&(a, b), &c) in &counts {
            if c == 1 {
                boundary.insert(EdgeKey::new(VertId(a as u32), VertId(b as u32)));
                vertices[a].on_boundary = true;
                vertices[b].on_boundary = true;
            }
        }
        let mut elements = Vec::with_capacity(tris.len());
        for t in tris {
            let (mut a, mut b, c) = (t[0], t[1], t[2]);
            if signed_area(points[a], points[b], points[c]) < 0.0 {
                std::mem::swap(&mut a, &mut b);
            }
            elements.push(Element {
                vertices: [VertId(a as u32), VertId(b as u32), VertId(c as u32)],
                generation: 0,
                parent: None,
                children: None,
            });
        }
        let mut mesh = Mesh {
            num_roots: elements.len(),
            num_root_vertices: vertices.len(),
            num_leaves: elements.len(),
            vertices,
            elements,
            edges: HashMap::new(),
            boundary,
            midpoints: HashMap::new(),
            revision: 0,
        };
        for i in 0..mesh.elements.len() {
            mesh.attach(ElemId(i as u32));
        }
        Ok(mesh)
    }

    fn attach(&mut self, e: ElemId) {
        for key in self.elements[e.idx()].edges() {
            self.edges.entry(key).or_default().insert(e);
        }
    }

    fn detach(&mut self, e: ElemId) {
        for key in self.elements[e.idx()].edges() {
            if let Some(slot) = self.edges.get_mut(&key) {
                slot.remove(e);
                if slot.count() == 0 {
                    self.edges.remove(&key);
                }
            }
        }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: VertId) -> &Vertex {
        &self.vertices[v.idx()]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, e: ElemId) -> &Element {
        &self.elements[e.idx()]
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_roots(&self) -> usize {
        self.num_roots
    }

    pub fn num_leaves(&self) -> usize {
        self.num_leaves
    }

    /// Incremented by every bisection; identifies a mesh generation.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Alive elements in ascending id order.
    pub fn leaves(&self) -> Vec<ElemId> {
        self.elements
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_alive())
            .map(|(i, _)| ElemId(i as u32))
            .collect()
    }

    pub fn is_boundary_edge(&self, key: EdgeKey) -> bool {
        self.boundary.contains(&key)
    }

    pub fn num_boundary_edges(&self) -> usize {
        self.boundary.len()
    }

    pub fn points(&self, e: ElemId) -> [Point; 3] {
        let v = self.elements[e.idx()].vertices;
        [
            self.vertices[v[0].idx()].point(),
            self.vertices[v[1].idx()].point(),
            self.vertices[v[2].idx()].point(),
        ]
    }

    pub fn area(&self, e: ElemId) -> f64 {
        let [a, b, c] = self.points(e);
        signed_area(a, b, c)
    }

    /// `h_T = |T|^{1/2}`.
    pub fn h(&self, e: ElemId) -> f64 {
        self.area(e).sqrt()
    }

    /// Alive elements incident to an edge (one or two).
    pub fn edge_elements(&self, key: EdgeKey) -> Vec<ElemId> {
        self.edges
            .get(&key)
            .map(|s| s.0.iter().flatten().copied().collect())
            .unwrap_or_default()
    }

    fn neighbor(&self, e: ElemId, key: EdgeKey) -> Option<ElemId> {
        self.edges.get(&key).and_then(|s| s.other(e))
    }

    fn check_alive(&self, e: ElemId) -> Result<(), MeshError> {
        match self.elements.get(e.idx()) {
            None => Err(MeshError::UnknownElement(e)),
            Some(el) if !el.is_alive() => Err(MeshError::NotAlive(e)),
            Some(_) => Ok(()),
        }
    }

    fn midpoint(&mut self, a: VertId, b: VertId) -> VertId {
        let key = EdgeKey::new(a, b);
        if let Some(&m) = self.midpoints.get(&key) {
            return m;
        }
        let (pa, pb) = (self.vertices[a.idx()], self.vertices[b.idx()]);
        let m = VertId(self.vertices.len() as u32);
        self.vertices.push(Vertex {
            x: 0.5 * (pa.x + pb.x),
            y: 0.5 * (pa.y + pb.y),
            on_boundary: self.boundary.contains(&key),
        });
        self.midpoints.insert(key, m);
        m
    }

    /// Bisects one leaf along its refinement edge. Conformity of the result
    /// is not guaranteed; see [`Mesh::refine`] for the conforming closure.
    pub fn bisect(&mut self, t: ElemId) -> Result<(ElemId, ElemId), MeshError> {
        self.check_alive(t)?;
        let parent = self.elements[t.idx()].clone();
        let [v0, v1, v2] = parent.vertices;
        let m = self.midpoint(v0, v1);
        let ref_key = EdgeKey::new(v0, v1);
        if self.boundary.remove(&ref_key) {
            self.boundary.insert(EdgeKey::new(v0, m));
            self.boundary.insert(EdgeKey::new(m, v1));
        }
        self.detach(t);
        let a = ElemId(self.elements.len() as u32);
        let b = ElemId(a.0 + 1);
        let generation = parent.generation + 1;
        // both orderings keep the parent's counter-clockwise orientation
        self.elements.push(Element {
            vertices: [v2, v0, m],
            generation,
            parent: Some(t),
            children: None,
        });
        self.elements.push(Element {
            vertices: [v1, v2, m],
            generation,
            parent: Some(t),
            children: None,
        });
        self.elements[t.idx()].children = Some([a, b]);
        self.attach(a);
        self.attach(b);
        self.num_leaves += 1;
        self.revision += 1;
        Ok((a, b))
    }

    fn bisect_conforming(
        &mut self,
        t: ElemId,
        depth: usize,
        bisected: &mut Vec<ElemId>,
    ) -> Result<(), MeshError> {
        if depth > COMPLETION_DEPTH_LIMIT {
            return Err(MeshError::CompletionDepth(COMPLETION_DEPTH_LIMIT));
        }
        if !self.elements[t.idx()].is_alive() {
            return Ok(());
        }
        let key = self.elements[t.idx()].refinement_edge();
        if let Some(mut n) = self.neighbor(t, key) {
            if self.elements[n.idx()].refinement_edge() != key {
                self.bisect_conforming(n, depth + 1, bisected)?;
                if !self.elements[t.idx()].is_alive() {
                    return Ok(());
                }
                n = self.neighbor(t, key).ok_or_else(|| {
                    MeshError::Invariant(format!("lost neighbor of {t} across {key}"))
                })?;
                if self.elements[n.idx()].refinement_edge() != key {
                    return Err(MeshError::Invariant(format!(
                        "incompatible refinement edges at {key}"
                    )));
                }
            }
            self.bisect(t)?;
            self.bisect(n)?;
            bisected.push(t);
            bisected.push(n);
        } else {
            self.bisect(t)?;
            bisected.push(t);
        }
        Ok(())
    }

    /// Bisects every marked leaf at least once and restores conformity by
    /// recursive completion.
    pub fn refine(&mut self, marked: &[ElemId]) -> Result<RefinementReport, MeshError> {
        for &t in marked {
            self.check_alive(t)?;
        }
        let first_new = self.elements.len() as u32;
        let mut order: Vec<ElemId> = marked.to_vec();
        order.sort_unstable();
        order.dedup();
        let mut bisected = Vec::new();
        for t in order {
            self.bisect_conforming(t, 0, &mut bisected)?;
        }
        let mut refined_set: Vec<ElemId> = bisected.into_iter().filter(|e| e.0 < first_new).collect();
        refined_set.sort_unstable();
        refined_set.dedup();
        Ok(RefinementReport {
            refined_set,
            new_leaf_count: self.num_leaves,
        })
    }

    /// Refines every leaf once.
    pub fn refine_uniform(&mut self) -> Result<RefinementReport, MeshError> {
        let leaves = self.leaves();
        self.refine(&leaves)
    }

    /// `T` together with all alive elements sharing an edge with it.
    pub fn patch(&self, t: ElemId) -> Result<Vec<ElemId>, MeshError> {
        self.check_alive(t)?;
        let mut out = vec![t];
        for key in self.elements[t.idx()].edges() {
            if let Some(n) = self.neighbor(t, key) {
                out.push(n);
            }
        }
        Ok(out)
    }

    pub fn stats(&self) -> MeshStats {
        let mut s = MeshStats {
            num_leaves: 0,
            h_max: 0.0,
            h_min: f64::INFINITY,
            min_angle: f64::INFINITY,
            generation_max: 0,
        };
        for (i, el) in self.elements.iter().enumerate() {
            if !el.is_alive() {
                continue;
            }
            let e = ElemId(i as u32);
            let h = self.h(e);
            s.num_leaves += 1;
            s.h_max = s.h_max.max(h);
            s.h_min = s.h_min.min(h);
            s.min_angle = s.min_angle.min(min_angle(self.points(e)));
            s.generation_max = s.generation_max.max(el.generation);
        }
        s
    }

    /// Checks conformity, orientation, boundary bookkeeping and the
    /// generation gap between edge neighbors.
    pub fn check_invariants(&self) -> Result<(), MeshError> {
        let mut leaves = 0;
        for (i, el) in self.elements.iter().enumerate() {
            if let Some([a, b]) = el.children {
                for c in [a, b] {
                    let child = &self.elements[c.idx()];
                    if child.generation != el.generation + 1 || child.parent != Some(ElemId(i as u32)) {
                        return Err(MeshError::Invariant(format!("bad child link at T{i}")));
                    }
                }
                continue;
            }
            leaves += 1;
            if self.area(ElemId(i as u32)) <= 0.0 {
                return Err(MeshError::Invariant(format!("T{i} has non-positive area")));
            }
        }
        if leaves != self.num_leaves {
            return Err(MeshError::Invariant("leaf count out of sync".into()));
        }
        for (key, slot) in &self.edges {
            match slot.count() {
                1 => {
                    if !self.boundary.contains(key) {
                        return Err(MeshError::NonConforming(*key));
                    }
                }
                2 => {
                    if self.boundary.contains(key) {
                        return Err(MeshError::Invariant(format!("boundary edge {key} has two elements")));
                    }
                    let [Some(a), Some(b)] = slot.0 else { unreachable!() };
                    let (ga, gb) = (self.elements[a.idx()].generation, self.elements[b.idx()].generation);
                    if ga.abs_diff(gb) > 1 {
                        return Err(MeshError::Invariant(format!(
                            "generation gap {} across {key}",
                            ga.abs_diff(gb)
                        )));
                    }
                }
                _ => return Err(MeshError::Invariant(format!("edge {key} has no element"))),
            }
        }
        for key in &self.boundary {
            if self.edges.get(key).map(|s| s.count()) != Some(1) {
                return Err(MeshError::Invariant(format!("boundary edge {key} is not a leaf edge")));
            }
        }
        Ok(())
    }

    /// True when both meshes were built from the same initial triangulation.
    pub fn same_roots(&self, other: &Mesh) -> bool {
        self.num_roots == other.num_roots
            && self.num_root_vertices == other.num_root_vertices
            && self.vertices[..self.num_root_vertices]
                .iter()
                .zip(&other.vertices[..other.num_root_vertices])
                .all(|(a, b)| a.x == b.x && a.y == b.y)
            && self.elements[..self.num_roots]
                .iter()
                .zip(&other.elements[..other.num_roots])
                .all(|(a, b)| a.vertices == b.vertices)
    }

    /// Smallest common refinement of two refinements of the same initial mesh.
    pub fn overlay(&self, other: &Mesh) -> Result<Mesh, MeshError> {
        if !self.same_roots(other) {
            return Err(MeshError::DifferentRoots);
        }
        let mut out = self.clone();
        let mut stack: Vec<(ElemId, ElemId)> =
            (0..self.num_roots as u32).map(|i| (ElemId(i), ElemId(i))).collect();
        while let Some((r, o)) = stack.pop() {
            let Some([oa, ob]) = other.elements[o.idx()].children else {
                continue;
            };
            let [ra, rb] = match out.elements[r.idx()].children {
                Some(c) => c,
                None => {
                    let (a, b) = out.bisect(r)?;
                    [a, b]
                }
            };
            stack.push((rb, ob));
            stack.push((ra, oa));
        }
        out.check_invariants()?;
        Ok(out)
    }

    /// Initial (root) triangles as vertex triples.
    pub fn root_triangles(&self) -> Vec<[Point; 3]> {
        (0..self.num_roots).map(|i| self.points(ElemId(i as u32))).collect()
    }
}

/// Whether every refinement edge is either on the boundary or also the
/// refinement edge of the neighbor across it.
fn labeling_is_compatible(tris: &[[usize; 3]]) -> Result<bool, MeshError> {
    let counts = raw_edge_counts(tris)?;
    let refs: HashMap<(usize, usize), usize> = tris
        .iter()
        .map(|t| ((t[0].min(t[1]), t[0].max(t[1])), 1usize))
        .fold(HashMap::new(), |mut m, (k, c)| {
            *m.entry(k).or_insert(0) += c;
            m
        });
    for t in tris {
        let key = (t[0].min(t[1]), t[0].max(t[1]));
        if counts[&key] == 2 && refs[&key] != 2 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Minimum interior angle of a triangle, radians.
pub fn min_angle(p: [Point; 3]) -> f64 {
    let mut best = f64::INFINITY;
    for k in 0..3 {
        let a = p[k];
        let b = p[(k + 1) % 3];
        let c = p[(k + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cross = u[0] * v[1] - u[1] * v[0];
        let dot = u[0] * v[0] + u[1] * v[1];
        best = best.min(cross.abs().atan2(dot));
    }
    best
}

/// Minimum angle over all newest-vertex-bisection descendants (up to
/// `depth` generations) of the given labeled triangles.
pub fn nvb_min_angle_bound(roots: &[[Point; 3]], depth: u32) -> f64 {
    fn walk(t: [Point; 3], depth: u32, best: &mut f64) {
        *best = best.min(min_angle(t));
        if depth == 0 {
            return;
        }
        let [v0, v1, v2] = t;
        let m = [0.5 * (v0[0] + v1[0]), 0.5 * (v0[1] + v1[1])];
        walk([v2, v0, m], depth - 1, best);
        walk([v1, v2, m], depth - 1, best);
    }
    let mut best = f64::INFINITY;
    for &t in roots {
        walk(t, depth, &mut best);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> Mesh {
        // unit square split along its diagonal (1,0)-(0,1)
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        Mesh::from_raw(&pts, &[[0, 1, 2], [1, 3, 2]]).unwrap()
    }

    #[test]
    fn single_triangle_uses_longest_edge() {
        let m = single_triangle();
        let e = m.element(ElemId(0));
        let key = e.refinement_edge();
        let p0 = m.vertex(key.0).point();
        let p1 = m.vertex(key.1).point();
        let mut pair = [p0, p1];
        pair.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(pair, [[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn compatible_pair_is_accepted() {
        let m = two_triangles();
        assert_eq!(m.num_leaves(), 2);
        let r0 = m.element(ElemId(0)).refinement_edge();
        let r1 = m.element(ElemId(1)).refinement_edge();
        assert_eq!(r0, r1);
        m.check_invariants().unwrap();
    }

    #[test]
    fn bisect_follows_the_labeling() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mut m = Mesh::from_labeled(&pts, &[[0, 1, 2]]).unwrap();
        let (a, b) = m.bisect(ElemId(0)).unwrap();
        let ea = m.element(a).clone();
        let eb = m.element(b).clone();
        assert_eq!(m.vertex(ea.vertices[2]).point(), [0.5, 0.0]);
        assert_eq!(ea.refinement_edge(), EdgeKey::new(VertId(0), VertId(2)));
        assert_eq!(eb.refinement_edge(), EdgeKey::new(VertId(1), VertId(2)));
        assert!((m.area(a) - 0.25).abs() < 1e-15);
        assert!((m.area(b) - 0.25).abs() < 1e-15);
        assert!((m.h(ElemId(0)) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((m.h(a) - 0.5).abs() < 1e-15);
        assert!(m.bisect(ElemId(0)).is_err());
    }

    #[test]
    fn refine_with_empty_marking_is_identity() {
        let mut m = two_triangles();
        let rev = m.revision();
        let rep = m.refine(&[]).unwrap();
        assert!(rep.refined_set.is_empty());
        assert_eq!(rep.new_leaf_count, 2);
        assert_eq!(m.revision(), rev);
    }

    #[test]
    fn completion_propagates_to_neighbor() {
        let mut m = two_triangles();
        let rep = m.refine(&[ElemId(0)]).unwrap();
        assert_eq!(rep.new_leaf_count, 4);
        assert_eq!(rep.refined_set, vec![ElemId(0), ElemId(1)]);
        m.check_invariants().unwrap();
    }

    #[test]
    fn refine_rejects_dead_or_unknown_elements() {
        let mut m = two_triangles();
        m.refine(&[ElemId(0)]).unwrap();
        assert_eq!(m.refine(&[ElemId(0)]), Err(MeshError::NotAlive(ElemId(0))));
        assert_eq!(m.refine(&[ElemId(99)]), Err(MeshError::UnknownElement(ElemId(99))));
    }

    #[test]
    fn hanging_node_input_is_rejected() {
        // left triangle has edge (1,0)-(1,2) split by vertex 3 on the right side
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 2.0], [1.0, 1.0], [2.0, 1.0]];
        let tris = [[0, 1, 2], [1, 4, 3], [3, 4, 2]];
        match Mesh::from_raw(&pts, &tris) {
            Err(MeshError::NonConforming(k)) => assert_eq!(k, EdgeKey::new(VertId(1), VertId(2))),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn incompatible_labeling_falls_back_to_centroid_split() {
        // three triangles whose longest edges do not pair up
        let pts = [[0.0, 0.0], [3.0, 0.0], [1.0, 1.2], [2.6, 2.0]];
        let tris = [[0, 1, 2], [1, 3, 2]];
        let m = Mesh::from_raw(&pts, &tris).unwrap();
        m.check_invariants().unwrap();
        assert!(m.num_leaves() == 2 || m.num_leaves() == 6);
        let mut m = m;
        for _ in 0..6 {
            let leaves = m.leaves();
            m.refine(&leaves[..leaves.len() / 2]).unwrap();
            m.check_invariants().unwrap();
        }
    }

    #[test]
    fn patch_sizes() {
        let m = single_triangle();
        assert_eq!(m.patch(ElemId(0)).unwrap(), vec![ElemId(0)]);
        let mut sq = criss_cross_square(4);
        sq.refine_uniform().unwrap();
        let leaves = sq.leaves();
        let mut saw_interior = false;
        let mut saw_boundary = false;
        for &t in &leaves {
            let p = sq.patch(t).unwrap();
            let nb = sq
                .element(t)
                .edges()
                .iter()
                .filter(|k| sq.is_boundary_edge(**k))
                .count();
            assert_eq!(p.len(), 4 - nb);
            saw_interior |= nb == 0;
            saw_boundary |= nb == 1;
        }
        assert!(saw_interior && saw_boundary);
    }

    #[test]
    fn uniform_refinement_scales_h() {
        let mut m = criss_cross_square(2);
        let before = m.stats();
        m.refine_uniform().unwrap();
        let after = m.stats();
        assert_eq!(after.num_leaves, 2 * before.num_leaves);
        assert!((after.h_max - before.h_max / 2f64.sqrt()).abs() < 1e-14);
        m.check_invariants().unwrap();
    }

    #[test]
    fn overlay_examples() {
        let base = two_triangles();
        assert_eq!(base.overlay(&base).unwrap().leaves(), base.leaves());
        let mut m1 = base.clone();
        m1.refine(&[ElemId(0)]).unwrap();
        let o = m1.overlay(&base).unwrap();
        assert_eq!(o.num_leaves(), m1.num_leaves());

        // single-element bisections on a boundary-labeled pair
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let base = Mesh::from_raw(&pts, &[[0, 1, 2], [1, 3, 2]]).unwrap();
        let mut a = base.clone();
        a.refine(&[ElemId(0)]).unwrap();
        let mut b = base.clone();
        b.refine(&[ElemId(1)]).unwrap();
        let o = a.overlay(&b).unwrap();
        assert!(o.num_leaves() <= a.num_leaves() + b.num_leaves() - base.num_leaves());
    }

    #[test]
    fn overlay_rejects_different_roots() {
        let a = two_triangles();
        let b = single_triangle();
        assert_eq!(a.overlay(&b).unwrap_err(), MeshError::DifferentRoots);
    }

    #[test]
    fn min_angle_of_right_isoceles() {
        let a = min_angle([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!((a - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }
}
