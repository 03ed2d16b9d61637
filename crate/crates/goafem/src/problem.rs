//! Coefficient data, goal densities and manufactured test problems.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jet::Jet;
use crate::mesh::{criss_cross_lshape, criss_cross_square, ElemId, Mesh};
use crate::quadrature::{gauss_legendre, TriangleRule};

/// Twice-differentiable scalar function of `(x, y)`.
pub type JetFn = Arc<dyn Fn(Jet, Jet) -> Jet + Send + Sync>;
/// Value-only scalar function of `(x, y)`.
pub type PointFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    /// Value with first and second derivatives.
    Analytic(JetFn),
    /// Value only; cannot appear where derivatives are needed.
    Pointwise(PointFn),
    /// `value` on the rectangle, zero elsewhere.
    Indicator { rect: Rect, value: f64 },
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Analytic(_) => write!(f, "Analytic"),
            ScalarField::Pointwise(_) => write!(f, "Pointwise"),
            ScalarField::Indicator { rect, value } => write!(f, "Indicator({rect:?}, {value})"),
        }
    }
}

impl ScalarField {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Analytic(fun) => {
                let (jx, jy) = Jet::coords(x, y);
                fun(jx, jy).v
            }
            ScalarField::Pointwise(fun) => fun(x, y),
            ScalarField::Indicator { rect, value } => {
                if rect.contains(x, y) {
                    *value
                } else {
                    0.0
                }
            }
        }
    }

    pub fn jet(&self, x: f64, y: f64) -> Option<Jet> {
        match self {
            ScalarField::Constant(c) => Some(Jet::constant(*c)),
            ScalarField::Analytic(fun) => {
                let (jx, jy) = Jet::coords(x, y);
                Some(fun(jx, jy))
            }
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ScalarField::Constant(_))
    }
}

#[derive(Clone)]
pub enum VectorField {
    Constant([f64; 2]),
    Analytic([JetFn; 2]),
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorField::Constant(b) => write!(f, "Constant({b:?})"),
            VectorField::Analytic(_) => write!(f, "Analytic"),
        }
    }
}

impl VectorField {
    pub fn value(&self, x: f64, y: f64) -> [f64; 2] {
        match self {
            VectorField::Constant(b) => *b,
            VectorField::Analytic([b0, b1]) => {
                let (jx, jy) = Jet::coords(x, y);
                [b0(jx, jy).v, b1(jx, jy).v]
            }
        }
    }

    pub fn divergence(&self, x: f64, y: f64) -> f64 {
        match self {
            VectorField::Constant(_) => 0.0,
            VectorField::Analytic([b0, b1]) => {
                let (jx, jy) = Jet::coords(x, y);
                b0(jx, jy).g[0] + b1(jx, jy).g[1]
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, VectorField::Constant(_))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, VectorField::Constant([0.0, 0.0]))
    }

    fn negated(&self) -> VectorField {
        match self {
            VectorField::Constant([a, b]) => VectorField::Constant([-a, -b]),
            VectorField::Analytic([b0, b1]) => {
                let (b0, b1) = (b0.clone(), b1.clone());
                VectorField::Analytic([
                    Arc::new(move |x, y| -b0(x, y)),
                    Arc::new(move |x, y| -b1(x, y)),
                ])
            }
        }
    }
}

/// Symmetric 2x2 matrix field.
#[derive(Clone)]
pub enum MatrixField {
    Constant([[f64; 2]; 2]),
    /// Entries `a11, a12, a22`.
    Analytic([JetFn; 3]),
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixField::Constant(a) => write!(f, "Constant({a:?})"),
            MatrixField::Analytic(_) => write!(f, "Analytic"),
        }
    }
}

impl MatrixField {
    pub fn identity() -> Self {
        MatrixField::Constant([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn value(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        match self {
            MatrixField::Constant(a) => *a,
            MatrixField::Analytic([a11, a12, a22]) => {
                let (jx, jy) = Jet::coords(x, y);
                let (p, q, r) = (a11(jx, jy).v, a12(jx, jy).v, a22(jx, jy).v);
                [[p, q], [q, r]]
            }
        }
    }

    /// Row divergence `(div A)_j = sum_i d_i A_ij`.
    pub fn divergence(&self, x: f64, y: f64) -> [f64; 2] {
        match self {
            MatrixField::Constant(_) => [0.0, 0.0],
            MatrixField::Analytic([a11, a12, a22]) => {
                let (jx, jy) = Jet::coords(x, y);
                let (p, q, r) = (a11(jx, jy), a12(jx, jy), a22(jx, jy));
                [p.g[0] + q.g[1], q.g[0] + r.g[1]]
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MatrixField::Constant(_))
    }
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn sym_eigenvalues(a: [[f64; 2]; 2]) -> (f64, f64) {
    let m = 0.5 * (a[0][0] + a[1][1]);
    let d = (0.25 * (a[0][0] - a[1][1]).powi(2) + a[0][1] * a[0][1]).sqrt();
    (m - d, m + d)
}

/// `(A, b, c, f)` together with the goal density.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub a: MatrixField,
    pub b: VectorField,
    pub c: ScalarField,
    pub f: ScalarField,
    pub goal: ScalarField,
}

impl ProblemData {
    /// Adjoint data: convection reversed, goal density as the forcing.
    pub fn dual(&self) -> ProblemData {
        ProblemData {
            a: self.a.clone(),
            b: self.b.negated(),
            c: self.c.clone(),
            f: self.goal.clone(),
            goal: self.f.clone(),
        }
    }
}

pub fn dual_data(d: &ProblemData) -> ProblemData {
    d.dual()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    /// `(0, 1)^2`
    UnitSquare,
    /// `(-1, 1)^2 \ [0, 1) x (-1, 0]`
    LShape,
}

impl Domain {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Domain::UnitSquare => (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y),
            Domain::LShape => {
                (-1.0..=1.0).contains(&x) && (-1.0..=1.0).contains(&y) && !(x > 0.0 && y < 0.0)
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Domain::UnitSquare => 1.0,
            Domain::LShape => 3.0,
        }
    }

    /// Criss-cross initial mesh with `cells` grid cells per unit length.
    pub fn initial_mesh(&self, cells: usize) -> Mesh {
        match self {
            Domain::UnitSquare => criss_cross_square(cells),
            Domain::LShape => criss_cross_lshape(cells),
        }
    }

    /// Roughly `n` interior points on a uniform lattice.
    pub fn sample_points(&self, n: usize) -> Vec<[f64; 2]> {
        let (lo, hi) = match self {
            Domain::UnitSquare => (0.0, 1.0),
            Domain::LShape => (-1.0, 1.0),
        };
        let fill = self.area() / (hi - lo) / (hi - lo);
        let k = ((n.max(1) as f64 / fill).sqrt().ceil() as usize).max(1);
        let step = (hi - lo) / k as f64;
        let mut out = Vec::with_capacity(k * k);
        for j in 0..k {
            for i in 0..k {
                let x = lo + (i as f64 + 0.5) * step;
                let y = lo + (j as f64 + 0.5) * step;
                if self.contains(x, y) {
                    out.push([x, y]);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    pub mu0: f64,
    pub mu1: f64,
    pub div_b_max: f64,
    pub c_min: f64,
    pub b_max: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("diffusion is not positive definite at ({x}, {y}): smallest eigenvalue {lambda}")]
    NotPositiveDefinite { x: f64, y: f64, lambda: f64 },
    #[error("reaction coefficient is negative at ({x}, {y}): c = {c}")]
    NegativeReaction { x: f64, y: f64, c: f64 },
    #[error("convection is not divergence-free at ({x}, {y}): div b = {div}")]
    Divergence { x: f64, y: f64, div: f64 },
    #[error("non-finite coefficient at ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("unknown problem `{0}`")]
    Unknown(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

pub const DIVERGENCE_TOLERANCE: f64 = 1e-10;

/// Samples the coefficients and checks ellipticity, sign of `c` and `div b = 0`.
pub fn validate(d: &ProblemData, domain: Domain, n_samples: usize) -> Result<ValidationReport, ProblemError> {
    let mut r = ValidationReport {
        mu0: f64::INFINITY,
        mu1: 0.0,
        div_b_max: 0.0,
        c_min: f64::INFINITY,
        b_max: 0.0,
    };
    for [x, y] in domain.sample_points(n_samples) {
        let a = d.a.value(x, y);
        let b = d.b.value(x, y);
        let c = d.c.value(x, y);
        let div = d.b.divergence(x, y);
        let all = [a[0][0], a[0][1], a[1][0], a[1][1], b[0], b[1], c, div];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite { x, y });
        }
        let (lo, hi) = sym_eigenvalues(a);
        if lo <= 0.0 {
            return Err(ProblemError::NotPositiveDefinite { x, y, lambda: lo });
        }
        if c < 0.0 {
            return Err(ProblemError::NegativeReaction { x, y, c });
        }
        if div.abs() > DIVERGENCE_TOLERANCE {
            return Err(ProblemError::Divergence { x, y, div });
        }
        r.mu0 = r.mu0.min(lo);
        r.mu1 = r.mu1.max(hi);
        r.div_b_max = r.div_b_max.max(div.abs());
        r.c_min = r.c_min.min(c);
        r.b_max = r.b_max.max(b[0].hypot(b[1]));
    }
    Ok(r)
}

/// Forcing `-div(A grad u) + b . grad u + c u` of a smooth `u`.
pub fn primal_forcing(a: &MatrixField, b: &VectorField, c: &ScalarField, u: &JetFn) -> PointFn {
    strong_operator(a.clone(), b.clone(), c.clone(), u.clone())
}

fn strong_operator(a: MatrixField, b: VectorField, c: ScalarField, u: JetFn) -> PointFn {
    Arc::new(move |x, y| {
        let (jx, jy) = Jet::coords(x, y);
        let uj = u(jx, jy);
        let am = a.value(x, y);
        let da = a.divergence(x, y);
        let diff = (0..2)
            .map(|i| (0..2).map(|j| am[i][j] * uj.h[i][j]).sum::<f64>())
            .sum::<f64>()
            + da[0] * uj.g[0]
            + da[1] * uj.g[1];
        let bv = b.value(x, y);
        -diff + bv[0] * uj.g[0] + bv[1] * uj.g[1] + c.value(x, y) * uj.v
    })
}

/// Named problem parameters; unset fields take the problem's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    /// Convection components.
    pub bx: Option<f64>,
    pub by: Option<f64>,
    /// Reaction coefficient.
    pub c: Option<f64>,
    /// Layer width of `square-convect`.
    pub eps: Option<f64>,
    /// Goal region of `lshape-goal`.
    pub omega: Option<Rect>,
    /// Initial grid cells per unit length.
    pub cells: Option<usize>,
}

#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: String,
    pub domain: Domain,
    pub initial_cells: usize,
    pub data: ProblemData,
    pub exact_u: Option<JetFn>,
    pub exact_z: Option<JetFn>,
    /// `g(u)` for the exact `u`.
    pub exact_goal: Option<f64>,
}

impl fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("data", &self.data)
            .field("exact_u", &self.exact_u.is_some())
            .field("exact_z", &self.exact_z.is_some())
            .field("exact_goal", &self.exact_goal)
            .finish()
    }
}

impl ManufacturedCase {
    pub fn initial_mesh(&self) -> Mesh {
        self.domain.initial_mesh(self.initial_cells)
    }
}

pub const PROBLEM_NAMES: [&str; 4] = ["square-smooth", "square-convect", "lshape-corner", "lshape-goal"];

pub const DEFAULT_OMEGA: Rect = Rect {
    x0: -0.75,
    x1: -0.25,
    y0: 0.25,
    y1: 0.75,
};

fn corner_singularity() -> JetFn {
    Arc::new(|x: Jet, y: Jet| {
        let r = (x * x + y * y).sqrt();
        let theta = Jet::angle(y, x);
        r.powf(2.0 / 3.0) * (theta * (2.0 / 3.0)).sin() * (1.0 - x * x) * (1.0 - y * y)
    })
}

pub fn manufactured(name: &str) -> Result<ManufacturedCase, ProblemError> {
    manufactured_with(name, &ProblemParams::default())
}

pub fn manufactured_with(name: &str, p: &ProblemParams) -> Result<ManufacturedCase, ProblemError> {
    let b = VectorField::Constant([p.bx.unwrap_or(1.0), p.by.unwrap_or(1.0)]);
    let c_val = p.c.unwrap_or(1.0);
    if c_val < 0.0 || !c_val.is_finite() {
        return Err(ProblemError::Parameter(format!("c = {c_val} must be finite and >= 0")));
    }
    if let Some(cells) = p.cells {
        if cells == 0 || cells > 64 {
            return Err(ProblemError::Parameter(format!("cells = {cells} must be in 1..=64")));
        }
    }
    let c = ScalarField::Constant(c_val);
    let a = MatrixField::identity();
    let (domain, u, z, default_cells): (Domain, JetFn, Option<JetFn>, usize) = match name {
        "square-smooth" => (
            Domain::UnitSquare,
            Arc::new(|x: Jet, y: Jet| (x * PI).sin() * (y * PI).sin()),
            Some(Arc::new(|x: Jet, y: Jet| x * (1.0 - x) * y * (1.0 - y))),
            2,
        ),
        "square-convect" => {
            let eps = p.eps.unwrap_or(0.25);
            if eps <= 0.0 || !eps.is_finite() {
                return Err(ProblemError::Parameter(format!("eps = {eps} must be > 0")));
            }
            // layers at the outflow (x = 1, y = 1) for u and at the inflow for z
            let u: JetFn = Arc::new(move |x: Jet, y: Jet| {
                let lx = 1.0 - ((x - 1.0) * (1.0 / eps)).exp();
                let ly = 1.0 - ((y - 1.0) * (1.0 / eps)).exp();
                x * y * lx * ly
            });
            let z: JetFn = Arc::new(move |x: Jet, y: Jet| {
                let lx = 1.0 - (x * (-1.0 / eps)).exp();
                let ly = 1.0 - (y * (-1.0 / eps)).exp();
                (1.0 - x) * (1.0 - y) * lx * ly
            });
            (Domain::UnitSquare, u, Some(z), 2)
        }
        "lshape-corner" => (
            Domain::LShape,
            corner_singularity(),
            Some(Arc::new(|x: Jet, y: Jet| x * y * (1.0 - x * x) * (1.0 - y * y))),
            1,
        ),
        "lshape-goal" => (Domain::LShape, corner_singularity(), None, 1),
        other => return Err(ProblemError::Unknown(other.to_string())),
    };
    let f = ScalarField::Pointwise(primal_forcing(&a, &b, &c, &u));
    let goal = match &z {
        Some(z) => ScalarField::Pointwise(strong_operator(a.clone(), b.negated(), c.clone(), z.clone())),
        None => {
            let rect = p.omega.unwrap_or(DEFAULT_OMEGA);
            if !(rect.x1 > rect.x0 && rect.y1 > rect.y0) {
                return Err(ProblemError::Parameter("goal region is empty".into()));
            }
            if !(domain.contains(rect.x0, rect.y0)
                && domain.contains(rect.x1, rect.y1)
                && domain.contains(rect.x0, rect.y1)
                && domain.contains(rect.x1, rect.y0))
            {
                return Err(ProblemError::Parameter("goal region leaves the domain".into()));
            }
            ScalarField::Indicator {
                rect,
                value: 1.0 / rect.area(),
            }
        }
    };
    let data = ProblemData { a, b, c, f, goal };
    let exact_goal = Some(match &data.goal {
        ScalarField::Indicator { rect, value } => value * integrate_on_rect(&u, *rect),
        g => integrate_product(domain, g, &u),
    });
    Ok(ManufacturedCase {
        name: name.to_string(),
        domain,
        initial_cells: p.cells.unwrap_or(default_cells),
        data,
        exact_u: Some(u),
        exact_z: z,
        exact_goal,
    })
}

fn integrate_on_rect(u: &JetFn, r: Rect) -> f64 {
    let (x, w) = gauss_legendre(24);
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let px = r.x0 + 0.5 * (xi + 1.0) * (r.x1 - r.x0);
        for (yj, wj) in x.iter().zip(&w) {
            let py = r.y0 + 0.5 * (yj + 1.0) * (r.y1 - r.y0);
            let (jx, jy) = Jet::coords(px, py);
            s += wi * wj * u(jx, jy).v;
        }
    }
    s * 0.25 * r.area()
}

/// `∫ g u` on a mesh graded toward the re-entrant corner (L-shape) or a
/// uniform mesh (square), with a high-degree rule on every element.
fn integrate_product(domain: Domain, g: &ScalarField, u: &JetFn) -> f64 {
    let mut mesh = domain.initial_mesh(8);
    if domain == Domain::LShape {
        for _ in 0..40 {
            let at_corner: Vec<ElemId> = mesh
                .leaves()
                .into_iter()
                .filter(|&e| mesh.points(e).iter().any(|p| p[0] == 0.0 && p[1] == 0.0))
                .collect();
            mesh.refine(&at_corner).expect("corner refinement");
        }
    }
    let rule = TriangleRule::cached(20);
    let mut total = 0.0;
    for e in mesh.leaves() {
        let [p0, p1, p2] = mesh.points(e);
        let area = mesh.area(e);
        let mut s = 0.0;
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let x = l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0];
            let y = l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1];
            let (jx, jy) = Jet::coords(x, y);
            s += w * g.value(x, y) * u(jx, jy).v;
        }
        total += s * area;
    }
    total
}
