//! Quadrature rules on the unit interval and on triangles.
//!
//! Triangle rules are collapsed (Duffy) tensor products of Gauss-Legendre
//! rules. They have positive weights and are exact for polynomials of the
//! requested total degree. Points are stored in barycentric coordinates and
//! weights are normalized to sum to one, so `sum w_q f(x_q) * area` integrates
//! `f` over any affine triangle.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "at least one quadrature point");
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss rule on `[0, 1]` with weights summing to one.
#[derive(Debug, Clone)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineRule {
    /// Rule exact for polynomials of degree `degree`.
    pub fn with_degree(degree: usize) -> Self {
        let m = degree / 2 + 1;
        let (x, w) = gauss_legendre(m);
        LineRule {
            points: x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
            weights: w.iter().map(|w| 0.5 * w).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Quadrature on a triangle, barycentric points, weights summing to one.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed Gauss rule exact for polynomials of total degree `degree`.
    pub fn with_degree(degree: usize) -> Self {
        // the collapsed direction carries an extra linear factor
        let m = (degree + 2).div_ceil(2).max(1);
        let (x, w) = gauss_legendre(m);
        let mut points = Vec::with_capacity(m * m);
        let mut weights = Vec::with_capacity(m * m);
        for i in 0..m {
            let u = 0.5 * (x[i] + 1.0);
            let wu = 0.5 * w[i];
            for j in 0..m {
                let v = 0.5 * (x[j] + 1.0);
                let wv = 0.5 * w[j];
                let xi = u;
                let eta = v * (1.0 - u);
                points.push([1.0 - xi - eta, xi, eta]);
                // reference area 1/2 -> normalized weights
                weights.push(2.0 * wu * wv * (1.0 - u));
            }
        }
        TriangleRule {
            degree,
            points,
            weights,
        }
    }

    /// Shared instance for a given degree (degrees up to 24 are cached).
    pub fn cached(degree: usize) -> &'static TriangleRule {
        static CACHE: OnceLock<Vec<TriangleRule>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| (0..=24).map(TriangleRule::with_degree).collect());
        &cache[degree.min(24)]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Fifteen barycentric sample points per element used for sampled maxima.
pub fn sample_points_15() -> &'static [[f64; 3]; 15] {
    static PTS: OnceLock<[[f64; 3]; 15]> = OnceLock::new();
    PTS.get_or_init(|| {
        // the 15 nodes of the degree-4 Lagrange lattice
        let mut out = [[0.0; 3]; 15];
        let mut k = 0;
        for i in 0..=4 {
            for j in 0..=(4 - i) {
                let a = i as f64 / 4.0;
                let b = j as f64 / 4.0;
                out[k] = [1.0 - a - b, a, b];
                k += 1;
            }
        }
        out
    })
}
