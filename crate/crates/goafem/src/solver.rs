//! Sparse matrices and tolerance-controlled linear solvers.
//!
//! All reductions run in a fixed order, so a solve is bitwise reproducible
//! regardless of the thread pool size.

use std::collections::VecDeque;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Compressed sparse row matrix with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries in insertion order.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut col = Vec::with_capacity(triplets.len() / 4);
        let mut val = Vec::with_capacity(triplets.len() / 4);
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            if last == Some((i, j)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(j);
                val.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, col, val }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut t = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col[r.clone()], &self.val[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        y.par_iter_mut().with_min_len(256).enumerate().for_each(|(i, yi)| {
            let (c, v) = self.row(i);
            let mut s = 0.0;
            for (&j, &a) in c.iter().zip(v) {
                s += a * x[j];
            }
            *yi = s;
        });
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                t.push((j, i, a));
            }
        }
        CsrMatrix::from_triplets(self.n, t)
    }

    /// Largest `|A_ij - A_ji|` over the union of both patterns.
    pub fn max_asymmetry(&self) -> f64 {
        self.max_abs_diff(&self.transpose())
    }

    /// Largest entrywise difference; both must have the same size.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (c1, v1) = self.row(i);
            let (c2, v2) = other.row(i);
            let (mut a, mut b) = (0, 0);
            while a < c1.len() || b < c2.len() {
                let ja = c1.get(a).copied().unwrap_or(usize::MAX);
                let jb = c2.get(b).copied().unwrap_or(usize::MAX);
                let d = if ja == jb {
                    a += 1;
                    b += 1;
                    v1[a - 1] - v2[b - 1]
                } else if ja < jb {
                    a += 1;
                    v1[a - 1]
                } else {
                    b += 1;
                    v2[b - 1]
                };
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.val.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.max_asymmetry() <= rel_tol * self.max_abs()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j] = a;
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    /// Conjugate gradients when symmetric, otherwise BiCGSTAB.
    #[default]
    Auto,
    Cg,
    Bicgstab,
    Direct,
}

impl fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolverMethod::Auto => "auto",
            SolverMethod::Cg => "cg",
            SolverMethod::Bicgstab => "bicgstab",
            SolverMethod::Direct => "direct",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Relative residual target `||Mx - b|| <= tol ||b||`.
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolverMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 20_000,
            method: SolverMethod::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual recomputed from the returned vector.
    pub final_residual_norm: f64,
    pub converged: bool,
    pub method_name: String,
}

/// Direct elimination is allowed up to this many unknowns.
pub const DIRECT_LIMIT: usize = 20_000;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // fixed-size chunks keep the summation order independent of threads
    a.par_chunks(4096)
        .zip(b.par_chunks(4096))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(m: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = m.mul(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    r
}

/// Relative residual `||Mx - b|| / ||b||` (absolute if `b = 0`).
pub fn relative_residual(m: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let nb = norm(b);
    let nr = norm(&residual(m, x, b));
    if nb > 0.0 {
        nr / nb
    } else {
        nr
    }
}

/// Incomplete LU factorization with the sparsity pattern of the matrix.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(m: &CsrMatrix) -> Option<Ilu0> {
        let mut lu = m.clone();
        let n = lu.n;
        let mut diag_pos = vec![usize::MAX; n];
        for (i, dp) in diag_pos.iter_mut().enumerate() {
            let (c, _) = lu.row(i);
            *dp = lu.row_ptr[i] + c.binary_search(&i).ok()?;
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                pos[lu.col[k]] = k;
            }
            for kk in start..end {
                let k = lu.col[kk];
                if k >= i {
                    break;
                }
                let pivot = lu.val[diag_pos[k]];
                let lik = lu.val[kk] / pivot;
                lu.val[kk] = lik;
                for jj in (diag_pos[k] + 1)..lu.row_ptr[k + 1] {
                    let j = lu.col[jj];
                    let p = pos[j];
                    if p != usize::MAX {
                        lu.val[p] -= lik * lu.val[jj];
                    }
                }
            }
            for k in start..end {
                pos[lu.col[k]] = usize::MAX;
            }
            let d = lu.val[diag_pos[i]];
            if !d.is_finite() || d.abs() < 1e-300 {
                return None;
            }
        }
        Some(Ilu0 { lu, diag_pos })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.lu.n;
        for i in 0..n {
            let mut s = r[i];
            for k in self.lu.row_ptr[i]..self.diag_pos[i] {
                s -= self.lu.val[k] * z[self.lu.col[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (self.diag_pos[i] + 1)..self.lu.row_ptr[i + 1] {
                s -= self.lu.val[k] * z[self.lu.col[k]];
            }
            z[i] = s / self.lu.val[self.diag_pos[i]];
        }
    }
}

enum Precond {
    Ilu(Ilu0),
    Jacobi(Vec<f64>),
}

impl Precond {
    fn new(m: &CsrMatrix) -> Precond {
        match Ilu0::new(m) {
            Some(ilu) => Precond::Ilu(ilu),
            None => Precond::Jacobi(
                m.diagonal()
                    .into_iter()
                    .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
                    .collect(),
            ),
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Ilu(ilu) => ilu.apply(r, z),
            Precond::Jacobi(d) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(d) {
                    *zi = ri * di;
                }
            }
        }
    }
}

/// Preconditioned conjugate gradients; returns iterations used.
fn pcg(m: &CsrMatrix, b: &[f64], x: &mut [f64], pc: &Precond, target: f64, max_iter: usize) -> usize {
    let n = m.n;
    let mut r = residual(m, x, b);
    let mut z = vec![0.0; n];
    pc.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 0..max_iter {
        if norm(&r) <= target {
            return it;
        }
        m.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 || !pq.is_finite() {
            return it;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        pc.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    max_iter
}

/// Right-preconditioned BiCGSTAB; returns iterations used.
fn bicgstab(m: &CsrMatrix, b: &[f64], x: &mut [f64], pc: &Precond, target: f64, max_iter: usize) -> usize {
    let n = m.n;
    let mut r = residual(m, x, b);
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..max_iter {
        if norm(&r) <= target {
            return it;
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return it;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pc.apply(&p, &mut y);
        m.matvec(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            return it;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= target {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            r.copy_from_slice(&s);
            return it + 1;
        }
        pc.apply(&s, &mut z);
        m.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 || !tt.is_finite() {
            return it;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if omega == 0.0 {
            return it + 1;
        }
    }
    max_iter
}

/// Reverse Cuthill-McKee ordering of the symmetrized pattern.
pub fn reverse_cuthill_mckee(m: &CsrMatrix) -> Vec<usize> {
    let n = m.n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &j in m.row(i).0 {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_last = |start: usize, visited: &[bool]| -> usize {
        // farthest node from start, smallest degree among the last level
        let mut dist = vec![usize::MAX; n];
        let mut q = VecDeque::from([start]);
        dist[start] = 0;
        let mut last = start;
        while let Some(u) = q.pop_front() {
            if dist[u] > dist[last] || (dist[u] == dist[last] && degree[u] < degree[last]) {
                last = u;
            }
            for &w in &adj[u] {
                if !visited[w] && dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    q.push_back(w);
                }
            }
        }
        last
    };
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        let start = bfs_last(bfs_last(seed, &visited), &visited);
        visited[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(u) = q.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = adj[u].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Banded LU without pivoting after RCM reordering. `None` on a zero pivot.
pub fn banded_direct_solve(m: &CsrMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = m.n;
    if n == 0 {
        return Some(Vec::new());
    }
    let perm = reverse_cuthill_mckee(m);
    let mut inv = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let mut bw = 0;
    for i in 0..n {
        for &j in m.row(i).0 {
            bw = bw.max(inv[i].abs_diff(inv[j]));
        }
    }
    let width = 2 * bw + 1;
    // band[i][j - i + bw] holds entry (i, j) of the permuted matrix
    let mut band = vec![0.0; n * width];
    for i in 0..n {
        let (c, v) = m.row(i);
        for (&j, &a) in c.iter().zip(v) {
            band[inv[i] * width + inv[j] + bw - inv[i]] += a;
        }
    }
    let mut rhs: Vec<f64> = perm.iter().map(|&old| b[old]).collect();
    let scale = m.max_abs();
    for k in 0..n {
        let pivot = band[k * width + bw];
        if !pivot.is_finite() || pivot.abs() <= 1e-14 * scale {
            return None;
        }
        let iend = (k + bw + 1).min(n);
        for i in (k + 1)..iend {
            let l = band[i * width + k + bw - i] / pivot;
            if l == 0.0 {
                continue;
            }
            band[i * width + k + bw - i] = l;
            for j in (k + 1)..iend {
                band[i * width + j + bw - i] -= l * band[k * width + j + bw - k];
            }
            rhs[i] -= l * rhs[k];
        }
    }
    for k in (0..n).rev() {
        let jend = (k + bw + 1).min(n);
        let mut s = rhs[k];
        for j in (k + 1)..jend {
            s -= band[k * width + j + bw - k] * rhs[j];
        }
        rhs[k] = s / band[k * width + bw];
    }
    let mut x = vec![0.0; n];
    for (new, &old) in perm.iter().enumerate() {
        x[old] = rhs[new];
    }
    Some(x)
}

/// Solves `Mx = b` to the configured relative tolerance.
///
/// `guess` seeds the Krylov iteration. A nonconvergent Krylov run falls back
/// to banded elimination when the system is small enough.
pub fn solve(m: &CsrMatrix, b: &[f64], cfg: &SolverConfig, guess: Option<&[f64]>) -> (Vec<f64>, SolveReport) {
    let n = m.n;
    assert_eq!(b.len(), n);
    let nb = norm(b);
    if nb == 0.0 {
        return (
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                final_residual_norm: 0.0,
                converged: true,
                method_name: cfg.method.to_string(),
            },
        );
    }
    let report = |x: &[f64], iterations: usize, name: &str| {
        let res = relative_residual(m, x, b);
        SolveReport {
            iterations,
            final_residual_norm: res,
            converged: res <= cfg.tol,
            method_name: name.to_string(),
        }
    };
    if cfg.method == SolverMethod::Direct {
        return match banded_direct_solve(m, b) {
            Some(x) => {
                let r = report(&x, 1, "direct");
                (x, r)
            }
            None => {
                let x = vec![0.0; n];
                let mut r = report(&x, 0, "direct");
                r.converged = false;
                (x, r)
            }
        };
    }
    let symmetric = match cfg.method {
        SolverMethod::Cg => true,
        SolverMethod::Bicgstab => false,
        _ => m.is_symmetric(1e-14),
    };
    let name = if symmetric { "cg" } else { "bicgstab" };
    let pc = Precond::new(m);
    let mut x = match guess {
        Some(g) if g.len() == n && g.iter().all(|v| v.is_finite()) => g.to_vec(),
        _ => vec![0.0; n],
    };
    let mut used = 0;
    // restart until the recomputed residual meets the target
    for _ in 0..8 {
        if used >= cfg.max_iter {
            break;
        }
        let target = 0.5 * cfg.tol * nb;
        let budget = cfg.max_iter - used;
        let it = if symmetric {
            pcg(m, b, &mut x, &pc, target, budget)
        } else {
            bicgstab(m, b, &mut x, &pc, target, budget)
        };
        used += it;
        if relative_residual(m, &x, b) <= cfg.tol {
            let r = report(&x, used, name);
            return (x, r);
        }
        if it == 0 {
            break;
        }
    }
    if n <= DIRECT_LIMIT {
        if let Some(xd) = banded_direct_solve(m, b) {
            let r = report(&xd, used + 1, &format!("{name}+direct"));
            if r.converged {
                return (xd, r);
            }
        }
    }
    let r = report(&x, used, name);
    (x, r)
}
