//! Plain-text mesh snapshots.
//!
//! ```text
//! goafem-mesh v1
//! vertices N
//! id x y boundary_flag
//! triangles M
//! id v0 v1 v2
//! ```
//!
//! Only leaves are written; `(v0, v1)` is the refinement edge. Coordinates
//! use the shortest representation that parses back to the same bits.

use std::fmt::Write as _;

use super::{Mesh, MeshError, Point};

pub const MESH_HEADER: &str = "goafem-mesh v1";

pub fn write_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    let leaves = mesh.leaves();
    // renumber so that only vertices used by leaves are written
    let mut map = vec![usize::MAX; mesh.num_vertices()];
    let mut used = Vec::new();
    for &e in &leaves {
        for v in mesh.element(e).vertices {
            if map[v.idx()] == usize::MAX {
                map[v.idx()] = 0;
                used.push(v.idx());
            }
        }
    }
    used.sort_unstable();
    for (new, &old) in used.iter().enumerate() {
        map[old] = new;
    }
    writeln!(out, "{MESH_HEADER}").unwrap();
    writeln!(out, "vertices {}", used.len()).unwrap();
    for (new, &old) in used.iter().enumerate() {
        let v = &mesh.vertices()[old];
        writeln!(out, "{new} {} {} {}", v.x, v.y, u8::from(v.on_boundary)).unwrap();
    }
    writeln!(out, "triangles {}", leaves.len()).unwrap();
    for (i, &e) in leaves.iter().enumerate() {
        let [a, b, c] = mesh.element(e).vertices;
        writeln!(out, "{i} {} {} {}", map[a.idx()], map[b.idx()], map[c.idx()]).unwrap();
    }
    out
}

fn err(line: usize, msg: impl std::fmt::Display) -> MeshError {
    MeshError::Format(format!("line {line}: {msg}"))
}

/// Parses a snapshot into a fresh mesh whose roots are the stored triangles,
/// labeled as written.
pub fn read_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (n, header) = lines.next().ok_or_else(|| err(1, "empty file"))?;
    if header != MESH_HEADER {
        return Err(err(n, format!("expected `{MESH_HEADER}`")));
    }
    let count = |lines: &mut dyn Iterator<Item = (usize, &str)>, key: &str| -> Result<usize, MeshError> {
        let (n, l) = lines.next().ok_or_else(|| err(0, format!("missing `{key}`")))?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(err(n, format!("expected `{key} <count>`")));
        }
        it.next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(n, "bad count"))
    };
    let nv = count(&mut lines, "vertices")?;
    let mut points: Vec<Point> = Vec::with_capacity(nv);
    for expect in 0..nv {
        let (n, l) = lines.next().ok_or_else(|| err(0, "truncated vertex list"))?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 4 || f[0].parse::<usize>().ok() != Some(expect) {
            return Err(err(n, "expected `id x y boundary_flag`"));
        }
        let x: f64 = f[1].parse().map_err(|e| err(n, e))?;
        let y: f64 = f[2].parse().map_err(|e| err(n, e))?;
        if !matches!(f[3], "0" | "1") {
            return Err(err(n, "boundary flag must be 0 or 1"));
        }
        points.push([x, y]);
    }
    let nt = count(&mut lines, "triangles")?;
    let mut tris = Vec::with_capacity(nt);
    for expect in 0..nt {
        let (n, l) = lines.next().ok_or_else(|| err(0, "truncated triangle list"))?;
        let f: Vec<usize> = l
            .split_whitespace()
            .map(|s| s.parse().map_err(|e| err(n, e)))
            .collect::<Result<_, _>>()?;
        if f.len() != 4 || f[0] != expect {
            return Err(err(n, "expected `id v0 v1 v2`"));
        }
        tris.push([f[1], f[2], f[3]]);
    }
    if let Some((n, _)) = lines.next() {
        return Err(err(n, "trailing content"));
    }
    Mesh::from_labeled(&points, &tris)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::criss_cross_lshape;

    #[test]
    fn round_trip_is_exact() {
        let mut m = criss_cross_lshape(1);
        let leaves = m.leaves();
        m.refine(&leaves[..3]).unwrap();
        let text = write_mesh(&m);
        let back = read_mesh(&text).unwrap();
        assert_eq!(write_mesh(&back), text);
        assert_eq!(back.num_leaves(), m.num_leaves());
    }

    #[test]
    fn decimal_coordinates_survive() {
        let text = "goafem-mesh v1\nvertices 3\n0 0.1 0.2 1\n1 0.30000000000000004 0.2 1\n2 0.1 0.7 1\ntriangles 1\n0 1 2 0\n";
        let m = read_mesh(text).unwrap();
        assert_eq!(m.vertices()[1].x, 0.30000000000000004);
        assert_eq!(write_mesh(&m), text);
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(matches!(read_mesh("mesh\n"), Err(MeshError::Format(_))));
    }
}
