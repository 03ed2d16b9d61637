use std::collections::BTreeMap;

use super::{Mesh, Point};

/// The reference triangle `(0,0), (1,0), (0,1)`.
pub fn single_triangle() -> Mesh {
    Mesh::from_raw(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &[[0, 1, 2]])
        .expect("reference triangle is valid")
}

/// Criss-cross triangulation of the given grid cells. Each cell `(i, j)`
/// covers `[x0 + i h, x0 + (i+1) h] x [y0 + j h, y0 + (j+1) h]` and is cut
/// into four triangles meeting at its center.
fn criss_cross_cells(origin: Point, h: f64, cells: &[(i64, i64)]) -> Mesh {
    // keys on a half-step integer lattice so centers and corners share one map
    let mut ids: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut points: Vec<Point> = Vec::new();
    let mut id_of = |k: (i64, i64), points: &mut Vec<Point>| -> usize {
        *ids.entry(k).or_insert_with(|| {
            points.push([
                origin[0] + 0.5 * h * k.0 as f64,
                origin[1] + 0.5 * h * k.1 as f64,
            ]);
            points.len() - 1
        })
    };
    let mut tris = Vec::with_capacity(4 * cells.len());
    for &(i, j) in cells {
        let c00 = id_of((2 * i, 2 * j), &mut points);
        let c10 = id_of((2 * i + 2, 2 * j), &mut points);
        let c11 = id_of((2 * i + 2, 2 * j + 2), &mut points);
        let c01 = id_of((2 * i, 2 * j + 2), &mut points);
        let m = id_of((2 * i + 1, 2 * j + 1), &mut points);
        tris.push([c00, c10, m]);
        tris.push([c10, c11, m]);
        tris.push([c11, c01, m]);
        tris.push([c01, c00, m]);
    }
    Mesh::from_raw(&points, &tris).expect("criss-cross grid is conforming")
}

/// Criss-cross mesh of the unit square with `cells x cells` grid cells.
pub fn criss_cross_square(cells: usize) -> Mesh {
    assert!(cells >= 1);
    let n = cells as i64;
    let list: Vec<(i64, i64)> = (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).collect();
    criss_cross_cells([0.0, 0.0], 1.0 / cells as f64, &list)
}

/// Criss-cross mesh of `(-1,1)^2 \ [0,1) x (-1,0]` with `cells` grid cells
/// per unit length.
pub fn criss_cross_lshape(cells: usize) -> Mesh {
    assert!(cells >= 1);
    let n = cells as i64;
    let list: Vec<(i64, i64)> = (0..2 * n)
        .flat_map(|j| (0..2 * n).map(move |i| (i, j)))
        .filter(|&(i, j)| !(i >= n && j < n))
        .collect();
    criss_cross_cells([-1.0, -1.0], 1.0 / cells as f64, &list)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_counts() {
        let m = criss_cross_square(2);
        assert_eq!(m.num_vertices(), 13);
        assert_eq!(m.num_leaves(), 16);
        let interior = m.vertices().iter().filter(|v| !v.on_boundary).count();
        assert_eq!(interior, 5);
        m.check_invariants().unwrap();
    }

    #[test]
    fn lshape_area_and_boundary() {
        let m = criss_cross_lshape(1);
        assert_eq!(m.num_leaves(), 12);
        let area: f64 = m.leaves().iter().map(|&e| m.area(e)).sum();
        assert!((area - 3.0).abs() < 1e-14);
        assert_eq!(m.num_boundary_edges(), 8);
        m.check_invariants().unwrap();
    }

    #[test]
    fn cell_sides_are_refinement_edges() {
        let m = criss_cross_square(2);
        for e in m.leaves() {
            let el = m.element(e);
            let c = m.vertex(el.vertices[2]).point();
            // the peak is a cell center, at odd half-steps
            assert_eq!((c[0] * 4.0).rem_euclid(2.0), 1.0);
        }
    }
}
