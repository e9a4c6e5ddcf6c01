use std::collections::HashMap;

use nalgebra::Vector3;

use super::mc_table::MC_TRIS;
use super::{EvalError, FieldGrid};
use crate::mesh::TriMesh;

/// Corner offsets in table order: x from bit 0, y bit 1, z bit 2.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Table edges as (corner a, corner b, axis); `a` is the lower endpoint.
const EDGES: [(usize, usize, usize); 12] = [
    (0, 1, 0),
    (2, 3, 0),
    (4, 5, 0),
    (6, 7, 0),
    (0, 2, 1),
    (1, 3, 1),
    (4, 6, 1),
    (5, 7, 1),
    (0, 4, 2),
    (1, 5, 2),
    (2, 6, 2),
    (3, 7, 2),
];

/// Isosurface at `iso` with values below `iso` treated as inside; triangles
/// wind counter-clockwise seen from outside. Vertices on shared lattice edges
/// are welded.
pub fn marching_cubes(grid: &FieldGrid, iso: f64) -> Result<TriMesh, EvalError> {
    let q = grid.res;
    let at = |i: usize, j: usize, k: usize| grid.values[i + q * (j + q * k)];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut welded: HashMap<(usize, usize), u32> = HashMap::new();
    for k in 0..q - 1 {
        for j in 0..q - 1 {
            for i in 0..q - 1 {
                let vs: [f64; 8] = std::array::from_fn(|c| at(i + CORNERS[c][0], j + CORNERS[c][1], k + CORNERS[c][2]) - iso);
                let config = vs.iter().enumerate().fold(0usize, |acc, (c, v)| acc | ((*v < 0.0) as usize) << c);
                if config == 0 || config == 255 {
                    continue;
                }
                let entry = MC_TRIS[config];
                let count = (entry & 0xF) as usize;
                let mut ids = [0u32; 3];
                for t in 0..count {
                    for (s, id) in ids.iter_mut().enumerate() {
                        let e = (entry >> (4 + 4 * (3 * t + s)) & 0xF) as usize;
                        let (a, b, axis) = EDGES[e];
                        let base = [i + CORNERS[a][0], j + CORNERS[a][1], k + CORNERS[a][2]];
                        let key = (base[0] + q * (base[1] + q * base[2]), axis);
                        *id = *welded.entry(key).or_insert_with(|| {
                            let t = vs[a] / (vs[a] - vs[b]);
                            let mut p = Vector3::new(base[0] as f64, base[1] as f64, base[2] as f64);
                            p[axis] += t;
                            vertices.push(p.map(|c| grid.coord_of(c)));
                            (vertices.len() - 1) as u32
                        });
                    }
                    triangles.push(ids);
                }
            }
        }
    }
    if triangles.is_empty() {
        return Err(EvalError::EmptySurface);
    }
    TriMesh::new(vertices, triangles).map_err(|_| EvalError::EmptySurface)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_grid(q: usize, r: f64) -> FieldGrid {
        FieldGrid::from_fn(q, |p| p.norm() - r)
    }

    #[test]
    fn sphere_vertices_near_radius() {
        let m = marching_cubes(&sphere_grid(64, 0.5), 0.0).unwrap();
        for v in &m.vertices {
            assert!((v.norm() - 0.5).abs() <= 0.01, "radius {}", v.norm());
        }
        assert_eq!(m.boundary_edge_count(), 0);
        assert!(m.signed_volume() > 0.0, "outward orientation");
        let expect = 4.0 / 3.0 * std::f64::consts::PI * 0.125;
        assert!((m.signed_volume() - expect).abs() / expect < 0.01);
    }

    #[test]
    fn all_positive_is_empty() {
        assert!(matches!(
            marching_cubes(&FieldGrid::from_fn(8, |_| 1.0), 0.0),
            Err(EvalError::EmptySurface)
        ));
    }

    #[test]
    fn vertices_on_sign_changing_edges() {
        let g = sphere_grid(16, 0.6);
        let m = marching_cubes(&g, 0.0).unwrap();
        let step = 2.0 / 15.0;
        for v in &m.vertices {
            let idx = v.map(|c| (c + 1.0) / step);
            let on_axis: Vec<usize> = (0..3).filter(|&a| (idx[a] - idx[a].round()).abs() > 1e-9).collect();
            assert!(on_axis.len() <= 1);
            if let Some(&a) = on_axis.first() {
                let mut lo = idx.map(|c| c.round() as usize);
                lo[a] = idx[a].floor() as usize;
                let mut hi = lo;
                hi[a] += 1;
                let val = |p: Vector3<usize>| g.values[p[0] + 16 * (p[1] + 16 * p[2])];
                assert!(val(lo) * val(hi) <= 0.0);
            }
        }
    }

    #[test]
    fn genus_one_surface_is_closed() {
        let g = FieldGrid::from_fn(48, |p| {
            let xy = (p.x * p.x + p.y * p.y).sqrt() - 0.5;
            (xy * xy + p.z * p.z).sqrt() - 0.2
        });
        let m = marching_cubes(&g, 0.0).unwrap();
        assert_eq!(m.boundary_edge_count(), 0);
        assert!(m.signed_volume() > 0.0);
    }
}
