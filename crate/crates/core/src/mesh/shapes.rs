//! Procedural watertight test meshes with outward winding.

use std::collections::HashMap;

use super::{TriMesh, Vec3};

/// Axis-aligned box with 8 vertices and 12 triangles.
pub fn axis_box(lo: Vec3, hi: Vec3) -> TriMesh {
    let v = |x: usize, y: usize, z: usize| {
        Vec3::new(
            if x == 0 { lo.x } else { hi.x },
            if y == 0 { lo.y } else { hi.y },
            if z == 0 { lo.z } else { hi.z },
        )
    };
    let vertices = vec![
        v(0, 0, 0),
        v(1, 0, 0),
        v(1, 1, 0),
        v(0, 1, 0),
        v(0, 0, 1),
        v(1, 0, 1),
        v(1, 1, 1),
        v(0, 1, 1),
    ];
    let triangles = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriMesh::new(vertices, triangles).expect("box is non-degenerate")
}

/// Surface of `[-1,1]^3` with every face split into an `n x n` quad grid,
/// vertices shared along the seams.
fn subdivided_cube(n: usize) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    let mut welded: HashMap<[i64; 3], u32> = HashMap::new();
    let mut index_of = |p: Vec3, verts: &mut Vec<Vec3>| -> u32 {
        // grid coordinates are exact multiples of 2/n, so a rounded key welds seams
        let key = [p.x, p.y, p.z].map(|c| ((c + 1.0) * n as f64 * 0.5).round() as i64);
        *welded.entry(key).or_insert_with(|| {
            verts.push(p);
            (verts.len() - 1) as u32
        })
    };
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut u = Vec3::zeros();
            let mut w = Vec3::zeros();
            u[(axis + 1) % 3] = 1.0;
            w[(axis + 2) % 3] = 1.0;
            if sign < 0.0 {
                std::mem::swap(&mut u, &mut w);
            }
            let mut normal = Vec3::zeros();
            normal[axis] = sign;
            let at = |i: usize, j: usize| {
                normal + u * (-1.0 + 2.0 * i as f64 / n as f64) + w * (-1.0 + 2.0 * j as f64 / n as f64)
            };
            for i in 0..n {
                for j in 0..n {
                    let a = index_of(at(i, j), &mut verts);
                    let b = index_of(at(i + 1, j), &mut verts);
                    let c = index_of(at(i + 1, j + 1), &mut verts);
                    let d = index_of(at(i, j + 1), &mut verts);
                    tris.push([a, b, c]);
                    tris.push([a, c, d]);
                }
            }
        }
    }
    (verts, tris)
}

/// Box with inner half-size `half` and rounded edges/corners of `radius`;
/// `radius == 0` is not allowed, `half == 0` gives a sphere.
pub fn rounded_box(half: f64, radius: f64, n: usize) -> TriMesh {
    assert!(radius > 0.0 && half >= 0.0 && n >= 1);
    let (cube, tris) = subdivided_cube(n);
    let outer = half + radius;
    let vertices = cube
        .into_iter()
        .map(|p| {
            let q = p * outer;
            let core = q.map(|c| c.clamp(-half, half));
            core + (q - core).normalize() * radius
        })
        .collect();
    TriMesh::new(vertices, tris).expect("rounded box is non-degenerate")
}

/// Sphere built by projecting a subdivided cube.
pub fn sphere(radius: f64, n: usize) -> TriMesh {
    rounded_box(0.0, radius, n)
}

/// Torus around the z axis.
pub fn torus(major: f64, minor: f64, nu: usize, nv: usize) -> TriMesh {
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = std::f64::consts::TAU * i as f64 / nu as f64;
        for j in 0..nv {
            let v = std::f64::consts::TAU * j as f64 / nv as f64;
            let ring = major + minor * v.cos();
            vertices.push(Vec3::new(ring * u.cos(), ring * u.sin(), minor * v.sin()));
        }
    }
    let id = |i: usize, j: usize| ((i % nu) * nv + (j % nv)) as u32;
    let mut tris = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        }
    }
    TriMesh::new(vertices, tris).expect("torus is non-degenerate")
}
