//! Independent brute-force references for the geometry oracles.

use nalgebra::Vector3;
use ogrid_core::eval::{marching_cubes, FieldGrid};
use ogrid_core::mesh::{normalize_mesh, shapes, MeshOracle, TriMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type V = Vector3<f64>;

/// Closest point on triangle `abc` by exhaustive region tests.
fn closest_on_triangle(p: &V, a: &V, b: &V, c: &V) -> V {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Generalized winding number: sum of signed solid angles over 4 pi.
fn winding(mesh: &TriMesh, p: &V) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(t);
        let (a, b, c) = (a - p, b - p, c - p);
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(&b.cross(&c));
        let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * std::f64::consts::PI)
}

fn brute_sdf(mesh: &TriMesh, p: &V) -> f64 {
    let d = (0..mesh.triangles.len())
        .map(|t| {
            let [a, b, c] = mesh.triangle(t);
            (closest_on_triangle(p, &a, &b, &c) - p).norm()
        })
        .fold(f64::INFINITY, f64::min);
    if winding(mesh, p) > 0.5 {
        -d
    } else {
        d
    }
}

fn test_meshes() -> Vec<TriMesh> {
    vec![
        normalize_mesh(&shapes::torus(0.7, 0.3, 32, 16), 0.1).unwrap(),
        normalize_mesh(&shapes::rounded_box(0.6, 0.3, 8), 0.1).unwrap(),
        shapes::axis_box(V::new(-0.5, -0.3, -0.2), V::new(0.4, 0.6, 0.7)),
    ]
}

/// Largest |oracle - brute force| signed distance over 200 random points per mesh.
pub fn signed_distance_scan_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for mesh in test_meshes() {
        let oracle = MeshOracle::new(&mesh).unwrap();
        for _ in 0..200 {
            let p = V::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            worst = worst.max((oracle.signed_distance(&p) - brute_sdf(&mesh, &p)).abs());
        }
    }
    worst
}

/// Smallest fraction, over the test meshes, of 10k points where occupancy and distance sign agree.
pub fn occupancy_sign_agreement() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 10_000;
    test_meshes()
        .iter()
        .map(|mesh| {
            let oracle = MeshOracle::new(mesh).unwrap();
            let agree = (0..n)
                .filter(|_| {
                    let p = V::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    (oracle.occupancy(&p) == 1) == (oracle.signed_distance(&p) < 0.0)
                })
                .count();
            agree as f64 / n as f64
        })
        .fold(1.0, f64::min)
}

/// Largest relative radius error of marching cubes on a radius-0.5 sphere at Q = 64,
/// and the number of boundary edges.
pub fn marching_cubes_sphere() -> (f64, usize) {
    let grid = FieldGrid::from_fn(64, |p| p.norm() - 0.5);
    let mesh = marching_cubes(&grid, 0.0).unwrap();
    let worst = mesh.vertices.iter().map(|v| (v.norm() - 0.5).abs() / 0.5).fold(0.0, f64::max);
    (worst, mesh.boundary_edge_count())
}
