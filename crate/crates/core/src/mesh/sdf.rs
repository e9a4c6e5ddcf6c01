//! Exact signed distance (angle-weighted pseudonormal sign) and ray-parity occupancy.

use std::collections::HashMap;

use super::bvh::{Bvh, Feature, RayHit};
use super::{MeshError, TriMesh, Vec3};

/// Fixed, axis-skewed ray direction for parity tests.
const RAY_DIR: [f64; 3] = [0.538_516_480_713_450_4, 0.331_662_479_035_539_96, 0.774_596_669_241_483_4];
const MAX_JITTER: usize = 16;

/// Precomputed acceleration and pseudonormals for repeated oracle queries.
#[derive(Debug, Clone)]
pub struct MeshOracle {
    mesh: TriMesh,
    bvh: Bvh,
    face_normals: Vec<Vec3>,
    vertex_normals: Vec<Vec3>,
    edge_normals: HashMap<(u32, u32), Vec3>,
    watertight: bool,
}

impl MeshOracle {
    pub fn new(mesh: &TriMesh) -> Result<Self, MeshError> {
        if mesh.triangles.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        let face_normals: Vec<Vec3> = (0..mesh.triangles.len()).map(|t| mesh.face_normal(t)).collect();
        let mut vertex_normals = vec![Vec3::zeros(); mesh.vertices.len()];
        let mut edge_normals: HashMap<(u32, u32), Vec3> = HashMap::new();
        let mut edge_uses: HashMap<(u32, u32), u32> = HashMap::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let p = mesh.triangle(t);
            for i in 0..3 {
                let e1 = (p[(i + 1) % 3] - p[i]).normalize();
                let e2 = (p[(i + 2) % 3] - p[i]).normalize();
                let angle = e1.dot(&e2).clamp(-1.0, 1.0).acos();
                vertex_normals[tri[i] as usize] += face_normals[t] * angle;
                let (a, b) = (tri[i], tri[(i + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *edge_normals.entry(key).or_insert_with(Vec3::zeros) += face_normals[t];
                *edge_uses.entry(key).or_default() += 1;
            }
        }
        let watertight = edge_uses.values().all(|&c| c == 2);
        if !watertight {
            log::warn!("mesh is not watertight; inside/outside queries may be unreliable");
        }
        Ok(Self {
            mesh: mesh.clone(),
            bvh: Bvh::build(mesh),
            face_normals,
            vertex_normals,
            edge_normals,
            watertight,
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    /// Unsigned distance plus the closest point and triangle.
    pub fn closest_point(&self, p: &Vec3) -> (f64, Vec3, usize) {
        let c = self.bvh.closest(&self.mesh, p);
        (c.dist_sq.sqrt(), c.point, c.triangle as usize)
    }

    /// Signed distance, negative inside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let c = self.bvh.closest(&self.mesh, p);
        let dist = c.dist_sq.sqrt();
        if dist == 0.0 {
            return 0.0;
        }
        let tri = self.mesh.triangles[c.triangle as usize];
        let pseudo = match c.feature {
            Feature::Face => self.face_normals[c.triangle as usize],
            Feature::Vertex(i) => self.vertex_normals[tri[i as usize] as usize],
            Feature::Edge(i) => {
                let (a, b) = (tri[i as usize], tri[(i as usize + 1) % 3]);
                self.edge_normals[&(a.min(b), a.max(b))]
            }
        };
        if (p - c.point).dot(&pseudo) < 0.0 {
            -dist
        } else {
            dist
        }
    }

    /// 1 inside, 0 outside, by crossing parity along a fixed ray.
    pub fn occupancy(&self, p: &Vec3) -> u8 {
        let mut hits = Vec::new();
        let mut dir = Vec3::from(RAY_DIR);
        for attempt in 0..MAX_JITTER {
            self.bvh.ray_hits(&self.mesh, p, &dir, &mut hits);
            if !hits.iter().any(|h| h.ambiguous) || attempt + 1 == MAX_JITTER {
                let crossings = hits.iter().filter(|h| h.t > 0.0).count();
                return (crossings % 2) as u8;
            }
            dir = jitter(&dir, attempt);
        }
        unreachable!()
    }

    /// Occupancy at the centers of a `res^3` lattice of cells over `[-1,1]^3`,
    /// one `+x` ray per row. Index `(i, j, k)` maps to `i + res * (j + res * k)`.
    pub fn occupancy_lattice(&self, res: usize) -> Vec<u8> {
        let center = |i: usize| -1.0 + (2.0 * i as f64 + 1.0) / res as f64;
        let mut out = vec![0u8; res * res * res];
        let mut hits: Vec<RayHit> = Vec::new();
        let dir = Vec3::x();
        for k in 0..res {
            for j in 0..res {
                let (mut y, mut z) = (center(j), center(k));
                for attempt in 0..MAX_JITTER {
                    self.bvh.ray_hits(&self.mesh, &Vec3::new(-2.0, y, z), &dir, &mut hits);
                    if !hits.iter().any(|h| h.ambiguous) || attempt + 1 == MAX_JITTER {
                        break;
                    }
                    // nudge the row off the grazed feature, far below cell size
                    y += 1e-7 * (attempt as f64 + 1.0) * 0.618_033_988_749_895;
                    z += 1e-7 * (attempt as f64 + 1.0) * 0.414_213_562_373_095;
                }
                let mut xs: Vec<f64> = hits.iter().map(|h| h.t - 2.0).collect();
                xs.sort_by(f64::total_cmp);
                let mut crossed = 0;
                for i in 0..res {
                    let x = center(i);
                    while crossed < xs.len() && xs[crossed] < x {
                        crossed += 1;
                    }
                    out[i + res * (j + res * k)] = (crossed % 2) as u8;
                }
            }
        }
        out
    }
}

fn jitter(dir: &Vec3, attempt: usize) -> Vec3 {
    let a = attempt as f64 + 1.0;
    let d = dir + Vec3::new(0.013 * a.sin(), 0.017 * (1.7 * a).cos(), -0.011 * (2.3 * a).sin());
    d.normalize()
}

/// One-shot signed distance; build a [`MeshOracle`] for repeated queries.
pub fn signed_distance(mesh: &TriMesh, p: &Vec3) -> Result<f64, MeshError> {
    Ok(MeshOracle::new(mesh)?.signed_distance(p))
}

/// One-shot occupancy; build a [`MeshOracle`] for repeated queries.
pub fn occupancy(mesh: &TriMesh, p: &Vec3) -> Result<u8, MeshError> {
    Ok(MeshOracle::new(mesh)?.occupancy(p))
}
