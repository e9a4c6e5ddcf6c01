use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MeshError, TriMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedPoint {
    pub position: Vec3,
    /// Outward unit normal.
    pub normal: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientedPointSet {
    pub points: Vec<OrientedPoint>,
    pub seed: u64,
}

impl OrientedPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Area-weighted triangle picker with per-face normals.
#[derive(Debug, Clone)]
pub struct SurfaceSampler<'a> {
    mesh: &'a TriMesh,
    cumulative: Vec<f64>,
    normals: Vec<Vec3>,
}

impl<'a> SurfaceSampler<'a> {
    pub fn new(mesh: &'a TriMesh) -> Result<Self, MeshError> {
        if mesh.triangles.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        let mut total = 0.0;
        let cumulative = (0..mesh.triangles.len())
            .map(|t| {
                total += mesh.face_area(t);
                total
            })
            .collect();
        let normals = (0..mesh.triangles.len()).map(|t| mesh.face_normal(t)).collect();
        Ok(Self {
            mesh,
            cumulative,
            normals,
        })
    }

    pub fn total_area(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Draws one point; returns it with the index of its triangle.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (OrientedPoint, usize) {
        let target = rng.gen::<f64>() * self.total_area();
        let t = self
            .cumulative
            .partition_point(|&c| c <= target)
            .min(self.cumulative.len() - 1);
        let [a, b, c] = self.mesh.triangle(t);
        let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
        let s = r1.sqrt();
        let position = a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2);
        (
            OrientedPoint {
                position,
                normal: self.normals[t],
            },
            t,
        )
    }
}

/// Draws `count` area-uniform surface points with their face normals.
pub fn sample_surface(mesh: &TriMesh, count: usize, seed: u64) -> Result<OrientedPointSet, MeshError> {
    let sampler = SurfaceSampler::new(mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count).map(|_| sampler.sample(&mut rng).0).collect();
    Ok(OrientedPointSet { points, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    fn unit_cube() -> TriMesh {
        shapes::axis_box(Vec3::repeat(-0.5), Vec3::repeat(0.5))
    }

    fn face_of(p: &Vec3) -> usize {
        // index of the coordinate closest to +-0.5
        let mut best = (0, 0.0);
        for i in 0..3 {
            if p[i].abs() > best.1 {
                best = (i, p[i].abs());
            }
        }
        best.0 * 2 + usize::from(p[best.0] < 0.0)
    }

    #[test]
    fn faces_receive_equal_shares() {
        // binomial(6000, 1/6): sd = sqrt(6000 * 1/6 * 5/6) = 28.9, 3 sd < 120
        let set = sample_surface(&unit_cube(), 6000, 11).unwrap();
        let mut counts = [0usize; 6];
        for p in &set.points {
            counts[face_of(&p.position)] += 1;
        }
        for c in counts {
            assert!((c as i64 - 1000).abs() <= 120, "{counts:?}");
        }
    }

    #[test]
    fn top_face_normals() {
        let set = sample_surface(&unit_cube(), 2000, 3).unwrap();
        let mut seen = 0;
        for p in &set.points {
            if (p.position.z - 0.5).abs() < 1e-12 && p.position.x.abs() < 0.5 - 1e-9 && p.position.y.abs() < 0.5 - 1e-9 {
                assert!((p.normal - Vec3::z()).norm() < 1e-12);
                seen += 1;
            }
        }
        assert!(seen > 100);
    }

    #[test]
    fn deterministic_for_seed() {
        let a = sample_surface(&unit_cube(), 500, 42).unwrap();
        let b = sample_surface(&unit_cube(), 500, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_surface(&unit_cube(), 500, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn chi_square_matches_area_distribution() {
        // triangles of a rounded box have very different areas
        let mesh = shapes::rounded_box(0.5, 0.3, 3);
        let n = 40_000;
        let sampler = SurfaceSampler::new(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = vec![0usize; mesh.triangles.len()];
        for _ in 0..n {
            counts[sampler.sample(&mut rng).1] += 1;
        }
        let total = sampler.total_area();
        let chi2: f64 = counts
            .iter()
            .enumerate()
            .map(|(t, &c)| {
                let e = n as f64 * mesh.face_area(t) / total;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let dof = (mesh.triangles.len() - 1) as f64;
        // mean dof, sd sqrt(2 dof); allow 4 sd
        assert!(chi2 < dof + 4.0 * (2.0 * dof).sqrt(), "chi2 {chi2} dof {dof}");
    }
}
