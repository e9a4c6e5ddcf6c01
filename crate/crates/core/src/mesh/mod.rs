//! Triangle meshes: loading, normalization, area-uniform surface sampling and
//! the ground-truth signed-distance / occupancy oracle.

mod bvh;
pub mod io;
mod sample;
mod sdf;
pub mod shapes;

use std::path::PathBuf;

use nalgebra::Vector3;
use thiserror::Error;

pub use io::{load_mesh, save_mesh, write_obj, write_ply};
pub use sample::{sample_surface, OrientedPoint, OrientedPointSet, SurfaceSampler};
pub use sdf::{occupancy, signed_distance, MeshOracle};

pub type Vec3 = Vector3<f64>;

/// Default normalization margin; keeps coarse boundary cells from clipping.
pub const DEFAULT_MARGIN: f64 = 0.1;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Indexed triangle mesh.
///
/// Triangles are stored with the winding found in the source file; the
/// oracle and sampler assume counter-clockwise winding seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Option<Vec<Vec3>>,
}

impl TriMesh {
    /// Builds a mesh, dropping triangles that reference missing vertices or
    /// have (numerically) zero area.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        let n = vertices.len() as u32;
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| t.iter().all(|&i| i < n))
            .filter(|t| !is_degenerate(&vertices, t))
            .collect();
        if triangles.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        Ok(Self {
            vertices,
            triangles,
            normals: None,
        })
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Unit face normal following the right-hand rule on the stored winding.
    pub fn face_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle(t);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.face_area(t)).sum()
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Signed enclosed volume (divergence theorem); positive for outward winding.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle(t);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Number of undirected edges not shared by exactly two triangles.
    pub fn boundary_edge_count(&self) -> usize {
        let mut edges = std::collections::HashMap::<(u32, u32), usize>::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        edges.values().filter(|&&c| c != 2).count()
    }

    /// Applies `p -> p * scale + offset` to every vertex.
    pub fn transformed(&self, scale: f64, offset: Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| v * scale + offset).collect(),
            triangles: self.triangles.clone(),
            normals: self.normals.clone(),
        }
    }
}

fn is_degenerate(vertices: &[Vec3], t: &[u32; 3]) -> bool {
    if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
        return true;
    }
    let [a, b, c] = t.map(|i| vertices[i as usize]);
    let cross = (b - a).cross(&(c - a)).norm();
    let scale = (b - a)
        .norm_squared()
        .max((c - a).norm_squared())
        .max((c - b).norm_squared());
    !(cross.is_finite() && cross > 1e-14 * scale)
}

/// Uniform scale + translation that centers the bounding box at the origin
/// and fits it inside `[-(1 - margin), 1 - margin]^3`.
pub fn normalization_transform(mesh: &TriMesh, margin: f64) -> Result<(f64, Vec3), MeshError> {
    if mesh.triangles.is_empty() || mesh.vertices.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let (lo, hi) = mesh.bounds();
    let center = (lo + hi) * 0.5;
    let extent = (hi - lo).max();
    let scale = if extent > 0.0 {
        2.0 * (1.0 - margin) / extent
    } else {
        1.0
    };
    Ok((scale, -center * scale))
}

pub fn normalize_mesh(mesh: &TriMesh, margin: f64) -> Result<TriMesh, MeshError> {
    assert!(margin > 0.0 && margin < 1.0, "margin must lie in (0,1)");
    let (scale, offset) = normalization_transform(mesh, margin)?;
    Ok(mesh.transformed(scale, offset))
}
