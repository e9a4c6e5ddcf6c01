//! Shared fixtures for the criterion benches.

use ogrid_core::field::{FieldConfig, FieldModel};
use ogrid_core::mesh::{normalize_mesh, sample_surface, shapes, TriMesh};
use ogrid_core::tree::{build_structured_octree, DualTree, LodSet};

/// Normalized torus, a shape with both convex and saddle regions.
pub fn torus() -> TriMesh {
    normalize_mesh(&shapes::torus(0.7, 0.3, 96, 48), 0.1).expect("torus normalizes")
}

pub fn tree(mesh: &TriMesh, lods: &[u8]) -> DualTree {
    let pts = sample_surface(mesh, 50_000, 1).expect("non-empty mesh");
    let lods = LodSet::new(lods.to_vec()).expect("valid levels");
    let octree = build_structured_octree(&pts, &lods).expect("octree");
    DualTree::assign_anchors(&octree, &pts).expect("anchors").0
}

pub fn model(mesh: &TriMesh, cfg: FieldConfig) -> FieldModel {
    FieldModel::new(tree(mesh, &[3, 4, 5]), cfg, 7).expect("valid config")
}
