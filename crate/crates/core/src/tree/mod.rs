//! The dual tree: an occupancy-driven structured octree whose cells carry a
//! rotation anchor found by searching the orientation tree.

mod dual;
mod octree;
pub mod orientation;

use thiserror::Error;

pub use dual::{BuildReport, Cell, CellId, CylLocalCoords, DualTree};
pub use octree::{build_structured_octree, cell_center, cell_side, key_of, CellKey, LodSet, StructuredOctree, MAX_LOD};
pub use orientation::{anchor_of, search_orientation, transition, Action, OrientationState, RotationAnchor, SearchStep};

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("normal is not unit length (norm {0})")]
    NonUnitNormal(f64),
    #[error("cell {0:?} is not in the tree")]
    KeyNotInTree(CellKey),
    #[error("invalid LOD set: {0}")]
    InvalidLods(String),
    #[error("malformed tree data: {0}")]
    Decode(#[from] crate::codec::DecodeError),
}
