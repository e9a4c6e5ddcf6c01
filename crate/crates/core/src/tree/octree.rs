use std::collections::BTreeSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::TreeError;
use crate::mesh::OrientedPointSet;

/// Deepest supported level; `2^10` cells per axis.
pub const MAX_LOD: u8 = 10;

/// Sorted, de-duplicated set of active levels of detail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct LodSet(Vec<u8>);

impl LodSet {
    pub fn new(mut lods: Vec<u8>) -> Result<Self, TreeError> {
        lods.sort_unstable();
        lods.dedup();
        if lods.is_empty() {
            return Err(TreeError::InvalidLods("empty".into()));
        }
        if let Some(bad) = lods.iter().find(|&&l| l == 0 || l > MAX_LOD) {
            return Err(TreeError::InvalidLods(format!("level {bad} outside 1..={MAX_LOD}")));
        }
        Ok(Self(lods))
    }

    /// Inclusive range `lo..=hi`.
    pub fn range(lo: u8, hi: u8) -> Result<Self, TreeError> {
        Self::new((lo..=hi).collect())
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.iter().copied()
    }

    pub fn finest(&self) -> u8 {
        *self.0.last().unwrap()
    }

    pub fn coarsest(&self) -> u8 {
        self.0[0]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, lod: u8) -> Option<usize> {
        self.0.iter().position(|&l| l == lod)
    }
}

impl TryFrom<Vec<u8>> for LodSet {
    type Error = TreeError;

    fn try_from(v: Vec<u8>) -> Result<Self, TreeError> {
        Self::new(v)
    }
}

impl From<LodSet> for Vec<u8> {
    fn from(s: LodSet) -> Self {
        s.0
    }
}

/// Integer cell address at one level; the cell covers the half-open box
/// `[-1 + i*side, -1 + (i+1)*side)` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub lod: u8,
    pub ix: u32,
    pub iy: u32,
    pub iz: u32,
}

impl CellKey {
    pub fn new(lod: u8, ix: u32, iy: u32, iz: u32) -> Self {
        Self { lod, ix, iy, iz }
    }

    pub fn index(&self) -> [u32; 3] {
        [self.ix, self.iy, self.iz]
    }

    pub fn parent(&self) -> Option<CellKey> {
        (self.lod > 1).then(|| CellKey::new(self.lod - 1, self.ix / 2, self.iy / 2, self.iz / 2))
    }

    /// Neighbor at an integer offset, if it stays inside the grid.
    pub fn offset(&self, d: [i32; 3]) -> Option<CellKey> {
        let n = 1i64 << self.lod;
        let idx = self.index();
        let mut out = [0u32; 3];
        for a in 0..3 {
            let v = idx[a] as i64 + d[a] as i64;
            if v < 0 || v >= n {
                return None;
            }
            out[a] = v as u32;
        }
        Some(CellKey::new(self.lod, out[0], out[1], out[2]))
    }
}

pub fn cell_side(lod: u8) -> f64 {
    2.0 / (1u64 << lod) as f64
}

/// Cell containing `p` at `lod`; coordinates on the upper boundary clamp to the
/// last cell. `None` when `p` lies outside `[-1,1]^3`.
pub fn key_of(p: &Vector3<f64>, lod: u8) -> Option<CellKey> {
    let n = 1u64 << lod;
    let mut idx = [0u32; 3];
    for a in 0..3 {
        let c = p[a];
        if !(-1.0..=1.0).contains(&c) {
            return None;
        }
        let i = ((c + 1.0) * 0.5 * n as f64).floor() as u64;
        idx[a] = i.min(n - 1) as u32;
    }
    Some(CellKey::new(lod, idx[0], idx[1], idx[2]))
}

pub fn cell_center(key: &CellKey) -> Vector3<f64> {
    let side = cell_side(key.lod);
    Vector3::new(
        -1.0 + (key.ix as f64 + 0.5) * side,
        -1.0 + (key.iy as f64 + 0.5) * side,
        -1.0 + (key.iz as f64 + 0.5) * side,
    )
}

/// Occupied cells per configured level.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredOctree {
    pub lods: LodSet,
    pub levels: Vec<BTreeSet<CellKey>>,
}

impl StructuredOctree {
    pub fn level(&self, lod: u8) -> Option<&BTreeSet<CellKey>> {
        self.lods.position(lod).map(|i| &self.levels[i])
    }

    pub fn contains(&self, key: &CellKey) -> bool {
        self.level(key.lod).is_some_and(|s| s.contains(key))
    }
}

/// Marks every cell holding at least one point, at every configured level.
pub fn build_structured_octree(points: &OrientedPointSet, lods: &LodSet) -> Result<StructuredOctree, TreeError> {
    if points.is_empty() {
        return Err(TreeError::EmptyPointSet);
    }
    let levels = lods
        .iter()
        .map(|lod| {
            points
                .points
                .iter()
                .filter_map(|p| key_of(&p.position, lod))
                .collect::<BTreeSet<_>>()
        })
        .collect();
    Ok(StructuredOctree {
        lods: lods.clone(),
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{OrientedPoint, OrientedPointSet};

    fn set(points: &[[f64; 3]]) -> OrientedPointSet {
        OrientedPointSet {
            points: points
                .iter()
                .map(|p| OrientedPoint {
                    position: Vector3::from(*p),
                    normal: Vector3::z(),
                })
                .collect(),
            seed: 0,
        }
    }

    #[test]
    fn single_point_cell() {
        let t = build_structured_octree(&set(&[[0.1, 0.1, 0.1]]), &LodSet::new(vec![3]).unwrap()).unwrap();
        let cells: Vec<_> = t.levels[0].iter().copied().collect();
        assert_eq!(cells, vec![CellKey::new(3, 4, 4, 4)]);
    }

    #[test]
    fn dense_points_fill_grid() {
        let mut pts = Vec::new();
        for i in 0..16 {
            for j in 0..16 {
                for k in 0..16 {
                    let c = |v: usize| -1.0 + (v as f64 + 0.5) / 8.0;
                    pts.push([c(i), c(j), c(k)]);
                }
            }
        }
        let t = build_structured_octree(&set(&pts), &LodSet::new(vec![3]).unwrap()).unwrap();
        assert_eq!(t.levels[0].len(), 512);
    }

    #[test]
    fn parent_closure() {
        let pts: Vec<[f64; 3]> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.37;
                [0.8 * t.sin(), 0.7 * (1.3 * t).cos(), 0.9 * (0.7 * t).sin()]
            })
            .collect();
        let t = build_structured_octree(&set(&pts), &LodSet::range(3, 6).unwrap()).unwrap();
        for w in 1..t.levels.len() {
            for key in &t.levels[w] {
                assert!(t.levels[w - 1].contains(&key.parent().unwrap()));
            }
        }
    }

    #[test]
    fn upper_boundary_is_clamped() {
        assert_eq!(key_of(&Vector3::repeat(1.0), 3), Some(CellKey::new(3, 7, 7, 7)));
        assert_eq!(key_of(&Vector3::repeat(-1.0), 3), Some(CellKey::new(3, 0, 0, 0)));
        assert_eq!(key_of(&Vector3::new(1.5, 0.0, 0.0), 3), None);
    }

    #[test]
    fn empty_set_rejected() {
        assert_eq!(
            build_structured_octree(&set(&[]), &LodSet::new(vec![3]).unwrap()),
            Err(TreeError::EmptyPointSet)
        );
    }

    #[test]
    fn lod_set_validation() {
        assert!(LodSet::new(vec![]).is_err());
        assert!(LodSet::new(vec![0, 3]).is_err());
        assert!(LodSet::new(vec![11]).is_err());
        assert_eq!(LodSet::new(vec![5, 3, 4, 3]).unwrap().as_slice(), &[3, 4, 5]);
    }
}
