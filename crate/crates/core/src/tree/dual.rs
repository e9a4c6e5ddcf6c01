use std::collections::HashMap;
use std::ops::Range;

use nalgebra::Vector3;

use super::octree::{cell_center, cell_side, key_of, CellKey, LodSet, StructuredOctree};
use super::orientation::{search_orientation, RotationAnchor};
use super::TreeError;
use crate::codec::{DecodeError, Reader, Writer};
use crate::mesh::OrientedPointSet;

/// Dense index of a cell inside a [`DualTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId(pub u32);

impl CellId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub key: CellKey,
    pub anchor: RotationAnchor,
}

/// Position of a query inside a cell's anchor-aligned cylinder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylLocalCoords {
    /// Distance to the top plane, clamped to `[0, height]`.
    pub h1: f64,
    /// Distance to the bottom plane, `height - h1`.
    pub h2: f64,
    /// Distance to the axis (not clamped).
    pub r: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildReport {
    /// Cells whose point normals cancelled out and fell back to the identity anchor.
    pub zero_mean_fallbacks: usize,
}

/// Occupied cells of every level with their rotation anchors.
///
/// Cells are stored level by level, each level sorted by key, so the order is
/// a pure function of the occupied set.
#[derive(Debug, Clone, PartialEq)]
pub struct DualTree {
    lods: LodSet,
    cells: Vec<Cell>,
    levels: Vec<Range<usize>>,
    index: HashMap<CellKey, CellId>,
}

impl DualTree {
    fn from_cells(lods: LodSet, per_level: Vec<Vec<Cell>>) -> Self {
        let mut cells = Vec::new();
        let mut levels = Vec::new();
        for mut level in per_level {
            level.sort_by_key(|c| c.key);
            let start = cells.len();
            cells.extend(level);
            levels.push(start..cells.len());
        }
        let index = cells
            .iter()
            .enumerate()
            .map(|(i, c)| (c.key, CellId(i as u32)))
            .collect();
        Self {
            lods,
            cells,
            levels,
            index,
        }
    }

    /// Gives every occupied cell the anchor found by searching its mean point
    /// normal to a depth equal to the cell's level.
    pub fn assign_anchors(octree: &StructuredOctree, points: &OrientedPointSet) -> Result<(Self, BuildReport), TreeError> {
        if points.is_empty() {
            return Err(TreeError::EmptyPointSet);
        }
        let mut report = BuildReport::default();
        let mut per_level = Vec::with_capacity(octree.levels.len());
        for (lod, occupied) in octree.lods.iter().zip(&octree.levels) {
            let mut sums: HashMap<CellKey, Vector3<f64>> = occupied.iter().map(|k| (*k, Vector3::zeros())).collect();
            let mut counts: HashMap<CellKey, usize> = HashMap::new();
            for p in &points.points {
                if let Some(key) = key_of(&p.position, lod) {
                    if let Some(s) = sums.get_mut(&key) {
                        *s += p.normal;
                        *counts.entry(key).or_default() += 1;
                    }
                }
            }
            let mut level = Vec::with_capacity(occupied.len());
            for key in occupied {
                let sum = sums[key];
                let n = counts.get(key).copied().unwrap_or(0).max(1) as f64;
                let anchor = if sum.norm() <= 1e-9 * n {
                    report.zero_mean_fallbacks += 1;
                    log::warn!("cell {key:?}: contained normals cancel, using identity anchor");
                    RotationAnchor::identity()
                } else {
                    let rep = sum.normalize();
                    search_orientation(&rep, lod as usize)?
                        .last()
                        .map(|s| s.anchor)
                        .unwrap_or_else(RotationAnchor::identity)
                };
                level.push(Cell { key: *key, anchor });
            }
            per_level.push(level);
        }
        Ok((Self::from_cells(octree.lods.clone(), per_level), report))
    }

    /// Same occupancy with identity anchors everywhere.
    pub fn with_identity_anchors(&self) -> Self {
        let mut out = self.clone();
        for c in &mut out.cells {
            c.anchor = RotationAnchor::identity();
        }
        out
    }

    pub fn lods(&self) -> &LodSet {
        &self.lods
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, id: CellId) -> &Cell {
        &self.cells[id.index()]
    }

    pub fn level_cells(&self, lod: u8) -> &[Cell] {
        match self.lods.position(lod) {
            Some(i) => &self.cells[self.levels[i].clone()],
            None => &[],
        }
    }

    pub fn level_ids(&self, lod: u8) -> impl Iterator<Item = CellId> {
        let range = self.lods.position(lod).map(|i| self.levels[i].clone()).unwrap_or(0..0);
        range.map(|i| CellId(i as u32))
    }

    pub fn id_of(&self, key: &CellKey) -> Option<CellId> {
        self.index.get(key).copied()
    }

    pub fn contains(&self, key: &CellKey) -> bool {
        self.index.contains_key(key)
    }

    pub fn anchor(&self, key: &CellKey) -> Result<&RotationAnchor, TreeError> {
        self.id_of(key)
            .map(|id| &self.cells[id.index()].anchor)
            .ok_or(TreeError::KeyNotInTree(*key))
    }

    /// The occupied cell containing `p` at `lod`, if any.
    pub fn locate(&self, p: &Vector3<f64>, lod: u8) -> Option<CellId> {
        self.lods.position(lod)?;
        key_of(p, lod).and_then(|k| self.id_of(&k))
    }

    /// `R^T (p - center)` in the cell's anchor frame.
    pub fn to_local(&self, key: &CellKey, p: &Vector3<f64>) -> Result<Vector3<f64>, TreeError> {
        let anchor = self.anchor(key)?;
        Ok(anchor.rotation.transpose() * (p - cell_center(key)))
    }

    pub fn from_local(&self, key: &CellKey, local: &Vector3<f64>) -> Result<Vector3<f64>, TreeError> {
        let anchor = self.anchor(key)?;
        Ok(anchor.rotation * local + cell_center(key))
    }

    pub fn to_local_cyl(&self, key: &CellKey, p: &Vector3<f64>) -> Result<CylLocalCoords, TreeError> {
        let local = self.to_local(key, p)?;
        Ok(cyl_coords(&local, cell_side(key.lod)))
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u32(self.lods.len() as u32);
        for (lod, range) in self.lods.iter().zip(&self.levels) {
            w.u8(lod);
            w.u32(range.len() as u32);
            for c in &self.cells[range.clone()] {
                w.u32(c.key.ix);
                w.u32(c.key.iy);
                w.u32(c.key.iz);
                for e in c.anchor.euler {
                    w.f64(e);
                }
            }
        }
    }

    pub fn decode(r: &mut Reader) -> Result<Self, TreeError> {
        let nlods = r.u32("lod count")? as usize;
        if nlods == 0 || nlods > super::MAX_LOD as usize {
            return Err(DecodeError::Invalid("lod count").into());
        }
        let mut lods = Vec::with_capacity(nlods);
        let mut per_level = Vec::with_capacity(nlods);
        for _ in 0..nlods {
            let lod = r.u8("lod")?;
            if lod == 0 || lod > super::MAX_LOD {
                return Err(DecodeError::Invalid("lod").into());
            }
            let count = r.u32("cell count")? as usize;
            if count > r.remaining() / 36 {
                return Err(DecodeError::Truncated("cells").into());
            }
            let n = 1u32 << lod;
            let mut level = Vec::with_capacity(count);
            for _ in 0..count {
                let (ix, iy, iz) = (r.u32("ix")?, r.u32("iy")?, r.u32("iz")?);
                if ix >= n || iy >= n || iz >= n {
                    return Err(DecodeError::Invalid("cell index").into());
                }
                let euler = [r.f64("euler")?, r.f64("euler")?, r.f64("euler")?];
                if !euler.iter().all(|e| e.is_finite()) {
                    return Err(DecodeError::Invalid("euler").into());
                }
                level.push(Cell {
                    key: CellKey::new(lod, ix, iy, iz),
                    anchor: RotationAnchor::from_euler(euler),
                });
            }
            lods.push(lod);
            per_level.push(level);
        }
        let set = LodSet::new(lods.clone())?;
        if set.as_slice() != lods.as_slice() {
            return Err(DecodeError::Invalid("lod order").into());
        }
        Ok(Self::from_cells(set, per_level))
    }
}

/// Cylinder coordinates of a point given in the cell's local frame.
pub(crate) fn cyl_coords(local: &Vector3<f64>, height: f64) -> CylLocalCoords {
    let h1 = (height / 2.0 - local.z).clamp(0.0, height);
    CylLocalCoords {
        h1,
        h2: height - h1,
        r: (local.x * local.x + local.y * local.y).sqrt(),
        height,
    }
}
