//! Dense field evaluation, isosurface extraction and mesh comparison metrics.

mod kdtree;
mod mc;
mod mc_table;
mod metrics;

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::field::{DecoderMode, Evaluator, FieldModel, PairScratch};
use crate::mesh::{MeshError, TriMesh};
use crate::tree::cell_side;

pub use kdtree::KdTree;
pub use mc::marching_cubes;
pub use metrics::{chamfer, compare_meshes, iou, normal_consistency, MetricsReport, RESAMPLINGS};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("field has no iso-crossing; the extracted surface is empty")]
    EmptySurface,
    #[error("cannot compare an empty mesh")]
    EmptyMesh,
    #[error("both occupancy grids are empty")]
    BothEmpty,
    #[error("grid resolution {0} is below the minimum of 8")]
    InvalidResolution(usize),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Values on the `res^3` vertex lattice spanning `[-1,1]^3`, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub res: usize,
    pub values: Vec<f64>,
    /// Whether each vertex fell in an occupied finest cell.
    pub located: Vec<bool>,
    pub outside_fill: f64,
}

impl FieldGrid {
    pub fn coord_of(&self, i: f64) -> f64 {
        -1.0 + 2.0 * i / (self.res - 1) as f64
    }

    pub fn vertex(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        Vector3::new(self.coord_of(i as f64), self.coord_of(j as f64), self.coord_of(k as f64))
    }

    /// Grid of an analytic function; every vertex counts as located.
    pub fn from_fn(res: usize, f: impl Fn(&Vector3<f64>) -> f64) -> Self {
        let mut g = Self {
            res,
            values: Vec::with_capacity(res * res * res),
            located: vec![true; res * res * res],
            outside_fill: 0.0,
        };
        for k in 0..res {
            for j in 0..res {
                for i in 0..res {
                    let v = f(&g.vertex(i, j, k));
                    g.values.push(v);
                }
            }
        }
        g
    }
}

/// Evaluates the field at the finest level on a `q^3` lattice.
///
/// Vertices outside every occupied cell form connected regions; each region
/// takes the inside/outside side held by the majority of its located
/// neighbors and is filled with a value beyond any reachable field value on
/// that side, so no isosurface appears inside discarded space.
pub fn evaluate_grid(model: &FieldModel, q: usize) -> Result<FieldGrid, EvalError> {
    if q < 8 {
        return Err(EvalError::InvalidResolution(q));
    }
    let lods = model.tree().lods();
    let finest = lods.finest();
    let ev = Evaluator::new(model, model.tree().level_ids(finest));
    let mode = model.config().decoder;
    let fill = 3f64.sqrt() * cell_side(lods.coarsest());
    let mut grid = FieldGrid {
        res: q,
        values: vec![0.0; q * q * q],
        located: vec![false; q * q * q],
        outside_fill: fill,
    };
    let template = grid.clone();
    grid.values
        .par_chunks_mut(q * q)
        .zip(grid.located.par_chunks_mut(q * q))
        .enumerate()
        .for_each(|(k, (vals, loc))| {
            let mut sc = PairScratch::new(model.layout());
            for j in 0..q {
                for i in 0..q {
                    let x = template.vertex(i, j, k);
                    if let Some(cell) = model.locate(&x, finest) {
                        vals[i + q * j] = model.activate(ev.forward(&x, cell, &mut sc));
                        loc[i + q * j] = true;
                    }
                }
            }
        });
    fill_discarded(&mut grid, mode);
    Ok(grid)
}

fn fill_discarded(grid: &mut FieldGrid, mode: DecoderMode) {
    let q = grid.res;
    let n = q * q * q;
    let iso = mode.iso();
    let inside = |v: f64| match mode {
        DecoderMode::Sdf => v < iso,
        DecoderMode::Occupancy => v > iso,
    };
    let (in_val, out_val) = match mode {
        DecoderMode::Sdf => (-grid.outside_fill, grid.outside_fill),
        DecoderMode::Occupancy => (1.0, 0.0),
    };
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    let mut component = Vec::new();
    for start in 0..n {
        if grid.located[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        component.clear();
        let (mut votes_in, mut votes_out) = (0usize, 0usize);
        while let Some(v) = stack.pop() {
            component.push(v);
            let (i, j, k) = (v % q, v / q % q, v / (q * q));
            let mut visit = |w: usize| {
                if grid.located[w] {
                    if inside(grid.values[w]) {
                        votes_in += 1;
                    } else {
                        votes_out += 1;
                    }
                } else if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            };
            if i > 0 {
                visit(v - 1);
            }
            if i + 1 < q {
                visit(v + 1);
            }
            if j > 0 {
                visit(v - q);
            }
            if j + 1 < q {
                visit(v + q);
            }
            if k > 0 {
                visit(v - q * q);
            }
            if k + 1 < q {
                visit(v + q * q);
            }
        }
        let val = if votes_in > votes_out { in_val } else { out_val };
        for &v in &component {
            grid.values[v] = val;
        }
    }
}

/// Evaluates the model and extracts its isosurface at the mode's default iso.
pub fn extract_mesh(model: &FieldModel, q: usize) -> Result<TriMesh, EvalError> {
    let grid = evaluate_grid(model, q)?;
    extract_from_grid(&grid, model.config().decoder)
}

/// Occupancy grids are negated so that the interior lies below the iso value.
pub fn extract_from_grid(grid: &FieldGrid, mode: DecoderMode) -> Result<TriMesh, EvalError> {
    match mode {
        DecoderMode::Sdf => marching_cubes(grid, 0.0),
        DecoderMode::Occupancy => {
            let mut neg = grid.clone();
            neg.values.iter_mut().for_each(|v| *v = -*v);
            marching_cubes(&neg, -0.5)
        }
    }
}
