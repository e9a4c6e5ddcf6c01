use rayon::prelude::*;
use serde::Serialize;

use super::{EvalError, KdTree};
use crate::mesh::{sample_surface, MeshError, MeshOracle, OrientedPointSet, TriMesh};

/// Independent resamplings averaged by [`chamfer`] and [`normal_consistency`].
pub const RESAMPLINGS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub cd: f64,
    pub nc: f64,
    pub iou: f64,
    pub n_metric_samples: usize,
    pub iou_resolution: usize,
    pub seed: u64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "mesh_id,mode,cd,nc,iou,q,n_samples,seed";

    pub fn csv_row(&self, mesh_id: &str, mode: &str, q: usize) -> String {
        format!(
            "{mesh_id},{mode},{:e},{:e},{},{q},{},{}",
            self.cd, self.nc, self.iou, self.n_metric_samples, self.seed
        )
    }
}

fn draw(mesh: &TriMesh, n: usize, seed: u64, round: u64) -> Result<OrientedPointSet, EvalError> {
    // Both meshes draw round `r` from the same stream so swapping arguments
    // swaps the two directed terms exactly.
    sample_surface(mesh, n, seed.wrapping_add(round.wrapping_mul(0x9e37_79b9_7f4a_7c15))).map_err(|e| match e {
        MeshError::EmptyMesh => EvalError::EmptyMesh,
        other => EvalError::Mesh(other),
    })
}

/// Mean over `from` of (squared distance, normal residual) to the nearest point of `to`.
fn directed(from: &OrientedPointSet, to: &OrientedPointSet) -> (f64, f64) {
    let pos: Vec<_> = to.points.iter().map(|p| p.position).collect();
    let tree = KdTree::new(&pos);
    let pairs: Vec<(f64, f64)> = from
        .points
        .par_iter()
        .map(|p| {
            let (i, d2) = tree.nearest(&p.position).expect("non-empty sample set");
            (d2, 1.0 - p.normal.dot(&to.points[i].normal))
        })
        .collect();
    // summed in sample order so the result does not depend on thread count
    let (d, r) = pairs.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = from.len() as f64;
    (d / n, r / n)
}

/// (CD, NC) averaged over the resamplings.
fn both(a: &TriMesh, b: &TriMesh, n: usize, seed: u64) -> Result<(f64, f64), EvalError> {
    if a.triangles.is_empty() || b.triangles.is_empty() || n == 0 {
        return Err(EvalError::EmptyMesh);
    }
    let (mut cd, mut nc) = (0.0, 0.0);
    for round in 0..RESAMPLINGS {
        let pa = draw(a, n, seed, round)?;
        let pb = draw(b, n, seed, round)?;
        let (dab, rab) = directed(&pa, &pb);
        let (dba, rba) = directed(&pb, &pa);
        cd += 0.5 * (dab + dba);
        nc += 0.5 * (rab + rba);
    }
    Ok((cd / RESAMPLINGS as f64, nc / RESAMPLINGS as f64))
}

/// Symmetric chamfer distance on squared nearest-neighbor distances.
pub fn chamfer(a: &TriMesh, b: &TriMesh, n: usize, seed: u64) -> Result<f64, EvalError> {
    Ok(both(a, b, n, seed)?.0)
}

/// Mean `1 - cos` between each sample normal and its nearest match, both ways.
pub fn normal_consistency(a: &TriMesh, b: &TriMesh, n: usize, seed: u64) -> Result<f64, EvalError> {
    Ok(both(a, b, n, seed)?.1)
}

/// Intersection over union of the two occupancy lattices.
pub fn iou(a: &TriMesh, b: &TriMesh, resolution: usize) -> Result<f64, EvalError> {
    let la = MeshOracle::new(a)?.occupancy_lattice(resolution);
    let lb = MeshOracle::new(b)?.occupancy_lattice(resolution);
    let (inter, union) = la
        .iter()
        .zip(&lb)
        .fold((0usize, 0usize), |(i, u), (&x, &y)| (i + (x & y) as usize, u + (x | y) as usize));
    if union == 0 {
        return Err(EvalError::BothEmpty);
    }
    Ok(inter as f64 / union as f64)
}

/// CD, NC and IoU of `a` against reference `b`.
pub fn compare_meshes(
    a: &TriMesh,
    b: &TriMesh,
    n: usize,
    iou_resolution: usize,
    seed: u64,
) -> Result<MetricsReport, EvalError> {
    let (cd, nc) = both(a, b, n, seed)?;
    Ok(MetricsReport {
        cd,
        nc,
        iou: iou(a, b, iou_resolution)?,
        n_metric_samples: n,
        iou_resolution,
        seed,
    })
}
