use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{TrainConfig, TrainError};
use crate::field::DecoderMode;
use crate::mesh::{MeshOracle, SurfaceSampler, TriMesh};
use crate::tree::{cell_center, cell_side, DualTree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample {
    pub point: Vector3<f64>,
    /// Signed distance, or occupancy in `{0, 1}`.
    pub target: f64,
    pub on_surface: bool,
    /// Face normal for on-surface samples.
    pub normal: Option<Vector3<f64>>,
}

/// Oracle and sampler built once per fit.
pub struct SampleSource<'a> {
    oracle: MeshOracle,
    sampler: SurfaceSampler<'a>,
    mode: DecoderMode,
}

impl<'a> SampleSource<'a> {
    pub fn new(mesh: &'a TriMesh, mode: DecoderMode) -> Result<Self, TrainError> {
        Ok(Self {
            oracle: MeshOracle::new(mesh)?,
            sampler: SurfaceSampler::new(mesh)?,
            mode,
        })
    }

    fn target(&self, p: &Vector3<f64>) -> f64 {
        match self.mode {
            DecoderMode::Sdf => self.oracle.signed_distance(p),
            DecoderMode::Occupancy => self.oracle.occupancy(p) as f64,
        }
    }

    /// Phase 1 puts `min_per_cell` uniform points in every finest occupied
    /// cell; the rest of the budget is split between exact surface points and
    /// Gaussian-perturbed surface points, then everything is shuffled.
    pub fn draw(&self, tree: &DualTree, cfg: &TrainConfig, epoch: usize) -> Result<Vec<TrainingSample>, TrainError> {
        let finest = tree.level_cells(tree.lods().finest());
        let required = cfg.min_per_cell * finest.len();
        if cfg.n_samples < required {
            return Err(TrainError::BudgetTooSmall {
                budget: cfg.n_samples,
                required,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut points: Vec<(Vector3<f64>, Option<Vector3<f64>>)> = Vec::with_capacity(cfg.n_samples);
        for cell in finest {
            let c = cell_center(&cell.key);
            let h = cell_side(cell.key.lod);
            for _ in 0..cfg.min_per_cell {
                let u = Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()) - Vector3::repeat(0.5);
                points.push((c + u * h, None));
            }
        }
        let rest = cfg.n_samples - required;
        let surface = rest - rest / 2;
        for _ in 0..surface {
            let (p, _) = self.sampler.sample(&mut rng);
            points.push((p.position, Some(p.normal)));
        }
        let noise = [
            Normal::new(0.0, cfg.sigmas[0]).map_err(|_| TrainError::InvalidConfig("bad sigma".into()))?,
            Normal::new(0.0, cfg.sigmas[1]).map_err(|_| TrainError::InvalidConfig("bad sigma".into()))?,
        ];
        for i in 0..rest / 2 {
            let (p, _) = self.sampler.sample(&mut rng);
            let d = &noise[i % 2];
            let off = Vector3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng));
            points.push((p.position + off, None));
        }
        points.shuffle(&mut rng);
        Ok(points
            .into_iter()
            .map(|(point, normal)| TrainingSample {
                point,
                target: self.target(&point),
                on_surface: normal.is_some(),
                normal,
            })
            .collect())
    }
}

/// One epoch's samples for `mesh`; deterministic in `(cfg.seed, epoch)`.
pub fn sample_training_set(
    mesh: &TriMesh,
    tree: &DualTree,
    cfg: &TrainConfig,
    mode: DecoderMode,
    epoch: usize,
) -> Result<Vec<TrainingSample>, TrainError> {
    SampleSource::new(mesh, mode)?.draw(tree, cfg, epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{sample_surface, shapes};
    use crate::tree::{build_structured_octree, LodSet};

    fn setup(n: usize) -> (TriMesh, DualTree, TrainConfig) {
        let mesh = shapes::sphere(0.6, 12);
        let lods = LodSet::new(vec![2, 3]).unwrap();
        let pts = sample_surface(&mesh, 5000, 1).unwrap();
        let tree = DualTree::assign_anchors(&build_structured_octree(&pts, &lods).unwrap(), &pts).unwrap().0;
        let cfg = TrainConfig {
            lods,
            n_samples: n,
            seed: 3,
            ..TrainConfig::default()
        };
        (mesh, tree, cfg)
    }

    #[test]
    fn schedule_counts() {
        let (mesh, tree, cfg) = setup(10_000);
        let cells = tree.level_cells(3).len();
        let s = sample_training_set(&mesh, &tree, &cfg, DecoderMode::Sdf, 0).unwrap();
        assert_eq!(s.len(), 10_000);
        let rest = 10_000 - 32 * cells;
        let surface = s.iter().filter(|x| x.on_surface).count();
        assert_eq!(surface, rest - rest / 2);
        for x in s.iter().filter(|x| x.on_surface) {
            assert!(x.target.abs() <= 1e-7);
            assert!(x.normal.is_some());
        }
        let finest = tree.lods().finest();
        let located = s.iter().filter(|x| tree.locate(&x.point, finest).is_some()).count();
        assert!(located >= 32 * cells);
    }

    #[test]
    fn deterministic_per_epoch() {
        let (mesh, tree, cfg) = setup(6000);
        let a = sample_training_set(&mesh, &tree, &cfg, DecoderMode::Sdf, 2).unwrap();
        let b = sample_training_set(&mesh, &tree, &cfg, DecoderMode::Sdf, 2).unwrap();
        let c = sample_training_set(&mesh, &tree, &cfg, DecoderMode::Sdf, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn budget_too_small() {
        let (mesh, tree, cfg) = setup(100);
        assert!(matches!(
            sample_training_set(&mesh, &tree, &cfg, DecoderMode::Sdf, 0),
            Err(TrainError::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn occupancy_targets_are_binary() {
        let (mesh, tree, cfg) = setup(6000);
        let s = sample_training_set(&mesh, &tree, &cfg, DecoderMode::Occupancy, 0).unwrap();
        assert!(s.iter().all(|x| x.target == 0.0 || x.target == 1.0));
        assert!(s.iter().any(|x| x.target == 1.0));
    }
}
