//! Sampling, losses and the Adam training loop.

mod adam;
mod loss;
mod sampling;

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldConfig, FieldError, FieldModel, Params};
use crate::mesh::{sample_surface, MeshError, TriMesh};
use crate::tree::{build_structured_octree, BuildReport, DualTree, LodSet, TreeError};

pub use adam::{adam_step, AdamState};
pub use loss::{batch_loss, data_loss, normal_regularizer, BatchStats};
pub use sampling::{sample_training_set, SampleSource, TrainingSample};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("sample budget {budget} is below the {required} needed to cover every finest cell")]
    BudgetTooSmall { budget: usize, required: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("optimizer state has {expected} entries but got {params} parameters and {grads} gradients")]
    ShapeMismatch { expected: usize, params: usize, grads: usize },
    #[error("loss became non-finite in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lods: LodSet,
    /// Samples drawn per epoch.
    pub n_samples: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Weight of the normal regularizer; 0 disables it.
    pub alpha_n: f64,
    /// Vicinity noise scales, used alternately.
    pub sigmas: [f64; 2],
    pub min_per_cell: usize,
    /// Surface points used to build the tree; `None` picks
    /// `max(1e5, 32 * 4^finest)`.
    pub tree_points: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lods: LodSet::range(3, 7).expect("valid range"),
            n_samples: 200_000,
            batch_size: 512,
            epochs: 10,
            lr: 1e-3,
            alpha_n: 0.1,
            sigmas: [0.01, 0.05],
            min_per_cell: 32,
            tree_points: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.n_samples == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("sample count, batch size and epochs must be positive");
        }
        if self.batch_size > self.n_samples {
            return bad("batch size exceeds the sample budget");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.alpha_n >= 0.0 && self.alpha_n.is_finite()) {
            return bad("alpha_n must be non-negative");
        }
        if !self.sigmas.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return bad("vicinity sigmas must be positive");
        }
        if self.tree_points == Some(0) {
            return bad("tree_points must be positive");
        }
        Ok(())
    }

    pub fn resolved_tree_points(&self) -> usize {
        self.tree_points
            .unwrap_or_else(|| (32usize << (2 * self.lods.finest() as usize)).max(100_000))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub data_loss: f64,
    pub reg_loss: f64,
    pub discarded_fraction: f64,
    pub wall_seconds: f64,
}

pub fn write_epoch_csv<W: Write>(log: &[EpochLog], mut w: W) -> std::io::Result<()> {
    writeln!(w, "epoch,data_loss,reg_loss,discarded_fraction,wall_seconds")?;
    for e in log {
        writeln!(
            w,
            "{},{},{},{},{:.3}",
            e.epoch, e.data_loss, e.reg_loss, e.discarded_fraction, e.wall_seconds
        )?;
    }
    Ok(())
}

pub struct FitOutput {
    pub model: FieldModel,
    pub log: Vec<EpochLog>,
    pub build: BuildReport,
}

/// Builds the tree from surface samples and returns it with its report.
pub fn build_tree(mesh: &TriMesh, cfg: &TrainConfig) -> Result<(DualTree, BuildReport), TrainError> {
    let pts = sample_surface(mesh, cfg.resolved_tree_points(), cfg.seed)?;
    let octree = build_structured_octree(&pts, &cfg.lods)?;
    Ok(DualTree::assign_anchors(&octree, &pts)?)
}

/// Seed offset separating parameter initialization from tree sampling.
const INIT_SALT: u64 = 0x0f1e_2d3c_4b5a_6978;

pub fn fit(mesh: &TriMesh, field: &FieldConfig, cfg: &TrainConfig) -> Result<FitOutput, TrainError> {
    fit_with(mesh, field, cfg, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(
    mesh: &TriMesh,
    field: &FieldConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitOutput, TrainError> {
    cfg.validate()?;
    field.validate()?;
    let (tree, build) = build_tree(mesh, cfg)?;
    log::info!(
        "tree: {} cells over levels {:?}, {} zero-mean fallbacks",
        tree.len(),
        tree.lods().as_slice(),
        build.zero_mean_fallbacks
    );
    let mut model = FieldModel::new(tree, field.clone(), cfg.seed ^ INIT_SALT)?;
    let source = SampleSource::new(mesh, field.decoder)?;
    let mut adam = AdamState::new(model.params().data.len());
    let mut grads = Params::zeros(model.layout().clone());
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let samples = source.draw(model.tree(), cfg, epoch)?;
        let (mut data, mut pairs, mut reg, mut reg_pairs, mut discarded) = (0.0, 0usize, 0.0, 0usize, 0usize);
        for (b, batch) in samples.chunks(cfg.batch_size).enumerate() {
            grads.data.fill(0.0);
            let s = batch_loss(&model, batch, true, cfg.alpha_n, &mut grads)?;
            if !s.total().is_finite() || grads.data.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b });
            }
            data += s.data_loss * s.pairs as f64;
            pairs += s.pairs;
            reg += s.reg_loss * s.reg_pairs as f64;
            reg_pairs += s.reg_pairs;
            discarded += s.discarded;
            adam_step(&mut adam, &mut model.params_mut().data, &grads.data, cfg.lr)?;
        }
        let entry = EpochLog {
            epoch,
            data_loss: data / pairs.max(1) as f64,
            reg_loss: reg / reg_pairs.max(1) as f64,
            discarded_fraction: discarded as f64 / samples.len() as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {}: data {:.6e} reg {:.6e} discarded {:.4} ({:.1}s)",
            entry.epoch,
            entry.data_loss,
            entry.reg_loss,
            entry.discarded_fraction,
            entry.wall_seconds
        );
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(FitOutput { model, log, build })
}
