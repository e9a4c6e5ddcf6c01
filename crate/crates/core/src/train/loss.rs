use rayon::prelude::*;

use super::{TrainError, TrainingSample};
use crate::field::{sigmoid, DecoderMode, Evaluator, FieldModel, Fragment, PairScratch, Params, RegSpec};
use crate::tree::CellId;

/// Pairs per gradient fragment. Fixed so that the reduction order never
/// depends on the thread count.
const CHUNK: usize = 256;

/// Loss totals of one batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchStats {
    /// Mean data loss over contributing (sample, level) pairs.
    pub data_loss: f64,
    /// `alpha_n` times the mean normal residual.
    pub reg_loss: f64,
    pub pairs: usize,
    /// Samples located at no level.
    pub discarded: usize,
    pub reg_pairs: usize,
    /// Regularized samples whose point gradient vanished.
    pub reg_skipped: usize,
    /// Located count per configured level, coarsest first.
    pub located_per_lod: Vec<usize>,
}

impl BatchStats {
    pub fn total(&self) -> f64 {
        self.data_loss + self.reg_loss
    }
}

struct Pair {
    sample: u32,
    cell: CellId,
    reg: bool,
    data: bool,
}

#[derive(Default)]
struct Sums {
    data: f64,
    reg: f64,
    skipped: usize,
}

/// Pointwise loss and its derivative in the raw decoder output.
fn pointwise(mode: DecoderMode, raw: f64, target: f64) -> (f64, f64) {
    match mode {
        DecoderMode::Sdf => {
            let r = raw - target;
            (r * r, 2.0 * r)
        }
        DecoderMode::Occupancy => {
            // softplus(raw) - t raw, the logistic cross-entropy.
            let sp = raw.max(0.0) + (-raw.abs()).exp().ln_1p();
            (sp - target * raw, sigmoid(raw) - target)
        }
    }
}

/// Accumulates the gradient of `data + reg` into `grads` and reports both terms.
///
/// Data: every level where the sample is located contributes one pair. Reg
/// (SDF only, `alpha_n > 0`): on-surface samples at their finest located level.
pub fn batch_loss(
    model: &FieldModel,
    batch: &[TrainingSample],
    with_data: bool,
    alpha_n: f64,
    grads: &mut Params,
) -> Result<BatchStats, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mode = model.config().decoder;
    let use_reg = mode == DecoderMode::Sdf && alpha_n > 0.0;
    let lods: Vec<u8> = model.tree().lods().iter().collect();
    let mut stats = BatchStats {
        located_per_lod: vec![0; lods.len()],
        ..BatchStats::default()
    };
    let mut pairs = Vec::with_capacity(batch.len() * lods.len());
    for (i, s) in batch.iter().enumerate() {
        let first = pairs.len();
        for (li, &lod) in lods.iter().enumerate() {
            if let Some(cell) = model.locate(&s.point, lod) {
                stats.located_per_lod[li] += 1;
                pairs.push(Pair {
                    sample: i as u32,
                    cell,
                    reg: false,
                    data: with_data,
                });
            }
        }
        if pairs.len() == first {
            stats.discarded += 1;
        } else if use_reg && s.on_surface {
            pairs.last_mut().unwrap().reg = true;
        }
    }
    pairs.retain(|p| p.data || p.reg);
    let data_pairs = pairs.iter().filter(|p| p.data).count();
    let reg_pairs = pairs.iter().filter(|p| p.reg).count();
    stats.pairs = data_pairs;
    stats.reg_pairs = reg_pairs;
    if pairs.is_empty() {
        return Ok(stats);
    }
    let data_scale = if data_pairs > 0 { 1.0 / data_pairs as f64 } else { 0.0 };
    let reg_coef = if reg_pairs > 0 { alpha_n / reg_pairs as f64 } else { 0.0 };

    let ev = Evaluator::new(model, pairs.iter().map(|p| p.cell));
    let parts: Vec<(Fragment, Sums)> = pairs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut frag = ev.fragment();
            let mut sc = PairScratch::new(model.layout());
            let mut sums = Sums::default();
            for p in chunk {
                let s = &batch[p.sample as usize];
                let mut loss = 0.0;
                let reg = p.reg.then(|| RegSpec {
                    coef: reg_coef,
                    anchor: model.tree().cell(p.cell).anchor.normal,
                });
                let out = ev.accumulate(
                    &s.point,
                    p.cell,
                    |raw| {
                        if !p.data {
                            return 0.0;
                        }
                        let (l, d) = pointwise(mode, raw, s.target);
                        loss = l;
                        d * data_scale
                    },
                    reg,
                    &mut frag,
                    &mut sc,
                );
                sums.data += loss;
                if let Some(r) = out.reg {
                    sums.reg += r;
                }
                sums.skipped += out.reg_skipped as usize;
            }
            (frag, sums)
        })
        .collect();

    let mut iter = parts.into_iter();
    let (mut total, mut sums) = iter.next().expect("at least one chunk");
    for (f, s) in iter {
        total.add(&f);
        sums.data += s.data;
        sums.reg += s.reg;
        sums.skipped += s.skipped;
    }
    ev.finish(total, grads);
    stats.data_loss = sums.data * data_scale;
    stats.reg_loss = sums.reg * reg_coef;
    stats.reg_skipped = sums.skipped;
    Ok(stats)
}

/// Mean data loss over located pairs and its gradient.
pub fn data_loss(model: &FieldModel, batch: &[TrainingSample]) -> Result<(f64, Params, BatchStats), TrainError> {
    let mut g = Params::zeros(model.layout().clone());
    let s = batch_loss(model, batch, true, 0.0, &mut g)?;
    Ok((s.data_loss, g, s))
}

/// `alpha_n * mean |n_hat - n_a|^2` over on-surface samples and its gradient.
pub fn normal_regularizer(
    model: &FieldModel,
    batch: &[TrainingSample],
    alpha_n: f64,
) -> Result<(f64, Params, BatchStats), TrainError> {
    let mut g = Params::zeros(model.layout().clone());
    let s = batch_loss(model, batch, false, alpha_n, &mut g)?;
    Ok((s.reg_loss, g, s))
}
