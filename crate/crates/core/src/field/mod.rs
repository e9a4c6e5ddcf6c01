//! Learnable field over a [`DualTree`]: per-cell features, shared sparse
//! convolution, cylindrical or trilinear interpolation and an MLP decoder.

mod conv;
mod engine;
mod interp;

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{cell_center, cell_side, CellId, CellKey, DualTree, TreeError};

pub use conv::neighborhood;
pub use engine::{Evaluator, Fragment, PairOut, PairScratch, RegSpec};
pub use interp::{
    cyl_coefficients, cyl_radius, encoding_len, interpolate, positional_encode, trilinear_interpolate, trilinear_weights,
    CylCoefficients, RadiusMode,
};

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("invalid field configuration: {0}")]
    InvalidConfig(String),
    #[error("query point is not inside an occupied cell")]
    NotLocated,
    #[error("parameter vector has {got} values, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Cylindrical,
    Trilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    #[default]
    Oriented,
    /// Axis-aligned cell frames. Anchor normals still feed the normal encoding.
    Regular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderMode {
    #[default]
    Sdf,
    Occupancy,
}

impl DecoderMode {
    pub fn iso(self) -> f64 {
        match self {
            DecoderMode::Sdf => 0.0,
            DecoderMode::Occupancy => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub features: usize,
    pub hidden: usize,
    pub pe_point: usize,
    pub pe_normal: usize,
    /// Convolution kernel size; `None` disables aggregation.
    pub conv_kernel: Option<usize>,
    pub interpolation: Interpolation,
    pub grid: GridMode,
    pub radius: RadiusMode,
    pub decoder: DecoderMode,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            features: 32,
            hidden: 128,
            pe_point: 6,
            pe_normal: 6,
            conv_kernel: Some(5),
            interpolation: Interpolation::Cylindrical,
            grid: GridMode::Oriented,
            radius: RadiusMode::Circumscribed,
            decoder: DecoderMode::Sdf,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<(), FieldError> {
        let bad = |m: &str| Err(FieldError::InvalidConfig(m.into()));
        if self.features == 0 || self.hidden == 0 {
            return bad("feature and hidden widths must be positive");
        }
        if self.pe_point > 20 || self.pe_normal > 20 {
            return bad("at most 20 encoding frequencies");
        }
        match self.conv_kernel {
            Some(k) if k % 2 == 0 || k > 9 => return bad("kernel size must be odd and at most 9"),
            Some(_) if self.interpolation == Interpolation::Trilinear => {
                return bad("convolution requires cylindrical interpolation")
            }
            _ => {}
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.features + encoding_len(self.pe_point) + encoding_len(self.pe_normal)
    }
}

/// Offsets of every parameter group inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub f: usize,
    pub hidden: usize,
    pub p: usize,
    pub n: usize,
    pub features: Range<usize>,
    pub kernels: Range<usize>,
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
}

impl Layout {
    fn new(cfg: &FieldConfig, feature_len: usize, taps: usize) -> Self {
        let f = cfg.features;
        let d = cfg.input_width();
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let features = take(feature_len);
        let kernels = take(3 * taps * f * f);
        let w1 = take(cfg.hidden * d);
        let b1 = take(cfg.hidden);
        let w2 = take(cfg.hidden);
        let b2 = take(1);
        Self {
            f,
            hidden: cfg.hidden,
            p: encoding_len(cfg.pe_point),
            n: encoding_len(cfg.pe_normal),
            features,
            kernels,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn d(&self) -> usize {
        self.f + self.p + self.n
    }

    pub fn len(&self) -> usize {
        self.b2.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All learnable values in one flat vector; also used for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layout: Layout,
    pub data: Vec<f64>,
}

macro_rules! group {
    ($get:ident, $get_mut:ident) => {
        pub fn $get(&self) -> &[f64] {
            &self.data[self.layout.$get.clone()]
        }
        pub fn $get_mut(&mut self) -> &mut [f64] {
            &mut self.data[self.layout.$get.clone()]
        }
    };
}

impl Params {
    pub fn zeros(layout: Layout) -> Self {
        let data = vec![0.0; layout.len()];
        Self { layout, data }
    }

    group!(features, features_mut);
    group!(kernels, kernels_mut);
    group!(w1, w1_mut);
    group!(b1, b1_mut);
    group!(w2, w2_mut);

    pub fn b2(&self) -> f64 {
        self.data[self.layout.b2.start]
    }

    pub fn set_b2(&mut self, v: f64) {
        let i = self.layout.b2.start;
        self.data[i] = v;
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Lattice vertices of occupied cells, per level.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CornerTopology {
    pub count: usize,
    pub cell_corners: Vec<[u32; 8]>,
}

impl CornerTopology {
    fn build(tree: &DualTree) -> Self {
        let mut ids: BTreeMap<(u8, [u32; 3]), u32> = BTreeMap::new();
        for cell in tree.cells() {
            for b in 0..8u32 {
                let v = corner_of(&cell.key, b);
                ids.entry((cell.key.lod, v)).or_insert(0);
            }
        }
        for (i, id) in ids.values_mut().enumerate() {
            *id = i as u32;
        }
        let cell_corners = tree
            .cells()
            .iter()
            .map(|c| std::array::from_fn(|b| ids[&(c.key.lod, corner_of(&c.key, b as u32))]))
            .collect();
        Self {
            count: ids.len(),
            cell_corners,
        }
    }
}

fn corner_of(key: &CellKey, b: u32) -> [u32; 3] {
    [key.ix + (b & 1), key.iy + (b >> 1 & 1), key.iz + (b >> 2 & 1)]
}

/// The complete learnable field.
#[derive(Debug, Clone)]
pub struct FieldModel {
    config: FieldConfig,
    tree: DualTree,
    params: Params,
    conv: Option<conv::ConvTopology>,
    corners: Option<CornerTopology>,
    frames: Vec<Matrix3<f64>>,
    normal_enc: Vec<f64>,
}

impl FieldModel {
    /// Builds a model and draws initial parameters from `seed`.
    pub fn new(tree: DualTree, config: FieldConfig, seed: u64) -> Result<Self, FieldError> {
        let mut model = Self::empty(tree, config)?;
        model.initialize(seed);
        Ok(model)
    }

    /// Builds a model around an existing parameter vector.
    pub fn from_parts(tree: DualTree, config: FieldConfig, data: Vec<f64>) -> Result<Self, FieldError> {
        let mut model = Self::empty(tree, config)?;
        if data.len() != model.params.data.len() {
            return Err(FieldError::ShapeMismatch {
                expected: model.params.data.len(),
                got: data.len(),
            });
        }
        model.params.data = data;
        Ok(model)
    }

    fn empty(tree: DualTree, config: FieldConfig) -> Result<Self, FieldError> {
        config.validate()?;
        if tree.is_empty() {
            return Err(FieldError::InvalidConfig("tree has no cells".into()));
        }
        let f = config.features;
        let (corners, feature_len) = match config.interpolation {
            Interpolation::Cylindrical => (None, tree.len() * 3 * f),
            Interpolation::Trilinear => {
                let c = CornerTopology::build(&tree);
                let n = c.count * f;
                (Some(c), n)
            }
        };
        let conv = config.conv_kernel.map(|k| conv::ConvTopology::build(&tree, k));
        let taps = config.conv_kernel.map_or(0, |k| k * k * k);
        let layout = Layout::new(&config, feature_len, taps);
        let frames = tree
            .cells()
            .iter()
            .map(|c| match config.grid {
                GridMode::Oriented => c.anchor.rotation,
                GridMode::Regular => Matrix3::identity(),
            })
            .collect();
        let n = layout.n;
        let mut normal_enc = vec![0.0; tree.len() * n];
        for (c, out) in tree.cells().iter().zip(normal_enc.chunks_exact_mut(n)) {
            interp::encode_into(&c.anchor.normal, config.pe_normal, out, None);
        }
        Ok(Self {
            config,
            tree,
            params: Params::zeros(layout),
            conv,
            corners,
            frames,
            normal_enc,
        })
    }

    fn initialize(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.01).expect("valid sigma");
        let l = self.params.layout.clone();
        for v in self.params.features_mut() {
            *v = noise.sample(&mut rng);
        }
        if let Some(k) = self.config.conv_kernel {
            let f = l.f;
            let taps = k * k * k;
            let center = conv::tap_index([0, 0, 0], k);
            let kern = self.params.kernels_mut();
            for slot in 0..3 {
                for tap in 0..taps {
                    let m = &mut kern[(slot * taps + tap) * f * f..][..f * f];
                    if tap == center {
                        for i in 0..f {
                            m[i * f + i] = 1.0;
                        }
                    } else {
                        for v in m.iter_mut() {
                            *v = noise.sample(&mut rng);
                        }
                    }
                }
            }
        }
        let a1 = (6.0 / l.d() as f64).sqrt();
        for v in self.params.w1_mut() {
            *v = rng.gen_range(-a1..a1);
        }
        let a2 = (6.0 / l.hidden as f64).sqrt();
        for v in self.params.w2_mut() {
            *v = rng.gen_range(-a2..a2);
        }
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn tree(&self) -> &DualTree {
        &self.tree
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.params.layout
    }

    /// Number of lattice corners holding features (trilinear mode only).
    pub fn corner_count(&self) -> usize {
        self.corners.as_ref().map_or(0, |c| c.count)
    }

    /// Corner feature ids of a cell, x from bit 0, y bit 1, z bit 2.
    pub fn cell_corners(&self, cell: CellId) -> Option<[u32; 8]> {
        self.corners.as_ref().map(|c| c.cell_corners[cell.index()])
    }

    /// Raw feature `e_slot` of a cell (cylindrical mode).
    pub fn feature(&self, cell: CellId, slot: usize) -> &[f64] {
        let f = self.layout().f;
        &self.params.features()[(cell.index() * 3 + slot) * f..][..f]
    }

    /// Frame whose z column is the cylinder axis; identity in regular mode.
    pub fn frame(&self, cell: CellId) -> &Matrix3<f64> {
        &self.frames[cell.index()]
    }

    pub(crate) fn normal_encoding(&self, cell: CellId) -> &[f64] {
        let n = self.layout().n;
        &self.normal_enc[cell.index() * n..][..n]
    }

    /// Aggregated features `(e0, e1, e2)` of a cell; the raw features when
    /// convolution is disabled.
    pub fn aggregate(&self, key: &CellKey) -> Result<[Vec<f64>; 3], FieldError> {
        if self.config.interpolation != Interpolation::Cylindrical {
            return Err(FieldError::InvalidConfig("aggregation needs cylindrical features".into()));
        }
        let id = self.tree.id_of(key).ok_or(TreeError::KeyNotInTree(*key))?;
        let f = self.layout().f;
        let mut out = vec![0.0; 3 * f];
        self.aggregate_into(id, &mut out);
        Ok(std::array::from_fn(|k| out[k * f..(k + 1) * f].to_vec()))
    }

    pub(crate) fn aggregate_into(&self, cell: CellId, out: &mut [f64]) {
        let f = self.layout().f;
        match &self.conv {
            Some(topo) => conv::aggregate_into(topo, self.params.features(), self.params.kernels(), f, cell, out),
            None => out[..3 * f].copy_from_slice(&self.params.features()[cell.index() * 3 * f..][..3 * f]),
        }
    }

    /// Cell containing `x` at `lod`, if occupied.
    pub fn locate(&self, x: &Vector3<f64>, lod: u8) -> Option<CellId> {
        self.tree.locate(x, lod)
    }

    /// Point in the cell's frame, relative to its center.
    pub fn to_frame(&self, cell: CellId, x: &Vector3<f64>) -> Vector3<f64> {
        let key = &self.tree.cell(cell).key;
        self.frames[cell.index()].transpose() * (x - cell_center(key))
    }

    pub fn cell_height(&self, cell: CellId) -> f64 {
        cell_side(self.tree.cell(cell).key.lod)
    }

    /// Maps a raw decoder value to the field output.
    pub fn activate(&self, raw: f64) -> f64 {
        match self.config.decoder {
            DecoderMode::Sdf => raw,
            DecoderMode::Occupancy => sigmoid(raw),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Field output at `x` using the cell located at `lod`; `None` when discarded.
pub fn field_forward(model: &FieldModel, x: &Vector3<f64>, lod: u8) -> Option<f64> {
    let cell = model.locate(x, lod)?;
    let ev = Evaluator::new(model, [cell]);
    let raw = ev.forward(x, cell, &mut PairScratch::new(model.layout()));
    Some(model.activate(raw))
}

#[derive(Debug, Clone)]
pub struct FieldGradient {
    pub params: Params,
    pub point: Vector3<f64>,
}

/// Gradient of `upstream * output` with respect to every parameter and to `x`.
pub fn field_backward(model: &FieldModel, x: &Vector3<f64>, lod: u8, upstream: f64) -> Result<FieldGradient, FieldError> {
    let cell = model.locate(x, lod).ok_or(FieldError::NotLocated)?;
    let ev = Evaluator::new(model, [cell]);
    let mut scratch = PairScratch::new(model.layout());
    let mut frag = ev.fragment();
    let mode = model.config.decoder;
    let out = ev.accumulate(
        x,
        cell,
        |raw| match mode {
            DecoderMode::Sdf => upstream,
            DecoderMode::Occupancy => {
                let s = sigmoid(raw);
                upstream * s * (1.0 - s)
            }
        },
        None,
        &mut frag,
        &mut scratch,
    );
    let scale = match mode {
        DecoderMode::Sdf => upstream,
        DecoderMode::Occupancy => {
            let s = sigmoid(out.raw);
            upstream * s * (1.0 - s)
        }
    };
    let mut params = Params::zeros(model.layout().clone());
    ev.finish(frag, &mut params);
    Ok(FieldGradient {
        params,
        point: out.normal * scale,
    })
}
