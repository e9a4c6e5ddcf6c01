use nalgebra::Vector3;
use rayon::prelude::*;

use super::conv::{aggregate_backward, axpy, dot};
use super::interp::{cyl_radius, cyl_weights_local, encode_into, trilinear_weights_grad};
use super::{FieldModel, Interpolation, Layout, Params};
use crate::tree::{cell_center, CellId};

/// Blend of at most eight source features with weights and weight gradients in `x`.
struct Blend {
    n: usize,
    src: [u32; 8],
    w: [f64; 8],
    grad: [Vector3<f64>; 8],
}

/// Per-call working buffers; reuse across pairs to avoid allocation.
pub struct PairScratch {
    z: Vec<f64>,
    dpe: Vec<f64>,
    a: Vec<f64>,
    g0: Vec<f64>,
    q: Vec<f64>,
    y: Vec<f64>,
}

impl PairScratch {
    pub fn new(l: &Layout) -> Self {
        let fp = l.f + l.p;
        Self {
            z: vec![0.0; fp],
            dpe: vec![0.0; l.p],
            a: vec![0.0; l.hidden],
            g0: vec![0.0; fp],
            q: vec![0.0; fp],
            y: vec![0.0; fp],
        }
    }
}

/// Partial gradients over the cells and sources of one [`Evaluator`].
#[derive(Debug, Clone)]
pub struct Fragment {
    dw1: Vec<f64>,
    dw2: Vec<f64>,
    db2: f64,
    dcst: Vec<f64>,
    dsrc: Vec<f64>,
}

impl Fragment {
    /// Element-wise sum; callers fix the order for reproducibility.
    pub fn add(&mut self, other: &Fragment) {
        for (a, b) in [
            (&mut self.dw1, &other.dw1),
            (&mut self.dw2, &other.dw2),
            (&mut self.dcst, &other.dcst),
            (&mut self.dsrc, &other.dsrc),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.db2 += other.db2;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOut {
    pub raw: f64,
    /// Gradient of the raw decoder value with respect to the query point.
    pub normal: Vector3<f64>,
    /// `|n_hat - n_a|^2` when the regularizer ran on this pair.
    pub reg: Option<f64>,
    /// Regularizer requested but the point gradient vanished.
    pub reg_skipped: bool,
}

/// Normal regularization of one pair: weight in the loss and anchor normal.
#[derive(Debug, Clone, Copy)]
pub struct RegSpec {
    pub coef: f64,
    pub anchor: Vector3<f64>,
}

/// Caches everything that is constant per cell for a set of cells: the
/// aggregated (or corner) features and `b1 + W1_n phi_n(n_a)`.
pub struct Evaluator<'m> {
    model: &'m FieldModel,
    cells: Vec<CellId>,
    cst: Vec<f64>,
    src_ids: Vec<u32>,
    src_vals: Vec<f64>,
}

impl<'m> Evaluator<'m> {
    pub fn new(model: &'m FieldModel, cells: impl IntoIterator<Item = CellId>) -> Self {
        let mut cells: Vec<CellId> = cells.into_iter().collect();
        cells.sort_unstable();
        cells.dedup();
        let l = model.layout();
        let (f, h, d, fp) = (l.f, l.hidden, l.d(), l.f + l.p);
        let w1 = model.params.w1();
        let b1 = model.params.b1();
        let mut cst = vec![0.0; cells.len() * h];
        cst.par_chunks_mut(h).zip(cells.par_iter()).for_each(|(out, &c)| {
            let phi = model.normal_encoding(c);
            for i in 0..h {
                out[i] = b1[i] + dot(&w1[i * d + fp..(i + 1) * d], phi);
            }
        });
        let (src_ids, src_vals) = match model.config.interpolation {
            Interpolation::Cylindrical => {
                let mut vals = vec![0.0; cells.len() * 3 * f];
                vals.par_chunks_mut(3 * f)
                    .zip(cells.par_iter())
                    .for_each(|(out, &c)| model.aggregate_into(c, out));
                (Vec::new(), vals)
            }
            Interpolation::Trilinear => {
                let mut ids: Vec<u32> = cells.iter().flat_map(|&c| model.cell_corners(c).unwrap()).collect();
                ids.sort_unstable();
                ids.dedup();
                let feats = model.params.features();
                let vals = ids.iter().flat_map(|&i| feats[i as usize * f..][..f].iter().copied()).collect();
                (ids, vals)
            }
        };
        Self {
            model,
            cells,
            cst,
            src_ids,
            src_vals,
        }
    }

    pub fn model(&self) -> &FieldModel {
        self.model
    }

    pub fn cells(&self) -> &[CellId] {
        &self.cells
    }

    fn slot(&self, cell: CellId) -> usize {
        self.cells.binary_search(&cell).expect("cell not cached by this evaluator")
    }

    /// Zeroed gradient fragment sized for this evaluator.
    pub fn fragment(&self) -> Fragment {
        let l = self.model.layout();
        Fragment {
            dw1: vec![0.0; l.hidden * (l.f + l.p)],
            dw2: vec![0.0; l.hidden],
            db2: 0.0,
            dcst: vec![0.0; self.cells.len() * l.hidden],
            dsrc: vec![0.0; self.src_vals.len()],
        }
    }

    fn blend(&self, slot: usize, cell: CellId, x: &Vector3<f64>) -> Blend {
        let m = self.model;
        let key = &m.tree.cell(cell).key;
        let frame = m.frame(cell);
        let height = m.cell_height(cell);
        let p = frame.transpose() * (x - cell_center(key));
        let mut b = Blend {
            n: 0,
            src: [0; 8],
            w: [0.0; 8],
            grad: [Vector3::zeros(); 8],
        };
        match m.config.interpolation {
            Interpolation::Cylindrical => {
                let (w, g) = cyl_weights_local(&p, height, cyl_radius(height, m.config.radius));
                b.n = 3;
                for k in 0..3 {
                    b.src[k] = (slot * 3 + k) as u32;
                    b.w[k] = w[k];
                    b.grad[k] = frame * g[k];
                }
            }
            Interpolation::Trilinear => {
                let mut uvw = p / height + Vector3::repeat(0.5);
                let mut mask = Vector3::repeat(1.0 / height);
                for a in 0..3 {
                    if !(0.0..=1.0).contains(&uvw[a]) {
                        uvw[a] = uvw[a].clamp(0.0, 1.0);
                        mask[a] = 0.0;
                    }
                }
                let (w, g) = trilinear_weights_grad(&uvw);
                let corners = m.cell_corners(cell).unwrap();
                b.n = 8;
                for k in 0..8 {
                    b.src[k] = self.src_ids.binary_search(&corners[k]).expect("corner cached") as u32;
                    b.w[k] = w[k];
                    b.grad[k] = frame * g[k].component_mul(&mask);
                }
            }
        }
        b
    }

    fn source(&self, s: u32) -> &[f64] {
        let f = self.model.layout().f;
        &self.src_vals[s as usize * f..][..f]
    }

    /// Fills `z` and `a`; returns the raw decoder value.
    fn forward_into(&self, slot: usize, b: &Blend, x: &Vector3<f64>, sc: &mut PairScratch, deriv: bool) -> f64 {
        let l = self.model.layout();
        let (f, h, d, fp) = (l.f, l.hidden, l.d(), l.f + l.p);
        let z = &mut sc.z;
        z[..f].fill(0.0);
        for k in 0..b.n {
            axpy(b.w[k], self.source(b.src[k]), &mut z[..f]);
        }
        let pe = self.model.config.pe_point;
        encode_into(x, pe, &mut z[f..], if deriv { Some(&mut sc.dpe) } else { None });
        let w1 = self.model.params.w1();
        let w2 = self.model.params.w2();
        let cst = &self.cst[slot * h..][..h];
        let mut raw = self.model.params.b2();
        for i in 0..h {
            let a = cst[i] + dot(&w1[i * d..i * d + fp], &sc.z);
            sc.a[i] = a;
            if a > 0.0 {
                raw += w2[i] * a;
            }
        }
        raw
    }

    /// Hidden pre-activations at `x`; kinks sit where any entry is zero.
    pub fn preactivations(&self, x: &Vector3<f64>, cell: CellId) -> Vec<f64> {
        let mut sc = PairScratch::new(self.model.layout());
        self.forward(x, cell, &mut sc);
        sc.a
    }

    /// Raw decoder value at `x` inside `cell`.
    pub fn forward(&self, x: &Vector3<f64>, cell: CellId, sc: &mut PairScratch) -> f64 {
        let slot = self.slot(cell);
        let b = self.blend(slot, cell, x);
        self.forward_into(slot, &b, x, sc, false)
    }

    /// Forward pass plus accumulation of `gl(raw) * d raw / d theta` and, when
    /// `reg` is set, of `coef * d |n_hat - n_a|^2 / d theta`.
    pub fn accumulate(
        &self,
        x: &Vector3<f64>,
        cell: CellId,
        gl: impl FnOnce(f64) -> f64,
        reg: Option<RegSpec>,
        frag: &mut Fragment,
        sc: &mut PairScratch,
    ) -> PairOut {
        let l = self.model.layout();
        let (f, h, d, fp) = (l.f, l.hidden, l.d(), l.f + l.p);
        let slot = self.slot(cell);
        let b = self.blend(slot, cell, x);
        let raw = self.forward_into(slot, &b, x, sc, true);
        let gl = gl(raw);
        let w1 = self.model.params.w1();
        let w2 = self.model.params.w2();

        // g0 = W1^T (w2 * relu'(a)) over the feature and point columns.
        sc.g0.fill(0.0);
        for i in 0..h {
            if sc.a[i] > 0.0 {
                axpy(w2[i], &w1[i * d..i * d + fp], &mut sc.g0);
            }
        }
        let mut normal = Vector3::zeros();
        let mut vg = [0.0; 8];
        for k in 0..b.n {
            vg[k] = dot(self.source(b.src[k]), &sc.g0[..f]);
            normal += b.grad[k] * vg[k];
        }
        for j in 0..l.p {
            normal[j % 3] += sc.g0[f + j] * sc.dpe[j];
        }

        let mut out = PairOut {
            raw,
            normal,
            reg: None,
            reg_skipped: false,
        };
        let mut cr = 0.0;
        let mut gu = [0.0; 8];
        if let Some(spec) = reg {
            let nn = normal.norm();
            if nn < 1e-12 {
                out.reg_skipped = true;
            } else {
                let nh = normal / nn;
                let res = nh - spec.anchor;
                out.reg = Some(res.norm_squared());
                let u = (res - nh * nh.dot(&res)) * (2.0 / nn);
                cr = spec.coef;
                sc.q[..f].fill(0.0);
                for k in 0..b.n {
                    gu[k] = b.grad[k].dot(&u);
                    axpy(gu[k], self.source(b.src[k]), &mut sc.q[..f]);
                }
                for j in 0..l.p {
                    sc.q[f + j] = sc.dpe[j] * u[j % 3];
                }
            }
        }

        for j in 0..fp {
            sc.y[j] = gl * sc.z[j] + if cr != 0.0 { cr * sc.q[j] } else { 0.0 };
        }
        let dcst = &mut frag.dcst[slot * h..][..h];
        for i in 0..h {
            let a = sc.a[i];
            if a <= 0.0 {
                continue;
            }
            let row = &w1[i * d..i * d + fp];
            let delta0 = w2[i];
            axpy(delta0, &sc.y, &mut frag.dw1[i * fp..(i + 1) * fp]);
            let mut dw2 = gl * a;
            if cr != 0.0 {
                dw2 += cr * dot(row, &sc.q);
            }
            frag.dw2[i] += dw2;
            dcst[i] += gl * delta0;
        }
        frag.db2 += gl;
        for k in 0..b.n {
            let coef = gl * b.w[k] + cr * gu[k];
            if coef != 0.0 {
                axpy(coef, &sc.g0[..f], &mut frag.dsrc[b.src[k] as usize * f..][..f]);
            }
        }
        out
    }

    /// Adds the fragment's gradients to `grads`, routing cached-feature
    /// gradients back through the convolution when present.
    pub fn finish(&self, frag: Fragment, grads: &mut Params) {
        let m = self.model;
        let l = m.layout().clone();
        let (f, h, d, fp) = (l.f, l.hidden, l.d(), l.f + l.p);
        {
            let gw1 = grads.w1_mut();
            for i in 0..h {
                axpy(1.0, &frag.dw1[i * fp..(i + 1) * fp], &mut gw1[i * d..i * d + fp]);
            }
            for (slot, &c) in self.cells.iter().enumerate() {
                let phi = m.normal_encoding(c);
                let dc = &frag.dcst[slot * h..][..h];
                for i in 0..h {
                    if dc[i] != 0.0 {
                        axpy(dc[i], phi, &mut gw1[i * d + fp..(i + 1) * d]);
                    }
                }
            }
        }
        {
            let gb1 = grads.b1_mut();
            for slot in 0..self.cells.len() {
                axpy(1.0, &frag.dcst[slot * h..][..h], gb1);
            }
        }
        axpy(1.0, &frag.dw2, grads.w2_mut());
        let b2 = grads.b2() + frag.db2;
        grads.set_b2(b2);

        match (m.config.interpolation, &m.conv) {
            (Interpolation::Cylindrical, Some(topo)) => {
                let (head, tail) = grads.data.split_at_mut(l.kernels.start);
                let gfeat = &mut head[l.features.clone()];
                let gkern = &mut tail[..l.kernels.len()];
                for (slot, &c) in self.cells.iter().enumerate() {
                    let dout = &frag.dsrc[slot * 3 * f..][..3 * f];
                    if dout.iter().any(|&v| v != 0.0) {
                        aggregate_backward(topo, m.params.features(), m.params.kernels(), f, c, dout, gfeat, gkern);
                    }
                }
            }
            (Interpolation::Cylindrical, None) => {
                let gfeat = grads.features_mut();
                for (slot, &c) in self.cells.iter().enumerate() {
                    axpy(1.0, &frag.dsrc[slot * 3 * f..][..3 * f], &mut gfeat[c.index() * 3 * f..][..3 * f]);
                }
            }
            (Interpolation::Trilinear, _) => {
                let gfeat = grads.features_mut();
                for (s, &id) in self.src_ids.iter().enumerate() {
                    axpy(1.0, &frag.dsrc[s * f..][..f], &mut gfeat[id as usize * f..][..f]);
                }
            }
        }
    }
}
