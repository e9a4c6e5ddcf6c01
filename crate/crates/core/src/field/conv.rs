use crate::tree::{CellId, CellKey, DualTree, TreeError};

/// Occupied cells at the same level within the `k^3` window around `key`,
/// with their offsets. Ordered by tap index.
pub fn neighborhood(tree: &DualTree, key: &CellKey, k: usize) -> Result<Vec<([i32; 3], CellKey)>, TreeError> {
    if !tree.contains(key) {
        return Err(TreeError::KeyNotInTree(*key));
    }
    let r = (k / 2) as i32;
    let mut out = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                let d = [dx, dy, dz];
                if let Some(n) = key.offset(d) {
                    if tree.contains(&n) {
                        out.push((d, n));
                    }
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn tap_index(d: [i32; 3], k: usize) -> usize {
    let r = (k / 2) as i32;
    let k = k as i32;
    (((d[2] + r) * k + (d[1] + r)) * k + (d[0] + r)) as usize
}

/// Neighbor lists of every cell in compressed form.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvTopology {
    pub k: usize,
    start: Vec<u32>,
    /// `(tap, neighbor)` pairs.
    entries: Vec<(u32, u32)>,
}

impl ConvTopology {
    pub fn build(tree: &DualTree, k: usize) -> Self {
        let mut start = Vec::with_capacity(tree.len() + 1);
        let mut entries = Vec::new();
        start.push(0);
        for cell in tree.cells() {
            for (d, n) in neighborhood(tree, &cell.key, k).expect("cell from tree") {
                let id = tree.id_of(&n).expect("neighbor from tree");
                entries.push((tap_index(d, k) as u32, id.0));
            }
            start.push(entries.len() as u32);
        }
        Self { k, start, entries }
    }

    pub fn taps(&self) -> usize {
        self.k * self.k * self.k
    }

    pub fn of(&self, cell: CellId) -> &[(u32, u32)] {
        &self.entries[self.start[cell.index()] as usize..self.start[cell.index() + 1] as usize]
    }
}

/// `out_k = sum_n K_k[tap(n)] e_k(n)` for the three feature slots.
///
/// `features` is laid out `[cell][slot][F]`, `kernels` `[slot][tap][out][in]`.
pub(crate) fn aggregate_into(topo: &ConvTopology, features: &[f64], kernels: &[f64], f: usize, cell: CellId, out: &mut [f64]) {
    out[..3 * f].fill(0.0);
    let taps = topo.taps();
    for &(tap, n) in topo.of(cell) {
        for slot in 0..3 {
            let e = &features[(n as usize * 3 + slot) * f..][..f];
            let kmat = &kernels[(slot * taps + tap as usize) * f * f..][..f * f];
            let o = &mut out[slot * f..][..f];
            for (row, oi) in kmat.chunks_exact(f).zip(o.iter_mut()) {
                *oi += dot(row, e);
            }
        }
    }
}

/// Backward of [`aggregate_into`] given `dout` (`3F`) for `cell`.
pub(crate) fn aggregate_backward(
    topo: &ConvTopology,
    features: &[f64],
    kernels: &[f64],
    f: usize,
    cell: CellId,
    dout: &[f64],
    dfeatures: &mut [f64],
    dkernels: &mut [f64],
) {
    let taps = topo.taps();
    for &(tap, n) in topo.of(cell) {
        for slot in 0..3 {
            let g = &dout[slot * f..][..f];
            let base_k = (slot * taps + tap as usize) * f * f;
            let base_e = (n as usize * 3 + slot) * f;
            let e = &features[base_e..][..f];
            let kmat = &kernels[base_k..][..f * f];
            let dk = &mut dkernels[base_k..][..f * f];
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                axpy(go, e, &mut dk[o * f..][..f]);
            }
            let de = &mut dfeatures[base_e..][..f];
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                axpy(go, &kmat[o * f..][..f], de);
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
