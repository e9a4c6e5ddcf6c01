use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::tree::CylLocalCoords;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMode {
    /// `R = H / sqrt(2)`: the cylinder contains the whole cell cross-section.
    #[default]
    Circumscribed,
    /// `R = H / 2`.
    Inscribed,
}

pub fn cyl_radius(height: f64, mode: RadiusMode) -> f64 {
    match mode {
        RadiusMode::Circumscribed => height / std::f64::consts::SQRT_2,
        RadiusMode::Inscribed => height / 2.0,
    }
}

/// Volume weights of the three cell features; `pi` is dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylCoefficients {
    pub c: [f64; 3],
}

impl CylCoefficients {
    pub fn sum(&self) -> f64 {
        self.c[0] + self.c[1] + self.c[2]
    }
}

/// `c0 = h1 (R^2 - rc^2)`, `c1 = H rc^2`, `c2 = h2 (R^2 - rc^2)` with `rc = min(r, R)`.
pub fn cyl_coefficients(local: &CylLocalCoords, radius: f64) -> CylCoefficients {
    let r2 = radius * radius;
    let s = (local.r * local.r).min(r2);
    CylCoefficients {
        c: [local.h1 * (r2 - s), local.height * s, local.h2 * (r2 - s)],
    }
}

/// Normalized coefficients `c_k / (H R^2)` for a point `p` in the cell frame,
/// and their gradients with respect to `p`. Clamped coordinates have zero
/// subgradient.
pub(crate) fn cyl_weights_local(p: &Vector3<f64>, height: f64, radius: f64) -> ([f64; 3], [Vector3<f64>; 3]) {
    let r2 = radius * radius;
    let rr = p.x * p.x + p.y * p.y;
    let (s, ds) = if rr < r2 {
        (rr, Vector3::new(2.0 * p.x, 2.0 * p.y, 0.0))
    } else {
        (r2, Vector3::zeros())
    };
    let raw_h1 = height / 2.0 - p.z;
    let (h1, dh1) = if raw_h1 <= 0.0 {
        (0.0, Vector3::zeros())
    } else if raw_h1 >= height {
        (height, Vector3::zeros())
    } else {
        (raw_h1, Vector3::new(0.0, 0.0, -1.0))
    };
    let h2 = height - h1;
    let inv = 1.0 / (height * r2);
    let rest = r2 - s;
    // s / r2 is exactly 1 once the radius saturates, so the blend is exactly the middle feature
    let w = [h1 / height * (rest / r2), s / r2, h2 / height * (rest / r2)];
    let g = [
        (dh1 * rest - ds * h1) * inv,
        ds * (height * inv),
        (-dh1 * rest - ds * h2) * inv,
    ];
    (w, g)
}

/// Weighted mean `sum c_k f_k / sum c_k`.
pub fn interpolate(coeffs: &CylCoefficients, feats: [&[f64]; 3]) -> Vec<f64> {
    let s = coeffs.sum();
    let w = coeffs.c.map(|c| c / s);
    let n = feats[0].len();
    (0..n)
        .map(|i| w[0] * feats[0][i] + w[1] * feats[1][i] + w[2] * feats[2][i])
        .collect()
}

/// Corner `b` has x from bit 0, y from bit 1, z from bit 2.
pub fn trilinear_weights(uvw: &Vector3<f64>) -> [f64; 8] {
    let mut w = [0.0; 8];
    for (b, wb) in w.iter_mut().enumerate() {
        let mut v = 1.0;
        for a in 0..3 {
            v *= if b >> a & 1 == 1 { uvw[a] } else { 1.0 - uvw[a] };
        }
        *wb = v;
    }
    w
}

/// Trilinear weights and their gradients with respect to `uvw`.
pub(crate) fn trilinear_weights_grad(uvw: &Vector3<f64>) -> ([f64; 8], [Vector3<f64>; 8]) {
    let mut w = [0.0; 8];
    let mut g = [Vector3::zeros(); 8];
    for b in 0..8 {
        let f: [f64; 3] = std::array::from_fn(|a| if b >> a & 1 == 1 { uvw[a] } else { 1.0 - uvw[a] });
        let d: [f64; 3] = std::array::from_fn(|a| if b >> a & 1 == 1 { 1.0 } else { -1.0 });
        w[b] = f[0] * f[1] * f[2];
        g[b] = Vector3::new(d[0] * f[1] * f[2], f[0] * d[1] * f[2], f[0] * f[1] * d[2]);
    }
    (w, g)
}

pub fn trilinear_interpolate(corners: &[&[f64]; 8], uvw: &Vector3<f64>) -> Vec<f64> {
    let w = trilinear_weights(uvw);
    let n = corners[0].len();
    (0..n).map(|i| (0..8).map(|b| w[b] * corners[b][i]).sum()).collect()
}

pub fn encoding_len(levels: usize) -> usize {
    6 * levels + 3
}

/// `[v, sin(pi v), cos(pi v), sin(2 pi v), cos(2 pi v), ...]`, three entries per block.
pub fn positional_encode(v: &Vector3<f64>, levels: usize) -> Vec<f64> {
    let mut out = vec![0.0; encoding_len(levels)];
    encode_into(v, levels, &mut out, None);
    out
}

/// Writes the encoding and, if requested, the derivative of every entry with
/// respect to its own coordinate (entry `j` depends only on axis `j % 3`).
pub(crate) fn encode_into(v: &Vector3<f64>, levels: usize, out: &mut [f64], deriv: Option<&mut [f64]>) {
    out[..3].copy_from_slice(v.as_slice());
    let mut freq = std::f64::consts::PI;
    let mut d = deriv;
    if let Some(d) = d.as_deref_mut() {
        d[..3].fill(1.0);
    }
    for l in 0..levels {
        let base = 3 + 6 * l;
        for a in 0..3 {
            let (s, c) = (freq * v[a]).sin_cos();
            out[base + a] = s;
            out[base + 3 + a] = c;
            if let Some(d) = d.as_deref_mut() {
                d[base + a] = freq * c;
                d[base + 3 + a] = -freq * s;
            }
        }
        freq *= 2.0;
    }
}
