use nalgebra::{Rotation3, Vector3};
use ogrid_core::field::{
    cyl_coefficients, cyl_radius, interpolate, positional_encode, trilinear_interpolate, trilinear_weights, FieldConfig,
    FieldModel, RadiusMode,
};
use ogrid_core::mesh::{OrientedPoint, OrientedPointSet};
use ogrid_core::tree::{build_structured_octree, search_orientation, Action, CylLocalCoords, DualTree, LodSet};
use proptest::prelude::*;

fn local_coords(p: &Vector3<f64>, height: f64) -> CylLocalCoords {
    let h1 = (height / 2.0 - p.z).clamp(0.0, height);
    CylLocalCoords {
        h1,
        h2: height - h1,
        r: (p.x * p.x + p.y * p.y).sqrt(),
        height,
    }
}

fn unit(v: [f64; 3]) -> Option<Vector3<f64>> {
    let v = Vector3::from(v);
    (v.norm() > 1e-3).then(|| v.normalize())
}

/// Anchor normal `Rz Ry Rx e_z` written out by hand.
fn euler_normal(rx: f64, ry: f64, rz: f64) -> Vector3<f64> {
    Vector3::new(
        rz.cos() * ry.sin() * rx.cos() + rz.sin() * rx.sin(),
        rz.sin() * ry.sin() * rx.cos() - rz.cos() * rx.sin(),
        ry.cos() * rx.cos(),
    )
}

proptest! {
    #[test]
    fn coefficients_partition_cylinder_volume(
        x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64,
        lod in 0u8..8, inscribed in any::<bool>(),
    ) {
        let h = 2.0 / f64::from(1u32 << lod);
        let mode = if inscribed { RadiusMode::Inscribed } else { RadiusMode::Circumscribed };
        let radius = cyl_radius(h, mode);
        let c = cyl_coefficients(&local_coords(&(Vector3::new(x, y, z) * h), h), radius);
        let expect = h * radius * radius;
        prop_assert!((c.sum() - expect).abs() <= 1e-12 * expect.max(1e-300) + 1e-300);
        prop_assert!(c.c.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn coefficients_ignore_in_plane_rotation(
        x in -0.9..0.9f64, y in -0.9..0.9f64, z in -0.9..0.9f64, theta in -3.2..3.2f64,
    ) {
        let h = 0.25;
        let p = Vector3::new(x, y, z) * h;
        let q = Rotation3::from_axis_angle(&Vector3::z_axis(), theta) * p;
        let radius = cyl_radius(h, RadiusMode::Circumscribed);
        let a = cyl_coefficients(&local_coords(&p, h), radius);
        let b = cyl_coefficients(&local_coords(&q, h), radius);
        for k in 0..3 {
            prop_assert!((a.c[k] - b.c[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn outside_radius_blends_to_middle_feature(
        r_extra in 0.0..1.0f64, z in -1.0..1.0f64, phi in -3.2..3.2f64,
        feats in proptest::collection::vec(-5.0..5.0f64, 9),
    ) {
        let h = 0.5;
        let radius = cyl_radius(h, RadiusMode::Inscribed);
        let r = radius * (1.0 + r_extra);
        let p = Vector3::new(r * phi.cos(), r * phi.sin(), z * h);
        let mut local = local_coords(&p, h);
        local.r = local.r.max(radius);
        let c = cyl_coefficients(&local, radius);
        let out = interpolate(&c, [&feats[0..3], &feats[3..6], &feats[6..9]]);
        prop_assert_eq!(out, feats[3..6].to_vec());
    }

    #[test]
    fn greedy_orientation_matches_brute_force(n in prop::array::uniform3(-1.0..1.0f64), depth in 1usize..8) {
        let Some(n) = unit(n) else { return Ok(()); };
        let path = search_orientation(&n, depth).unwrap();
        prop_assert_eq!(path.len(), depth);
        let mut ranges = [(-std::f64::consts::PI, std::f64::consts::PI); 3];
        let mut last = f64::NEG_INFINITY;
        for step in &path {
            let mut best: Option<(usize, f64)> = None;
            let mut children = Vec::new();
            for (i, action) in Action::ALL.iter().enumerate() {
                let mut child = ranges;
                if i > 0 {
                    let axis = (i - 1) / 2;
                    let (lo, hi) = child[axis];
                    let mid = 0.5 * (lo + hi);
                    child[axis] = if i % 2 == 0 { (mid, hi) } else { (lo, mid) };
                }
                let mids = child.map(|(lo, hi)| 0.5 * (lo + hi));
                let cos = euler_normal(mids[0], mids[1], mids[2]).dot(&n);
                children.push((*action, child));
                if best.is_none_or(|(_, b)| cos > b + 1e-12) {
                    best = Some((i, cos));
                }
            }
            let (bi, bcos) = best.unwrap();
            prop_assert_eq!(step.action, children[bi].0);
            prop_assert!((step.cosine - bcos).abs() < 1e-12);
            prop_assert!(step.cosine >= last - 1e-12);
            last = step.cosine;
            ranges = children[bi].1;
        }
    }

    #[test]
    fn trilinear_weights_partition_unity(u in 0.0..=1.0f64, v in 0.0..=1.0f64, w in 0.0..=1.0f64) {
        let wts = trilinear_weights(&Vector3::new(u, v, w));
        prop_assert!((wts.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(wts.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn positional_encoding_layout(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64, levels in 0usize..8) {
        let v = Vector3::new(x, y, z);
        let e = positional_encode(&v, levels);
        prop_assert_eq!(e.len(), 6 * levels + 3);
        prop_assert_eq!(&e[..3], v.as_slice());
        for l in 0..levels {
            let f = std::f64::consts::PI * f64::from(1u32 << l);
            for a in 0..3 {
                prop_assert!((e[3 + 6 * l + a] - (f * v[a]).sin()).abs() < 1e-12);
                prop_assert!((e[6 + 6 * l + a] - (f * v[a]).cos()).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn trilinear_reproduces_corners() {
    let corners: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, -(i as f64)]).collect();
    let refs: [&[f64]; 8] = std::array::from_fn(|i| corners[i].as_slice());
    for i in 0..8 {
        let uvw = Vector3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64);
        assert_eq!(trilinear_interpolate(&refs, &uvw), corners[i]);
    }
    let mid = trilinear_interpolate(&refs, &Vector3::repeat(0.5));
    assert!((mid[0] - 3.5).abs() < 1e-12);
}

fn toy_model(seed: u64) -> FieldModel {
    let points = (0..5)
        .map(|i| OrientedPoint {
            position: Vector3::new(0.05 + 0.1 * i as f64, 0.1, -0.1 * i as f64),
            normal: Vector3::new(1.0, i as f64, 0.5).normalize(),
        })
        .collect();
    let set = OrientedPointSet { points, seed };
    let lods = LodSet::new(vec![3]).unwrap();
    let tree = DualTree::assign_anchors(&build_structured_octree(&set, &lods).unwrap(), &set).unwrap().0;
    let cfg = FieldConfig {
        features: 3,
        hidden: 4,
        conv_kernel: Some(3),
        ..FieldConfig::default()
    };
    FieldModel::new(tree, cfg, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn aggregation_is_linear(alpha in -2.0..2.0f64, beta in -2.0..2.0f64, seed in 0u64..1000) {
        let mut m = toy_model(seed);
        let n = m.params().features().len();
        let e: Vec<f64> = (0..n).map(|i| ((i as f64 + seed as f64) * 0.37).sin()).collect();
        let e2: Vec<f64> = (0..n).map(|i| ((i as f64 * 1.3 + 0.5) * 0.71).cos()).collect();
        let keys: Vec<_> = m.tree().cells().iter().map(|c| c.key).collect();
        let mut eval = |v: &[f64]| {
            m.params_mut().features_mut().copy_from_slice(v);
            keys.iter().map(|k| m.aggregate(k).unwrap()).collect::<Vec<_>>()
        };
        let a = eval(&e);
        let b = eval(&e2);
        let mix: Vec<f64> = e.iter().zip(&e2).map(|(x, y)| alpha * x + beta * y).collect();
        let c = eval(&mix);
        for ((ca, cb), cc) in a.iter().zip(&b).zip(&c) {
            for s in 0..3 {
                for i in 0..ca[s].len() {
                    prop_assert!((alpha * ca[s][i] + beta * cb[s][i] - cc[s][i]).abs() < 1e-12);
                }
            }
        }
    }
}
