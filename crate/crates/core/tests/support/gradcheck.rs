//! Central-difference gradient checks on small random models.

use nalgebra::Vector3;
use ogrid_core::field::{
    cyl_radius, field_backward, field_forward, DecoderMode, Evaluator, FieldConfig, FieldModel, GridMode, Interpolation,
    RadiusMode,
};
use ogrid_core::mesh::{OrientedPoint, OrientedPointSet};
use ogrid_core::train::{normal_regularizer, TrainingSample};
use ogrid_core::tree::{build_structured_octree, cell_center, cell_side, DualTree, LodSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct GradReport {
    pub params_checked: usize,
    pub max_data_error: f64,
    pub max_point_error: f64,
    pub max_reg_error: f64,
    pub cells: usize,
    pub features: usize,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// A model with at most 27 cells per level and F <= 8, all parameters random.
pub fn random_model(seed: u64) -> FieldModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // all points inside one 3x3x3 block of level-3 cells
    let origin = Vector3::new(rng.gen_range(0..6), rng.gen_range(0..6), rng.gen_range(0..6)).map(|i: i32| -1.0 + 0.25 * i as f64);
    let points = (0..rng.gen_range(2..10))
        .map(|_| OrientedPoint {
            position: origin + Vector3::new(rng.gen_range(0.01..0.74), rng.gen_range(0.01..0.74), rng.gen_range(0.01..0.74)),
            normal: Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize(),
        })
        .collect();
    let set = OrientedPointSet { points, seed };
    let lods = if rng.gen_bool(0.5) { vec![3] } else { vec![2, 3] };
    let lods = LodSet::new(lods).unwrap();
    let tree = DualTree::assign_anchors(&build_structured_octree(&set, &lods).unwrap(), &set).unwrap().0;
    let interpolation = if rng.gen_bool(0.7) { Interpolation::Cylindrical } else { Interpolation::Trilinear };
    let features = rng.gen_range(1..=8);
    let conv_kernel = match (interpolation, rng.gen_range(0..3)) {
        (Interpolation::Trilinear, _) | (_, 0) => None,
        (_, 1) => Some(3),
        _ if features <= 3 => Some(5),
        _ => Some(3),
    };
    let cfg = FieldConfig {
        features,
        hidden: rng.gen_range(2..=8),
        pe_point: rng.gen_range(0..=2),
        pe_normal: rng.gen_range(0..=2),
        conv_kernel,
        interpolation,
        grid: if rng.gen_bool(0.75) { GridMode::Oriented } else { GridMode::Regular },
        radius: if rng.gen_bool(0.5) { RadiusMode::Circumscribed } else { RadiusMode::Inscribed },
        decoder: if rng.gen_bool(0.7) { DecoderMode::Sdf } else { DecoderMode::Occupancy },
    };
    let mut model = FieldModel::new(tree, cfg, seed).unwrap();
    model.params_mut().data.iter_mut().for_each(|v| *v = rng.gen_range(-0.6..0.6));
    model
}

/// A located point away from every kink: clamp boundaries, the radius and
/// ReLU switching points.
fn smooth_point(model: &FieldModel, rng: &mut ChaCha8Rng, lod: u8) -> Vector3<f64> {
    let cells = model.tree().level_cells(lod);
    let h = cell_side(lod);
    let radius = cyl_radius(h, model.config().radius);
    loop {
        let c = cell_center(&cells[rng.gen_range(0..cells.len())].key);
        let x = c + Vector3::new(rng.gen_range(-0.45..0.45), rng.gen_range(-0.45..0.45), rng.gen_range(-0.45..0.45)) * h;
        let id = model.locate(&x, lod).unwrap();
        let p = model.to_frame(id, &x);
        let r = (p.x * p.x + p.y * p.y).sqrt();
        let ok = match model.config().interpolation {
            Interpolation::Cylindrical => p.z.abs() < 0.45 * h && (r - radius).abs() > 0.02 * h,
            Interpolation::Trilinear => p.iter().all(|v| v.abs() < 0.48 * h),
        };
        if ok && Evaluator::new(model, [id]).preactivations(&x, id).iter().all(|a| a.abs() > 1e-3) {
            return x;
        }
    }
}

pub fn check_model(seed: u64) -> GradReport {
    let mut model = random_model(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let finest = model.tree().lods().finest();
    let mut report = GradReport {
        params_checked: 0,
        max_data_error: 0.0,
        max_point_error: 0.0,
        max_reg_error: 0.0,
        cells: model.tree().level_cells(finest).len(),
        features: model.config().features,
    };
    let eps = 1e-5;
    let lods: Vec<u8> = model.tree().lods().iter().collect();
    for lod in lods {
        let x = smooth_point(&model, &mut rng, lod);
        let up = rng.gen_range(0.5..1.5);
        let g = field_backward(&model, &x, lod, up).unwrap();
        for i in 0..model.params().data.len() {
            let orig = model.params().data[i];
            model.params_mut().data[i] = orig + eps;
            let fp = field_forward(&model, &x, lod).unwrap();
            model.params_mut().data[i] = orig - eps;
            let fm = field_forward(&model, &x, lod).unwrap();
            model.params_mut().data[i] = orig;
            report.max_data_error = report.max_data_error.max(rel(g.params.data[i], up * (fp - fm) / (2.0 * eps)));
            report.params_checked += 1;
        }
        for a in 0..3 {
            let mut d = Vector3::zeros();
            d[a] = eps;
            let fp = field_forward(&model, &(x + d), lod).unwrap();
            let fm = field_forward(&model, &(x - d), lod).unwrap();
            report.max_point_error = report.max_point_error.max(rel(g.point[a], up * (fp - fm) / (2.0 * eps)));
        }
    }
    if model.config().decoder == DecoderMode::Sdf {
        let batch: Vec<TrainingSample> = (0..2)
            .map(|_| TrainingSample {
                point: smooth_point(&model, &mut rng, finest),
                target: 0.0,
                on_surface: true,
                normal: Some(Vector3::new(rng.gen_range(-1.0..1.0), 0.3, 0.8).normalize()),
            })
            .collect();
        let (_, g, _) = normal_regularizer(&model, &batch, 0.1).unwrap();
        let eps = 1e-6;
        for i in 0..model.params().data.len() {
            let orig = model.params().data[i];
            model.params_mut().data[i] = orig + eps;
            let lp = normal_regularizer(&model, &batch, 0.1).unwrap().0;
            model.params_mut().data[i] = orig - eps;
            let lm = normal_regularizer(&model, &batch, 0.1).unwrap().0;
            model.params_mut().data[i] = orig;
            report.max_reg_error = report.max_reg_error.max(rel(g.data[i], (lp - lm) / (2.0 * eps)));
        }
    }
    report
}
