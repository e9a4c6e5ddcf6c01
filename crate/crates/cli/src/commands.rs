use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use nalgebra::Vector3;
use ogrid_core::eval::{compare_meshes, extract_mesh, MetricsReport};
use ogrid_core::field::{DecoderMode, FieldConfig, GridMode, Interpolation};
use ogrid_core::mesh::{load_mesh, normalization_transform, save_mesh, shapes, TriMesh};
use ogrid_core::model_file::{LogDigest, ModelFile};
use ogrid_core::train::{fit as fit_model, write_epoch_csv, FitOutput, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, NORMALIZE_MARGIN};
use crate::{ShapeKind, Suite};

/// Stored in the model file so later commands reuse the fit's settings and
/// map between input and normalized coordinates.
#[derive(Debug, Serialize, Deserialize)]
struct FitRecord {
    config: RunConfig,
    scale: f64,
    offset: [f64; 3],
}

struct Normalized {
    mesh: TriMesh,
    scale: f64,
    offset: Vector3<f64>,
}

fn load_normalized(path: &Path) -> Result<Normalized> {
    let raw = load_mesh(path).with_context(|| format!("loading mesh {}", path.display()))?;
    let (scale, offset) = normalization_transform(&raw, NORMALIZE_MARGIN)?;
    Ok(Normalized {
        mesh: raw.transformed(scale, offset),
        scale,
        offset,
    })
}

fn require_mesh(cfg: &RunConfig) -> Result<&Path> {
    match &cfg.mesh {
        Some(p) => Ok(p),
        None => bail!("--mesh is required (or set \"mesh\" in --config)"),
    }
}

fn run_fit(mesh: &TriMesh, field: &FieldConfig, train: &TrainConfig) -> Result<FitOutput> {
    let start = Instant::now();
    let out = fit_model(mesh, field, train)?;
    log::info!("fit finished in {:.1}s", start.elapsed().as_secs_f64());
    Ok(out)
}

pub fn fit(cfg: &RunConfig, out: &Path, log_csv: Option<&Path>) -> Result<()> {
    let path = require_mesh(cfg)?;
    let norm = load_normalized(path)?;
    let fitted = run_fit(&norm.mesh, &cfg.field, &cfg.train)?;
    let record = FitRecord {
        config: cfg.clone(),
        scale: norm.scale,
        offset: norm.offset.into(),
    };
    let file = ModelFile {
        run_config: serde_json::to_string(&record)?,
        log: fitted.log.iter().map(LogDigest::from).collect(),
        model: fitted.model,
    };
    file.save(out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(p) = log_csv {
        let f = std::fs::File::create(p).with_context(|| format!("writing {}", p.display()))?;
        write_epoch_csv(&fitted.log, std::io::BufWriter::new(f))?;
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<(ModelFile, FitRecord)> {
    let file = ModelFile::load(path).with_context(|| format!("loading model {}", path.display()))?;
    let record: FitRecord = serde_json::from_str(&file.run_config).context("model file run record")?;
    Ok((file, record))
}

pub fn extract(model: &Path, out: &Path, res: Option<usize>) -> Result<()> {
    let (file, record) = load_model(model)?;
    let q = res.unwrap_or(record.config.grid_res);
    let mesh = extract_mesh(&file.model, q)?;
    let offset = Vector3::from(record.offset);
    let original = mesh.transformed(1.0 / record.scale, -offset / record.scale);
    save_mesh(&original, out).with_context(|| format!("writing {}", out.display()))?;
    log::info!("{} vertices, {} triangles", original.vertices.len(), original.triangles.len());
    Ok(())
}

pub struct EvalArgs {
    pub model: PathBuf,
    pub mesh: PathBuf,
    pub res: Option<usize>,
    pub samples: Option<usize>,
    pub iou_res: Option<usize>,
    pub seed: u64,
    pub csv: Option<PathBuf>,
    pub mesh_id: Option<String>,
}

fn mode_name(mode: DecoderMode) -> &'static str {
    match mode {
        DecoderMode::Sdf => "sdf",
        DecoderMode::Occupancy => "occupancy",
    }
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let (file, record) = load_model(&a.model)?;
    let q = a.res.unwrap_or(record.config.grid_res);
    let n = a.samples.unwrap_or(record.config.metric_samples);
    let iou_res = a.iou_res.unwrap_or(record.config.iou_res);
    let raw = load_mesh(&a.mesh).with_context(|| format!("loading mesh {}", a.mesh.display()))?;
    // the reference goes through the fit's normalization, not its own
    let reference = raw.transformed(record.scale, Vector3::from(record.offset));
    let extracted = extract_mesh(&file.model, q)?;
    let report = compare_meshes(&extracted, &reference, n, iou_res, a.seed)?;
    let id = a.mesh_id.clone().unwrap_or_else(|| {
        a.mesh
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let row = report.csv_row(&id, mode_name(file.model.config().decoder), q);
    match &a.csv {
        Some(p) => append_row(p, MetricsReport::CSV_HEADER, &row)?,
        None => {
            println!("{}", MetricsReport::CSV_HEADER);
            println!("{row}");
        }
    }
    Ok(())
}

fn append_row(path: &Path, header: &str, row: &str) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if fresh {
        writeln!(f, "{header}")?;
    }
    writeln!(f, "{row}")?;
    Ok(())
}

struct Variant {
    name: &'static str,
    field: FieldConfig,
    train: TrainConfig,
}

/// Every variant shares the base sampling budget, epochs and seed.
fn variants(suite: Suite, base: &RunConfig) -> Vec<Variant> {
    let v = |name, f: &dyn Fn(&mut FieldConfig, &mut TrainConfig)| {
        let (mut field, mut train) = (base.field.clone(), base.train.clone());
        f(&mut field, &mut train);
        Variant { name, field, train }
    };
    match suite {
        Suite::Table1 => vec![
            v("oriented+trilinear", &|f, t| {
                f.interpolation = Interpolation::Trilinear;
                f.conv_kernel = None;
                t.alpha_n = 0.0;
            }),
            v("oriented+cylindrical", &|f, t| {
                f.conv_kernel = None;
                t.alpha_n = 0.0;
            }),
            v("+conv3", &|f, t| {
                f.conv_kernel = Some(3);
                t.alpha_n = 0.0;
            }),
            v("+conv5", &|f, t| {
                f.conv_kernel = Some(5);
                t.alpha_n = 0.0;
            }),
            v("+conv5+normreg", &|f, _| f.conv_kernel = Some(5)),
        ],
        Suite::Table2 => {
            let regular = |f: &mut FieldConfig| {
                f.grid = GridMode::Regular;
                f.interpolation = Interpolation::Trilinear;
                f.conv_kernel = None;
            };
            vec![
                v("regular+sdf", &|f, _| {
                    regular(f);
                    f.decoder = DecoderMode::Sdf;
                }),
                v("regular+occ", &|f, _| {
                    regular(f);
                    f.decoder = DecoderMode::Occupancy;
                }),
                v("oriented+occ", &|f, _| f.decoder = DecoderMode::Occupancy),
                v("oriented+sdf", &|f, _| f.decoder = DecoderMode::Sdf),
            ]
        }
    }
}

pub const ABLATION_HEADER: &str = "mesh_id,variant,status,cd,nc,iou,n_samples,epochs,batch_size,lods,seed,q,metric_samples";

pub fn ablate(suite: Suite, base: &RunConfig, more: &[PathBuf], out: &Path) -> Result<()> {
    let mut meshes: Vec<PathBuf> = base.mesh.iter().cloned().collect();
    meshes.extend(more.iter().cloned());
    if meshes.is_empty() {
        bail!("--mesh is required (repeat with --also for more meshes)");
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(out).with_context(|| format!("writing {}", out.display()))?);
    writeln!(w, "{ABLATION_HEADER}")?;
    for path in &meshes {
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let norm = load_normalized(path)?;
        for var in variants(suite, base) {
            log::info!("{id}: {}", var.name);
            let result = run_fit(&norm.mesh, &var.field, &var.train).and_then(|fitted| {
                let mesh = extract_mesh(&fitted.model, base.grid_res)?;
                Ok(compare_meshes(&mesh, &norm.mesh, base.metric_samples, base.iou_res, base.train.seed)?)
            });
            let (status, metrics) = match result {
                Ok(r) => ("ok".to_string(), format!("{:e},{:e},{}", r.cd, r.nc, r.iou)),
                Err(e) => (format!("error: {e:#}").replace([',', '\n'], ";"), ",,".to_string()),
            };
            let t = &var.train;
            let lods: Vec<String> = t.lods.iter().map(|l| l.to_string()).collect();
            writeln!(
                w,
                "{id},{},{status},{metrics},{},{},{},{},{},{},{}",
                var.name,
                t.n_samples,
                t.epochs,
                t.batch_size,
                lods.join(" "),
                t.seed,
                base.grid_res,
                base.metric_samples
            )?;
            w.flush()?;
        }
    }
    Ok(())
}

pub fn shape(kind: ShapeKind, detail: usize, out: &Path) -> Result<()> {
    let n = detail.max(2);
    let mesh = match kind {
        ShapeKind::Sphere => shapes::sphere(1.0, n),
        ShapeKind::RoundedBox => shapes::rounded_box(0.6, 0.3, n),
        ShapeKind::Torus => shapes::torus(0.7, 0.3, 2 * n, n),
    };
    save_mesh(&mesh, out).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
