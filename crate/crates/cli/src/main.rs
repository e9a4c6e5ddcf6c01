//! `ogrid`: fit, extract, evaluate and ablate oriented-grid implicit surfaces.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ogrid_core::eval::EvalError;
use ogrid_core::field::{DecoderMode, GridMode, Interpolation, RadiusMode};
use ogrid_core::train::TrainError;
use ogrid_core::tree::LodSet;

use crate::config::{parse_lods, RunConfig};

#[derive(Parser)]
#[command(name = "ogrid", version, about = "Oriented-grid neural implicit surfaces")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "OGRID_THREADS")]
    threads: Option<usize>,
    /// Accepted for scripts; every reduction is already performed in a fixed order.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a mesh and write the model file.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss log.
        #[arg(long)]
        log_csv: Option<PathBuf>,
    },
    /// Extract the isosurface of a fitted model as OBJ, in the input mesh's coordinates.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Lattice vertices per axis; defaults to the fit's setting.
        #[arg(long)]
        res: Option<usize>,
    },
    /// Compare a fitted model against a reference mesh and append a CSV row.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Reference mesh.
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        res: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        iou_res: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV file to append to; stdout when absent.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Row label; defaults to the mesh file stem.
        #[arg(long)]
        mesh_id: Option<String>,
    },
    /// Run an ablation suite over one or more meshes.
    Ablate {
        #[arg(long, value_enum)]
        suite: Suite,
        #[command(flatten)]
        run: RunArgs,
        /// Additional meshes beyond `--mesh`.
        #[arg(long = "also", num_args = 1..)]
        more: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a procedural test mesh.
    Shape {
        #[arg(long, value_enum)]
        kind: ShapeKind,
        #[arg(long)]
        out: PathBuf,
        /// Tessellation density.
        #[arg(long, default_value_t = 48)]
        detail: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Suite {
    Table1,
    Table2,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ShapeKind {
    Sphere,
    RoundedBox,
    Torus,
}

#[derive(Args, Clone, Default)]
pub struct RunArgs {
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Desk-scale preset, applied before `--config`.
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated levels of detail, e.g. `3,4,5`.
    #[arg(long, value_parser = parse_lods)]
    lods: Option<LodSet>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Training samples per epoch.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
    /// Convolution kernel size, 0 to disable.
    #[arg(long)]
    kernel: Option<usize>,
    #[arg(long, value_enum)]
    interpolation: Option<InterpArg>,
    #[arg(long, value_enum)]
    grid: Option<GridArg>,
    #[arg(long, value_enum)]
    radius: Option<RadiusArg>,
    #[arg(long, value_enum)]
    decoder: Option<DecoderArg>,
    #[arg(long)]
    alpha_n: Option<f64>,
    /// Evaluation lattice vertices per axis.
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    metric_samples: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpArg {
    Cylindrical,
    Trilinear,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    Oriented,
    Regular,
}

#[derive(Clone, Copy, ValueEnum)]
enum RadiusArg {
    Circumscribed,
    Inscribed,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderArg {
    Sdf,
    Occupancy,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = RunConfig::resolve(self.desk, self.config.as_deref())?;
        if let Some(m) = &self.mesh {
            c.mesh = Some(m.clone());
        }
        if let Some(s) = self.seed {
            c.train.seed = s;
        }
        if let Some(l) = &self.lods {
            c.train.lods = l.clone();
        }
        if let Some(e) = self.epochs {
            c.train.epochs = e;
        }
        if let Some(n) = self.samples {
            c.train.n_samples = n;
        }
        if let Some(f) = self.features {
            c.field.features = f;
        }
        if let Some(k) = self.kernel {
            c.field.conv_kernel = (k > 0).then_some(k);
        }
        if let Some(i) = self.interpolation {
            c.field.interpolation = match i {
                InterpArg::Cylindrical => Interpolation::Cylindrical,
                InterpArg::Trilinear => Interpolation::Trilinear,
            };
        }
        if let Some(g) = self.grid {
            c.field.grid = match g {
                GridArg::Oriented => GridMode::Oriented,
                GridArg::Regular => GridMode::Regular,
            };
        }
        if let Some(r) = self.radius {
            c.field.radius = match r {
                RadiusArg::Circumscribed => RadiusMode::Circumscribed,
                RadiusArg::Inscribed => RadiusMode::Inscribed,
            };
        }
        if let Some(d) = self.decoder {
            c.field.decoder = match d {
                DecoderArg::Sdf => DecoderMode::Sdf,
                DecoderArg::Occupancy => DecoderMode::Occupancy,
            };
        }
        if let Some(a) = self.alpha_n {
            c.train.alpha_n = a;
        }
        if let Some(q) = self.res {
            c.grid_res = q;
        }
        if let Some(n) = self.metric_samples {
            c.metric_samples = n;
        }
        Ok(c)
    }
}

/// 2 usage/IO, 3 empty surface, 4 non-finite loss.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(EvalError::EmptySurface) = cause.downcast_ref::<EvalError>() {
            return 3;
        }
        if let Some(TrainError::NonFiniteLoss { .. }) = cause.downcast_ref::<TrainError>() {
            return 4;
        }
    }
    2
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Fit { run, out, log_csv } => commands::fit(&run.resolve()?, &out, log_csv.as_deref()),
        Command::Extract { model, out, res } => commands::extract(&model, &out, res),
        Command::Eval {
            model,
            mesh,
            res,
            samples,
            iou_res,
            seed,
            csv,
            mesh_id,
        } => commands::eval(&commands::EvalArgs {
            model,
            mesh,
            res,
            samples,
            iou_res,
            seed,
            csv,
            mesh_id,
        }),
        Command::Ablate { suite, run, more, out } => commands::ablate(suite, &run.resolve()?, &more, &out),
        Command::Shape { kind, out, detail } => commands::shape(kind, detail, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
