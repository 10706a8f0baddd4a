// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use meshsweep::eval::{compare_depth, DEFAULT_SIGMA};
use meshsweep::io::{read_ply, write_ply};
use meshsweep::pipeline::{bootstrap, run_from, PipelineConfig};
use meshsweep::scenes::{generate_pyramid, load_scene, save_scene};
use meshsweep::sweep::SweepConfig;
use meshsweep::{Error, PyramidVariant, WeightConfig};

const EXIT_RUNTIME: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "meshsweep",
    version,
    about = "Manifold reconstruction refined by mesh sweeping"
)]
struct Cli {
    /// Worker threads for the parallel phases (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic pyramid scene.
    Synth(SynthArgs),
    /// Reconstruct a mesh from a scene file.
    Reconstruct(ReconstructArgs),
    /// Compare a mesh against a scene's ground truth from one camera.
    Evaluate(EvaluateArgs),
    /// Check that a PLY mesh is a closed, oriented 2-manifold.
    CheckMesh(CheckMeshArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Pyramid apex direction: downward (away from the cameras) or upward.
    #[arg(long, default_value = "downward")]
    variant: PyramidVariant,
    #[arg(long, default_value_t = 12)]
    cameras: usize,
    #[arg(long, default_value_t = 640)]
    width: usize,
    #[arg(long, default_value_t = 480)]
    height: usize,
    /// Texture seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Final surface, ASCII PLY.
    #[arg(long)]
    out: PathBuf,
    /// Run report, JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write the bootstrap surface here.
    #[arg(long)]
    initial_mesh: Option<PathBuf>,
    /// Write per-iteration meshes and NCC rasters into this directory.
    #[arg(long)]
    dump_diagnostics: Option<PathBuf>,
    #[command(flatten)]
    params: Params,
}

/// Reconstruction parameters. Defaults are the reference settings.
#[derive(Args)]
struct Params {
    /// Weight added to each cell a viewing ray crosses [reference setting]
    #[arg(long, default_value_t = 4.0)]
    w1: f64,
    /// Weight added to cells next to a ray's path [reference setting]
    #[arg(long, default_value_t = 0.5)]
    w2: f64,
    /// Cells heavier than this are free space [reference setting]
    #[arg(long, default_value_t = 4.0)]
    t_w: f64,
    /// Sweep step alpha in meters [reference setting]
    #[arg(long, default_value_t = 0.03)]
    alpha: f64,
    /// Number of sweep steps N; offsets run from -N/2 to N/2 [reference setting]
    #[arg(long = "sweep-steps", default_value_t = 20)]
    n: u32,
    /// Gaussian NCC kernel sigma in pixels [reference setting]
    #[arg(long, default_value_t = 8.0)]
    sigma: f64,
    /// NCC acceptance threshold [reference setting]
    #[arg(long, default_value_t = 0.98)]
    t_ncc: f64,
    /// Tile edge in pixels; at most one new point per tile [reference setting]
    #[arg(long, default_value_t = 100)]
    tile: usize,
    /// Iteration limit [reference setting]
    #[arg(long, default_value_t = 15)]
    it_max: usize,
    /// Stop when an iteration accepts fewer new points than this
    #[arg(long, default_value_t = 10)]
    min_new_points: usize,
    /// Minimum spacing of new points in meters (default: alpha / 2)
    #[arg(long)]
    dedup_radius: Option<f64>,
    /// Fail on coplanar scene points instead of adding an auxiliary vertex
    #[arg(long)]
    no_coplanar_anchor: bool,
}

impl Params {
    fn config(&self, diagnostics: Option<PathBuf>) -> PipelineConfig {
        PipelineConfig {
            it_max: self.it_max,
            min_new_points: self.min_new_points,
            dedup_radius: self.dedup_radius,
            weights: WeightConfig {
                w1: self.w1,
                w2: self.w2,
                t_w: self.t_w,
            },
            sweep: SweepConfig {
                alpha: self.alpha,
                n: self.n,
                sigma: self.sigma,
                t_ncc: self.t_ncc,
                tile: self.tile,
            },
            coplanar_anchor: !self.no_coplanar_anchor,
            diagnostics,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    mesh: PathBuf,
    /// Scene with a ground-truth mesh.
    #[arg(long)]
    scene: PathBuf,
    /// Camera index to evaluate from.
    #[arg(long, default_value_t = 0)]
    view: usize,
    /// Cumulative-curve unit in meters [reference setting]
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Error report, JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckMeshArgs {
    mesh: PathBuf,
    /// Accept boundary edges (open surfaces), still requiring disk-like
    /// vertex neighborhoods and consistent orientation.
    #[arg(long)]
    allow_boundary: bool,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

/// Errors while reading inputs are the caller's fault.
fn input(e: Error) -> Failure {
    let code = match e {
        Error::Invariant(_) => EXIT_INVARIANT,
        _ => EXIT_INPUT,
    };
    Failure::new(code, e.to_string())
}

fn runtime(e: Error) -> Failure {
    let code = match e {
        Error::Invariant(_) => EXIT_INVARIANT,
        Error::DegenerateInput(_) | Error::InsufficientCameras { .. } | Error::Invalid { .. } => {
            EXIT_INPUT
        }
        _ => EXIT_RUNTIME,
    };
    Failure::new(code, e.to_string())
}

fn write_json(path: &Path, text: String) -> Result<(), Failure> {
    fs::write(path, text + "\n")
        .map_err(|e| Failure::new(EXIT_RUNTIME, format!("{}: {e}", path.display())))
}

fn synth(args: &SynthArgs) -> Result<(), Failure> {
    if args.cameras < 3 {
        return Err(Failure::new(
            EXIT_INPUT,
            format!("--cameras must be at least 3, got {}", args.cameras),
        ));
    }
    if args.width == 0 || args.height == 0 {
        return Err(Failure::new(
            EXIT_INPUT,
            "--width and --height must be positive",
        ));
    }
    let scene = generate_pyramid(
        args.variant,
        args.cameras,
        args.width,
        args.height,
        args.seed,
    )
    .map_err(input)?;
    let path = save_scene(&scene, &args.out).map_err(runtime)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn reconstruct(args: &ReconstructArgs) -> Result<(), Failure> {
    let cfg = args.params.config(args.dump_diagnostics.clone());
    cfg.validate().map_err(|m| Failure::new(EXIT_INPUT, m))?;
    let scene = load_scene(&args.scene).map_err(input)?;
    let rec = bootstrap(&scene, &cfg).map_err(runtime)?;
    info!(
        "bootstrap: {} vertices, {} surface triangles",
        rec.tri.num_vertices(),
        rec.surface().triangles.len()
    );
    let out = run_from(rec, &scene, &cfg).map_err(runtime)?;
    // Never emit a surface that fails the manifold check.
    let check = out.mesh.check(true);
    if !check.is_manifold() {
        return Err(Failure::new(
            EXIT_INVARIANT,
            format!(
                "final surface is not manifold: {}",
                check.problems().join("; ")
            ),
        ));
    }
    if let Some(p) = &args.initial_mesh {
        write_ply(p, &out.initial_mesh).map_err(runtime)?;
    }
    write_ply(&args.out, &out.mesh).map_err(runtime)?;
    if let Some(p) = &args.report {
        write_json(
            p,
            serde_json::to_string_pretty(&out.report).expect("report serializes"),
        )?;
    }
    println!(
        "{} iterations, {} vertices, {} triangles{}",
        out.report.iterations.len(),
        out.reconstruction.tri.num_vertices(),
        out.mesh.triangles.len(),
        if out.report.converged {
            ", converged"
        } else {
            ""
        }
    );
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<(), Failure> {
    if !(args.sigma > 0.0) {
        return Err(Failure::new(EXIT_INPUT, "--sigma must be positive"));
    }
    let mesh = read_ply(&args.mesh).map_err(input)?;
    let scene = load_scene(&args.scene).map_err(input)?;
    let Some(gt) = &scene.ground_truth else {
        return Err(Failure::new(
            EXIT_INPUT,
            format!("{} has no ground-truth mesh", args.scene.display()),
        ));
    };
    if args.view >= scene.cameras.len() {
        return Err(Failure::new(
            EXIT_INPUT,
            format!(
                "--view {} out of range: scene has {} cameras",
                args.view,
                scene.cameras.len()
            ),
        ));
    }
    let report = compare_depth(
        &mesh,
        &gt.depth[args.view],
        &scene.cameras[args.view],
        args.sigma,
    );
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{text}");
    if let Some(p) = &args.out {
        write_json(p, text)?;
    }
    Ok(())
}

fn check_mesh(args: &CheckMeshArgs) -> Result<(), Failure> {
    let mesh = read_ply(&args.mesh).map_err(input)?;
    let check = mesh.check(args.allow_boundary);
    if check.is_manifold() {
        println!(
            "ok: {} vertices, {} triangles",
            mesh.vertices.len(),
            mesh.triangles.len()
        );
        Ok(())
    } else {
        for p in check.problems() {
            println!("{p}");
        }
        Err(Failure::new(
            EXIT_RUNTIME,
            format!("{} is not a manifold", args.mesh.display()),
        ))
    }
}

fn set_threads(threads: Option<usize>) -> Result<(), Failure> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Failure::new(EXIT_INPUT, "--threads must be positive"));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::new(EXIT_RUNTIME, e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    log::warn!("built without the parallel feature; --threads {n} ignored");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = set_threads(cli.threads).and_then(|()| match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Evaluate(a) => evaluate(a),
        Command::CheckMesh(a) => check_mesh(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
