//! `cellrecon`: generate cell-average grids, run the reconstruction
//! pipeline, and benchmark convergence orders.
//!
//! Exit codes: 0 success, 2 detection failure, 3 edge-fit failure,
//! 4 curve failure, 5 reconstruction failure, 64 bad usage (including an
//! unreadable input grid). File system failures exit with 74.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};
use sha2::{Digest, Sha256};

use cellrecon::bench::{report_csv, run_benchmark, DEFAULT_QUAD_ORDER};
use cellrecon::catalog::{discretize_with_report, FunctionKind, TestFunction};
use cellrecon::curve::{CurveStage, MeshFit, FIRST_STAGE_SPACING};
use cellrecon::grid::CellGrid;
use cellrecon::pipeline::{run_pipeline, versions, write_bundle, PipelineConfig, StageError, ThresholdMode};
use cellrecon::reconstruct::ReconMethod;

const EXIT_USAGE: u8 = 64;
const EXIT_IO: u8 = 74;
const MIN_N: usize = 8;

#[derive(Parser, Debug)]
#[command(name = "cellrecon", version, about = "Piecewise-smooth reconstruction from cell averages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Discretize a catalog function into cell-average grids.
    Gen(GenArgs),
    /// Run detection, edge fitting, curve and reconstruction on one grid.
    Pipeline(PipelineArgs),
    /// Convergence table over several resolutions.
    Benchmark(BenchArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum FunctionArg {
    OpenQuarterCircle,
    ClosedCircle,
    Step,
    Smooth,
}

impl FunctionArg {
    fn kind(self) -> FunctionKind {
        match self {
            FunctionArg::OpenQuarterCircle => FunctionKind::OpenQuarterCircle,
            FunctionArg::ClosedCircle => FunctionKind::ClosedCircle,
            FunctionArg::Step => FunctionKind::Step,
            FunctionArg::Smooth => FunctionKind::Smooth,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ThresholdArg {
    Theoretical,
    Relative,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum StageArg {
    First,
    Enhanced,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ReconArg {
    Quasi,
    Ls,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MeshFitArg {
    Quasi,
    Ls,
}

#[derive(Args, Debug)]
struct Common {
    /// Catalog function.
    #[arg(long, value_enum, default_value = "open-quarter-circle")]
    function: FunctionArg,
    /// Cells per axis, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Gauss–Legendre order per (sub)cell.
    #[arg(long, default_value_t = DEFAULT_QUAD_ORDER)]
    quad_order: usize,
    /// Recorded in manifests; the pipeline itself draws no random numbers.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct PipelineFlags {
    #[arg(long, value_enum, default_value = "theoretical")]
    threshold_mode: ThresholdArg,
    /// Relative threshold fraction of max |signature|.
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    /// Jump floor parameter; neighbour differences above its square root
    /// count as jumps.
    #[arg(long, default_value_t = 0.04)]
    hc_prime: f64,
    /// One edge anchor per `stride` band cells.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Multiplier of the enhanced-curve mesh size.
    #[arg(long, default_value_t = 1.0)]
    mesh_mult: f64,
    /// How the enhanced curve fits its mesh values.
    #[arg(long, value_enum, default_value = "quasi")]
    mesh_fit: MeshFitArg,
    #[arg(long, value_enum, default_value = "enhanced")]
    curve_stage: StageArg,
    /// Knot spacing of the first-stage fit.
    #[arg(long, default_value_t = FIRST_STAGE_SPACING)]
    first_spacing: f64,
    #[arg(long, value_enum, default_value = "quasi")]
    recon: ReconArg,
    /// Knot spacing of the least-squares reconstruction (default 2h).
    #[arg(long)]
    ls_spacing: Option<f64>,
}

impl PipelineFlags {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            threshold_mode: match self.threshold_mode {
                ThresholdArg::Theoretical => ThresholdMode::Theoretical,
                ThresholdArg::Relative => ThresholdMode::Relative,
            },
            hc_prime: self.hc_prime,
            rho: self.rho,
            stride: self.stride,
            mesh_mult: self.mesh_mult,
            mesh_fit: match self.mesh_fit {
                MeshFitArg::Quasi => MeshFit::QuasiInterpolation,
                MeshFitArg::Ls => MeshFit::LeastSquares,
            },
            curve_stage: match self.curve_stage {
                StageArg::First => CurveStage::First,
                StageArg::Enhanced => CurveStage::Enhanced,
            },
            first_stage_spacing: self.first_spacing,
            recon: match self.recon {
                ReconArg::Quasi => ReconMethod::Quasi,
                ReconArg::Ls => ReconMethod::Ls,
            },
            ls_spacing: self.ls_spacing,
        }
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: PipelineFlags,
    /// Read the grid from this CSV instead of discretizing `--function`.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: PipelineFlags,
}

/// Failure of a command, mapped to an exit code.
#[derive(Debug, thiserror::Error)]
enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error("{0}")]
    Core(#[from] cellrecon::Error),
}

impl RunError {
    fn exit_code(&self) -> u8 {
        match self {
            RunError::Usage(_) => EXIT_USAGE,
            RunError::Stage(e) => e.stage.exit_code() as u8,
            RunError::Core(cellrecon::Error::Io(_)) => EXIT_IO,
            RunError::Core(_) => EXIT_USAGE,
        }
    }
}

fn validate(common: &Common) -> Result<(), RunError> {
    if let Some(&n) = common.n.iter().find(|&&n| n < MIN_N) {
        return Err(RunError::Usage(format!("n = {n} is below the minimum {MIN_N}")));
    }
    if common.quad_order < 2 {
        return Err(RunError::Usage("--quad-order must be at least 2".into()));
    }
    Ok(())
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(v).map_err(cellrecon::Error::from)? + "\n";
    fs::write(path, text).map_err(cellrecon::Error::from)?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(cellrecon::Error::from)?;
    Ok(())
}

fn common_json(c: &Common) -> serde_json::Value {
    serde_json::json!({
        "function": c.function,
        "n": c.n,
        "out": c.out,
        "quad_order": c.quad_order,
        "seed": c.seed,
    })
}

fn cmd_gen(args: &GenArgs) -> Result<(), RunError> {
    let c = &args.common;
    validate(c)?;
    create_dir(&c.out)?;
    let f = TestFunction::from_kind(c.function.kind())?;
    for &n in &c.n {
        let d = discretize_with_report(&f, n, c.quad_order)?;
        let csv = d.grid.to_csv();
        let stem = format!("{}_n{n}", f.kind);
        fs::write(c.out.join(format!("{stem}.csv")), &csv).map_err(cellrecon::Error::from)?;
        let manifest = serde_json::json!({
            "command": "gen",
            "config": common_json(c),
            "versions": versions(),
            "n": n,
            "file": format!("{stem}.csv"),
            "sha256": hex::encode(Sha256::digest(csv.as_bytes())),
            "quadrature_warnings": d.warnings,
        });
        write_json(&c.out.join(format!("{stem}.manifest.json")), &manifest)?;
        info!("wrote {stem}.csv");
    }
    Ok(())
}

fn cmd_pipeline(args: &PipelineArgs) -> Result<(), RunError> {
    let c = &args.common;
    validate(c)?;
    let cfg = args.flags.config();
    let config_json = serde_json::json!({
        "command": "pipeline",
        "common": common_json(c),
        "input": args.input,
        "pipeline": cfg,
    });
    let grids: Vec<(String, CellGrid)> = match &args.input {
        Some(path) => {
            let g = CellGrid::read_csv(path).map_err(|e| RunError::Usage(format!("cannot read input grid {}: {e}", path.display())))?;
            vec![("input".into(), g)]
        }
        None => {
            let f = TestFunction::from_kind(c.function.kind())?;
            c.n.iter()
                .map(|&n| Ok((format!("{}_n{n}", f.kind), discretize_with_report(&f, n, c.quad_order)?.grid)))
                .collect::<Result<_, cellrecon::Error>>()?
        }
    };
    for (name, g) in grids {
        let out = run_pipeline(&g, &cfg)?;
        let dir = c.out.join(&name);
        write_bundle(&dir, &g, &out, &config_json)?;
        info!("wrote bundle {}", dir.display());
    }
    Ok(())
}

fn cmd_benchmark(args: &BenchArgs) -> Result<(), RunError> {
    let c = &args.common;
    validate(c)?;
    let cfg = args.flags.config();
    create_dir(&c.out)?;
    let f = TestFunction::from_kind(c.function.kind())?;
    let report = run_benchmark(&f, &c.n, &cfg, c.quad_order);
    let stem = format!("benchmark_{}", f.kind);
    fs::write(c.out.join(format!("{stem}.csv")), report_csv(&report.rows)).map_err(cellrecon::Error::from)?;
    let manifest = serde_json::json!({
        "command": "benchmark",
        "config": { "common": common_json(c), "pipeline": cfg },
        "versions": versions(),
        "rows": report.rows,
        "failed_n": report.failure.as_ref().map(|f| f.0),
    });
    write_json(&c.out.join(format!("{stem}.manifest.json")), &manifest)?;
    match report.failure {
        Some((n, e)) => {
            error!("n = {n}: {e}");
            Err(e.into())
        }
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CELLRECON_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
