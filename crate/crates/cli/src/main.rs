mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rgbt_core::Error;
use serde_json::{json, Value};

use commands::Ctx;
use config::RunConfig;

const VERSION_LINE: &str = concat!(env!("CARGO_PKG_VERSION"), " (manifest schema 1, embedding format 1)");

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "rgbt", version = VERSION_LINE, about = "RGB-thermal registration, curation and evaluation toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// All artifacts are written below this directory.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "RGBT_WORKERS")]
    workers: Option<usize>,
    /// Seed for stochastic commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a manifest (and optionally a calibration file).
    Validate(commands::ValidateArgs),
    /// Convert 16-bit thermal frames to 8-bit (min-max, CLAHE, bilateral).
    Thermal8(commands::Thermal8Args),
    /// Undistort thermal frames into the rectified pinhole camera.
    Rectify(commands::RectifyArgs),
    /// Warp RGB images into the thermal camera using depth.
    Register(commands::RegisterArgs),
    /// Pair RGB and thermal frames by timestamp.
    Pair(commands::PairArgs),
    /// Select thermal frames on a 1 Hz grid and drop FFC frames.
    Subsample(commands::SubsampleArgs),
    /// Curated pair counts per sequence and environment.
    Stats(commands::StatsArgs),
    /// Mine cross-modal triplets from embedding sets.
    MineTriplets(commands::MineArgs),
    /// Train the toy linear distillation model.
    DistillToy(commands::DistillArgs),
    /// Cross-modal place-recognition Recall@K.
    EvalVpr(commands::EvalVprArgs),
    /// Segmentation mIoU over label-map directories.
    EvalSeg(commands::EvalSegArgs),
    /// Depth error metrics over depth-map directories.
    EvalDepth(commands::EvalDepthArgs),
    /// Order scaling-study runs and compute deltas.
    ScalingReport(commands::ScalingArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Thermal8(_) => "thermal8",
            Command::Rectify(_) => "rectify",
            Command::Register(_) => "register",
            Command::Pair(_) => "pair",
            Command::Subsample(_) => "subsample",
            Command::Stats(_) => "stats",
            Command::MineTriplets(_) => "mine-triplets",
            Command::DistillToy(_) => "distill-toy",
            Command::EvalVpr(_) => "eval-vpr",
            Command::EvalSeg(_) => "eval-seg",
            Command::EvalDepth(_) => "eval-depth",
            Command::ScalingReport(_) => "scaling-report",
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::Thermal8(a) => a.thermal.apply(cfg),
            Command::Rectify(a) => a.apply(cfg),
            Command::Register(a) => a.apply(cfg),
            Command::Pair(a) => a.pairing.apply(cfg),
            Command::Subsample(a) => {
                cfg.pairing.ffc_guard_ms = a.ffc_guard_ms.unwrap_or(cfg.pairing.ffc_guard_ms);
            }
            Command::Stats(a) => a.pairing.apply(cfg),
            Command::MineTriplets(a) => a.apply(cfg),
            Command::DistillToy(a) => a.apply(cfg),
            Command::EvalVpr(a) => a.apply(cfg),
            Command::EvalSeg(a) => a.apply(cfg),
            Command::Validate(_) | Command::EvalDepth(_) | Command::ScalingReport(_) => {}
        }
    }

    fn run(&self, ctx: &mut Ctx) -> rgbt_core::Result<Value> {
        match self {
            Command::Validate(a) => commands::validate(a, ctx),
            Command::Thermal8(a) => commands::thermal8(a, ctx),
            Command::Rectify(a) => commands::rectify(a, ctx),
            Command::Register(a) => commands::register(a, ctx),
            Command::Pair(a) => commands::pair(a, ctx),
            Command::Subsample(a) => commands::subsample(a, ctx),
            Command::Stats(a) => commands::stats(a, ctx),
            Command::MineTriplets(a) => commands::mine(a, ctx),
            Command::DistillToy(a) => commands::distill(a, ctx),
            Command::EvalVpr(a) => commands::eval_vpr(a, ctx),
            Command::EvalSeg(a) => commands::eval_seg(a, ctx),
            Command::EvalDepth(a) => commands::eval_depth(a, ctx),
            Command::ScalingReport(a) => commands::scaling(a, ctx),
        }
    }
}

fn setup_workers(workers: Option<usize>) -> rgbt_core::Result<()> {
    let Some(n) = workers else { return Ok(()) };
    if n == 0 {
        return Err(Error::Validation("--workers must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Validation(format!("cannot size the worker pool: {e}")))?;
    Ok(())
}

fn execute(cli: &Cli, ctx: &mut Ctx) -> rgbt_core::Result<Value> {
    setup_workers(cli.global.workers)?;
    if let Some(path) = &cli.global.config {
        ctx.cfg = RunConfig::load(path)?;
    }
    ctx.cfg.seed = cli.global.seed.or(ctx.cfg.seed);
    cli.command.apply(&mut ctx.cfg);
    cli.command.run(ctx)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let start = Instant::now();
    let mut ctx = Ctx {
        cfg: RunConfig::default(),
        out_dir: cli.global.out_dir.clone(),
        outputs: Vec::new(),
        warnings: Vec::new(),
    };
    let outcome = execute(&cli, &mut ctx);
    let mut summary = json!({
        "command": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "elapsed_ms": start.elapsed().as_millis() as u64,
        "outputs": ctx.outputs.iter().map(|o| ctx.out_dir.join(o)).collect::<Vec<_>>(),
        "warnings": ctx.warnings,
        "config": ctx.cfg,
    });
    let code = match outcome {
        Ok(result) => {
            summary["result"] = result;
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rgbt {}: {e}", cli.command.name());
            summary["error"] = json!(e.to_string());
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    };
    // a closed pipe must not turn a finished run into a panic
    let _ = writeln!(std::io::stdout(), "{summary}");
    code
}
