//! Command-line entry point.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use seqrank::datagen::{generate_w_star, make_dataset};
use seqrank::rng::{stream_seed, Stream};
use seqrank::solver::{make_allocation, reconstruct_w, AllocationStrategy, Design, SolveTrace};
use seqrank::DenseMatrix;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};
use crate::experiments::{run_experiment, trial_seed};
use crate::matrix_io::{decode, read_matrix, read_matrix_text, write_matrix, write_matrix_text};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (csv schema 1)");

static TOY_X: &[u8] = include_bytes!("../data/toy/x.sqm");
static TOY_Y: &[u8] = include_bytes!("../data/toy/y.sqm");

#[derive(Debug, Parser)]
#[command(name = "seqrank", version = VERSION, about = "Sequential rank-1 regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
struct Overrides {
    /// Config file (TOML, or JSON by `.json` extension).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel trial slots.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Inexact,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write W*, X, Y* and Y for trial 0 of a config.
    Gen {
        #[command(flatten)]
        common: Overrides,
        /// Also write plain-text copies.
        #[arg(long)]
        text: bool,
    },
    /// One exact or inexact run; writes trace.json.
    Solve {
        #[command(flatten)]
        common: Overrides,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
        /// Number of components (the config's r, or 3 without a config).
        #[arg(long)]
        r: Option<usize>,
        /// Design matrix file; with --y, replaces generated data.
        #[arg(long, requires = "y")]
        x: Option<PathBuf>,
        /// Label matrix file.
        #[arg(long, requires = "x")]
        y: Option<PathBuf>,
        /// Total iteration budget for inexact mode.
        #[arg(long)]
        budget: Option<usize>,
        /// Allocation strategy for inexact mode.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Paired exact/inexact runs with all bounds evaluated.
    Bounds(Overrides),
    /// Allocation strategies under a fixed budget.
    ExpAlloc(Overrides),
    /// Singular-value profiles at matched norm.
    ExpProfile(Overrides),
    /// Noise sweep.
    ExpNoise(Overrides),
    /// Iterations to reach reconstruction thresholds.
    ExpThreshold(Overrides),
}

fn load_config(kind: ExperimentKind, o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match &o.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(kind),
    };
    cfg.experiment = kind;
    if let Some(s) = o.seed {
        cfg.base_seed = s;
    }
    if let Some(t) = o.trials {
        cfg.trials = t;
    }
    if let Some(out) = &o.out {
        cfg.output_dir = out.to_string_lossy().into_owned();
    }
    if let Some(w) = o.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn read_any(path: &Path) -> Result<DenseMatrix> {
    if path.extension().is_some_and(|e| e == "txt") {
        read_matrix_text(path)
    } else {
        read_matrix(path)
    }
}

#[derive(Serialize)]
struct GenMeta<'a> {
    config_hash: String,
    seed: u64,
    m: usize,
    d: usize,
    n: usize,
    r_star: usize,
    profile: &'a str,
    planted_sigmas: &'a [f64],
    noise: seqrank::NoiseSpec,
    corrupted_entries: usize,
}

fn cmd_gen(o: &Overrides, text: bool) -> Result<()> {
    let cfg = load_config(ExperimentKind::Alloc, o)?;
    cfg.validate()?;
    let seed = trial_seed(&cfg, 0);
    let gt = generate_w_star(
        cfg.m,
        cfg.d,
        cfg.r_star,
        cfg.profile,
        cfg.target_fro,
        stream_seed(seed, Stream::GroundTruth),
    )?;
    let ds = make_dataset(&gt, cfg.n(), cfg.noise, seed)?;
    let dir = cfg.output_path();
    create_dir(&dir)?;
    for (name, m) in [("w_star", &gt.w_star), ("x", &ds.x), ("y_star", &ds.y_star), ("y", &ds.y)] {
        write_matrix(&dir.join(format!("{name}.sqm")), m)?;
        if text {
            write_matrix_text(&dir.join(format!("{name}.txt")), m)?;
        }
    }
    write_json(
        &dir.join("meta.json"),
        &GenMeta {
            config_hash: cfg.hash(),
            seed,
            m: cfg.m,
            d: cfg.d,
            n: cfg.n(),
            r_star: cfg.r_star,
            profile: cfg.profile.label(),
            planted_sigmas: &gt.sigmas,
            noise: cfg.noise,
            corrupted_entries: ds.corrupted_entries,
        },
    )?;
    println!("wrote dataset to {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    source: String,
    r: usize,
    training_err: f64,
    recon_err: Option<f64>,
    trace: &'a SolveTrace,
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    o: &Overrides,
    mode: Mode,
    r: Option<usize>,
    x: Option<&Path>,
    y: Option<&Path>,
    budget: Option<usize>,
    strategy: Option<&str>,
) -> Result<()> {
    let cfg = load_config(ExperimentKind::Alloc, o)?;
    let seed = trial_seed(&cfg, 0);
    let (x, y, w_star, source) = match (x, y, &o.config) {
        (Some(xp), Some(yp), _) => (read_any(xp)?, read_any(yp)?, None, format!("{} / {}", xp.display(), yp.display())),
        (_, _, Some(path)) => {
            cfg.validate()?;
            let gt = generate_w_star(
                cfg.m,
                cfg.d,
                cfg.r_star,
                cfg.profile,
                cfg.target_fro,
                stream_seed(seed, Stream::GroundTruth),
            )?;
            let ds = make_dataset(&gt, cfg.n(), cfg.noise, seed)?;
            (ds.x, ds.y, Some(gt.w_star), format!("generated from {}", path.display()))
        }
        _ => {
            let bundled = |b: &[u8]| {
                decode(b).map_err(|message| HarnessError::MatrixFormat {
                    path: "<bundled toy>".into(),
                    message,
                })
            };
            (bundled(TOY_X)?, bundled(TOY_Y)?, None, "bundled toy dataset".into())
        }
    };
    if x.cols() != y.cols() {
        return Err(HarnessError::Config(format!(
            "X has {} columns but Y has {}",
            x.cols(),
            y.cols()
        )));
    }
    let r = r.unwrap_or_else(|| if o.config.is_some() { cfg.r() } else { 3 });
    if r == 0 || r > y.rows().min(x.rows()) {
        return Err(HarnessError::Config(format!(
            "r = {r} must lie in 1..={}",
            y.rows().min(x.rows())
        )));
    }
    let design = Design::new(&x)?;
    let trace = match mode {
        Mode::Exact => design.solve_exact(&y, r)?,
        Mode::Inexact => {
            let strategy = match strategy {
                Some(s) => s.parse::<AllocationStrategy>().map_err(HarnessError::Config)?,
                None => cfg.primary_strategy(),
            };
            let plan = make_allocation(strategy, r, budget.unwrap_or(cfg.total_budget))?;
            cfg.gd.validate()?;
            design.solve_inexact(&y, r, &plan, &cfg.gd, stream_seed(seed, Stream::GdInit))?
        }
    };
    let recon_err = match &w_star {
        Some(w) => Some(reconstruct_w(&trace)?.sub(w)?.frobenius_norm()),
        None => None,
    };
    let dir = cfg.output_path();
    create_dir(&dir)?;
    let path = dir.join("trace.json");
    write_json(
        &path,
        &SolveOutput {
            source,
            r,
            training_err: trace.training_error(),
            recon_err,
            trace: &trace,
        },
    )?;
    println!(
        "{} components, training error {:.6e}; trace written to {}",
        trace.components.len(),
        trace.training_error(),
        path.display()
    );
    Ok(())
}

fn cmd_experiment(kind: ExperimentKind, o: &Overrides) -> Result<i32> {
    let cfg = load_config(kind, o)?;
    let out = run_experiment(&cfg)?;
    println!("wrote {}", out.csv_path.display());
    for p in &out.extra_files {
        println!("wrote {}", p.display());
    }
    if out.failures > 0 {
        eprintln!("{} trial(s) failed; see failure rows", out.failures);
        return Ok(2);
    }
    Ok(0)
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let result = match &cli.command {
        Command::Gen { common, text } => cmd_gen(common, *text).map(|_| 0),
        Command::Solve {
            common,
            mode,
            r,
            x,
            y,
            budget,
            strategy,
        } => cmd_solve(common, *mode, *r, x.as_deref(), y.as_deref(), *budget, strategy.as_deref()).map(|_| 0),
        Command::Bounds(o) => cmd_experiment(ExperimentKind::Bounds, o),
        Command::ExpAlloc(o) => cmd_experiment(ExperimentKind::Alloc, o),
        Command::ExpProfile(o) => cmd_experiment(ExperimentKind::Profile, o),
        Command::ExpNoise(o) => cmd_experiment(ExperimentKind::Noise, o),
        Command::ExpThreshold(o) => cmd_experiment(ExperimentKind::Threshold, o),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_mentions_schema() {
        assert!(VERSION.ends_with(&format!("(csv schema {})", crate::table::SCHEMA_VERSION)));
    }

    #[test]
    fn bundled_toy_decodes() {
        let x = decode(TOY_X).unwrap();
        let y = decode(TOY_Y).unwrap();
        assert_eq!(x.cols(), y.cols());
        assert!(x.rows() <= x.cols());
    }
}
