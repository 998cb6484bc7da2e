//! Command-line harness: `train`, `eval`, `divlab`, `gradcheck`, `export`.

mod commands;
mod config;
mod export;
mod gradcheck;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{
    cmd_divlab, cmd_eval, cmd_export, cmd_gradcheck, cmd_train, density_file_name, eval_csv, gradcheck_csv, mean_ci95,
    metrics_csv, modes_csv, seed_dir, DivlabOutcome, EvalReport, Smoothing, TrainOutcome, CHECKPOINT_FILE,
    METRICS_FILE, MODES_FILE,
};
pub use config::{DivlabConfig, ResolvedRun, RunConfig};
pub use export::savitzky_golay;
pub use gradcheck::{gradient_suite, SuiteCase, SUITE_KINDS, SUITE_SIZE};

use crate::error::{Error, Result};
use crate::hybridsac::Preset;

#[derive(Debug, Parser)]
#[command(name = "hsac", version, about = "Hybrid SAC experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Desk,
    Roboschool,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Roboschool => Preset::Roboschool,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SmoothingArg {
    None,
    Savgol,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed to run; repeat for several. Replaces the config's `seeds`.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Output directory. Replaces the config's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base hyperparameters. Replaces the config's `preset`.
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent per seed.
    Train(RunArgs),
    /// Evaluate checkpoints with the deterministic policy.
    Eval {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Environment to evaluate on; defaults to the one stored in the checkpoint.
        #[arg(long)]
        env: Option<String>,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long = "seed", default_values_t = [0u64])]
        seeds: Vec<u64>,
        /// Directory for `eval.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distribution-matching temperature sweep.
    Divlab(RunArgs),
    /// Check reverse-mode gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = SUITE_SIZE)]
        configs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for `gradcheck.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a metrics CSV into a plot-ready one.
    Export {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, value_enum, default_value_t = SmoothingArg::Savgol)]
        smoothing: SmoothingArg,
        #[arg(long, default_value_t = 7)]
        window: usize,
        #[arg(long, default_value_t = 3)]
        order: usize,
        /// Output directory; the file is named after the input with `_plot`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_run(args: &RunArgs) -> Result<(RunConfig, Vec<u64>, PathBuf)> {
    let mut config = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = args.preset {
        config.preset = Some(p.into());
    }
    let seeds = if args.seeds.is_empty() { config.seeds.clone() } else { args.seeds.clone() };
    let out = args
        .out
        .clone()
        .or_else(|| config.out.clone())
        .ok_or_else(|| Error::Config("no output directory; set `out` or pass --out".into()))?;
    Ok((config, seeds, out))
}

/// Runs a parsed command, printing a short report to stdout.
pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(args) => {
            let (config, seeds, out) = load_run(&args)?;
            for o in cmd_train(&config, &seeds, &out)? {
                let last = o.rows.last().map_or(f64::NAN, |r| r.episode_return_mean);
                println!("seed {}: {} rows, final eval return {last}, {}", o.seed, o.rows.len(), o.dir.display());
            }
            Ok(true)
        }
        Command::Eval {
            checkpoints,
            env,
            episodes,
            seeds,
            out,
        } => {
            let report = cmd_eval(&checkpoints, env.as_deref(), episodes, &seeds)?;
            println!(
                "mean return {} (95% CI [{}, {}]) over {} episodes",
                report.mean,
                report.ci_low,
                report.ci_high,
                report.episodes.len()
            );
            for (k, v) in &report.info_totals {
                println!("info {k}: {v}");
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("eval.csv"), eval_csv(&report, &seeds)?)?;
            }
            Ok(true)
        }
        Command::Divlab(args) => {
            let (config, seeds, out) = load_run(&args)?;
            for o in cmd_divlab(&config.divlab, &seeds, &out)? {
                for c in &o.cells {
                    match &c.outcome {
                        Ok(m) => println!("seed {} {} flows={} alpha={}: mass {m:?}", o.seed, c.objective, c.flows, c.alpha),
                        Err(e) => println!("seed {} {} flows={} alpha={}: failed: {e}", o.seed, c.objective, c.flows, c.alpha),
                    }
                }
            }
            Ok(true)
        }
        Command::Gradcheck { configs, seed, out } => {
            let cases = cmd_gradcheck(configs, seed)?;
            let mut all = true;
            for c in &cases {
                all &= c.report.passed();
                println!(
                    "{} #{:02} {:<18} entries={:<4} max_abs={:.2e} max_rel={:.2e}  {}",
                    if c.report.passed() { "PASS" } else { "FAIL" },
                    c.index,
                    c.kind,
                    c.report.entries,
                    c.report.max_abs_error,
                    c.report.max_rel_error,
                    c.description
                );
            }
            let passed = cases.iter().filter(|c| c.report.passed()).count();
            println!("{passed}/{} configurations passed", cases.len());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("gradcheck.csv"), gradcheck_csv(&cases, seed))?;
            }
            Ok(all)
        }
        Command::Export {
            metrics,
            smoothing,
            window,
            order,
            out,
        } => {
            let smoothing = match smoothing {
                SmoothingArg::None => Smoothing::None,
                SmoothingArg::Savgol => Smoothing::SavitzkyGolay { window, order },
            };
            let text = cmd_export(&metrics, smoothing)?;
            let stem = metrics.file_stem().and_then(|s| s.to_str()).unwrap_or("metrics");
            std::fs::create_dir_all(&out)?;
            let path = out.join(format!("{stem}_plot.csv"));
            std::fs::write(&path, text)?;
            println!("{}", path.display());
            Ok(true)
        }
    }
}

/// Entry point shared by the binary: exit 0 on success, 1 on a failed check
/// or runtime error, 2 on a configuration error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}
