//! The five subcommands as library functions. Each returns what it measured
//! and writes its files under the given output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::divlab::{temperature_sweep, SweepCell};
use crate::envs::make_env;
use crate::error::{Error, Result};
use crate::hybridsac::{evaluate, train, HybridSac, MetricsRow};
use crate::numgrad::{config_digest, load_checkpoint, save_checkpoint, Prng, Tolerance};

use super::config::{DivlabConfig, ResolvedRun, RunConfig};
use super::export::savitzky_golay;
use super::gradcheck::{gradient_suite, SuiteCase};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.hsac";
pub const MODES_FILE: &str = "modes.csv";

/// Stream of the evaluation RNG used by `eval`.
const STREAM_CLI_EVAL: u64 = 11;

/// z-value of a two-sided 95% normal interval.
const Z95: f64 = 1.959_963_984_540_054;

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed{seed}"))
}

fn provenance(digest: &str, seed: impl std::fmt::Display) -> String {
    format!("# digest={digest} seed={seed}\n")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Runs `f` for every seed on its own thread; results keep seed order.
fn fan_out<T: Send>(seeds: &[u64], f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = seeds.iter().map(|&seed| s.spawn(move || f(seed))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Training("worker panicked".into()))))
            .collect()
    })
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Config("no seeds given; list them in `seeds` or pass --seed".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(Error::Config("seeds must be distinct".into()));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub digest: String,
}

pub fn metrics_csv(rows: &[MetricsRow], num_cond: usize, digest: &str, seed: u64) -> String {
    let mut text = provenance(digest, seed);
    text.push_str(&MetricsRow::header(num_cond).join(","));
    text.push('\n');
    for r in rows {
        text.push_str(&r.fields().join(","));
        text.push('\n');
    }
    text
}

/// Trains one agent per seed; writes `seed{n}/metrics.csv` and
/// `seed{n}/checkpoint.hsac`.
pub fn cmd_train(config: &RunConfig, seeds: &[u64], out: &Path) -> Result<Vec<TrainOutcome>> {
    check_seeds(seeds)?;
    let env_name = config.env_name()?;
    let base = config.training()?;
    fan_out(seeds, |seed| {
        let resolved = ResolvedRun {
            env: env_name.clone(),
            agent: crate::hybridsac::TrainingConfig { seed, ..base.clone() },
        };
        let text = resolved.to_text()?;
        let digest = config_digest(&text);
        let mut env = make_env(&env_name)?;
        let mut eval_env = make_env(&env_name)?;
        let mut agent = HybridSac::new(env.spec(), resolved.agent.clone())?;
        let report = train(&mut agent, env.as_mut(), eval_env.as_mut(), |_, _| true)?;
        let num_cond = report.rows.first().map_or(0, |r| r.cond_entropy.len());
        let dir = seed_dir(out, seed);
        write_file(&dir.join(METRICS_FILE), &metrics_csv(&report.rows, num_cond, &digest, seed))?;
        save_checkpoint(&agent.to_checkpoint(&text)?, dir.join(CHECKPOINT_FILE))?;
        Ok(TrainOutcome {
            seed,
            dir,
            rows: report.rows,
            digest,
        })
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// `(checkpoint, seed, return)` per episode.
    pub episodes: Vec<(PathBuf, u64, f64)>,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub info_totals: BTreeMap<String, f64>,
}

/// Mean and 95% normal-approximation interval `mean ± 1.96·s/√n`.
pub fn mean_ci95(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let half = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Z95 * (var / n as f64).sqrt()
    } else {
        0.0
    };
    (mean, mean - half, mean + half)
}

/// Evaluates each checkpoint's deterministic policy for `episodes` episodes
/// per seed and pools every return.
pub fn cmd_eval(checkpoints: &[PathBuf], env_override: Option<&str>, episodes: usize, seeds: &[u64]) -> Result<EvalReport> {
    if checkpoints.is_empty() {
        return Err(Error::Config("eval needs at least one --checkpoint".into()));
    }
    if episodes == 0 {
        return Err(Error::Config("eval needs at least one episode".into()));
    }
    check_seeds(seeds)?;
    let mut report = EvalReport {
        episodes: Vec::new(),
        mean: 0.0,
        ci_low: 0.0,
        ci_high: 0.0,
        info_totals: BTreeMap::new(),
    };
    for path in checkpoints {
        let ck = load_checkpoint(path, None)?;
        let resolved = ResolvedRun::from_text(&ck.config_text)?;
        let env_name = env_override.unwrap_or(&resolved.env);
        let mut env = make_env(env_name)?;
        let agent = HybridSac::from_checkpoint(env.spec(), resolved.agent.clone(), &ck)?;
        for &seed in seeds {
            let mut rng = Prng::split(seed, STREAM_CLI_EVAL);
            let summary = evaluate(&agent, env.as_mut(), episodes, &mut rng)?;
            for r in summary.returns {
                report.episodes.push((path.clone(), seed, r));
            }
            for (k, v) in summary.info_totals {
                *report.info_totals.entry(k).or_insert(0.0) += v;
            }
        }
    }
    let returns: Vec<f64> = report.episodes.iter().map(|e| e.2).collect();
    (report.mean, report.ci_low, report.ci_high) = mean_ci95(&returns);
    Ok(report)
}

pub fn eval_csv(report: &EvalReport, seeds: &[u64]) -> Result<String> {
    let mut digests = Vec::new();
    for (path, _, _) in &report.episodes {
        let d = load_checkpoint(path, None)?.digest();
        if !digests.contains(&d) {
            digests.push(d);
        }
    }
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let mut text = provenance(&digests.join(";"), seeds.join(";"));
    text.push_str("checkpoint,seed,episode,return\n");
    let mut episode = BTreeMap::new();
    for (path, seed, r) in &report.episodes {
        let i = episode.entry((path.clone(), *seed)).or_insert(0usize);
        writeln!(text, "{},{seed},{i},{r}", path.display()).expect("string write");
        *i += 1;
    }
    writeln!(text, "# mean={} ci95_low={} ci95_high={}", report.mean, report.ci_low, report.ci_high).expect("string write");
    Ok(text)
}

#[derive(Clone, Debug)]
pub struct DivlabOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub cells: Vec<SweepCell>,
}

pub fn density_file_name(cell: &SweepCell) -> String {
    format!("density_{}_flows{}_alpha{}.csv", cell.objective, cell.flows, cell.alpha)
}

pub fn modes_csv(cells: &[SweepCell], digest: &str, seed: u64) -> String {
    let mut text = provenance(digest, seed);
    text.push_str("objective,flows,alpha,mode1_mass,mode2_mass\n");
    for c in cells {
        let (m1, m2) = match &c.outcome {
            Ok(m) => (m[0], m.get(1).copied().unwrap_or(0.0)),
            Err(_) => (f64::NAN, f64::NAN),
        };
        writeln!(text, "{},{},{},{m1},{m2}", c.objective, c.flows, c.alpha).expect("string write");
    }
    text
}

/// Runs the temperature sweep once per seed. Writes `seed{n}/modes.csv`,
/// one density grid per successful cell and, when any cell failed,
/// `seed{n}/failures.csv`.
pub fn cmd_divlab(config: &DivlabConfig, seeds: &[u64], out: &Path) -> Result<Vec<DivlabOutcome>> {
    check_seeds(seeds)?;
    let target = config.target()?;
    fan_out(seeds, |seed| {
        let mut seeded = config.clone();
        seeded.sweep.fit.seed = seed;
        let digest = config_digest(&seeded.canonical_text()?);
        let cells = temperature_sweep(&target, &seeded.sweep)?;
        let dir = seed_dir(out, seed);
        write_file(&dir.join(MODES_FILE), &modes_csv(&cells, &digest, seed))?;
        let mut failures = String::new();
        for c in &cells {
            match &c.outcome {
                Ok(_) if !c.density.is_empty() => {
                    let mut text = provenance(&digest, seed);
                    text.push_str("x,y,density\n");
                    for [x, y, d] in &c.density {
                        writeln!(text, "{x},{y},{d}").expect("string write");
                    }
                    write_file(&dir.join(density_file_name(c)), &text)?;
                }
                Ok(_) => {}
                Err(msg) => {
                    writeln!(failures, "{},{},{},\"{}\"", c.objective, c.flows, c.alpha, msg.replace('"', "'"))
                        .expect("string write");
                }
            }
        }
        if !failures.is_empty() {
            let text = provenance(&digest, seed) + "objective,flows,alpha,error\n" + &failures;
            write_file(&dir.join("failures.csv"), &text)?;
        }
        Ok(DivlabOutcome { seed, dir, cells })
    })
}

pub fn cmd_gradcheck(configs: usize, seed: u64) -> Result<Vec<SuiteCase>> {
    gradient_suite(configs, seed, Tolerance::default())
}

pub fn gradcheck_csv(cases: &[SuiteCase], seed: u64) -> String {
    let tol = Tolerance::default();
    let digest = config_digest(&format!("configs={} step={} relative={} absolute={}", cases.len(), tol.step, tol.relative, tol.absolute));
    let mut text = provenance(&digest, seed);
    text.push_str("index,kind,entries,failures,max_abs_error,max_rel_error,passed\n");
    for c in cases {
        writeln!(
            text,
            "{},{},{},{},{:e},{:e},{}",
            c.index,
            c.kind,
            c.report.entries,
            c.report.failures,
            c.report.max_abs_error,
            c.report.max_rel_error,
            c.report.passed()
        )
        .expect("string write");
    }
    text
}

/// Smoothing applied by `export`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Smoothing {
    None,
    SavitzkyGolay { window: usize, order: usize },
}

/// Reads a metrics CSV and returns it with every column except `step`
/// smoothed. Comment lines are kept, followed by one naming the filter.
pub fn cmd_export(metrics: &Path, smoothing: Smoothing) -> Result<String> {
    let text = std::fs::read_to_string(metrics).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Config(format!("metrics file not found: {}", metrics.display())),
        _ => Error::Io(e),
    })?;
    let mut comments = Vec::new();
    let mut lines = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') {
            comments.push(line);
        } else if !line.trim().is_empty() {
            lines.push(line);
        }
    }
    let (header, body) = lines
        .split_first()
        .ok_or_else(|| Error::Config(format!("{} has no header line", metrics.display())))?;
    let names: Vec<&str> = header.split(',').collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (i, line) in body.iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(Error::Config(format!(
                "{} line {}: {} fields, header has {}",
                metrics.display(),
                i + 2 + comments.len(),
                cells.len(),
                names.len()
            )));
        }
        for (col, cell) in columns.iter_mut().zip(cells) {
            col.push(cell.trim().parse().map_err(|_| {
                Error::Config(format!("{}: `{cell}` is not a number", metrics.display()))
            })?);
        }
    }
    let note = match smoothing {
        Smoothing::None => "# smoothing=none".to_string(),
        Smoothing::SavitzkyGolay { window, order } => {
            for (name, col) in names.iter().zip(columns.iter_mut()) {
                if *name != "step" {
                    *col = savitzky_golay(col, window, order)?;
                }
            }
            format!("# smoothing=savitzky_golay window={window} order={order}")
        }
    };
    let mut out = String::new();
    for c in comments {
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(&note);
    out.push('\n');
    out.push_str(header);
    out.push('\n');
    for r in 0..body.len() {
        let row: Vec<String> = columns.iter().map(|c| c[r].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_of_identical_values_has_zero_width() {
        assert_eq!(mean_ci95(&[2.0; 5]), (2.0, 2.0, 2.0));
        let (m, lo, hi) = mean_ci95(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((hi - m - Z95 * (2.0f64 / 2.0).sqrt()).abs() < 1e-12);
        assert_eq!(m - lo, hi - m);
    }

    #[test]
    fn seeds_must_be_given_and_distinct() {
        assert!(check_seeds(&[]).is_err());
        assert!(check_seeds(&[1, 1]).is_err());
        assert!(check_seeds(&[0, 1]).is_ok());
    }
}
