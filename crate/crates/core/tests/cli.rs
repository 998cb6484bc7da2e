use std::path::Path;
use std::process::Command;

use hybrid_sac::cli::{
    cmd_divlab, cmd_eval, cmd_export, cmd_train, seed_dir, ResolvedRun, RunConfig, Smoothing, CHECKPOINT_FILE,
    METRICS_FILE, MODES_FILE,
};
use hybrid_sac::envs::{make_env, GridWorld};
use hybrid_sac::hybridsac::{HybridSac, TrainingConfig};
use hybrid_sac::numgrad::{save_checkpoint, Tensor};
use hybrid_sac::{CheckpointError, Error};

const SMALL_TRAIN: &str = r#"
env = "grid_world"
seeds = [3]

[agent]
total_steps = 400
warmup_steps = 100
eval_interval = 200
eval_episodes = 1
batch_size = 16
actor_hidden = [8]
critic_hidden = [8]
"#;

const SMALL_DIVLAB: &str = r#"
[divlab.sweep]
alphas = [1.0, 2.0]
mode_samples = 200
density_samples = 100
grid_points = 5

[divlab.sweep.fit]
steps = 30
batch_size = 16
hidden = [8]
"#;

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn training_twice_gives_byte_identical_outputs() {
    let config = RunConfig::parse(SMALL_TRAIN).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = cmd_train(&config, &[3], a.path()).unwrap();
    cmd_train(&config, &[3], b.path()).unwrap();
    assert_eq!(first[0].rows.len(), 2);
    for file in [METRICS_FILE, CHECKPOINT_FILE] {
        assert_eq!(read(&seed_dir(a.path(), 3).join(file)), read(&seed_dir(b.path(), 3).join(file)), "{file}");
    }
    let text = String::from_utf8(read(&seed_dir(a.path(), 3).join(METRICS_FILE))).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), format!("# digest={} seed=3", first[0].digest));
    assert_eq!(
        lines.next().unwrap(),
        "step,episode_return_mean,q1_loss,q2_loss,actor_loss_d,actor_loss_c,alpha_d,alpha_c,entropy_d,entropy_c"
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn trained_checkpoint_evaluates() {
    let config = RunConfig::parse(SMALL_TRAIN).unwrap();
    let dir = tempfile::tempdir().unwrap();
    cmd_train(&config, &[3], dir.path()).unwrap();
    let ck = seed_dir(dir.path(), 3).join(CHECKPOINT_FILE);
    let r = cmd_eval(&[ck], None, 2, &[0, 1]).unwrap();
    assert_eq!(r.episodes.len(), 4);
    assert!(r.ci_low <= r.mean && r.mean <= r.ci_high);
}

/// Identity trunk over the one-hot cell and a logits head that puts its
/// largest value on the shortest-path move of each cell.
fn optimal_grid_checkpoint(path: &Path) {
    let env = GridWorld::new();
    let cells = 25;
    let agent_config = TrainingConfig {
        actor_hidden: vec![cells],
        critic_hidden: vec![4],
        ..TrainingConfig::default()
    };
    let mut agent = HybridSac::new(hybrid_sac::envs::Environment::spec(&env), agent_config.clone()).unwrap();
    let mut trunk = Tensor::zeros(cells, cells);
    let mut logits = Tensor::zeros(cells, 4);
    for c in 0..cells {
        trunk.set(c, c, 1.0);
        let mut obs = vec![0.0; cells];
        obs[c] = 1.0;
        logits.set(c, GridWorld::optimal_action(&obs), 5.0);
    }
    *agent.actor.get_mut("trunk.l0.w").unwrap() = trunk;
    *agent.actor.get_mut("logits.l0.w").unwrap() = logits;
    let text = ResolvedRun {
        env: "grid_world".into(),
        agent: agent_config,
    }
    .to_text()
    .unwrap();
    save_checkpoint(&agent.to_checkpoint(&text).unwrap(), path).unwrap();
}

#[test]
fn optimal_grid_checkpoint_returns_two_with_zero_width_interval() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("optimal.hsac");
    optimal_grid_checkpoint(&ck);
    let r = cmd_eval(&[ck], None, 5, &[0, 1, 2]).unwrap();
    assert_eq!(r.episodes.len(), 15);
    assert_eq!((r.mean, r.ci_low, r.ci_high), (2.0, 2.0, 2.0));
}

#[test]
fn missing_checkpoint_is_reported() {
    let e = cmd_eval(&["/nonexistent/ck.hsac".into()], None, 1, &[0]).unwrap_err();
    assert!(matches!(e, Error::Checkpoint(CheckpointError::Missing(_))), "{e}");
}

#[test]
fn export_leaves_linear_data_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.csv");
    let mut text = String::from("# digest=abc seed=0\nstep,episode_return_mean,q1_loss\n");
    for i in 0..15 {
        text.push_str(&format!("{},{},{}\n", i * 100, 0.5 * i as f64 - 1.0, 3.0 - 0.25 * i as f64));
    }
    std::fs::write(&path, &text).unwrap();
    let out = cmd_export(&path, Smoothing::SavitzkyGolay { window: 7, order: 3 }).unwrap();
    let parse = |t: &str| -> Vec<Vec<f64>> {
        t.lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    assert!(out.starts_with("# digest=abc seed=0\n"));
    let (before, after) = (parse(&text), parse(&out));
    assert_eq!(before.len(), after.len());
    for (x, y) in before.iter().flatten().zip(after.iter().flatten()) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
    let unsmoothed = cmd_export(&path, Smoothing::None).unwrap();
    assert_eq!(parse(&unsmoothed), before);
}

#[test]
fn divlab_twice_gives_byte_identical_outputs() {
    let config = RunConfig::parse(SMALL_DIVLAB).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out = cmd_divlab(&config.divlab, &[5], a.path()).unwrap();
    cmd_divlab(&config.divlab, &[5], b.path()).unwrap();
    assert_eq!(out[0].cells.len(), 2 * 2 * 2);
    let dir = seed_dir(a.path(), 5);
    let mut names: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&MODES_FILE.to_string()));
    assert_eq!(names.iter().filter(|n| n.starts_with("density_")).count(), 8);
    for n in &names {
        assert_eq!(read(&dir.join(n)), read(&seed_dir(b.path(), 5).join(n)), "{n}");
    }
    let modes = String::from_utf8(read(&dir.join(MODES_FILE))).unwrap();
    assert!(modes.starts_with("# digest="));
    assert_eq!(modes.lines().nth(1).unwrap(), "objective,flows,alpha,mode1_mass,mode2_mass");
    let density = String::from_utf8(read(&dir.join("density_forward_kl_flows0_alpha1.csv"))).unwrap();
    assert_eq!(density.lines().nth(1).unwrap(), "x,y,density");
    assert_eq!(density.lines().count(), 2 + 25);
}

#[test]
fn seeds_are_required() {
    let config = RunConfig::parse("env = \"grid_world\"\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(cmd_train(&config, &[], dir.path()), Err(Error::Config(_))));
}

fn hsac(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hsac")).args(args).output().unwrap()
}

#[test]
fn malformed_config_exits_with_a_line_and_key_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "env = \"grid_world\"\nseeds = [0]\ntotal_steps = 5\n").unwrap();
    let out = hsac(&["train", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("total_steps"), "{err}");

    std::fs::write(&path, "env = \"grid_world\"\n[agent]\nbatch = 5\n").unwrap();
    let out = hsac(&["train", "--config", path.to_str().unwrap(), "--seed", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch"));
}

#[test]
fn gradcheck_subcommand_reports_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = hsac(&["gradcheck", "--configs", "12", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("12/12 configurations passed"));
    let csv = std::fs::read_to_string(dir.path().join("gradcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 12);
}

#[test]
fn environments_named_in_configs_exist() {
    let e = RunConfig::parse("env = \"pong\"\n").unwrap().env_name().unwrap_err().to_string();
    assert!(e.contains("pong"));
    assert!(make_env("point_mass").is_ok());
}

#[test]
fn shipped_configs_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.seeds, [0, 1, 2, 3, 4], "{}", path.display());
        if config.env.is_some() {
            config.env_name().unwrap();
            config.training().unwrap();
        } else {
            config.divlab.target().unwrap();
        }
        seen += 1;
    }
    assert_eq!(seen, 5);
}
