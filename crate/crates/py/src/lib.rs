//! Python bindings: environments, agents, policy densities, the divergence
//! lab and the gradient suite.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use hybrid_sac::cli::{gradient_suite, savitzky_golay as sg_filter, ResolvedRun, RunConfig};
use hybrid_sac::divlab::{self, GaussianMixture, MatchConfig, ObjectiveKind};
use hybrid_sac::envs::{make_env, Environment};
use hybrid_sac::hybridsac::{evaluate, train as train_agent, ActMode, HybridSac};
use hybrid_sac::numgrad::{load_checkpoint, save_checkpoint, Prng, Tolerance};
use hybrid_sac::policykit::{self, GaussianHead, RadialFlowParams};
use hybrid_sac::{CheckpointError, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Checkpoint(CheckpointError::Missing(p)) => PyFileNotFoundError::new_err(p),
        Error::Config(_) | Error::Shape(_) | Error::Contract(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

type Action = (Vec<usize>, Vec<Vec<f64>>);

/// A desk-scale environment.
#[pyclass(name = "Env", unsendable)]
struct PyEnv {
    inner: Box<dyn Environment>,
    rng: Prng,
}

#[pymethods]
impl PyEnv {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: make_env(name).map_err(py_err)?,
            rng: Prng::seed(0),
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.spec().name.clone()
    }

    #[getter]
    fn observation_dim(&self) -> usize {
        self.inner.spec().observation_dim
    }

    /// `(discrete cardinalities, continuous dims)`.
    #[getter]
    fn action_layout(&self) -> (Vec<usize>, Vec<usize>) {
        let a = &self.inner.spec().action;
        (a.discrete.clone(), a.continuous.clone())
    }

    #[getter]
    fn max_episode_steps(&self) -> usize {
        self.inner.spec().max_episode_steps
    }

    #[pyo3(signature = (seed=None))]
    fn reset(&mut self, seed: Option<u64>) -> Vec<f64> {
        if let Some(s) = seed {
            self.rng = Prng::seed(s);
        }
        self.inner.reset(&mut self.rng)
    }

    /// Returns `(observation, reward, done, info)`.
    fn step(&mut self, discrete: Vec<usize>, continuous: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, f64, bool, BTreeMap<String, f64>)> {
        let a = policykit::HybridAction { discrete, continuous };
        let s = self.inner.step(&a).map_err(py_err)?;
        Ok((s.observation, s.reward, s.done, s.info))
    }
}

/// A Hybrid SAC agent bound to one environment.
#[pyclass(name = "Agent", unsendable)]
struct PyAgent {
    inner: HybridSac,
    env: String,
}

#[pymethods]
impl PyAgent {
    /// `config` is the `[agent]` table of a run config, as TOML text.
    #[new]
    #[pyo3(signature = (env, config="", seed=0, preset="desk"))]
    fn new(env: &str, config: &str, seed: u64, preset: &str) -> PyResult<Self> {
        let text = format!("env = {env:?}\npreset = {preset:?}\n[agent]\n{config}\n");
        let run = RunConfig::parse(&text).map_err(py_err)?;
        let mut training = run.training().map_err(py_err)?;
        training.seed = seed;
        let e = make_env(&run.env_name().map_err(py_err)?).map_err(py_err)?;
        Ok(Self {
            inner: HybridSac::new(e.spec(), training).map_err(py_err)?,
            env: env.to_string(),
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ck = load_checkpoint(path, None).map_err(|e| py_err(e.into()))?;
        let run = ResolvedRun::from_text(&ck.config_text).map_err(py_err)?;
        let e = make_env(&run.env).map_err(py_err)?;
        Ok(Self {
            inner: HybridSac::from_checkpoint(e.spec(), run.agent, &ck).map_err(py_err)?,
            env: run.env,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let text = ResolvedRun {
            env: self.env.clone(),
            agent: self.inner.config.clone(),
        }
        .to_text()
        .map_err(py_err)?;
        let ck = self.inner.to_checkpoint(&text).map_err(py_err)?;
        save_checkpoint(&ck, path).map_err(|e| py_err(e.into()))
    }

    #[getter]
    fn alpha_d(&self) -> f64 {
        self.inner.alpha_d()
    }

    #[getter]
    fn alpha_c(&self) -> f64 {
        self.inner.alpha_c()
    }

    #[getter]
    fn env_steps(&self) -> u64 {
        self.inner.env_steps()
    }

    #[pyo3(signature = (obs, deterministic=true))]
    fn act(&mut self, obs: Vec<f64>, deterministic: bool) -> PyResult<Action> {
        let mode = if deterministic { ActMode::Deterministic } else { ActMode::Stochastic };
        let a = self.inner.act(&obs, mode).map_err(py_err)?;
        Ok((a.discrete, a.continuous))
    }

    /// Trains for the configured number of steps; returns one dict per
    /// evaluation row.
    fn train(&mut self) -> PyResult<Vec<BTreeMap<String, f64>>> {
        let mut env = make_env(&self.env).map_err(py_err)?;
        let mut eval_env = make_env(&self.env).map_err(py_err)?;
        let report = train_agent(&mut self.inner, env.as_mut(), eval_env.as_mut(), |_, _| true).map_err(py_err)?;
        let k = report.rows.first().map_or(0, |r| r.cond_entropy.len());
        let header = hybrid_sac::hybridsac::MetricsRow::header(k);
        Ok(report
            .rows
            .iter()
            .map(|r| {
                header
                    .iter()
                    .cloned()
                    .zip(r.fields().iter().map(|v| v.parse().unwrap_or(f64::NAN)))
                    .collect()
            })
            .collect())
    }

    /// Deterministic-policy returns.
    #[pyo3(signature = (episodes=5, seed=0))]
    fn evaluate(&self, episodes: usize, seed: u64) -> PyResult<Vec<f64>> {
        let mut env = make_env(&self.env).map_err(py_err)?;
        let s = evaluate(&self.inner, env.as_mut(), episodes, &mut Prng::seed(seed)).map_err(py_err)?;
        Ok(s.returns)
    }
}

/// `(tanh(μ + σε), log π)` of a squashed diagonal Gaussian.
#[pyfunction]
fn gaussian_sample(mean: Vec<f64>, log_std: Vec<f64>, noise: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    if mean.len() != log_std.len() || mean.len() != noise.len() {
        return Err(PyValueError::new_err("mean, log_std and noise must have equal length"));
    }
    let s = policykit::gaussian_sample(&GaussianHead::new(mean, log_std), &noise, None);
    Ok((s.action, s.log_prob))
}

/// `(f(z), log|det ∂f/∂z|)` of one radial flow.
#[pyfunction]
fn radial_flow(z0: Vec<f64>, x: f64, y: f64, z: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    if z0.len() != z.len() {
        return Err(PyValueError::new_err("z0 and z must have equal length"));
    }
    Ok(policykit::radial_flow_forward(&RadialFlowParams { z0, x, y }, &z))
}

/// Fits a policy to the two-mode target and returns its per-mode mass.
#[pyfunction]
#[pyo3(signature = (objective="forward_kl", alpha=1.0, flows=0, steps=2000, seed=0, batch_size=256, samples=10000))]
fn divlab_fit(
    objective: &str,
    alpha: f64,
    flows: usize,
    steps: usize,
    seed: u64,
    batch_size: usize,
    samples: usize,
) -> PyResult<Vec<f64>> {
    let objective: ObjectiveKind = objective.parse().map_err(py_err)?;
    let config = MatchConfig {
        objective,
        alpha,
        num_flows: flows,
        steps,
        seed,
        batch_size,
        ..MatchConfig::default()
    };
    let target = GaussianMixture::two_mode();
    let fit = divlab::fit(&target, &config).map_err(py_err)?;
    divlab::mode_mass(&fit.policy, &target, samples, &mut Prng::split(seed, 3)).map_err(py_err)
}

/// Runs the gradient suite; returns `(passed, total)`.
#[pyfunction]
#[pyo3(signature = (configs=50, seed=0))]
fn gradcheck(configs: usize, seed: u64) -> PyResult<(usize, usize)> {
    let cases = gradient_suite(configs, seed, Tolerance::default()).map_err(py_err)?;
    Ok((cases.iter().filter(|c| c.report.passed()).count(), cases.len()))
}

#[pyfunction]
#[pyo3(signature = (values, window=7, order=3))]
fn savitzky_golay(values: Vec<f64>, window: usize, order: usize) -> PyResult<Vec<f64>> {
    sg_filter(&values, window, order).map_err(py_err)
}

#[pymodule]
fn hsac(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnv>()?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(gaussian_sample, m)?)?;
    m.add_function(wrap_pyfunction!(radial_flow, m)?)?;
    m.add_function(wrap_pyfunction!(divlab_fit, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(savitzky_golay, m)?)?;
    Ok(())
}
