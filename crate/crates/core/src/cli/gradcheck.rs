//! The gradient suite: random networks and policies checked against central
//! finite differences.

use crate::divlab::{GaussianMixture, MatchPolicy, ObjectiveKind, SampleBatch, TemperedTarget};
use crate::divlab::objective_on_tape;
use crate::error::Result;
use crate::hybridsac::{actor_on_tape, critic_on_tape, Networks, TrainingConfig};
use crate::numgrad::{
    check_gradients, init_params_with, mlp_on_tape, scalar, Activation, GradReport, MlpConfig, ParamVars, ParameterSet,
    Prng, Tape, Tensor, Tolerance, Var,
};
use crate::policykit::{
    gaussian_log_density_on_tape, tanh_squash_on_tape, ActionBounds, ContinuousBinding, HybridActionSpec, LOG_STD_MAX,
    LOG_STD_MIN,
};

pub const SUITE_SIZE: usize = 50;

/// Configuration families, visited round-robin.
pub const SUITE_KINDS: [&str; 6] = [
    "mlp",
    "squashed_gaussian",
    "flow_policy",
    "hybrid_actor",
    "critic",
    "divergence",
];

#[derive(Clone, Debug)]
pub struct SuiteCase {
    pub index: usize,
    pub kind: &'static str,
    pub description: String,
    pub report: GradReport,
}

/// Runs `configs` random configurations drawn from `seed`.
pub fn gradient_suite(configs: usize, seed: u64, tol: Tolerance) -> Result<Vec<SuiteCase>> {
    (0..configs)
        .map(|i| {
            let mut rng = Prng::split(seed, i as u64);
            let kind = SUITE_KINDS[i % SUITE_KINDS.len()];
            let (description, report) = match kind {
                "mlp" => mlp_case(&mut rng, tol)?,
                "squashed_gaussian" => squashed_case(&mut rng, tol)?,
                "flow_policy" => flow_case(&mut rng, tol)?,
                "hybrid_actor" => hybrid_case(&mut rng, tol)?,
                "critic" => critic_case(&mut rng, tol)?,
                _ => divergence_case(&mut rng, tol)?,
            };
            Ok(SuiteCase {
                index: i,
                kind,
                description,
                report,
            })
        })
        .collect()
}

fn between(rng: &mut Prng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

fn activation(rng: &mut Prng) -> Activation {
    if rng.below(2) == 0 {
        Activation::Relu
    } else {
        Activation::Tanh
    }
}

fn hidden(rng: &mut Prng, max_layers: usize) -> Vec<usize> {
    let n = between(rng, 0, max_layers);
    (0..n).map(|_| between(rng, 1, 5)).collect()
}

/// Adds `N(0, scale²)` to every entry so that no parameter sits at its
/// initial special value (zero biases, identity flows).
fn jitter(params: &mut ParameterSet, rng: &mut Prng, scale: f64) {
    for (_, t) in params.iter_mut() {
        for v in t.data_mut() {
            *v += scale * rng.normal();
        }
    }
}

fn random(rng: &mut Prng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(rows, cols, rng.normals(rows * cols))
}

/// `Σ c ⊙ x` for a fixed random `c`.
fn project(tape: &mut Tape, x: Var, c: &Tensor) -> Var {
    let c = tape.constant(c.clone());
    let p = tape.mul(x, c);
    tape.sum(p)
}

fn mlp_case(rng: &mut Prng, tol: Tolerance) -> Result<(String, GradReport)> {
    let cfg = MlpConfig::new(between(rng, 1, 4), &hidden(rng, 2), between(rng, 1, 4), activation(rng));
    let mut params = init_params_with(&cfg, "", rng)?;
    jitter(&mut params, rng, 0.3);
    let n = between(rng, 1, 3);
    let x = random(rng, n, cfg.input_dim);
    let c = random(rng, n, cfg.output_dim);
    let softmax = cfg.output_dim > 1 && rng.below(2) == 0;
    let report = check_gradients(&params, tol, |tape, vars| {
        let xv = tape.constant(x.clone());
        let mut out = mlp_on_tape(tape, vars, &cfg, "", xv)?;
        if softmax {
            out = tape.log_softmax_rows(out);
        }
        let loss = project(tape, out, &c);
        Ok(scalar(tape, loss))
    })?;
    Ok((format!("{cfg:?} batch={n} log_softmax={softmax}"), report))
}

fn squashed_case(rng: &mut Prng, tol: Tolerance) -> Result<(String, GradReport)> {
    let d = between(rng, 1, 3);
    let cfg = MlpConfig::new(between(rng, 1, 4), &hidden(rng, 2), 2 * d, activation(rng));
    let mut params = init_params_with(&cfg, "", rng)?;
    jitter(&mut params, rng, 0.3);
    let n = between(rng, 1, 3);
    let x = random(rng, n, cfg.input_dim);
    let noise = random(rng, n, d);
    let c = random(rng, n, d);
    let report = check_gradients(&params, tol, |tape, vars| {
        let xv = tape.constant(x.clone());
        let out = mlp_on_tape(tape, vars, &cfg, "", xv)?;
        let mean = tape.slice_cols(out, 0, d);
        let raw = tape.slice_cols(out, d, d);
        let log_std = tape.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
        let eps = tape.constant(noise.clone());
        let std = tape.exp(log_std);
        let scaled = tape.mul(eps, std);
        let w = tape.add(mean, scaled);
        let lp = gaussian_log_density_on_tape(tape, eps, log_std);
        let (a, corr) = tanh_squash_on_tape(tape, w);
        let lp = tape.sub(lp, corr);
        let lp = tape.mean(lp);
        let pa = project(tape, a, &c);
        let loss = tape.add(lp, pa);
        Ok(scalar(tape, loss))
    })?;
    Ok((format!("dim={d} {cfg:?} batch={n}"), report))
}

fn flow_case(rng: &mut Prng, tol: Tolerance) -> Result<(String, GradReport)> {
    let d = between(rng, 1, 3);
    let flows = between(rng, 1, 3);
    let squash = (rng.below(2) == 0).then(|| 0.5 + 2.0 * rng.uniform());
    let mut policy = MatchPolicy::new(d, &[between(rng, 1, 4)], flows, squash, rng)?;
    jitter(&mut policy.params, rng, 0.3);
    let n = between(rng, 1, 4);
    let noise = random(rng, n, d);
    let points = random(rng, n, d);
    let c = random(rng, n, d);
    let report = check_gradients(&policy.params, tol, |tape, vars| {
        let (a, lp) = policy.sample_on_tape(tape, vars, &noise)?;
        let lp = tape.mean(lp);
        let pa = project(tape, a, &c);
        let mut loss = tape.add(lp, pa);
        if policy.squash.is_none() {
            let b = tape.constant(points.clone());
            let lb = policy.log_prob_on_tape(tape, vars, b)?;
            let lb = tape.mean(lb);
            loss = tape.add(loss, lb);
        }
        Ok(scalar(tape, loss))
    })?;
    Ok((format!("dim={d} flows={flows} squash={squash:?} batch={n}"), report))
}

fn random_spec(rng: &mut Prng) -> Result<(HybridActionSpec, Vec<ActionBounds>)> {
    let spec = match rng.below(3) {
        0 => {
            let k = between(rng, 2, 3);
            HybridActionSpec::new(vec![k], (0..k).map(|_| between(rng, 1, 2)).collect(), ContinuousBinding::PerDiscreteAction)?
        }
        1 => HybridActionSpec::new(
            vec![between(rng, 1, 3)],
            vec![between(rng, 1, 2)],
            ContinuousBinding::Independent,
        )?,
        _ => HybridActionSpec::new(Vec::new(), vec![between(rng, 1, 3)], ContinuousBinding::Independent)?,
    };
    let bounds = spec
        .continuous
        .iter()
        .map(|&m| {
            let low: Vec<f64> = (0..m).map(|_| -0.5 - rng.uniform()).collect();
            let high: Vec<f64> = (0..m).map(|_| 0.5 + 2.0 * rng.uniform()).collect();
            ActionBounds::new(low, high)
        })
        .collect();
    Ok((spec, bounds))
}

fn hybrid_nets(rng: &mut Prng) -> Result<Networks> {
    let (spec, bounds) = random_spec(rng)?;
    let mut config = TrainingConfig::default();
    config.actor_hidden = (0..between(rng, 1, 2)).map(|_| between(rng, 2, 4)).collect();
    config.critic_hidden = vec![between(rng, 2, 4)];
    config.activation = activation(rng);
    config.num_flows = between(rng, 0, 2);
    Networks::new(between(rng, 1, 3), spec, bounds, &config)
}

fn hybrid_case(rng: &mut Prng, tol: Tolerance) -> Result<(String, GradReport)> {
    let nets = hybrid_nets(rng)?;
    let mut actor = nets.init_actor(rng)?;
    jitter(&mut actor, rng, 0.3);
    let mut critic = nets.init_critic(rng)?;
    jitter(&mut critic, rng, 0.3);
    let n = between(rng, 1, 3);
    let k = nets.num_discrete();
    let m = nets.continuous_dim();
    let obs = random(rng, n, nets.obs_dim);
    let noise = random(rng, n, m);
    let weights: Vec<Tensor> = [k, m, k, k].iter().map(|&c| random(rng, n, c)).collect();
    let report = check_gradients(&actor, tol, |tape, vars: &ParamVars| {
        let x = tape.constant(obs.clone());
        let pass = actor_on_tape(tape, vars, &nets, x, &noise)?;
        let mut loss = project(tape, pass.log_probs, &weights[0]);
        if let (Some(a), Some(clp)) = (pass.unit_action, pass.cond_log_prob) {
            let pa = project(tape, a, &weights[1]);
            let pc = project(tape, clp, &weights[2]);
            let cv = tape.bind(&critic, false);
            let q = critic_on_tape(tape, &cv, &nets, x, Some(a))?;
            let pq = project(tape, q, &weights[3]);
            for t in [pa, pc, pq] {
                loss = tape.add(loss, t);
            }
        }
        Ok(scalar(tape, loss))
    })?;
    Ok((
        format!(
            "spec={:?} hidden={:?} flows={} batch={n}",
            nets.spec, nets.actor_hidden, nets.num_flows
        ),
        report,
    ))
}

fn critic_case(rng: &mut Prng, tol: Tolerance) -> Result<(String, GradReport)> {
    let nets = hybrid_nets(rng)?;
    let mut critic = nets.init_critic(rng)?;
    jitter(&mut critic, rng, 0.3);
    let n = between(rng, 1, 4);
    let k = nets.num_discrete();
    let obs = random(rng, n, nets.obs_dim);
    let act = Tensor::new(n, nets.continuous_dim(), (0..n * nets.continuous_dim()).map(|_| rng.uniform_in(-0.99, 0.99)).collect());
    let taken: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
    let y = Tensor::column(&rng.normals(n));
    let report = check_gradients(&critic, tol, |tape, vars| {
        let x = tape.constant(obs.clone());
        let a = tape.constant(act.clone());
        let q = critic_on_tape(tape, vars, &nets, x, Some(a))?;
        let q = tape.gather(q, taken.clone());
        let yv = tape.constant(y.clone());
        let diff = tape.sub(q, yv);
        let sq = tape.square(diff);
        let loss = tape.mean(sq);
        Ok(scalar(tape, loss))
    })?;
    Ok((format!("critic={:?} batch={n}", nets.critic), report))
}

fn divergence_case(rng: &mut Prng, tol: Tolerance) -> Result<(String, GradReport)> {
    let kind = ObjectiveKind::ALL[rng.below(ObjectiveKind::ALL.len())];
    let alpha = [0.5, 1.0, 2.0][rng.below(3)];
    let flows = between(rng, 0, 3);
    let squash = (kind == ObjectiveKind::ForwardKl && rng.below(2) == 0).then_some(3.0);
    let mut policy = MatchPolicy::new(2, &[between(rng, 2, 4)], flows, squash, rng)?;
    jitter(&mut policy.params, rng, 0.3);
    let target = TemperedTarget::new(GaussianMixture::two_mode(), alpha)?;
    let batch = SampleBatch::draw(kind, &target, 6, rng)?;
    let progress = rng.uniform();
    let report = check_gradients(&policy.params, tol, |tape, vars| {
        let e = objective_on_tape(tape, vars, &policy, &target, kind, progress, &batch)?;
        Ok((e.loss, e.value))
    })?;
    Ok((format!("{kind} alpha={alpha} flows={flows} squash={squash:?}"), report))
}
