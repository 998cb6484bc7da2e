use hybrid_sac::numgrad::{
    check_gradients, init_params, load_checkpoint, mlp_forward, save_checkpoint, scalar, Activation, AdamHyper,
    AdamState, Checkpoint, MlpConfig, ParamVars, ParameterSet, Prng, Tape, Tensor, Tolerance, Var,
};
use proptest::prelude::*;

const OPS: [&str; 31] = [
    "matmul", "add", "sub", "mul", "div", "min", "neg", "scale", "shift", "relu", "tanh", "exp", "log", "sqrt",
    "square", "softplus", "clamp", "softmax_rows", "log_softmax_rows", "sum_rows", "sum_cols", "sum", "mean",
    "row_norm", "slice_cols", "concat_cols", "gather", "log_one_minus_tanh_sq", "dense", "add_row", "mul_row",
];

fn random_leaves(seed: u64) -> ParameterSet {
    let mut rng = Prng::seed(seed);
    let mut p = ParameterSet::new();
    p.insert("a", Tensor::new(3, 4, rng.normals(12))).unwrap();
    p.insert("b", Tensor::new(3, 4, rng.normals(12))).unwrap();
    p.insert("pos", Tensor::new(3, 4, (0..12).map(|_| rng.uniform_in(0.5, 2.0)).collect())).unwrap();
    p.insert("w", Tensor::new(4, 2, rng.normals(8))).unwrap();
    p.insert("row", Tensor::new(1, 4, rng.normals(4))).unwrap();
    p
}

fn apply(t: &mut Tape, v: &ParamVars, op: &str) -> Var {
    let (a, b, pos, w, row) = (v.get("a"), v.get("b"), v.get("pos"), v.get("w"), v.get("row"));
    match op {
        "matmul" => t.matmul(a, w),
        "add" => t.add(a, b),
        "sub" => t.sub(a, b),
        "mul" => t.mul(a, b),
        "div" => t.div(a, pos),
        "min" => t.min(a, b),
        "neg" => t.neg(a),
        "scale" => t.scale(a, -1.7),
        "shift" => t.shift(a, 0.3),
        "relu" => t.relu(a),
        "tanh" => t.tanh(a),
        "exp" => t.exp(a),
        "log" => t.log(pos),
        "sqrt" => t.sqrt(pos),
        "square" => t.square(a),
        "softplus" => t.softplus(a),
        "clamp" => t.clamp(a, -0.5, 0.5),
        "softmax_rows" => t.softmax_rows(a),
        "log_softmax_rows" => t.log_softmax_rows(a),
        "sum_rows" => t.sum_rows(a),
        "sum_cols" => t.sum_cols(a),
        "sum" => t.sum(a),
        "mean" => t.mean(a),
        "row_norm" => t.row_norm(a),
        "slice_cols" => t.slice_cols(a, 1, 2),
        "concat_cols" => t.concat_cols(&[a, b, a]),
        "gather" => t.gather(a, vec![3, 0, 2]),
        "log_one_minus_tanh_sq" => t.log_one_minus_tanh_sq(a),
        "dense" => {
            let bias = t.slice_cols(row, 0, 2);
            t.dense(a, w, bias)
        }
        "add_row" => t.add(a, row),
        "mul_row" => t.mul(row, a),
        other => panic!("unknown op {other}"),
    }
}

/// `Σ c ⊙ op(·)` with weights fixed by the output shape.
fn weighted(t: &mut Tape, out: Var) -> Var {
    let (r, c) = t.value(out).shape();
    let weights = t.constant(Tensor::new(r, c, Prng::seed(99).normals(r * c)));
    let p = t.mul(out, weights);
    t.sum(p)
}

#[test]
fn every_op_is_covered_once() {
    let mut sorted = OPS.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), OPS.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn op_gradients_match_central_differences(seed in 0u64..1_000_000) {
        let p = random_leaves(seed);
        for op in OPS {
            let r = check_gradients(&p, Tolerance::default(), |t, v| {
                let out = apply(t, v, op);
                let loss = weighted(t, out);
                Ok(scalar(t, loss))
            })
            .unwrap();
            prop_assert!(r.passed(), "{op}: {r:?}");
        }
    }

    #[test]
    fn softmax_is_a_distribution_and_log_softmax_agrees(seed in 0u64..1_000_000, spread in 0.1f64..30.0) {
        let mut rng = Prng::seed(seed);
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(4, 5, rng.normals(20).iter().map(|v| v * spread).collect()));
        let s = t.softmax_rows(x);
        let ls = t.log_softmax_rows(x);
        for r in 0..4 {
            let row = t.value(s).row_slice(r);
            prop_assert!(row.iter().all(|&p| p > 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (p, lp) in row.iter().zip(t.value(ls).row_slice(r)) {
                prop_assert!((p.ln() - lp).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn replay_reproduces_recorded_values(seed in 0u64..1_000_000) {
        let p = random_leaves(seed);
        let mut t = Tape::new();
        let v = t.bind(&p, true);
        let mut acc = t.constant(Tensor::scalar(0.0));
        for op in OPS {
            let out = apply(&mut t, &v, op);
            let l = weighted(&mut t, out);
            acc = t.add(acc, l);
        }
        prop_assert!(t.replay_matches());
    }

    #[test]
    fn adam_with_zero_gradient_keeps_parameters(seed in 0u64..1_000_000, steps in 1usize..20) {
        let cfg = MlpConfig::new(3, &[4], 2, Activation::Tanh);
        let mut p = init_params(&cfg, seed).unwrap();
        let before = p.clone();
        let mut opt = AdamState::new(&p, AdamHyper::default());
        let zero = p.zeros_like();
        for _ in 0..steps {
            opt.step(&mut p, &zero).unwrap();
        }
        prop_assert_eq!(p, before);
    }

    #[test]
    fn checkpoints_round_trip_bitwise(seed in 0u64..1_000_000) {
        let p = random_leaves(seed);
        let mut ck = Checkpoint { config_text: format!("seed = {seed}\n"), ..Default::default() };
        ck.params.insert("leaves".into(), p);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.hsac");
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path, Some(&ck.digest())).unwrap();
        prop_assert_eq!(back, ck);
    }
}

#[test]
fn two_four_one_relu_forward_matches_hand_algebra() {
    let cfg = MlpConfig::new(2, &[4], 1, Activation::Relu);
    let mut p = init_params(&cfg, 17).unwrap();
    let mut rng = Prng::seed(5);
    for name in ["l0.b", "l1.b"] {
        for v in p.get_mut(name).unwrap().data_mut() {
            *v = rng.normal();
        }
    }
    let x = [0.8, -1.3];
    let w0 = p.get("l0.w").unwrap();
    let b0 = p.get("l0.b").unwrap();
    let w1 = p.get("l1.w").unwrap();
    let b1 = p.get("l1.b").unwrap();
    let mut expected = b1.get(0, 0);
    for j in 0..4 {
        let pre = x[0] * w0.get(0, j) + x[1] * w0.get(1, j) + b0.get(0, j);
        expected += pre.max(0.0) * w1.get(j, 0);
    }
    let out = mlp_forward(&p, &cfg, &x).unwrap().output;
    assert!((out[0] - expected).abs() < 1e-14, "{} vs {expected}", out[0]);
}

#[test]
fn two_layer_gradients_match_finite_differences() {
    let cfg = MlpConfig::new(3, &[5], 2, Activation::Tanh);
    let p = init_params(&cfg, 4).unwrap();
    let x = [0.3, -0.7, 1.1];
    let seed = [0.6, -1.4];
    let value = |q: &ParameterSet| {
        let o = mlp_forward(q, &cfg, &x).unwrap().output;
        o[0] * seed[0] + o[1] * seed[1]
    };
    let grads = mlp_forward(&p, &cfg, &x).unwrap().backward(&seed);
    let h = 1e-5;
    for (name, g) in grads.iter() {
        for i in 0..g.len() {
            let mut up = p.clone();
            up.get_mut(name).unwrap().data_mut()[i] += h;
            let mut down = p.clone();
            down.get_mut(name).unwrap().data_mut()[i] -= h;
            let numeric = (value(&up) - value(&down)) / (2.0 * h);
            let a = g.data()[i];
            let err = (a - numeric).abs();
            assert!(err < 1e-6 || err / a.abs().max(numeric.abs()) < 1e-4, "{name}[{i}]: {a} vs {numeric}");
        }
    }
}

#[test]
fn adam_first_step_by_hand() {
    let mut p = ParameterSet::new();
    p.insert("x", Tensor::scalar(1.0)).unwrap();
    let mut g = ParameterSet::new();
    g.insert("x", Tensor::scalar(1.0)).unwrap();
    let mut opt = AdamState::new(&p, AdamHyper::default());
    opt.step(&mut p, &g).unwrap();
    let delta = p.get("x").unwrap().item() - 1.0;
    assert!((delta + 2.99999997e-4).abs() < 1e-12, "{delta}");
}

#[test]
fn adam_on_a_quadratic_approaches_the_minimum_monotonically() {
    // f(x) = (x − 3)², started far away: after the first few steps the
    // distance to the minimum shrinks every step until the step size
    // dominates.
    let mut p = ParameterSet::new();
    p.insert("x", Tensor::scalar(-2.0)).unwrap();
    let mut opt = AdamState::new(&p, AdamHyper::with_lr(0.05));
    let mut dist = Vec::new();
    for _ in 0..60 {
        let x = p.get("x").unwrap().item();
        let mut g = ParameterSet::new();
        g.insert("x", Tensor::scalar(2.0 * (x - 3.0))).unwrap();
        opt.step(&mut p, &g).unwrap();
        dist.push((p.get("x").unwrap().item() - 3.0).abs());
    }
    for w in dist[5..].windows(2) {
        assert!(w[1] < w[0], "{dist:?}");
    }
    assert!(dist[59] < 2.5);
}

#[test]
fn xavier_weights_are_centred() {
    let cfg = MlpConfig::new(64, &[], 64, Activation::Relu);
    let p = init_params(&cfg, 8).unwrap();
    let w = &p.get("l0.w").unwrap().data()[..1000];
    let bound = (6.0f64 / 128.0).sqrt();
    assert!(w.iter().all(|v| v.abs() <= bound));
    let mean = w.iter().sum::<f64>() / 1000.0;
    let se = bound / 3.0f64.sqrt() / 1000.0f64.sqrt();
    assert!(mean.abs() < 3.0 * se, "{mean} vs se {se}");
    assert!(p.get("l0.b").unwrap().data().iter().all(|&b| b == 0.0));
}
