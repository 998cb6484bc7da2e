"""Smoke test for the `hsac` extension module.

Build first with `maturin develop -m crates/py/Cargo.toml`.
"""

import math
import os
import tempfile

import hsac


def main():
    env = hsac.Env("grid_world")
    obs = env.reset(seed=0)
    assert len(obs) == env.observation_dim
    obs, reward, done, info = env.step([1], [])
    assert isinstance(reward, float) and isinstance(info, dict)

    action, log_prob = hsac.gaussian_sample([0.0], [0.0], [0.0])
    assert action == [0.0]
    assert abs(log_prob + 0.5 * math.log(2 * math.pi)) < 1e-12

    out, log_det = hsac.radial_flow([0.0, 0.0], 0.1, 0.2, [1.0, -0.5])
    assert len(out) == 2 and math.isfinite(log_det)

    agent = hsac.Agent(
        "grid_world",
        "total_steps = 300\nwarmup_steps = 100\neval_interval = 150\n"
        "eval_episodes = 1\nbatch_size = 16\nactor_hidden = [8]\ncritic_hidden = [8]\n",
        seed=1,
    )
    rows = agent.train()
    assert len(rows) == 2 and "episode_return_mean" in rows[0]
    discrete, continuous = agent.act(env.reset(seed=3))
    assert len(discrete) == 1

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "agent.hsac")
        agent.save(path)
        again = hsac.Agent.load(path)
        assert again.act(env.reset(seed=3)) == (discrete, continuous)
        assert again.evaluate(2, 0) == agent.evaluate(2, 0)
    try:
        hsac.Agent.load("/nonexistent/agent.hsac")
        raise AssertionError("missing checkpoint loaded")
    except FileNotFoundError:
        pass

    masses = hsac.divlab_fit("forward_kl", 1.0, flows=0, steps=20, batch_size=16, samples=200)
    assert len(masses) == 2 and all(0.0 <= m <= 1.0 for m in masses)

    passed, total = hsac.gradcheck(6)
    assert passed == total == 6

    smooth = hsac.savitzky_golay([float(i) for i in range(10)])
    assert all(abs(a - i) < 1e-12 for i, a in enumerate(smooth))

    print("smoke test ok")


if __name__ == "__main__":
    main()
