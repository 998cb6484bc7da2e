use std::collections::BTreeMap;

use crate::error::Result;
use crate::numgrad::Prng;
use crate::policykit::{ActionBounds, ContinuousBinding, HybridAction, HybridActionSpec};

use super::{check_action, clamp_continuous, EnvSpec, Environment, StepResult, TRUNCATED};

const DT: f64 = 0.1;
const POS_LIMIT: f64 = 2.0;
const VEL_LIMIT: f64 = 2.0;

/// Planar point mass pushed toward the origin. Acceleration in `[−1, 1]²`,
/// position and velocity clamped to `[−2, 2]`, reward `−‖pos‖`. Starts are
/// drawn uniformly from `[−1, 1]²` at rest.
#[derive(Clone, Debug)]
pub struct PointMass {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    steps: usize,
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl PointMass {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "point_mass".into(),
                observation_dim: 4,
                action: HybridActionSpec {
                    discrete: vec![],
                    continuous: vec![2],
                    binding: ContinuousBinding::Independent,
                },
                bounds: vec![ActionBounds::symmetric(2)],
                max_episode_steps: 100,
                reward_range: (-(2.0 * POS_LIMIT * POS_LIMIT).sqrt(), 0.0),
                observation_range: (-1.0, 1.0),
            },
            pos: [0.0; 2],
            vel: [0.0; 2],
            steps: 0,
        }
    }

    pub fn state(&self) -> ([f64; 2], [f64; 2]) {
        (self.pos, self.vel)
    }

    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) {
        self.pos = pos;
        self.vel = vel;
    }

    fn observe(&self) -> Vec<f64> {
        vec![
            self.pos[0] / POS_LIMIT,
            self.pos[1] / POS_LIMIT,
            self.vel[0] / VEL_LIMIT,
            self.vel[1] / VEL_LIMIT,
        ]
    }
}

impl Environment for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Prng) -> Vec<f64> {
        self.pos = [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
        self.vel = [0.0; 2];
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &HybridAction) -> Result<StepResult> {
        check_action(&self.spec, action)?;
        let (cont, clamped) = clamp_continuous(&self.spec, action);
        for i in 0..2 {
            self.vel[i] = (self.vel[i] + cont[0][i] * DT).clamp(-VEL_LIMIT, VEL_LIMIT);
            self.pos[i] += self.vel[i] * DT;
            if self.pos[i].abs() > POS_LIMIT {
                self.pos[i] = self.pos[i].clamp(-POS_LIMIT, POS_LIMIT);
                self.vel[i] = 0.0;
            }
        }
        self.steps += 1;
        let reward = -(self.pos[0].powi(2) + self.pos[1].powi(2)).sqrt();
        let mut info = BTreeMap::new();
        if clamped {
            info.insert("clamped".into(), 1.0);
        }
        let truncated = self.steps >= self.spec.max_episode_steps;
        if truncated {
            info.insert(TRUNCATED.into(), 1.0);
        }
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done: truncated,
            info,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resting_at_goal_stays_put() {
        let mut env = PointMass::new();
        env.reset(&mut Prng::seed(1));
        env.set_state([0.0; 2], [0.0; 2]);
        let r = env
            .step(&HybridAction {
                discrete: vec![],
                continuous: vec![vec![0.0, 0.0]],
            })
            .unwrap();
        assert_eq!(r.reward, 0.0);
        assert_eq!(env.state(), ([0.0; 2], [0.0; 2]));
    }

    #[test]
    fn out_of_range_action_is_clamped_and_flagged() {
        let mut env = PointMass::new();
        env.reset(&mut Prng::seed(1));
        env.set_state([0.0; 2], [0.0; 2]);
        let r = env
            .step(&HybridAction {
                discrete: vec![],
                continuous: vec![vec![3.0, 0.0]],
            })
            .unwrap();
        assert_eq!(r.info.get("clamped"), Some(&1.0));
        assert!((env.state().1[0] - 0.1).abs() < 1e-15);
    }
}
