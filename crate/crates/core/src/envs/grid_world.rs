use std::collections::{BTreeMap, VecDeque};

use crate::error::Result;
use crate::numgrad::Prng;
use crate::policykit::{ContinuousBinding, HybridAction, HybridActionSpec};

use super::{check_action, EnvSpec, Environment, StepResult, TRUNCATED};

const SIZE: usize = 5;
const GOAL: (usize, usize) = (4, 4);
const GOAL_BONUS: f64 = 10.0;

/// Moves in action order: right, left, up, down.
const MOVES: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// 5×5 grid from `(0, 0)` to `(4, 4)`; `−1` per step, `+10` on reaching the
/// goal, walls block movement. Observation is the one-hot cell index.
#[derive(Clone, Debug)]
pub struct GridWorld {
    spec: EnvSpec,
    pos: (usize, usize),
    steps: usize,
}

impl Default for GridWorld {
    fn default() -> Self {
        Self::new()
    }
}

impl GridWorld {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "grid_world".into(),
                observation_dim: SIZE * SIZE,
                action: HybridActionSpec {
                    discrete: vec![MOVES.len()],
                    continuous: vec![],
                    binding: ContinuousBinding::Independent,
                },
                bounds: vec![],
                max_episode_steps: 50,
                reward_range: (-1.0, GOAL_BONUS - 1.0),
                observation_range: (0.0, 1.0),
            },
            pos: (0, 0),
            steps: 0,
        }
    }

    pub fn position(&self) -> (usize, usize) {
        self.pos
    }

    fn observe(&self) -> Vec<f64> {
        let mut obs = vec![0.0; SIZE * SIZE];
        obs[self.pos.1 * SIZE + self.pos.0] = 1.0;
        obs
    }

    fn moved(pos: (usize, usize), action: usize) -> (usize, usize) {
        let (dx, dy) = MOVES[action];
        let clamp = |v: usize, d: isize| (v as isize + d).clamp(0, SIZE as isize - 1) as usize;
        (clamp(pos.0, dx), clamp(pos.1, dy))
    }

    /// Breadth-first shortest path length from the start to the goal.
    pub fn shortest_path(&self) -> usize {
        let mut dist = [[usize::MAX; SIZE]; SIZE];
        dist[0][0] = 0;
        let mut queue = VecDeque::from([(0usize, 0usize)]);
        while let Some(p) = queue.pop_front() {
            for a in 0..MOVES.len() {
                let q = Self::moved(p, a);
                if dist[q.0][q.1] == usize::MAX {
                    dist[q.0][q.1] = dist[p.0][p.1] + 1;
                    queue.push_back(q);
                }
            }
        }
        dist[GOAL.0][GOAL.1]
    }

    pub fn optimal_return(&self) -> f64 {
        GOAL_BONUS - self.shortest_path() as f64
    }

    /// Greedy shortest-path action from the current cell.
    pub fn optimal_action(obs: &[f64]) -> usize {
        let cell = obs.iter().position(|&v| v == 1.0).unwrap_or(0);
        if cell % SIZE < GOAL.0 {
            0
        } else {
            2
        }
    }
}

impl Environment for GridWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut Prng) -> Vec<f64> {
        self.pos = (0, 0);
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &HybridAction) -> Result<StepResult> {
        check_action(&self.spec, action)?;
        self.pos = Self::moved(self.pos, action.discrete[0]);
        self.steps += 1;
        let at_goal = self.pos == GOAL;
        let reward = if at_goal { GOAL_BONUS - 1.0 } else { -1.0 };
        let mut info = BTreeMap::new();
        let truncated = !at_goal && self.steps >= self.spec.max_episode_steps;
        if truncated {
            info.insert(TRUNCATED.into(), 1.0);
        }
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done: at_goal || truncated,
            info,
        })
    }
}
