use std::collections::BTreeMap;

use crate::error::Result;
use crate::numgrad::Prng;
use crate::policykit::{ActionBounds, ContinuousBinding, HybridAction, HybridActionSpec};

use super::{check_action, clamp_continuous, rollout, EnvSpec, Environment, StepResult, TRUNCATED};

pub const RUN: usize = 0;
pub const HOP: usize = 1;
pub const LEAP: usize = 2;

const GAPS: [(f64, f64); 2] = [(0.3, 0.38), (0.62, 0.72)];

/// Displacement of each move for parameter `u ∈ [0, 1]`.
fn displacement(action: usize, u: f64) -> f64 {
    match action {
        RUN => 0.05 * u,
        HOP => 0.08 + 0.06 * u,
        _ => 0.12 + 0.10 * u,
    }
}

/// Whether `action` may fly over gap `gap`: a hop clears the first gap,
/// a leap clears either.
fn clears(action: usize, gap: usize) -> bool {
    match action {
        RUN => false,
        HOP => gap == 0,
        _ => true,
    }
}

/// A line of platforms on `[0, 1]` with two gaps. Each step moves right by
/// the chosen move's displacement; touching down in a gap, or passing over a
/// gap the move cannot clear, ends the episode with zero reward for the step.
/// Reward is the distance gained, so a finished track returns 1.
#[derive(Clone, Debug)]
pub struct PlatformLite {
    spec: EnvSpec,
    pos: f64,
    steps: usize,
}

impl Default for PlatformLite {
    fn default() -> Self {
        Self::new()
    }
}

impl PlatformLite {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "platform_lite".into(),
                observation_dim: 5,
                action: HybridActionSpec {
                    discrete: vec![3],
                    continuous: vec![1, 1, 1],
                    binding: ContinuousBinding::PerDiscreteAction,
                },
                bounds: vec![ActionBounds::new(vec![0.0], vec![1.0]); 3],
                max_episode_steps: 200,
                reward_range: (0.0, displacement(LEAP, 1.0)),
                observation_range: (0.0, 1.0),
            },
            pos: 0.0,
            steps: 0,
        }
    }

    pub fn position(&self) -> f64 {
        self.pos
    }

    pub fn set_position(&mut self, p: f64) {
        self.pos = p;
    }

    fn next_gap(p: f64) -> Option<usize> {
        GAPS.iter().position(|&(lo, _)| p < lo)
    }

    /// `[p, distance to next gap, one-hot(next gap is first, second, none)]`.
    pub fn observe_at(p: f64) -> Vec<f64> {
        let next = Self::next_gap(p);
        let dist = next.map_or(1.0 - p, |g| GAPS[g].0 - p);
        let mut obs = vec![p, dist, 0.0, 0.0, 0.0];
        obs[2 + next.unwrap_or(2)] = 1.0;
        obs
    }

    fn falls(from: f64, to: f64, action: usize) -> bool {
        GAPS.iter().enumerate().any(|(g, &(lo, hi))| {
            let lands_in = (lo..=hi).contains(&to);
            let passes_over = from < lo && to > hi && !clears(action, g);
            lands_in || passes_over
        })
    }
}

impl Environment for PlatformLite {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut Prng) -> Vec<f64> {
        self.pos = 0.0;
        self.steps = 0;
        Self::observe_at(self.pos)
    }

    fn step(&mut self, action: &HybridAction) -> Result<StepResult> {
        check_action(&self.spec, action)?;
        let (cont, clamped) = clamp_continuous(&self.spec, action);
        let a = action.discrete[0];
        let target = self.pos + displacement(a, cont[a][0]);
        self.steps += 1;
        let mut info = BTreeMap::new();
        if clamped {
            info.insert("clamped".into(), 1.0);
        }
        let (reward, done) = if Self::falls(self.pos, target, a) {
            info.insert("fell".into(), 1.0);
            (0.0, true)
        } else {
            let next = target.min(1.0);
            let gained = next - self.pos;
            self.pos = next;
            (gained, next >= 1.0)
        };
        if !done && self.steps >= self.spec.max_episode_steps {
            info.insert(TRUNCATED.into(), 1.0);
        }
        Ok(StepResult {
            observation: Self::observe_at(self.pos),
            reward,
            done: done || info.contains_key(TRUNCATED),
            info,
        })
    }
}

/// Scripted action: run at full length while that stays clear of the next
/// gap, otherwise hop or leap with the shortest parameter that lands beyond
/// it (plus a small margin).
pub fn platform_script(obs: &[f64]) -> HybridAction {
    let p = obs[0];
    let gap = PlatformLite::next_gap(p);
    let (a, u) = match gap {
        Some(g) if p + displacement(RUN, 1.0) >= GAPS[g].0 => {
            let a = if g == 0 { HOP } else { LEAP };
            let needed = GAPS[g].1 - p + 1e-3;
            let base = displacement(a, 0.0);
            let span = displacement(a, 1.0) - base;
            (a, ((needed - base) / span).clamp(0.0, 1.0))
        }
        _ => (RUN, 1.0),
    };
    let mut continuous = vec![vec![0.0]; 3];
    continuous[a][0] = u;
    HybridAction {
        discrete: vec![a],
        continuous,
    }
}

/// Return of [`platform_script`] from the start.
pub fn scripted_platform() -> Result<f64> {
    rollout(&mut PlatformLite::new(), &mut Prng::seed(0), |o| Ok(platform_script(o)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(a: usize, u: f64) -> HybridAction {
        let mut continuous = vec![vec![0.5]; 3];
        continuous[a][0] = u;
        HybridAction {
            discrete: vec![a],
            continuous,
        }
    }

    #[test]
    fn reset_observation() {
        let mut env = PlatformLite::new();
        assert_eq!(env.reset(&mut Prng::seed(0)), vec![0.0, 0.3, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn full_run_from_start() {
        let mut env = PlatformLite::new();
        env.reset(&mut Prng::seed(0));
        let r = env.step(&act(RUN, 1.0)).unwrap();
        assert!((env.position() - 0.05).abs() < 1e-15);
        assert!((r.reward - 0.05).abs() < 1e-15);
        assert!(!r.done);
    }

    #[test]
    fn short_hop_into_first_gap() {
        let mut env = PlatformLite::new();
        env.reset(&mut Prng::seed(0));
        env.set_position(0.28);
        let r = env.step(&act(HOP, 0.0)).unwrap();
        assert!(r.done && r.terminal());
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn hop_cannot_clear_second_gap() {
        let mut env = PlatformLite::new();
        env.reset(&mut Prng::seed(0));
        env.set_position(0.6);
        assert!(env.step(&act(HOP, 1.0)).unwrap().done);
        env.set_position(0.6);
        let r = env.step(&act(LEAP, 1.0)).unwrap();
        assert!(!r.done && (env.position() - 0.82).abs() < 1e-12);
    }

    #[test]
    fn clamped_parameter_is_flagged() {
        let mut env = PlatformLite::new();
        env.reset(&mut Prng::seed(0));
        let r = env.step(&act(RUN, 2.0)).unwrap();
        assert_eq!(r.info.get("clamped"), Some(&1.0));
        assert!((env.position() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn scripted_policy_finishes_the_track() {
        let ret = scripted_platform().unwrap();
        assert!((ret - 1.0).abs() < 1e-9, "{ret}");
    }
}
