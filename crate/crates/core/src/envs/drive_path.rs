use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::Result;
use crate::numgrad::Prng;
use crate::policykit::{ActionBounds, ContinuousBinding, HybridAction, HybridActionSpec};

use super::{check_action, clamp_continuous, rollout, EnvSpec, Environment, StepResult, TRUNCATED};

pub const DT: f64 = 0.1;
pub const ACCEL_MAX: f64 = 2.0;
pub const SPEED_MAX: f64 = 5.0;
pub const YAW_RATE_MAX: f64 = 1.0;
pub const BRAKE_FACTOR: f64 = 0.6;
pub const OFF_PATH_LIMIT: f64 = 1.0;
const CROSS_TRACK_WEIGHT: f64 = 0.5;
/// Path length before a corner (and after it) that counts as the corner.
const CORNER_ZONE: f64 = 6.0;
const LOOK: f64 = 10.0;
/// Arc distances of the path points reported in the car frame.
const AHEAD: [f64; 3] = [2.5, 5.0, 10.0];

/// Two right-angle corners: left at arc 30, right at arc 50.
const WAYPOINTS: [(f64, f64); 4] = [
    (0.0, 0.0),
    (30.0, 0.0),
    (30.0, 20.0),
    (330.0, 20.0),
];

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

#[derive(Clone, Debug)]
struct Path {
    /// Arc length at the start of each segment.
    start: Vec<f64>,
    length: Vec<f64>,
    heading: Vec<f64>,
}

impl Path {
    fn new() -> Self {
        let mut start = Vec::new();
        let mut length = Vec::new();
        let mut heading = Vec::new();
        let mut acc = 0.0;
        for w in WAYPOINTS.windows(2) {
            let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            let len = dx.hypot(dy);
            start.push(acc);
            length.push(len);
            heading.push(dy.atan2(dx));
            acc += len;
        }
        Self { start, length, heading }
    }

    fn segments(&self) -> usize {
        self.length.len()
    }

    fn total(&self) -> f64 {
        self.start[self.segments() - 1] + self.length[self.segments() - 1]
    }

    /// `(t, signed offset, distance)` of a point against segment `i`;
    /// the offset is positive to the left.
    fn project(&self, i: usize, x: f64, y: f64) -> (f64, f64, f64) {
        let (ox, oy) = WAYPOINTS[i];
        let (c, s) = (self.heading[i].cos(), self.heading[i].sin());
        let (dx, dy) = (x - ox, y - oy);
        let along = dx * c + dy * s;
        let t = along.clamp(0.0, self.length[i]);
        let (px, py) = (ox + t * c, oy + t * s);
        let offset = -dx * s + dy * c;
        (t, offset, (x - px).hypot(y - py))
    }

    fn point_at(&self, arc: f64) -> (f64, f64) {
        let arc = arc.clamp(0.0, self.total());
        let i = (0..self.segments()).rev().find(|&i| self.start[i] <= arc).unwrap_or(0);
        let t = arc - self.start[i];
        let (ox, oy) = WAYPOINTS[i];
        (ox + t * self.heading[i].cos(), oy + t * self.heading[i].sin())
    }
}

/// Where the car sits relative to the path.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Track {
    segment: usize,
    arc: f64,
    offset: f64,
    distance: f64,
}

/// Kinematic car on a polyline with two right-angle corners followed by a
/// straight longer than an episode can cover, so speed through the corners
/// decides the return.
///
/// Actions: continuous `[accel, steer] ∈ [−1, 1]²` and a binary hand brake.
/// Each step the brake (if on) scales speed by 0.6 and doubles the yaw rate,
/// then acceleration is integrated and speed clamped to `[0, 5]`, then the
/// heading and the position advance. Reward is the arc-length progress minus
/// half the distance to the path; leaving the path by more than 1 ends the
/// episode.
///
/// The observation holds speed, signed offset, the heading error against the
/// current and the next segment, the distance to the next corner, and three
/// path points ahead expressed in the car frame.
#[derive(Clone, Debug)]
pub struct DrivePath {
    spec: EnvSpec,
    path: Path,
    x: f64,
    y: f64,
    heading: f64,
    speed: f64,
    track: Track,
    steps: usize,
}

impl Default for DrivePath {
    fn default() -> Self {
        Self::new()
    }
}

impl DrivePath {
    pub fn new() -> Self {
        let path = Path::new();
        let mut env = Self {
            spec: EnvSpec {
                name: "drive_path".into(),
                observation_dim: 7 + 2 * AHEAD.len(),
                action: HybridActionSpec {
                    discrete: vec![2],
                    continuous: vec![2],
                    binding: ContinuousBinding::Independent,
                },
                bounds: vec![ActionBounds::symmetric(2)],
                max_episode_steps: 500,
                reward_range: (
                    -SPEED_MAX * DT - CROSS_TRACK_WEIGHT * (OFF_PATH_LIMIT + SPEED_MAX * DT),
                    SPEED_MAX * DT,
                ),
                observation_range: (-1.0, 1.0),
            },
            path,
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            speed: 0.0,
            track: Track {
                segment: 0,
                arc: 0.0,
                offset: 0.0,
                distance: 0.0,
            },
            steps: 0,
        };
        env.track = env.locate(0);
        env
    }

    /// `(x, y, heading, speed)`.
    pub fn state(&self) -> (f64, f64, f64, f64) {
        (self.x, self.y, self.heading, self.speed)
    }

    pub fn set_state(&mut self, x: f64, y: f64, heading: f64, speed: f64) {
        self.x = x;
        self.y = y;
        self.heading = heading;
        self.speed = speed;
        self.track = self.locate(0);
        for _ in 0..self.path.segments() {
            self.track = self.locate(self.track.segment);
        }
    }

    /// Projects onto the current segment and the next one, keeping the closer.
    fn locate(&self, from: usize) -> Track {
        let at = |i: usize| {
            let (t, offset, distance) = self.path.project(i, self.x, self.y);
            Track {
                segment: i,
                arc: self.path.start[i] + t,
                offset,
                distance,
            }
        };
        let here = at(from);
        if from + 1 < self.path.segments() {
            let next = at(from + 1);
            if next.distance < here.distance {
                return next;
            }
        }
        here
    }

    fn corner_arcs(&self) -> impl Iterator<Item = f64> + '_ {
        self.path.start[1..].iter().copied()
    }

    /// Path length to the next corner ahead, if any.
    fn to_next_corner(&self) -> Option<f64> {
        self.corner_arcs().map(|c| c - self.track.arc).find(|&d| d >= 0.0)
    }

    fn in_corner_zone(&self) -> bool {
        self.corner_arcs().any(|c| (self.track.arc - c).abs() <= CORNER_ZONE)
    }

    fn observe(&self) -> Vec<f64> {
        let seg = self.track.segment;
        let cur = wrap(self.heading - self.path.heading[seg]);
        let next = wrap(self.heading - self.path.heading[(seg + 1).min(self.path.segments() - 1)]);
        let corner = self.to_next_corner().map_or(1.0, |d| d.min(LOOK) / LOOK);
        let (c, s) = (self.heading.cos(), self.heading.sin());
        let mut obs = vec![
            self.speed / SPEED_MAX,
            self.track.offset.clamp(-1.5, 1.5) / 1.5,
            cur.sin(),
            cur.cos(),
            next.sin(),
            next.cos(),
            corner,
        ];
        for ahead in AHEAD {
            let (px, py) = self.path.point_at(self.track.arc + ahead);
            let (dx, dy) = (px - self.x, py - self.y);
            obs.push(((dx * c + dy * s) / ahead).clamp(-1.0, 1.0));
            obs.push(((dy * c - dx * s) / ahead).clamp(-1.0, 1.0));
        }
        obs
    }
}

impl Environment for DrivePath {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut Prng) -> Vec<f64> {
        self.set_state(0.0, 0.0, 0.0, 0.0);
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &HybridAction) -> Result<StepResult> {
        check_action(&self.spec, action)?;
        let (cont, clamped) = clamp_continuous(&self.spec, action);
        let (accel, steer) = (cont[0][0], cont[0][1]);
        let brake = action.discrete[0] == 1;
        let mut yaw = steer * YAW_RATE_MAX;
        if brake {
            self.speed *= BRAKE_FACTOR;
            yaw *= 2.0;
        }
        self.speed = (self.speed + accel * ACCEL_MAX * DT).clamp(0.0, SPEED_MAX);
        self.heading = wrap(self.heading + yaw * DT);
        self.x += self.speed * self.heading.cos() * DT;
        self.y += self.speed * self.heading.sin() * DT;
        self.steps += 1;

        let before = self.track.arc;
        self.track = self.locate(self.track.segment);
        let reward = self.track.arc - before - CROSS_TRACK_WEIGHT * self.track.distance;
        let off_path = self.track.distance > OFF_PATH_LIMIT;
        let mut info = BTreeMap::new();
        if clamped {
            info.insert("clamped".into(), 1.0);
        }
        if brake {
            info.insert("brake".into(), 1.0);
            if self.in_corner_zone() {
                info.insert("brake_on_corner".into(), 1.0);
            }
        }
        if off_path {
            info.insert("off_path".into(), 1.0);
        }
        let truncated = !off_path && self.steps >= self.spec.max_episode_steps;
        if truncated {
            info.insert(TRUNCATED.into(), 1.0);
        }
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done: off_path || truncated,
            info,
        })
    }
}

/// Pure-pursuit controller with a corner speed schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveScript {
    /// Arc length ahead of the projection that the car steers toward.
    pub lookahead: f64,
    /// Yaw-rate gain on the heading error.
    pub gain: f64,
    /// Speed held while within `slow_zone` of a corner.
    pub corner_speed: f64,
    pub slow_zone: f64,
    /// Use the hand brake when above `corner_speed` inside `slow_zone`.
    pub use_brake: bool,
}

impl DriveScript {
    pub fn with_brake() -> Self {
        Self {
            lookahead: 4.0,
            gain: 8.0,
            corner_speed: 3.5,
            slow_zone: 2.0,
            use_brake: true,
        }
    }

    pub fn without_brake() -> Self {
        Self {
            lookahead: 4.0,
            gain: 8.0,
            corner_speed: 0.5,
            slow_zone: 4.0,
            use_brake: false,
        }
    }

    pub fn act(&self, env: &DrivePath) -> HybridAction {
        let (tx, ty) = env.path.point_at(env.track.arc + self.lookahead);
        let err = wrap((ty - env.y).atan2(tx - env.x) - env.heading);
        let near = env.to_next_corner().is_some_and(|d| d < self.slow_zone)
            || env.corner_arcs().any(|c| env.track.arc >= c && env.track.arc - c < 1.0);
        let target = if near { self.corner_speed } else { SPEED_MAX };
        let brake = self.use_brake && near && env.speed > target + 0.5;
        let authority = if brake { 2.0 } else { 1.0 };
        let steer = (self.gain * err / (YAW_RATE_MAX * authority)).clamp(-1.0, 1.0);
        let speed_after = if brake { env.speed * BRAKE_FACTOR } else { env.speed };
        let accel = ((target - speed_after) / (ACCEL_MAX * DT)).clamp(-1.0, 1.0);
        HybridAction {
            discrete: vec![brake as usize],
            continuous: vec![vec![accel, steer]],
        }
    }
}

/// Return of a scripted controller over one episode.
pub fn scripted_drive(script: DriveScript) -> Result<f64> {
    let mut env = DrivePath::new();
    let mut rng = Prng::seed(0);
    let mut shadow = env.clone();
    let total = rollout(&mut env, &mut rng, |_| {
        let a = script.act(&shadow);
        shadow.step(&a)?;
        Ok(a)
    })?;
    Ok(total)
}
