//! Toy point-mass manipulation tasks on the `[-1, 1]²` table.
//!
//! All three tasks share a double-integrator agent. `push_box` adds a disc
//! that is shoved out of the agent's contact radius, `drawer_pull` adds a
//! handle on a one-way prismatic joint that follows the agent while grasped.
//! Ground-truth rewards are dense and hidden from the learner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionVec, StateVec, TrajectorySegment};
use crate::sketch::{CameraModel, Image, Rgb};

pub const WORKSPACE_HALF_EXTENT: f64 = 1.0;
pub const SUCCESS_RADIUS: f64 = 0.05;
pub const DRAWER_SUCCESS_EXTENSION: f64 = 0.8;

const POINT_REACH_GOAL: [f64; 2] = [0.5, 0.5];
const PUSH_BOX_OBJECT_START: [f64; 2] = [-0.2, -0.2];
const PUSH_BOX_GOAL: [f64; 2] = [0.4, 0.4];
const DRAWER_CLOSED: [f64; 2] = [0.0, 0.6];
const DRAWER_RANGE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    PointReach,
    PushBox,
    DrawerPull,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::PointReach => "point_reach",
            EnvKind::PushBox => "push_box",
            EnvKind::DrawerPull => "drawer_pull",
        }
    }

    pub fn default_task_text(self) -> &'static str {
        match self {
            EnvKind::PointReach => "Move the red agent to the green goal marker as directly as possible.",
            EnvKind::PushBox => "Push the blue box onto the green goal marker.",
            EnvKind::DrawerPull => "Grab the brown drawer handle and pull the drawer fully open.",
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "point_reach" => Ok(EnvKind::PointReach),
            "push_box" => Ok(EnvKind::PushBox),
            "drawer_pull" => Ok(EnvKind::DrawerPull),
            other => Err(Error::Config(format!("unknown environment {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub gamma: f64,
    /// Integration step in seconds.
    pub dt: f64,
    pub accel_gain: f64,
    /// Per-axis speed limit.
    pub max_speed: f64,
    pub contact_radius: f64,
    pub grasp_radius: f64,
    /// When false, reaching the success region no longer ends the episode;
    /// only the horizon does.
    pub terminate_on_success: bool,
}

impl EnvSpec {
    pub fn new(kind: EnvKind) -> Self {
        let state_dim = match kind {
            EnvKind::PointReach => 6,
            EnvKind::PushBox | EnvKind::DrawerPull => 8,
        };
        Self {
            kind,
            state_dim,
            action_dim: 2,
            horizon: 100,
            gamma: 0.99,
            dt: 0.05,
            accel_gain: 4.0,
            max_speed: 1.0,
            contact_radius: 0.1,
            grasp_radius: 0.1,
            terminate_on_success: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = Self::new(self.kind);
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if self.state_dim != expected.state_dim || self.action_dim != expected.action_dim {
            return Err(Error::Config(format!(
                "{} has state_dim {} and action_dim {}",
                self.kind.name(),
                expected.state_dim,
                expected.action_dim
            )));
        }
        if !(self.dt > 0.0 && self.accel_gain > 0.0 && self.max_speed > 0.0) {
            return Err(Error::Config("dt, accel_gain and max_speed must be positive".into()));
        }
        if !(self.contact_radius > 0.0 && self.grasp_radius > 0.0) {
            return Err(Error::Config("contact and grasp radii must be positive".into()));
        }
        Ok(())
    }

    /// `r_max` such that every per-step reward lies in `[-r_max, 1 + r_max]`.
    pub fn reward_bound(&self) -> f64 {
        let diag = 2.0 * 2f64.sqrt();
        match self.kind {
            EnvKind::PointReach => diag,
            EnvKind::PushBox => 1.1 * diag,
            EnvKind::DrawerPull => 1.0,
        }
    }

    pub fn goal(&self) -> [f64; 2] {
        match self.kind {
            EnvKind::PointReach => POINT_REACH_GOAL,
            EnvKind::PushBox => PUSH_BOX_GOAL,
            EnvKind::DrawerPull => [DRAWER_CLOSED[0], DRAWER_CLOSED[1] - DRAWER_RANGE],
        }
    }

    fn object_start(&self) -> [f64; 2] {
        match self.kind {
            EnvKind::PointReach => [0.0, 0.0],
            EnvKind::PushBox => PUSH_BOX_OBJECT_START,
            EnvKind::DrawerPull => DRAWER_CLOSED,
        }
    }
}

/// Natural-language goal description used in labeler prompts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskSpec {
    pub text: String,
}

impl TaskSpec {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Config("task text must not be empty".into()));
        }
        Ok(Self { text })
    }

    pub fn for_env(kind: EnvKind) -> Self {
        Self {
            text: kind.default_task_text().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub agent_pos: [f64; 2],
    pub agent_vel: [f64; 2],
    /// Box centre for `push_box`, handle for `drawer_pull`, unused otherwise.
    pub object_pos: [f64; 2],
    pub goal_pos: [f64; 2],
    pub step_count: usize,
}

impl EnvState {
    /// Flat observation vector.
    pub fn observation(&self, spec: &EnvSpec) -> StateVec {
        let mut v = vec![
            self.agent_pos[0],
            self.agent_pos[1],
            self.agent_vel[0],
            self.agent_vel[1],
        ];
        if spec.kind != EnvKind::PointReach {
            v.extend_from_slice(&self.object_pos);
        }
        v.extend_from_slice(&self.goal_pos);
        StateVec(v)
    }

    /// Inverse of [`EnvState::observation`]; `step_count` is not observed and
    /// comes back as 0.
    pub fn from_observation(spec: &EnvSpec, obs: &StateVec) -> Result<Self> {
        let v = obs.as_slice();
        if v.len() != spec.state_dim {
            return Err(Error::DimensionMismatch {
                expected: spec.state_dim,
                actual: v.len(),
            });
        }
        let (object_pos, goal_at) = match spec.kind {
            EnvKind::PointReach => (spec.object_start(), 4),
            _ => ([v[4], v[5]], 6),
        };
        Ok(Self {
            agent_pos: [v[0], v[1]],
            agent_vel: [v[2], v[3]],
            object_pos,
            goal_pos: [v[goal_at], v[goal_at + 1]],
            step_count: 0,
        })
    }

    pub fn drawer_extension(&self) -> f64 {
        ((DRAWER_CLOSED[1] - self.object_pos[1]) / DRAWER_RANGE).clamp(0.0, 1.0)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Random start: agent uniform on the table at rest, fixed goal and object.
pub fn env_reset(spec: &EnvSpec, seed: u64) -> EnvState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = WORKSPACE_HALF_EXTENT;
    EnvState {
        agent_pos: [rng.random_range(-h..=h), rng.random_range(-h..=h)],
        agent_vel: [0.0, 0.0],
        object_pos: spec.object_start(),
        goal_pos: spec.goal(),
        step_count: 0,
    }
}

pub fn env_success(spec: &EnvSpec, state: &EnvState) -> bool {
    match spec.kind {
        EnvKind::PointReach => dist(state.agent_pos, state.goal_pos) < SUCCESS_RADIUS,
        EnvKind::PushBox => dist(state.object_pos, state.goal_pos) < SUCCESS_RADIUS,
        EnvKind::DrawerPull => state.drawer_extension() > DRAWER_SUCCESS_EXTENSION,
    }
}

pub fn gt_reward(spec: &EnvSpec, state: &EnvState) -> f64 {
    let bonus = if env_success(spec, state) { 1.0 } else { 0.0 };
    match spec.kind {
        EnvKind::PointReach => -dist(state.agent_pos, state.goal_pos) + bonus,
        EnvKind::PushBox => {
            -dist(state.object_pos, state.goal_pos) - 0.1 * dist(state.agent_pos, state.object_pos) + bonus
        }
        EnvKind::DrawerPull => {
            state.drawer_extension() - 0.1 * dist(state.agent_pos, state.object_pos) + bonus
        }
    }
}

/// Task progress visible in a single final frame: negative final distance
/// for reaching and pushing, joint extension for the drawer.
pub fn terminal_potential(spec: &EnvSpec, state: &EnvState) -> f64 {
    match spec.kind {
        EnvKind::PointReach => -dist(state.agent_pos, state.goal_pos),
        EnvKind::PushBox => -dist(state.object_pos, state.goal_pos),
        EnvKind::DrawerPull => state.drawer_extension(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub gt_reward: f64,
    pub done: bool,
    pub success: bool,
}

/// One integration step. Pure in `(state, action)`.
pub fn env_step(spec: &EnvSpec, state: &EnvState, action: &ActionVec) -> Result<StepOutcome> {
    if action.dim() != spec.action_dim {
        return Err(Error::DimensionMismatch {
            expected: spec.action_dim,
            actual: action.dim(),
        });
    }
    if state.step_count >= spec.horizon {
        return Err(Error::EpisodeFinished {
            step: state.step_count,
            horizon: spec.horizon,
        });
    }
    let h = WORKSPACE_HALF_EXTENT;
    let mut next = state.clone();
    let a = action.as_slice();
    for i in 0..2 {
        let v = (state.agent_vel[i] + a[i] * spec.dt * spec.accel_gain).clamp(-spec.max_speed, spec.max_speed);
        let p = state.agent_pos[i] + v * spec.dt;
        if p > h || p < -h {
            next.agent_pos[i] = p.clamp(-h, h);
            next.agent_vel[i] = 0.0;
        } else {
            next.agent_pos[i] = p;
            next.agent_vel[i] = v;
        }
    }
    match spec.kind {
        EnvKind::PointReach => {}
        EnvKind::PushBox => {
            let d = [
                state.object_pos[0] - next.agent_pos[0],
                state.object_pos[1] - next.agent_pos[1],
            ];
            let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if n < spec.contact_radius {
                let dir = if n > 1e-12 {
                    [d[0] / n, d[1] / n]
                } else {
                    let speed = (next.agent_vel[0].powi(2) + next.agent_vel[1].powi(2)).sqrt();
                    if speed > 1e-12 {
                        [next.agent_vel[0] / speed, next.agent_vel[1] / speed]
                    } else {
                        [1.0, 0.0]
                    }
                };
                for i in 0..2 {
                    next.object_pos[i] = (next.agent_pos[i] + dir[i] * spec.contact_radius).clamp(-h, h);
                }
            }
        }
        EnvKind::DrawerPull => {
            // One-way joint: an engaged agent drags the handle outward (-y).
            if dist(state.agent_pos, state.object_pos) < spec.grasp_radius {
                let dy = next.agent_pos[1] - state.agent_pos[1];
                if dy < 0.0 {
                    let open_y = DRAWER_CLOSED[1] - DRAWER_RANGE;
                    next.object_pos[1] = (state.object_pos[1] + dy).clamp(open_y, DRAWER_CLOSED[1]);
                }
            }
        }
    }
    next.step_count += 1;
    let success = env_success(spec, &next);
    let reward = gt_reward(spec, &next);
    let done = (spec.terminate_on_success && success) || next.step_count >= spec.horizon;
    Ok(StepOutcome {
        state: next,
        gt_reward: reward,
        done,
        success,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackedBody {
    #[default]
    Agent,
    Object,
}

fn tracked_point(spec: &EnvSpec, obs: &StateVec, body: TrackedBody) -> Result<[f64; 3]> {
    let st = EnvState::from_observation(spec, obs)?;
    let p = match body {
        TrackedBody::Agent => st.agent_pos,
        TrackedBody::Object => st.object_pos,
    };
    Ok([p[0], p[1], 0.0])
}

/// Tracked-body position at each step of the segment, on the `z = 0` plane.
pub fn world_points(spec: &EnvSpec, segment: &TrajectorySegment, body: TrackedBody) -> Result<Vec<[f64; 3]>> {
    segment
        .transitions()
        .iter()
        .map(|t| tracked_point(spec, &t.s, body))
        .collect()
}

/// Like [`world_points`] but also includes the segment's final state.
pub fn world_path(spec: &EnvSpec, segment: &TrajectorySegment, body: TrackedBody) -> Result<Vec<[f64; 3]>> {
    segment.states().map(|s| tracked_point(spec, s, body)).collect()
}

pub const BACKGROUND: Rgb = Rgb(24, 24, 32);
pub const FLOOR: Rgb = Rgb(70, 70, 78);
pub const TABLE: Rgb = Rgb(190, 186, 176);
pub const TABLE_GRID: Rgb = Rgb(170, 166, 156);
pub const GOAL: Rgb = Rgb(40, 190, 70);
pub const OBJECT: Rgb = Rgb(40, 90, 220);
pub const HANDLE: Rgb = Rgb(140, 80, 30);
pub const DRAWER: Rgb = Rgb(110, 100, 90);
pub const AGENT: Rgb = Rgb(220, 40, 40);

const AGENT_RADIUS: f64 = 0.05;
const GOAL_RADIUS: f64 = 0.06;
const OBJECT_RADIUS: f64 = 0.07;
const HANDLE_RADIUS: f64 = 0.04;

/// Flat layout render seen through `camera`: table by ground-plane ray
/// casting, bodies as screen-space discs sized by depth.
pub fn render_frame(spec: &EnvSpec, state: &EnvState, camera: &CameraModel) -> Result<Image> {
    let (w, h) = camera.image_size;
    if w < 32 || h < 32 {
        return Err(Error::InvalidArgument(format!("frame size {w}x{h} below 32x32")));
    }
    let mut img = Image::new(w, h, BACKGROUND)?;
    for v in 0..h {
        for u in 0..w {
            if let Some(p) = camera.ground_point(u as f64, v as f64) {
                let on_table = p[0].abs() <= WORKSPACE_HALF_EXTENT && p[1].abs() <= WORKSPACE_HALF_EXTENT;
                let color = if !on_table {
                    FLOOR
                } else if ((p[0] * 4.0).fract().abs() < 0.03) || ((p[1] * 4.0).fract().abs() < 0.03) {
                    TABLE_GRID
                } else {
                    TABLE
                };
                img.put(u as i64, v as i64, color);
            }
        }
    }
    let disc = |img: &mut Image, p: [f64; 2], radius: f64, color: Rgb| {
        if let Some((px, depth)) = camera.project_with_depth([p[0], p[1], 0.0]) {
            let r = (camera.focal_px * radius / depth).max(2.0);
            img.fill_disc(px[0], px[1], r, color);
        }
    };
    match spec.kind {
        EnvKind::PointReach => disc(&mut img, state.goal_pos, GOAL_RADIUS, GOAL),
        EnvKind::PushBox => {
            disc(&mut img, state.goal_pos, GOAL_RADIUS, GOAL);
            disc(&mut img, state.object_pos, OBJECT_RADIUS, OBJECT);
        }
        EnvKind::DrawerPull => {
            disc(&mut img, state.goal_pos, GOAL_RADIUS, GOAL);
            // Drawer body: a row of discs from the closed position to the handle.
            let steps = 12;
            for k in 0..=steps {
                let t = k as f64 / steps as f64;
                let y = DRAWER_CLOSED[1] + 0.15 + (state.object_pos[1] - DRAWER_CLOSED[1]) * t;
                disc(&mut img, [DRAWER_CLOSED[0], y], 0.03, DRAWER);
            }
            disc(&mut img, state.object_pos, HANDLE_RADIUS, HANDLE);
        }
    }
    disc(&mut img, state.agent_pos, AGENT_RADIUS, AGENT);
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(x: f64, y: f64) -> ActionVec {
        ActionVec::new(vec![x, y]).unwrap()
    }

    fn at_rest(spec: &EnvSpec, pos: [f64; 2]) -> EnvState {
        EnvState {
            agent_pos: pos,
            agent_vel: [0.0, 0.0],
            object_pos: spec.object_start(),
            goal_pos: spec.goal(),
            step_count: 0,
        }
    }

    #[test]
    fn reset_is_deterministic_and_fresh() {
        let spec = EnvSpec::new(EnvKind::PushBox);
        assert_eq!(env_reset(&spec, 9), env_reset(&spec, 9));
        assert_ne!(env_reset(&spec, 9), env_reset(&spec, 10));
        assert_eq!(env_reset(&spec, 9).step_count, 0);
    }

    #[test]
    fn reset_positions_are_uniform_over_quadrants() {
        let spec = EnvSpec::new(EnvKind::PointReach);
        let mut counts = [0usize; 4];
        for seed in 0..1000 {
            let p = env_reset(&spec, seed).agent_pos;
            let q = (p[0] >= 0.0) as usize + 2 * (p[1] >= 0.0) as usize;
            counts[q] += 1;
        }
        for c in counts {
            let frac = c as f64 / 1000.0;
            assert!((frac - 0.25).abs() <= 0.05, "quadrant fraction {frac}");
        }
    }

    #[test]
    fn zero_action_at_rest_only_advances_the_clock() {
        let spec = EnvSpec::new(EnvKind::PointReach);
        let s = at_rest(&spec, [-0.3, 0.2]);
        let out = env_step(&spec, &s, &ActionVec::zeros(2)).unwrap();
        assert_eq!(out.state.agent_pos, s.agent_pos);
        assert_eq!(out.state.step_count, 1);
    }

    #[test]
    fn agent_at_goal_succeeds_with_bonus() {
        let spec = EnvSpec::new(EnvKind::PointReach);
        let s = at_rest(&spec, spec.goal());
        let out = env_step(&spec, &s, &ActionVec::zeros(2)).unwrap();
        assert!(out.success && out.done);
        assert!((out.gt_reward - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_push_matches_closed_form_kinematics() {
        let spec = EnvSpec::new(EnvKind::PointReach);
        let mut s = at_rest(&spec, [-0.9, -0.5]);
        // Independent oracle: per-step speed min(k·a·dt·gain, vmax) with the
        // wall at x = 1 stopping the agent.
        let mut x = -0.9f64;
        for k in 1..=60 {
            let out = env_step(&spec, &s, &act(1.0, 0.0)).unwrap();
            s = out.state;
            let v = (k as f64 * spec.dt * spec.accel_gain).min(spec.max_speed);
            x = (x + v * spec.dt).min(1.0);
            assert!((s.agent_pos[0] - x).abs() < 1e-12, "step {k}");
            assert_eq!(s.agent_pos[1], -0.5);
        }
        assert_eq!(s.agent_pos[0], 1.0);
        assert_eq!(s.agent_vel[0], 0.0);
    }

    #[test]
    fn out_of_range_or_wrong_size_actions_error() {
        let spec = EnvSpec::new(EnvKind::PointReach);
        assert!(ActionVec::new(vec![1.2, 0.0]).is_err());
        let s = at_rest(&spec, [0.0, 0.0]);
        assert!(env_step(&spec, &s, &ActionVec::zeros(3)).is_err());
        let mut done = s.clone();
        done.step_count = spec.horizon;
        assert!(matches!(
            env_step(&spec, &done, &ActionVec::zeros(2)),
            Err(Error::EpisodeFinished { .. })
        ));
    }

    #[test]
    fn success_boundary_is_strict() {
        let spec = EnvSpec::new(EnvKind::PointReach);
        let g = spec.goal();
        assert!(env_success(&spec, &at_rest(&spec, g)));
        assert!(!env_success(&spec, &at_rest(&spec, [g[0] + 0.05, g[1]])));
        assert!(env_success(&spec, &at_rest(&spec, [g[0] + 0.0499, g[1]])));
    }

    #[test]
    fn success_predicate_matches_brute_force_reevaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [EnvKind::PointReach, EnvKind::PushBox, EnvKind::DrawerPull] {
            let spec = EnvSpec::new(kind);
            for _ in 0..1000 {
                let mut s = at_rest(&spec, [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
                s.object_pos = [rng.random_range(-1.0..1.0), rng.random_range(0.1..0.6)];
                let oracle = match kind {
                    EnvKind::PointReach => {
                        let d = s.agent_pos.iter().zip(&s.goal_pos).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                        d.sqrt() < 0.05
                    }
                    EnvKind::PushBox => {
                        let d = s.object_pos.iter().zip(&s.goal_pos).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                        d.sqrt() < 0.05
                    }
                    EnvKind::DrawerPull => (0.6 - s.object_pos[1]) / 0.5 > 0.8,
                };
                assert_eq!(env_success(&spec, &s), oracle);
            }
        }
    }

    #[test]
    fn push_box_moves_object_on_contact() {
        let spec = EnvSpec::new(EnvKind::PushBox);
        let obj = spec.object_start();
        let mut s = at_rest(&spec, [obj[0] - 0.2, obj[1]]);
        for _ in 0..20 {
            s = env_step(&spec, &s, &act(1.0, 0.0)).unwrap().state;
        }
        assert!(s.object_pos[0] > obj[0] + 0.1);
        assert!((s.object_pos[1] - obj[1]).abs() < 1e-9);
        let gap = dist(s.agent_pos, s.object_pos);
        assert!(gap >= spec.contact_radius - 1e-9);
    }

    #[test]
    fn drawer_extension_never_decreases_while_pulling() {
        let spec = EnvSpec::new(EnvKind::DrawerPull);
        let mut s = at_rest(&spec, DRAWER_CLOSED);
        let mut last = s.drawer_extension();
        for k in 0..60 {
            let a = if k % 7 == 0 { act(0.3, 1.0) } else { act(0.0, -1.0) };
            s = env_step(&spec, &s, &a).unwrap().state;
            assert!(s.drawer_extension() >= last);
            last = s.drawer_extension();
        }
        assert!(env_success(&spec, &s));
    }

    #[test]
    fn rewards_stay_within_documented_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for kind in [EnvKind::PointReach, EnvKind::PushBox, EnvKind::DrawerPull] {
            let spec = EnvSpec { terminate_on_success: false, ..EnvSpec::new(kind) };
            let bound = spec.reward_bound();
            for ep in 0..20 {
                let mut s = env_reset(&spec, ep);
                for _ in 0..spec.horizon {
                    let a = act(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
                    let out = env_step(&spec, &s, &a).unwrap();
                    assert!(out.gt_reward >= -bound && out.gt_reward <= 1.0 + bound);
                    for p in [out.state.agent_pos, out.state.object_pos] {
                        assert!(p.iter().all(|c| c.abs() <= 1.0));
                    }
                    s = out.state;
                }
            }
        }
    }

    #[test]
    fn observation_round_trips() {
        for kind in [EnvKind::PointReach, EnvKind::PushBox, EnvKind::DrawerPull] {
            let spec = EnvSpec::new(kind);
            let s = env_reset(&spec, 3);
            let obs = s.observation(&spec);
            assert_eq!(obs.dim(), spec.state_dim);
            assert_eq!(EnvState::from_observation(&spec, &obs).unwrap(), s);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(EnvSpec::new(EnvKind::DrawerPull).validate().is_ok());
        let bad = EnvSpec { gamma: 1.0, ..EnvSpec::new(EnvKind::PointReach) };
        assert!(bad.validate().is_err());
        let bad = EnvSpec { horizon: 0, ..EnvSpec::new(EnvKind::PointReach) };
        assert!(bad.validate().is_err());
        assert_eq!("push-box".parse::<EnvKind>().unwrap(), EnvKind::PushBox);
    }
}
