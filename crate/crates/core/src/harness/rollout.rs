//! Episode collection and per-run random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{env_reset, env_step, render_frame, EnvSpec, EnvState, TrackedBody};
use crate::error::Result;
use crate::model::{state_action_rows, ActionVec, EpisodeId, StateVec, StepReward, TrajectorySegment, Transition};
use crate::sac::SacAgent;
use crate::sketch::{compose_sketch, CameraModel, SketchStyle, SketchedObservation};

/// Named random streams; each (seed, index, stream) triple is independent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Reset = 2,
    Rollout = 3,
    Pairs = 4,
    Teacher = 5,
    Reward = 6,
    Policy = 7,
    EvalReset = 8,
    Heldout = 9,
    HeldoutPairs = 10,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn derive_seed(seed: u64, index: u64, stream: Stream) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ index) ^ stream as u64)
}

pub fn stream_rng(seed: u64, index: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index, stream))
}

/// One finished episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: EpisodeId,
    pub transitions: Vec<Transition>,
    pub final_state: EnvState,
    pub return_gt: f64,
    /// Success predicate at the final state.
    pub success: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn segment(&self) -> Result<TrajectorySegment> {
        TrajectorySegment::new(self.transitions.clone(), self.id, 0)
    }

    /// Learned return under `reward`, evaluated fresh.
    pub fn return_learned(&self, reward: &impl StepReward) -> Result<f64> {
        Ok(reward.evaluate_rows(&state_action_rows(self.transitions.iter()))?.iter().sum())
    }
}

/// Runs one episode from `env_reset(spec, reset_seed)`. `Transition::done`
/// marks true termination only; reaching the horizon is a truncation.
pub fn rollout_episode(
    spec: &EnvSpec,
    reset_seed: u64,
    id: EpisodeId,
    policy: &mut dyn FnMut(&StateVec) -> Result<ActionVec>,
) -> Result<Episode> {
    let mut state = env_reset(spec, reset_seed);
    let mut transitions = Vec::with_capacity(spec.horizon);
    let mut return_gt = 0.0;
    let mut success;
    loop {
        let s = state.observation(spec);
        let a = policy(&s)?;
        let out = env_step(spec, &state, &a)?;
        let terminal = spec.terminate_on_success && out.success;
        let s_next = out.state.observation(spec);
        transitions.push(Transition::new(s, a, s_next, terminal, out.gt_reward));
        return_gt += out.gt_reward;
        success = out.success;
        state = out.state;
        if out.done {
            break;
        }
    }
    Ok(Episode {
        id,
        transitions,
        final_state: state,
        return_gt,
        success,
    })
}

pub fn uniform_action<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ActionVec {
    ActionVec::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("inside the box")
}

pub fn random_policy<R: Rng>(dim: usize, mut rng: R) -> impl FnMut(&StateVec) -> Result<ActionVec> {
    move |_| Ok(uniform_action(dim, &mut rng))
}

pub fn stochastic_policy<'a, R: Rng>(agent: &'a SacAgent, rng: &'a mut R) -> impl FnMut(&StateVec) -> Result<ActionVec> + 'a {
    move |s| Ok(agent.sample_action(s, rng)?.0)
}

pub fn deterministic_policy(agent: &SacAgent) -> impl FnMut(&StateVec) -> Result<ActionVec> + '_ {
    move |s| Ok(agent.deterministic_action(s)?.0)
}

/// Mean ground-truth return and success rate of `episodes`.
pub fn summarize(episodes: &[Episode]) -> (f64, f64) {
    if episodes.is_empty() {
        return (0.0, 0.0);
    }
    let n = episodes.len() as f64;
    let ret = episodes.iter().map(|e| e.return_gt).sum::<f64>() / n;
    let succ = episodes.iter().filter(|e| e.success).count() as f64 / n;
    (ret, succ)
}

/// Mean ground-truth return of a uniform-random policy over `episodes`
/// episodes.
pub fn random_policy_return(spec: &EnvSpec, episodes: usize, seed: u64) -> Result<f64> {
    let mut eps = Vec::with_capacity(episodes);
    for k in 0..episodes as u64 {
        let mut policy = random_policy(spec.action_dim, stream_rng(seed, k, Stream::Rollout));
        eps.push(rollout_episode(
            spec,
            derive_seed(seed, k, Stream::Reset),
            EpisodeId(k),
            &mut policy,
        )?);
    }
    Ok(summarize(&eps).0)
}

/// Everything needed to turn a segment into a sketched observation.
#[derive(Clone, Debug)]
pub struct SketchContext {
    pub spec: EnvSpec,
    pub camera: CameraModel,
    pub style: SketchStyle,
    pub body: TrackedBody,
}

impl SketchContext {
    /// Final frame rendered from the segment's last state, with the path drawn
    /// over it.
    pub fn sketch(&self, seg: &TrajectorySegment) -> Result<SketchedObservation> {
        let last = EnvState::from_observation(&self.spec, seg.final_state())?;
        let frame = render_frame(&self.spec, &last, &self.camera)?;
        compose_sketch(&self.spec, &self.camera, &self.style, &frame, seg, self.body)
    }
}
