//! Evaluation protocols: labeler accuracy binned by ground-truth return gap,
//! and held-out ranking disagreement of a learned reward.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rollout::{derive_seed, random_policy, rollout_episode, stream_rng, Episode, SketchContext, Stream};
use crate::envs::{EnvKind, EnvSpec, TaskSpec, WORKSPACE_HALF_EXTENT};
use crate::error::{Error, Result};
use crate::model::{segment_return_gt, segment_return_learned, ActionVec, EpisodeId, StateVec, StepReward, TrajectorySegment};
use crate::preference::{LabelSource, PairQuery, PreferenceLabel, PreferenceProvider};

pub const DEFAULT_GAP_BINS: usize = 5;

pub type SegmentPair = (TrajectorySegment, TrajectorySegment);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinAccuracy {
    /// 0 is the smallest-gap bin.
    pub bin: usize,
    /// Smallest and largest `|ΔR_gt|` in the bin.
    pub lo: f64,
    pub hi: f64,
    pub pairs: usize,
    pub labeled: usize,
    pub discarded: usize,
    pub correct: usize,
    /// `None` when every pair in the bin was discarded.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderAccuracy {
    pub source: LabelSource,
    /// Non-empty bins only, in increasing gap order.
    pub bins: Vec<BinAccuracy>,
    pub overall: Option<f64>,
}

impl ProviderAccuracy {
    pub fn bin(&self, index: usize) -> Option<&BinAccuracy> {
        self.bins.iter().find(|b| b.bin == index)
    }
}

/// Rank-based quantile bins over `gaps`: sorting by gap, rank `r` of `n`
/// falls in bin `r * bins / n`. Returns one bin index per input.
pub fn quantile_bins(gaps: &[f64], bins: usize) -> Vec<usize> {
    let n = gaps.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| gaps[a].total_cmp(&gaps[b]).then(a.cmp(&b)));
    let mut out = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * bins / n;
    }
    out
}

/// Labels every pair with each provider and scores the non-discarded labels
/// against the ground-truth ordering. Pairs with equal ground-truth return
/// are skipped. Sketches are rendered only if some provider needs them.
pub fn eval_preference_accuracy(
    providers: &mut [&mut dyn PreferenceProvider],
    pairs: &[SegmentPair],
    sketch: Option<&SketchContext>,
    task: &TaskSpec,
    bins: usize,
) -> Result<Vec<ProviderAccuracy>> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let kept: Vec<(&SegmentPair, f64)> = pairs
        .iter()
        .map(|p| (p, segment_return_gt(&p.0) - segment_return_gt(&p.1)))
        .filter(|(_, gap)| *gap != 0.0)
        .collect();
    let abs: Vec<f64> = kept.iter().map(|(_, g)| g.abs()).collect();
    let bin_of = quantile_bins(&abs, bins);

    let need_sketches = providers.iter().any(|p| p.needs_sketches());
    let sketches = if need_sketches {
        let ctx = sketch.ok_or_else(|| Error::InvalidArgument("a provider needs sketches but none were configured".into()))?;
        kept.iter()
            .map(|((a, b), _)| Ok(Some((ctx.sketch(a)?, ctx.sketch(b)?))))
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![None; kept.len()]
    };

    let mut table = Vec::with_capacity(providers.len());
    for provider in providers.iter_mut() {
        let mut acc: Vec<BinAccuracy> = (0..bins)
            .map(|bin| BinAccuracy {
                bin,
                lo: f64::INFINITY,
                hi: f64::NEG_INFINITY,
                pairs: 0,
                labeled: 0,
                discarded: 0,
                correct: 0,
                accuracy: None,
            })
            .collect();
        for (k, ((a, b), gap)) in kept.iter().enumerate() {
            let obs = sketches[k].as_ref();
            let q = PairQuery {
                seg_a: a,
                seg_b: b,
                obs_a: obs.map(|o| &o.0),
                obs_b: obs.map(|o| &o.1),
                task,
            };
            let label = provider.label(&q)?;
            let cell = &mut acc[bin_of[k]];
            cell.pairs += 1;
            cell.lo = cell.lo.min(abs[k]);
            cell.hi = cell.hi.max(abs[k]);
            match label {
                PreferenceLabel::NoPref => cell.discarded += 1,
                PreferenceLabel::PreferA | PreferenceLabel::PreferB => {
                    cell.labeled += 1;
                    if (label == PreferenceLabel::PreferA) == (*gap > 0.0) {
                        cell.correct += 1;
                    }
                }
            }
        }
        let (labeled, correct) = acc.iter().fold((0, 0), |(l, c), b| (l + b.labeled, c + b.correct));
        let bins: Vec<BinAccuracy> = acc
            .into_iter()
            .filter(|b| b.pairs > 0)
            .map(|mut b| {
                b.accuracy = (b.labeled > 0).then(|| b.correct as f64 / b.labeled as f64);
                b
            })
            .collect();
        table.push(ProviderAccuracy {
            source: provider.source(),
            bins,
            overall: (labeled > 0).then(|| correct as f64 / labeled as f64),
        });
    }
    Ok(table)
}

/// Share of pairs whose learned ordering disagrees with the ground-truth
/// ordering. A pair agrees only when both gaps are nonzero with equal sign,
/// so learned ties count as disagreement.
pub fn misalignment_from_returns(returns: &[(f64, f64, f64, f64)]) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::EmptyBatch("held-out pairs"));
    }
    let bad = returns
        .iter()
        .filter(|(la, lb, ga, gb)| !((la - lb) * (ga - gb) > 0.0))
        .count();
    Ok(bad as f64 / returns.len() as f64)
}

pub fn eval_misalignment(reward: &impl StepReward, pairs: &[SegmentPair]) -> Result<f64> {
    let mut returns = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        returns.push((
            segment_return_learned(a, reward)?,
            segment_return_learned(b, reward)?,
            segment_return_gt(a),
            segment_return_gt(b),
        ));
    }
    misalignment_from_returns(&returns)
}

/// `n` distinct index pairs over `pool` whose ground-truth returns differ.
/// Deterministic in `seed`.
pub fn heldout_pairs(pool: &[Episode], n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if pool.len() < 2 {
        return Err(Error::InsufficientData("held-out pool needs 2 episodes".into()));
    }
    let mut all: Vec<(usize, usize)> = Vec::new();
    for i in 0..pool.len() {
        for j in i + 1..pool.len() {
            if pool[i].return_gt != pool[j].return_gt {
                all.push((i, j));
            }
        }
    }
    if all.is_empty() {
        return Err(Error::InsufficientData("every held-out episode has the same return".into()));
    }
    let mut rng = stream_rng(seed, 0, Stream::HeldoutPairs);
    let take = n.min(all.len());
    let picked = rand::seq::index::sample(&mut rng, all.len(), take);
    Ok(picked.iter().map(|k| all[k]).collect())
}

/// Pairs of full uniform-random-policy episodes.
pub fn random_policy_pairs(spec: &EnvSpec, n: usize, seed: u64) -> Result<Vec<SegmentPair>> {
    let mut pairs = Vec::with_capacity(n);
    for k in 0..n as u64 {
        let ep = |side: u64| -> Result<TrajectorySegment> {
            let idx = 2 * k + side;
            let mut policy = random_policy(spec.action_dim, stream_rng(seed, idx, Stream::Rollout));
            rollout_episode(spec, derive_seed(seed, idx, Stream::Reset), EpisodeId(idx), &mut policy)?.segment()
        };
        pairs.push((ep(0)?, ep(1)?));
    }
    Ok(pairs)
}

/// Position-tracking controller with velocity damping.
fn steer(target: [f64; 2], s: &StateVec) -> Result<ActionVec> {
    const KP: f64 = 3.0;
    const KD: f64 = 1.5;
    let o = s.as_slice();
    ActionVec::new((0..2).map(|i| (KP * (target[i] - o[i]) - KD * o[2 + i]).clamp(-1.0, 1.0)).collect())
}

/// `point_reach` pairs that share a start and end within `final_jitter` of a
/// shared endpoint but take different detours on the way. Each episode heads
/// for its own random waypoint, switches to the endpoint at a random step in
/// 5..=30, and runs the full horizon. Their final frames look alike while
/// their returns differ.
pub fn near_identical_final_state_pairs(
    spec: &EnvSpec,
    n: usize,
    final_jitter: f64,
    seed: u64,
) -> Result<Vec<SegmentPair>> {
    if spec.kind != EnvKind::PointReach {
        return Err(Error::InvalidArgument("the near-identical generator is defined for point_reach".into()));
    }
    let spec = EnvSpec {
        terminate_on_success: false,
        ..*spec
    };
    let h = 0.8 * WORKSPACE_HALF_EXTENT;
    let mut rng = stream_rng(seed, 0, Stream::Pairs);
    let mut pairs = Vec::with_capacity(n);
    for k in 0..n as u64 {
        let reset_seed = derive_seed(seed, k, Stream::Reset);
        let goal = spec.goal();
        // Endpoint near the goal so that final distances are all small.
        let end = [
            goal[0] + rng.random_range(-0.2..0.2),
            goal[1] + rng.random_range(-0.2..0.2),
        ];
        let mut one = |side: u64| -> Result<TrajectorySegment> {
            let waypoint = [rng.random_range(-h..h), rng.random_range(-h..h)];
            let switch = rng.random_range(5..=30usize);
            let jitter = [
                rng.random_range(-final_jitter..=final_jitter),
                rng.random_range(-final_jitter..=final_jitter),
            ];
            let target = [end[0] + jitter[0], end[1] + jitter[1]];
            let mut step = 0usize;
            let mut policy = |s: &StateVec| {
                let aim = if step < switch { waypoint } else { target };
                step += 1;
                steer(aim, s)
            };
            rollout_episode(&spec, reset_seed, EpisodeId(2 * k + side), &mut policy)?.segment()
        };
        let a = one(0)?;
        let b = one(1)?;
        pairs.push((a, b));
    }
    Ok(pairs)
}
