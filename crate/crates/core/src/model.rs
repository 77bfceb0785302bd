//! Transitions, trajectory segments and the FIFO replay buffer.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

/// Environment state as a flat vector of normalized coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVec(pub Vec<f64>);

impl StateVec {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Action with every component in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ActionVec(Vec<f64>);

impl ActionVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (index, &value) in values.iter().enumerate() {
            if !(-1.0..=1.0).contains(&value) {
                return Err(Error::ActionOutOfRange { index, value });
            }
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for ActionVec {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ActionVec> for Vec<f64> {
    fn from(a: ActionVec) -> Self {
        a.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: StateVec,
    pub a: ActionVec,
    pub s_next: StateVec,
    pub done: bool,
    /// Environment truth. Only teachers and evaluation read it.
    pub gt_reward: f64,
    /// Learned reward at the last relabel, `0` before the first one.
    pub learned_reward: f64,
}

impl Transition {
    pub fn new(s: StateVec, a: ActionVec, s_next: StateVec, done: bool, gt_reward: f64) -> Self {
        Self {
            s,
            a,
            s_next,
            done,
            gt_reward,
            learned_reward: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EpisodeId(pub u64);

/// Contiguous run of transitions from a single episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    transitions: Vec<Transition>,
    pub episode_id: EpisodeId,
    pub start_index: usize,
}

impl TrajectorySegment {
    /// Checks non-emptiness and that consecutive transitions chain.
    pub fn new(transitions: Vec<Transition>, episode_id: EpisodeId, start_index: usize) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::InvalidArgument("a segment needs at least one transition".into()));
        }
        if let Some(i) = transitions.windows(2).position(|w| w[0].s_next != w[1].s) {
            return Err(Error::InvalidArgument(format!(
                "transition {i} does not chain into transition {}",
                i + 1
            )));
        }
        Ok(Self {
            transitions,
            episode_id,
            start_index,
        })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn final_state(&self) -> &StateVec {
        &self.transitions.last().expect("non-empty").s_next
    }

    /// States visited, `s_0 .. s_k` including the final `s_next`.
    pub fn states(&self) -> impl Iterator<Item = &StateVec> {
        self.transitions
            .iter()
            .map(|t| &t.s)
            .chain(std::iter::once(self.final_state()))
    }

    /// Rows of `concat(s, a)` for batched reward evaluation.
    pub fn state_action_matrix(&self) -> Matrix<f64> {
        state_action_rows(self.transitions.iter())
    }
}

pub(crate) fn state_action_rows<'a>(ts: impl Iterator<Item = &'a Transition>) -> Matrix<f64> {
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = 0;
    for t in ts {
        cols = t.s.dim() + t.a.dim();
        data.extend_from_slice(t.s.as_slice());
        data.extend_from_slice(t.a.as_slice());
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data).expect("uniform transition dims")
}

/// Per-step reward `r(s, a)` evaluated in batches.
pub trait StepReward {
    /// Input width, `state_dim + action_dim`.
    fn input_dim(&self) -> usize;

    /// One reward per row of `concat(s, a)`.
    fn evaluate_rows(&self, rows: &Matrix<f64>) -> Result<Vec<f64>>;

    fn evaluate(&self, s: &StateVec, a: &ActionVec) -> Result<f64> {
        let mut row = s.0.clone();
        row.extend_from_slice(a.as_slice());
        Ok(self.evaluate_rows(&Matrix::row(&row))?[0])
    }
}

/// Sum of ground-truth rewards over the segment.
pub fn segment_return_gt(seg: &TrajectorySegment) -> f64 {
    seg.transitions.iter().map(|t| t.gt_reward).sum()
}

/// `Σ_t r(s_t, a_t)`, evaluated fresh rather than read from `learned_reward`.
pub fn segment_return_learned(seg: &TrajectorySegment, reward: &impl StepReward) -> Result<f64> {
    let first = &seg.transitions[0];
    let dim = first.s.dim() + first.a.dim();
    if dim != reward.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: reward.input_dim(),
            actual: dim,
        });
    }
    Ok(reward.evaluate_rows(&seg.state_action_matrix())?.iter().sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Stored {
    seq: u64,
    episode_id: EpisodeId,
    step_index: usize,
    transition: Transition,
}

/// Stored extent of one episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeSpan {
    pub episode_id: EpisodeId,
    /// Step index within the episode of the oldest retained transition.
    pub first_step: usize,
    pub len: usize,
}

/// Sampled training batch. Exposes learned rewards only.
#[derive(Clone, Debug)]
pub struct TrainingBatch {
    pub states: Matrix<f64>,
    pub actions: Matrix<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Matrix<f64>,
    pub dones: Vec<f64>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// FIFO transition store with an episode index.
///
/// Single writer: callers must not interleave pushes with sampling or
/// relabeling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Stored>,
    next_seq: u64,
    episodes: BTreeMap<EpisodeId, VecDeque<u64>>,
}

pub const DEFAULT_BUFFER_CAPACITY: usize = 100_000;

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("buffer capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: VecDeque::new(),
            next_seq: 0,
            episodes: BTreeMap::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter().map(|s| &s.transition)
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i).map(|s| &s.transition)
    }

    fn position(&self, seq: u64) -> usize {
        (seq - self.items.front().expect("non-empty").seq) as usize
    }

    pub fn push(&mut self, transition: Transition, episode_id: EpisodeId) {
        let episode = self.episodes.entry(episode_id).or_default();
        let step_index = match episode.back() {
            Some(&last) => {
                let pos = (last - self.items.front().expect("indexed").seq) as usize;
                self.items[pos].step_index + 1
            }
            None => 0,
        };
        episode.push_back(self.next_seq);
        self.items.push_back(Stored {
            seq: self.next_seq,
            episode_id,
            step_index,
            transition,
        });
        self.next_seq += 1;
        while self.items.len() > self.capacity {
            let old = self.items.pop_front().expect("over capacity");
            let ep = self.episodes.get_mut(&old.episode_id).expect("indexed episode");
            ep.pop_front();
            if ep.is_empty() {
                self.episodes.remove(&old.episode_id);
            }
        }
    }

    pub fn episode_spans(&self) -> Vec<EpisodeSpan> {
        self.episodes
            .iter()
            .map(|(&episode_id, seqs)| EpisodeSpan {
                episode_id,
                first_step: self.items[self.position(seqs[0])].step_index,
                len: seqs.len(),
            })
            .collect()
    }

    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// `len` transitions of `episode_id` starting at offset `offset` into the
    /// retained part of the episode.
    pub fn segment(&self, episode_id: EpisodeId, offset: usize, len: usize) -> Result<TrajectorySegment> {
        let seqs = self
            .episodes
            .get(&episode_id)
            .ok_or_else(|| Error::InvalidArgument(format!("episode {} not in buffer", episode_id.0)))?;
        if len == 0 || offset + len > seqs.len() {
            return Err(Error::InsufficientData(format!(
                "episode {} holds {} transitions, requested {offset}+{len}",
                episode_id.0,
                seqs.len()
            )));
        }
        let first = self.position(seqs[offset]);
        let start_index = self.items[first].step_index;
        let ts = seqs
            .range(offset..offset + len)
            .map(|&q| self.items[self.position(q)].transition.clone())
            .collect();
        TrajectorySegment::new(ts, episode_id, start_index)
    }

    /// Everything retained for one episode.
    pub fn episode_segment(&self, episode_id: EpisodeId) -> Result<TrajectorySegment> {
        let len = self.episodes.get(&episode_id).map_or(0, VecDeque::len);
        self.segment(episode_id, 0, len)
    }

    /// `n_pairs` pairs of equal-length contiguous segments drawn from two
    /// distinct episodes. Episode choice and offsets are uniform; the result
    /// is a pure function of buffer contents and `seed`.
    pub fn sample_segment_pairs(
        &self,
        n_pairs: usize,
        segment_len: usize,
        seed: u64,
    ) -> Result<Vec<(TrajectorySegment, TrajectorySegment)>> {
        if segment_len == 0 {
            return Err(Error::InvalidArgument("segment_len must be positive".into()));
        }
        let eligible: Vec<(EpisodeId, usize)> = self
            .episodes
            .iter()
            .filter(|(_, seqs)| seqs.len() >= segment_len)
            .map(|(&id, seqs)| (id, seqs.len()))
            .collect();
        if eligible.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need 2 episodes with at least {segment_len} transitions, have {}",
                eligible.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::with_capacity(n_pairs);
        for _ in 0..n_pairs {
            let picked = index::sample(&mut rng, eligible.len(), 2);
            let (ia, ib) = (picked.index(0), picked.index(1));
            let mut take = |(id, len): (EpisodeId, usize)| {
                let offset = rng.random_range(0..=len - segment_len);
                self.segment(id, offset, segment_len)
            };
            let a = take(eligible[ia])?;
            let b = take(eligible[ib])?;
            pairs.push((a, b));
        }
        Ok(pairs)
    }

    /// Rewrites every stored `learned_reward` with a fresh evaluation.
    pub fn relabel_all(&mut self, reward: &impl StepReward) -> Result<()> {
        const CHUNK: usize = 4096;
        if self.items.is_empty() {
            return Ok(());
        }
        let dim = {
            let t = &self.items[0].transition;
            t.s.dim() + t.a.dim()
        };
        if dim != reward.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: reward.input_dim(),
                actual: dim,
            });
        }
        let n = self.items.len();
        let mut start = 0;
        while start < n {
            let end = (start + CHUNK).min(n);
            let rows = state_action_rows(self.items.range(start..end).map(|s| &s.transition));
            let values = reward.evaluate_rows(&rows)?;
            for (item, v) in self.items.range_mut(start..end).zip(values) {
                item.transition.learned_reward = v;
            }
            start = end;
        }
        Ok(())
    }

    /// Sets every stored `learned_reward` to `f(episode, step_index, transition)`.
    pub fn relabel_with(&mut self, mut f: impl FnMut(EpisodeId, usize, &Transition) -> f64) {
        for item in self.items.iter_mut() {
            item.transition.learned_reward = f(item.episode_id, item.step_index, &item.transition);
        }
    }

    /// Uniform sample with replacement.
    pub fn sample_batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<TrainingBatch> {
        if self.items.is_empty() {
            return Err(Error::InsufficientData("replay buffer is empty".into()));
        }
        let first = &self.items[0].transition;
        let (sd, ad) = (first.s.dim(), first.a.dim());
        let mut states = Vec::with_capacity(batch_size * sd);
        let mut actions = Vec::with_capacity(batch_size * ad);
        let mut next_states = Vec::with_capacity(batch_size * sd);
        let mut rewards = Vec::with_capacity(batch_size);
        let mut dones = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let t = &self.items[rng.random_range(0..self.items.len())].transition;
            states.extend_from_slice(t.s.as_slice());
            actions.extend_from_slice(t.a.as_slice());
            next_states.extend_from_slice(t.s_next.as_slice());
            rewards.push(t.learned_reward);
            dones.push(if t.done { 1.0 } else { 0.0 });
        }
        Ok(TrainingBatch {
            states: Matrix::from_vec(batch_size, sd, states)?,
            actions: Matrix::from_vec(batch_size, ad, actions)?,
            rewards,
            next_states: Matrix::from_vec(batch_size, sd, next_states)?,
            dones,
        })
    }

    /// JSONL dump, one transition per line with its episode bookkeeping.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        for item in &self.items {
            serde_json::to_writer(&mut out, item)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(input: R, capacity: usize) -> Result<Self> {
        let mut buf = Self::new(capacity)?;
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let item: Stored = serde_json::from_str(&line)?;
            let seq = item.seq;
            buf.episodes.entry(item.episode_id).or_default().push_back(seq);
            buf.items.push_back(item);
            buf.next_seq = seq + 1;
            while buf.items.len() > buf.capacity {
                let old = buf.items.pop_front().expect("over capacity");
                let ep = buf.episodes.get_mut(&old.episode_id).expect("indexed");
                ep.pop_front();
                if ep.is_empty() {
                    buf.episodes.remove(&old.episode_id);
                }
            }
        }
        if buf.items.iter().zip(buf.items.iter().skip(1)).any(|(a, b)| b.seq != a.seq + 1) {
            return Err(Error::Parse("snapshot sequence numbers are not contiguous".into()));
        }
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(x: f64, gt: f64) -> Transition {
        Transition::new(
            StateVec(vec![x]),
            ActionVec::zeros(1),
            StateVec(vec![x + 1.0]),
            false,
            gt,
        )
    }

    fn chain(start: f64, gts: &[f64]) -> Vec<Transition> {
        gts.iter().enumerate().map(|(i, &g)| tr(start + i as f64, g)).collect()
    }

    #[test]
    fn gt_return_sums_rewards() {
        let seg = TrajectorySegment::new(chain(0.0, &[1.0, 2.0, 3.0]), EpisodeId(0), 0).unwrap();
        assert_eq!(segment_return_gt(&seg), 6.0);
        let seg = TrajectorySegment::new(chain(0.0, &[0.0]), EpisodeId(0), 0).unwrap();
        assert_eq!(segment_return_gt(&seg), 0.0);
    }

    #[test]
    fn hundred_small_penalties_sum_to_minus_one() {
        let gts = vec![-0.01; 100];
        let seg = TrajectorySegment::new(chain(0.0, &gts), EpisodeId(0), 0).unwrap();
        let oracle = gts.iter().fold(0.0, |acc, g| acc + g);
        assert!((segment_return_gt(&seg) - oracle).abs() < 1e-15);
        assert!((segment_return_gt(&seg) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn segments_must_chain_and_be_non_empty() {
        assert!(TrajectorySegment::new(vec![], EpisodeId(0), 0).is_err());
        let mut ts = chain(0.0, &[1.0, 1.0]);
        ts[1].s = StateVec(vec![42.0]);
        assert!(TrajectorySegment::new(ts, EpisodeId(0), 0).is_err());
    }

    #[test]
    fn action_range_is_enforced() {
        assert!(ActionVec::new(vec![1.0, -1.0]).is_ok());
        assert!(matches!(
            ActionVec::new(vec![0.0, 1.5]),
            Err(Error::ActionOutOfRange { index: 1, .. })
        ));
        assert!(serde_json::from_str::<ActionVec>("[2.0]").is_err());
    }

    #[test]
    fn push_into_empty_buffer() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        buf.push(tr(0.0, 1.0), EpisodeId(0));
        assert_eq!(buf.len(), 1);
    }

    #[test]
    fn fifo_eviction_drops_the_oldest() {
        let mut buf = ReplayBuffer::new(2).unwrap();
        for (i, t) in chain(0.0, &[1.0, 2.0, 3.0]).into_iter().enumerate() {
            buf.push(t, EpisodeId(i as u64));
        }
        assert_eq!(buf.len(), 2);
        let gts: Vec<f64> = buf.transitions().map(|t| t.gt_reward).collect();
        assert_eq!(gts, vec![2.0, 3.0]);
        assert_eq!(buf.num_episodes(), 2);
    }

    #[test]
    fn episode_index_tracks_pushes() {
        let mut buf = ReplayBuffer::new(2000).unwrap();
        for ep in 0..10u64 {
            for t in chain(0.0, &[0.5; 100]) {
                buf.push(t, EpisodeId(ep));
            }
        }
        let spans = buf.episode_spans();
        assert_eq!(spans.len(), 10);
        assert!(spans.iter().all(|s| s.len == 100 && s.first_step == 0));
    }

    #[test]
    fn partially_evicted_episode_keeps_step_indices() {
        let mut buf = ReplayBuffer::new(5).unwrap();
        for t in chain(0.0, &[0.0; 4]) {
            buf.push(t, EpisodeId(1));
        }
        for t in chain(10.0, &[0.0; 3]) {
            buf.push(t, EpisodeId(2));
        }
        let spans = buf.episode_spans();
        assert_eq!(spans[0], EpisodeSpan { episode_id: EpisodeId(1), first_step: 2, len: 2 });
        let seg = buf.episode_segment(EpisodeId(1)).unwrap();
        assert_eq!(seg.start_index, 2);
        assert_eq!(seg.transitions()[0].s.0, vec![2.0]);
    }

    #[test]
    fn pair_sampling_needs_two_long_enough_episodes() {
        let mut buf = ReplayBuffer::new(100).unwrap();
        for t in chain(0.0, &[0.0; 5]) {
            buf.push(t, EpisodeId(0));
        }
        assert!(matches!(buf.sample_segment_pairs(1, 3, 0), Err(Error::InsufficientData(_))));
        for t in chain(0.0, &[0.0; 2]) {
            buf.push(t, EpisodeId(1));
        }
        assert!(buf.sample_segment_pairs(1, 3, 0).is_err());
        let pairs = buf.sample_segment_pairs(1, 2, 0).unwrap();
        assert_ne!(pairs[0].0.episode_id, pairs[0].1.episode_id);
    }

    #[test]
    fn snapshot_round_trip_preserves_contents() {
        let mut buf = ReplayBuffer::new(6).unwrap();
        for ep in 0..3u64 {
            for t in chain(ep as f64 * 10.0, &[0.25, -0.5, 1.0]) {
                buf.push(t, EpisodeId(ep));
            }
        }
        let mut bytes = Vec::new();
        buf.write_snapshot(&mut bytes).unwrap();
        assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 6);
        let back = ReplayBuffer::read_snapshot(&bytes[..], 6).unwrap();
        assert_eq!(back.items, buf.items);
        assert_eq!(back.episode_spans(), buf.episode_spans());
        let mut again = Vec::new();
        back.write_snapshot(&mut again).unwrap();
        assert_eq!(again, bytes);
    }
}
