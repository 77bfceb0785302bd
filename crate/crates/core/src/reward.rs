//! Learned per-step reward, Bradley-Terry preference likelihood, and the
//! agent-preference regularizer.
//!
//! `loss_vlm` is the minibatch *mean* of the per-pair cross-entropy, so its
//! scale does not depend on the batch size. `loss_agent` is
//! `λ · mean_τ(−Σ_t r(s_t, a_t))` over recent policy trajectories.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::model::{segment_return_learned, state_action_rows, StepReward, TrajectorySegment};
use crate::nn::{Activation, Adam, AdamConfig, Mlp, MlpCheckpoint, MlpVars, OutputActivation};
use crate::preference::{PreferenceDataset, PreferenceRecord};
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardLearnConfig {
    /// Weight of the agent-preference term; 0 disables it.
    pub lambda: f64,
    pub lr: f64,
    pub pref_batch: usize,
    pub agent_batch_trajs: usize,
    pub epochs_per_iter: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for RewardLearnConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            lr: 1e-3,
            pref_batch: 32,
            agent_batch_trajs: 8,
            epochs_per_iter: 5,
            hidden: vec![32, 32],
            activation: Activation::Relu,
        }
    }
}

impl RewardLearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda {} must be >= 0", self.lambda)));
        }
        AdamConfig::with_lr(self.lr).validate()?;
        if self.pref_batch == 0 || self.agent_batch_trajs == 0 {
            return Err(Error::Config("reward batch sizes must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// `r(s, a) ∈ (−1, 1)`: an MLP on `concat(s, a)` with a tanh head.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardModel {
    net: Mlp<f64>,
    state_dim: usize,
}

impl RewardModel {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let sizes: Vec<usize> = std::iter::once(state_dim + action_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let net = Mlp::new(&sizes, activation, OutputActivation::Tanh, rng)?;
        Ok(Self { net, state_dim })
    }

    /// All-zero parameters: `r ≡ 0`.
    pub fn zeros(state_dim: usize, action_dim: usize, hidden: &[usize]) -> Result<Self> {
        let sizes: Vec<usize> = std::iter::once(state_dim + action_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let net = Mlp::zeros(&sizes, Activation::Relu, OutputActivation::Tanh)?;
        Ok(Self { net, state_dim })
    }

    pub fn from_net(net: Mlp<f64>, state_dim: usize) -> Result<Self> {
        if net.output_dim() != 1 || net.output_activation() != OutputActivation::Tanh {
            return Err(Error::InvalidArgument("reward net needs one tanh output".into()));
        }
        if state_dim >= net.input_dim() {
            return Err(Error::InvalidArgument("state_dim must leave room for the action".into()));
        }
        Ok(Self { net, state_dim })
    }

    pub fn net(&self) -> &Mlp<f64> {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp<f64> {
        &mut self.net
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.net.input_dim() - self.state_dim
    }
}

impl StepReward for RewardModel {
    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn evaluate_rows(&self, rows: &Matrix<f64>) -> Result<Vec<f64>> {
        Ok(self.net.predict(rows)?.into_vec())
    }
}

/// `P(a ≻ b)` from two returns, as a stable sigmoid of their difference.
pub fn bt_prob_from_returns<T: Scalar>(return_a: T, return_b: T) -> T {
    sigmoid(return_a - return_b)
}

/// Cross-entropy of one comparison given the return gap `R_a − R_b`.
pub fn bt_cross_entropy<T: Scalar>(gap: T, y: u8) -> T {
    if y == 1 {
        softplus(-gap)
    } else {
        softplus(gap)
    }
}

fn check_pair(a: &TrajectorySegment, b: &TrajectorySegment) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::UnequalLengths { a: a.len(), b: b.len() });
    }
    Ok(())
}

pub fn bt_prob(reward: &impl StepReward, a: &TrajectorySegment, b: &TrajectorySegment) -> Result<f64> {
    check_pair(a, b)?;
    Ok(bt_prob_from_returns(
        segment_return_learned(a, reward)?,
        segment_return_learned(b, reward)?,
    ))
}

/// Recorded per-segment returns, `n × 1`.
pub fn segment_returns(
    tape: &mut Tape<f64>,
    model: &RewardModel,
    vars: &MlpVars,
    segs: &[&TrajectorySegment],
) -> Result<Var> {
    let mut offsets = Vec::with_capacity(segs.len() + 1);
    offsets.push(0);
    for s in segs {
        offsets.push(offsets.last().unwrap() + s.len());
    }
    let rows = state_action_rows(segs.iter().flat_map(|s| s.transitions().iter()));
    if rows.cols() != model.net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.net.input_dim(),
            actual: rows.cols(),
        });
    }
    let x = tape.constant(rows);
    let r = model.net.forward(tape, vars, x)?;
    tape.group_sum(r, offsets)
}

/// Mean preference cross-entropy over `batch`.
pub fn loss_vlm(tape: &mut Tape<f64>, model: &RewardModel, vars: &MlpVars, batch: &[&PreferenceRecord]) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch("preference batch"));
    }
    let mut segs = Vec::with_capacity(2 * batch.len());
    for r in batch {
        check_pair(&r.seg_a, &r.seg_b)?;
        if r.y > 1 {
            return Err(Error::InvalidArgument(format!("stored label y = {}", r.y)));
        }
        segs.push(&*r.seg_a);
    }
    for r in batch {
        segs.push(&*r.seg_b);
    }
    let returns = segment_returns(tape, model, vars, &segs)?;
    let n = batch.len();
    // Row i of `sel · returns` is ∓(R_a − R_b), signed by the label.
    let mut sel = Matrix::zeros(n, 2 * n);
    for (i, r) in batch.iter().enumerate() {
        let sign = if r.y == 1 { -1.0 } else { 1.0 };
        sel.set(i, i, sign);
        sel.set(i, n + i, -sign);
    }
    let sel = tape.constant(sel);
    let z = tape.matmul(sel, returns)?;
    let ce = tape.softplus(z);
    Ok(tape.mean(ce))
}

/// `λ · mean(−R(τ))`; exactly zero (and gradient-free) when `λ = 0`.
pub fn loss_agent(
    tape: &mut Tape<f64>,
    model: &RewardModel,
    vars: &MlpVars,
    trajs: &[&TrajectorySegment],
    lambda: f64,
) -> Result<Var> {
    if lambda == 0.0 {
        return Ok(tape.constant(Matrix::scalar(0.0)));
    }
    if trajs.is_empty() {
        return Err(Error::EmptyBatch("policy trajectory batch"));
    }
    let returns = segment_returns(tape, model, vars, trajs)?;
    let m = tape.mean(returns);
    Ok(tape.scale(m, -lambda))
}

pub fn loss_varp(
    tape: &mut Tape<f64>,
    model: &RewardModel,
    vars: &MlpVars,
    prefs: &[&PreferenceRecord],
    trajs: &[&TrajectorySegment],
    lambda: f64,
) -> Result<(Var, Var, Var)> {
    let lv = loss_vlm(tape, model, vars, prefs)?;
    let la = loss_agent(tape, model, vars, trajs, lambda)?;
    let total = tape.add(lv, la)?;
    Ok((total, lv, la))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub vlm: f64,
    pub agent: f64,
    pub total: f64,
}

/// Loss values and parameter gradients (one matrix per parameter block).
pub fn varp_loss_and_grads(
    model: &RewardModel,
    prefs: &[&PreferenceRecord],
    trajs: &[&TrajectorySegment],
    lambda: f64,
) -> Result<(LossValues, Vec<Matrix<f64>>)> {
    let mut tape = Tape::new();
    let vars = model.net.bind(&mut tape);
    let (total, lv, la) = loss_varp(&mut tape, model, &vars, prefs, trajs, lambda)?;
    let values = LossValues {
        vlm: tape.scalar_value(lv),
        agent: tape.scalar_value(la),
        total: tape.scalar_value(total),
    };
    let grads = tape.backward(total)?;
    let mats = model
        .net
        .params()
        .iter()
        .zip(vars.vars())
        .map(|(p, &v)| grads.get_or_zeros(v, p.rows, p.cols))
        .collect();
    Ok((values, mats))
}

/// Loss values only, without recording gradients.
pub fn varp_loss_values(
    model: &RewardModel,
    prefs: &[&PreferenceRecord],
    trajs: &[&TrajectorySegment],
    lambda: f64,
) -> Result<LossValues> {
    if prefs.is_empty() {
        return Err(Error::EmptyBatch("preference batch"));
    }
    let mut vlm = 0.0;
    for r in prefs {
        check_pair(&r.seg_a, &r.seg_b)?;
        let gap = segment_return_learned(&r.seg_a, model)? - segment_return_learned(&r.seg_b, model)?;
        vlm += bt_cross_entropy(gap, r.y);
    }
    vlm /= prefs.len() as f64;
    let agent = if lambda == 0.0 {
        0.0
    } else {
        if trajs.is_empty() {
            return Err(Error::EmptyBatch("policy trajectory batch"));
        }
        let mut s = 0.0;
        for t in trajs {
            s += segment_return_learned(t, model)?;
        }
        -lambda * s / trajs.len() as f64
    };
    Ok(LossValues {
        vlm,
        agent,
        total: vlm + agent,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardUpdateStats {
    pub loss_vlm: f64,
    pub loss_agent: f64,
    pub loss_total: f64,
    /// Share of stored pairs whose learned-return order matches the label.
    pub train_accuracy: f64,
    pub steps: usize,
}

/// Fraction of records with `sign(R_a − R_b)` matching `y`; ties count as
/// wrong.
pub fn preference_accuracy(model: &RewardModel, records: &[PreferenceRecord]) -> Result<f64> {
    if records.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for r in records {
        let gap = segment_return_learned(&r.seg_a, model)? - segment_return_learned(&r.seg_b, model)?;
        if (r.y == 1 && gap > 0.0) || (r.y == 0 && gap < 0.0) {
            hits += 1;
        }
    }
    Ok(hits as f64 / records.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSnapshot {
    pub net: MlpCheckpoint,
    pub state_dim: usize,
    pub adam: Adam<f64>,
    pub cfg: RewardLearnConfig,
}

/// Owns the reward model and its optimizer state.
#[derive(Clone, Debug)]
pub struct RewardLearner {
    pub model: RewardModel,
    pub adam: Adam<f64>,
    pub cfg: RewardLearnConfig,
}

impl RewardLearner {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, cfg: RewardLearnConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let model = RewardModel::new(state_dim, action_dim, &cfg.hidden, cfg.activation, rng)?;
        let adam = Adam::new(AdamConfig::with_lr(cfg.lr), model.net.params())?;
        Ok(Self { model, adam, cfg })
    }

    pub fn snapshot(&self) -> RewardSnapshot {
        RewardSnapshot {
            net: MlpCheckpoint::from_mlp(&self.model.net),
            state_dim: self.model.state_dim,
            adam: self.adam.clone(),
            cfg: self.cfg.clone(),
        }
    }

    pub fn from_snapshot(s: &RewardSnapshot) -> Result<Self> {
        s.cfg.validate()?;
        Ok(Self {
            model: RewardModel::from_net(s.net.to_mlp()?, s.state_dim)?,
            adam: s.adam.clone(),
            cfg: s.cfg.clone(),
        })
    }

    /// `epochs_per_iter` passes of shuffled minibatch Adam on the combined
    /// loss. Each minibatch pairs with a random subset of `recent` for the
    /// agent term.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        dataset: &PreferenceDataset,
        recent: &[TrajectorySegment],
        rng: &mut R,
    ) -> Result<RewardUpdateStats> {
        reward_update(&mut self.model, &mut self.adam, dataset, recent, &self.cfg, rng)
    }
}

pub fn reward_update<R: Rng + ?Sized>(
    model: &mut RewardModel,
    adam: &mut Adam<f64>,
    dataset: &PreferenceDataset,
    recent: &[TrajectorySegment],
    cfg: &RewardLearnConfig,
    rng: &mut R,
) -> Result<RewardUpdateStats> {
    if dataset.is_empty() {
        return Err(Error::InsufficientData("reward update needs at least one stored preference".into()));
    }
    if cfg.lambda > 0.0 && recent.is_empty() {
        return Err(Error::EmptyBatch("policy trajectory batch"));
    }
    let records = dataset.records();
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut traj_idx: Vec<usize> = (0..recent.len()).collect();
    let mut stats = RewardUpdateStats::default();
    for _ in 0..cfg.epochs_per_iter {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.pref_batch) {
            let prefs: Vec<&PreferenceRecord> = chunk.iter().map(|&i| &records[i]).collect();
            let trajs: Vec<&TrajectorySegment> = if cfg.lambda > 0.0 {
                traj_idx.shuffle(rng);
                traj_idx.iter().take(cfg.agent_batch_trajs).map(|&i| &recent[i]).collect()
            } else {
                Vec::new()
            };
            let mut tape = Tape::new();
            let vars = model.net.bind(&mut tape);
            let (total, lv, la) = loss_varp(&mut tape, model, &vars, &prefs, &trajs, cfg.lambda)?;
            stats.loss_vlm += tape.scalar_value(lv);
            stats.loss_agent += tape.scalar_value(la);
            stats.loss_total += tape.scalar_value(total);
            let grads = tape.backward(total)?;
            model.net.accumulate_grads(&grads, &vars);
            adam.step(model.net.params_mut());
            stats.steps += 1;
        }
    }
    if stats.steps > 0 {
        let n = stats.steps as f64;
        stats.loss_vlm /= n;
        stats.loss_agent /= n;
        stats.loss_total /= n;
    }
    stats.train_accuracy = preference_accuracy(model, records)?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActionVec, EpisodeId, StateVec, Transition};
    use crate::preference::LabelSource;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    /// `r(s, a) = tanh(s)` on one-dimensional states and actions.
    fn probe_model() -> RewardModel {
        let mut net = Mlp::zeros(&[2, 1], Activation::Relu, OutputActivation::Tanh).unwrap();
        net.weight_mut(0).values = vec![1.0, 0.0];
        RewardModel::from_net(net, 1).unwrap()
    }

    /// Segment whose per-step `probe_model` rewards are `rewards`.
    fn seg_with_rewards(rewards: &[f64]) -> TrajectorySegment {
        let states: Vec<f64> = rewards.iter().map(|r| r.atanh()).chain(std::iter::once(0.0)).collect();
        let ts = (0..rewards.len())
            .map(|i| {
                Transition::new(
                    StateVec(vec![states[i]]),
                    ActionVec::zeros(1),
                    StateVec(vec![states[i + 1]]),
                    false,
                    0.0,
                )
            })
            .collect();
        TrajectorySegment::new(ts, EpisodeId(0), 0).unwrap()
    }

    fn record(a: TrajectorySegment, b: TrajectorySegment, y: u8) -> PreferenceRecord {
        PreferenceRecord {
            seg_a: Arc::new(a),
            seg_b: Arc::new(b),
            y,
            source: LabelSource::Scripted,
            created_at: 0.0,
        }
    }

    #[test]
    fn bt_prob_examples() {
        let m = probe_model();
        let a = seg_with_rewards(&[0.5, 0.5]);
        let b = seg_with_rewards(&[0.0, 0.0]);
        assert!((bt_prob(&m, &a, &a).unwrap() - 0.5).abs() < 1e-12);
        assert!((bt_prob(&m, &a, &b).unwrap() - 0.731058579).abs() < 1e-9);
        assert!((bt_prob_from_returns(1.0f64, 0.0) - 0.731058579).abs() < 1e-9);
        let p = bt_prob_from_returns(800.0f64, 0.0);
        assert!((1.0 - 1e-12..1.0 + 1e-15).contains(&p));
        assert!(bt_prob_from_returns(0.0f64, 800.0).is_finite());
    }

    #[test]
    fn bt_prob_rejects_unequal_lengths() {
        let m = probe_model();
        let err = bt_prob(&m, &seg_with_rewards(&[0.1]), &seg_with_rewards(&[0.1, 0.2])).unwrap_err();
        assert!(matches!(err, Error::UnequalLengths { a: 1, b: 2 }));
    }

    #[test]
    fn bt_prob_increases_with_reward_on_first_segment() {
        let m = probe_model();
        let b = seg_with_rewards(&[0.1, -0.2, 0.3]);
        let mut last = 0.0;
        for k in 0..10 {
            let bump = 0.05 * k as f64;
            let a = seg_with_rewards(&[-0.4 + bump, 0.0 + bump, 0.1 + bump]);
            let p = bt_prob(&m, &a, &b).unwrap();
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn loss_vlm_examples() {
        let m = probe_model();
        let a = seg_with_rewards(&[0.5, 0.5]);
        let b = seg_with_rewards(&[0.0, 0.0]);
        let r1 = record(a.clone(), b.clone(), 1);
        let v = varp_loss_values(&m, &[&r1], &[], 0.0).unwrap();
        assert!((v.vlm - 0.313261687).abs() < 1e-9);
        let r0 = record(a.clone(), a.clone(), 0);
        let v = varp_loss_values(&m, &[&r0], &[], 0.0).unwrap();
        assert!((v.vlm - std::f64::consts::LN_2).abs() < 1e-9);
        let strong = record(seg_with_rewards(&[0.99; 40]), seg_with_rewards(&[-0.99; 40]), 1);
        assert!(varp_loss_values(&m, &[&strong], &[], 0.0).unwrap().vlm < 1e-15);

        let mut tape = Tape::new();
        let vars = m.net().bind(&mut tape);
        let lv = loss_vlm(&mut tape, &m, &vars, &[&r1]).unwrap();
        assert!((tape.scalar_value(lv) - 0.313261687).abs() < 1e-9);
        assert!(matches!(loss_vlm(&mut tape, &m, &vars, &[]), Err(Error::EmptyBatch(_))));
    }

    #[test]
    fn loss_agent_examples() {
        let m = probe_model();
        let t2 = seg_with_rewards(&[0.5; 4]);
        let t4 = seg_with_rewards(&[0.5; 8]);
        let mut tape = Tape::new();
        let vars = m.net().bind(&mut tape);
        let la = loss_agent(&mut tape, &m, &vars, &[&t2, &t4], 0.5).unwrap();
        assert!((tape.scalar_value(la) + 1.5).abs() < 1e-12);
        let la0 = loss_agent(&mut tape, &m, &vars, &[&t2, &t4], 0.0).unwrap();
        assert_eq!(tape.scalar_value(la0), 0.0);
        assert!(matches!(loss_agent(&mut tape, &m, &vars, &[], 0.5), Err(Error::EmptyBatch(_))));

        let z = RewardModel::zeros(1, 1, &[4]).unwrap();
        let vars = z.net().bind(&mut tape);
        let la = loss_agent(&mut tape, &z, &vars, &[&t2], 0.5).unwrap();
        assert_eq!(tape.scalar_value(la), 0.0);
    }

    #[test]
    fn agent_loss_is_bounded_by_lambda_times_horizon() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = RewardModel::new(1, 1, &[8], Activation::Relu, &mut rng).unwrap();
        let t = seg_with_rewards(&[0.9; 20]);
        let v = varp_loss_values(&m, &[&record(t.clone(), t.clone(), 1)], &[&t], 0.3).unwrap();
        assert!(v.agent.abs() < 0.3 * 20.0);
    }

    #[test]
    fn zero_lambda_reduces_to_preference_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = RewardModel::new(1, 1, &[5, 5], Activation::Tanh, &mut rng).unwrap();
        let r = record(seg_with_rewards(&[0.3, -0.1]), seg_with_rewards(&[0.2, 0.4]), 0);
        let mut tape = Tape::new();
        let vars = m.net().bind(&mut tape);
        let lv = loss_vlm(&mut tape, &m, &vars, &[&r]).unwrap();
        let (total, _, _) = loss_varp(&mut tape, &m, &vars, &[&r], &[], 0.0).unwrap();
        assert_eq!(tape.scalar_value(total), tape.scalar_value(lv));
        assert!(matches!(
            loss_varp(&mut tape, &m, &vars, &[], &[], 0.0),
            Err(Error::EmptyBatch(_))
        ));
    }

    #[test]
    fn recorded_and_direct_losses_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = RewardModel::new(1, 1, &[6], Activation::Tanh, &mut rng).unwrap();
        let r1 = record(seg_with_rewards(&[0.3, -0.1, 0.0]), seg_with_rewards(&[0.2, 0.4, 0.1]), 1);
        let r2 = record(seg_with_rewards(&[0.6, 0.1, 0.2]), seg_with_rewards(&[-0.2, 0.4, -0.5]), 0);
        let t = seg_with_rewards(&[0.1, 0.2]);
        let (v, grads) = varp_loss_and_grads(&m, &[&r1, &r2], &[&t], 0.2).unwrap();
        let w = varp_loss_values(&m, &[&r1, &r2], &[&t], 0.2).unwrap();
        assert!((v.vlm - w.vlm).abs() < 1e-12);
        assert!((v.agent - w.agent).abs() < 1e-12);
        assert_eq!(grads.len(), m.net().params().len());
    }

    fn separable_dataset() -> PreferenceDataset {
        let mut d = PreferenceDataset::new();
        let good = seg_with_rewards(&[0.4, 0.5, 0.6]);
        let bad = seg_with_rewards(&[-0.4, -0.5, -0.6]);
        d.add(Arc::new(good), Arc::new(bad), crate::preference::PreferenceLabel::PreferA, LabelSource::Scripted);
        d
    }

    #[test]
    fn separable_pair_is_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = RewardLearnConfig {
            lambda: 0.0,
            epochs_per_iter: 200,
            hidden: vec![8],
            ..RewardLearnConfig::default()
        };
        let mut learner = RewardLearner::new(1, 1, cfg, &mut rng).unwrap();
        let stats = learner.update(&separable_dataset(), &[], &mut rng).unwrap();
        assert_eq!(stats.train_accuracy, 1.0);
        assert_eq!(stats.steps, 200);
    }

    fn run_update(lambda: f64, seed: u64) -> (RewardUpdateStats, RewardModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = RewardLearnConfig {
            lambda,
            epochs_per_iter: 3,
            hidden: vec![8],
            ..RewardLearnConfig::default()
        };
        let mut learner = RewardLearner::new(1, 1, cfg, &mut rng).unwrap();
        let recent = vec![seg_with_rewards(&[0.1, 0.2, 0.3]), seg_with_rewards(&[0.0, -0.3, 0.2])];
        let stats = learner.update(&separable_dataset(), &recent, &mut rng).unwrap();
        (stats, learner.model)
    }

    #[test]
    fn update_is_deterministic_and_regularizer_is_active() {
        let (s1, m1) = run_update(0.5, 3);
        let (s2, m2) = run_update(0.5, 3);
        assert_eq!(s1, s2);
        assert_eq!(m1, m2);
        let (s0, m0) = run_update(0.0, 3);
        assert_eq!(s0.loss_agent, 0.0);
        assert_ne!(m0, m1);
    }

    #[test]
    fn update_needs_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut learner = RewardLearner::new(1, 1, RewardLearnConfig::default(), &mut rng).unwrap();
        assert!(learner.update(&PreferenceDataset::new(), &[], &mut rng).is_err());
        assert!(RewardLearnConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
    }
}
