//! Soft actor-critic on the learned reward.
//!
//! The actor outputs `[mean, log_std]` per action dimension; actions are
//! `tanh(mean + std·ε)`. Loss builders take their Gaussian noise `ε` as an
//! explicit matrix so they are deterministic functions of the parameters.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::model::{ActionVec, ReplayBuffer, StateVec, TrainingBatch};
use crate::nn::{Activation, Adam, AdamConfig, Mlp, MlpCheckpoint, MlpVars, OutputActivation, ParamTensor};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const TANH_EPS: f64 = 1e-6;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub gamma: f64,
    pub polyak_tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// Defaults to `−action_dim` when unset.
    pub target_entropy: Option<f64>,
    /// Gradient rounds per outer iteration; unset means one per env step
    /// collected in that iteration.
    pub updates_per_iter: Option<usize>,
    pub hidden: Vec<usize>,
    pub init_log_alpha: f64,
    /// Uniform-random actions for this many initial env steps.
    pub warmup_steps: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            polyak_tau: 0.005,
            lr: 3e-4,
            batch_size: 256,
            target_entropy: None,
            updates_per_iter: None,
            hidden: vec![64, 64],
            init_log_alpha: (0.1f64).ln(),
            warmup_steps: 1000,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !(self.polyak_tau > 0.0 && self.polyak_tau <= 1.0) {
            return Err(Error::Config(format!("polyak_tau {} outside (0, 1]", self.polyak_tau)));
        }
        AdamConfig::with_lr(self.lr).validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SacStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
    pub updates: usize,
}

#[derive(Clone, Debug)]
pub struct SacAgent {
    pub actor: Mlp<f64>,
    pub critics: [Mlp<f64>; 2],
    pub targets: [Mlp<f64>; 2],
    /// Single `1×1` block holding `ln α`.
    pub log_alpha: Vec<ParamTensor<f64>>,
    adam_actor: Adam<f64>,
    adam_critics: [Adam<f64>; 2],
    adam_alpha: Adam<f64>,
    pub cfg: SacConfig,
    state_dim: usize,
    action_dim: usize,
}

/// Serializable copy of every parameter and optimizer moment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SacSnapshot {
    pub actor: MlpCheckpoint,
    pub critics: [MlpCheckpoint; 2],
    pub targets: [MlpCheckpoint; 2],
    pub log_alpha: f64,
    pub adam_actor: Adam<f64>,
    pub adam_critics: [Adam<f64>; 2],
    pub adam_alpha: Adam<f64>,
    pub cfg: SacConfig,
    pub state_dim: usize,
    pub action_dim: usize,
}

/// Recorded squashed-Gaussian sample: actions `n×m` and log-probs `n×1`.
pub fn actor_sample(
    tape: &mut Tape<f64>,
    actor: &Mlp<f64>,
    vars: &MlpVars,
    states: Var,
    noise: &Matrix<f64>,
) -> Result<(Var, Var)> {
    let m = noise.cols();
    if actor.output_dim() != 2 * m {
        return Err(Error::DimensionMismatch {
            expected: actor.output_dim() / 2,
            actual: m,
        });
    }
    let out = actor.forward(tape, vars, states)?;
    let mean = tape.slice_cols(out, 0, m)?;
    let raw = tape.slice_cols(out, m, 2 * m)?;
    let log_std = tape.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
    let std = tape.exp(log_std);
    let eps = tape.constant(noise.clone());
    let spread = tape.mul(std, eps)?;
    let u = tape.add(mean, spread)?;
    let action = tape.tanh(u);
    // log N(u; mean, std) = −ε²/2 − log σ − ½ln 2π per dimension.
    let gauss_const: Vec<f64> = (0..noise.rows())
        .map(|r| noise.row_slice(r).iter().map(|e| -0.5 * e * e - HALF_LN_2PI).sum())
        .collect();
    let gauss_const = tape.constant(Matrix::from_vec(noise.rows(), 1, gauss_const)?);
    let neg_log_std = tape.neg(log_std);
    let ls_sum = tape.row_sum(neg_log_std);
    let gauss = tape.add(ls_sum, gauss_const)?;
    let a2 = tape.square(action);
    let one_minus = tape.neg(a2);
    let one_minus = tape.add_scalar(one_minus, 1.0 + TANH_EPS);
    let log_jac = tape.ln(one_minus);
    let log_jac = tape.row_sum(log_jac);
    let log_prob = tape.sub(gauss, log_jac)?;
    Ok((action, log_prob))
}

fn q_min(
    tape: &mut Tape<f64>,
    critics: &[Mlp<f64>; 2],
    vars: &[MlpVars; 2],
    states: Var,
    actions: Var,
) -> Result<Var> {
    let sa = tape.concat_cols(&[states, actions])?;
    let q1 = critics[0].forward(tape, &vars[0], sa)?;
    let q2 = critics[1].forward(tape, &vars[1], sa)?;
    tape.min(q1, q2)
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix<f64> {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, cfg: SacConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let sizes = |input: usize, output: usize| -> Vec<usize> {
            std::iter::once(input)
                .chain(cfg.hidden.iter().copied())
                .chain(std::iter::once(output))
                .collect()
        };
        let actor = Mlp::new(&sizes(state_dim, 2 * action_dim), Activation::Relu, OutputActivation::None, rng)?;
        let c1 = Mlp::new(&sizes(state_dim + action_dim, 1), Activation::Relu, OutputActivation::None, rng)?;
        let c2 = Mlp::new(&sizes(state_dim + action_dim, 1), Activation::Relu, OutputActivation::None, rng)?;
        Self::from_parts(actor, [c1, c2], cfg, state_dim, action_dim)
    }

    /// Builds an agent around given networks; targets start as copies.
    pub fn from_parts(
        actor: Mlp<f64>,
        critics: [Mlp<f64>; 2],
        cfg: SacConfig,
        state_dim: usize,
        action_dim: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        if actor.input_dim() != state_dim || actor.output_dim() != 2 * action_dim {
            return Err(Error::InvalidArgument("actor must map state to [mean, log_std]".into()));
        }
        for c in &critics {
            if c.input_dim() != state_dim + action_dim || c.output_dim() != 1 {
                return Err(Error::InvalidArgument("critics must map (state, action) to one value".into()));
            }
        }
        let adam = AdamConfig::with_lr(cfg.lr);
        let log_alpha = vec![ParamTensor::from_values(1, 1, vec![cfg.init_log_alpha])?];
        Ok(Self {
            adam_actor: Adam::new(adam, actor.params())?,
            adam_critics: [Adam::new(adam, critics[0].params())?, Adam::new(adam, critics[1].params())?],
            adam_alpha: Adam::new(adam, &log_alpha)?,
            targets: critics.clone(),
            actor,
            critics,
            log_alpha,
            cfg,
            state_dim,
            action_dim,
        })
    }

    pub fn snapshot(&self) -> SacSnapshot {
        SacSnapshot {
            actor: MlpCheckpoint::from_mlp(&self.actor),
            critics: [MlpCheckpoint::from_mlp(&self.critics[0]), MlpCheckpoint::from_mlp(&self.critics[1])],
            targets: [MlpCheckpoint::from_mlp(&self.targets[0]), MlpCheckpoint::from_mlp(&self.targets[1])],
            log_alpha: self.log_alpha[0].values[0],
            adam_actor: self.adam_actor.clone(),
            adam_critics: self.adam_critics.clone(),
            adam_alpha: self.adam_alpha.clone(),
            cfg: self.cfg.clone(),
            state_dim: self.state_dim,
            action_dim: self.action_dim,
        }
    }

    pub fn from_snapshot(s: &SacSnapshot) -> Result<Self> {
        let mut agent = Self::from_parts(
            s.actor.to_mlp()?,
            [s.critics[0].to_mlp()?, s.critics[1].to_mlp()?],
            s.cfg.clone(),
            s.state_dim,
            s.action_dim,
        )?;
        agent.targets = [s.targets[0].to_mlp()?, s.targets[1].to_mlp()?];
        for (t, c) in agent.targets.iter().zip(&agent.critics) {
            if t.layer_sizes() != c.layer_sizes() {
                return Err(Error::Checkpoint("target and critic shapes differ".into()));
            }
        }
        agent.log_alpha[0].values[0] = s.log_alpha;
        agent.adam_actor = s.adam_actor.clone();
        agent.adam_critics = s.adam_critics.clone();
        agent.adam_alpha = s.adam_alpha.clone();
        Ok(agent)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha[0].values[0].exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.cfg.target_entropy.unwrap_or(-(self.action_dim as f64))
    }

    /// Squashed actions and log-probs for a batch of states, no gradients.
    pub fn sample_with_noise(&self, states: &Matrix<f64>, noise: &Matrix<f64>) -> Result<(Matrix<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let vars = self.actor.bind_frozen(&mut tape);
        let s = tape.constant(states.clone());
        let (a, lp) = actor_sample(&mut tape, &self.actor, &vars, s, noise)?;
        Ok((tape.value(a).clone(), tape.value(lp).data().to_vec()))
    }

    /// One stochastic action with its log-probability.
    pub fn sample_action<R: Rng + ?Sized>(&self, s: &StateVec, rng: &mut R) -> Result<(ActionVec, f64)> {
        let noise = standard_normal_matrix(1, self.action_dim, rng);
        self.act_with_noise(s, &noise)
    }

    /// Action at the mean (`ε = 0`).
    pub fn deterministic_action(&self, s: &StateVec) -> Result<(ActionVec, f64)> {
        self.act_with_noise(s, &Matrix::zeros(1, self.action_dim))
    }

    fn act_with_noise(&self, s: &StateVec, noise: &Matrix<f64>) -> Result<(ActionVec, f64)> {
        let (a, lp) = self.sample_with_noise(&Matrix::row(s.as_slice()), noise)?;
        // tanh saturates to ±1 in floating point for large |u|; keep actions
        // strictly inside the open box.
        let inside = 1.0 - 1e-12;
        let vals = a.data().iter().map(|v| v.clamp(-inside, inside)).collect();
        Ok((ActionVec::new(vals)?, lp[0]))
    }

    /// Bellman targets `r + γ(1 − d)(min Q'(s', a') − α log π(a'|s'))`.
    pub fn critic_targets(&self, batch: &TrainingBatch, next_noise: &Matrix<f64>) -> Result<Vec<f64>> {
        let (a_next, logp_next) = self.sample_with_noise(&batch.next_states, next_noise)?;
        let sa = Matrix::concat_cols(&[&batch.next_states, &a_next]);
        let q1 = self.targets[0].predict(&sa)?;
        let q2 = self.targets[1].predict(&sa)?;
        let alpha = self.alpha();
        Ok((0..batch.len())
            .map(|i| {
                let q = q1.data()[i].min(q2.data()[i]);
                let cont = 1.0 - batch.dones[i];
                if cont == 0.0 || self.cfg.gamma == 0.0 {
                    batch.rewards[i]
                } else {
                    batch.rewards[i] + self.cfg.gamma * cont * (q - alpha * logp_next[i])
                }
            })
            .collect())
    }

    /// Recorded squared-error loss of critic `k` against fixed `targets`.
    pub fn critic_loss(
        &self,
        tape: &mut Tape<f64>,
        k: usize,
        vars: &MlpVars,
        batch: &TrainingBatch,
        targets: &[f64],
    ) -> Result<Var> {
        let sa = tape.constant(Matrix::concat_cols(&[&batch.states, &batch.actions]));
        let q = self.critics[k].forward(tape, vars, sa)?;
        let y = tape.constant(Matrix::from_vec(targets.len(), 1, targets.to_vec())?);
        let d = tape.sub(q, y)?;
        let d2 = tape.square(d);
        Ok(tape.mean(d2))
    }

    /// Both critics regress on the shared targets. Returns the mean loss.
    pub fn critic_update(&mut self, batch: &TrainingBatch, next_noise: &Matrix<f64>) -> Result<f64> {
        let targets = self.critic_targets(batch, next_noise)?;
        let mut total = 0.0;
        for k in 0..2 {
            let mut tape = Tape::new();
            let vars = self.critics[k].bind(&mut tape);
            let loss = self.critic_loss(&mut tape, k, &vars, batch, &targets)?;
            total += tape.scalar_value(loss);
            let grads = tape.backward(loss)?;
            self.critics[k].accumulate_grads(&grads, &vars);
            self.adam_critics[k].step(self.critics[k].params_mut());
        }
        Ok(total / 2.0)
    }

    /// Recorded `mean(α log π(a|s) − min Q(s, a))` with frozen critics.
    /// Returns the loss and the per-row log-probs.
    pub fn actor_loss(
        &self,
        tape: &mut Tape<f64>,
        vars: &MlpVars,
        states: &Matrix<f64>,
        noise: &Matrix<f64>,
    ) -> Result<(Var, Var)> {
        let s = tape.constant(states.clone());
        let (a, logp) = actor_sample(tape, &self.actor, vars, s, noise)?;
        let cv = [self.critics[0].bind_frozen(tape), self.critics[1].bind_frozen(tape)];
        let q = q_min(tape, &self.critics, &cv, s, a)?;
        let weighted = tape.scale(logp, self.alpha());
        let diff = tape.sub(weighted, q)?;
        Ok((tape.mean(diff), logp))
    }

    /// Returns the actor loss and the batch log-probs.
    pub fn actor_update(&mut self, batch: &TrainingBatch, noise: &Matrix<f64>) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let vars = self.actor.bind(&mut tape);
        let (loss, logp) = self.actor_loss(&mut tape, &vars, &batch.states, noise)?;
        let value = tape.scalar_value(loss);
        let logp = tape.value(logp).data().to_vec();
        let grads = tape.backward(loss)?;
        self.actor.accumulate_grads(&grads, &vars);
        self.adam_actor.step(self.actor.params_mut());
        Ok((value, logp))
    }

    /// Gradient of `−ln α · mean(log π + target_entropy)` with respect to `ln α`.
    pub fn alpha_gradient(&self, log_probs: &[f64]) -> f64 {
        if log_probs.is_empty() {
            return 0.0;
        }
        let h = self.target_entropy();
        -log_probs.iter().map(|lp| lp + h).sum::<f64>() / log_probs.len() as f64
    }

    pub fn alpha_update(&mut self, log_probs: &[f64]) {
        self.log_alpha[0].grad[0] = self.alpha_gradient(log_probs);
        self.adam_alpha.step(&mut self.log_alpha);
    }

    pub fn polyak_update(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidArgument(format!("polyak tau {tau} outside (0, 1]")));
        }
        for k in 0..2 {
            self.targets[k].soft_update_from(&self.critics[k], tau);
        }
        Ok(())
    }

    /// `updates` rounds of critic, actor, temperature and target updates on
    /// batches from `buffer`.
    pub fn train<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, updates: usize, rng: &mut R) -> Result<SacStats> {
        let mut stats = SacStats::default();
        if updates == 0 {
            stats.alpha = self.alpha();
            return Ok(stats);
        }
        if buffer.is_empty() {
            return Err(Error::InsufficientData("replay buffer is empty".into()));
        }
        let (n, m) = (self.cfg.batch_size, self.action_dim);
        for _ in 0..updates {
            let batch = buffer.sample_batch(n, rng)?;
            let next_noise = standard_normal_matrix(n, m, rng);
            let noise = standard_normal_matrix(n, m, rng);
            stats.critic_loss += self.critic_update(&batch, &next_noise)?;
            let (actor_loss, logp) = self.actor_update(&batch, &noise)?;
            stats.actor_loss += actor_loss;
            stats.entropy += -logp.iter().sum::<f64>() / logp.len() as f64;
            self.alpha_update(&logp);
            self.polyak_update(self.cfg.polyak_tau)?;
            stats.updates += 1;
        }
        let k = stats.updates as f64;
        stats.critic_loss /= k;
        stats.actor_loss /= k;
        stats.entropy /= k;
        stats.alpha = self.alpha();
        Ok(stats)
    }
}

/// One policy phase: `updates_per_iter` rounds, or `env_steps_collected`
/// when that is unset.
pub fn train_policy<R: Rng + ?Sized>(
    agent: &mut SacAgent,
    buffer: &ReplayBuffer,
    env_steps_collected: usize,
    rng: &mut R,
) -> Result<SacStats> {
    let updates = agent.cfg.updates_per_iter.unwrap_or(env_steps_collected);
    agent.train(buffer, updates, rng)
}
