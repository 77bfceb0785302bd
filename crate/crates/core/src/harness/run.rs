//! The alternating training loop. Each iteration runs, in order: rollout,
//! query, reward update, relabel, policy update, evaluation.
//!
//! A labeler failure stops the run after writing `output_dir/resume/`, a
//! snapshot of the loop as it stood before the failed query phase. Setting
//! `resume_from` to that directory restarts the same iteration at the query
//! phase and appends to the existing metrics files.
//!
//! Resume directory layout:
//!
//! | file | contents |
//! |------|----------|
//! | `state.json` | iteration, step and episode counters, this iteration's episodes, last evaluation |
//! | `buffer.jsonl` | replay buffer, one transition per line |
//! | `dataset.json` | stored preferences and the discard count |
//! | `reward.json` | reward network, optimizer moments and settings |
//! | `sac.json` | actor, critics, targets, temperature and optimizer moments |

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::config::{HarnessConfig, ProviderKind};
use super::eval::{heldout_pairs, misalignment_from_returns};
use super::metrics::{MetricsRow, MetricsWriter};
use super::rollout::{
    derive_seed, random_policy, rollout_episode, stream_rng, summarize, uniform_action, Episode, SketchContext,
    Stream,
};
use crate::envs::{EnvSpec, TaskSpec};
use crate::error::{Error, Result};
use crate::labeler::{HumanProvider, LabelQueue};
use crate::model::{EpisodeId, ReplayBuffer, TrajectorySegment};
use crate::nn::save_mlp;
use crate::preference::{
    unix_seconds, ChatTransport, FinalStateTeacher, PairQuery, PreferenceDataset, PreferenceLabel,
    PreferenceProvider, ScriptedTeacher, VlmClient,
};
use crate::reward::{RewardLearner, RewardModel, RewardSnapshot, RewardUpdateStats};
use crate::sac::{train_policy, SacAgent, SacSnapshot, SacStats};
use crate::sketch::SketchedObservation;

pub const RESUME_FORMAT: &str = "prefrl-resume/1";
pub const RESUME_DIR: &str = "resume";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Rollout,
    Query,
    RewardUpdate,
    Relabel,
    TrainPolicy,
    Evaluate,
}

/// Hooks into the loop. All methods default to no-ops.
pub trait RunObserver {
    fn on_phase(&mut self, _iteration: usize, _phase: Phase) {}

    /// Called right after relabeling; `reward` is `None` in score mode.
    fn after_relabel(&mut self, _iteration: usize, _buffer: &ReplayBuffer, _reward: Option<&RewardModel>) -> Result<()> {
        Ok(())
    }

    fn on_row(&mut self, _row: &MetricsRow) {}
}

pub struct NoopObserver;

impl RunObserver for NoopObserver {}

/// Rates a single sketched episode in `[0, 1]`.
pub trait EpisodeScorer {
    fn score(&mut self, obs: &SketchedObservation, task: &TaskSpec) -> Result<f64>;
}

impl<T: ChatTransport> EpisodeScorer for VlmClient<T> {
    fn score(&mut self, obs: &SketchedObservation, task: &TaskSpec) -> Result<f64> {
        self.query_score(obs, task)
    }
}

pub enum Labeler<'a> {
    /// Pairwise preferences feeding the learned reward.
    Pairwise(&'a mut dyn PreferenceProvider),
    /// One score per episode, written as the reward of its last step.
    Score(&'a mut dyn EpisodeScorer),
}

/// Pairwise provider for `cfg.provider.kind`. Human labeling needs the
/// queue the labeler service reads from.
pub fn build_provider(cfg: &HarnessConfig, human_queue: Option<Arc<LabelQueue>>) -> Result<Box<dyn PreferenceProvider>> {
    Ok(match cfg.provider.kind {
        ProviderKind::Scripted | ProviderKind::Noisy => Box::new(ScriptedTeacher::new(cfg.teacher())?),
        ProviderKind::FinalState => Box::new(FinalStateTeacher::new(cfg.env_spec(), cfg.teacher())?),
        ProviderKind::Vlm => Box::new(VlmClient::http(cfg.vlm.clone())?),
        ProviderKind::Human => {
            let queue = human_queue.ok_or_else(|| Error::Config("human labeling needs a label queue".into()))?;
            Box::new(HumanProvider::new(
                queue,
                Duration::from_secs_f64(cfg.provider.human_timeout_secs),
            ))
        }
        ProviderKind::VlmScore => {
            return Err(Error::Config("vlm-score rates single episodes; use an episode scorer".into()));
        }
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub return_gt: f64,
    pub return_learned: f64,
    pub success_rate: f64,
    pub misalignment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LoopState {
    format: String,
    seed: u64,
    /// Iteration to run next; on resume, its rollout is already done.
    iteration: usize,
    env_steps: u64,
    next_episode: u64,
    episodes: Vec<Episode>,
    last_eval: EvalSummary,
    /// Phases entered since the run began.
    phase_counter: u64,
    /// Score mode: last step index and score per episode.
    scores: BTreeMap<u64, (usize, f64)>,
}

pub struct RunOutcome {
    pub rows: Vec<MetricsRow>,
    /// `None` in score mode.
    pub reward: Option<RewardLearner>,
    pub agent: SacAgent,
    pub dataset: PreferenceDataset,
    pub buffer: ReplayBuffer,
    pub output_dir: PathBuf,
}

struct QueryResult {
    queried: usize,
    stored: usize,
    discarded: usize,
    pref_accuracy: f64,
    /// Score mode only.
    score_misalignment: Option<f64>,
}

struct Loop<'c> {
    cfg: &'c HarnessConfig,
    spec: EnvSpec,
    task: TaskSpec,
    ctx: SketchContext,
    st: LoopState,
    buffer: ReplayBuffer,
    dataset: PreferenceDataset,
    learner: RewardLearner,
    agent: SacAgent,
    heldout: Vec<Episode>,
}

/// Runs `cfg.iterations` iterations, writing metrics to `cfg.output_dir`
/// after each and parameter checkpoints at the end.
pub fn run_varp(cfg: &HarnessConfig, mut labeler: Labeler<'_>, observer: &mut dyn RunObserver) -> Result<RunOutcome> {
    cfg.validate()?;
    let score_mode = matches!(labeler, Labeler::Score(_));
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;

    let mut lp = match &cfg.resume_from {
        Some(dir) => Loop::resume(cfg, dir)?,
        None => Loop::fresh(cfg)?,
    };
    let resumed_at = cfg.resume_from.as_ref().map(|_| lp.st.iteration);
    let mut writer = MetricsWriter::create(&out, resumed_at.is_some())?;
    let mut rows = Vec::new();

    for it in lp.st.iteration..cfg.iterations {
        lp.st.iteration = it;
        if resumed_at != Some(it) {
            lp.enter(observer, it, Phase::Rollout);
            lp.rollout(it)?;
        }
        let collected: usize = lp.st.episodes.iter().map(Episode::len).sum();

        lp.enter(observer, it, Phase::Query);
        let query = match &mut labeler {
            Labeler::Pairwise(p) => lp.query_pairs(it, &mut **p),
            Labeler::Score(s) => lp.score_episodes(&mut **s),
        };
        let query = match query {
            Ok(q) => q,
            Err(cause) => {
                let resume_dir = out.join(RESUME_DIR);
                // Resume re-enters the query phase.
                lp.st.phase_counter -= 1;
                lp.save_resume(&resume_dir)?;
                return Err(Error::RunAborted {
                    iteration: it,
                    resume_dir,
                    cause: Box::new(cause),
                });
            }
        };

        let seq_rewardupdate = lp.enter(observer, it, Phase::RewardUpdate);
        let reward_stats = if !score_mode && !lp.dataset.is_empty() {
            let recent: Vec<TrajectorySegment> = lp.st.episodes.iter().map(Episode::segment).collect::<Result<_>>()?;
            lp.learner.update(&lp.dataset, &recent, &mut stream_rng(cfg.seed, it as u64, Stream::Reward))?
        } else {
            RewardUpdateStats::default()
        };

        let seq_relabel = lp.enter(observer, it, Phase::Relabel);
        if score_mode {
            let scores = &lp.st.scores;
            lp.buffer.relabel_with(|id, step, _| match scores.get(&id.0) {
                Some(&(last, s)) if step == last => s,
                _ => 0.0,
            });
            observer.after_relabel(it, &lp.buffer, None)?;
        } else {
            lp.buffer.relabel_all(&lp.learner.model)?;
            observer.after_relabel(it, &lp.buffer, Some(&lp.learner.model))?;
        }

        let seq_trainpolicy = lp.enter(observer, it, Phase::TrainPolicy);
        let sac_stats = if lp.st.env_steps >= cfg.sac.warmup_steps as u64 {
            train_policy(
                &mut lp.agent,
                &lp.buffer,
                collected,
                &mut stream_rng(cfg.seed, it as u64, Stream::Policy),
            )?
        } else {
            SacStats {
                alpha: lp.agent.alpha(),
                ..SacStats::default()
            }
        };

        let evaluated = cfg.is_eval_iteration(it);
        if evaluated {
            lp.enter(observer, it, Phase::Evaluate);
            lp.evaluate(score_mode)?;
        }
        if let Some(m) = query.score_misalignment {
            lp.st.last_eval.misalignment = m;
        }

        let seq = [seq_rewardupdate, seq_relabel, seq_trainpolicy];
        let row = lp.row(it, &query, &reward_stats, &sac_stats, evaluated, seq);
        writer.write(&row)?;
        observer.on_row(&row);
        rows.push(row);
    }
    lp.st.iteration = cfg.iterations;

    let ckpt = out.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ckpt)?;
    if !score_mode {
        save_mlp(lp.learner.model.net(), ckpt.join("reward.json"))?;
    }
    save_mlp(&lp.agent.actor, ckpt.join("actor.json"))?;
    save_mlp(&lp.agent.critics[0], ckpt.join("critic1.json"))?;
    save_mlp(&lp.agent.critics[1], ckpt.join("critic2.json"))?;

    Ok(RunOutcome {
        rows,
        reward: (!score_mode).then_some(lp.learner),
        agent: lp.agent,
        dataset: lp.dataset,
        buffer: lp.buffer,
        output_dir: out,
    })
}

fn heldout_episodes(cfg: &HarnessConfig, spec: &EnvSpec) -> Result<Vec<Episode>> {
    (0..cfg.heldout_episodes as u64)
        .map(|k| {
            let mut policy = random_policy(spec.action_dim, stream_rng(cfg.seed, k, Stream::Heldout));
            let reset = derive_seed(cfg.seed, k | 1 << 40, Stream::Heldout);
            rollout_episode(spec, reset, EpisodeId(u64::MAX - k), &mut policy)
        })
        .collect()
}

impl<'c> Loop<'c> {
    fn base(
        cfg: &'c HarnessConfig,
        st: LoopState,
        buffer: ReplayBuffer,
        dataset: PreferenceDataset,
        learner: RewardLearner,
        agent: SacAgent,
    ) -> Result<Self> {
        let spec = cfg.env_spec();
        Ok(Self {
            cfg,
            spec,
            task: cfg.task_spec()?,
            ctx: SketchContext {
                spec,
                camera: cfg.camera.clone(),
                style: cfg.style.clone(),
                body: cfg.tracked_body,
            },
            st,
            buffer,
            dataset,
            learner,
            agent,
            heldout: heldout_episodes(cfg, &spec)?,
        })
    }

    fn fresh(cfg: &'c HarnessConfig) -> Result<Self> {
        let spec = cfg.env_spec();
        let mut rng = stream_rng(cfg.seed, 0, Stream::Init);
        let learner = RewardLearner::new(spec.state_dim, spec.action_dim, cfg.reward.clone(), &mut rng)?;
        let agent = SacAgent::new(spec.state_dim, spec.action_dim, cfg.sac_config(), &mut rng)?;
        let st = LoopState {
            format: RESUME_FORMAT.into(),
            seed: cfg.seed,
            iteration: 0,
            env_steps: 0,
            next_episode: 0,
            episodes: Vec::new(),
            last_eval: EvalSummary::default(),
            phase_counter: 0,
            scores: BTreeMap::new(),
        };
        Self::base(
            cfg,
            st,
            ReplayBuffer::new(cfg.buffer_capacity)?,
            PreferenceDataset::new(),
            learner,
            agent,
        )
    }

    fn resume(cfg: &'c HarnessConfig, dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<BufReader<File>> { Ok(BufReader::new(File::open(dir.join(name))?)) };
        let st: LoopState = serde_json::from_reader(read("state.json")?)?;
        if st.format != RESUME_FORMAT {
            return Err(Error::Checkpoint(format!("expected {RESUME_FORMAT}, found {}", st.format)));
        }
        if st.seed != cfg.seed {
            return Err(Error::Config(format!("resume state has seed {}, config has {}", st.seed, cfg.seed)));
        }
        if st.iteration >= cfg.iterations {
            return Err(Error::Config(format!(
                "resume state is at iteration {} of {}",
                st.iteration, cfg.iterations
            )));
        }
        let buffer = ReplayBuffer::read_snapshot(read("buffer.jsonl")?, cfg.buffer_capacity)?;
        let dataset: PreferenceDataset = serde_json::from_reader(read("dataset.json")?)?;
        let reward: RewardSnapshot = serde_json::from_reader(read("reward.json")?)?;
        let sac: SacSnapshot = serde_json::from_reader(read("sac.json")?)?;
        Self::base(
            cfg,
            st,
            buffer,
            dataset,
            RewardLearner::from_snapshot(&reward)?,
            SacAgent::from_snapshot(&sac)?,
        )
    }

    fn save_resume(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let write_json = |name: &str, value: &dyn erased::Json| -> Result<()> {
            let mut w = BufWriter::new(File::create(dir.join(name))?);
            value.write_to(&mut w)?;
            w.flush()?;
            Ok(())
        };
        write_json("state.json", &self.st)?;
        write_json("dataset.json", &self.dataset)?;
        write_json("reward.json", &self.learner.snapshot())?;
        write_json("sac.json", &self.agent.snapshot())?;
        let mut w = BufWriter::new(File::create(dir.join("buffer.jsonl"))?);
        self.buffer.write_snapshot(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn enter(&mut self, observer: &mut dyn RunObserver, it: usize, phase: Phase) -> u64 {
        self.st.phase_counter += 1;
        observer.on_phase(it, phase);
        self.st.phase_counter
    }

    fn rollout(&mut self, it: usize) -> Result<()> {
        let cfg = self.cfg;
        let mut rng = stream_rng(cfg.seed, it as u64, Stream::Rollout);
        let mut episodes = Vec::with_capacity(cfg.episodes_per_iter);
        for _ in 0..cfg.episodes_per_iter {
            let id = EpisodeId(self.st.next_episode);
            self.st.next_episode += 1;
            let warm = self.st.env_steps < cfg.sac.warmup_steps as u64;
            let agent = &self.agent;
            let dim = self.spec.action_dim;
            let rng = &mut rng;
            let mut policy = |s: &_| {
                if warm {
                    Ok(uniform_action(dim, rng))
                } else {
                    Ok(agent.sample_action(s, rng)?.0)
                }
            };
            let ep = rollout_episode(&self.spec, derive_seed(cfg.seed, id.0, Stream::Reset), id, &mut policy)?;
            for t in &ep.transitions {
                self.buffer.push(t.clone(), id);
            }
            self.st.env_steps += ep.len() as u64;
            episodes.push(ep);
        }
        self.st.episodes = episodes;
        Ok(())
    }

    /// Labels every sampled pair before touching the dataset, so a failure
    /// leaves it as it was.
    fn query_pairs(&mut self, it: usize, provider: &mut dyn PreferenceProvider) -> Result<QueryResult> {
        let cfg = self.cfg;
        provider.reseed(derive_seed(cfg.seed, it as u64, Stream::Teacher));
        let pairs = match self.buffer.sample_segment_pairs(
            cfg.pairs_per_iter,
            cfg.segment_len(),
            derive_seed(cfg.seed, it as u64, Stream::Pairs),
        ) {
            Ok(p) => p,
            Err(Error::InsufficientData(_)) => Vec::new(),
            Err(e) => return Err(e),
        };
        let mut labeled = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            let sketches = if provider.needs_sketches() {
                Some((self.ctx.sketch(&a)?, self.ctx.sketch(&b)?))
            } else {
                None
            };
            let q = PairQuery {
                seg_a: &a,
                seg_b: &b,
                obs_a: sketches.as_ref().map(|s| &s.0),
                obs_b: sketches.as_ref().map(|s| &s.1),
                task: &self.task,
            };
            let label = provider.label(&q)?;
            labeled.push((a, b, label));
        }
        let source = provider.source();
        let now = unix_seconds();
        let mut res = QueryResult {
            queried: labeled.len(),
            stored: 0,
            discarded: 0,
            pref_accuracy: 0.0,
            score_misalignment: None,
        };
        let mut agree = 0usize;
        for (a, b, label) in labeled {
            let gap = crate::model::segment_return_gt(&a) - crate::model::segment_return_gt(&b);
            if self.dataset.add_at(Arc::new(a), Arc::new(b), label, source, now) {
                res.stored += 1;
                if (label == PreferenceLabel::PreferA && gap > 0.0) || (label == PreferenceLabel::PreferB && gap < 0.0) {
                    agree += 1;
                }
            } else {
                res.discarded += 1;
            }
        }
        if res.stored > 0 {
            res.pref_accuracy = agree as f64 / res.stored as f64;
        }
        Ok(res)
    }

    fn score_episodes(&mut self, scorer: &mut dyn EpisodeScorer) -> Result<QueryResult> {
        let mut scored = Vec::with_capacity(self.st.episodes.len());
        for ep in &self.st.episodes {
            let obs = self.ctx.sketch(&ep.segment()?)?;
            scored.push((ep.id, ep.len() - 1, scorer.score(&obs, &self.task)?, ep.return_gt));
        }
        let mut returns = Vec::new();
        for i in 0..scored.len() {
            for j in i + 1..scored.len() {
                if scored[i].3 != scored[j].3 {
                    returns.push((scored[i].2, scored[j].2, scored[i].3, scored[j].3));
                }
            }
        }
        let misalignment = if returns.is_empty() {
            0.0
        } else {
            misalignment_from_returns(&returns)?
        };
        for &(id, last, score, _) in &scored {
            self.st.scores.insert(id.0, (last, score));
        }
        Ok(QueryResult {
            queried: scored.len(),
            stored: scored.len(),
            discarded: 0,
            pref_accuracy: if returns.is_empty() { 0.0 } else { 1.0 - misalignment },
            score_misalignment: Some(misalignment),
        })
    }

    fn evaluate(&mut self, score_mode: bool) -> Result<()> {
        let cfg = self.cfg;
        let eval: Vec<Episode> = (0..cfg.eval_episodes as u64)
            .map(|k| {
                let agent = &self.agent;
                let mut policy = |s: &_| Ok(agent.deterministic_action(s)?.0);
                rollout_episode(
                    &self.spec,
                    derive_seed(cfg.seed, k, Stream::EvalReset),
                    EpisodeId(u64::MAX - (1 << 32) - k),
                    &mut policy,
                )
            })
            .collect::<Result<_>>()?;
        let (ret, succ) = summarize(&eval);
        self.st.last_eval.return_gt = ret;
        self.st.last_eval.success_rate = succ;
        if score_mode {
            let scores: Vec<f64> = self
                .st
                .episodes
                .iter()
                .filter_map(|e| self.st.scores.get(&e.id.0).map(|s| s.1))
                .collect();
            self.st.last_eval.return_learned = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
            return Ok(());
        }
        let model = &self.learner.model;
        let learned: Vec<f64> = eval.iter().map(|e| e.return_learned(model)).collect::<Result<_>>()?;
        self.st.last_eval.return_learned = learned.iter().sum::<f64>() / learned.len() as f64;

        let pool: Vec<Episode> = self.heldout.iter().cloned().chain(eval).collect();
        let pool_learned: Vec<f64> = pool.iter().map(|e| e.return_learned(model)).collect::<Result<_>>()?;
        let idx = heldout_pairs(&pool, cfg.heldout_pairs, cfg.seed)?;
        let returns: Vec<(f64, f64, f64, f64)> = idx
            .iter()
            .map(|&(i, j)| (pool_learned[i], pool_learned[j], pool[i].return_gt, pool[j].return_gt))
            .collect();
        self.st.last_eval.misalignment = misalignment_from_returns(&returns)?;
        Ok(())
    }

    fn row(
        &self,
        it: usize,
        q: &QueryResult,
        r: &RewardUpdateStats,
        s: &SacStats,
        evaluated: bool,
        seq: [u64; 3],
    ) -> MetricsRow {
        let mut row = MetricsRow::new(it as u64, self.st.env_steps);
        let e = &self.st.last_eval;
        row.episode_return_gt = e.return_gt;
        row.episode_return_learned = e.return_learned;
        row.success_rate = e.success_rate;
        row.misalignment = e.misalignment;
        row.pref_accuracy = q.pref_accuracy;
        let (train_ret, train_succ) = summarize(&self.st.episodes);
        let values = [
            ("loss_vlm", r.loss_vlm),
            ("loss_agent", r.loss_agent),
            ("loss_total", r.loss_total),
            ("reward_train_accuracy", r.train_accuracy),
            ("critic_loss", s.critic_loss),
            ("actor_loss", s.actor_loss),
            ("alpha", s.alpha),
            ("entropy", s.entropy),
            ("queried", q.queried as f64),
            ("stored", q.stored as f64),
            ("discarded", q.discarded as f64),
            ("dataset_size", self.dataset.len() as f64),
            ("train_return_gt", train_ret),
            ("train_success_rate", train_succ),
            ("evaluated", if evaluated { 1.0 } else { 0.0 }),
            ("phase_reward_update", seq[0] as f64),
            ("phase_relabel", seq[1] as f64),
            ("phase_train_policy", seq[2] as f64),
        ];
        for (k, v) in values {
            row.set(k, v);
        }
        row.timestamp = unix_seconds();
        row
    }
}

mod erased {
    use std::io::Write;

    use serde::Serialize;

    use crate::error::Result;

    /// Object-safe pretty JSON writer.
    pub trait Json {
        fn write_to(&self, w: &mut dyn Write) -> Result<()>;
    }

    impl<T: Serialize> Json for T {
        fn write_to(&self, w: &mut dyn Write) -> Result<()> {
            serde_json::to_writer(w, self)?;
            Ok(())
        }
    }
}
