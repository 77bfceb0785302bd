//! Run configuration: one TOML file with top-level run settings followed by
//! one table per subsystem.
//!
//! ```toml
//! iterations = 30
//! episodes_per_iter = 10
//! pairs_per_iter = 20
//! seed = 0
//! output_dir = "runs/point"
//!
//! [env]
//! kind = "point_reach"
//!
//! [provider]
//! kind = "noisy"
//! flip_prob = 0.1
//!
//! [reward]
//! lambda = 0.1
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::{EnvKind, EnvSpec, TaskSpec, TrackedBody};
use crate::error::{Error, Result};
use crate::labeler::QueueConfig;
use crate::model::DEFAULT_BUFFER_CAPACITY;
use crate::preference::{TeacherConfig, VlmConfig};
use crate::reward::RewardLearnConfig;
use crate::sac::SacConfig;
use crate::sketch::{CameraModel, SketchStyle};

/// Flip probability used by the `noisy` provider when none is configured.
pub const DEFAULT_NOISY_FLIP: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    Scripted,
    FinalState,
    Noisy,
    Vlm,
    VlmScore,
    Human,
}

impl ProviderKind {
    pub const ALL: [ProviderKind; 6] = [
        Self::Scripted,
        Self::FinalState,
        Self::Noisy,
        Self::Vlm,
        Self::VlmScore,
        Self::Human,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Scripted => "scripted",
            Self::FinalState => "final-state",
            Self::Noisy => "noisy",
            Self::Vlm => "vlm",
            Self::VlmScore => "vlm-score",
            Self::Human => "human",
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown provider {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub kind: EnvKind,
    pub horizon: Option<usize>,
    pub gamma: Option<f64>,
    pub terminate_on_success: bool,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            kind: EnvKind::PointReach,
            horizon: None,
            gamma: None,
            terminate_on_success: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    pub delta_equal: f64,
    /// Unset: 0 for `scripted`/`final-state`, [`DEFAULT_NOISY_FLIP`] for `noisy`.
    pub flip_prob: Option<f64>,
    pub rng_seed: Option<u64>,
    /// How long a training run waits for each human label.
    pub human_timeout_secs: f64,
    pub queue: QueueConfig,
}

impl Default for ProviderSection {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Scripted,
            delta_equal: 0.0,
            flip_prob: None,
            rng_seed: None,
            human_timeout_secs: 3600.0,
            queue: QueueConfig::default(),
        }
    }
}

impl ProviderSection {
    pub fn teacher(&self, run_seed: u64) -> TeacherConfig {
        let default_flip = if self.kind == ProviderKind::Noisy {
            DEFAULT_NOISY_FLIP
        } else {
            0.0
        };
        TeacherConfig {
            delta_equal: self.delta_equal,
            flip_prob: self.flip_prob.unwrap_or(default_flip),
            rng_seed: self.rng_seed.unwrap_or(run_seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    /// Outer iterations `T`.
    pub iterations: usize,
    pub episodes_per_iter: usize,
    pub pairs_per_iter: usize,
    /// Unset: the full horizon.
    pub segment_len: Option<usize>,
    pub seed: u64,
    /// Evaluate on iteration 0, every `eval_every` iterations, and last.
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Random-policy episodes in the held-out misalignment pool.
    pub heldout_episodes: usize,
    pub heldout_pairs: usize,
    pub buffer_capacity: usize,
    pub output_dir: PathBuf,
    pub tracked_body: TrackedBody,
    /// Continue from the checkpoint a failed run left behind.
    pub resume_from: Option<PathBuf>,
    pub env: EnvSection,
    /// Unset: the environment's default task text.
    pub task: Option<String>,
    pub provider: ProviderSection,
    pub vlm: VlmConfig,
    pub reward: RewardLearnConfig,
    /// `gamma` is taken from the environment.
    pub sac: SacConfig,
    pub camera: CameraModel,
    pub style: SketchStyle,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            iterations: 30,
            episodes_per_iter: 10,
            pairs_per_iter: 20,
            segment_len: None,
            seed: 0,
            eval_every: 1,
            eval_episodes: 10,
            heldout_episodes: 20,
            heldout_pairs: 200,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
            output_dir: PathBuf::from("runs/default"),
            tracked_body: TrackedBody::Agent,
            resume_from: None,
            env: EnvSection::default(),
            task: None,
            provider: ProviderSection::default(),
            vlm: VlmConfig::default(),
            reward: RewardLearnConfig::default(),
            sac: SacConfig::default(),
            camera: CameraModel::oblique(),
            style: SketchStyle::default(),
        }
    }
}

impl HarnessConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn env_spec(&self) -> EnvSpec {
        let mut spec = EnvSpec::new(self.env.kind);
        if let Some(h) = self.env.horizon {
            spec.horizon = h;
        }
        if let Some(g) = self.env.gamma {
            spec.gamma = g;
        }
        spec.terminate_on_success = self.env.terminate_on_success;
        spec
    }

    pub fn task_spec(&self) -> Result<TaskSpec> {
        match &self.task {
            Some(text) => TaskSpec::new(text.clone()),
            None => Ok(TaskSpec::for_env(self.env.kind)),
        }
    }

    pub fn segment_len(&self) -> usize {
        self.segment_len.unwrap_or_else(|| self.env_spec().horizon)
    }

    /// SAC settings with the discount taken from the environment.
    pub fn sac_config(&self) -> SacConfig {
        SacConfig {
            gamma: self.env_spec().gamma,
            ..self.sac.clone()
        }
    }

    pub fn teacher(&self) -> TeacherConfig {
        self.provider.teacher(self.seed)
    }

    pub fn is_eval_iteration(&self, iteration: usize) -> bool {
        iteration == 0 || iteration + 1 == self.iterations || iteration % self.eval_every.max(1) == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.episodes_per_iter < 2 && self.provider.kind != ProviderKind::VlmScore {
            return Err(Error::Config("pairs need at least 2 episodes per iteration".into()));
        }
        if self.episodes_per_iter == 0 || self.eval_episodes == 0 {
            return Err(Error::Config("episode counts must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        if self.heldout_pairs == 0 || self.heldout_episodes + self.eval_episodes < 2 {
            return Err(Error::Config("held-out evaluation needs pairs and at least 2 episodes".into()));
        }
        let spec = self.env_spec();
        spec.validate()?;
        let seg = self.segment_len();
        if seg == 0 || seg > spec.horizon {
            return Err(Error::Config(format!("segment_len {seg} outside 1..={}", spec.horizon)));
        }
        if self.buffer_capacity < self.episodes_per_iter * spec.horizon {
            return Err(Error::Config("buffer_capacity must hold one iteration of episodes".into()));
        }
        self.task_spec()?;
        self.teacher().validate()?;
        if matches!(self.provider.kind, ProviderKind::Vlm | ProviderKind::VlmScore) {
            self.vlm.validate()?;
        }
        if self.provider.human_timeout_secs.is_nan() || self.provider.human_timeout_secs <= 0.0 {
            return Err(Error::Config("human_timeout_secs must be positive".into()));
        }
        self.reward.validate()?;
        self.sac_config().validate()?;
        self.camera.validate()?;
        self.style.validate()?;
        Ok(())
    }
}
