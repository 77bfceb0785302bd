//! Alternating reward/policy training, evaluation protocols and metrics.

pub mod config;
pub mod eval;
pub mod metrics;
pub mod rollout;
pub mod run;

pub use config::{EnvSection, HarnessConfig, ProviderKind, ProviderSection, DEFAULT_NOISY_FLIP};
pub use metrics::{MetricsRow, MetricsWriter, LOSS_KEYS};
pub use rollout::{
    derive_seed, random_policy_return, rollout_episode, stream_rng, summarize, Episode, SketchContext, Stream,
};
pub use eval::{
    eval_misalignment, eval_preference_accuracy, misalignment_from_returns, near_identical_final_state_pairs,
    random_policy_pairs, BinAccuracy, ProviderAccuracy, SegmentPair, DEFAULT_GAP_BINS,
};
pub use run::{
    build_provider, run_varp, EpisodeScorer, EvalSummary, Labeler, NoopObserver, Phase, RunObserver, RunOutcome,
    CHECKPOINT_DIR, RESUME_DIR,
};
