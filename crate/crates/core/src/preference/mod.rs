//! Preference labels and the interchangeable providers that produce them.

mod dataset;
mod label;
mod teacher;
mod vlm;

pub use dataset::{unix_seconds, PreferenceDataset, PreferenceRecord};
pub use label::{parse_vlm_label, parse_vlm_score, LabelSource, PreferenceLabel};
pub use teacher::{label_from_gap, FinalStateTeacher, ScriptedTeacher, TeacherConfig};
pub use vlm::{
    is_loopback_url, response_text, ChatRequest, ChatTransport, ContentPart, HttpTransport, VlmClient, VlmConfig,
    VlmOutcome, DEFAULT_ANALYSIS_TEMPLATE, DEFAULT_API_KEY_ENV, DEFAULT_LABELING_TEMPLATE, DEFAULT_SCORE_TEMPLATE,
};

use crate::envs::TaskSpec;
use crate::error::{Error, Result};
use crate::model::TrajectorySegment;
use crate::sketch::SketchedObservation;

/// Everything a labeler may look at for one pair.
#[derive(Clone, Copy, Debug)]
pub struct PairQuery<'a> {
    pub seg_a: &'a TrajectorySegment,
    pub seg_b: &'a TrajectorySegment,
    pub obs_a: Option<&'a SketchedObservation>,
    pub obs_b: Option<&'a SketchedObservation>,
    pub task: &'a TaskSpec,
}

impl<'a> PairQuery<'a> {
    pub fn sketches(&self) -> Result<(&'a SketchedObservation, &'a SketchedObservation)> {
        match (self.obs_a, self.obs_b) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::InvalidArgument("this labeler needs sketched observations".into())),
        }
    }
}

pub trait PreferenceProvider {
    fn source(&self) -> LabelSource;

    fn needs_sketches(&self) -> bool {
        false
    }

    fn label(&mut self, query: &PairQuery<'_>) -> Result<PreferenceLabel>;

    /// Restarts any internal noise stream. Providers without one ignore it.
    fn reseed(&mut self, _seed: u64) {}
}

impl PreferenceProvider for ScriptedTeacher {
    fn source(&self) -> LabelSource {
        if self.config().flip_prob > 0.0 {
            LabelSource::Noisy
        } else {
            LabelSource::Scripted
        }
    }

    fn label(&mut self, q: &PairQuery<'_>) -> Result<PreferenceLabel> {
        ScriptedTeacher::label(self, q.seg_a, q.seg_b)
    }

    fn reseed(&mut self, seed: u64) {
        ScriptedTeacher::reseed(self, seed)
    }
}

impl PreferenceProvider for FinalStateTeacher {
    fn source(&self) -> LabelSource {
        LabelSource::FinalState
    }

    fn label(&mut self, q: &PairQuery<'_>) -> Result<PreferenceLabel> {
        FinalStateTeacher::label(self, q.seg_a, q.seg_b)
    }

    fn reseed(&mut self, seed: u64) {
        FinalStateTeacher::reseed(self, seed)
    }
}

impl<T: ChatTransport> PreferenceProvider for VlmClient<T> {
    fn source(&self) -> LabelSource {
        LabelSource::Vlm
    }

    fn needs_sketches(&self) -> bool {
        true
    }

    fn label(&mut self, q: &PairQuery<'_>) -> Result<PreferenceLabel> {
        let (a, b) = q.sketches()?;
        Ok(self.query_two_stage(a, b, q.task)?.label)
    }
}
