use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::label::{LabelSource, PreferenceLabel};
use crate::model::TrajectorySegment;

pub fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// One stored comparison; `y = 1` means `seg_a` is preferred.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub seg_a: Arc<TrajectorySegment>,
    pub seg_b: Arc<TrajectorySegment>,
    pub y: u8,
    pub source: LabelSource,
    /// Unix seconds.
    pub created_at: f64,
}

/// Append-only preference store.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDataset {
    records: Vec<PreferenceRecord>,
    discarded_count: usize,
}

impl PreferenceDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[PreferenceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn discarded_count(&self) -> usize {
        self.discarded_count
    }

    /// Total labels offered so far, stored or discarded.
    pub fn offered(&self) -> usize {
        self.records.len() + self.discarded_count
    }

    /// Stores the pair unless the label is `NoPref`. Returns whether a
    /// record was appended.
    pub fn add(
        &mut self,
        seg_a: Arc<TrajectorySegment>,
        seg_b: Arc<TrajectorySegment>,
        label: PreferenceLabel,
        source: LabelSource,
    ) -> bool {
        self.add_at(seg_a, seg_b, label, source, unix_seconds())
    }

    pub fn add_at(
        &mut self,
        seg_a: Arc<TrajectorySegment>,
        seg_b: Arc<TrajectorySegment>,
        label: PreferenceLabel,
        source: LabelSource,
        created_at: f64,
    ) -> bool {
        let y = match label {
            PreferenceLabel::PreferA => 1,
            PreferenceLabel::PreferB => 0,
            PreferenceLabel::NoPref => {
                self.discarded_count += 1;
                return false;
            }
        };
        self.records.push(PreferenceRecord {
            seg_a,
            seg_b,
            y,
            source,
            created_at,
        });
        true
    }
}
