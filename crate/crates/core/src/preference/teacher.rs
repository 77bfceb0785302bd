use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::label::PreferenceLabel;
use crate::envs::{terminal_potential, EnvSpec, EnvState};
use crate::error::{Error, Result};
use crate::model::{segment_return_gt, TrajectorySegment};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    /// Score gaps at or below this are ties.
    pub delta_equal: f64,
    /// Probability of swapping a strict preference.
    pub flip_prob: f64,
    pub rng_seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            delta_equal: 0.0,
            flip_prob: 0.0,
            rng_seed: 0,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_equal >= 0.0 && self.delta_equal.is_finite()) {
            return Err(Error::Config(format!("delta_equal {} must be >= 0", self.delta_equal)));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config(format!("flip_prob {} outside [0, 1]", self.flip_prob)));
        }
        Ok(())
    }
}

/// Threshold-and-flip rule shared by the score-based teachers. One uniform
/// draw is consumed per call so the noise stream does not depend on ties.
pub fn label_from_gap(cfg: &TeacherConfig, gap: f64, rng: &mut impl Rng) -> PreferenceLabel {
    let u: f64 = rng.random();
    let label = if gap.abs() <= cfg.delta_equal {
        return PreferenceLabel::NoPref;
    } else if gap > 0.0 {
        PreferenceLabel::PreferA
    } else {
        PreferenceLabel::PreferB
    };
    if u < cfg.flip_prob {
        label.swapped()
    } else {
        label
    }
}

fn check_lengths(a: &TrajectorySegment, b: &TrajectorySegment) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::UnequalLengths { a: a.len(), b: b.len() });
    }
    Ok(())
}

/// Labels by ground-truth segment return.
#[derive(Clone, Debug)]
pub struct ScriptedTeacher {
    cfg: TeacherConfig,
    rng: ChaCha8Rng,
}

impl ScriptedTeacher {
    pub fn new(cfg: TeacherConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            cfg,
        })
    }

    pub fn config(&self) -> &TeacherConfig {
        &self.cfg
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn label(&mut self, a: &TrajectorySegment, b: &TrajectorySegment) -> Result<PreferenceLabel> {
        check_lengths(a, b)?;
        let gap = segment_return_gt(a) - segment_return_gt(b);
        Ok(label_from_gap(&self.cfg, gap, &mut self.rng))
    }
}

/// Sees only the final state of each segment.
#[derive(Clone, Debug)]
pub struct FinalStateTeacher {
    spec: EnvSpec,
    cfg: TeacherConfig,
    rng: ChaCha8Rng,
}

impl FinalStateTeacher {
    pub fn new(spec: EnvSpec, cfg: TeacherConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            cfg,
        })
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn potential(&self, seg: &TrajectorySegment) -> Result<f64> {
        let st = EnvState::from_observation(&self.spec, seg.final_state())?;
        Ok(terminal_potential(&self.spec, &st))
    }

    pub fn label(&mut self, a: &TrajectorySegment, b: &TrajectorySegment) -> Result<PreferenceLabel> {
        check_lengths(a, b)?;
        let gap = self.potential(a)? - self.potential(b)?;
        Ok(label_from_gap(&self.cfg, gap, &mut self.rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;
    use crate::model::{ActionVec, EpisodeId, StateVec, Transition};

    fn seg_with_returns(rewards: &[f64]) -> TrajectorySegment {
        let ts = rewards
            .iter()
            .map(|&r| Transition::new(StateVec(vec![0.0; 6]), ActionVec::zeros(2), StateVec(vec![0.0; 6]), false, r))
            .collect();
        TrajectorySegment::new(ts, EpisodeId(0), 0).unwrap()
    }

    #[test]
    fn scripted_examples() {
        let a = seg_with_returns(&[6.0, 4.0]);
        let b = seg_with_returns(&[3.0, 1.0]);
        let mut t = ScriptedTeacher::new(TeacherConfig::default()).unwrap();
        assert_eq!(t.label(&a, &b).unwrap(), PreferenceLabel::PreferA);
        assert_eq!(t.label(&b, &a).unwrap(), PreferenceLabel::PreferB);
        assert_eq!(t.label(&a, &a).unwrap(), PreferenceLabel::NoPref);
        let mut flip = ScriptedTeacher::new(TeacherConfig { flip_prob: 1.0, ..Default::default() }).unwrap();
        assert_eq!(flip.label(&a, &b).unwrap(), PreferenceLabel::PreferB);
        let short = seg_with_returns(&[1.0]);
        assert!(matches!(t.label(&a, &short), Err(Error::UnequalLengths { .. })));
    }

    #[test]
    fn tie_threshold_is_inclusive() {
        let a = seg_with_returns(&[1.0]);
        let b = seg_with_returns(&[0.5]);
        let mut t = ScriptedTeacher::new(TeacherConfig { delta_equal: 0.5, ..Default::default() }).unwrap();
        assert_eq!(t.label(&a, &b).unwrap(), PreferenceLabel::NoPref);
    }

    #[test]
    fn final_state_teacher_ignores_path() {
        let spec = EnvSpec::new(EnvKind::PointReach);
        let mk = |path: &[[f64; 2]]| {
            let obs = |p: [f64; 2]| StateVec(vec![p[0], p[1], 0.0, 0.0, 0.5, 0.5]);
            let ts = path
                .windows(2)
                .map(|w| Transition::new(obs(w[0]), ActionVec::zeros(2), obs(w[1]), false, 0.0))
                .collect();
            TrajectorySegment::new(ts, EpisodeId(0), 0).unwrap()
        };
        let a = mk(&[[-1.0, -1.0], [0.0, 0.0], [0.4, 0.5]]);
        let b = mk(&[[0.9, 0.9], [0.8, 0.2], [0.4, 0.5]]);
        let mut t = FinalStateTeacher::new(spec, TeacherConfig::default()).unwrap();
        assert_eq!(t.label(&a, &b).unwrap(), PreferenceLabel::NoPref);
        // Final distances 0.1 and 0.5.
        let c = mk(&[[0.0, 0.0], [0.0, 0.0], [0.4, 0.5]]);
        let d = mk(&[[0.0, 0.0], [0.0, 0.0], [0.0, 0.5]]);
        assert_eq!(t.label(&c, &d).unwrap(), PreferenceLabel::PreferA);
    }

    #[test]
    fn invalid_configs() {
        assert!(ScriptedTeacher::new(TeacherConfig { flip_prob: 1.5, ..Default::default() }).is_err());
        assert!(ScriptedTeacher::new(TeacherConfig { delta_equal: -1.0, ..Default::default() }).is_err());
    }
}
