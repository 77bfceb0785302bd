//! Human labeling queue: pending sketch pairs, annotator leases, and the
//! blocking hand-off of submitted labels to the training loop.
//!
//! With a journal path configured, every enqueue and every accepted label is
//! appended as one JSON line, and [`LabelQueue::open`] rebuilds the queue
//! from it. Leases are not journaled; after a restart all unlabeled pairs are
//! offered again.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::envs::TaskSpec;
use crate::error::{Error, Result};
use crate::model::TrajectorySegment;
use crate::preference::{
    unix_seconds, LabelSource, PairQuery, PreferenceDataset, PreferenceLabel, PreferenceProvider,
};
use crate::sketch::{encode_png, SketchedObservation};

pub const DEFAULT_LEASE_TTL_SECS: f64 = 120.0;
pub const DEFAULT_QUEUE_CAP: usize = 500;

/// Seconds since an arbitrary epoch.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        unix_seconds()
    }
}

/// Clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: Mutex<f64>,
}

impl ManualClock {
    pub fn new(start: f64) -> Self {
        Self { now: Mutex::new(start) }
    }

    pub fn advance(&self, secs: f64) {
        *self.now.lock().unwrap() += secs;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> f64 {
        *self.now.lock().unwrap()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueueConfig {
    pub lease_ttl_secs: f64,
    pub cap: usize,
    pub journal: Option<PathBuf>,
}

impl Default for QueueConfig {
    fn default() -> Self {
        Self {
            lease_ttl_secs: DEFAULT_LEASE_TTL_SECS,
            cap: DEFAULT_QUEUE_CAP,
            journal: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lease {
    pub annotator_id: String,
    pub expires_at: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PendingPair {
    pub pair_id: u64,
    /// PNG bytes.
    pub image_a: Vec<u8>,
    pub image_b: Vec<u8>,
    pub task_text: String,
    pub created_at: f64,
    pub lease: Option<Lease>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub pair_id: u64,
    pub y: i8,
    pub annotator_id: String,
    pub submitted_at: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub enqueued: usize,
    pub pending: usize,
    pub labeled: usize,
    pub discarded: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum JournalEvent {
    Enqueue {
        pair_id: u64,
        created_at: f64,
        task_text: String,
        image_a_b64: String,
        image_b_b64: String,
        seg_a: TrajectorySegment,
        seg_b: TrajectorySegment,
    },
    Label(LabelSubmission),
}

struct Entry {
    pair: PendingPair,
    seg_a: Arc<TrajectorySegment>,
    seg_b: Arc<TrajectorySegment>,
}

struct Inner {
    next_id: u64,
    pending: BTreeMap<u64, Entry>,
    resolved: HashMap<u64, PreferenceLabel>,
    dataset: PreferenceDataset,
    enqueued: usize,
    journal: Option<File>,
}

pub struct LabelQueue {
    cfg: QueueConfig,
    clock: Arc<dyn Clock>,
    inner: Mutex<Inner>,
    resolved_cv: Condvar,
}

impl LabelQueue {
    pub fn new(cfg: QueueConfig, clock: Arc<dyn Clock>) -> Result<Self> {
        if cfg.cap == 0 || !(cfg.lease_ttl_secs > 0.0) {
            return Err(Error::Config("queue cap and lease ttl must be positive".into()));
        }
        let mut inner = Inner {
            next_id: 1,
            pending: BTreeMap::new(),
            resolved: HashMap::new(),
            dataset: PreferenceDataset::new(),
            enqueued: 0,
            journal: None,
        };
        if let Some(path) = &cfg.journal {
            if path.exists() {
                replay(&mut inner, BufReader::new(File::open(path)?))?;
            }
            inner.journal = Some(OpenOptions::new().create(true).append(true).open(path)?);
        }
        Ok(Self {
            cfg,
            clock,
            inner: Mutex::new(inner),
            resolved_cv: Condvar::new(),
        })
    }

    /// Opens with the system clock, replaying `cfg.journal` if present.
    pub fn open(cfg: QueueConfig) -> Result<Self> {
        Self::new(cfg, Arc::new(SystemClock))
    }

    pub fn config(&self) -> &QueueConfig {
        &self.cfg
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn enqueue_pair(
        &self,
        obs_a: &SketchedObservation,
        obs_b: &SketchedObservation,
        task: &TaskSpec,
        seg_a: Arc<TrajectorySegment>,
        seg_b: Arc<TrajectorySegment>,
    ) -> Result<u64> {
        let image_a = encode_png(&obs_a.composed)?;
        let image_b = encode_png(&obs_b.composed)?;
        self.enqueue_encoded(image_a, image_b, &task.text, seg_a, seg_b)
    }

    pub fn enqueue_encoded(
        &self,
        image_a: Vec<u8>,
        image_b: Vec<u8>,
        task_text: &str,
        seg_a: Arc<TrajectorySegment>,
        seg_b: Arc<TrajectorySegment>,
    ) -> Result<u64> {
        let mut inner = self.lock();
        if inner.pending.len() >= self.cfg.cap {
            return Err(Error::QueueFull(self.cfg.cap));
        }
        let pair_id = inner.next_id;
        let created_at = self.clock.now();
        if let Some(j) = inner.journal.as_mut() {
            let ev = JournalEvent::Enqueue {
                pair_id,
                created_at,
                task_text: task_text.to_string(),
                image_a_b64: B64.encode(&image_a),
                image_b_b64: B64.encode(&image_b),
                seg_a: (*seg_a).clone(),
                seg_b: (*seg_b).clone(),
            };
            writeln!(j, "{}", serde_json::to_string(&ev)?)?;
            j.flush()?;
        }
        inner.next_id += 1;
        inner.enqueued += 1;
        inner.pending.insert(
            pair_id,
            Entry {
                pair: PendingPair {
                    pair_id,
                    image_a,
                    image_b,
                    task_text: task_text.to_string(),
                    created_at,
                    lease: None,
                },
                seg_a,
                seg_b,
            },
        );
        Ok(pair_id)
    }

    /// Leases the oldest pair nobody holds an active lease on.
    pub fn next_pair(&self, annotator_id: &str) -> Option<PendingPair> {
        let now = self.clock.now();
        let ttl = self.cfg.lease_ttl_secs;
        let mut inner = self.lock();
        let entry = inner
            .pending
            .values_mut()
            .find(|e| e.pair.lease.as_ref().is_none_or(|l| l.expires_at <= now))?;
        entry.pair.lease = Some(Lease {
            annotator_id: annotator_id.to_string(),
            expires_at: now + ttl,
        });
        Some(entry.pair.clone())
    }

    pub fn submit_label(&self, pair_id: u64, y: i8, annotator_id: &str) -> Result<PreferenceLabel> {
        let label = PreferenceLabel::from_y(y as i64)?;
        let now = self.clock.now();
        let mut inner = self.lock();
        if inner.resolved.contains_key(&pair_id) {
            return Err(Error::DuplicateSubmission(pair_id));
        }
        let entry = inner.pending.get(&pair_id).ok_or(Error::UnknownPair(pair_id))?;
        match &entry.pair.lease {
            Some(l) if l.annotator_id == annotator_id && l.expires_at > now => {}
            _ => return Err(Error::StaleLease(pair_id)),
        }
        let sub = LabelSubmission {
            pair_id,
            y,
            annotator_id: annotator_id.to_string(),
            submitted_at: now,
        };
        if let Some(j) = inner.journal.as_mut() {
            writeln!(j, "{}", serde_json::to_string(&JournalEvent::Label(sub))?)?;
            j.flush()?;
        }
        apply_label(&mut inner, pair_id, label, now);
        drop(inner);
        self.resolved_cv.notify_all();
        Ok(label)
    }

    /// Blocks until the pair is labeled or `timeout` passes.
    pub fn wait_for_label(&self, pair_id: u64, timeout: Duration) -> Result<PreferenceLabel> {
        let deadline = Instant::now() + timeout;
        let mut inner = self.lock();
        loop {
            if let Some(&label) = inner.resolved.get(&pair_id) {
                return Ok(label);
            }
            if !inner.pending.contains_key(&pair_id) {
                return Err(Error::UnknownPair(pair_id));
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(Error::Timeout(format!("no label for pair {pair_id} after {timeout:?}")));
            }
            inner = self.resolved_cv.wait_timeout(inner, left).unwrap_or_else(|e| e.into_inner()).0;
        }
    }

    pub fn stats(&self) -> QueueStats {
        let inner = self.lock();
        QueueStats {
            enqueued: inner.enqueued,
            pending: inner.pending.len(),
            labeled: inner.dataset.len(),
            discarded: inner.dataset.discarded_count(),
        }
    }

    /// Copy of the human-labeled dataset.
    pub fn dataset(&self) -> PreferenceDataset {
        self.lock().dataset.clone()
    }
}

fn apply_label(inner: &mut Inner, pair_id: u64, label: PreferenceLabel, at: f64) {
    if let Some(entry) = inner.pending.remove(&pair_id) {
        inner.dataset.add_at(entry.seg_a, entry.seg_b, label, LabelSource::Human, at);
        inner.resolved.insert(pair_id, label);
    }
}

fn replay(inner: &mut Inner, reader: impl BufRead) -> Result<()> {
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: JournalEvent =
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("journal line {}: {e}", n + 1)))?;
        match ev {
            JournalEvent::Enqueue {
                pair_id,
                created_at,
                task_text,
                image_a_b64,
                image_b_b64,
                seg_a,
                seg_b,
            } => {
                let decode = |s: &str| B64.decode(s).map_err(|e| Error::Parse(format!("journal image: {e}")));
                inner.pending.insert(
                    pair_id,
                    Entry {
                        pair: PendingPair {
                            pair_id,
                            image_a: decode(&image_a_b64)?,
                            image_b: decode(&image_b_b64)?,
                            task_text,
                            created_at,
                            lease: None,
                        },
                        seg_a: Arc::new(seg_a),
                        seg_b: Arc::new(seg_b),
                    },
                );
                inner.enqueued += 1;
                inner.next_id = inner.next_id.max(pair_id + 1);
            }
            JournalEvent::Label(sub) => {
                let label = PreferenceLabel::from_y(sub.y as i64)?;
                apply_label(inner, sub.pair_id, label, sub.submitted_at);
            }
        }
    }
    Ok(())
}

/// Provider that hands each pair to human annotators and waits.
pub struct HumanProvider {
    queue: Arc<LabelQueue>,
    timeout: Duration,
}

impl HumanProvider {
    pub fn new(queue: Arc<LabelQueue>, timeout: Duration) -> Self {
        Self { queue, timeout }
    }

    pub fn queue(&self) -> &Arc<LabelQueue> {
        &self.queue
    }
}

impl PreferenceProvider for HumanProvider {
    fn source(&self) -> LabelSource {
        LabelSource::Human
    }

    fn needs_sketches(&self) -> bool {
        true
    }

    fn label(&mut self, q: &PairQuery<'_>) -> Result<PreferenceLabel> {
        let (a, b) = q.sketches()?;
        let id = self
            .queue
            .enqueue_pair(a, b, q.task, Arc::new(q.seg_a.clone()), Arc::new(q.seg_b.clone()))?;
        self.queue.wait_for_label(id, self.timeout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActionVec, EpisodeId, StateVec, Transition};

    fn seg() -> Arc<TrajectorySegment> {
        let t = Transition::new(StateVec(vec![0.0]), ActionVec::zeros(1), StateVec(vec![0.0]), false, 0.0);
        Arc::new(TrajectorySegment::new(vec![t], EpisodeId(1), 0).unwrap())
    }

    fn queue(cap: usize) -> (LabelQueue, Arc<ManualClock>) {
        let clock = Arc::new(ManualClock::new(1000.0));
        let cfg = QueueConfig { cap, ..QueueConfig::default() };
        (LabelQueue::new(cfg, clock.clone()).unwrap(), clock)
    }

    fn push(q: &LabelQueue) -> u64 {
        q.enqueue_encoded(vec![1], vec![2], "task", seg(), seg()).unwrap()
    }

    #[test]
    fn enqueue_then_fetch() {
        let (q, _) = queue(10);
        assert!(q.next_pair("ann").is_none());
        let id = push(&q);
        assert_eq!(q.next_pair("ann").unwrap().pair_id, id);
    }

    #[test]
    fn cap_is_enforced() {
        let (q, _) = queue(2);
        push(&q);
        push(&q);
        assert!(matches!(
            q.enqueue_encoded(vec![], vec![], "t", seg(), seg()),
            Err(Error::QueueFull(2))
        ));
    }

    #[test]
    fn hundred_pending() {
        let (q, _) = queue(500);
        for _ in 0..100 {
            push(&q);
        }
        assert_eq!(q.stats().pending, 100);
    }

    #[test]
    fn leases_are_exclusive_until_expiry() {
        let (q, clock) = queue(10);
        let a = push(&q);
        let b = push(&q);
        assert_eq!(q.next_pair("x").unwrap().pair_id, a);
        assert_eq!(q.next_pair("y").unwrap().pair_id, b);
        assert!(q.next_pair("z").is_none());
        clock.advance(120.0);
        assert_eq!(q.next_pair("z").unwrap().pair_id, a);
        assert!(matches!(q.submit_label(a, 1, "x"), Err(Error::StaleLease(_))));
    }

    #[test]
    fn submissions() {
        let (q, _) = queue(10);
        let a = push(&q);
        let b = push(&q);
        assert!(matches!(q.submit_label(a, 1, "x"), Err(Error::StaleLease(_))));
        q.next_pair("x");
        q.next_pair("x");
        assert_eq!(q.submit_label(a, 1, "x").unwrap(), PreferenceLabel::PreferA);
        assert_eq!(q.dataset().records()[0].source, LabelSource::Human);
        assert!(matches!(q.submit_label(a, 0, "x"), Err(Error::DuplicateSubmission(_))));
        q.submit_label(b, -1, "x").unwrap();
        assert!(matches!(q.submit_label(99, 1, "x"), Err(Error::UnknownPair(99))));
        let s = q.stats();
        assert_eq!((s.enqueued, s.pending, s.labeled, s.discarded), (2, 0, 1, 1));
    }

    #[test]
    fn journal_replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = QueueConfig {
            journal: Some(dir.path().join("journal.jsonl")),
            ..QueueConfig::default()
        };
        let clock = Arc::new(ManualClock::new(0.0));
        {
            let q = LabelQueue::new(cfg.clone(), clock.clone()).unwrap();
            let a = push(&q);
            push(&q);
            q.next_pair("x");
            q.submit_label(a, 0, "x").unwrap();
        }
        let q = LabelQueue::new(cfg, clock).unwrap();
        let s = q.stats();
        assert_eq!((s.enqueued, s.pending, s.labeled, s.discarded), (2, 1, 1, 0));
        assert_eq!(q.next_pair("y").unwrap().pair_id, 2);
        assert!(matches!(q.submit_label(1, 1, "y"), Err(Error::DuplicateSubmission(1))));
        assert_eq!(push(&q), 3);
    }

    #[test]
    fn waiter_receives_label_from_another_thread() {
        let (q, _) = queue(10);
        let q = Arc::new(q);
        let id = push(&q);
        let q2 = q.clone();
        let h = std::thread::spawn(move || q2.wait_for_label(id, Duration::from_secs(5)));
        std::thread::sleep(Duration::from_millis(20));
        q.next_pair("x");
        q.submit_label(id, 0, "x").unwrap();
        assert_eq!(h.join().unwrap().unwrap(), PreferenceLabel::PreferB);
        let other = push(&q);
        assert!(matches!(
            q.wait_for_label(other, Duration::from_millis(10)),
            Err(Error::Timeout(_))
        ));
    }
}
