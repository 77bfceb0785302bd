//! Per-iteration metrics rows and their JSONL/CSV export.
//!
//! Reals are written with 9 significant digits (`{:.8e}`); counters as
//! integers. CSV columns, in order:
//!
//! `iteration, env_steps, episode_return_gt, episode_return_learned,
//! success_rate, pref_accuracy, misalignment`, then every name in
//! [`LOSS_KEYS`], then `timestamp`.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed keys of [`MetricsRow::losses`], in export order.
pub const LOSS_KEYS: [&str; 18] = [
    "loss_vlm",
    "loss_agent",
    "loss_total",
    "reward_train_accuracy",
    "critic_loss",
    "actor_loss",
    "alpha",
    "entropy",
    "queried",
    "stored",
    "discarded",
    "dataset_size",
    "train_return_gt",
    "train_success_rate",
    "evaluated",
    "phase_reward_update",
    "phase_relabel",
    "phase_train_policy",
];

pub const FIXED_COLUMNS: [&str; 7] = [
    "iteration",
    "env_steps",
    "episode_return_gt",
    "episode_return_learned",
    "success_rate",
    "pref_accuracy",
    "misalignment",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    /// Cumulative environment steps, including this iteration's rollouts.
    pub env_steps: u64,
    /// Mean over the latest evaluation rollouts.
    pub episode_return_gt: f64,
    pub episode_return_learned: f64,
    pub success_rate: f64,
    /// Agreement of this iteration's stored labels with the ground-truth
    /// ordering; 0 when nothing was stored.
    pub pref_accuracy: f64,
    pub misalignment: f64,
    pub losses: BTreeMap<String, f64>,
    /// Unix seconds at write time. Excluded from determinism comparisons.
    pub timestamp: f64,
}

impl MetricsRow {
    pub fn new(iteration: u64, env_steps: u64) -> Self {
        Self {
            iteration,
            env_steps,
            episode_return_gt: 0.0,
            episode_return_learned: 0.0,
            success_rate: 0.0,
            pref_accuracy: 0.0,
            misalignment: 0.0,
            losses: LOSS_KEYS.iter().map(|k| (k.to_string(), 0.0)).collect(),
            timestamp: 0.0,
        }
    }

    pub fn set(&mut self, key: &str, value: f64) {
        debug_assert!(LOSS_KEYS.contains(&key), "unknown metrics key {key}");
        self.losses.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> f64 {
        self.losses.get(key).copied().unwrap_or(0.0)
    }

    fn reals(&self) -> impl Iterator<Item = f64> + '_ {
        [
            self.episode_return_gt,
            self.episode_return_learned,
            self.success_rate,
            self.pref_accuracy,
            self.misalignment,
        ]
        .into_iter()
        .chain(LOSS_KEYS.iter().map(|k| self.get(k)))
        .chain(std::iter::once(self.timestamp))
    }

    pub fn validate(&self) -> Result<()> {
        if self.reals().all(f64::is_finite) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("non-finite metric in iteration {}", self.iteration)))
        }
    }

    /// The row as it reads back after export.
    pub fn rounded(&self) -> Self {
        let r = |x: f64| round_sig9(x);
        Self {
            iteration: self.iteration,
            env_steps: self.env_steps,
            episode_return_gt: r(self.episode_return_gt),
            episode_return_learned: r(self.episode_return_learned),
            success_rate: r(self.success_rate),
            pref_accuracy: r(self.pref_accuracy),
            misalignment: r(self.misalignment),
            losses: LOSS_KEYS.iter().map(|k| (k.to_string(), r(self.get(k)))).collect(),
            timestamp: r(self.timestamp),
        }
    }
}

pub fn format_real(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn round_sig9(x: f64) -> f64 {
    format_real(x).parse().expect("formatted real parses")
}

pub fn csv_header() -> String {
    let mut cols: Vec<&str> = FIXED_COLUMNS.to_vec();
    cols.extend(LOSS_KEYS);
    cols.push("timestamp");
    cols.join(",")
}

pub fn csv_line(row: &MetricsRow) -> String {
    let mut fields = vec![row.iteration.to_string(), row.env_steps.to_string()];
    fields.extend(row.reals().map(format_real));
    fields.join(",")
}

pub fn jsonl_line(row: &MetricsRow) -> String {
    let mut s = format!("{{\"iteration\":{},\"env_steps\":{}", row.iteration, row.env_steps);
    for (k, v) in FIXED_COLUMNS[2..].iter().zip([
        row.episode_return_gt,
        row.episode_return_learned,
        row.success_rate,
        row.pref_accuracy,
        row.misalignment,
    ]) {
        s.push_str(&format!(",\"{k}\":{}", format_real(v)));
    }
    s.push_str(",\"losses\":{");
    for (i, k) in LOSS_KEYS.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format!("\"{k}\":{}", format_real(row.get(k))));
    }
    s.push_str(&format!("}},\"timestamp\":{}}}", format_real(row.timestamp)));
    s
}

pub fn export_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut out = csv_header();
    out.push('\n');
    for r in rows {
        r.validate()?;
        out.push_str(&csv_line(r));
        out.push('\n');
    }
    Ok(out)
}

pub fn export_jsonl(rows: &[MetricsRow]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        r.validate()?;
        out.push_str(&jsonl_line(r));
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_jsonl(text: &str) -> Result<Vec<MetricsRow>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let f = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for line in f.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            rows.push(serde_json::from_str(&line)?);
        }
    }
    Ok(rows)
}

/// Drops the trailing `timestamp` column of an exported CSV.
pub fn strip_timestamps_csv(text: &str) -> String {
    text.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .fold(String::new(), |mut acc, l| {
            acc.push_str(l);
            acc.push('\n');
            acc
        })
}

/// Drops the trailing `timestamp` field of every exported JSONL line.
pub fn strip_timestamps_jsonl(text: &str) -> String {
    text.lines()
        .map(|l| l.rsplit_once(",\"timestamp\":").map_or(l.to_string(), |(head, _)| format!("{head}}}")))
        .fold(String::new(), |mut acc, l| {
            acc.push_str(&l);
            acc.push('\n');
            acc
        })
}

/// Appends rows to `metrics.jsonl` and `metrics.csv` in a directory,
/// flushing after each row.
pub struct MetricsWriter {
    jsonl: BufWriter<File>,
    csv: BufWriter<File>,
    dir: PathBuf,
}

pub const METRICS_JSONL: &str = "metrics.jsonl";
pub const METRICS_CSV: &str = "metrics.csv";

impl MetricsWriter {
    /// Truncates existing files unless `append` is set; a fresh or empty CSV
    /// gets the header.
    pub fn create(dir: impl AsRef<Path>, append: bool) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let open = |name: &str| -> Result<File> {
            let mut o = OpenOptions::new();
            o.create(true);
            if append {
                o.append(true);
            } else {
                o.write(true).truncate(true);
            }
            Ok(o.open(dir.join(name))?)
        };
        let jsonl = open(METRICS_JSONL)?;
        let csv_file = open(METRICS_CSV)?;
        let empty = csv_file.metadata()?.len() == 0;
        let mut csv = BufWriter::new(csv_file);
        if empty {
            writeln!(csv, "{}", csv_header())?;
            csv.flush()?;
        }
        Ok(Self {
            jsonl: BufWriter::new(jsonl),
            csv,
            dir,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        row.validate()?;
        writeln!(self.jsonl, "{}", jsonl_line(row))?;
        writeln!(self.csv, "{}", csv_line(row))?;
        self.jsonl.flush()?;
        self.csv.flush()?;
        Ok(())
    }
}
