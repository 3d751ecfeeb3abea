//! Objective task metrics: completion time, interaction time, outcome.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "HSI", alias = "hsi")]
    Hsi,
    #[serde(rename = "EE", alias = "ee")]
    Ee,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Hsi => "HSI",
            Mode::Ee => "EE",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
}

/// Session events stamped with simulation time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    GhostGrab { t: f64 },
    ExecuteClick { t: f64 },
    ExecutionFinished { t: f64, success: bool },
    TargetPose { t: f64 },
    Collision { t: f64 },
    TaskComplete { t: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub task: String,
    pub mode: Mode,
    pub completion_time: f64,
    pub interaction_time: f64,
    pub outcome: Outcome,
}

/// Folds a session's events into one record.
///
/// HSI sessions (any Execute click) run from the first ghost grab; the
/// interaction ends at the last Execute click and the task when the last
/// execution finishes. EE sessions run from the first streamed target to
/// the completion marker and count both spans as interaction. Any collision
/// or failed execution makes the outcome a failure. `None` when the session
/// never started.
pub fn record_metrics(task: &str, events: &[Event]) -> Option<MetricsRecord> {
    let first = |f: fn(&Event) -> Option<f64>| events.iter().find_map(f);
    let last = |f: fn(&Event) -> Option<f64>| events.iter().rev().find_map(f);
    let grab = first(|e| match e {
        Event::GhostGrab { t } => Some(*t),
        _ => None,
    });
    let click = last(|e| match e {
        Event::ExecuteClick { t } => Some(*t),
        _ => None,
    });
    let failed = events.iter().any(|e| {
        matches!(e, Event::Collision { .. } | Event::ExecutionFinished { success: false, .. })
    });
    let outcome = if failed { Outcome::Failure } else { Outcome::Success };

    if let Some(click) = click {
        let start = grab.unwrap_or(click).min(click);
        let end = last(|e| match e {
            Event::ExecutionFinished { t, .. } => Some(*t),
            _ => None,
        })
        .unwrap_or(click);
        return Some(MetricsRecord {
            task: task.into(),
            mode: Mode::Hsi,
            completion_time: end - start,
            interaction_time: click - start,
            outcome,
        });
    }
    let start = first(|e| match e {
        Event::TargetPose { t } => Some(*t),
        _ => None,
    })?;
    let end = last(|e| match e {
        Event::TaskComplete { t } => Some(*t),
        _ => None,
    })?;
    let span = end - start;
    Some(MetricsRecord { task: task.into(), mode: Mode::Ee, completion_time: span, interaction_time: span, outcome })
}

/// Append-only newline-delimited JSON.
pub struct MetricsLog {
    out: BufWriter<File>,
}

impl MetricsLog {
    pub fn open(path: &Path) -> io::Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(MetricsLog { out: BufWriter::new(f) })
    }

    pub fn append(&mut self, record: &MetricsRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

pub fn read_records(path: &Path) -> io::Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(io::Error::other))
        .collect()
}
