//! Session recording and replay.
//!
//! A session log is NDJSON: one header line with the starting scene, then
//! every request, publication, clock tick batch and reply in the order the
//! world applied them. Replaying the log against a fresh world must yield
//! the same replies.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::channel;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};
use teleop_core::kinematics::KinematicChain;
use teleop_core::SceneState;

use crate::formats::read_cloud;
use crate::hub::Hub;
use crate::protocol::{decode_body, Frame};
use crate::world::{ClockMode, Command, World, WorldConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Header {
        scene: SceneState,
        chain: KinematicChain,
        seed: u64,
        wall_clock: bool,
        cloud: Option<PathBuf>,
    },
    Request { frame: Frame },
    Publish { frame: Frame },
    Ticks { count: usize },
    Reply { frame: Frame },
}

pub struct SessionLog {
    out: BufWriter<File>,
}

impl SessionLog {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(SessionLog { out: BufWriter::new(File::create(path)?) })
    }

    pub fn header(&mut self, scene: &SceneState, config: &WorldConfig) -> io::Result<()> {
        self.write(&LogEntry::Header {
            scene: scene.clone(),
            chain: config.executor.chain.clone(),
            seed: config.seed,
            wall_clock: config.clock == ClockMode::Wall,
            cloud: config.cloud_path.clone(),
        })
    }

    pub fn request(&mut self, frame: &Frame) {
        self.log(LogEntry::Request { frame: frame.clone() });
    }

    pub fn publish(&mut self, frame: &Frame) {
        self.log(LogEntry::Publish { frame: frame.clone() });
    }

    pub fn ticks(&mut self, count: usize) {
        self.log(LogEntry::Ticks { count });
    }

    pub fn reply(&mut self, frame: &Frame) {
        self.log(LogEntry::Reply { frame: frame.clone() });
    }

    fn log(&mut self, e: LogEntry) {
        if let Err(err) = self.write(&e) {
            warn!("session log: {err}");
        }
    }

    fn write(&mut self, e: &LogEntry) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, e)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Setup(String),
}

#[derive(Clone, Debug, Default)]
pub struct ReplaySummary {
    pub requests: usize,
    pub publications: usize,
    pub ticks: usize,
    /// One line per reply that differs from the recording.
    pub mismatches: Vec<String>,
}

impl ReplaySummary {
    pub fn is_faithful(&self) -> bool {
        self.mismatches.is_empty()
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogEntry>, ReplayError> {
    let io_err = |source| ReplayError::Io { path: path.into(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line)
            .map_err(|e| ReplayError::Parse { path: path.into(), line: i + 1, message: e.to_string() })?;
        out.push(e);
    }
    Ok(out)
}

/// Re-runs a recorded session. `base` overrides everything but the header's
/// scene, chain, seed and clock mode.
pub fn replay(entries: &[LogEntry], base: WorldConfig) -> Result<ReplaySummary, ReplayError> {
    let Some(LogEntry::Header { scene, chain, seed, wall_clock, cloud }) = entries.first() else {
        return Err(ReplayError::Setup("log does not start with a header".into()));
    };
    let cloud = match cloud {
        Some(p) => Some(read_cloud(p).map_err(|e| ReplayError::Setup(e.to_string()))?),
        None => None,
    };
    let mut config = base;
    config.executor.chain = chain.clone();
    config.seed = *seed;
    config.clock = if *wall_clock { ClockMode::Wall } else { ClockMode::Simulated };
    config.metrics = None;
    config.record = None;
    let mut world = World::new(scene.clone(), cloud, config, Arc::new(Hub::new())).map_err(|e| ReplayError::Setup(e.to_string()))?;
    world.disable_pacing();

    let mut summary = ReplaySummary::default();
    let mut pending: Option<(Frame, Frame)> = None;
    for (i, e) in entries.iter().enumerate().skip(1) {
        match e {
            LogEntry::Request { frame } => {
                summary.requests += 1;
                let (tx, rx) = channel();
                world.handle(Command::Request { frame: frame.clone(), reply: tx });
                let got = rx.recv().ok().and_then(|b| decode_body(&b).ok());
                match got {
                    Some(got) => pending = Some((frame.clone(), got)),
                    None => summary.mismatches.push(format!("entry {i}: {} produced no reply", frame.name)),
                }
            }
            LogEntry::Reply { frame } => match pending.take() {
                Some((_, got)) if got == *frame => {}
                Some((req, _)) => summary.mismatches.push(format!("entry {i}: reply to {} differs", req.name)),
                None => summary.mismatches.push(format!("entry {i}: reply without a request")),
            },
            LogEntry::Publish { frame } => {
                summary.publications += 1;
                let (tx, _rx) = channel();
                world.handle(Command::Publish { frame: frame.clone(), reply: tx });
            }
            LogEntry::Ticks { count } => {
                summary.ticks += count;
                world.step(*count);
            }
            LogEntry::Header { .. } => return Err(ReplayError::Setup(format!("entry {i}: second header"))),
        }
    }
    Ok(summary)
}
