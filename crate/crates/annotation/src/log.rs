//! On-disk event log: `events.jsonl` holds the current segment; compaction
//! writes `snapshot.json` and moves the segment to `segments/`. Nothing is
//! ever rewritten in place.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AnnotationError, Result};
use crate::state::{EventRecord, State};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const SEGMENTS_DIR: &str = "segments";

#[derive(Serialize, Deserialize)]
struct Snapshot {
    state: State,
}

pub struct EventLog {
    dir: PathBuf,
    file: File,
    segment_start: Option<u64>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> AnnotationError + '_ {
    move |source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(path)(e)),
    };
    let torn_tail = !text.is_empty() && !text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(rec) => out.push(rec),
            // A write interrupted mid-line never completed; drop it.
            Err(e) if torn_tail && i + 1 == lines.len() => {
                tracing::warn!(path = %path.display(), error = %e, "ignoring torn final event");
            }
            Err(e) => {
                return Err(AnnotationError::CorruptLog {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

impl EventLog {
    /// Open (creating if needed) and return the log with the state it
    /// describes: snapshot plus the current segment.
    pub fn open(dir: &Path) -> Result<(EventLog, State)> {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let mut state = match std::fs::read(&snap_path) {
            Ok(bytes) => {
                serde_json::from_slice::<Snapshot>(&bytes)
                    .map_err(|e| AnnotationError::CorruptLog {
                        path: snap_path.clone(),
                        line: 0,
                        message: e.to_string(),
                    })?
                    .state
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => State::default(),
            Err(e) => return Err(io(&snap_path)(e)),
        };
        let events_path = dir.join(EVENTS_FILE);
        let tail = read_events(&events_path)?;
        let segment_start = tail.first().map(|e| e.seq);
        let snapshot_seq = state.last_seq;
        for rec in tail.iter().filter(|r| r.seq > snapshot_seq) {
            state.apply(rec);
        }
        if let Ok(bytes) = std::fs::read(&events_path) {
            if !bytes.is_empty() && !bytes.ends_with(b"\n") {
                let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
                std::fs::write(&events_path, &bytes[..keep]).map_err(io(&events_path))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&events_path)
            .map_err(io(&events_path))?;
        Ok((
            EventLog {
                dir: dir.to_path_buf(),
                file,
                segment_start,
            },
            state,
        ))
    }

    pub fn append(&mut self, rec: &EventRecord) -> Result<()> {
        let mut line = serde_json::to_vec(rec).expect("event serializes");
        line.push(b'\n');
        let path = self.dir.join(EVENTS_FILE);
        self.file.write_all(&line).map_err(io(&path))?;
        self.file.flush().map_err(io(&path))?;
        self.segment_start.get_or_insert(rec.seq);
        Ok(())
    }

    /// Snapshot `state` and start a new segment.
    pub fn compact(&mut self, state: &State) -> Result<()> {
        let Some(start) = self.segment_start else {
            return Ok(());
        };
        let snap_path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join("snapshot.json.tmp");
        let bytes = serde_json::to_vec(&Snapshot {
            state: state.clone(),
        })
        .expect("state serializes");
        std::fs::write(&tmp, bytes).map_err(io(&tmp))?;
        std::fs::rename(&tmp, &snap_path).map_err(io(&snap_path))?;
        let segments = self.dir.join(SEGMENTS_DIR);
        std::fs::create_dir_all(&segments).map_err(io(&segments))?;
        let events_path = self.dir.join(EVENTS_FILE);
        let archived = segments.join(format!("events-{start:010}-{:010}.jsonl", state.last_seq));
        std::fs::rename(&events_path, &archived).map_err(io(&archived))?;
        self.file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&events_path)
            .map_err(io(&events_path))?;
        self.segment_start = None;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// Every event ever written, oldest first: archived segments, then the
/// current segment.
pub fn read_all_events(dir: &Path) -> Result<Vec<EventRecord>> {
    let mut segments: Vec<PathBuf> = match std::fs::read_dir(dir.join(SEGMENTS_DIR)) {
        Ok(rd) => rd.flatten().map(|e| e.path()).collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(io(dir)(e)),
    };
    segments.sort();
    segments.push(dir.join(EVENTS_FILE));
    let mut out: Vec<EventRecord> = Vec::new();
    for seg in segments {
        // A crash between snapshot and rotation can leave events in two
        // files; sequence numbers make the overlap harmless.
        let floor = out.last().map_or(0, |r| r.seq);
        out.extend(read_events(&seg)?.into_iter().filter(|r| r.seq > floor));
    }
    Ok(out)
}
