//! File-backed session persistence.
//!
//! Each session is one `<id>.json` snapshot plus an append-only
//! `<id>.turns.jsonl` log. Snapshots are written to a temporary file, synced
//! and renamed over the old one, so a crash leaves either the previous or the
//! new snapshot on disk, never a torn file.
//!
//! A turn is logged first and then committed by renaming its snapshot into
//! place; it is acknowledged only after both. Log entries beyond the committed
//! snapshot (a crash between the two writes) are trimmed on reload.

use crate::session::{SessionId, SessionRecord};
use serde::{Deserialize, Serialize};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt session file {path}: {message}")]
    Corrupt { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One line of the turn log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnLogEntry {
    pub turn: usize,
    pub at: chrono::DateTime<chrono::Utc>,
    pub user: String,
    pub system: String,
    pub phase: interview_core::Phase,
    pub fill_rate: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub admitted_slots: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FileStore {
    dir: PathBuf,
}

impl FileStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn snapshot_path(&self, id: &SessionId) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn log_path(&self, id: &SessionId) -> PathBuf {
        self.dir.join(format!("{id}.turns.jsonl"))
    }

    pub fn save(&self, record: &SessionRecord) -> Result<(), StoreError> {
        let path = self.snapshot_path(&record.id);
        let tmp = self.dir.join(format!(".{}.json.tmp", record.id));
        let bytes = serde_json::to_vec_pretty(record).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        {
            let mut file = File::create(&tmp).map_err(io_err(&tmp))?;
            file.write_all(&bytes).map_err(io_err(&tmp))?;
            file.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        // Make the rename itself durable.
        if let Ok(dir) = File::open(&self.dir) {
            let _ = dir.sync_all();
        }
        Ok(())
    }

    pub fn load(&self, id: &SessionId) -> Result<Option<SessionRecord>, StoreError> {
        let path = self.snapshot_path(id);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path)(e)),
        };
        serde_json::from_str(&text).map(Some).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn append_turn(&self, id: &SessionId, entry: &TurnLogEntry) -> Result<(), StoreError> {
        let path = self.log_path(id);
        let mut line = serde_json::to_string(entry).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        file.write_all(line.as_bytes()).map_err(io_err(&path))?;
        file.sync_data().map_err(io_err(&path))?;
        Ok(())
    }

    /// Log entries in order. A torn final line from a crash mid-append is skipped.
    pub fn turn_log(&self, id: &SessionId) -> Result<Vec<TurnLogEntry>, StoreError> {
        Ok(self.read_log(id)?.0)
    }

    fn read_log(&self, id: &SessionId) -> Result<(Vec<TurnLogEntry>, usize), StoreError> {
        let path = self.log_path(id);
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let mut entries = Vec::new();
        let mut unreadable = 0;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(io_err(&path))?;
            match serde_json::from_str(&line) {
                Ok(entry) => entries.push(entry),
                Err(e) => {
                    unreadable += 1;
                    tracing::warn!(path = %path.display(), error = %e, "skipping unreadable turn log line");
                }
            }
        }
        Ok((entries, unreadable))
    }

    /// Drops log entries for turns after `committed_turn` and any torn lines,
    /// returning how many lines were removed.
    pub fn trim_log(&self, id: &SessionId, committed_turn: usize) -> Result<usize, StoreError> {
        let (entries, unreadable) = self.read_log(id)?;
        let keep: Vec<&TurnLogEntry> = entries.iter().filter(|e| e.turn <= committed_turn).collect();
        let dropped = entries.len() - keep.len() + unreadable;
        if dropped == 0 {
            return Ok(0);
        }
        let path = self.log_path(id);
        let tmp = self.dir.join(format!(".{id}.turns.jsonl.tmp"));
        {
            let mut file = File::create(&tmp).map_err(io_err(&tmp))?;
            for entry in keep {
                let line = serde_json::to_string(entry).expect("log entries serialize");
                writeln!(file, "{line}").map_err(io_err(&tmp))?;
            }
            file.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        tracing::warn!(session = %id, dropped, "trimmed uncommitted turn log entries");
        Ok(dropped)
    }

    /// Ids of all stored sessions, sorted.
    pub fn list(&self) -> Result<Vec<SessionId>, StoreError> {
        let mut ids: Vec<SessionId> = fs::read_dir(&self.dir)
            .map_err(io_err(&self.dir))?
            .filter_map(Result::ok)
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".json")?.parse().ok()
            })
            .collect();
        ids.sort();
        Ok(ids)
    }
}
