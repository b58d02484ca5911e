//! Append-only NDJSON event logs, one file per trial.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Result, ServiceError};
use crate::events::TrialEvent;

#[derive(Debug, Clone)]
pub struct EventStore {
    dir: PathBuf,
}

/// Trial ids are generated UUIDs; anything else never names a file.
pub fn valid_trial_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

impl EventStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(EventStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, trial_id: &str) -> PathBuf {
        self.dir.join(format!("{trial_id}.ndjson"))
    }

    pub fn exists(&self, trial_id: &str) -> bool {
        valid_trial_id(trial_id) && self.path(trial_id).is_file()
    }

    /// Appends events, one JSON object per line. With `sync` the file is
    /// flushed to stable storage before returning.
    pub fn append(&self, trial_id: &str, events: &[TrialEvent], sync: bool) -> Result<()> {
        if events.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).map_err(std::io::Error::from)?;
            buf.push(b'\n');
        }
        let mut file = OpenOptions::new().create(true).append(true).open(self.path(trial_id))?;
        file.write_all(&buf)?;
        if sync {
            file.sync_data()?;
        }
        Ok(())
    }

    /// Reads a trial's log. A final line without its newline is a torn
    /// write: it is dropped and cut from the file so later appends start
    /// on a clean line. Any other unreadable line is corruption.
    pub fn load(&self, trial_id: &str) -> Result<Vec<TrialEvent>> {
        if !self.exists(trial_id) {
            return Err(ServiceError::NotFound(trial_id.to_string()));
        }
        let path = self.path(trial_id);
        let mut reader = BufReader::new(File::open(&path)?);
        let mut events = Vec::new();
        let mut line = String::new();
        let mut complete_len = 0u64;
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                break;
            }
            if !line.ends_with('\n') {
                OpenOptions::new().write(true).open(&path)?.set_len(complete_len)?;
                break;
            }
            complete_len += line.len() as u64;
            let event: TrialEvent = serde_json::from_str(line.trim_end()).map_err(|e| ServiceError::Replay {
                seq: events.len() as u64 + 1,
                message: format!("unreadable event: {e}"),
            })?;
            events.push(event);
        }
        Ok(events)
    }

    /// Ids of all trials with a log in the directory, sorted.
    pub fn list(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("ndjson") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    if valid_trial_id(stem) {
                        ids.push(stem.to_string());
                    }
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
