use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::BackendError;

/// One attempt against a backend, as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub tuple_index: usize,
    pub attempt: u32,
    pub prompt_hash: String,
    pub response_text: String,
    /// Milliseconds since the Unix epoch when the response arrived.
    pub timestamp: u64,
    #[serde(default)]
    pub backend_id: String,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default)]
    pub from_fallback: bool,
    #[serde(default)]
    pub accepted: bool,
    /// Backend error for this attempt; `response_text` is empty when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub content_filtered: bool,
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Append-only record of every attempt, optionally mirrored to a JSONL file
/// that is flushed after each line.
pub struct TranscriptLog {
    file: Option<(PathBuf, Mutex<File>)>,
    records: Mutex<Vec<TranscriptRecord>>,
}

impl TranscriptLog {
    pub fn in_memory() -> Self {
        TranscriptLog {
            file: None,
            records: Mutex::new(Vec::new()),
        }
    }

    /// Opens `path` for appending, creating it if needed.
    pub fn append_to(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref().to_path_buf();
        drop_torn_tail(&path)?;
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(TranscriptLog {
            file: Some((path, Mutex::new(file))),
            records: Mutex::new(Vec::new()),
        })
    }

    pub fn record(&self, rec: TranscriptRecord) -> Result<(), BackendError> {
        if let Some((path, file)) = &self.file {
            let mut line = serde_json::to_string(&rec).map_err(|e| BackendError::Transcript {
                path: path.clone(),
                message: e.to_string(),
            })?;
            line.push('\n');
            let mut f = file.lock().unwrap_or_else(|p| p.into_inner());
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.records
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(rec);
        Ok(())
    }

    /// Records written through this log, ordered by tuple and attempt.
    pub fn records(&self) -> Vec<TranscriptRecord> {
        let mut out = self.records.lock().unwrap_or_else(|p| p.into_inner()).clone();
        out.sort_by_key(|r| (r.tuple_index, r.attempt));
        out
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads a transcript. A final line cut short by an interrupted write is
/// skipped; a malformed line anywhere else is an error.
/// Cuts an unterminated final line left behind by an interrupted writer.
fn drop_torn_tail(path: &Path) -> std::io::Result<()> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e),
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    OpenOptions::new().write(true).open(path)?.set_len(keep as u64)
}

pub fn read_transcript(path: impl AsRef<Path>) -> Result<Vec<TranscriptRecord>, BackendError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TranscriptRecord>(line) {
            Ok(rec) => out.push(rec),
            Err(_) if Some(i) == last => {
                log::warn!("{}: ignoring truncated final line {}", path.display(), i + 1);
            }
            Err(e) => {
                return Err(BackendError::Transcript {
                    path: path.to_path_buf(),
                    message: format!("line {}: {e}", i + 1),
                })
            }
        }
    }
    Ok(out)
}
