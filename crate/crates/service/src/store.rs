//! Embedded trial store with a write-ahead log.
//!
//! Every mutation is appended to `trials.log` as one canonical JSON line and
//! synced to disk before the in-memory index is updated, so a caller that has
//! seen `Ok` can rely on the trial surviving a crash. Opening a store replays
//! the log; a torn final line (crash mid-append) is truncated away.
//!
//! Writers are serialized by a single mutex around the log. Readers only take
//! the index lock and therefore only ever see committed trials.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, SecondsFormat, Utc};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use sts_core::wire::{self, StoredTrial, TrialStatus};
use sts_core::{Mode, TrialPacket};
use thiserror::Error;
use uuid::Uuid;

pub const LOG_FILE: &str = "trials.log";
pub const DEFAULT_LIMIT: usize = 100;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("trial is {actual} mode but was sent to the {endpoint} service")]
    ModeMismatch { endpoint: Mode, actual: Mode },
    #[error("trial {0} already stored with a different payload")]
    ConflictingResubmission(Uuid),
    #[error("trial {0} not found")]
    NotFound(Uuid),
    #[error("trial {0} is a test trial and cannot carry a label")]
    TestTrialLabel(Uuid),
    #[error("label must be a non-empty string")]
    EmptyLabel,
    #[error("store log {path} line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("store io at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Result of a submission that was accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Submitted {
    Created { revision: u64 },
    Replayed { revision: u64 },
}

impl Submitted {
    pub fn revision(self) -> u64 {
        match self {
            Submitted::Created { revision } | Submitted::Replayed { revision } => revision,
        }
    }
}

/// Conjunctive filters plus paging for a pull.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialQuery {
    pub user_id: Option<String>,
    pub label: Option<String>,
    pub status: Option<TrialStatus>,
    /// Only trials received strictly after this instant.
    pub after: Option<DateTime<Utc>>,
    pub limit: usize,
    pub offset: usize,
}

impl Default for TrialQuery {
    fn default() -> Self {
        Self {
            user_id: None,
            label: None,
            status: None,
            after: None,
            limit: DEFAULT_LIMIT,
            offset: 0,
        }
    }
}

struct Entry {
    trial: StoredTrial,
    received: DateTime<Utc>,
    /// Digest of the canonical envelope as first submitted. Relabeling does
    /// not change it, so replays of the original submission stay idempotent.
    digest: String,
}

#[derive(Default)]
struct Index {
    trials: HashMap<Uuid, Entry>,
    order: BTreeMap<(DateTime<Utc>, Uuid), ()>,
    last_received: Option<DateTime<Utc>>,
}

impl Index {
    fn insert(&mut self, entry: Entry) {
        let id = entry.trial.packet.trial_id;
        self.order.insert((entry.received, id), ());
        self.last_received = self.last_received.max(Some(entry.received));
        self.trials.insert(id, entry);
    }
}

pub struct Store {
    path: PathBuf,
    index: RwLock<Index>,
    log: Mutex<File>,
}

pub fn submission_digest(packet: &TrialPacket) -> String {
    let canonical = wire::canonical_json(&wire::envelope_value(packet));
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn format_received(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Micros, true)
}

impl Store {
    /// Opens (creating if needed) the store in directory `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| StoreError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = dir.join(LOG_FILE);
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        let (index, valid_len) = replay(&path, &file)?;
        let len = file.metadata().map_err(io)?.len();
        if valid_len < len {
            file.set_len(valid_len).map_err(io)?;
            file.sync_all().map_err(io)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io)?;
        Ok(Self {
            path,
            index: RwLock::new(index),
            log: Mutex::new(file),
        })
    }

    pub fn log_path(&self) -> &Path {
        &self.path
    }

    fn append(&self, log: &mut File, record: &Value) -> Result<(), StoreError> {
        let mut line = wire::canonical_json(record);
        line.push('\n');
        let io = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        log.write_all(line.as_bytes()).map_err(io)?;
        log.sync_data().map_err(io)
    }

    /// Accepts a packet on the `endpoint` service. Idempotent per trial_id.
    pub fn submit(&self, endpoint: Mode, packet: TrialPacket) -> Result<Submitted, StoreError> {
        if packet.mode != endpoint {
            return Err(StoreError::ModeMismatch {
                endpoint,
                actual: packet.mode,
            });
        }
        let digest = submission_digest(&packet);
        let mut log = self.log.lock().expect("store log lock poisoned");
        let last = {
            let index = self.index.read().expect("store index lock poisoned");
            if let Some(existing) = index.trials.get(&packet.trial_id) {
                return if existing.digest == digest {
                    Ok(Submitted::Replayed {
                        revision: existing.trial.revision,
                    })
                } else {
                    Err(StoreError::ConflictingResubmission(packet.trial_id))
                };
            }
            index.last_received
        };
        let mut received = Utc::now();
        if let Some(last) = last {
            if received <= last {
                received = last + chrono::Duration::microseconds(1);
            }
        }
        // Round to the stored precision so replay reproduces the same key.
        let received_at = format_received(received);
        let received = DateTime::parse_from_rfc3339(&received_at)
            .expect("own format parses")
            .with_timezone(&Utc);
        let trial = StoredTrial {
            packet,
            received_at,
            revision: 1,
        };
        self.append(
            &mut log,
            &json!({"op": "put", "digest": digest, "trial": trial.to_value()}),
        )?;
        self.index.write().expect("store index lock poisoned").insert(Entry {
            trial,
            received,
            digest,
        });
        Ok(Submitted::Created { revision: 1 })
    }

    /// Sets the label on a train trial and bumps its revision.
    pub fn label(&self, trial_id: Uuid, label: &str) -> Result<StoredTrial, StoreError> {
        if label.is_empty() {
            return Err(StoreError::EmptyLabel);
        }
        let mut log = self.log.lock().expect("store log lock poisoned");
        let revision = {
            let index = self.index.read().expect("store index lock poisoned");
            let entry = index.trials.get(&trial_id).ok_or(StoreError::NotFound(trial_id))?;
            if entry.trial.packet.mode == Mode::Test {
                return Err(StoreError::TestTrialLabel(trial_id));
            }
            entry.trial.revision + 1
        };
        self.append(
            &mut log,
            &json!({"op": "label", "trial_id": trial_id.to_string(), "label": label, "revision": revision}),
        )?;
        let mut index = self.index.write().expect("store index lock poisoned");
        let entry = index.trials.get_mut(&trial_id).expect("checked under the log lock");
        entry.trial.packet.label = Some(label.to_owned());
        entry.trial.revision = revision;
        Ok(entry.trial.clone())
    }

    pub fn get(&self, trial_id: Uuid) -> Option<StoredTrial> {
        let index = self.index.read().expect("store index lock poisoned");
        index.trials.get(&trial_id).map(|e| e.trial.clone())
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("store index lock poisoned").trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trials of one mode matching `q`, ordered by received_at then trial_id.
    pub fn query(&self, mode: Mode, q: &TrialQuery) -> Vec<StoredTrial> {
        let index = self.index.read().expect("store index lock poisoned");
        index
            .order
            .keys()
            .filter(|(received, _)| q.after.is_none_or(|a| *received > a))
            .map(|(_, id)| &index.trials[id].trial)
            .filter(|t| t.packet.mode == mode)
            .filter(|t| q.user_id.as_ref().is_none_or(|u| &t.packet.user_id == u))
            .filter(|t| q.label.is_none_or_eq(t.packet.label.as_deref()))
            .filter(|t| q.status.is_none_or(|s| t.status() == s))
            .skip(q.offset)
            .take(q.limit)
            .cloned()
            .collect()
    }
}

trait OptionStrExt {
    fn is_none_or_eq(&self, value: Option<&str>) -> bool;
}

impl OptionStrExt for Option<String> {
    fn is_none_or_eq(&self, value: Option<&str>) -> bool {
        match self {
            None => true,
            Some(want) => value == Some(want.as_str()),
        }
    }
}

/// Rebuilds the index from the log. Returns the byte length of the valid
/// prefix so a torn tail can be cut off.
fn replay(path: &Path, file: &File) -> Result<(Index, u64), StoreError> {
    let mut index = Index::default();
    let mut reader = BufReader::new(file);
    let mut offset = 0u64;
    let mut line_no = 0usize;
    let mut buf = Vec::new();
    let corrupt = |line: usize, reason: String| StoreError::Corrupt {
        path: path.to_path_buf(),
        line,
        reason,
    };
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if buf.last() != Some(&b'\n') {
            // Crash mid-append: the record was never acknowledged.
            break;
        }
        let record: Value = serde_json::from_slice(&buf).map_err(|e| corrupt(line_no, e.to_string()))?;
        apply(&mut index, &record).map_err(|reason| corrupt(line_no, reason))?;
        offset += n as u64;
    }
    Ok((index, offset))
}

fn apply(index: &mut Index, record: &Value) -> Result<(), String> {
    match record.get("op").and_then(Value::as_str) {
        Some("put") => {
            let digest = record
                .get("digest")
                .and_then(Value::as_str)
                .ok_or("put without digest")?
                .to_owned();
            let trial = StoredTrial::from_value(record.get("trial").ok_or("put without trial")?)
                .map_err(|e| e.to_string())?;
            let received = DateTime::parse_from_rfc3339(&trial.received_at)
                .map_err(|e| format!("received_at: {e}"))?
                .with_timezone(&Utc);
            index.insert(Entry {
                trial,
                received,
                digest,
            });
            Ok(())
        }
        Some("label") => {
            let id = record
                .get("trial_id")
                .and_then(Value::as_str)
                .and_then(|s| Uuid::parse_str(s).ok())
                .ok_or("label without trial_id")?;
            let label = record.get("label").and_then(Value::as_str).ok_or("label without label")?;
            let revision = record
                .get("revision")
                .and_then(Value::as_u64)
                .ok_or("label without revision")?;
            let entry = index.trials.get_mut(&id).ok_or("label for unknown trial")?;
            entry.trial.packet.label = Some(label.to_owned());
            entry.trial.revision = revision;
            Ok(())
        }
        other => Err(format!("unknown op {other:?}")),
    }
}
