//! Persistence used by the protocols: snapshot store, producer replay log and
//! the consumer endpoint. Each has an in-memory and a file-backed variant
//! with the same contract.

mod consumer;
mod replay;
mod snapshot;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use consumer::{ConsumerEndpoint, FileConsumer, MemoryConsumer};
pub use replay::{FileReplayLog, MemoryReplayLog, ReplayLog};
pub use snapshot::{CrashPoint, FileSnapshotStore, MemorySnapshotStore, SnapshotStore};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StorageError {
    #[error("snapshot {0} already exists")]
    DuplicateId(u64),
    #[error("replay requested from seq {requested}, but the log is truncated through {floor}")]
    TruncatedRange { requested: u64, floor: u64 },
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("corrupt record in {path}: {reason}")]
    Corrupt { path: String, reason: String },
}

impl StorageError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        StorageError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }

    pub(crate) fn corrupt(path: &Path, e: impl std::fmt::Display) -> Self {
        StorageError::Corrupt {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }
}

/// Which variant a simulation uses.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageBackend {
    #[default]
    Memory,
    File { root: PathBuf },
}

/// The three stores of one run.
pub struct Stores {
    pub snapshots: Box<dyn SnapshotStore>,
    pub replay: Box<dyn ReplayLog>,
    pub consumer: Box<dyn ConsumerEndpoint>,
}

impl Stores {
    pub fn open(backend: &StorageBackend) -> Result<Self, StorageError> {
        Ok(match backend {
            StorageBackend::Memory => Stores {
                snapshots: Box::new(MemorySnapshotStore::default()),
                replay: Box::new(MemoryReplayLog::default()),
                consumer: Box::new(MemoryConsumer::default()),
            },
            StorageBackend::File { root } => {
                std::fs::create_dir_all(root).map_err(|e| StorageError::io(root, e))?;
                Stores {
                    snapshots: Box::new(FileSnapshotStore::open(root.join("snapshots"))?),
                    replay: Box::new(FileReplayLog::open(root.join("replay"))?),
                    consumer: Box::new(FileConsumer::open(root.join("consumer"))?),
                }
            }
        })
    }
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), StorageError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| StorageError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| StorageError::io(path, e))
}
