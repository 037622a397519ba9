use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::protocols::Snapshot;

use super::{write_atomic, StorageError};

pub trait SnapshotStore: Send {
    /// Stores the snapshot durably, then makes it visible as committed.
    fn put_commit(&mut self, snapshot: &Snapshot) -> Result<u64, StorageError>;
    /// The committed snapshot with the largest id.
    fn latest(&self) -> Result<Option<Snapshot>, StorageError>;
    fn get(&self, id: u64) -> Result<Option<Snapshot>, StorageError>;
}

#[derive(Debug, Default)]
pub struct MemorySnapshotStore {
    committed: BTreeMap<u64, Snapshot>,
}

impl SnapshotStore for MemorySnapshotStore {
    fn put_commit(&mut self, snapshot: &Snapshot) -> Result<u64, StorageError> {
        if self.committed.contains_key(&snapshot.snapshot_id) {
            return Err(StorageError::DuplicateId(snapshot.snapshot_id));
        }
        let mut s = snapshot.clone();
        s.committed = true;
        self.committed.insert(s.snapshot_id, s);
        Ok(snapshot.snapshot_id)
    }

    fn latest(&self) -> Result<Option<Snapshot>, StorageError> {
        Ok(self.committed.values().next_back().cloned())
    }

    fn get(&self, id: u64) -> Result<Option<Snapshot>, StorageError> {
        Ok(self.committed.get(&id).cloned())
    }
}

/// Steps of the file write sequence after which a test can stop, as if the
/// process died there.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    AfterTempWrite,
    AfterRename,
}

/// One directory per run: `snapshot-<id>.json` plus a `COMMITTED-<id>` marker.
/// Only snapshots with a marker are visible.
#[derive(Debug)]
pub struct FileSnapshotStore {
    root: PathBuf,
}

impl FileSnapshotStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| StorageError::io(&root, e))?;
        Ok(FileSnapshotStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn data_path(&self, id: u64) -> PathBuf {
        self.root.join(format!("snapshot-{id}.json"))
    }

    fn marker_path(&self, id: u64) -> PathBuf {
        self.root.join(format!("COMMITTED-{id}"))
    }

    fn committed_ids(&self) -> Result<Vec<u64>, StorageError> {
        let mut ids = Vec::new();
        let dir = std::fs::read_dir(&self.root).map_err(|e| StorageError::io(&self.root, e))?;
        for entry in dir {
            let entry = entry.map_err(|e| StorageError::io(&self.root, e))?;
            let name = entry.file_name();
            if let Some(id) = name.to_str().and_then(|n| n.strip_prefix("COMMITTED-")) {
                if let Ok(id) = id.parse::<u64>() {
                    ids.push(id);
                }
            }
        }
        ids.sort_unstable();
        Ok(ids)
    }

    #[doc(hidden)]
    pub fn put_commit_until(
        &mut self,
        snapshot: &Snapshot,
        crash: Option<CrashPoint>,
    ) -> Result<u64, StorageError> {
        let id = snapshot.snapshot_id;
        if self.marker_path(id).exists() {
            return Err(StorageError::DuplicateId(id));
        }
        let mut s = snapshot.clone();
        s.committed = true;
        let body = serde_json::to_vec(&s).map_err(|e| StorageError::corrupt(&self.data_path(id), e))?;
        let path = self.data_path(id);
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &body).map_err(|e| StorageError::io(&tmp, e))?;
        if crash == Some(CrashPoint::AfterTempWrite) {
            return Ok(id);
        }
        std::fs::rename(&tmp, &path).map_err(|e| StorageError::io(&path, e))?;
        if crash == Some(CrashPoint::AfterRename) {
            return Ok(id);
        }
        write_atomic(&self.marker_path(id), b"")?;
        Ok(id)
    }
}

impl SnapshotStore for FileSnapshotStore {
    fn put_commit(&mut self, snapshot: &Snapshot) -> Result<u64, StorageError> {
        self.put_commit_until(snapshot, None)
    }

    fn latest(&self) -> Result<Option<Snapshot>, StorageError> {
        match self.committed_ids()?.last() {
            Some(&id) => self.get(id),
            None => Ok(None),
        }
    }

    fn get(&self, id: u64) -> Result<Option<Snapshot>, StorageError> {
        if !self.marker_path(id).exists() {
            return Ok(None);
        }
        let path = self.data_path(id);
        let body = std::fs::read(&path).map_err(|e| StorageError::io(&path, e))?;
        serde_json::from_slice(&body)
            .map(Some)
            .map_err(|e| StorageError::corrupt(&path, e))
    }
}
