use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use crate::model::Element;

use super::{write_atomic, StorageError};

/// Producer-side log of injected inputs, keyed by producer sequence.
pub trait ReplayLog: Send {
    fn append(&mut self, elem: &Element) -> Result<(), StorageError>;
    /// Retained elements with sequence greater than `after`, in order.
    fn replay_from(&self, after: u64) -> Result<Vec<Element>, StorageError>;
    /// Drops every element with sequence at most `through`.
    fn truncate_through(&mut self, through: u64) -> Result<(), StorageError>;
    fn floor(&self) -> u64;
}

fn check_floor(after: u64, floor: u64) -> Result<(), StorageError> {
    if after < floor {
        Err(StorageError::TruncatedRange {
            requested: after,
            floor,
        })
    } else {
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct MemoryReplayLog {
    entries: BTreeMap<u64, Element>,
    floor: u64,
}

impl ReplayLog for MemoryReplayLog {
    fn append(&mut self, elem: &Element) -> Result<(), StorageError> {
        self.entries.insert(elem.seq(), elem.clone());
        Ok(())
    }

    fn replay_from(&self, after: u64) -> Result<Vec<Element>, StorageError> {
        check_floor(after, self.floor)?;
        Ok(self.entries.range(after + 1..).map(|(_, e)| e.clone()).collect())
    }

    fn truncate_through(&mut self, through: u64) -> Result<(), StorageError> {
        if through > self.floor {
            self.entries = self.entries.split_off(&(through + 1));
            self.floor = through;
        }
        Ok(())
    }

    fn floor(&self) -> u64 {
        self.floor
    }
}

/// JSON lines of elements in `replay.jsonl`; the floor lives in `floor`.
#[derive(Debug)]
pub struct FileReplayLog {
    root: PathBuf,
    floor: u64,
}

impl FileReplayLog {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| StorageError::io(&root, e))?;
        let floor_path = root.join("floor");
        let floor = match std::fs::read_to_string(&floor_path) {
            Ok(s) => s.trim().parse().map_err(|e| StorageError::corrupt(&floor_path, e))?,
            Err(_) => 0,
        };
        Ok(FileReplayLog { root, floor })
    }

    fn log_path(&self) -> PathBuf {
        self.root.join("replay.jsonl")
    }

    fn read_all(&self) -> Result<Vec<Element>, StorageError> {
        let path = self.log_path();
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(StorageError::io(&path, e)),
        };
        text.lines()
            .filter(|l| !l.is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| StorageError::corrupt(&path, e)))
            .collect()
    }
}

impl ReplayLog for FileReplayLog {
    fn append(&mut self, elem: &Element) -> Result<(), StorageError> {
        let path = self.log_path();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StorageError::io(&path, e))?;
        let line = serde_json::to_string(elem).map_err(|e| StorageError::corrupt(&path, e))?;
        writeln!(f, "{line}").map_err(|e| StorageError::io(&path, e))
    }

    fn replay_from(&self, after: u64) -> Result<Vec<Element>, StorageError> {
        check_floor(after, self.floor)?;
        // later appends of the same sequence replace earlier ones
        let mut by_seq = BTreeMap::new();
        for e in self.read_all()? {
            by_seq.insert(e.seq(), e);
        }
        Ok(by_seq.into_values().filter(|e| e.seq() > after).collect())
    }

    fn truncate_through(&mut self, through: u64) -> Result<(), StorageError> {
        if through <= self.floor {
            return Ok(());
        }
        let mut body = String::new();
        for e in self.read_all()?.into_iter().filter(|e| e.seq() > through) {
            body.push_str(&serde_json::to_string(&e).expect("element serializes"));
            body.push('\n');
        }
        write_atomic(&self.log_path(), body.as_bytes())?;
        write_atomic(&self.root.join("floor"), through.to_string().as_bytes())?;
        self.floor = through;
        Ok(())
    }

    fn floor(&self) -> u64 {
        self.floor
    }
}
