use std::io::Write;
use std::path::PathBuf;

use crate::protocols::Bundle;

use super::StorageError;

/// The data consumer as the barrier sees it. Receipt and the update of the
/// last bundle happen together.
pub trait ConsumerEndpoint: Send {
    /// Appends the bundle and acknowledges it. A bundle identical to the
    /// last one is a retry and is acknowledged without appending.
    fn receive(&mut self, bundle: &Bundle) -> Result<(), StorageError>;
    fn last_bundle(&self) -> Result<Option<Bundle>, StorageError>;
    fn log(&self) -> Result<Vec<Bundle>, StorageError>;
}

#[derive(Debug, Default)]
pub struct MemoryConsumer {
    bundles: Vec<Bundle>,
}

impl ConsumerEndpoint for MemoryConsumer {
    fn receive(&mut self, bundle: &Bundle) -> Result<(), StorageError> {
        if self.bundles.last() != Some(bundle) {
            self.bundles.push(bundle.clone());
        }
        Ok(())
    }

    fn last_bundle(&self) -> Result<Option<Bundle>, StorageError> {
        Ok(self.bundles.last().cloned())
    }

    fn log(&self) -> Result<Vec<Bundle>, StorageError> {
        Ok(self.bundles.clone())
    }
}

/// JSON lines of bundles in `bundles.jsonl`.
#[derive(Debug)]
pub struct FileConsumer {
    root: PathBuf,
    last: Option<Bundle>,
}

impl FileConsumer {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| StorageError::io(&root, e))?;
        let mut c = FileConsumer { root, last: None };
        c.last = c.log()?.pop();
        Ok(c)
    }

    fn path(&self) -> PathBuf {
        self.root.join("bundles.jsonl")
    }
}

impl ConsumerEndpoint for FileConsumer {
    fn receive(&mut self, bundle: &Bundle) -> Result<(), StorageError> {
        if self.last.as_ref() == Some(bundle) {
            return Ok(());
        }
        let path = self.path();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StorageError::io(&path, e))?;
        let line = serde_json::to_string(bundle).map_err(|e| StorageError::corrupt(&path, e))?;
        writeln!(f, "{line}").map_err(|e| StorageError::io(&path, e))?;
        self.last = Some(bundle.clone());
        Ok(())
    }

    fn last_bundle(&self) -> Result<Option<Bundle>, StorageError> {
        Ok(self.last.clone())
    }

    fn log(&self) -> Result<Vec<Bundle>, StorageError> {
        let path = self.path();
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{OrderKey, Payload};
    use crate::oracle::trace::DeliveredItem;

    fn bundle(seq: u64) -> Bundle {
        Bundle::new(vec![DeliveredItem {
            id: seq,
            key: OrderKey::input(seq),
            payload: Payload::Integer(seq as i64),
        }])
        .unwrap()
    }

    fn contract(c: &mut dyn ConsumerEndpoint) {
        assert_eq!(c.last_bundle().unwrap(), None);
        c.receive(&bundle(1)).unwrap();
        assert_eq!(c.last_bundle().unwrap(), Some(bundle(1)));
        c.receive(&bundle(1)).unwrap();
        assert_eq!(c.log().unwrap().len(), 1);
        c.receive(&bundle(2)).unwrap();
        let log = c.log().unwrap();
        assert_eq!(log.len(), 2);
        assert!(log.windows(2).all(|w| w[0].t_last < w[1].t_last));
    }

    #[test]
    fn memory_contract() {
        contract(&mut MemoryConsumer::default());
    }

    #[test]
    fn file_contract_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        contract(&mut FileConsumer::open(dir.path()).unwrap());
        let reopened = FileConsumer::open(dir.path()).unwrap();
        assert_eq!(reopened.last_bundle().unwrap(), Some(bundle(2)));
    }
}
