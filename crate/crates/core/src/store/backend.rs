use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::{EventRecord, StoreError};

/// Storage behind an [`super::EventStore`]. A remote document store can be
/// plugged in by implementing this trait.
pub trait EventBackend: Send + Sync {
    /// Every record previously persisted, in append order.
    fn load(&mut self) -> Result<Vec<EventRecord>, StoreError>;
    fn persist(&mut self, record: &EventRecord) -> Result<(), StoreError>;
    fn sync(&mut self) -> Result<(), StoreError>;
}

#[derive(Default)]
pub struct MemoryBackend;

impl EventBackend for MemoryBackend {
    fn load(&mut self) -> Result<Vec<EventRecord>, StoreError> {
        Ok(Vec::new())
    }

    fn persist(&mut self, _record: &EventRecord) -> Result<(), StoreError> {
        Ok(())
    }

    fn sync(&mut self) -> Result<(), StoreError> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncMode {
    /// fsync after each record; an acknowledged append survives a crash.
    EveryAppend,
    /// Buffer writes until [`EventBackend::sync`]; for bulk loads.
    OnDemand,
}

/// One JSON object per line.
pub struct FileBackend {
    path: PathBuf,
    writer: BufWriter<File>,
    sync: SyncMode,
}

impl FileBackend {
    pub fn open(path: &Path, sync: SyncMode) -> Result<Self, StoreError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
        Ok(FileBackend { path: path.to_path_buf(), writer: BufWriter::new(file), sync })
    }
}

impl EventBackend for FileBackend {
    fn load(&mut self) -> Result<Vec<EventRecord>, StoreError> {
        let mut text = String::new();
        File::open(&self.path)?.read_to_string(&mut text)?;

        let mut records = Vec::new();
        let mut good_len = 0usize;
        let mut offset = 0usize;
        let mut lines = text.split_inclusive('\n').enumerate().peekable();
        while let Some((idx, line)) = lines.next() {
            offset += line.len();
            let complete = line.ends_with('\n');
            let body = line.trim_end_matches(['\n', '\r']);
            if body.trim().is_empty() {
                good_len = offset;
                continue;
            }
            match serde_json::from_str::<EventRecord>(body) {
                Ok(r) if complete => {
                    records.push(r);
                    good_len = offset;
                }
                // A torn final write was never acknowledged; drop it.
                _ if lines.peek().is_none() && !complete => break,
                Ok(_) => unreachable!("incomplete lines are only the last"),
                Err(e) => {
                    return Err(StoreError::Corrupt { line: idx + 1, message: e.to_string() });
                }
            }
        }
        if good_len < text.len() {
            let file = OpenOptions::new().write(true).open(&self.path)?;
            file.set_len(good_len as u64)?;
            file.sync_all()?;
            self.writer.get_mut().seek(SeekFrom::End(0))?;
        }
        Ok(records)
    }

    fn persist(&mut self, record: &EventRecord) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.writer.write_all(&line)?;
        if self.sync == SyncMode::EveryAppend {
            self.writer.flush()?;
            self.writer.get_ref().sync_data()?;
        }
        Ok(())
    }

    fn sync(&mut self) -> Result<(), StoreError> {
        self.writer.flush()?;
        self.writer.get_ref().sync_data()?;
        Ok(())
    }
}

impl Drop for FileBackend {
    fn drop(&mut self) {
        let _ = self.writer.flush();
    }
}

#[cfg(test)]
mod tests {
    use super::super::{EventKind, EventStore};
    use super::*;
    use crate::time::Timestamp;
    use serde_json::json;

    #[test]
    fn reopen_preserves_records_and_seq() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        {
            let store = EventStore::open(&path).unwrap();
            store.append("a", EventKind::Timeout, json!({"n": 1}), Timestamp(10)).unwrap();
            store.append("a", EventKind::Timeout, json!({"n": 2}), Timestamp(11)).unwrap();
            // dropped without close: simulates a kill after acknowledged writes
        }
        let store = EventStore::open(&path).unwrap();
        assert_eq!(store.read_stream("a", 1).unwrap().len(), 2);
        let next = store.append("a", EventKind::Timeout, json!({}), Timestamp(12)).unwrap();
        assert_eq!(next.seq, 3);
    }

    #[test]
    fn torn_tail_is_discarded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        {
            let store = EventStore::open(&path).unwrap();
            store.append("a", EventKind::Timeout, json!({}), Timestamp(1)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"seq":2,"stream_id":"a","ki"#).unwrap();
        drop(f);

        let store = EventStore::open(&path).unwrap();
        assert_eq!(store.len(), 1);
        let r = store.append("a", EventKind::Timeout, json!({}), Timestamp(2)).unwrap();
        assert_eq!(r.seq, 2);
        drop(store);
        let store = EventStore::open(&path).unwrap();
        assert_eq!(store.read_stream("a", 1).unwrap().len(), 2);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        std::fs::write(&path, "garbage\n{}\n").unwrap();
        assert!(matches!(EventStore::open(&path), Err(StoreError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn buffered_mode_persists_after_sync() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let store = EventStore::open_with(&path, SyncMode::OnDemand).unwrap();
        store.append("a", EventKind::Timeout, json!({}), Timestamp(1)).unwrap();
        store.sync().unwrap();
        let reopened = EventStore::open(&path).unwrap();
        assert_eq!(reopened.len(), 1);
    }
}
