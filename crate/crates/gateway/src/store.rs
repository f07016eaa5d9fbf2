//! Data directory of a running twin.
//!
//! `measurements.jsonl` and `alerts.jsonl` are append-only; every line is
//! handed to the OS in a single write ending in a newline, and readers
//! drop a last line that lacks one. `registry.json` is replaced by
//! write-to-temp then rename.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use metrotwin_core::metrology::MeasurementRecord;
use metrotwin_core::twin::{Alert, RegistrySnapshot};

use crate::format::{read_jsonl, serialize_record, FormatError};

pub const MEASUREMENTS_FILE: &str = "measurements.jsonl";
pub const ALERTS_FILE: &str = "alerts.jsonl";
pub const REGISTRY_FILE: &str = "registry.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

#[derive(Debug)]
pub struct Persisted {
    pub records: Vec<MeasurementRecord>,
    pub registry: RegistrySnapshot,
    pub alerts: Vec<Alert>,
}

#[derive(Debug)]
pub struct FileStore {
    root: PathBuf,
    measurements: Mutex<File>,
    alerts: Mutex<(File, u64)>,
    registry: Mutex<()>,
}

/// Cut an unterminated last line left by an interrupted append.
fn drop_partial_tail(path: &Path) -> std::io::Result<()> {
    let mut f = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)?;
    let len = f.metadata()?.len();
    if len == 0 {
        return Ok(());
    }
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    if bytes.last() == Some(&b'\n') {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    f.set_len(keep as u64)?;
    f.seek(SeekFrom::End(0))?;
    Ok(())
}

fn append_handle(path: &Path) -> std::io::Result<File> {
    drop_partial_tail(path)?;
    OpenOptions::new().append(true).create(true).open(path)
}

pub fn read_records(path: &Path) -> Result<Vec<MeasurementRecord>, StoreError> {
    Ok(read_jsonl(BufReader::new(File::open(path)?))?)
}

fn read_alerts(path: &Path) -> Result<Vec<Alert>, StoreError> {
    let mut out = Vec::new();
    let mut reader = BufReader::new(File::open(path)?);
    let mut buf = String::new();
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 || !buf.ends_with('\n') {
            break;
        }
        if buf.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(buf.trim()).map_err(|source| StoreError::Json { path: path.into(), source })?);
    }
    Ok(out)
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let measurements = append_handle(&root.join(MEASUREMENTS_FILE))?;
        let alerts_path = root.join(ALERTS_FILE);
        let alerts_file = append_handle(&alerts_path)?;
        let last_alert = read_alerts(&alerts_path)?.last().map_or(0, |a| a.alert_id);
        Ok(FileStore {
            root,
            measurements: Mutex::new(measurements),
            alerts: Mutex::new((alerts_file, last_alert)),
            registry: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn load(&self) -> Result<Persisted, StoreError> {
        let records = read_records(&self.root.join(MEASUREMENTS_FILE))?;
        let alerts = read_alerts(&self.root.join(ALERTS_FILE))?;
        let reg_path = self.root.join(REGISTRY_FILE);
        let registry = if reg_path.exists() {
            let text = fs::read_to_string(&reg_path)?;
            serde_json::from_str(&text).map_err(|source| StoreError::Json { path: reg_path, source })?
        } else {
            RegistrySnapshot { entries: Vec::new(), active_artifact: None }
        };
        Ok(Persisted { records, registry, alerts })
    }

    pub fn append_record(&self, record: &MeasurementRecord) -> std::io::Result<()> {
        let mut line = serialize_record(record);
        line.push('\n');
        let mut f = self.measurements.lock().expect("measurement file lock");
        f.write_all(line.as_bytes())?;
        f.flush()
    }

    /// Append alerts not yet on disk; ids at or below the last persisted
    /// one are skipped.
    pub fn append_alerts(&self, alerts: &[Alert]) -> std::io::Result<()> {
        let mut guard = self.alerts.lock().expect("alert file lock");
        let (file, last) = &mut *guard;
        let mut buf = String::new();
        let mut newest = *last;
        for a in alerts.iter().filter(|a| a.alert_id > *last) {
            buf.push_str(&serde_json::to_string(a).expect("alerts serialize"));
            buf.push('\n');
            newest = newest.max(a.alert_id);
        }
        if !buf.is_empty() {
            file.write_all(buf.as_bytes())?;
            file.flush()?;
            *last = newest;
        }
        Ok(())
    }

    pub fn last_persisted_alert(&self) -> u64 {
        self.alerts.lock().expect("alert file lock").1
    }

    pub fn save_registry(&self, snapshot: &RegistrySnapshot) -> std::io::Result<()> {
        let _one_writer = self.registry.lock().expect("registry file lock");
        let tmp = self.root.join(format!("{REGISTRY_FILE}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(serde_json::to_string(snapshot).expect("registry serializes").as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(tmp, self.root.join(REGISTRY_FILE))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use metrotwin_core::campaign::reference_campaign;

    #[test]
    fn reopen_after_torn_append() {
        let dir = tempfile::tempdir().unwrap();
        let records = reference_campaign(4).unwrap();
        {
            let store = FileStore::open(dir.path()).unwrap();
            for r in &records[..5] {
                store.append_record(r).unwrap();
            }
        }
        let path = dir.path().join(MEASUREMENTS_FILE);
        let torn = serialize_record(&records[5]);
        OpenOptions::new().append(true).open(&path).unwrap().write_all(&torn.as_bytes()[..40]).unwrap();
        assert_eq!(read_records(&path).unwrap(), records[..5]);

        let store = FileStore::open(dir.path()).unwrap();
        store.append_record(&records[6]).unwrap();
        let loaded = store.load().unwrap().records;
        assert_eq!(loaded.len(), 6);
        assert_eq!(loaded[5], records[6]);
    }

    #[test]
    fn empty_directory_loads_empty_state() {
        let dir = tempfile::tempdir().unwrap();
        let p = FileStore::open(dir.path().join("fresh")).unwrap().load().unwrap();
        assert!(p.records.is_empty() && p.alerts.is_empty() && p.registry.entries.is_empty());
    }
}
