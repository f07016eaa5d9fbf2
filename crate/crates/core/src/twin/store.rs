use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::metrology::MeasurementRecord;

/// Append-only in-memory record store. Readers take snapshots: a prefix
/// of the log that later appends never modify.
#[derive(Debug, Default)]
pub struct MeasurementStore {
    inner: RwLock<Inner>,
}

#[derive(Debug, Default)]
struct Inner {
    records: Vec<Arc<MeasurementRecord>>,
    by_id: HashMap<String, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Append {
    /// Newly stored at this sequence number (0-based).
    Stored(u64),
    /// Already present at this sequence number.
    Duplicate(u64),
}

impl MeasurementStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&self, record: MeasurementRecord) -> Append {
        let mut inner = self.inner.write().expect("store lock");
        if let Some(&seq) = inner.by_id.get(&record.record_id) {
            return Append::Duplicate(seq);
        }
        let seq = inner.records.len() as u64;
        inner.by_id.insert(record.record_id.clone(), seq);
        inner.records.push(Arc::new(record));
        Append::Stored(seq)
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("store lock").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<Arc<MeasurementRecord>> {
        self.inner.read().expect("store lock").records.clone()
    }

    /// Records with sequence numbers in `from..`.
    pub fn since(&self, from: usize) -> Vec<Arc<MeasurementRecord>> {
        let inner = self.inner.read().expect("store lock");
        inner.records.get(from..).map(<[_]>::to_vec).unwrap_or_default()
    }

    pub fn get(&self, record_id: &str) -> Option<Arc<MeasurementRecord>> {
        let inner = self.inner.read().expect("store lock");
        inner.by_id.get(record_id).map(|&s| inner.records[s as usize].clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::reference_campaign;

    #[test]
    fn duplicates_are_idempotent() {
        let recs = reference_campaign(1).unwrap();
        let s = MeasurementStore::new();
        assert_eq!(s.append(recs[0].clone()), Append::Stored(0));
        assert_eq!(s.append(recs[1].clone()), Append::Stored(1));
        assert_eq!(s.append(recs[0].clone()), Append::Duplicate(0));
        assert_eq!(s.len(), 2);
        assert_eq!(s.since(1).len(), 1);
        assert_eq!(s.since(5).len(), 0);
    }

    #[test]
    fn snapshots_are_stable_under_concurrent_appends() {
        let recs = reference_campaign(2).unwrap();
        let store = Arc::new(MeasurementStore::new());
        std::thread::scope(|sc| {
            let w = store.clone();
            let writer_recs = recs.clone();
            sc.spawn(move || {
                for r in writer_recs {
                    w.append(r);
                }
            });
            for _ in 0..4 {
                let r = store.clone();
                let expected = recs.clone();
                sc.spawn(move || {
                    for _ in 0..200 {
                        let snap = r.snapshot();
                        for (a, b) in snap.iter().zip(&expected) {
                            assert_eq!(**a, *b);
                        }
                    }
                });
            }
        });
        assert_eq!(store.len(), 320);
    }
}
