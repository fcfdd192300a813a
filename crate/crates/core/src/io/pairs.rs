//! Sidecar mapping detection pairs to the feature row pooled over their
//! union box. Keys are unordered: `(a, b)` and `(b, a)` share one row since
//! the union box is symmetric.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::jsonl::{read_records, write_records};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairFeatureIndex {
    map: BTreeMap<(u32, u32), u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    first_ref: u32,
    second_ref: u32,
    feature_ref: u32,
}

fn key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

impl PairFeatureIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: u32, b: u32, feature_ref: u32) {
        self.map.insert(key(a, b), feature_ref);
    }

    pub fn get(&self, a: u32, b: u32) -> Option<u32> {
        self.map.get(&key(a, b)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        self.map.iter().map(|(&(a, b), &r)| (a, b, r))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut index = Self::new();
        for (line, rec) in read_records::<PairRecord>(path)? {
            if rec.first_ref == rec.second_ref {
                return Err(Error::parse(path, line, "pair refers to the same detection twice"));
            }
            index.insert(rec.first_ref, rec.second_ref, rec.feature_ref);
        }
        Ok(index)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let records = self.iter().map(|(first_ref, second_ref, feature_ref)| PairRecord {
            first_ref,
            second_ref,
            feature_ref,
        });
        write_records(path.as_ref(), records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_lookup_and_round_trip() {
        let mut idx = PairFeatureIndex::new();
        idx.insert(7, 3, 12);
        assert_eq!(idx.get(3, 7), Some(12));
        assert_eq!(idx.get(7, 3), Some(12));
        assert_eq!(idx.get(3, 4), None);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pairs.jsonl");
        idx.write(&p).unwrap();
        assert_eq!(PairFeatureIndex::read(&p).unwrap(), idx);
    }
}
