//! Binary feature store.
//!
//! Layout, all integers and reals little-endian:
//!
//! ```text
//! offset 0   magic  b"VRDF"
//! offset 4   count  u32
//! offset 8   dim    u32
//! offset 12  count * dim f32, row-major
//! ```

use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"VRDF";
const HEADER_LEN: usize = 12;

/// Dense pooled region features, one row per `feature_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    data: Vec<f32>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::FeatureFormat("dim must be positive".into()));
        }
        Ok(FeatureStore {
            dim,
            data: Vec::new(),
        })
    }

    pub fn from_rows(dim: usize, data: Vec<f32>) -> Result<Self> {
        let mut store = Self::new(dim)?;
        if !data.len().is_multiple_of(dim) {
            return Err(Error::FeatureFormat(format!(
                "{} values is not a multiple of dim {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::FeatureFormat(format!(
                "non-finite value in row {}",
                i / dim
            )));
        }
        store.data = data;
        Ok(store)
    }

    /// Appends a row and returns its index.
    pub fn push(&mut self, row: &[f32]) -> Result<u32> {
        if row.len() != self.dim {
            return Err(Error::Dimension {
                branch: "feature store",
                expected: self.dim,
                actual: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::FeatureFormat("non-finite value".into()));
        }
        let idx = self.len();
        self.data.extend_from_slice(row);
        u32::try_from(idx).map_err(|_| Error::FeatureFormat("too many rows".into()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, index: u32) -> Option<&[f32]> {
        let start = index as usize * self.dim;
        self.data.get(start..start + self.dim)
    }

    pub fn row_f64(&self, index: u32) -> Result<Vec<f64>> {
        self.row(index)
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .ok_or_else(|| Error::MissingFeature(format!("feature_ref {index} out of range ({} rows)", self.len())))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(&FEATURE_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::FeatureFormat(format!(
                "header truncated: expected {HEADER_LEN} bytes, found {}",
                bytes.len()
            )));
        }
        if bytes[0..4] != FEATURE_MAGIC {
            return Err(Error::FeatureFormat(format!(
                "bad magic {:?}, expected \"VRDF\"",
                &bytes[0..4]
            )));
        }
        let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let count = word(4);
        let dim = word(8);
        if dim == 0 {
            return Err(Error::FeatureFormat("dim must be positive".into()));
        }
        let expected = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::FeatureFormat("count * dim overflows".into()))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(Error::FeatureFormat(format!(
                "expected {expected} bytes of payload for {count}x{dim}, found {}",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_rows(dim, data)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(count: u32, dim: u32) -> Vec<u8> {
        let mut b = FEATURE_MAGIC.to_vec();
        b.extend_from_slice(&count.to_le_bytes());
        b.extend_from_slice(&dim.to_le_bytes());
        b
    }

    #[test]
    fn reads_three_by_four() {
        let mut bytes = header(3, 4);
        for i in 0..12 {
            bytes.extend_from_slice(&(i as f32).to_le_bytes());
        }
        assert_eq!(bytes.len(), 12 + 48);
        let store = FeatureStore::from_bytes(&bytes).unwrap();
        assert_eq!((store.len(), store.dim()), (3, 4));
        assert_eq!(store.row(2).unwrap(), &[8.0, 9.0, 10.0, 11.0]);
        assert!(store.row(3).is_none());
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = header(3, 4);
        bytes.extend_from_slice(&[0u8; 40]);
        let err = FeatureStore::from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("expected 48 bytes"), "{err}");
    }

    #[test]
    fn zero_dim_and_bad_magic() {
        assert!(FeatureStore::from_bytes(&header(0, 0)).is_err());
        let mut bytes = header(0, 4);
        bytes[0] = b'X';
        assert!(FeatureStore::from_bytes(&bytes).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn non_finite_rejected() {
        let mut bytes = header(1, 1);
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(FeatureStore::from_bytes(&bytes).is_err());
    }

    #[test]
    fn exact_layout() {
        let store = FeatureStore::from_rows(2, vec![1.0, -2.5]).unwrap();
        let bytes = store.to_bytes();
        assert_eq!(&bytes[..4], b"VRDF");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &(-2.5f32).to_le_bytes());
    }

    proptest! {
        #[test]
        fn bit_exact_round_trip(dim in 1usize..8, rows in proptest::collection::vec(-1e6f32..1e6, 0..64)) {
            let n = rows.len() / dim * dim;
            let store = FeatureStore::from_rows(dim, rows[..n].to_vec()).unwrap();
            let back = FeatureStore::from_bytes(&store.to_bytes()).unwrap();
            prop_assert_eq!(back.to_bytes(), store.to_bytes());
        }
    }
}
