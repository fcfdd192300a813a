//! Empirical predicate distribution `p(P | S, O)`.
//!
//! Counts come straight from ground-truth triples, so the `no_relationship`
//! column is always zero and only receives mass through additive smoothing.
//! Probabilities are derived from counts and never stored on disk.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::GtRelationship;

/// Floor applied before taking logs.
pub const LOG_EPS: f64 = 1e-8;

/// Smoothing used when the table feeds the fusion model. The baseline
/// keeps raw frequencies.
pub const FUSION_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FreqTable {
    alpha: f64,
    num_classes: usize,
    counts: BTreeMap<(usize, usize), Vec<u64>>,
    probs: BTreeMap<(usize, usize), Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct FreqFile {
    alpha: f64,
    num_classes: usize,
    entries: Vec<FreqEntry>,
}

#[derive(Serialize, Deserialize)]
struct FreqEntry {
    subject: usize,
    object: usize,
    counts: Vec<u64>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl FreqTable {
    /// Tallies `gt` per `(subject label, object label)` over `num_classes`
    /// predicate classes (background included).
    pub fn build(gt: &[GtRelationship], num_classes: usize, alpha: f64) -> Result<Self> {
        let mut counts: BTreeMap<(usize, usize), Vec<u64>> = BTreeMap::new();
        for r in gt {
            if r.predicate == 0 || r.predicate >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "predicate index {} outside 1..{num_classes}",
                    r.predicate
                )));
            }
            counts
                .entry((r.subject.label, r.object.label))
                .or_insert_with(|| vec![0; num_classes])[r.predicate] += 1;
        }
        Self::from_counts(counts, num_classes, alpha)
    }

    fn from_counts(
        counts: BTreeMap<(usize, usize), Vec<u64>>,
        num_classes: usize,
        alpha: f64,
    ) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument("need at least two predicate classes".into()));
        }
        let mut probs = BTreeMap::new();
        for (key, c) in &counts {
            if c.len() != num_classes {
                return Err(Error::InvalidArgument(format!(
                    "count vector for {key:?} has {} entries, expected {num_classes}",
                    c.len()
                )));
            }
            let total: u64 = c.iter().sum();
            let denom = total as f64 + alpha * num_classes as f64;
            if denom <= 0.0 {
                continue;
            }
            probs.insert(*key, c.iter().map(|&n| (n as f64 + alpha) / denom).collect());
        }
        Ok(FreqTable {
            alpha,
            num_classes,
            counts,
            probs,
        })
    }

    /// Same counts with a different smoothing constant.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::from_counts(self.counts.clone(), self.num_classes, alpha)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_keys(&self) -> usize {
        self.probs.len()
    }

    pub fn counts(&self, subject: usize, object: usize) -> Option<&[u64]> {
        self.counts.get(&(subject, object)).map(Vec::as_slice)
    }

    pub fn keys(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.probs.keys().copied()
    }

    /// `p(· | subject, object)`; uniform for keys never seen in training.
    pub fn probs(&self, subject: usize, object: usize) -> Vec<f64> {
        match self.probs.get(&(subject, object)) {
            Some(p) => p.clone(),
            None => vec![1.0 / self.num_classes as f64; self.num_classes],
        }
    }

    /// `ln(max(p, LOG_EPS))` per class.
    pub fn semantic_logits(&self, subject: usize, object: usize) -> Vec<f64> {
        self.probs(subject, object)
            .into_iter()
            .map(|p| p.max(LOG_EPS).ln())
            .collect()
    }

    /// Most likely predicate and the full distribution.
    pub fn baseline_predict(&self, subject: usize, object: usize) -> (usize, Vec<f64>) {
        let p = self.probs(subject, object);
        (argmax(&p), p)
    }

    pub fn to_json(&self) -> String {
        let file = FreqFile {
            alpha: self.alpha,
            num_classes: self.num_classes,
            entries: self
                .counts
                .iter()
                .map(|(&(subject, object), c)| FreqEntry {
                    subject,
                    object,
                    counts: c.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FreqFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("frequency table: {e}")))?;
        let mut counts = BTreeMap::new();
        for e in file.entries {
            if e.counts.first().copied().unwrap_or(0) != 0 {
                return Err(Error::InvalidArgument(
                    "frequency table has counts for no_relationship".into(),
                ));
            }
            counts.insert((e.subject, e.object), e.counts);
        }
        Self::from_counts(counts, file.num_classes, file.alpha)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
