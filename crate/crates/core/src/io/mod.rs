//! Dataset file formats.
//!
//! Every dataset directory holds the same seven files; see [`DatasetPaths`].

mod detections;
mod features;
mod gt;
mod jsonl;
mod pairs;
mod vocab;

use std::path::{Path, PathBuf};

pub use detections::{read_detections, write_detections, ImageDetections};
pub use features::{FeatureStore, FEATURE_MAGIC};
pub use gt::{read_gt, write_gt, GroundTruth, GtAttribute, GtRelationship, ImageGt, LabeledBox};
pub(crate) use jsonl::{read_records, write_records};
pub use pairs::PairFeatureIndex;
pub use vocab::{VocabKind, Vocabularies, Vocabulary, NO_ATTRIBUTE, NO_RELATIONSHIP};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPaths {
    pub objects: PathBuf,
    pub predicates: PathBuf,
    pub attributes: PathBuf,
    pub detections: PathBuf,
    pub features: PathBuf,
    pub pair_features: PathBuf,
    pub gt: PathBuf,
}

impl DatasetPaths {
    /// Conventional file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            objects: dir.join("objects.txt"),
            predicates: dir.join("predicates.txt"),
            attributes: dir.join("attributes.txt"),
            detections: dir.join("detections.jsonl"),
            features: dir.join("features.vrdf"),
            pair_features: dir.join("pair_features.jsonl"),
            gt: dir.join("gt.jsonl"),
        }
    }
}

impl Vocabularies {
    pub fn read(paths: &DatasetPaths) -> Result<Self> {
        Ok(Vocabularies {
            objects: Vocabulary::read(&paths.objects, VocabKind::Object)?,
            predicates: Vocabulary::read(&paths.predicates, VocabKind::Predicate)?,
            attributes: Vocabulary::read(&paths.attributes, VocabKind::Attribute)?,
        })
    }

    pub fn write(&self, paths: &DatasetPaths) -> Result<()> {
        self.objects.write(&paths.objects)?;
        self.predicates.write(&paths.predicates)?;
        self.attributes.write(&paths.attributes)
    }
}

/// Detections, pooled features and ground truth for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: Vocabularies,
    pub images: Vec<ImageDetections>,
    pub features: FeatureStore,
    pub pair_features: PairFeatureIndex,
    pub gt: GroundTruth,
}

impl PartialEq for Vocabularies {
    fn eq(&self, other: &Self) -> bool {
        self.objects == other.objects
            && self.predicates == other.predicates
            && self.attributes == other.attributes
    }
}

impl Dataset {
    pub fn load(paths: &DatasetPaths) -> Result<Self> {
        let vocab = Vocabularies::read(paths)?;
        Self::load_with_vocab(paths, vocab)
    }

    pub fn load_with_vocab(paths: &DatasetPaths, vocab: Vocabularies) -> Result<Self> {
        let images = read_detections(&paths.detections, &vocab.objects)?;
        let features = FeatureStore::read(&paths.features)?;
        let pair_features = if paths.pair_features.exists() {
            PairFeatureIndex::read(&paths.pair_features)?
        } else {
            PairFeatureIndex::new()
        };
        let gt = read_gt(&paths.gt, &vocab)?;
        let ds = Dataset {
            vocab,
            images,
            features,
            pair_features,
            gt,
        };
        ds.validate_refs()?;
        Ok(ds)
    }

    /// Every `feature_ref` must resolve to a row of the store.
    pub fn validate_refs(&self) -> Result<()> {
        let rows = self.features.len() as u64;
        for img in &self.images {
            for d in &img.detections {
                if let Some(r) = d.feature_ref {
                    if u64::from(r) >= rows {
                        return Err(Error::MissingFeature(format!(
                            "image {}: feature_ref {r} but store has {rows} rows",
                            img.image_id
                        )));
                    }
                }
            }
        }
        for (a, b, r) in self.pair_features.iter() {
            if u64::from(r) >= rows {
                return Err(Error::MissingFeature(format!(
                    "pair ({a}, {b}): feature_ref {r} but store has {rows} rows"
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, paths: &DatasetPaths) -> Result<()> {
        self.vocab.write(paths)?;
        write_detections(&paths.detections, &self.images, &self.vocab.objects)?;
        self.features.write(&paths.features)?;
        self.pair_features.write(&paths.pair_features)?;
        write_gt(&paths.gt, &self.gt, &self.vocab)
    }

    pub fn num_detections(&self) -> usize {
        self.images.iter().map(|i| i.detections.len()).sum()
    }
}
