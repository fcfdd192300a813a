use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::jsonl::{read_records, write_records};
use super::vocab::Vocabularies;
use crate::error::{Error, Result};
use crate::geom::BBox;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub label: usize,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtRelationship {
    pub image_id: String,
    pub subject: LabeledBox,
    pub object: LabeledBox,
    /// Always at least 1; index 0 is the background class.
    pub predicate: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtAttribute {
    pub image_id: String,
    pub object: LabeledBox,
    pub attribute: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub relationships: Vec<GtRelationship>,
    pub attributes: Vec<GtAttribute>,
}

/// Ground truth of one image, borrowed from a [`GroundTruth`].
#[derive(Debug, Clone, Default)]
pub struct ImageGt<'a> {
    pub relationships: Vec<&'a GtRelationship>,
    pub attributes: Vec<&'a GtAttribute>,
}

impl ImageGt<'_> {
    pub fn len(&self) -> usize {
        self.relationships.len() + self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl GroundTruth {
    pub fn by_image(&self) -> BTreeMap<&str, ImageGt<'_>> {
        let mut map: BTreeMap<&str, ImageGt<'_>> = BTreeMap::new();
        for r in &self.relationships {
            map.entry(r.image_id.as_str()).or_default().relationships.push(r);
        }
        for a in &self.attributes {
            map.entry(a.image_id.as_str()).or_default().attributes.push(a);
        }
        map
    }

    pub fn len(&self) -> usize {
        self.relationships.len() + self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct LabeledBoxRecord {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind")]
enum GtRecord {
    #[serde(rename = "rel")]
    Rel {
        image_id: String,
        subject: LabeledBoxRecord,
        object: LabeledBoxRecord,
        predicate: String,
    },
    #[serde(rename = "attr")]
    Attr {
        image_id: String,
        object: LabeledBoxRecord,
        attribute: String,
    },
}

pub(crate) fn resolve_box(
    rec: &LabeledBoxRecord,
    objects: &super::Vocabulary,
) -> Result<LabeledBox> {
    Ok(LabeledBox {
        label: objects.lookup(&rec.label)?,
        bbox: BBox::from_array(rec.bbox)?,
    })
}

pub(crate) fn box_record(b: &LabeledBox, objects: &super::Vocabulary) -> LabeledBoxRecord {
    LabeledBoxRecord {
        label: objects.name(b.label).to_string(),
        bbox: b.bbox.to_array(),
    }
}

pub fn read_gt(path: impl AsRef<Path>, vocab: &Vocabularies) -> Result<GroundTruth> {
    let path = path.as_ref();
    let mut gt = GroundTruth::default();
    for (line, rec) in read_records::<GtRecord>(path)? {
        let at = |e: Error| Error::parse(path, line, e.to_string());
        match rec {
            GtRecord::Rel {
                image_id,
                subject,
                object,
                predicate,
            } => {
                let predicate = vocab.predicates.lookup(&predicate).map_err(at)?;
                if predicate == 0 {
                    return Err(Error::parse(
                        path,
                        line,
                        "ground truth may not use the no_relationship predicate",
                    ));
                }
                gt.relationships.push(GtRelationship {
                    image_id,
                    subject: resolve_box(&subject, &vocab.objects).map_err(at)?,
                    object: resolve_box(&object, &vocab.objects).map_err(at)?,
                    predicate,
                });
            }
            GtRecord::Attr {
                image_id,
                object,
                attribute,
            } => {
                let attribute = vocab.attributes.lookup(&attribute).map_err(at)?;
                if attribute == 0 {
                    return Err(Error::parse(
                        path,
                        line,
                        "ground truth may not use the no_attribute class",
                    ));
                }
                gt.attributes.push(GtAttribute {
                    image_id,
                    object: resolve_box(&object, &vocab.objects).map_err(at)?,
                    attribute,
                });
            }
        }
    }
    Ok(gt)
}

pub fn write_gt(path: impl AsRef<Path>, gt: &GroundTruth, vocab: &Vocabularies) -> Result<()> {
    let rels = gt.relationships.iter().map(|r| GtRecord::Rel {
        image_id: r.image_id.clone(),
        subject: box_record(&r.subject, &vocab.objects),
        object: box_record(&r.object, &vocab.objects),
        predicate: vocab.predicates.name(r.predicate).to_string(),
    });
    let attrs = gt.attributes.iter().map(|a| GtRecord::Attr {
        image_id: a.image_id.clone(),
        object: box_record(&a.object, &vocab.objects),
        attribute: vocab.attributes.name(a.attribute).to_string(),
    });
    write_records(path.as_ref(), rels.chain(attrs))
}
