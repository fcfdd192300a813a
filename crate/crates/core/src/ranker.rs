//! Proposal generation, final scoring and top-k selection.
//!
//! A relationship candidate scores `S_S · S_P · S_O` and an attribute
//! candidate `S_O · S_A`. Both kinds are merged into one list per image and
//! truncated to the `k` best.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attribute::AttributeModel;
use crate::error::{Error, Result};
use crate::freq::FreqTable;
use crate::fusion::{FusionModel, PairInput};
use crate::geom::BBox;
use crate::io::{read_records, write_records, FeatureStore, ImageDetections, PairFeatureIndex, Vocabularies};

pub const DEFAULT_TOP_K: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub label: usize,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletPrediction {
    pub image_id: String,
    pub subject_index: usize,
    pub object_index: usize,
    pub subject: ScoredBox,
    pub object: ScoredBox,
    pub predicate: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributePrediction {
    pub image_id: String,
    pub object_index: usize,
    pub object: ScoredBox,
    pub attribute: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Relationship(TripletPrediction),
    Attribute(AttributePrediction),
}

impl Prediction {
    pub fn score(&self) -> f64 {
        match self {
            Prediction::Relationship(t) => t.score,
            Prediction::Attribute(a) => a.score,
        }
    }

    pub fn image_id(&self) -> &str {
        match self {
            Prediction::Relationship(t) => &t.image_id,
            Prediction::Attribute(a) => &a.image_id,
        }
    }

    /// Secondary sort key for equal scores. Attribute predictions use the
    /// object index in both slots, which no relationship can have.
    pub fn tie_key(&self) -> (usize, usize, usize) {
        match self {
            Prediction::Relationship(t) => (t.subject_index, t.object_index, t.predicate),
            Prediction::Attribute(a) => (a.object_index, a.object_index, a.attribute),
        }
    }
}

/// Every ordered pair `(i, j)` with `i != j`.
pub fn make_proposals(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

pub fn score_triplet(subject_score: f64, predicate_score: f64, object_score: f64) -> f64 {
    subject_score * predicate_score * object_score
}

pub fn score_attribute(object_score: f64, attribute_score: f64) -> f64 {
    object_score * attribute_score
}

/// Score descending, then [`Prediction::tie_key`] ascending.
pub fn ranking_order(a: &Prediction, b: &Prediction) -> Ordering {
    b.score()
        .total_cmp(&a.score())
        .then_with(|| a.tie_key().cmp(&b.tie_key()))
}

pub fn rank_top_k(mut preds: Vec<Prediction>, k: usize) -> Vec<Prediction> {
    preds.sort_by(ranking_order);
    preds.truncate(k);
    preds
}

/// Source of `S_P`.
#[derive(Debug, Clone, Copy)]
pub enum PredicateScorer<'a> {
    /// Frequency table probabilities used directly.
    Baseline,
    Fusion(&'a FusionModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferOptions {
    pub top_k: usize,
    /// Predicates emitted per proposal; `None` emits all `K − 1`.
    pub per_pair_cap: Option<usize>,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            top_k: DEFAULT_TOP_K,
            per_pair_cap: None,
        }
    }
}

/// Predicate indices `>= 1` ordered by score descending, ties to lower index.
fn best_predicates(probs: &[f64], cap: Option<usize>) -> Vec<usize> {
    let mut order: Vec<usize> = (1..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    if let Some(c) = cap {
        order.truncate(c);
    }
    order
}

/// Scores and ranks all relationship and attribute candidates of one image.
#[allow(clippy::too_many_arguments)]
pub fn infer_image(
    image: &ImageDetections,
    features: &FeatureStore,
    pair_features: &PairFeatureIndex,
    freq: &FreqTable,
    scorer: PredicateScorer<'_>,
    attributes: Option<&AttributeModel>,
    options: &InferOptions,
) -> Result<Vec<Prediction>> {
    if options.top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be >= 1".into()));
    }
    let dets = &image.detections;
    let proposals = make_proposals(dets.len());

    let probs: Vec<Vec<f64>> = match scorer {
        PredicateScorer::Baseline => proposals
            .iter()
            .map(|&(i, j)| freq.probs(dets[i].label, dets[j].label))
            .collect(),
        PredicateScorer::Fusion(model) => {
            let inputs = proposals
                .iter()
                .map(|&(i, j)| PairInput::assemble(&dets[i], &dets[j], &image.size, features, pair_features, freq))
                .collect::<Result<Vec<_>>>()?;
            if inputs.is_empty() {
                Vec::new()
            } else {
                model.predict_batch(&inputs.iter().collect::<Vec<_>>())?
            }
        }
    };

    let mut preds = Vec::new();
    for (&(i, j), p) in proposals.iter().zip(&probs) {
        let (s, o) = (&dets[i], &dets[j]);
        for k in best_predicates(p, options.per_pair_cap) {
            preds.push(Prediction::Relationship(TripletPrediction {
                image_id: image.image_id.clone(),
                subject_index: i,
                object_index: j,
                subject: ScoredBox { label: s.label, bbox: s.bbox, score: s.score },
                object: ScoredBox { label: o.label, bbox: o.bbox, score: o.score },
                predicate: k,
                score: score_triplet(s.score, p[k], o.score),
            }));
        }
    }

    if let Some(model) = attributes {
        let feats = dets
            .iter()
            .map(|d| {
                let r = d.feature_ref.ok_or_else(|| {
                    Error::MissingFeature(format!("detection in image {} has no feature_ref", image.image_id))
                })?;
                features.row_f64(r)
            })
            .collect::<Result<Vec<_>>>()?;
        if !feats.is_empty() {
            let scores = model.scores_batch(&feats.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
            for (i, (d, p)) in dets.iter().zip(&scores).enumerate() {
                for (a, &sa) in p.iter().enumerate().skip(1) {
                    preds.push(Prediction::Attribute(AttributePrediction {
                        image_id: image.image_id.clone(),
                        object_index: i,
                        object: ScoredBox { label: d.label, bbox: d.bbox, score: d.score },
                        attribute: a,
                        score: score_attribute(d.score, sa),
                    }));
                }
            }
        }
    }

    Ok(rank_top_k(preds, options.top_k))
}

/// Runs [`infer_image`] over images in `image_id` order and concatenates.
pub fn infer_all(
    images: &[ImageDetections],
    features: &FeatureStore,
    pair_features: &PairFeatureIndex,
    freq: &FreqTable,
    scorer: PredicateScorer<'_>,
    attributes: Option<&AttributeModel>,
    options: &InferOptions,
) -> Result<Vec<Prediction>> {
    let mut order: Vec<&ImageDetections> = images.iter().collect();
    order.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut out = Vec::new();
    for img in order {
        out.extend(infer_image(img, features, pair_features, freq, scorer, attributes, options)?);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoredBoxRecord {
    label: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    score: f64,
    index: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind")]
enum PredictionRecord {
    #[serde(rename = "rel")]
    Rel {
        image_id: String,
        subject: ScoredBoxRecord,
        object: ScoredBoxRecord,
        predicate: String,
        score: f64,
    },
    #[serde(rename = "attr")]
    Attr {
        image_id: String,
        object: ScoredBoxRecord,
        attribute: String,
        score: f64,
    },
}

fn box_rec(b: &ScoredBox, index: usize, vocab: &Vocabularies) -> ScoredBoxRecord {
    ScoredBoxRecord {
        label: vocab.objects.name(b.label).to_string(),
        bbox: b.bbox.to_array(),
        score: b.score,
        index,
    }
}

fn resolve(r: &ScoredBoxRecord, vocab: &Vocabularies) -> Result<ScoredBox> {
    if !(0.0..=1.0).contains(&r.score) {
        return Err(Error::InvalidArgument(format!("detection score {} outside [0, 1]", r.score)));
    }
    Ok(ScoredBox {
        label: vocab.objects.lookup(&r.label)?,
        bbox: BBox::from_array(r.bbox)?,
        score: r.score,
    })
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[Prediction], vocab: &Vocabularies) -> Result<()> {
    let recs = preds.iter().map(|p| match p {
        Prediction::Relationship(t) => PredictionRecord::Rel {
            image_id: t.image_id.clone(),
            subject: box_rec(&t.subject, t.subject_index, vocab),
            object: box_rec(&t.object, t.object_index, vocab),
            predicate: vocab.predicates.name(t.predicate).to_string(),
            score: t.score,
        },
        Prediction::Attribute(a) => PredictionRecord::Attr {
            image_id: a.image_id.clone(),
            object: box_rec(&a.object, a.object_index, vocab),
            attribute: vocab.attributes.name(a.attribute).to_string(),
            score: a.score,
        },
    });
    write_records(path.as_ref(), recs)
}

pub fn read_predictions(path: impl AsRef<Path>, vocab: &Vocabularies) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (line, rec) in read_records::<PredictionRecord>(path)? {
        let at = |e: Error| Error::parse(path, line, e.to_string());
        let check_score = |s: f64| {
            if (0.0..=1.0).contains(&s) {
                Ok(s)
            } else {
                Err(Error::parse(path, line, format!("score {s} outside [0, 1]")))
            }
        };
        out.push(match rec {
            PredictionRecord::Rel { image_id, subject, object, predicate, score } => {
                let predicate = vocab.predicates.lookup(&predicate).map_err(at)?;
                if predicate == 0 {
                    return Err(Error::parse(path, line, "no_relationship is never a prediction"));
                }
                Prediction::Relationship(TripletPrediction {
                    image_id,
                    subject_index: subject.index,
                    object_index: object.index,
                    subject: resolve(&subject, vocab).map_err(at)?,
                    object: resolve(&object, vocab).map_err(at)?,
                    predicate,
                    score: check_score(score)?,
                })
            }
            PredictionRecord::Attr { image_id, object, attribute, score } => {
                let attribute = vocab.attributes.lookup(&attribute).map_err(at)?;
                if attribute == 0 {
                    return Err(Error::parse(path, line, "no_attribute is never a prediction"));
                }
                Prediction::Attribute(AttributePrediction {
                    image_id,
                    object_index: object.index,
                    object: resolve(&object, vocab).map_err(at)?,
                    attribute,
                    score: check_score(score)?,
                })
            }
        });
    }
    Ok(out)
}
