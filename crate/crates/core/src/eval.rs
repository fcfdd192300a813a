//! Challenge metrics: Recall@K, relationship and phrase mAP, and the
//! weighted final score `0.2·R@50 + 0.4·mAP_rel + 0.4·mAP_phr`.
//!
//! Attribute predictions are matched on the object box alone in both modes
//! and their classes join the predicate classes in both mAP averages.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::io::{GroundTruth, ImageGt, Vocabularies};
use crate::ranker::Prediction;

pub const RECALL_WEIGHT: f64 = 0.2;
pub const MAP_REL_WEIGHT: f64 = 0.4;
pub const MAP_PHR_WEIGHT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MatchMode {
    /// Subject and object boxes must each overlap their ground truth.
    Relationship,
    /// The union boxes must overlap.
    Phrase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchCriterion {
    pub mode: MatchMode,
    pub iou_threshold: f64,
}

impl MatchCriterion {
    pub fn relationship() -> Self {
        MatchCriterion { mode: MatchMode::Relationship, iou_threshold: 0.5 }
    }

    pub fn phrase() -> Self {
        MatchCriterion { mode: MatchMode::Phrase, iou_threshold: 0.5 }
    }
}

/// Overlap of a prediction with a ground-truth entry of the same kind, or
/// `None` if any label differs or the kinds differ.
fn overlap(pred: &Prediction, gt: GtRef<'_>, mode: MatchMode) -> Option<f64> {
    match (pred, gt) {
        (Prediction::Relationship(p), GtRef::Rel(g)) => {
            if p.subject.label != g.subject.label || p.object.label != g.object.label || p.predicate != g.predicate {
                return None;
            }
            Some(match mode {
                MatchMode::Relationship => p.subject.bbox.iou(&g.subject.bbox).min(p.object.bbox.iou(&g.object.bbox)),
                MatchMode::Phrase => p
                    .subject
                    .bbox
                    .union(&p.object.bbox)
                    .iou(&g.subject.bbox.union(&g.object.bbox)),
            })
        }
        (Prediction::Attribute(p), GtRef::Attr(g)) => {
            if p.object.label != g.object.label || p.attribute != g.attribute {
                return None;
            }
            Some(p.object.bbox.iou(&g.object.bbox))
        }
        _ => None,
    }
}

#[derive(Clone, Copy)]
enum GtRef<'a> {
    Rel(&'a crate::io::GtRelationship),
    Attr(&'a crate::io::GtAttribute),
}

fn gt_refs<'a>(gt: &ImageGt<'a>) -> Vec<GtRef<'a>> {
    gt.relationships
        .iter()
        .map(|r| GtRef::Rel(r))
        .chain(gt.attributes.iter().map(|a| GtRef::Attr(a)))
        .collect()
}

/// Greedy matching in the given order (callers pass predictions sorted by
/// score descending). Each prediction takes the unmatched ground truth with
/// the highest overlap at or above the threshold, ties to the earliest;
/// each ground truth is consumed at most once.
pub fn match_predictions(preds: &[&Prediction], gt: &ImageGt<'_>, criterion: &MatchCriterion) -> Vec<bool> {
    let refs = gt_refs(gt);
    let mut taken = vec![false; refs.len()];
    preds
        .iter()
        .map(|p| {
            let mut best: Option<(f64, usize)> = None;
            for (gi, g) in refs.iter().enumerate() {
                if taken[gi] {
                    continue;
                }
                if let Some(q) = overlap(p, *g, criterion.mode) {
                    if q >= criterion.iou_threshold && best.is_none_or(|(bq, _)| q > bq) {
                        best = Some((q, gi));
                    }
                }
            }
            match best {
                Some((_, gi)) => {
                    taken[gi] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Per-image eligibility matrix used by exhaustive oracles in tests.
pub fn eligibility(preds: &[&Prediction], gt: &ImageGt<'_>, criterion: &MatchCriterion) -> Vec<Vec<bool>> {
    let refs = gt_refs(gt);
    preds
        .iter()
        .map(|p| {
            refs.iter()
                .map(|g| overlap(p, *g, criterion.mode).is_some_and(|q| q >= criterion.iou_threshold))
                .collect()
        })
        .collect()
}

/// Area under the precision/recall curve using the precision envelope.
/// Predictions with equal scores form one operating point, so the result
/// does not depend on how ties are ordered. Returns 0 when `n_gt` is 0.
pub fn average_precision(scored: &[(f64, bool)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut order: Vec<&(f64, bool)> = scored.iter().collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = order[i].0;
        while i < order.len() && order[i].0 == s {
            if order[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64));
    }

    let mut envelope = vec![0.0; points.len()];
    let mut running: f64 = 0.0;
    for (k, &(_, p)) in points.iter().enumerate().rev() {
        running = running.max(p);
        envelope[k] = running;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (k, &(r, _)) in points.iter().enumerate() {
        ap += (r - prev_recall) * envelope[k];
        prev_recall = r;
    }
    ap.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RecallAveraging {
    /// Matched ground truth over all ground truth in the dataset.
    Micro,
    /// Mean of per-image recall over images with ground truth.
    Macro,
}

fn group_by_image(preds: &[Prediction]) -> BTreeMap<&str, Vec<&Prediction>> {
    let mut map: BTreeMap<&str, Vec<&Prediction>> = BTreeMap::new();
    for p in preds {
        map.entry(p.image_id()).or_default().push(p);
    }
    for list in map.values_mut() {
        // stable: equal scores keep the ranker's order
        list.sort_by(|a, b| b.score().total_cmp(&a.score()));
    }
    map
}

/// Fraction of ground truth recovered by each image's top `k` predictions.
/// Defined as 1 when there is no ground truth.
pub fn recall_at_k(
    preds: &[Prediction],
    gt: &GroundTruth,
    k: usize,
    criterion: &MatchCriterion,
    averaging: RecallAveraging,
) -> f64 {
    let by_pred = group_by_image(preds);
    let by_gt = gt.by_image();
    let (mut matched, mut total) = (0usize, 0usize);
    let mut per_image = Vec::new();
    for (image, g) in &by_gt {
        if g.is_empty() {
            continue;
        }
        let hits = by_pred.get(image).map_or(0, |list| {
            let top = &list[..list.len().min(k)];
            match_predictions(top, g, criterion).into_iter().filter(|&b| b).count()
        });
        matched += hits;
        total += g.len();
        per_image.push(hits as f64 / g.len() as f64);
    }
    if total == 0 {
        return 1.0;
    }
    match averaging {
        RecallAveraging::Micro => matched as f64 / total as f64,
        RecallAveraging::Macro => per_image.iter().sum::<f64>() / per_image.len() as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ClassKind {
    Predicate,
    Attribute,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub kind: ClassKind,
    pub index: usize,
    pub n_gt: usize,
    pub ap_rel: f64,
    pub ap_phr: f64,
}

/// Headline metrics as fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub recall_at_k: f64,
    pub k: usize,
    pub map_rel: f64,
    pub map_phr: f64,
    pub final_score: f64,
    pub per_class: Vec<ClassAp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalOptions {
    pub recall_k: usize,
    pub iou_threshold: f64,
    pub recall_averaging: RecallAveraging,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            recall_k: 50,
            iou_threshold: 0.5,
            recall_averaging: RecallAveraging::Micro,
        }
    }
}

pub fn weighted_score(recall_at_50: f64, map_rel: f64, map_phr: f64) -> f64 {
    RECALL_WEIGHT * recall_at_50 + MAP_REL_WEIGHT * map_rel + MAP_PHR_WEIGHT * map_phr
}

fn class_of(p: &Prediction) -> (ClassKind, usize) {
    match p {
        Prediction::Relationship(t) => (ClassKind::Predicate, t.predicate),
        Prediction::Attribute(a) => (ClassKind::Attribute, a.attribute),
    }
}

pub fn evaluate(preds: &[Prediction], gt: &GroundTruth, options: &EvalOptions) -> EvalReport {
    let rel = MatchCriterion { mode: MatchMode::Relationship, iou_threshold: options.iou_threshold };
    let phr = MatchCriterion { mode: MatchMode::Phrase, iou_threshold: options.iou_threshold };

    let mut n_gt: BTreeMap<(ClassKind, usize), usize> = BTreeMap::new();
    for r in &gt.relationships {
        *n_gt.entry((ClassKind::Predicate, r.predicate)).or_default() += 1;
    }
    for a in &gt.attributes {
        *n_gt.entry((ClassKind::Attribute, a.attribute)).or_default() += 1;
    }

    let by_pred = group_by_image(preds);
    let by_gt = gt.by_image();
    let empty = ImageGt::default();
    let mut scored_rel: BTreeMap<(ClassKind, usize), Vec<(f64, bool)>> = BTreeMap::new();
    let mut scored_phr: BTreeMap<(ClassKind, usize), Vec<(f64, bool)>> = BTreeMap::new();
    for (image, list) in &by_pred {
        let g = by_gt.get(image).unwrap_or(&empty);
        let flags_rel = match_predictions(list, g, &rel);
        let flags_phr = match_predictions(list, g, &phr);
        for ((p, fr), fp) in list.iter().zip(flags_rel).zip(flags_phr) {
            let c = class_of(p);
            scored_rel.entry(c).or_default().push((p.score(), fr));
            scored_phr.entry(c).or_default().push((p.score(), fp));
        }
    }

    let per_class: Vec<ClassAp> = n_gt
        .iter()
        .map(|(&(kind, index), &n)| ClassAp {
            kind,
            index,
            n_gt: n,
            ap_rel: average_precision(scored_rel.get(&(kind, index)).map_or(&[][..], Vec::as_slice), n),
            ap_phr: average_precision(scored_phr.get(&(kind, index)).map_or(&[][..], Vec::as_slice), n),
        })
        .collect();

    let mean = |f: fn(&ClassAp) -> f64| {
        if per_class.is_empty() {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / per_class.len() as f64
        }
    };
    let map_rel = mean(|c| c.ap_rel);
    let map_phr = mean(|c| c.ap_phr);
    let recall = recall_at_k(preds, gt, options.recall_k, &rel, options.recall_averaging);
    EvalReport {
        recall_at_k: recall,
        k: options.recall_k,
        map_rel,
        map_phr,
        final_score: weighted_score(recall, map_rel, map_phr),
        per_class,
    }
}

impl EvalReport {
    /// Mean relationship AP over the listed predicate classes present in the report.
    pub fn mean_ap_rel_over(&self, predicates: &[usize]) -> Option<f64> {
        let aps: Vec<f64> = self
            .per_class
            .iter()
            .filter(|c| c.kind == ClassKind::Predicate && predicates.contains(&c.index))
            .map(|c| c.ap_rel)
            .collect();
        (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
    }

    /// Plain-text report, values ×100 with two decimals.
    pub fn to_text(&self, vocab: &Vocabularies) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "R@{:<8} {:6.2}", self.k, 100.0 * self.recall_at_k);
        let _ = writeln!(s, "mAP_rel    {:6.2}", 100.0 * self.map_rel);
        let _ = writeln!(s, "mAP_phr    {:6.2}", 100.0 * self.map_phr);
        let _ = writeln!(s, "score      {:6.2}", 100.0 * self.final_score);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<28} {:>6} {:>7} {:>7}", "class", "n_gt", "AP_rel", "AP_phr");
        for c in &self.per_class {
            let name = match c.kind {
                ClassKind::Predicate => format!("rel:{}", vocab.predicates.name(c.index)),
                ClassKind::Attribute => format!("is:{}", vocab.attributes.name(c.index)),
            };
            let _ = writeln!(s, "{:<28} {:>6} {:>7.2} {:>7.2}", name, c.n_gt, 100.0 * c.ap_rel, 100.0 * c.ap_phr);
        }
        s
    }
}
