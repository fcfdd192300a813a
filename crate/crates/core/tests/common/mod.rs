#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vrd::attribute::{AttributeExample, AttributeModel};
use vrd::fusion::{flatten_grads, FusionConfig, FusionModel, PairInput, TrainPair};
use vrd::geom::BBox;
use vrd::nn::{Activation, Mlp};
use vrd::io::{GroundTruth, GtRelationship, LabeledBox};
use vrd::ranker::{Prediction, ScoredBox, TripletPrediction};
use vrd::spatial::SPATIAL_DIM;

pub const FD_STEP: f64 = 1e-5;
/// Central differences at `FD_STEP` carry about 1e-10 of rounding noise,
/// so gradients below this magnitude are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-5;

/// Hidden pre-activations closer to zero than this would put a rectifier
/// kink inside the difference stencil.
pub const KINK_MARGIN: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn values(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_box(rng: &mut ChaCha8Rng, extent: f64) -> BBox {
    let x0 = rng.random_range(0.0..extent * 0.8);
    let y0 = rng.random_range(0.0..extent * 0.8);
    let w = rng.random_range(1.0..extent * 0.5);
    let h = rng.random_range(1.0..extent * 0.5);
    BBox::new(x0, y0, x0 + w, y0 + h).unwrap()
}

/// Smallest `|z|` over rectified pre-activations of `mlp` on `rows`.
pub fn relu_margin(mlp: &Mlp, rows: &[Vec<f64>]) -> f64 {
    let d = mlp.input_dim();
    let mut x = Array2::from_shape_vec((rows.len(), d), rows.concat()).unwrap();
    let mut margin = f64::INFINITY;
    for layer in mlp.layers() {
        let z = x.dot(&layer.weights) + &layer.bias;
        if layer.activation == Activation::Relu {
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
            x = z.mapv(|v| v.max(0.0));
        } else {
            x = z;
        }
    }
    margin
}

fn fusion_margin(model: &FusionModel, batch: &[TrainPair]) -> f64 {
    let visual: Vec<Vec<f64>> = batch
        .iter()
        .map(|p| [p.input.v_subject.as_slice(), &p.input.v_predicate, &p.input.v_object].concat())
        .collect();
    let mut m = relu_margin(model.visual_branch(), &visual);
    if let Some(sp) = model.spatial_branch() {
        let rows: Vec<Vec<f64>> = batch.iter().map(|p| p.input.spatial.to_vec()).collect();
        m = m.min(relu_margin(sp, &rows));
    }
    m
}

/// Small fusion model with a random branch layout and a batch for it.
/// Draws are repeated until no rectifier sits within [`KINK_MARGIN`].
pub fn random_fusion_problem(rng: &mut ChaCha8Rng) -> (FusionModel, Vec<TrainPair>) {
    loop {
        let (m, b) = draw_fusion_problem(rng);
        if fusion_margin(&m, &b) > KINK_MARGIN {
            return (m, b);
        }
    }
}

fn draw_fusion_problem(rng: &mut ChaCha8Rng) -> (FusionModel, Vec<TrainPair>) {
    let k = rng.random_range(2..=5);
    let d = rng.random_range(1..=8);
    let hidden = |rng: &mut ChaCha8Rng| (0..rng.random_range(0..=2)).map(|_| rng.random_range(1..=8)).collect();
    let config = FusionConfig {
        spatial_hidden: hidden(rng),
        visual_hidden: hidden(rng),
        use_spatial: rng.random_bool(0.75),
        use_solo_heads: rng.random_bool(0.75),
    };
    let mut model = FusionModel::init(k, d, &config, rng.random()).unwrap();
    let n = model.num_params();
    model.set_params(&values(rng, n, 1.0));
    let batch = (0..rng.random_range(1..=6))
        .map(|_| {
            let mut spatial = [0.0; SPATIAL_DIM];
            spatial.copy_from_slice(&values(rng, SPATIAL_DIM, 1.0));
            TrainPair {
                input: PairInput {
                    spatial,
                    v_subject: values(rng, d, 2.0),
                    v_predicate: values(rng, d, 2.0),
                    v_object: values(rng, d, 2.0),
                    sem_logits: values(rng, k, 3.0),
                },
                target: rng.random_range(0..k),
            }
        })
        .collect();
    (model, batch)
}

pub fn random_attribute_problem(rng: &mut ChaCha8Rng) -> (AttributeModel, Vec<AttributeExample>) {
    loop {
        let (m, b) = draw_attribute_problem(rng);
        let rows: Vec<Vec<f64>> = b.iter().map(|e| e.feature.clone()).collect();
        if relu_margin(m.head(), &rows) > KINK_MARGIN {
            return (m, b);
        }
    }
}

fn draw_attribute_problem(rng: &mut ChaCha8Rng) -> (AttributeModel, Vec<AttributeExample>) {
    let a = rng.random_range(2..=5);
    let d = rng.random_range(1..=8);
    let hidden: Vec<usize> = (0..rng.random_range(0..=2)).map(|_| rng.random_range(1..=8)).collect();
    let mut model = AttributeModel::init(a, d, &hidden, rng.random()).unwrap();
    let n = model.params().len();
    model.set_params(&values(rng, n, 1.0));
    let batch = (0..rng.random_range(1..=6))
        .map(|_| AttributeExample {
            feature: values(rng, d, 2.0),
            target: rng.random_range(0..a),
        })
        .collect();
    (model, batch)
}

/// Largest `|analytic − numeric| / max(|analytic|, |numeric|, GRAD_FLOOR)` over
/// all coordinates, using central differences.
pub fn max_relative_error(params: &[f64], analytic: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    assert_eq!(params.len(), analytic.len());
    let mut theta = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + FD_STEP;
        let up = loss(&theta);
        theta[i] = orig - FD_STEP;
        let down = loss(&theta);
        theta[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(GRAD_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

pub fn fusion_gradient_error(model: &FusionModel, batch: &[TrainPair]) -> f64 {
    let refs: Vec<&TrainPair> = batch.iter().collect();
    let (_, grads) = model.loss_and_grads(&refs).unwrap();
    let mut probe = model.clone();
    max_relative_error(&model.params(), &flatten_grads(&grads), |theta| {
        probe.set_params(theta);
        probe.loss_and_grads(&refs).unwrap().0
    })
}

pub fn attribute_gradient_error(model: &AttributeModel, batch: &[AttributeExample]) -> f64 {
    let refs: Vec<&AttributeExample> = batch.iter().collect();
    let (_, grads) = model.loss_and_grads(&refs).unwrap();
    let mut probe = model.clone();
    max_relative_error(&model.params(), &flatten_grads(&grads), |theta| {
        probe.set_params(theta);
        probe.loss_and_grads(&refs).unwrap().0
    })
}

pub fn random_gt(rng: &mut ChaCha8Rng, n: usize, n_labels: usize, k: usize) -> Vec<GtRelationship> {
    let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    (0..n)
        .map(|i| GtRelationship {
            image_id: format!("i{}", i % 7),
            subject: LabeledBox { label: rng.random_range(0..n_labels), bbox: b },
            object: LabeledBox { label: rng.random_range(0..n_labels), bbox: b },
            predicate: rng.random_range(1..k),
        })
        .collect()
}

/// Independent recount: per-key lists of predicates, tallied by scanning.
pub fn recount(gt: &[GtRelationship], k: usize, alpha: f64) -> BTreeMap<(usize, usize), (Vec<u64>, Vec<f64>)> {
    let mut seen: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for r in gt {
        seen.entry((r.subject.label, r.object.label)).or_default().push(r.predicate);
    }
    seen.into_iter()
        .map(|(key, preds)| {
            let counts: Vec<u64> = (0..k).map(|c| preds.iter().filter(|&&p| p == c).count() as u64).collect();
            let total = preds.len() as f64;
            let probs = counts
                .iter()
                .map(|&n| (n as f64 + alpha) / (total + alpha * k as f64))
                .collect();
            (key, (counts, probs))
        })
        .collect()
}

/// Best assignment by brute force: most matches, then earliest predictions
/// preferred lexicographically.
pub fn exhaustive_flags(elig: &[Vec<bool>], n_gt: usize) -> Vec<bool> {
    fn go(i: usize, elig: &[Vec<bool>], used: &mut Vec<bool>, cur: &mut Vec<bool>, best: &mut (usize, Vec<bool>)) {
        if i == elig.len() {
            let n = cur.iter().filter(|&&b| b).count();
            if n > best.0 || (n == best.0 && *cur > best.1) {
                *best = (n, cur.clone());
            }
            return;
        }
        for g in 0..used.len() {
            if elig[i][g] && !used[g] {
                used[g] = true;
                cur.push(true);
                go(i + 1, elig, used, cur, best);
                cur.pop();
                used[g] = false;
            }
        }
        cur.push(false);
        go(i + 1, elig, used, cur, best);
        cur.pop();
    }
    let mut best = (0, vec![false; elig.len()]);
    go(0, elig, &mut vec![false; n_gt], &mut Vec::new(), &mut best);
    best.1
}

/// One image with jittered copies of a few template boxes so matches,
/// near misses and label conflicts all occur.
pub fn random_metric_instance(rng: &mut ChaCha8Rng, max_preds: usize, max_gt: usize) -> (Vec<Prediction>, GroundTruth) {
    let templates: Vec<(BBox, BBox)> = (0..3).map(|_| (random_box(rng, 100.0), random_box(rng, 100.0))).collect();
    let jitter = |rng: &mut ChaCha8Rng, b: &BBox| {
        let s = 0.12 * b.width().min(b.height());
        let dx = rng.random_range(-s..s);
        let dy = rng.random_range(-s..s);
        b.translate(dx, dy).unwrap()
    };
    let n_gt = rng.random_range(0..=max_gt);
    let relationships = (0..n_gt)
        .map(|_| {
            let (s, o) = templates[rng.random_range(0..templates.len())];
            GtRelationship {
                image_id: "x".into(),
                subject: LabeledBox { label: rng.random_range(0..2), bbox: s },
                object: LabeledBox { label: 0, bbox: o },
                predicate: rng.random_range(1..3),
            }
        })
        .collect();
    let n_pred = rng.random_range(0..=max_preds);
    let mut preds: Vec<Prediction> = (0..n_pred)
        .map(|i| {
            let (s, o) = templates[rng.random_range(0..templates.len())];
            Prediction::Relationship(TripletPrediction {
                image_id: "x".into(),
                subject_index: i,
                object_index: i + 100,
                subject: ScoredBox { label: rng.random_range(0..2), bbox: jitter(rng, &s), score: 1.0 },
                object: ScoredBox { label: 0, bbox: jitter(rng, &o), score: 1.0 },
                predicate: rng.random_range(1..3),
                score: rng.random_range(0.0..1.0),
            })
        })
        .collect();
    preds.sort_by(|a, b| b.score().total_cmp(&a.score()));
    (preds, GroundTruth { relationships, attributes: vec![] })
}
