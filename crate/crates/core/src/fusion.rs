//! The relationship classifier.
//!
//! Per-class logits from independent branches are summed and normalized by a
//! single softmax:
//!
//! ```text
//! z = semantic(s, o)                 frozen log p(P | S, O)
//!   + spatial_mlp(spatial_feature)   22 → hidden → K      (optional)
//!   + visual_mlp([v_S ; v_P ; v_O])  3D → hidden → K
//!   + subject_head(v_S)              D → K                (optional)
//!   + object_head(v_O)               D → K                (optional)
//! ```
//!
//! The semantic term carries no parameters, so the trainable branches learn
//! a residual on top of the frequency prior.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::freq::FreqTable;
use crate::geom::{Detection, ImageSize};
use crate::io::{Dataset, FeatureStore, ImageDetections, ImageGt, PairFeatureIndex};
use crate::nn::{cross_entropy, softmax, Mlp, MlpGrads};
use crate::spatial::{spatial_feature, SpatialFeature, SPATIAL_DIM};
use crate::train::{fit, ImageExamples, TrainConfig, Trainable};

/// Branch layout of a [`FusionModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub spatial_hidden: Vec<usize>,
    pub visual_hidden: Vec<usize>,
    pub use_spatial: bool,
    pub use_solo_heads: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            spatial_hidden: vec![64, 64],
            visual_hidden: vec![256, 256],
            use_spatial: true,
            use_solo_heads: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    num_classes: usize,
    feature_dim: usize,
    pub(crate) spatial: Option<Mlp>,
    pub(crate) visual: Mlp,
    pub(crate) subject_head: Option<Mlp>,
    pub(crate) object_head: Option<Mlp>,
}

/// Everything the classifier sees for one ordered detection pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairInput {
    pub spatial: SpatialFeature,
    pub v_subject: Vec<f64>,
    pub v_predicate: Vec<f64>,
    pub v_object: Vec<f64>,
    pub sem_logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPair {
    pub input: PairInput,
    /// 0 is `no_relationship`.
    pub target: usize,
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}

impl FusionModel {
    pub fn init(num_classes: usize, feature_dim: usize, config: &FusionConfig, seed: u64) -> Result<Self> {
        if num_classes < 2 || feature_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "need K >= 2 and D >= 1, got K={num_classes}, D={feature_dim}"
            )));
        }
        if config.spatial_hidden.contains(&0) || config.visual_hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let visual = Mlp::init(&dims(3 * feature_dim, &config.visual_hidden, num_classes), &mut rng);
        let spatial = config
            .use_spatial
            .then(|| Mlp::init(&dims(SPATIAL_DIM, &config.spatial_hidden, num_classes), &mut rng));
        let (subject_head, object_head) = if config.use_solo_heads {
            (
                Some(Mlp::init(&[feature_dim, num_classes], &mut rng)),
                Some(Mlp::init(&[feature_dim, num_classes], &mut rng)),
            )
        } else {
            (None, None)
        };
        Ok(FusionModel {
            num_classes,
            feature_dim,
            spatial,
            visual,
            subject_head,
            object_head,
        })
    }

    pub(crate) fn from_parts(
        num_classes: usize,
        feature_dim: usize,
        spatial: Option<Mlp>,
        visual: Mlp,
        subject_head: Option<Mlp>,
        object_head: Option<Mlp>,
    ) -> Result<Self> {
        let check = |m: &Mlp, name: &str, input: usize| -> Result<()> {
            if m.input_dim() != input || m.output_dim() != num_classes {
                return Err(Error::Checkpoint(format!(
                    "{name} branch is {}→{}, expected {input}→{num_classes}",
                    m.input_dim(),
                    m.output_dim()
                )));
            }
            Ok(())
        };
        check(&visual, "visual", 3 * feature_dim)?;
        if let Some(m) = &spatial {
            check(m, "spatial", SPATIAL_DIM)?;
        }
        if subject_head.is_some() != object_head.is_some() {
            return Err(Error::Checkpoint("solo heads must come in pairs".into()));
        }
        if let Some(m) = &subject_head {
            check(m, "subject", feature_dim)?;
        }
        if let Some(m) = &object_head {
            check(m, "object", feature_dim)?;
        }
        Ok(FusionModel {
            num_classes,
            feature_dim,
            spatial,
            visual,
            subject_head,
            object_head,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn spatial_branch(&self) -> Option<&Mlp> {
        self.spatial.as_ref()
    }

    pub fn visual_branch(&self) -> &Mlp {
        &self.visual
    }

    pub fn subject_head(&self) -> Option<&Mlp> {
        self.subject_head.as_ref()
    }

    pub fn object_head(&self) -> Option<&Mlp> {
        self.object_head.as_ref()
    }

    /// Trainable branches in canonical order: spatial, visual, subject, object.
    pub fn mlps(&self) -> Vec<&Mlp> {
        self.spatial
            .iter()
            .chain(std::iter::once(&self.visual))
            .chain(self.subject_head.iter())
            .chain(self.object_head.iter())
            .collect()
    }

    fn mlps_mut_inner(&mut self) -> Vec<&mut Mlp> {
        self.spatial
            .iter_mut()
            .chain(std::iter::once(&mut self.visual))
            .chain(self.subject_head.iter_mut())
            .chain(self.object_head.iter_mut())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.mlps().iter().map(|m| m.num_params()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.mlps().iter().flat_map(|m| m.params()).collect()
    }

    pub fn set_params(&mut self, values: &[f64]) {
        let mut pos = 0;
        for m in self.mlps_mut_inner() {
            pos += m.set_params(&values[pos..]);
        }
    }

    fn check(&self, input: &PairInput) -> Result<()> {
        let d = self.feature_dim;
        let checks = [
            ("subject feature", d, input.v_subject.len()),
            ("predicate feature", d, input.v_predicate.len()),
            ("object feature", d, input.v_object.len()),
            ("semantic logits", self.num_classes, input.sem_logits.len()),
        ];
        for (branch, expected, actual) in checks {
            if expected != actual {
                return Err(Error::Dimension {
                    branch,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }

    fn batch_matrices(&self, inputs: &[&PairInput]) -> Result<Batch> {
        let n = inputs.len();
        let d = self.feature_dim;
        let mut b = Batch {
            spatial: Array2::zeros((n, SPATIAL_DIM)),
            visual: Array2::zeros((n, 3 * d)),
            subject: Array2::zeros((n, d)),
            object: Array2::zeros((n, d)),
            sem: Array2::zeros((n, self.num_classes)),
        };
        for (i, x) in inputs.iter().enumerate() {
            self.check(x)?;
            for (dst, src) in b.spatial.row_mut(i).iter_mut().zip(&x.spatial) {
                *dst = *src;
            }
            let mut v = b.visual.row_mut(i);
            for (k, val) in x.v_subject.iter().chain(&x.v_predicate).chain(&x.v_object).enumerate() {
                v[k] = *val;
            }
            for (dst, src) in b.subject.row_mut(i).iter_mut().zip(&x.v_subject) {
                *dst = *src;
            }
            for (dst, src) in b.object.row_mut(i).iter_mut().zip(&x.v_object) {
                *dst = *src;
            }
            for (dst, src) in b.sem.row_mut(i).iter_mut().zip(&x.sem_logits) {
                *dst = *src;
            }
        }
        Ok(b)
    }

    /// Fused logits for a batch, one row per input.
    pub fn fused_logits(&self, inputs: &[&PairInput]) -> Result<Array2<f64>> {
        let b = self.batch_matrices(inputs)?;
        let mut z = b.sem;
        z += &self.visual.forward(b.visual.view());
        if let Some(m) = &self.spatial {
            z += &m.forward(b.spatial.view());
        }
        if let Some(m) = &self.subject_head {
            z += &m.forward(b.subject.view());
        }
        if let Some(m) = &self.object_head {
            z += &m.forward(b.object.view());
        }
        Ok(z)
    }

    /// `(fused_logits, softmax(fused_logits))` for one pair.
    pub fn forward(&self, input: &PairInput) -> Result<(Vec<f64>, Vec<f64>)> {
        let z = self.fused_logits(&[input])?;
        let logits = z.row(0).to_vec();
        let probs = softmax(&logits);
        Ok((logits, probs))
    }

    /// Class probabilities for a batch.
    pub fn predict_batch(&self, inputs: &[&PairInput]) -> Result<Vec<Vec<f64>>> {
        let z = self.fused_logits(inputs)?;
        Ok(z.rows().into_iter().map(|r| softmax(&r.to_vec())).collect())
    }

    /// Mean cross-entropy and its gradient for every trainable parameter.
    pub fn loss_and_grads(&self, batch: &[&TrainPair]) -> Result<(f64, Vec<MlpGrads>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let inputs: Vec<&PairInput> = batch.iter().map(|p| &p.input).collect();
        let targets: Vec<usize> = batch.iter().map(|p| p.target).collect();
        if let Some(&t) = targets.iter().find(|&&t| t >= self.num_classes) {
            return Err(Error::InvalidArgument(format!("target {t} out of range")));
        }
        let b = self.batch_matrices(&inputs)?;
        let mut z = b.sem;
        let (out, visual_trace) = self.visual.forward_trace(b.visual.view());
        z += &out;
        let spatial_trace = self.spatial.as_ref().map(|m| {
            let (out, t) = m.forward_trace(b.spatial.view());
            z += &out;
            t
        });
        let subject_trace = self.subject_head.as_ref().map(|m| {
            let (out, t) = m.forward_trace(b.subject.view());
            z += &out;
            t
        });
        let object_trace = self.object_head.as_ref().map(|m| {
            let (out, t) = m.forward_trace(b.object.view());
            z += &out;
            t
        });

        let n = batch.len() as f64;
        let (loss, mut dz) = cross_entropy(&z, &targets);
        dz /= n;

        let mut grads = Vec::with_capacity(4);
        if let (Some(m), Some(t)) = (&self.spatial, &spatial_trace) {
            grads.push(m.backward(t, dz.view()));
        }
        grads.push(self.visual.backward(&visual_trace, dz.view()));
        if let (Some(m), Some(t)) = (&self.subject_head, &subject_trace) {
            grads.push(m.backward(t, dz.view()));
        }
        if let (Some(m), Some(t)) = (&self.object_head, &object_trace) {
            grads.push(m.backward(t, dz.view()));
        }
        Ok((loss / n, grads))
    }
}

struct Batch {
    spatial: Array2<f64>,
    visual: Array2<f64>,
    subject: Array2<f64>,
    object: Array2<f64>,
    sem: Array2<f64>,
}

impl Trainable for FusionModel {
    type Example = TrainPair;

    fn loss_and_grads(&self, batch: &[&TrainPair]) -> Result<(f64, Vec<MlpGrads>)> {
        FusionModel::loss_and_grads(self, batch)
    }

    fn mlps_mut(&mut self) -> Vec<&mut Mlp> {
        self.mlps_mut_inner()
    }
}

/// Flattens gradients in the order of [`FusionModel::params`].
pub fn flatten_grads(grads: &[MlpGrads]) -> Vec<f64> {
    grads.iter().flat_map(MlpGrads::flat).collect()
}

fn feature_ref(det: &Detection) -> Result<u32> {
    det.feature_ref.ok_or_else(|| {
        Error::MissingFeature(format!(
            "detection in image {} has no feature_ref",
            det.image_id
        ))
    })
}

impl PairInput {
    /// Gathers spatial, visual and semantic inputs for `(subject, object)`.
    /// The predicate feature is the row pooled over the pair's union box.
    pub fn assemble(
        subject: &Detection,
        object: &Detection,
        img: &ImageSize,
        features: &FeatureStore,
        pair_features: &PairFeatureIndex,
        freq: &FreqTable,
    ) -> Result<Self> {
        let rs = feature_ref(subject)?;
        let ro = feature_ref(object)?;
        let rp = pair_features.get(rs, ro).ok_or_else(|| {
            Error::MissingFeature(format!(
                "no union-box feature for pair ({rs}, {ro}) in image {}",
                subject.image_id
            ))
        })?;
        Ok(PairInput {
            spatial: spatial_feature(&subject.bbox, &object.bbox, img),
            v_subject: features.row_f64(rs)?,
            v_predicate: features.row_f64(rp)?,
            v_object: features.row_f64(ro)?,
            sem_logits: freq.semantic_logits(subject.label, object.label),
        })
    }
}

/// Scores for one proposal: `probs[k]` is `S_P` for predicate `k >= 1`;
/// `probs[0]` is the `no_relationship` mass, reported but never ranked.
pub fn predict_predicate(
    model: &FusionModel,
    freq: &FreqTable,
    subject: &Detection,
    object: &Detection,
    features: &FeatureStore,
    pair_features: &PairFeatureIndex,
    img: &ImageSize,
) -> Result<Vec<f64>> {
    let input = PairInput::assemble(subject, object, img, features, pair_features, freq)?;
    Ok(model.forward(&input)?.1)
}

/// A detection pair matches a ground-truth relationship when both labels
/// agree and both boxes reach `iou_threshold`. Among several matches the one
/// with the largest `min(iou_s, iou_o)` wins, ties to the earliest.
pub fn match_pair_target(
    subject: &Detection,
    object: &Detection,
    gt: &ImageGt<'_>,
    iou_threshold: f64,
) -> usize {
    let mut best: Option<(f64, usize)> = None;
    for r in &gt.relationships {
        if r.subject.label != subject.label || r.object.label != object.label {
            continue;
        }
        let q = subject.bbox.iou(&r.subject.bbox).min(object.bbox.iou(&r.object.bbox));
        if q >= iou_threshold && best.is_none_or(|(bq, _)| q > bq) {
            best = Some((q, r.predicate));
        }
    }
    best.map_or(0, |(_, p)| p)
}

/// One labeled proposal: detection indices within the image and target class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCandidate {
    pub image: usize,
    pub subject: usize,
    pub object: usize,
    pub target: usize,
}

/// Labels every ordered pair of every image, split into positives and
/// negatives.
pub fn label_pairs(
    images: &[ImageDetections],
    gt: &crate::io::GroundTruth,
    iou_threshold: f64,
) -> Vec<ImageExamples<PairCandidate>> {
    let by_image = gt.by_image();
    let empty = ImageGt::default();
    images
        .iter()
        .enumerate()
        .map(|(ii, img)| {
            let g = by_image.get(img.image_id.as_str()).unwrap_or(&empty);
            let mut ex = ImageExamples::default();
            for (si, s) in img.detections.iter().enumerate() {
                for (oi, o) in img.detections.iter().enumerate() {
                    if si == oi {
                        continue;
                    }
                    let target = match_pair_target(s, o, g, iou_threshold);
                    let c = PairCandidate {
                        image: ii,
                        subject: si,
                        object: oi,
                        target,
                    };
                    if target == 0 {
                        ex.negatives.push(c);
                    } else {
                        ex.positives.push(c);
                    }
                }
            }
            ex
        })
        .collect()
}

/// One-shot seeded sampling: all positives plus at most
/// `⌊ratio · max(positives, 1)⌋` negatives per image.
pub fn sample_pairs(
    images: &[ImageDetections],
    gt: &crate::io::GroundTruth,
    neg_pos_ratio: f64,
    iou_threshold: f64,
    seed: u64,
) -> Vec<PairCandidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for ex in label_pairs(images, gt, iou_threshold) {
        let kept = crate::train::subsample_negatives(
            ex.positives.len(),
            ex.negatives.len(),
            neg_pos_ratio,
            &mut rng,
        );
        out.extend(ex.positives.iter().copied());
        out.extend(kept.into_iter().map(|i| ex.negatives[i]));
    }
    out
}

/// Resolves every labeled proposal of `dataset` into model inputs.
pub fn build_examples(
    dataset: &Dataset,
    freq: &FreqTable,
    iou_threshold: f64,
) -> Result<Vec<ImageExamples<TrainPair>>> {
    let resolve = |c: &PairCandidate| -> Result<TrainPair> {
        let img = &dataset.images[c.image];
        let input = PairInput::assemble(
            &img.detections[c.subject],
            &img.detections[c.object],
            &img.size,
            &dataset.features,
            &dataset.pair_features,
            freq,
        )?;
        Ok(TrainPair {
            input,
            target: c.target,
        })
    };
    label_pairs(&dataset.images, &dataset.gt, iou_threshold)
        .iter()
        .map(|ex| {
            Ok(ImageExamples {
                positives: ex.positives.iter().map(resolve).collect::<Result<_>>()?,
                negatives: ex.negatives.iter().map(resolve).collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Trains `model` in place on prepared examples; returns the per-epoch loss.
pub fn train(
    model: &mut FusionModel,
    examples: &[ImageExamples<TrainPair>],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    fit(model, examples, config)
}
