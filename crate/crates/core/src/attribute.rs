//! Single-branch "is" classifier: object feature → hidden → `A + 1` classes,
//! class 0 being `no_attribute`.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::Detection;
use crate::io::{Dataset, GroundTruth, ImageDetections, ImageGt};
use crate::nn::{cross_entropy, softmax, Mlp, MlpGrads};
use crate::train::{fit, ImageExamples, TrainConfig, Trainable};

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeModel {
    pub(crate) head: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeExample {
    pub feature: Vec<f64>,
    pub target: usize,
}

impl AttributeModel {
    /// `num_classes` counts the background class.
    pub fn init(num_classes: usize, feature_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if num_classes < 2 || feature_dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "invalid attribute model dims: classes={num_classes}, D={feature_dim}, hidden={hidden:?}"
            )));
        }
        let dims: Vec<usize> = std::iter::once(feature_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(num_classes))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(AttributeModel {
            head: Mlp::init(&dims, &mut rng),
        })
    }

    pub(crate) fn from_head(head: Mlp) -> Self {
        AttributeModel { head }
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    pub fn num_classes(&self) -> usize {
        self.head.output_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.head.input_dim()
    }

    pub fn params(&self) -> Vec<f64> {
        self.head.params()
    }

    pub fn set_params(&mut self, values: &[f64]) {
        self.head.set_params(values);
    }

    fn matrix<'a>(&self, feats: impl ExactSizeIterator<Item = &'a [f64]>) -> Result<Array2<f64>> {
        let d = self.feature_dim();
        let mut x = Array2::zeros((feats.len(), d));
        for (i, f) in feats.enumerate() {
            if f.len() != d {
                return Err(Error::Dimension {
                    branch: "attribute",
                    expected: d,
                    actual: f.len(),
                });
            }
            for (dst, src) in x.row_mut(i).iter_mut().zip(f) {
                *dst = *src;
            }
        }
        Ok(x)
    }

    /// Probability over `A + 1` classes; `S_A` for attribute `a >= 1` is `probs[a]`.
    pub fn attribute_scores(&self, feature: &[f64]) -> Result<Vec<f64>> {
        Ok(self.scores_batch(&[feature])?.remove(0))
    }

    pub fn scores_batch(&self, features: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let x = self.matrix(features.iter().copied())?;
        let z = self.head.forward(x.view());
        Ok(z.rows().into_iter().map(|r| softmax(&r.to_vec())).collect())
    }

    pub fn loss_and_grads(&self, batch: &[&AttributeExample]) -> Result<(f64, Vec<MlpGrads>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let targets: Vec<usize> = batch.iter().map(|e| e.target).collect();
        if let Some(&t) = targets.iter().find(|&&t| t >= self.num_classes()) {
            return Err(Error::InvalidArgument(format!("target {t} out of range")));
        }
        let x = self.matrix(batch.iter().map(|e| e.feature.as_slice()))?;
        let (z, trace) = self.head.forward_trace(x.view());
        let n = batch.len() as f64;
        let (loss, mut dz) = cross_entropy(&z, &targets);
        dz /= n;
        Ok((loss / n, vec![self.head.backward(&trace, dz.view())]))
    }
}

impl Trainable for AttributeModel {
    type Example = AttributeExample;

    fn loss_and_grads(&self, batch: &[&AttributeExample]) -> Result<(f64, Vec<MlpGrads>)> {
        AttributeModel::loss_and_grads(self, batch)
    }

    fn mlps_mut(&mut self) -> Vec<&mut Mlp> {
        vec![&mut self.head]
    }
}

/// Attribute of the best-overlapping ground-truth attribute with the same
/// object label at `iou_threshold`, or 0.
pub fn match_attribute_target(det: &Detection, gt: &ImageGt<'_>, iou_threshold: f64) -> usize {
    let mut best: Option<(f64, usize)> = None;
    for a in &gt.attributes {
        if a.object.label != det.label {
            continue;
        }
        let q = det.bbox.iou(&a.object.bbox);
        if q >= iou_threshold && best.is_none_or(|(bq, _)| q > bq) {
            best = Some((q, a.attribute));
        }
    }
    best.map_or(0, |(_, a)| a)
}

/// Per image, `(detection index, target)` split into positives and negatives.
pub fn label_detections(
    images: &[ImageDetections],
    gt: &GroundTruth,
    iou_threshold: f64,
) -> Vec<ImageExamples<(usize, usize)>> {
    let by_image = gt.by_image();
    let empty = ImageGt::default();
    images
        .iter()
        .map(|img| {
            let g = by_image.get(img.image_id.as_str()).unwrap_or(&empty);
            let mut ex = ImageExamples::default();
            for (i, d) in img.detections.iter().enumerate() {
                let t = match_attribute_target(d, g, iou_threshold);
                if t == 0 {
                    ex.negatives.push((i, 0));
                } else {
                    ex.positives.push((i, t));
                }
            }
            ex
        })
        .collect()
}

pub fn build_examples(dataset: &Dataset, iou_threshold: f64) -> Result<Vec<ImageExamples<AttributeExample>>> {
    label_detections(&dataset.images, &dataset.gt, iou_threshold)
        .iter()
        .zip(&dataset.images)
        .map(|(ex, img)| {
            let resolve = |&(i, target): &(usize, usize)| -> Result<AttributeExample> {
                let d = &img.detections[i];
                let r = d.feature_ref.ok_or_else(|| {
                    Error::MissingFeature(format!("detection in image {} has no feature_ref", img.image_id))
                })?;
                Ok(AttributeExample {
                    feature: dataset.features.row_f64(r)?,
                    target,
                })
            };
            Ok(ImageExamples {
                positives: ex.positives.iter().map(resolve).collect::<Result<_>>()?,
                negatives: ex.negatives.iter().map(resolve).collect::<Result<_>>()?,
            })
        })
        .collect()
}

pub fn train_attributes(
    model: &mut AttributeModel,
    examples: &[ImageExamples<AttributeExample>],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    fit(model, examples, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::negatives_to_keep;

    #[test]
    fn zero_model_is_uniform() {
        let mut m = AttributeModel::init(6, 4, &[8], 0).unwrap();
        let n = m.params().len();
        m.set_params(&vec![0.0; n]);
        let p = m.attribute_scores(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-12));
    }

    #[test]
    fn scores_normalized_and_dims_checked() {
        let m = AttributeModel::init(6, 4, &[8], 1).unwrap();
        let p = m.attribute_scores(&[0.3, -1.0, 2.0, 0.5]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(m.attribute_scores(&[1.0]).is_err());
    }

    #[test]
    fn balanced_sampling_count() {
        assert_eq!(negatives_to_keep(4, 20, 1.0), 4);
    }

    #[test]
    fn zero_learning_rate_keeps_model() {
        let mut m = AttributeModel::init(3, 2, &[4], 2).unwrap();
        let before = m.clone();
        let data = vec![ImageExamples {
            positives: vec![AttributeExample { feature: vec![1.0, 0.0], target: 1 }],
            negatives: vec![AttributeExample { feature: vec![0.0, 1.0], target: 0 }],
        }];
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::attribute()
        };
        let trace = train_attributes(&mut m, &data, &cfg).unwrap();
        assert_eq!(m, before);
        assert!(trace.windows(2).all(|w| w[0] == w[1]));
    }
}
