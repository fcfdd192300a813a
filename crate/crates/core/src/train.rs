//! Minibatch momentum SGD shared by the relationship and attribute models.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpGrads};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub neg_pos_ratio: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Relationship model: 3 negatives per positive.
    pub fn relationship() -> Self {
        TrainConfig {
            epochs: 8,
            neg_pos_ratio: 3.0,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            seed: 0,
        }
    }

    /// Attribute model: balanced sampling.
    pub fn attribute() -> Self {
        TrainConfig {
            neg_pos_ratio: 1.0,
            ..Self::relationship()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if !(self.neg_pos_ratio.is_finite() && self.neg_pos_ratio >= 0.0) {
            return Err(Error::InvalidArgument("neg_pos_ratio must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument("learning rate must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::relationship()
    }
}

/// A model trained by [`fit`]. Gradients are ordered like [`Trainable::mlps_mut`].
pub trait Trainable {
    type Example;

    /// Mean cross-entropy over `batch` and its gradients.
    fn loss_and_grads(&self, batch: &[&Self::Example]) -> Result<(f64, Vec<MlpGrads>)>;

    fn mlps_mut(&mut self) -> Vec<&mut Mlp>;
}

/// Labeled examples drawn from one image.
#[derive(Debug, Clone)]
pub struct ImageExamples<E> {
    pub positives: Vec<E>,
    pub negatives: Vec<E>,
}

impl<E> Default for ImageExamples<E> {
    fn default() -> Self {
        ImageExamples { positives: Vec::new(), negatives: Vec::new() }
    }
}

/// Negatives kept for an image: `min(candidates, ⌊ratio · max(positives, 1)⌋)`.
pub fn negatives_to_keep(positives: usize, candidates: usize, ratio: f64) -> usize {
    let cap = (ratio * positives.max(1) as f64).floor() as usize;
    candidates.min(cap)
}

/// Uniformly subsamples negative indices, returned in ascending order.
pub fn subsample_negatives<R: Rng + ?Sized>(
    positives: usize,
    candidates: usize,
    ratio: f64,
    rng: &mut R,
) -> Vec<usize> {
    let keep = negatives_to_keep(positives, candidates, ratio);
    let mut picked = index::sample(rng, candidates, keep).into_vec();
    picked.sort_unstable();
    picked
}

/// Runs `config.epochs` epochs, resampling negatives and reshuffling every
/// epoch. Returns the mean training loss of each epoch.
pub fn fit<M: Trainable>(
    model: &mut M,
    data: &[ImageExamples<M::Example>],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity: Vec<MlpGrads> = model
        .mlps_mut()
        .into_iter()
        .map(|m| MlpGrads::zeros_like(m))
        .collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut epoch_set: Vec<&M::Example> = Vec::new();
        for img in data {
            epoch_set.extend(img.positives.iter());
            let kept = subsample_negatives(
                img.positives.len(),
                img.negatives.len(),
                config.neg_pos_ratio,
                &mut rng,
            );
            epoch_set.extend(kept.into_iter().map(|i| &img.negatives[i]));
        }
        if epoch_set.is_empty() {
            return Err(Error::InvalidArgument("no training examples".into()));
        }
        epoch_set.shuffle(&mut rng);

        let mut total = 0.0;
        for (b, batch) in epoch_set.chunks(config.batch_size).enumerate() {
            let (loss, grads) = model.loss_and_grads(batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            total += loss * batch.len() as f64;
            for ((mlp, g), v) in model.mlps_mut().into_iter().zip(&grads).zip(&mut velocity) {
                mlp.sgd_step(g, v, config.learning_rate, config.momentum);
            }
        }
        trace.push(total / epoch_set.len() as f64);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_counts() {
        assert_eq!(negatives_to_keep(2, 50, 3.0), 6);
        assert_eq!(negatives_to_keep(2, 50, 0.0), 0);
        assert_eq!(negatives_to_keep(0, 50, 3.0), 3);
        assert_eq!(negatives_to_keep(0, 2, 3.0), 2);
        assert_eq!(negatives_to_keep(4, 20, 1.0), 4);
        assert_eq!(negatives_to_keep(30, 20, 1.0), 20);
    }

    #[test]
    fn subsample_is_seeded_and_sorted() {
        let a = subsample_negatives(2, 50, 3.0, &mut ChaCha8Rng::seed_from_u64(9));
        let b = subsample_negatives(2, 50, 3.0, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(a.iter().all(|&i| i < 50));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..TrainConfig::relationship() }.validate().is_err());
        assert!(TrainConfig { neg_pos_ratio: -1.0, ..TrainConfig::relationship() }.validate().is_err());
        assert_eq!(TrainConfig::attribute().neg_pos_ratio, 1.0);
        assert_eq!(TrainConfig::relationship().epochs, 8);
    }
}
