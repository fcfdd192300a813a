//! In-memory versions of the CLI stages, for examples and experiments that
//! do not need files on disk.

use crate::attribute::{self, AttributeModel};
use crate::error::Result;
use crate::eval::{evaluate, EvalOptions, EvalReport};
use crate::freq::FreqTable;
use crate::fusion::{self, FusionConfig, FusionModel};
use crate::io::Dataset;
use crate::ranker::{infer_all, InferOptions, PredicateScorer, Prediction};
use crate::train::TrainConfig;

pub const MATCH_IOU: f64 = 0.5;

pub fn build_freq(train: &Dataset, alpha: f64) -> Result<FreqTable> {
    FreqTable::build(&train.gt.relationships, train.vocab.predicates.len(), alpha)
}

/// Initializes and trains a fusion model; returns it with its loss trace.
pub fn train_relationship(
    train: &Dataset,
    freq: &FreqTable,
    model_config: &FusionConfig,
    train_config: &TrainConfig,
) -> Result<(FusionModel, Vec<f64>)> {
    let mut model = FusionModel::init(
        train.vocab.predicates.len(),
        train.features.dim(),
        model_config,
        train_config.seed,
    )?;
    let examples = fusion::build_examples(train, freq, MATCH_IOU)?;
    let trace = fusion::train(&mut model, &examples, train_config)?;
    Ok((model, trace))
}

pub fn train_attribute(
    train: &Dataset,
    hidden: &[usize],
    train_config: &TrainConfig,
) -> Result<(AttributeModel, Vec<f64>)> {
    let mut model = AttributeModel::init(
        train.vocab.attributes.len(),
        train.features.dim(),
        hidden,
        train_config.seed,
    )?;
    let examples = attribute::build_examples(train, MATCH_IOU)?;
    let trace = attribute::train_attributes(&mut model, &examples, train_config)?;
    Ok((model, trace))
}

/// Ranks every image of `test` and scores the result against its ground truth.
pub fn infer_and_evaluate(
    test: &Dataset,
    freq: &FreqTable,
    scorer: PredicateScorer<'_>,
    attributes: Option<&AttributeModel>,
    infer: &InferOptions,
    eval: &EvalOptions,
) -> Result<(Vec<Prediction>, EvalReport)> {
    let preds = infer_all(
        &test.images,
        &test.features,
        &test.pair_features,
        freq,
        scorer,
        attributes,
        infer,
    )?;
    let report = evaluate(&preds, &test.gt, eval);
    Ok((preds, report))
}
