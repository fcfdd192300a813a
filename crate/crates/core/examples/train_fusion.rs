//! Trains the relationship model and scores it on held-out images.
//!
//! Run with `cargo run --release --example train_fusion`.

use vrd::eval::EvalOptions;
use vrd::freq::FUSION_ALPHA;
use vrd::fusion::FusionConfig;
use vrd::pipeline;
use vrd::ranker::{InferOptions, PredicateScorer, Prediction};
use vrd::synth::{standard_vocab, synth_world};
use vrd::train::TrainConfig;

fn main() -> vrd::Result<()> {
    let vocab = standard_vocab();
    let train = synth_world(1, 400, 4, &vocab)?;
    let test = synth_world(2, 100, 4, &vocab)?;
    let freq = pipeline::build_freq(&train, 0.0)?.with_alpha(FUSION_ALPHA)?;

    let config = FusionConfig::default();
    let train_config = TrainConfig { epochs: 4, ..TrainConfig::relationship() };
    let (model, trace) = pipeline::train_relationship(&train, &freq, &config, &train_config)?;
    for (epoch, loss) in trace.iter().enumerate() {
        println!("epoch {epoch}: loss {loss:.4}");
    }
    println!("{} parameters", model.num_params());

    let (preds, report) = pipeline::infer_and_evaluate(
        &test,
        &freq,
        PredicateScorer::Fusion(&model),
        None,
        &InferOptions::default(),
        &EvalOptions::default(),
    )?;
    println!("\n{}", report.to_text(&vocab));

    let first = test.images[0].image_id.as_str();
    println!("top triplets for {first}:");
    for p in preds.iter().filter(|p| p.image_id() == first).take(5) {
        if let Prediction::Relationship(t) = p {
            println!(
                "  {:.3}  {} {} {}",
                t.score,
                vocab.objects.name(t.subject.label),
                vocab.predicates.name(t.predicate),
                vocab.objects.name(t.object.label)
            );
        }
    }
    Ok(())
}
