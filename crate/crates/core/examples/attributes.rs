//! Trains the attribute model and checks it against ground truth.
//!
//! Run with `cargo run --release --example attributes`.

use vrd::attribute::build_examples;
use vrd::freq::argmax;
use vrd::pipeline;
use vrd::synth::{standard_vocab, synth_world};
use vrd::train::TrainConfig;

fn main() -> vrd::Result<()> {
    let vocab = standard_vocab();
    let train = synth_world(3, 300, 4, &vocab)?;
    let test = synth_world(4, 100, 4, &vocab)?;

    let config = TrainConfig { epochs: 4, ..TrainConfig::attribute() };
    let (model, trace) = pipeline::train_attribute(&train, &[128], &config)?;
    println!("loss {:.4} -> {:.4}", trace[0], trace[trace.len() - 1]);

    // Accuracy over detections that match an attributed object.
    let mut hits = 0;
    let mut total = 0;
    for image in build_examples(&test, pipeline::MATCH_IOU)? {
        for ex in image.positives {
            total += 1;
            if argmax(&model.attribute_scores(&ex.feature)?) == ex.target {
                hits += 1;
            }
        }
    }
    println!("attribute argmax accuracy {hits}/{total}");

    let det = &test.images[0].detections[0];
    let feature = test.features.row_f64(det.feature_ref.unwrap_or(0))?;
    let scores = model.attribute_scores(&feature)?;
    println!("\n{} in {}:", vocab.objects.name(det.label), test.images[0].image_id);
    for (i, s) in scores.iter().enumerate() {
        println!("  {:14} {s:.3}", vocab.attributes.name(i));
    }
    Ok(())
}
