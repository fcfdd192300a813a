//! Frequency table, its semantic prior and the frequency-only baseline.
//!
//! Run with `cargo run --example frequency_baseline`.

use vrd::eval::EvalOptions;
use vrd::pipeline;
use vrd::ranker::{InferOptions, PredicateScorer};
use vrd::synth::{standard_vocab, synth_world};

fn main() -> vrd::Result<()> {
    let vocab = standard_vocab();
    let train = synth_world(1, 300, 4, &vocab)?;
    let test = synth_world(2, 100, 4, &vocab)?;
    let freq = pipeline::build_freq(&train, 0.0)?;
    println!("{} (subject, object) keys seen", freq.num_keys());

    for (s, o) in [("person", "guitar"), ("person", "horse"), ("cup", "table")] {
        let (si, oi) = (vocab.objects.lookup(s)?, vocab.objects.lookup(o)?);
        let (best, probs) = freq.baseline_predict(si, oi);
        let top: Vec<String> = probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, p)| format!("{} {:.2}", vocab.predicates.name(i), p))
            .collect();
        println!("{s} / {o}: argmax {} [{}]", vocab.predicates.name(best), top.join(", "));
    }

    // Smoothing moves mass onto unseen predicates and keeps log-probabilities finite.
    let smoothed = freq.with_alpha(1.0)?;
    let (p, g) = (vocab.objects.lookup("person")?, vocab.objects.lookup("guitar")?);
    println!("semantic logits, alpha 0: {:.2?}", freq.semantic_logits(p, g));
    println!("semantic logits, alpha 1: {:.2?}", smoothed.semantic_logits(p, g));

    let (_, report) = pipeline::infer_and_evaluate(
        &test,
        &freq,
        PredicateScorer::Baseline,
        None,
        &InferOptions::default(),
        &EvalOptions::default(),
    )?;
    println!("\nbaseline on held-out images\n{}", report.to_text(&test.vocab));
    Ok(())
}
