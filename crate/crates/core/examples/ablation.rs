//! Compares the full model with its ablations and the frequency baseline.
//!
//! Run with `cargo run --release --example ablation`.

use vrd::eval::EvalOptions;
use vrd::freq::FUSION_ALPHA;
use vrd::fusion::FusionConfig;
use vrd::pipeline;
use vrd::ranker::{InferOptions, PredicateScorer};
use vrd::synth::{standard_vocab, synth_world, GEOMETRIC_PREDICATES};
use vrd::train::TrainConfig;

fn main() -> vrd::Result<()> {
    let vocab = standard_vocab();
    let train = synth_world(1, 600, 4, &vocab)?;
    let test = synth_world(2, 200, 4, &vocab)?;
    let raw = pipeline::build_freq(&train, 0.0)?;
    let smoothed = raw.with_alpha(FUSION_ALPHA)?;
    let rel = TrainConfig { epochs: 4, ..TrainConfig::relationship() };
    let attr_cfg = TrainConfig { epochs: 4, ..TrainConfig::attribute() };
    let (attr, _) = pipeline::train_attribute(&train, &[128], &attr_cfg)?;
    let (infer, eval) = (InferOptions::default(), EvalOptions::default());
    let geometric: Vec<usize> = GEOMETRIC_PREDICATES
        .iter()
        .map(|p| vocab.predicates.lookup(p))
        .collect::<vrd::Result<_>>()?;

    println!("{:10} {:>8} {:>8} {:>8} {:>8} {:>10}", "model", "R@50", "mAP_rel", "mAP_phr", "score", "geo AP");
    let row = |name: &str, r: &vrd::eval::EvalReport| {
        println!(
            "{name:10} {:8.2} {:8.2} {:8.2} {:8.2} {:10.2}",
            100.0 * r.recall_at_k,
            100.0 * r.map_rel,
            100.0 * r.map_phr,
            100.0 * r.final_score,
            100.0 * r.mean_ap_rel_over(&geometric).unwrap_or(0.0)
        )
    };

    let variants = [
        ("full", FusionConfig::default()),
        ("spo+s+o", FusionConfig { use_spatial: false, ..FusionConfig::default() }),
        ("spo", FusionConfig { use_spatial: false, use_solo_heads: false, ..FusionConfig::default() }),
    ];
    for (name, config) in &variants {
        let (model, _) = pipeline::train_relationship(&train, &smoothed, config, &rel)?;
        let (_, r) =
            pipeline::infer_and_evaluate(&test, &smoothed, PredicateScorer::Fusion(&model), Some(&attr), &infer, &eval)?;
        row(name, &r);
    }
    let (_, r) = pipeline::infer_and_evaluate(&test, &raw, PredicateScorer::Baseline, Some(&attr), &infer, &eval)?;
    row("baseline", &r);
    Ok(())
}
