//! Generates a seeded synthetic world and writes it to disk.
//!
//! Run with `cargo run --example synth_world [-- <out_dir>]`.

use std::collections::BTreeMap;

use vrd::io::DatasetPaths;
use vrd::synth::{standard_vocab, synth_world};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("vrd_synth_example"));
    let vocab = standard_vocab();
    let world = synth_world(7, 200, 4, &vocab)?;

    println!("images      {}", world.images.len());
    println!("detections  {}", world.num_detections());
    println!("relations   {}", world.gt.relationships.len());
    println!("attributes  {}", world.gt.attributes.len());
    println!("feature dim {}", world.features.dim());

    let mut by_predicate: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &world.gt.relationships {
        *by_predicate.entry(vocab.predicates.name(r.predicate)).or_default() += 1;
    }
    for (name, n) in by_predicate {
        println!("  {name:14} {n}");
    }

    std::fs::create_dir_all(&out)?;
    world.write(&DatasetPaths::in_dir(&out))?;
    println!("written to {}", out.display());
    Ok(())
}
