//! Saves a model to the binary checkpoint format and loads it back.
//!
//! Run with `cargo run --example checkpoint`.

use vrd::fusion::{FusionConfig, FusionModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = FusionConfig { use_solo_heads: false, ..FusionConfig::default() };
    let model = FusionModel::init(10, 64, &config, 1)?;
    let path = std::env::temp_dir().join("vrd_example_rel.vrdm");
    model.save(&path)?;
    let bytes = std::fs::metadata(&path)?.len();
    let loaded = FusionModel::load(&path)?;
    println!("{} parameters, {bytes} bytes on disk", model.num_params());
    println!("solo heads present after load: {}", loaded.subject_head().is_some());
    println!("identical after round trip: {}", loaded == model);
    Ok(())
}
