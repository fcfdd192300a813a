//! Compares backpropagated gradients with central differences on a small
//! fusion model.
//!
//! Run with `cargo run --example gradient_check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vrd::fusion::{flatten_grads, FusionConfig, FusionModel, PairInput, TrainPair};
use vrd::spatial::SPATIAL_DIM;

fn main() -> vrd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (k, d) = (4, 5);
    let config = FusionConfig { spatial_hidden: vec![6], visual_hidden: vec![7], ..FusionConfig::default() };
    let model = FusionModel::init(k, d, &config, 9)?;
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let batch: Vec<TrainPair> = (0..4)
        .map(|i| {
            let mut spatial = [0.0; SPATIAL_DIM];
            spatial.copy_from_slice(&draw(SPATIAL_DIM));
            TrainPair {
                input: PairInput { spatial, v_subject: draw(d), v_predicate: draw(d), v_object: draw(d), sem_logits: draw(k) },
                target: i % k,
            }
        })
        .collect();
    let refs: Vec<&TrainPair> = batch.iter().collect();

    let (loss, grads) = model.loss_and_grads(&refs)?;
    let analytic = flatten_grads(&grads);
    let mut theta = model.params();
    let mut probe = model.clone();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + h;
        probe.set_params(&theta);
        let up = probe.loss_and_grads(&refs)?.0;
        theta[i] = orig - h;
        probe.set_params(&theta);
        let down = probe.loss_and_grads(&refs)?.0;
        theta[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-5));
    }
    println!("loss {loss:.5}, {} parameters, max relative error {worst:.2e}", theta.len());
    Ok(())
}
