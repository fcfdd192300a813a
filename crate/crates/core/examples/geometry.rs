//! Boxes, overlap and the 22-dimensional pair encoding.
//!
//! Run with `cargo run --example geometry`.

use vrd::geom::{BBox, ImageSize};
use vrd::spatial::{box_delta, spatial_feature};

fn main() -> vrd::Result<()> {
    let person = BBox::new(100.0, 50.0, 200.0, 300.0)?;
    let horse = BBox::new(80.0, 200.0, 320.0, 400.0)?;
    let img = ImageSize::new(640.0, 480.0)?;

    println!("IoU(person, horse)   = {:.4}", person.iou(&horse));
    println!("union box            = {:?}", person.union(&horse).to_array());
    println!("delta(person, horse) = {:?}", box_delta(&person.to_center(), &horse.to_center()));

    let f = spatial_feature(&person, &horse, &img);
    let names = ["S->O", "S->P", "P->O"];
    for (i, name) in names.iter().enumerate() {
        println!("{name:5} {:?}", &f[4 * i..4 * i + 4]);
    }
    println!("subject coords {:?}", &f[12..17]);
    println!("object coords  {:?}", &f[17..22]);

    // The deltas do not change when the whole scene moves.
    let moved = spatial_feature(&person.translate(40.0, -20.0)?, &horse.translate(40.0, -20.0)?, &img);
    let drift = f[..12].iter().zip(&moved[..12]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max delta change after translation: {drift:.2e}");
    Ok(())
}
