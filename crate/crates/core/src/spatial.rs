//! Spatial encoding of a subject/object box pair.
//!
//! The 22-dim feature is
//! `⟨Δ(s,o), Δ(s,p), Δ(p,o), c(s), c(o)⟩` where `p` is the tight union of
//! the two boxes, `Δ` is the center-form box delta and `c` the
//! image-normalized corner coordinates plus relative area.

use crate::geom::{BBox, CenterBox, ImageSize};

pub const SPATIAL_DIM: usize = 22;

pub type SpatialFeature = [f64; SPATIAL_DIM];

/// `⟨(x1−x2)/w2, (y1−y2)/h2, ln(w1/w2), ln(h1/h2)⟩`.
pub fn box_delta(b1: &CenterBox, b2: &CenterBox) -> [f64; 4] {
    [
        (b1.x - b2.x) / b2.w,
        (b1.y - b2.y) / b2.h,
        (b1.w / b2.w).ln(),
        (b1.h / b2.h).ln(),
    ]
}

/// `⟨x_min/w, y_min/h, x_max/w, y_max/h, area/image_area⟩`. Boxes are not
/// clamped to the image, so entries may leave `[0, 1]` for overflowing boxes.
pub fn normalized_coords(b: &BBox, img: &ImageSize) -> [f64; 5] {
    [
        b.x_min() / img.w,
        b.y_min() / img.h,
        b.x_max() / img.w,
        b.y_max() / img.h,
        b.area() / img.area(),
    ]
}

pub fn spatial_feature(subject: &BBox, object: &BBox, img: &ImageSize) -> SpatialFeature {
    let predicate = subject.union(object);
    let (s, o, p) = (subject.to_center(), object.to_center(), predicate.to_center());
    let mut out = [0.0; SPATIAL_DIM];
    out[0..4].copy_from_slice(&box_delta(&s, &o));
    out[4..8].copy_from_slice(&box_delta(&s, &p));
    out[8..12].copy_from_slice(&box_delta(&p, &o));
    out[12..17].copy_from_slice(&normalized_coords(subject, img));
    out[17..22].copy_from_slice(&normalized_coords(object, img));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn cb(x: f64, y: f64, w: f64, h: f64) -> CenterBox {
        CenterBox { x, y, w, h }
    }

    fn close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() <= 1e-12, "entry {i}: {x} vs {y}");
        }
    }

    #[test]
    fn delta_examples() {
        let b = cb(3.0, 4.0, 5.0, 6.0);
        assert_eq!(box_delta(&b, &b), [0.0; 4]);
        close(&box_delta(&cb(12.0, 10.0, 4.0, 4.0), &cb(10.0, 10.0, 2.0, 2.0)), &[1.0, 0.0, LN_2, LN_2]);
        let ln4 = 4f64.ln();
        close(&box_delta(&cb(10.0, 10.0, 1.0, 1.0), &cb(10.0, 10.0, 4.0, 4.0)), &[0.0, 0.0, -ln4, -ln4]);
    }

    #[test]
    fn coords_examples() {
        let img = ImageSize::new(100.0, 100.0).unwrap();
        let full = BBox::new(0.0, 0.0, 100.0, 100.0).unwrap();
        close(&normalized_coords(&full, &img), &[0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = BBox::new(25.0, 25.0, 75.0, 75.0).unwrap();
        close(&normalized_coords(&b, &img), &[0.25, 0.25, 0.75, 0.75, 0.25]);
        let b = BBox::new(0.0, 0.0, 50.0, 100.0).unwrap();
        close(&normalized_coords(&b, &img), &[0.0, 0.0, 0.5, 1.0, 0.5]);
    }

    #[test]
    fn identical_boxes_collapse() {
        let img = ImageSize::new(40.0, 30.0).unwrap();
        let b = BBox::new(4.0, 3.0, 20.0, 15.0).unwrap();
        let f = spatial_feature(&b, &b, &img);
        assert_eq!(&f[..12], &[0.0; 12]);
        assert_eq!(f[12..17], f[17..22]);
        close(&f[12..17], &normalized_coords(&b, &img));
    }

    #[test]
    fn side_by_side_worked_example() {
        let img = ImageSize::new(20.0, 10.0).unwrap();
        let s = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let o = BBox::new(10.0, 0.0, 20.0, 10.0).unwrap();
        let f = spatial_feature(&s, &o, &img);
        #[rustfmt::skip]
        let expected = [
            -1.0, 0.0, 0.0, 0.0,
            -0.25, 0.0, -LN_2, 0.0,
            -0.5, 0.0, LN_2, 0.0,
            0.0, 0.0, 0.5, 1.0, 0.5,
            0.5, 0.0, 1.0, 1.0, 0.5,
        ];
        close(&f, &expected);
    }
}
