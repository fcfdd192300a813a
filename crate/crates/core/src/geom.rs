//! Axis-aligned boxes and detection records.
//!
//! Boxes are stored in pixel coordinates with the origin at the top-left
//! corner. Construction validates that coordinates are finite and that width
//! and height are strictly positive, so every downstream division by `w` or
//! `h` is safe.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Corner-form box `(x_min, y_min, x_max, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

/// Center-form box `(x, y, w, h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSize {
    pub w: f64,
    pub h: f64,
}

/// One detector output. `label` indexes the object vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub label: usize,
    pub score: f64,
    pub bbox: BBox,
    pub feature_ref: Option<u32>,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let invalid = |reason| Error::InvalidBox {
            x_min,
            y_min,
            x_max,
            y_max,
            reason,
        };
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(invalid("width and height must be positive"));
        }
        Ok(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn from_array(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_center(&self) -> CenterBox {
        CenterBox {
            x: (self.x_min + self.x_max) / 2.0,
            y: (self.y_min + self.y_max) / 2.0,
            w: self.width(),
            h: self.height(),
        }
    }

    /// Intersection over union; 0 for disjoint or merely touching boxes.
    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let ih = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if iw <= 0.0 || ih <= 0.0 {
            return 0.0;
        }
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }

    /// Tight box enclosing both inputs.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    /// Shift by `(dx, dy)`; fails only if the result is non-finite.
    pub fn translate(&self, dx: f64, dy: f64) -> Result<BBox> {
        BBox::new(
            self.x_min + dx,
            self.y_min + dy,
            self.x_max + dx,
            self.y_max + dy,
        )
    }

    pub fn scale(&self, s: f64) -> Result<BBox> {
        BBox::new(
            self.x_min * s,
            self.y_min * s,
            self.x_max * s,
            self.y_max * s,
        )
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let c = <[f64; 4]>::deserialize(d)?;
        BBox::from_array(c).map_err(serde::de::Error::custom)
    }
}

impl CenterBox {
    pub fn to_corners(&self) -> Result<BBox> {
        BBox::new(
            self.x - self.w / 2.0,
            self.y - self.h / 2.0,
            self.x + self.w / 2.0,
            self.y + self.h / 2.0,
        )
    }
}

impl ImageSize {
    pub fn new(w: f64, h: f64) -> Result<Self> {
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "image size must be positive, got {w}x{h}"
            )));
        }
        Ok(ImageSize { w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn center_conversion() {
        let c = b(0.0, 0.0, 10.0, 10.0).to_center();
        assert_eq!((c.x, c.y, c.w, c.h), (5.0, 5.0, 10.0, 10.0));
        let c = b(2.0, 4.0, 6.0, 8.0).to_center();
        assert_eq!((c.x, c.y, c.w, c.h), (4.0, 6.0, 4.0, 4.0));
        let c = b(0.0, 0.0, 1.0, 1.0).to_center();
        assert_eq!((c.x, c.y, c.w, c.h), (0.5, 0.5, 1.0, 1.0));
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&b(20.0, 20.0, 30.0, 30.0)), 0.0);
        assert_eq!(a.iou(&b(0.0, 0.0, 10.0, 5.0)), 0.5);
    }

    #[test]
    fn union_examples() {
        let a = b(0.0, 0.0, 2.0, 2.0);
        assert_eq!(a.union(&a), a);
        assert_eq!(a.union(&b(5.0, 5.0, 8.0, 8.0)), b(0.0, 0.0, 8.0, 8.0));
        let big = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(big.union(&b(3.0, 3.0, 4.0, 4.0)), big);
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(BBox::new(0.0, 0.0, 0.0, 5.0).is_err());
        assert!(BBox::new(0.0, 3.0, 5.0, 2.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 5.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::INFINITY, 5.0).is_err());
        assert!(ImageSize::new(0.0, 10.0).is_err());
    }

    #[test]
    fn box_json_validates() {
        let ok: BBox = serde_json::from_str("[1, 2, 3, 4]").unwrap();
        assert_eq!(ok, b(1.0, 2.0, 3.0, 4.0));
        assert!(serde_json::from_str::<BBox>("[3, 2, 1, 4]").is_err());
    }

    prop_compose! {
        fn arb_box()(x in -100.0..100.0f64, y in -100.0..100.0f64,
                     w in 0.1..50.0f64, h in 0.1..50.0f64) -> BBox {
            b(x, y, x + w, y + h)
        }
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            let ab = a.iou(&c);
            prop_assert_eq!(ab, c.iou(&a));
            prop_assert!((0.0..=1.0).contains(&ab));
            if ab == 1.0 {
                prop_assert!((a.x_min - c.x_min).abs() < 1e-9 && (a.y_max - c.y_max).abs() < 1e-9);
            }
        }

        #[test]
        fn union_laws(a in arb_box(), c in arb_box(), d in arb_box()) {
            prop_assert_eq!(a.union(&c), c.union(&a));
            prop_assert_eq!(a.union(&c).union(&d), a.union(&c.union(&d)));
            prop_assert_eq!(a.union(&a), a);
            let u = a.union(&c);
            prop_assert!(u.contains(&a) && u.contains(&c));
        }

        #[test]
        fn center_round_trip(a in arb_box()) {
            let back = a.to_center().to_corners().unwrap();
            for (p, q) in a.to_array().iter().zip(back.to_array()) {
                prop_assert!((p - q).abs() <= 1e-9 * p.abs().max(1.0));
            }
        }
    }
}
