use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::jsonl::{read_records, write_records};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::geom::{BBox, Detection, ImageSize};

/// All detections of one image, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDetections {
    pub image_id: String,
    pub size: ImageSize,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionRecord {
    image_id: String,
    image_w: f64,
    image_h: f64,
    label: String,
    score: f64,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    #[serde(default)]
    feature_ref: Option<u32>,
}

/// Reads a detections file, grouped by image and sorted by `image_id`.
pub fn read_detections(path: impl AsRef<Path>, objects: &Vocabulary) -> Result<Vec<ImageDetections>> {
    let path = path.as_ref();
    let mut images: BTreeMap<String, ImageDetections> = BTreeMap::new();
    for (line, rec) in read_records::<DetectionRecord>(path)? {
        let at = |msg: String| Error::parse(path, line, msg);
        let label = objects.lookup(&rec.label).map_err(|e| at(e.to_string()))?;
        if !(0.0..=1.0).contains(&rec.score) {
            return Err(at(format!("score {} outside [0, 1]", rec.score)));
        }
        let bbox = BBox::new(rec.x_min, rec.y_min, rec.x_max, rec.y_max).map_err(|e| at(e.to_string()))?;
        let size = ImageSize::new(rec.image_w, rec.image_h).map_err(|e| at(e.to_string()))?;
        let entry = images
            .entry(rec.image_id.clone())
            .or_insert_with(|| ImageDetections {
                image_id: rec.image_id.clone(),
                size,
                detections: Vec::new(),
            });
        if entry.size != size {
            return Err(at(format!(
                "image {} size {}x{} conflicts with earlier {}x{}",
                rec.image_id, size.w, size.h, entry.size.w, entry.size.h
            )));
        }
        entry.detections.push(Detection {
            image_id: rec.image_id,
            label,
            score: rec.score,
            bbox,
            feature_ref: rec.feature_ref,
        });
    }
    Ok(images.into_values().collect())
}

pub fn write_detections(path: impl AsRef<Path>, images: &[ImageDetections], objects: &Vocabulary) -> Result<()> {
    let records = images.iter().flat_map(|img| {
        img.detections.iter().map(move |d| DetectionRecord {
            image_id: img.image_id.clone(),
            image_w: img.size.w,
            image_h: img.size.h,
            label: objects.name(d.label).to_string(),
            score: d.score,
            x_min: d.bbox.x_min(),
            y_min: d.bbox.y_min(),
            x_max: d.bbox.x_max(),
            y_max: d.bbox.y_max(),
            feature_ref: d.feature_ref,
        })
    });
    write_records(path.as_ref(), records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::vocab::VocabKind;

    fn vocab() -> Vocabulary {
        Vocabulary::from_names(VocabKind::Object, &["man", "horse"]).unwrap()
    }

    fn write(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("det.jsonl");
        std::fs::write(&p, text).unwrap();
        (dir, p)
    }

    const TWO: &str = r#"{"image_id":"a","image_w":100,"image_h":80,"label":"man","score":0.9,"x_min":1,"y_min":2,"x_max":30,"y_max":60,"feature_ref":0}
{"image_id":"a","image_w":100,"image_h":80,"label":"horse","score":0.7,"x_min":10,"y_min":20,"x_max":90,"y_max":70,"feature_ref":1}
"#;

    #[test]
    fn two_detections_one_image() {
        let (_d, p) = write(TWO);
        let imgs = read_detections(&p, &vocab()).unwrap();
        assert_eq!(imgs.len(), 1);
        assert_eq!(imgs[0].detections.len(), 2);
        assert_eq!(imgs[0].detections[1].label, 1);
        assert_eq!(imgs[0].size, ImageSize { w: 100.0, h: 80.0 });
    }

    #[test]
    fn bad_score_names_line() {
        let text = TWO.replace("\"score\":0.7", "\"score\":1.5");
        let (_d, p) = write(&text);
        let err = read_detections(&p, &vocab()).unwrap_err().to_string();
        assert!(err.contains(":2:") && err.contains("score"), "{err}");
    }

    #[test]
    fn unknown_label_named() {
        let text = TWO.replace("\"horse\"", "\"zebra\"");
        let (_d, p) = write(&text);
        let err = read_detections(&p, &vocab()).unwrap_err().to_string();
        assert!(err.contains("zebra"), "{err}");
    }

    #[test]
    fn malformed_line_number() {
        let (_d, p) = write("\n{\"image_id\": }\n");
        let err = read_detections(&p, &vocab()).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn empty_file() {
        let (_d, p) = write("");
        assert!(read_detections(&p, &vocab()).unwrap().is_empty());
    }

    #[test]
    fn round_trip() {
        let (dir, p) = write(TWO);
        let imgs = read_detections(&p, &vocab()).unwrap();
        let q = dir.path().join("out.jsonl");
        write_detections(&q, &imgs, &vocab()).unwrap();
        assert_eq!(read_detections(&q, &vocab()).unwrap(), imgs);
    }
}
