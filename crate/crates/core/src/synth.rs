//! Seeded synthetic world with learnable structure.
//!
//! Each image is split into vertical columns, one per scene. A scene is a
//! person interacting with an object (predicate drawn from a per-pair bias
//! table), a geometric arrangement (on, under, above, inside of) or a single
//! unrelated object. Ground truth is then derived from fixed rules over every
//! ordered pair, so geometric predicates are a function of the boxes alone and
//! interaction predicates are a function of the labels plus the features.
//!
//! Features are noisy prototypes: an object row carries its label prototype,
//! its attribute prototype and, for an interacting person, a role prototype.
//! A union row carries the mean of its two label prototypes plus the planted
//! interaction prototype. Prototypes are drawn from `prototype_seed`, so
//! worlds with different sampling seeds share them.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geom::{BBox, Detection, ImageSize};
use crate::io::{
    Dataset, FeatureStore, GroundTruth, GtAttribute, GtRelationship, ImageDetections, LabeledBox,
    PairFeatureIndex, VocabKind, Vocabularies, Vocabulary,
};

pub const OBJECTS: [&str; 8] = ["person", "horse", "guitar", "shirt", "table", "cup", "bag", "dog"];
pub const PREDICATES: [&str; 10] = [
    "no_relationship",
    "on",
    "under",
    "inside_of",
    "above",
    "ride",
    "play",
    "hold",
    "wear",
    "interacts_with",
];
pub const ATTRIBUTES: [&str; 6] = ["no_attribute", "wooden", "plastic", "transparent", "leather", "textile"];

/// Predicates assigned purely from box geometry.
pub const GEOMETRIC_PREDICATES: [&str; 4] = ["on", "under", "inside_of", "above"];

/// `(object, [(predicate, probability)])` for `person` interactions.
pub const INTERACTION_BIAS: [(&str, &[(&str, f64)]); 6] = [
    ("guitar", &[("play", 0.75), ("hold", 0.25)]),
    ("horse", &[("ride", 0.7), ("interacts_with", 0.3)]),
    ("shirt", &[("wear", 0.9), ("hold", 0.1)]),
    ("cup", &[("hold", 0.8), ("interacts_with", 0.2)]),
    ("dog", &[("interacts_with", 0.6), ("hold", 0.4)]),
    ("bag", &[("hold", 0.5), ("wear", 0.5)]),
];

const ON_SUBJECTS: [&str; 5] = ["cup", "bag", "guitar", "dog", "shirt"];
const UNDER_SUBJECTS: [&str; 3] = ["dog", "bag", "cup"];
const INSIDE_SUBJECTS: [&str; 2] = ["cup", "shirt"];
const ABOVE_SUBJECTS: [&str; 5] = ["cup", "bag", "guitar", "shirt", "dog"];
const ABOVE_OBJECTS: [&str; 4] = ["table", "bag", "dog", "horse"];

const ATTRIBUTE_ELIGIBILITY: [(&str, &[&str]); 5] = [
    ("guitar", &["wooden", "plastic"]),
    ("shirt", &["textile", "leather"]),
    ("table", &["wooden", "plastic", "transparent"]),
    ("cup", &["plastic", "transparent", "wooden"]),
    ("bag", &["leather", "textile", "plastic"]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub feature_dim: usize,
    pub prototype_seed: u64,
    pub attribute_prob: f64,
    pub attribute_scale: f64,
    pub role_scale: f64,
    pub interaction_scale: f64,
    pub noise_std: f64,
    /// Detection box jitter as a fraction of box size.
    pub box_jitter: f64,
    pub min_detection_score: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            feature_dim: 64,
            prototype_seed: 0x005E_ED0F_F00D,
            attribute_prob: 0.7,
            attribute_scale: 0.5,
            role_scale: 0.5,
            interaction_scale: 0.8,
            noise_std: 1.0,
            box_jitter: 0.02,
            min_detection_score: 0.55,
        }
    }
}

/// Vocabularies the generator's rules are written against.
pub fn standard_vocab() -> Vocabularies {
    Vocabularies {
        objects: Vocabulary::from_names(VocabKind::Object, &OBJECTS).expect("static vocabulary"),
        predicates: Vocabulary::from_names(VocabKind::Predicate, &PREDICATES).expect("static vocabulary"),
        attributes: Vocabulary::from_names(VocabKind::Attribute, &ATTRIBUTES).expect("static vocabulary"),
    }
}

/// Index of every name the rules use, resolved against a vocabulary.
struct Names {
    obj: BTreeMap<&'static str, usize>,
    pred: BTreeMap<&'static str, usize>,
    attr: BTreeMap<&'static str, usize>,
}

impl Names {
    fn resolve(vocab: &Vocabularies) -> Result<Self> {
        let map = |v: &Vocabulary, names: &[&'static str]| -> Result<BTreeMap<&'static str, usize>> {
            names.iter().map(|&n| Ok((n, v.lookup(n)?))).collect()
        };
        Ok(Names {
            obj: map(&vocab.objects, &OBJECTS)?,
            pred: map(&vocab.predicates, &PREDICATES)?,
            attr: map(&vocab.attributes, &ATTRIBUTES)?,
        })
    }

    fn o(&self, n: &str) -> usize {
        self.obj[n]
    }

    fn p(&self, n: &str) -> usize {
        self.pred[n]
    }

    fn is(&self, label: usize, set: &[&str]) -> bool {
        set.iter().any(|&n| self.obj[n] == label)
    }
}

struct Prototypes {
    label: Vec<Vec<f64>>,
    attribute: Vec<Vec<f64>>,
    role: Vec<Vec<f64>>,
    interaction: Vec<Vec<f64>>,
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

impl Prototypes {
    fn draw(vocab: &Vocabularies, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut block = |n: usize| (0..n).map(|_| gaussian(&mut rng, d)).collect::<Vec<_>>();
        Prototypes {
            label: block(vocab.objects.len()),
            attribute: block(vocab.attributes.len()),
            role: block(vocab.predicates.len()),
            interaction: block(vocab.predicates.len()),
        }
    }
}

/// A ground-truth object before jitter.
struct Placed {
    label: usize,
    bbox: BBox,
    attribute: usize,
}

/// Planted interaction between two placed objects.
struct Planted {
    subject: usize,
    object: usize,
    predicate: usize,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Box from corner and size, clipped into the image.
fn clip_box(x: f64, y: f64, w: f64, h: f64, img: &ImageSize) -> BBox {
    let x0 = x.clamp(0.0, img.w - 2.0);
    let y0 = y.clamp(0.0, img.h - 2.0);
    let x1 = (x + w).clamp(x0 + 1.0, img.w);
    let y1 = (y + h).clamp(y0 + 1.0, img.h);
    BBox::new(x0, y0, x1, y1).expect("clipped box is valid")
}

fn center_x(b: &BBox) -> f64 {
    0.5 * (b.x_min() + b.x_max())
}

fn within_x(s: &BBox, o: &BBox) -> bool {
    let c = center_x(s);
    c >= o.x_min() && c <= o.x_max()
}

/// `s` rests on top of `o`.
pub fn is_on(s: &BBox, o: &BBox) -> bool {
    within_x(s, o) && s.y_min() < o.y_min() && (s.y_max() - o.y_min()).abs() <= 0.1 * o.height()
}

/// `s` lies entirely below `o`.
pub fn is_under(s: &BBox, o: &BBox) -> bool {
    within_x(s, o) && s.y_min() >= o.y_max()
}

/// `s` floats above `o` with a clear gap.
pub fn is_above(s: &BBox, o: &BBox) -> bool {
    within_x(s, o) && s.y_max() <= o.y_min() - 0.25 * o.height()
}

pub fn is_inside(s: &BBox, o: &BBox) -> bool {
    o.contains(s)
}

/// Geometric predicate for an ordered pair, or `None`.
fn geometric_rule(names: &Names, s: &Placed, o: &Placed) -> Option<usize> {
    if names.is(s.label, &INSIDE_SUBJECTS) && o.label == names.o("bag") && is_inside(&s.bbox, &o.bbox) {
        return Some(names.p("inside_of"));
    }
    if names.is(s.label, &ON_SUBJECTS) && o.label == names.o("table") && is_on(&s.bbox, &o.bbox) {
        return Some(names.p("on"));
    }
    if names.is(s.label, &UNDER_SUBJECTS) && o.label == names.o("table") && is_under(&s.bbox, &o.bbox) {
        return Some(names.p("under"));
    }
    if names.is(s.label, &ABOVE_SUBJECTS) && names.is(o.label, &ABOVE_OBJECTS) && is_above(&s.bbox, &o.bbox) {
        return Some(names.p("above"));
    }
    None
}

#[derive(Clone, Copy)]
enum Scene {
    Interaction,
    On,
    Under,
    Inside,
    Above,
    Free,
}

const SCENE_WEIGHTS: [(Scene, f64); 6] = [
    (Scene::Interaction, 0.35),
    (Scene::On, 0.15),
    (Scene::Under, 0.1),
    (Scene::Inside, 0.1),
    (Scene::Above, 0.15),
    (Scene::Free, 0.15),
];

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

fn pick_weighted<T: Copy>(rng: &mut ChaCha8Rng, items: &[(T, f64)]) -> T {
    let total: f64 = items.iter().map(|x| x.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(v, w) in items {
        if u < w {
            return v;
        }
        u -= w;
    }
    items[items.len() - 1].0
}

fn scene_sizes(rng: &mut ChaCha8Rng, n: usize) -> Vec<Scene> {
    let mut scenes = Vec::new();
    let mut left = n;
    while left > 0 {
        let s = if left == 1 { Scene::Free } else { pick_weighted(rng, &SCENE_WEIGHTS) };
        left -= if matches!(s, Scene::Free) { 1 } else { 2 };
        scenes.push(s);
    }
    scenes
}

/// Places one scene inside the column `[x0, x0 + cw]`.
#[allow(clippy::too_many_arguments)]
fn place_scene(
    rng: &mut ChaCha8Rng,
    names: &Names,
    scene: Scene,
    x0: f64,
    cw: f64,
    img: &ImageSize,
    out: &mut Vec<Placed>,
    planted: &mut Vec<Planted>,
) {
    let h = img.h;
    let mut push = |label: usize, bbox: BBox| {
        out.push(Placed { label, bbox, attribute: 0 });
        out.len() - 1
    };
    match scene {
        Scene::Interaction => {
            let (obj, bias) = pick(rng, &INTERACTION_BIAS);
            let predicate = names.p(pick_weighted(rng, bias));
            let pw = uniform(rng, 0.3, 0.5) * cw;
            let ph = uniform(rng, 0.45, 0.7) * h;
            let px = x0 + uniform(rng, 0.0, cw - pw);
            let py = uniform(rng, 0.05, 0.95 * h - ph);
            let person = clip_box(px, py, pw, ph, img);
            let other = match *obj {
                "horse" => clip_box(px - 0.3 * pw, py + 0.55 * ph, 1.6 * pw, 0.6 * ph, img),
                "guitar" => clip_box(px + 0.1 * pw, py + 0.35 * ph, 0.9 * pw, 0.3 * ph, img),
                "shirt" => clip_box(px + 0.1 * pw, py + 0.2 * ph, 0.8 * pw, 0.35 * ph, img),
                "cup" => clip_box(px + 0.75 * pw, py + 0.4 * ph, 0.25 * pw, 0.1 * ph, img),
                "dog" => clip_box(px + 0.6 * pw, py + 0.7 * ph, 0.7 * pw, 0.3 * ph, img),
                _ => clip_box(px + 0.6 * pw, py + 0.35 * ph, 0.5 * pw, 0.3 * ph, img),
            };
            let s = push(names.o("person"), person);
            let o = push(names.o(obj), other);
            planted.push(Planted { subject: s, object: o, predicate });
        }
        Scene::On | Scene::Under | Scene::Above => {
            let (subjects, objects): (&[&str], &[&str]) = match scene {
                Scene::On => (&ON_SUBJECTS, &["table"]),
                Scene::Under => (&UNDER_SUBJECTS, &["table"]),
                _ => (&ABOVE_SUBJECTS, &ABOVE_OBJECTS),
            };
            let s_label = *pick(rng, subjects);
            let o_label = *pick(rng, objects);
            let ow = uniform(rng, 0.5, 0.9) * cw;
            let oh = uniform(rng, 0.15, 0.3) * h;
            let ox = x0 + uniform(rng, 0.0, cw - ow);
            let oy = match scene {
                Scene::Under => uniform(rng, 0.1, 0.3) * h,
                _ => uniform(rng, 0.5, 0.65) * h,
            };
            let o_box = clip_box(ox, oy, ow, oh, img);
            let sw = uniform(rng, 0.2, 0.45) * o_box.width();
            let sh = uniform(rng, 0.08, 0.2) * h;
            let sx = o_box.x_min() + uniform(rng, 0.0, o_box.width() - sw);
            let (sy, sh) = match scene {
                Scene::On => (o_box.y_min() + uniform(rng, -0.05, 0.05) * o_box.height() - sh, sh),
                Scene::Under => {
                    let top = o_box.y_max() + uniform(rng, 0.02, 0.3) * o_box.height();
                    (top, sh.min(h - top - 1.0).max(4.0))
                }
                _ => (o_box.y_min() - uniform(rng, 0.4, 1.2) * o_box.height() - sh, sh),
            };
            push(names.o(s_label), clip_box(sx, sy, sw, sh, img));
            push(names.o(o_label), o_box);
        }
        Scene::Inside => {
            let s_label = *pick(rng, &INSIDE_SUBJECTS);
            let bw = uniform(rng, 0.45, 0.85) * cw;
            let bh = uniform(rng, 0.25, 0.45) * h;
            let bx = x0 + uniform(rng, 0.0, cw - bw);
            let by = uniform(rng, 0.1, 0.9 * h - bh);
            let bag = clip_box(bx, by, bw, bh, img);
            let sw = uniform(rng, 0.3, 0.6) * bag.width();
            let sh = uniform(rng, 0.3, 0.6) * bag.height();
            let sx = bag.x_min() + uniform(rng, 0.05, 0.95) * (bag.width() - sw);
            let sy = bag.y_min() + uniform(rng, 0.05, 0.95) * (bag.height() - sh);
            push(names.o(s_label), clip_box(sx, sy, sw, sh, img));
            push(names.o("bag"), bag);
        }
        Scene::Free => {
            let label = *pick(rng, &OBJECTS);
            let w = uniform(rng, 0.3, 0.8) * cw;
            let bh = uniform(rng, 0.15, 0.5) * h;
            let x = x0 + uniform(rng, 0.0, cw - w);
            let y = uniform(rng, 0.0, h - bh);
            push(names.o(label), clip_box(x, y, w, bh, img));
        }
    }
}

fn assign_attributes(rng: &mut ChaCha8Rng, names: &Names, objects: &mut [Placed], prob: f64) {
    for p in objects {
        let eligible = ATTRIBUTE_ELIGIBILITY.iter().find(|(n, _)| names.o(n) == p.label);
        if let Some((_, attrs)) = eligible {
            if rng.random::<f64>() < prob {
                p.attribute = names.attr[pick(rng, attrs)];
            }
        }
    }
}

/// Ground-truth predicate for every ordered pair, planted interactions first.
fn derive_relationships(names: &Names, objects: &[Placed], planted: &[Planted]) -> Vec<(usize, usize, usize)> {
    let mut rels = Vec::new();
    for (si, s) in objects.iter().enumerate() {
        for (oi, o) in objects.iter().enumerate() {
            if si == oi {
                continue;
            }
            let p = planted
                .iter()
                .find(|q| q.subject == si && q.object == oi)
                .map(|q| q.predicate)
                .or_else(|| geometric_rule(names, s, o));
            if let Some(p) = p {
                rels.push((si, oi, p));
            }
        }
    }
    rels
}

fn jitter_box(rng: &mut ChaCha8Rng, b: &BBox, frac: f64, img: &ImageSize) -> BBox {
    let (w, h) = (b.width(), b.height());
    let mut n = || rng.sample::<f64, _>(StandardNormal) * frac;
    let x0 = b.x_min() + n() * w;
    let y0 = b.y_min() + n() * h;
    let x1 = b.x_max() + n() * w;
    let y1 = b.y_max() + n() * h;
    clip_box(x0.min(x1 - 1.0), y0.min(y1 - 1.0), (x1 - x0).max(1.0), (y1 - y0).max(1.0), img)
}

fn noisy_row(rng: &mut ChaCha8Rng, parts: &[(&[f64], f64)], d: usize, noise: f64) -> Vec<f32> {
    (0..d)
        .map(|k| {
            let signal: f64 = parts.iter().map(|(v, s)| v[k] * s).sum();
            (signal + noise * rng.sample::<f64, _>(StandardNormal)) as f32
        })
        .collect()
}

/// [`synth_world_with`] under the default configuration.
pub fn synth_world(seed: u64, n_images: usize, n_objects_per_image: usize, vocab: &Vocabularies) -> Result<Dataset> {
    synth_world_with(seed, n_images, n_objects_per_image, vocab, &SynthConfig::default())
}

/// Generates `n_images` images with `n_objects_per_image` detections each.
/// `vocab` must contain every name in [`OBJECTS`], [`PREDICATES`] and
/// [`ATTRIBUTES`]; it may contain more.
pub fn synth_world_with(
    seed: u64,
    n_images: usize,
    n_objects_per_image: usize,
    vocab: &Vocabularies,
    config: &SynthConfig,
) -> Result<Dataset> {
    if n_objects_per_image < 2 {
        return Err(Error::InvalidArgument(format!(
            "n_objects_per_image must be >= 2, got {n_objects_per_image}"
        )));
    }
    let names = Names::resolve(vocab)?;
    let d = config.feature_dim;
    let protos = Prototypes::draw(vocab, d, config.prototype_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut features = FeatureStore::new(d)?;
    let mut pair_features = PairFeatureIndex::new();
    let mut images = Vec::with_capacity(n_images);
    let mut gt = GroundTruth::default();
    let width = (n_images.max(2) - 1).to_string().len();

    for i in 0..n_images {
        let image_id = format!("img_{i:0width$}");
        let size = ImageSize::new(
            rng.random_range(480..=800) as f64,
            rng.random_range(360..=640) as f64,
        )?;
        let scenes = scene_sizes(&mut rng, n_objects_per_image);
        let cw = size.w / scenes.len() as f64;
        let mut objects = Vec::new();
        let mut planted = Vec::new();
        for (c, scene) in scenes.iter().enumerate() {
            place_scene(&mut rng, &names, *scene, c as f64 * cw, cw, &size, &mut objects, &mut planted);
        }
        assign_attributes(&mut rng, &names, &mut objects, config.attribute_prob);

        let labeled = |k: usize| LabeledBox { label: objects[k].label, bbox: objects[k].bbox };
        let rels = derive_relationships(&names, &objects, &planted);
        for &(s, o, p) in &rels {
            gt.relationships.push(GtRelationship {
                image_id: image_id.clone(),
                subject: labeled(s),
                object: labeled(o),
                predicate: p,
            });
        }
        for (k, p) in objects.iter().enumerate() {
            if p.attribute != 0 {
                gt.attributes.push(GtAttribute {
                    image_id: image_id.clone(),
                    object: labeled(k),
                    attribute: p.attribute,
                });
            }
        }

        // detection order is shuffled so it carries no scene structure
        let mut order: Vec<usize> = (0..objects.len()).collect();
        order.shuffle(&mut rng);
        let mut refs = vec![0u32; objects.len()];
        let mut detections = Vec::with_capacity(objects.len());
        for &k in &order {
            let p = &objects[k];
            let role = planted.iter().find(|q| q.subject == k).map(|q| q.predicate);
            let mut parts: Vec<(&[f64], f64)> = vec![(&protos.label[p.label], 1.0)];
            if p.attribute != 0 {
                parts.push((&protos.attribute[p.attribute], config.attribute_scale));
            }
            if let Some(r) = role {
                parts.push((&protos.role[r], config.role_scale));
            }
            let r = features.push(&noisy_row(&mut rng, &parts, d, config.noise_std))?;
            refs[k] = r;
            detections.push(Detection {
                image_id: image_id.clone(),
                label: p.label,
                score: uniform(&mut rng, config.min_detection_score, 1.0),
                bbox: jitter_box(&mut rng, &p.bbox, config.box_jitter, &size),
                feature_ref: Some(r),
            });
        }
        for (ai, &a) in order.iter().enumerate() {
            for &b in &order[ai + 1..] {
                let inter = planted
                    .iter()
                    .find(|q| (q.subject, q.object) == (a, b) || (q.subject, q.object) == (b, a))
                    .map(|q| q.predicate);
                let mut parts: Vec<(&[f64], f64)> =
                    vec![(&protos.label[objects[a].label], 0.5), (&protos.label[objects[b].label], 0.5)];
                if let Some(p) = inter {
                    parts.push((&protos.interaction[p], config.interaction_scale));
                }
                let r = features.push(&noisy_row(&mut rng, &parts, d, config.noise_std))?;
                pair_features.insert(refs[a], refs[b], r);
            }
        }
        images.push(ImageDetections { image_id, size, detections });
    }

    Ok(Dataset {
        vocab: vocab.clone(),
        images,
        features,
        pair_features,
        gt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(seed: u64, n: usize) -> Dataset {
        synth_world(seed, n, 4, &standard_vocab()).unwrap()
    }

    #[test]
    fn deterministic_in_seed() {
        let a = world(3, 20);
        assert_eq!(a, world(3, 20));
        assert_ne!(a.features, world(4, 20).features);
    }

    #[test]
    fn rejects_single_object_images() {
        assert!(synth_world(0, 1, 1, &standard_vocab()).is_err());
    }

    #[test]
    fn shapes_and_refs() {
        let w = world(1, 30);
        assert_eq!(w.images.len(), 30);
        assert!(w.images.iter().all(|i| i.detections.len() == 4));
        assert_eq!(w.features.len(), 30 * (4 + 6));
        assert_eq!(w.pair_features.len(), 30 * 6);
        assert_eq!(w.features.dim(), 64);
        w.validate_refs().unwrap();
    }

    #[test]
    fn above_relationships_are_geometric() {
        let w = world(2, 400);
        let above = w.vocab.predicates.lookup("above").unwrap();
        let n = w
            .gt
            .relationships
            .iter()
            .filter(|r| r.predicate == above)
            .inspect(|r| {
                assert!(r.subject.bbox.y_max() < r.object.bbox.y_min());
                assert!(is_above(&r.subject.bbox, &r.object.bbox));
            })
            .count();
        assert!(n > 20, "{n}");
    }

    #[test]
    fn bias_matches_configuration() {
        let w = world(7, 10_000);
        let v = &w.vocab;
        let (person, guitar) = (v.objects.lookup("person").unwrap(), v.objects.lookup("guitar").unwrap());
        let play = v.predicates.lookup("play").unwrap();
        let rels: Vec<_> = w
            .gt
            .relationships
            .iter()
            .filter(|r| r.subject.label == person && r.object.label == guitar)
            .collect();
        assert!(rels.len() > 500);
        let frac = rels.iter().filter(|r| r.predicate == play).count() as f64 / rels.len() as f64;
        assert!((frac - 0.75).abs() < 0.05, "{frac}");
    }

    #[test]
    fn every_detection_matches_its_ground_truth() {
        let w = world(5, 50);
        let by = w.gt.by_image();
        for img in &w.images {
            if let Some(g) = by.get(img.image_id.as_str()) {
                for r in &g.relationships {
                    assert!(img.detections.iter().any(|d| d.label == r.subject.label && d.bbox.iou(&r.subject.bbox) > 0.7));
                }
            }
        }
    }
}
