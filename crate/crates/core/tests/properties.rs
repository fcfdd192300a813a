mod common;

use proptest::prelude::*;

use vrd::eval::{average_precision, eligibility, match_predictions, recall_at_k, MatchCriterion, RecallAveraging};
use vrd::freq::{argmax, FreqTable};
use vrd::fusion::TrainPair;
use vrd::geom::{BBox, ImageSize};
use vrd::io::GtRelationship;
use vrd::nn::softmax;
use vrd::ranker::{rank_top_k, ranking_order, Prediction, ScoredBox, TripletPrediction};
use vrd::spatial::{box_delta, normalized_coords, spatial_feature};
use vrd::train::negatives_to_keep;

fn bbox() -> impl Strategy<Value = BBox> {
    (0.0..500.0f64, 0.0..500.0f64, 1.0..300.0f64, 1.0..300.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn translation_moves_only_coordinates(s in bbox(), o in bbox(), dx in -200.0..200.0f64, dy in -200.0..200.0f64) {
        let img = ImageSize::new(1000.0, 1000.0).unwrap();
        let a = spatial_feature(&s, &o, &img);
        let b = spatial_feature(&s.translate(dx, dy).unwrap(), &o.translate(dx, dy).unwrap(), &img);
        for i in 0..12 {
            prop_assert!(close(a[i], b[i], 1e-9), "delta {i}: {} vs {}", a[i], b[i]);
        }
        prop_assert!(close(b[12], a[12] + dx / img.w, 1e-9));
        prop_assert!(close(b[18], a[18] + dy / img.h, 1e-9));
    }

    #[test]
    fn joint_scaling_is_invisible(s in bbox(), o in bbox(), k in 0.1..10.0f64) {
        let img = ImageSize::new(800.0, 600.0).unwrap();
        let big = ImageSize::new(800.0 * k, 600.0 * k).unwrap();
        let a = spatial_feature(&s, &o, &img);
        let b = spatial_feature(&s.scale(k).unwrap(), &o.scale(k).unwrap(), &big);
        for i in 0..22 {
            prop_assert!(close(a[i], b[i], 1e-9), "entry {i}: {} vs {}", a[i], b[i]);
        }
    }

    #[test]
    fn log_terms_are_antisymmetric(s in bbox(), o in bbox()) {
        let (cs, co) = (s.to_center(), o.to_center());
        let ab = box_delta(&cs, &co);
        let ba = box_delta(&co, &cs);
        prop_assert!(close(ab[2], -ba[2], 1e-12));
        prop_assert!(close(ab[3], -ba[3], 1e-12));
    }

    #[test]
    fn swapping_roles_reorders_blocks(s in bbox(), o in bbox()) {
        let img = ImageSize::new(900.0, 700.0).unwrap();
        let fwd = spatial_feature(&s, &o, &img);
        let rev = spatial_feature(&o, &s, &img);
        prop_assert_eq!(s.union(&o), o.union(&s));
        let (cs, co, cp) = (s.to_center(), o.to_center(), s.union(&o).to_center());
        let expected: Vec<f64> = box_delta(&co, &cs)
            .into_iter()
            .chain(box_delta(&co, &cp))
            .chain(box_delta(&cp, &cs))
            .chain(normalized_coords(&o, &img))
            .chain(normalized_coords(&s, &img))
            .collect();
        prop_assert_eq!(rev.to_vec(), expected);
        prop_assert_eq!(&fwd[12..17], &rev[17..22]);
        prop_assert_eq!(&fwd[17..22], &rev[12..17]);
    }

    #[test]
    fn in_image_coordinates_are_unit(s in bbox(), o in bbox()) {
        let img = ImageSize::new(800.0, 800.0).unwrap();
        let f = spatial_feature(&s, &o, &img);
        prop_assert!(f[12..22].iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn freq_matches_recount(seed in any::<u64>(), n in 0usize..300, alpha in prop_oneof![Just(0.0), 0.0..3.0f64]) {
        let mut rng = common::rng(seed);
        let k = 6;
        let gt = common::random_gt(&mut rng, n, 4, k);
        let table = FreqTable::build(&gt, k, alpha).unwrap();
        let oracle = common::recount(&gt, k, alpha);
        prop_assert_eq!(table.num_keys(), oracle.len());
        for ((s, o), (counts, probs)) in &oracle {
            prop_assert_eq!(table.counts(*s, *o).unwrap(), counts.as_slice());
            prop_assert_eq!(&table.probs(*s, *o), probs);
            prop_assert!((table.probs(*s, *o).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn freq_ignores_row_order(seed in any::<u64>(), n in 1usize..200) {
        use rand::seq::SliceRandom;
        let mut rng = common::rng(seed);
        let gt = common::random_gt(&mut rng, n, 3, 5);
        let mut shuffled = gt.clone();
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(FreqTable::build(&gt, 5, 0.5).unwrap(), FreqTable::build(&shuffled, 5, 0.5).unwrap());
    }

    #[test]
    fn extra_count_never_lowers_probability(seed in any::<u64>(), n in 1usize..100, p in 1usize..5) {
        let mut rng = common::rng(seed);
        let mut gt = common::random_gt(&mut rng, n, 2, 5);
        let before = FreqTable::build(&gt, 5, 0.0).unwrap();
        let mut extra: GtRelationship = gt[0].clone();
        extra.predicate = p;
        let key = (extra.subject.label, extra.object.label);
        gt.push(extra);
        let after = FreqTable::build(&gt, 5, 0.0).unwrap();
        prop_assert!(after.probs(key.0, key.1)[p] >= before.probs(key.0, key.1)[p]);
    }

    #[test]
    fn semantic_logits_finite(seed in any::<u64>(), s in 0usize..5, o in 0usize..5) {
        let mut rng = common::rng(seed);
        let gt = common::random_gt(&mut rng, 30, 3, 4);
        let table = FreqTable::build(&gt, 4, 0.0).unwrap();
        let l = table.semantic_logits(s, o);
        prop_assert_eq!(l.len(), 4);
        prop_assert!(l.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_positive_normalized_shift_invariant(z in prop::collection::vec(-30.0..30.0f64, 1..12), c in -100.0..100.0f64) {
        let p = softmax(&z);
        prop_assert!(p.iter().all(|&v| v > 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert_eq!(argmax(&p), argmax(&z));
    }

    #[test]
    fn fusion_gradients_match_differences(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (model, batch) = common::random_fusion_problem(&mut rng);
        let err = common::fusion_gradient_error(&model, &batch);
        prop_assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn attribute_gradients_match_differences(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (model, batch) = common::random_attribute_problem(&mut rng);
        let err = common::attribute_gradient_error(&model, &batch);
        prop_assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn semantic_shift_has_no_gradient_effect(seed in any::<u64>(), c in -5.0..5.0f64) {
        let mut rng = common::rng(seed);
        let (model, batch) = common::random_fusion_problem(&mut rng);
        let shifted: Vec<TrainPair> = batch
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.input.sem_logits.iter_mut().for_each(|v| *v += c);
                q
            })
            .collect();
        let a: Vec<&TrainPair> = batch.iter().collect();
        let b: Vec<&TrainPair> = shifted.iter().collect();
        let (la, ga) = model.loss_and_grads(&a).unwrap();
        let (lb, gb) = model.loss_and_grads(&b).unwrap();
        prop_assert!((la - lb).abs() < 1e-9);
        for (x, y) in vrd::fusion::flatten_grads(&ga).iter().zip(vrd::fusion::flatten_grads(&gb)) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn negative_cap(pos in 0usize..20, cand in 0usize..100, ratio in 0.0..5.0f64) {
        let k = negatives_to_keep(pos, cand, ratio);
        prop_assert!(k <= cand);
        prop_assert!(k as f64 <= ratio * pos.max(1) as f64);
    }

    #[test]
    fn greedy_equals_exhaustive_when_unambiguous(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (preds, gt) = common::random_metric_instance(&mut rng, 5, 3);
        let by = gt.by_image();
        let empty = Default::default();
        let g = by.get("x").unwrap_or(&empty);
        let refs: Vec<&Prediction> = preds.iter().collect();
        for criterion in [MatchCriterion::relationship(), MatchCriterion::phrase()] {
            let elig = eligibility(&refs, g, &criterion);
            let greedy = match_predictions(&refs, g, &criterion);
            let best = common::exhaustive_flags(&elig, g.len());
            let count = |f: &[bool]| f.iter().filter(|&&b| b).count();
            prop_assert!(count(&greedy) <= count(&best));
            if elig.iter().all(|row| row.iter().filter(|&&b| b).count() <= 1) {
                prop_assert_eq!(greedy, best);
            }
        }
    }

    #[test]
    fn recall_is_monotone_in_k(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (preds, gt) = common::random_metric_instance(&mut rng, 8, 3);
        let crit = MatchCriterion::relationship();
        let mut last = -1.0;
        for k in 1..=10 {
            let r = recall_at_k(&preds, &gt, k, &crit, RecallAveraging::Micro);
            prop_assert!(r >= last);
            prop_assert!((0.0..=1.0).contains(&r));
            last = r;
        }
    }

    #[test]
    fn matching_requires_equal_labels(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (preds, gt) = common::random_metric_instance(&mut rng, 5, 3);
        let by = gt.by_image();
        let empty = Default::default();
        let g = by.get("x").unwrap_or(&empty);
        for p in &preds {
            let Prediction::Relationship(t) = p else { unreachable!() };
            for criterion in [MatchCriterion::relationship(), MatchCriterion::phrase()] {
                if match_predictions(&[p], g, &criterion)[0] {
                    prop_assert!(g.relationships.iter().any(|r| r.subject.label == t.subject.label
                        && r.object.label == t.object.label
                        && r.predicate == t.predicate));
                }
            }
        }
    }

    #[test]
    fn ap_bounded_and_tie_invariant(flags in prop::collection::vec(any::<bool>(), 0..12), levels in 1usize..4, extra in 0usize..3) {
        let scored: Vec<(f64, bool)> = flags.iter().enumerate().map(|(i, &f)| ((i % levels) as f64, f)).collect();
        let n_gt = flags.iter().filter(|&&f| f).count() + extra;
        let ap = average_precision(&scored, n_gt);
        prop_assert!((0.0..=1.0).contains(&ap));
        let mut rev = scored.clone();
        rev.reverse();
        prop_assert_eq!(ap, average_precision(&rev, n_gt));
    }

    #[test]
    fn ranking_is_a_total_deterministic_order(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = common::rng(seed);
        let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let preds: Vec<Prediction> = (0..30)
            .map(|_| Prediction::Relationship(TripletPrediction {
                image_id: "x".into(),
                subject_index: rng.random_range(0..3),
                object_index: rng.random_range(0..3),
                subject: ScoredBox { label: 0, bbox: b, score: 1.0 },
                object: ScoredBox { label: 0, bbox: b, score: 1.0 },
                predicate: rng.random_range(1..4),
                score: [0.2, 0.5, 0.9][rng.random_range(0..3)],
            }))
            .collect();
        let mut rev = preds.clone();
        rev.reverse();
        let a = rank_top_k(preds, 10);
        prop_assert_eq!(&a, &rank_top_k(rev, 10));
        for w in a.windows(2) {
            prop_assert!(ranking_order(&w[0], &w[1]).is_le());
        }
    }
}
