//! Hand-built predictions against hand-built ground truth: matching modes,
//! ranking, AP and the weighted score.
//!
//! Run with `cargo run --example rank_and_eval`.

use vrd::eval::{average_precision, evaluate, match_predictions, EvalOptions, MatchCriterion};
use vrd::geom::BBox;
use vrd::io::{GroundTruth, GtRelationship, LabeledBox};
use vrd::ranker::{rank_top_k, score_triplet, Prediction, ScoredBox, TripletPrediction};

fn triplet(subject: BBox, object: BBox, predicate: usize, scores: (f64, f64, f64)) -> Prediction {
    Prediction::Relationship(TripletPrediction {
        image_id: "img".into(),
        subject_index: 0,
        object_index: 1,
        subject: ScoredBox { label: 0, bbox: subject, score: scores.0 },
        object: ScoredBox { label: 1, bbox: object, score: scores.2 },
        predicate,
        score: score_triplet(scores.0, scores.1, scores.2),
    })
}

fn main() -> vrd::Result<()> {
    let s = BBox::new(0.0, 0.0, 10.0, 10.0)?;
    let o = BBox::new(20.0, 0.0, 40.0, 20.0)?;
    let gt = GroundTruth {
        relationships: vec![GtRelationship {
            image_id: "img".into(),
            subject: LabeledBox { label: 0, bbox: s },
            object: LabeledBox { label: 1, bbox: o },
            predicate: 1,
        }],
        attributes: vec![],
    };

    // Subject shifted so its own IoU is 0.4 while the union box still overlaps well.
    let shifted = s.translate(30.0 / 7.0, 0.0)?;
    let preds = rank_top_k(
        vec![
            triplet(shifted, o, 1, (0.9, 0.8, 0.9)),
            triplet(s, o, 2, (0.9, 0.7, 0.9)),
            triplet(s, o, 1, (0.8, 0.6, 0.8)),
        ],
        10,
    );
    let by_image = gt.by_image();
    let image_gt = &by_image["img"];
    let refs: Vec<&Prediction> = preds.iter().collect();
    // AP here pools all predicates; the report below computes it per predicate class.
    for (name, crit) in [("relationship", MatchCriterion::relationship()), ("phrase", MatchCriterion::phrase())] {
        let flags = match_predictions(&refs, image_gt, &crit);
        let scored: Vec<(f64, bool)> = preds.iter().map(|p| p.score()).zip(flags.iter().copied()).collect();
        println!("{name:12} matches {flags:?}  AP {:.3}", average_precision(&scored, 1));
    }

    let report = evaluate(&preds, &gt, &EvalOptions::default());
    println!(
        "R@{} {:.3}  mAP_rel {:.3}  mAP_phr {:.3}  score {:.3}",
        report.k, report.recall_at_k, report.map_rel, report.map_phr, report.final_score
    );
    Ok(())
}
