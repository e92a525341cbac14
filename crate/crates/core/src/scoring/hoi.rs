//! Two-stage human-object interaction: training-target construction from
//! box annotations plus detector proposals, and chained inference over
//! per-pair log-probability tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::scoring::geometry::{iou, nms, BoundingBox};

pub const NO_INTERACTION: &str = "no interaction";

/// A ground-truth (person, object, class) triple for one image. Classes
/// use the `verb+object` form, e.g. `riding+horse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HOIAnnotation {
    pub person: BoundingBox,
    pub object: BoundingBox,
    pub class: String,
}

/// `riding+horse` → `riding the horse`.
pub fn class_label_text(class: &str) -> Result<String, PipelineError> {
    match class.split_once('+') {
        Some((verb, object)) if !verb.is_empty() && !object.is_empty() => {
            Ok(format!("{verb} the {object}"))
        }
        _ => Err(PipelineError::invalid(format!(
            "interaction class must be verb+object, got {class:?}"
        ))),
    }
}

/// Training targets for one image: deduplicated person boxes, the
/// detector object boxes (plus any appended ground-truth boxes), the
/// label texts per object box, and for each input annotation the
/// (person, object) indices it was assigned to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HOITargets {
    pub persons: Vec<BoundingBox>,
    pub objects: Vec<BoundingBox>,
    pub object_labels: Vec<Vec<String>>,
    pub annotation_map: Vec<(usize, usize)>,
}

const PERSON_NMS_THRESHOLD: f64 = 0.7;
const OBJECT_ALIGN_IOU: f64 = 0.5;

/// Build training targets for one image.
///
/// Person boxes are deduplicated with NMS at IoU 0.7 (uniform scores, so
/// earlier boxes win ties); annotations on a pruned person are remapped
/// to the surviving person box with the highest IoU. Each ground-truth
/// object box is aligned to the detector box of maximum IoU when that
/// IoU is at least 0.5, otherwise the ground-truth box itself is
/// appended to the detector set. Aligned boxes carry the interaction
/// text ("riding the horse"); detector boxes nothing aligned to carry
/// "no interaction". A box aligned by several annotations keeps all of
/// their labels.
pub fn hoi_build_targets(
    annotations: &[HOIAnnotation],
    detector_boxes: &[BoundingBox],
) -> Result<HOITargets, PipelineError> {
    let person_boxes: Vec<BoundingBox> = annotations.iter().map(|a| a.person).collect();
    let scores = vec![1.0; person_boxes.len()];
    let mut kept = nms(&person_boxes, &scores, PERSON_NMS_THRESHOLD);
    kept.sort_unstable();
    let persons: Vec<BoundingBox> = kept.iter().map(|&i| person_boxes[i]).collect();

    let mut objects = detector_boxes.to_vec();
    let mut object_labels: Vec<Vec<String>> = vec![Vec::new(); objects.len()];
    let mut annotation_map = Vec::with_capacity(annotations.len());

    for ann in annotations {
        let person_idx = persons
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| {
                iou(&ann.person, a)
                    .total_cmp(&iou(&ann.person, b))
                    .then(j.cmp(i))
            })
            .map(|(i, _)| i)
            .ok_or_else(|| PipelineError::invalid("no annotations, so no person boxes"))?;

        let best_det = detector_boxes
            .iter()
            .enumerate()
            .map(|(i, b)| (i, iou(&ann.object, b)))
            .max_by(|(i, a), (j, b)| a.total_cmp(b).then(j.cmp(i)));
        let object_idx = match best_det {
            Some((i, overlap)) if overlap >= OBJECT_ALIGN_IOU => i,
            _ => {
                objects.push(ann.object);
                object_labels.push(Vec::new());
                objects.len() - 1
            }
        };
        let label = class_label_text(&ann.class)?;
        if !object_labels[object_idx].contains(&label) {
            object_labels[object_idx].push(label);
        }
        annotation_map.push((person_idx, object_idx));
    }

    for labels in &mut object_labels {
        if labels.is_empty() {
            labels.push(NO_INTERACTION.to_string());
        }
    }

    Ok(HOITargets {
        persons,
        objects,
        object_labels,
        annotation_map,
    })
}

/// One detected person paired with one object box plus the model's
/// per-class log-probability table for that pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HOICandidate {
    pub person: BoundingBox,
    pub person_score: f64,
    pub object: BoundingBox,
    pub interaction_logprobs: BTreeMap<String, f64>,
    pub no_interaction_logprob: f64,
}

/// A scored (person, object, class) prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HOITriple {
    pub person: BoundingBox,
    pub object: BoundingBox,
    pub class: String,
    pub score: f64,
}

/// Chained inference: drop candidates whose person score is at or below
/// `person_threshold` (default 0.5); prune object boxes judged
/// non-interacting — when `prune_threshold` is given, those whose
/// no-interaction log-probability exceeds it, otherwise those where
/// no-interaction is the argmax label. Each surviving class becomes a
/// triple scored by its log-probability, returned in descending order.
pub fn hoi_infer(
    candidates: &[HOICandidate],
    person_threshold: f64,
    prune_threshold: Option<f64>,
) -> Vec<HOITriple> {
    let mut triples = Vec::new();
    for cand in candidates {
        if cand.person_score <= person_threshold {
            continue;
        }
        let pruned = match prune_threshold {
            Some(t) => cand.no_interaction_logprob > t,
            None => cand
                .interaction_logprobs
                .values()
                .all(|&lp| cand.no_interaction_logprob >= lp),
        };
        if pruned {
            continue;
        }
        for (class, &lp) in &cand.interaction_logprobs {
            triples.push(HOITriple {
                person: cand.person,
                object: cand.object,
                class: class.clone(),
                score: lp,
            });
        }
    }
    triples.sort_by(|a, b| b.score.total_cmp(&a.score));
    triples
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn ann(person: BoundingBox, object: BoundingBox, class: &str) -> HOIAnnotation {
        HOIAnnotation {
            person,
            object,
            class: class.to_string(),
        }
    }

    #[test]
    fn class_label_forms() {
        assert_eq!(class_label_text("riding+horse").unwrap(), "riding the horse");
        assert_eq!(
            class_label_text("sitting on+park bench").unwrap(),
            "sitting on the park bench"
        );
        assert!(class_label_text("riding").is_err());
        assert!(class_label_text("+horse").is_err());
    }

    #[test]
    fn duplicate_persons_merge() {
        let p = bb(0.0, 0.0, 10.0, 20.0);
        let o1 = bb(20.0, 0.0, 30.0, 10.0);
        let o2 = bb(40.0, 0.0, 50.0, 10.0);
        let anns = [ann(p, o1, "riding+horse"), ann(p, o2, "feeding+horse")];
        let targets = hoi_build_targets(&anns, &[o1, o2]).unwrap();
        assert_eq!(targets.persons.len(), 1);
        assert_eq!(targets.annotation_map, vec![(0, 0), (0, 1)]);
        assert_eq!(targets.object_labels[0], vec!["riding the horse"]);
        assert_eq!(targets.object_labels[1], vec!["feeding the horse"]);
    }

    #[test]
    fn pruned_person_remaps_to_highest_overlap() {
        let p1 = bb(0.0, 0.0, 10.0, 10.0);
        // overlaps p1 at IoU > 0.7 so NMS prunes it
        let p2 = bb(0.0, 0.0, 10.0, 11.0);
        let far = bb(100.0, 0.0, 110.0, 10.0);
        let o = bb(20.0, 0.0, 30.0, 10.0);
        let anns = [
            ann(p1, o, "riding+horse"),
            ann(far, o, "walking+dog"),
            ann(p2, o, "feeding+horse"),
        ];
        let targets = hoi_build_targets(&anns, &[o]).unwrap();
        assert_eq!(targets.persons, vec![p1, far]);
        // p2's annotation lands on p1, its best-overlap survivor
        assert_eq!(targets.annotation_map[2].0, 0);
        assert_eq!(
            targets.object_labels[0],
            vec!["riding the horse", "walking the dog", "feeding the horse"]
        );
    }

    #[test]
    fn low_overlap_object_appended() {
        let p = bb(0.0, 0.0, 10.0, 10.0);
        let gt_obj = bb(20.0, 0.0, 30.0, 10.0);
        // detector box overlapping the GT object at IoU 1/3 < 0.5
        let det = bb(25.0, 0.0, 35.0, 10.0);
        let targets = hoi_build_targets(&[ann(p, gt_obj, "riding+horse")], &[det]).unwrap();
        assert_eq!(targets.objects, vec![det, gt_obj]);
        assert_eq!(targets.annotation_map, vec![(0, 1)]);
        assert_eq!(targets.object_labels[0], vec![NO_INTERACTION]);
        assert_eq!(targets.object_labels[1], vec!["riding the horse"]);
    }

    #[test]
    fn aligned_object_uses_detector_box() {
        let p = bb(0.0, 0.0, 10.0, 10.0);
        let gt_obj = bb(20.0, 0.0, 30.0, 10.0);
        let det = bb(21.0, 0.0, 31.0, 10.0); // IoU = 9/11 >= 0.5
        let targets = hoi_build_targets(&[ann(p, gt_obj, "riding+horse")], &[det]).unwrap();
        assert_eq!(targets.objects, vec![det]);
        assert_eq!(targets.annotation_map, vec![(0, 0)]);
    }

    fn cand(
        person_score: f64,
        logprobs: &[(&str, f64)],
        no_interaction: f64,
    ) -> HOICandidate {
        HOICandidate {
            person: bb(0.0, 0.0, 10.0, 10.0),
            person_score,
            object: bb(20.0, 0.0, 30.0, 10.0),
            interaction_logprobs: logprobs
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            no_interaction_logprob: no_interaction,
        }
    }

    #[test]
    fn low_score_person_dropped() {
        let c = cand(0.4, &[("riding+horse", -0.1)], -5.0);
        assert!(hoi_infer(&[c], 0.5, None).is_empty());
    }

    #[test]
    fn no_interaction_argmax_prunes() {
        let c = cand(0.9, &[("riding+horse", -2.0)], -0.5);
        assert!(hoi_infer(&[c], 0.5, None).is_empty());
        // explicit threshold overrides the argmax rule
        let kept = hoi_infer(&[cand(0.9, &[("riding+horse", -2.0)], -0.5)], 0.5, Some(-0.1));
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn triples_ordered_by_logprob() {
        let c = cand(
            0.9,
            &[("feeding+horse", -1.5), ("riding+horse", -0.2)],
            -3.0,
        );
        let triples = hoi_infer(&[c], 0.5, None);
        assert_eq!(triples.len(), 2);
        assert_eq!(triples[0].class, "riding+horse");
        assert_eq!(triples[1].class, "feeding+horse");
        assert!(triples[0].score > triples[1].score);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0f64..50.0, 0.0f64..50.0, 1.0f64..20.0, 1.0f64..20.0)
            .prop_map(|(x, y, w, h)| bb(x, y, x + w, y + h))
    }

    proptest! {
        /// Every annotation maps to exactly one surviving person and one
        /// (possibly appended) object box.
        #[test]
        fn every_annotation_mapped(
            anns in proptest::collection::vec((arb_box(), arb_box()), 1..8),
            dets in proptest::collection::vec(arb_box(), 0..5),
        ) {
            let anns: Vec<HOIAnnotation> = anns
                .into_iter()
                .map(|(p, o)| ann(p, o, "riding+horse"))
                .collect();
            let targets = hoi_build_targets(&anns, &dets).unwrap();
            prop_assert_eq!(targets.annotation_map.len(), anns.len());
            for &(pi, oi) in &targets.annotation_map {
                prop_assert!(pi < targets.persons.len());
                prop_assert!(oi < targets.objects.len());
                prop_assert!(targets.object_labels[oi].contains(&"riding the horse".to_string()));
            }
            prop_assert_eq!(targets.objects.len(), targets.object_labels.len());
        }
    }
}
