//! Average precision for detection-style tasks: single-sample AP,
//! per-sample localization mAP, and per-class HOI AP.

use std::collections::BTreeMap;

use crate::scoring::geometry::{iou, BoundingBox};
use crate::scoring::hoi::HOITriple;

/// Greedy score-order matching: a detection is a true positive when its
/// IoU with some still-unmatched ground-truth box reaches the threshold
/// (the highest-IoU one is consumed). AP is the area under the
/// precision-recall curve with all-point interpolation.
pub fn detection_ap(
    detections: &[(BoundingBox, f64)],
    gts: &[BoundingBox],
    iou_threshold: f64,
) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].1.total_cmp(&detections[a].1).then(a.cmp(&b)));

    let mut matched = vec![false; gts.len()];
    let tp_flags: Vec<bool> = order
        .iter()
        .map(|&i| {
            let best = gts
                .iter()
                .enumerate()
                .filter(|(gi, g)| !matched[*gi] && iou(&detections[i].0, g) >= iou_threshold)
                .max_by(|(_, a), (_, b)| {
                    iou(&detections[i].0, a).total_cmp(&iou(&detections[i].0, b))
                })
                .map(|(gi, _)| gi);
            match best {
                Some(gi) => {
                    matched[gi] = true;
                    true
                }
                None => false,
            }
        })
        .collect();

    ap_from_tp_flags(&tp_flags, gts.len())
}

/// Area under the PR curve from an ordered TP/FP sequence, with the
/// precision envelope (all-point interpolation).
fn ap_from_tp_flags(tp_flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut points = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (k, &is_tp) in tp_flags.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
    }
    // envelope: precision at recall r is the max precision at recall >= r
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..points.len() {
        let (r, _) = points[i];
        if r > prev_recall {
            let envelope = points[i..]
                .iter()
                .map(|&(_, p)| p)
                .fold(0.0f64, f64::max);
            ap += (r - prev_recall) * envelope;
            prev_recall = r;
        }
    }
    ap
}

/// One localization sample: ranked detections plus ground-truth boxes
/// for a single (image, query) pair.
#[derive(Debug, Clone)]
pub struct LocalizationSample {
    pub detections: Vec<(BoundingBox, f64)>,
    pub gts: Vec<BoundingBox>,
}

/// Mean over per-sample APs.
pub fn localization_map(samples: &[LocalizationSample], iou_threshold: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples
        .iter()
        .map(|s| detection_ap(&s.detections, &s.gts, iou_threshold))
        .sum::<f64>()
        / samples.len() as f64
}

/// A ground-truth (person, object, class) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct GtTriple {
    pub person: BoundingBox,
    pub object: BoundingBox,
    pub class: String,
}

/// Per-class AP over scored triples. A predicted triple is a true
/// positive when both its person and object boxes overlap an unmatched
/// same-class ground-truth pair at the IoU threshold; among valid pairs
/// the one with the highest min(person IoU, object IoU) is consumed.
/// The mean runs over classes with at least one ground-truth triple.
pub fn hoi_ap(
    triples: &[HOITriple],
    gt_triples: &[GtTriple],
    iou_threshold: f64,
) -> (BTreeMap<String, f64>, f64) {
    let mut per_class = BTreeMap::new();
    let classes: std::collections::BTreeSet<&String> =
        gt_triples.iter().map(|g| &g.class).collect();
    for class in classes {
        let gts: Vec<&GtTriple> = gt_triples.iter().filter(|g| &g.class == class).collect();
        let mut preds: Vec<&HOITriple> =
            triples.iter().filter(|t| &t.class == class).collect();
        preds.sort_by(|a, b| b.score.total_cmp(&a.score));

        let mut matched = vec![false; gts.len()];
        let tp_flags: Vec<bool> = preds
            .iter()
            .map(|t| {
                let best = gts
                    .iter()
                    .enumerate()
                    .filter_map(|(gi, g)| {
                        if matched[gi] {
                            return None;
                        }
                        let pi = iou(&t.person, &g.person);
                        let oi = iou(&t.object, &g.object);
                        (pi >= iou_threshold && oi >= iou_threshold).then_some((gi, pi.min(oi)))
                    })
                    .max_by(|(_, a), (_, b)| a.total_cmp(b));
                match best {
                    Some((gi, _)) => {
                        matched[gi] = true;
                        true
                    }
                    None => false,
                }
            })
            .collect();
        per_class.insert(class.clone(), ap_from_tp_flags(&tp_flags, gts.len()));
    }
    let mean = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    (per_class, mean)
}
