//! Bounding-box geometry: IoU and greedy non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;

/// An axis-aligned box in absolute pixels, serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = String;
    fn try_from(v: [f64; 4]) -> Result<Self, String> {
        BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> [f64; 4] {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, PipelineError> {
        if !(x2 > x1 && y2 > y1) || ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(PipelineError::invalid(format!(
                "degenerate box [{x1}, {y1}, {x2}, {y2}]"
            )));
        }
        Ok(BoundingBox { x1, y1, x2, y2 })
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Greedy NMS: visit boxes in descending score order (ties by input
/// index), keep a box unless its IoU with an already-kept box exceeds
/// `threshold`. Returns kept indices in visit order.
pub fn nms(boxes: &[BoundingBox], scores: &[f64], threshold: f64) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len(), "boxes and scores must pair up");
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        if kept.iter().all(|&k| iou(&boxes[i], &boxes[k]) <= threshold) {
            kept.push(i);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn iou_basics() {
        let a = bb(0.0, 0.0, 1.0, 1.0);
        assert_eq!(iou(&a, &a), 1.0);
        let far = bb(5.0, 5.0, 6.0, 6.0);
        assert_eq!(iou(&a, &far), 0.0);
        // unit squares offset by 0.5 in x: I = 0.5, U = 1.5
        let shifted = bb(0.5, 0.0, 1.5, 1.0);
        assert!((iou(&a, &shifted) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(BoundingBox::new(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 2.0, 1.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn nms_identical_and_disjoint() {
        let a = bb(0.0, 0.0, 1.0, 1.0);
        assert_eq!(nms(&[a, a], &[0.2, 0.9], 0.5), vec![1]);
        let b = bb(10.0, 0.0, 11.0, 1.0);
        assert_eq!(nms(&[a, b], &[0.9, 0.2], 0.5), vec![0, 1]);
    }

    #[test]
    fn nms_ties_broken_by_input_index() {
        let a = bb(0.0, 0.0, 1.0, 1.0);
        assert_eq!(nms(&[a, a], &[0.5, 0.5], 0.5), vec![0]);
    }

    /// Independent reference: repeatedly pick the best unsuppressed box and
    /// mark every over-threshold overlapper suppressed.
    fn nms_reference(boxes: &[BoundingBox], scores: &[f64], threshold: f64) -> Vec<usize> {
        let mut alive: Vec<bool> = vec![true; boxes.len()];
        let mut kept = Vec::new();
        loop {
            let mut best: Option<usize> = None;
            for i in 0..boxes.len() {
                if alive[i]
                    && best.is_none_or(|b| scores[i] > scores[b])
                {
                    best = Some(i);
                }
            }
            let Some(b) = best else { break };
            kept.push(b);
            alive[b] = false;
            for i in 0..boxes.len() {
                if alive[i] && iou(&boxes[i], &boxes[b]) > threshold {
                    alive[i] = false;
                }
            }
        }
        kept
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0f64..10.0, 0.0f64..10.0, 0.1f64..5.0, 0.1f64..5.0)
            .prop_map(|(x, y, w, h)| bb(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_symmetric(a in arb_box(), b in arb_box()) {
            prop_assert!((iou(&a, &b) - iou(&b, &a)).abs() < 1e-12);
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }

        #[test]
        fn nms_matches_reference(
            boxes in proptest::collection::vec(arb_box(), 0..8),
            seed in 0u64..1000,
        ) {
            // distinct scores so both algorithms share a visit order
            let scores: Vec<f64> = (0..boxes.len())
                .map(|i| ((seed.wrapping_mul(31).wrapping_add(i as u64) % 997) as f64)
                    + i as f64 * 1e-6)
                .collect();
            prop_assert_eq!(
                nms(&boxes, &scores, 0.5),
                nms_reference(&boxes, &scores, 0.5)
            );
        }
    }
}
