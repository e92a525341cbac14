//! Log-probability answer ranking, seen-class re-calibration, and
//! language-based localization relevance.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::scoring::geometry::BoundingBox;
use crate::text::normalize_answer;

/// One candidate answer with the natural-log probability of generating it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAnswer {
    pub text: String,
    pub logprob: f64,
}

/// Argmax by log-probability; ties broken by input order. Returns the
/// winner and the full list sorted descending (stable).
pub fn rank_answers(
    candidates: &[CandidateAnswer],
) -> Result<(CandidateAnswer, Vec<CandidateAnswer>), PipelineError> {
    if candidates.is_empty() {
        return Err(PipelineError::invalid("no candidate answers"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
    Ok((sorted[0].clone(), sorted))
}

/// Down-weighting of training-seen classes: a nonnegative penalty
/// subtracted from their log-probabilities before ranking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecalibrationConfig {
    pub seen_classes: HashSet<String>,
    pub delta: f64,
}

impl RecalibrationConfig {
    /// Seen-class membership is checked on normalized answer text.
    pub fn new(seen_classes: impl IntoIterator<Item = String>, delta: f64) -> Result<Self, PipelineError> {
        if delta < 0.0 || !delta.is_finite() {
            return Err(PipelineError::invalid(format!("delta must be >= 0, got {delta}")));
        }
        Ok(RecalibrationConfig {
            seen_classes: seen_classes
                .into_iter()
                .map(|s| normalize_answer(&s))
                .collect(),
            delta,
        })
    }

    pub fn is_seen(&self, text: &str) -> bool {
        self.seen_classes.contains(&normalize_answer(text))
    }
}

/// Subtract delta from the log-probability of every seen-class candidate;
/// others pass through unchanged.
pub fn recalibrate(candidates: &[CandidateAnswer], config: &RecalibrationConfig) -> Vec<CandidateAnswer> {
    candidates
        .iter()
        .map(|c| CandidateAnswer {
            text: c.text.clone(),
            logprob: if config.is_seen(&c.text) {
                c.logprob - config.delta
            } else {
                c.logprob
            },
        })
        .collect()
}

/// A validation example: candidates plus the gold answer.
#[derive(Debug, Clone)]
pub struct ValExample {
    pub candidates: Vec<CandidateAnswer>,
    pub gold: String,
}

/// The default calibration grid: 0.0 to 10.0 in steps of 0.25.
pub fn default_delta_grid() -> Vec<f64> {
    (0..=40).map(|i| i as f64 * 0.25).collect()
}

/// Grid-search the delta maximizing top-1 accuracy after re-calibration;
/// ties go to the smallest delta.
pub fn fit_delta(
    val_examples: &[ValExample],
    seen_classes: &HashSet<String>,
    grid: &[f64],
) -> Result<f64, PipelineError> {
    if val_examples.is_empty() {
        return Err(PipelineError::invalid("empty validation set"));
    }
    if grid.is_empty() {
        return Err(PipelineError::invalid("empty delta grid"));
    }
    let mut best: Option<(f64, usize)> = None; // (delta, correct)
    for &delta in grid {
        let config = RecalibrationConfig::new(seen_classes.iter().cloned(), delta)?;
        let mut correct = 0usize;
        for ex in val_examples {
            let adjusted = recalibrate(&ex.candidates, &config);
            let (winner, _) = rank_answers(&adjusted)?;
            if normalize_answer(&winner.text) == normalize_answer(&ex.gold) {
                correct += 1;
            }
        }
        let better = match best {
            None => true,
            Some((bd, bc)) => correct > bc || (correct == bc && delta < bd),
        };
        if better {
            best = Some((delta, correct));
        }
    }
    Ok(best.expect("nonempty grid").0)
}

/// Per-region log-probabilities of the target label text versus "other".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionScore {
    #[serde(rename = "box")]
    pub box_: BoundingBox,
    pub logp_label: f64,
    pub logp_other: f64,
}

/// Linear relevance over the two region log-probabilities. The defaults
/// (w1=1, w2=-1, b=0) score a region by its label-vs-other log-odds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LblParams {
    pub w1: f64,
    pub w2: f64,
    pub b: f64,
}

impl Default for LblParams {
    fn default() -> Self {
        LblParams {
            w1: 1.0,
            w2: -1.0,
            b: 0.0,
        }
    }
}

pub fn lbl_relevance(region: &RegionScore, params: &LblParams) -> f64 {
    params.w1 * region.logp_label + params.w2 * region.logp_other + params.b
}

/// Least-squares fit of the 2-feature linear relevance classifier on
/// labeled (region, is-target) pairs.
pub fn fit_lbl_params(examples: &[(RegionScore, bool)]) -> Result<LblParams, PipelineError> {
    if examples.is_empty() {
        return Err(PipelineError::invalid("no labeled regions"));
    }
    // normal equations for [w1 w2 b] against targets {0,1}
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for (r, is_target) in examples {
        let x = [r.logp_label, r.logp_other, 1.0];
        let y = if *is_target { 1.0 } else { 0.0 };
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += x[i] * x[j];
            }
            atb[i] += x[i] * y;
        }
    }
    solve3(ata, atb)
        .map(|w| LblParams {
            w1: w[0],
            w2: w[1],
            b: w[2],
        })
        .ok_or_else(|| PipelineError::invalid("singular system; need more varied regions"))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (cell, p) in a[row].iter_mut().zip(pivot_row) {
                *cell -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    Some([b[0] / a[0][0], b[1] / a[1][1], b[2] / a[2][2]])
}

/// A relevance-scored detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub box_: BoundingBox,
    pub score: f64,
}

/// Score all regions with the linear relevance and rank descending;
/// regions below `score_threshold` (if given) are dropped.
pub fn localize(
    regions: &[RegionScore],
    params: &LblParams,
    score_threshold: Option<f64>,
) -> Vec<Detection> {
    let mut dets: Vec<Detection> = regions
        .iter()
        .map(|r| Detection {
            box_: r.box_,
            score: lbl_relevance(r, params),
        })
        .filter(|d| score_threshold.is_none_or(|t| d.score >= t))
        .collect();
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
    dets
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cand(text: &str, logprob: f64) -> CandidateAnswer {
        CandidateAnswer {
            text: text.to_string(),
            logprob,
        }
    }

    fn region(lp_label: f64, lp_other: f64) -> RegionScore {
        RegionScore {
            box_: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            logp_label: lp_label,
            logp_other: lp_other,
        }
    }

    #[test]
    fn rank_picks_argmax() {
        let (best, sorted) = rank_answers(&[cand("dog", -0.1), cand("cat", -2.0)]).unwrap();
        assert_eq!(best.text, "dog");
        assert_eq!(sorted[1].text, "cat");

        let (best, _) = rank_answers(&[cand("only", -1.0)]).unwrap();
        assert_eq!(best.text, "only");
        assert!(rank_answers(&[]).is_err());
    }

    #[test]
    fn rank_invariant_under_permutation() {
        let a = [cand("x", -0.5), cand("y", -0.2), cand("z", -0.9)];
        let b = [a[2].clone(), a[0].clone(), a[1].clone()];
        assert_eq!(rank_answers(&a).unwrap().0, rank_answers(&b).unwrap().0);
    }

    #[test]
    fn recalibrate_zero_delta_is_identity() {
        let cands = [cand("cat", -0.5), cand("jaguar", -1.0)];
        let config =
            RecalibrationConfig::new(["cat".to_string()], 0.0).unwrap();
        assert_eq!(recalibrate(&cands, &config), cands.to_vec());
    }

    #[test]
    fn recalibrate_flips_seen_winner() {
        // seen "cat" at -0.5 vs unseen "jaguar" at -1.0: delta 1 flips it
        let cands = [cand("cat", -0.5), cand("jaguar", -1.0)];
        let config = RecalibrationConfig::new(["cat".to_string()], 1.0).unwrap();
        let adjusted = recalibrate(&cands, &config);
        assert!((adjusted[0].logprob - -1.5).abs() < 1e-12);
        assert!((adjusted[1].logprob - -1.0).abs() < 1e-12);
        let (winner, _) = rank_answers(&adjusted).unwrap();
        assert_eq!(winner.text, "jaguar");
    }

    #[test]
    fn recalibrate_ignores_unseen() {
        let cands = [cand("jaguar", -1.0)];
        let config = RecalibrationConfig::new(["cat".to_string()], 5.0).unwrap();
        assert_eq!(recalibrate(&cands, &config), cands.to_vec());
    }

    #[test]
    fn negative_delta_rejected() {
        assert!(RecalibrationConfig::new(std::iter::empty(), -0.1).is_err());
    }

    #[test]
    fn fit_delta_smallest_winning() {
        // gold answers unseen, each losing to a seen class by < 1.0
        let seen: HashSet<String> = ["cat".to_string()].into_iter().collect();
        let examples: Vec<ValExample> = (0..5)
            .map(|i| {
                let margin = 0.1 + 0.15 * i as f64; // max margin 0.7
                ValExample {
                    candidates: vec![cand("cat", -0.5), cand("jaguar", -0.5 - margin)],
                    gold: "jaguar".into(),
                }
            })
            .collect();
        let grid = default_delta_grid();
        let best = fit_delta(&examples, &seen, &grid).unwrap();
        // smallest grid delta strictly above the max margin of 0.7
        assert_eq!(best, 0.75);
    }

    #[test]
    fn fit_delta_trivial_and_error_cases() {
        let seen = HashSet::new();
        let ex = vec![ValExample {
            candidates: vec![cand("a", -0.1)],
            gold: "a".into(),
        }];
        assert_eq!(fit_delta(&ex, &seen, &[0.0]).unwrap(), 0.0);
        assert!(fit_delta(&[], &seen, &[0.0]).is_err());
        assert!(fit_delta(&ex, &seen, &[]).is_err());
    }

    #[test]
    fn lbl_relevance_defaults() {
        let p = LblParams::default();
        assert!((lbl_relevance(&region(-0.1, -3.0), &p) - 2.9).abs() < 1e-12);
        assert_eq!(lbl_relevance(&region(-1.2, -1.2), &p), 0.0);
        let constant = LblParams {
            w1: 0.0,
            w2: 0.0,
            b: 0.7,
        };
        assert_eq!(lbl_relevance(&region(-5.0, -0.1), &constant), 0.7);
    }

    #[test]
    fn localize_orders_and_thresholds() {
        let p = LblParams::default();
        assert!(localize(&[], &p, None).is_empty());
        let regions = [region(-0.1, -3.0), region(-2.0, -2.0), region(-0.5, -1.0)];
        let dets = localize(&regions, &p, None);
        let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
        let top = localize(&regions, &p, Some(2.9));
        assert_eq!(top.len(), 1);
    }

    #[test]
    fn fit_lbl_recovers_linear_weights() {
        // targets exactly linear in the two features
        let examples: Vec<(RegionScore, bool)> = vec![
            (region(-0.1, -4.0), true),
            (region(-0.2, -3.5), true),
            (region(-3.0, -0.2), false),
            (region(-2.5, -0.1), false),
            (region(-0.3, -2.0), true),
            (region(-2.0, -0.5), false),
        ];
        let p = fit_lbl_params(&examples).unwrap();
        for (r, is_target) in &examples {
            let s = lbl_relevance(r, &p);
            assert_eq!(s > 0.5, *is_target, "score {s}");
        }
    }

    proptest! {
        /// Uniform shift preserves relative order among seen-only and
        /// unseen-only candidates.
        #[test]
        fn recalibrate_preserves_within_group_order(
            logprobs in proptest::collection::vec(-10.0f64..0.0, 2..10),
            delta in 0.0f64..5.0,
        ) {
            let cands: Vec<CandidateAnswer> = logprobs
                .iter()
                .enumerate()
                .map(|(i, &lp)| cand(if i % 2 == 0 { "seen" } else { "unseen" }, lp))
                .collect();
            let config = RecalibrationConfig::new(["seen".to_string()], delta).unwrap();
            let adjusted = recalibrate(&cands, &config);
            for group in ["seen", "unseen"] {
                let before: Vec<f64> = cands.iter().filter(|c| c.text == group).map(|c| c.logprob).collect();
                let after: Vec<f64> = adjusted.iter().filter(|c| c.text == group).map(|c| c.logprob).collect();
                for i in 0..before.len() {
                    for j in 0..before.len() {
                        prop_assert_eq!(before[i] < before[j], after[i] < after[j]);
                    }
                }
            }
        }

        /// fit_delta over {0} composed with recalibrate equals plain ranking.
        #[test]
        fn zero_grid_matches_plain_ranking(
            logprobs in proptest::collection::vec(-10.0f64..0.0, 1..6),
        ) {
            let cands: Vec<CandidateAnswer> = logprobs
                .iter()
                .enumerate()
                .map(|(i, &lp)| cand(&format!("c{i}"), lp))
                .collect();
            let seen: HashSet<String> = ["c0".to_string()].into_iter().collect();
            let ex = vec![ValExample { candidates: cands.clone(), gold: "c0".into() }];
            let delta = fit_delta(&ex, &seen, &[0.0]).unwrap();
            let config = RecalibrationConfig::new(seen.iter().cloned(), delta).unwrap();
            let (a, _) = rank_answers(&recalibrate(&cands, &config)).unwrap();
            let (b, _) = rank_answers(&cands).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
