//! Annotator-weighted VQA accuracy and top-k accuracy.

use crate::scoring::answers::CandidateAnswer;
use crate::text::normalize_answer;

/// Annotator-weighted accuracy: min(matching references / 3, 1), with
/// both sides normalized. Ten references give the canonical
/// {0, 1/3, 2/3, 1} range; with more than ten only the first ten count,
/// and with fewer the same formula runs on what exists.
pub fn vqa_accuracy(pred_answer: &str, reference_answers: &[String]) -> f64 {
    let pred = normalize_answer(pred_answer);
    let matches = reference_answers
        .iter()
        .take(10)
        .filter(|r| normalize_answer(r) == pred)
        .count();
    (matches as f64 / 3.0).min(1.0)
}

/// 1 if the normalized gold answer appears among the k highest-logprob
/// candidates (ties broken by input order), else 0.
pub fn topk_accuracy(candidates: &[CandidateAnswer], gold: &str, k: usize) -> u8 {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .logprob
            .total_cmp(&candidates[a].logprob)
            .then(a.cmp(&b))
    });
    let gold = normalize_answer(gold);
    let hit = order
        .iter()
        .take(k)
        .any(|&i| normalize_answer(&candidates[i].text) == gold);
    u8::from(hit)
}
