//! Evaluation report shape plus the webly-supervised concept accuracy
//! (macro average over noun / verb / adjective questions).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::templates::AnswerType;

/// The common result record every evaluation emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub overall: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_category: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_answer_type: Option<BTreeMap<String, f64>>,
    pub n_examples: usize,
}

/// Macro accuracy over the three concept types. Entire-query questions
/// are excluded from the macro; types with no examples are omitted and
/// the overall averages the types present.
pub fn web10k_accuracy(results: &[(AnswerType, bool)]) -> EvalReport {
    let mut totals: BTreeMap<&'static str, (usize, usize)> = BTreeMap::new();
    for (answer_type, correct) in results {
        if *answer_type == AnswerType::EntireQuery {
            continue;
        }
        let e = totals.entry(answer_type.as_str()).or_insert((0, 0));
        e.1 += 1;
        if *correct {
            e.0 += 1;
        }
    }
    let per_type: BTreeMap<String, f64> = totals
        .iter()
        .map(|(k, &(c, n))| (k.to_string(), c as f64 / n as f64))
        .collect();
    let overall = if per_type.is_empty() {
        0.0
    } else {
        per_type.values().sum::<f64>() / per_type.len() as f64
    };
    EvalReport {
        task: "web10k".to_string(),
        overall,
        per_category: BTreeMap::new(),
        per_answer_type: Some(per_type),
        n_examples: results.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn results(spec: &[(AnswerType, usize, usize)]) -> Vec<(AnswerType, bool)> {
        let mut out = Vec::new();
        for &(t, correct, total) in spec {
            for i in 0..total {
                out.push((t, i < correct));
            }
        }
        out
    }

    #[test]
    fn macro_is_unweighted_mean() {
        // noun 1.0 on 2 examples, verb 0.0 on 8, adjective 0.5 on 2:
        // macro ignores the counts
        let r = web10k_accuracy(&results(&[
            (AnswerType::Noun, 2, 2),
            (AnswerType::Verb, 0, 8),
            (AnswerType::Adjective, 1, 2),
        ]));
        assert!((r.overall - 0.5).abs() < 1e-12);
        let per = r.per_answer_type.unwrap();
        assert_eq!(per["noun"], 1.0);
        assert_eq!(per["verb"], 0.0);
        assert_eq!(per["adjective"], 0.5);
        assert_eq!(r.n_examples, 12);
    }

    #[test]
    fn all_correct() {
        let r = web10k_accuracy(&results(&[
            (AnswerType::Noun, 3, 3),
            (AnswerType::Verb, 3, 3),
            (AnswerType::Adjective, 3, 3),
        ]));
        assert_eq!(r.overall, 1.0);
    }

    #[test]
    fn entire_query_excluded_from_macro() {
        let mut input = results(&[(AnswerType::Noun, 1, 1)]);
        input.push((AnswerType::EntireQuery, false));
        let r = web10k_accuracy(&input);
        assert_eq!(r.overall, 1.0);
        assert!(!r.per_answer_type.unwrap().contains_key("entire_query"));
        assert_eq!(r.n_examples, 2);
    }

    #[test]
    fn published_row_shape() {
        // per-type 0.417 / 0.600 / 0.843 must average to 0.620
        let r = web10k_accuracy(&results(&[
            (AnswerType::Noun, 417, 1000),
            (AnswerType::Verb, 600, 1000),
            (AnswerType::Adjective, 843, 1000),
        ]));
        assert!((r.overall - 0.62).abs() < 1e-9);
    }
}
