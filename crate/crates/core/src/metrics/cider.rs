//! CIDEr-D captioning metric: n-gram TF-IDF cosine similarity (n = 1..4)
//! with clipped candidate counts and a Gaussian length penalty.

use std::collections::{BTreeMap, HashMap};

use crate::error::PipelineError;

const MAX_N: usize = 4;
const SIGMA: f64 = 6.0;

/// Caption tokenization: lowercase, punctuation to spaces, split on
/// whitespace. Articles are kept — they are real n-gram content here.
pub fn caption_tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(|w| w.to_string())
        .collect()
}

type NGramCounts = Vec<HashMap<Vec<String>, usize>>; // indexed by n-1

fn ngram_counts(tokens: &[String]) -> NGramCounts {
    let mut counts: NGramCounts = vec![HashMap::new(); MAX_N];
    for n in 1..=MAX_N {
        if tokens.len() < n {
            continue;
        }
        for window in tokens.windows(n) {
            *counts[n - 1].entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Per-example CIDEr-D scores plus the corpus mean (their average).
#[derive(Debug, Clone, PartialEq)]
pub struct CiderResult {
    pub corpus_score: f64,
    pub per_example: BTreeMap<String, f64>,
}

/// Document frequencies are computed over the reference sets of all
/// provided examples: an n-gram's df is the number of examples whose
/// references contain it, and idf = ln(N / max(1, df)) for N examples.
pub fn cider_d(
    predictions: &BTreeMap<String, String>,
    references: &BTreeMap<String, Vec<String>>,
) -> Result<CiderResult, PipelineError> {
    if predictions.is_empty() {
        return Err(PipelineError::invalid("no predictions to score"));
    }
    for id in predictions.keys() {
        if references.get(id).is_none_or(|r| r.is_empty()) {
            return Err(PipelineError::invalid(format!(
                "prediction {id:?} has no references"
            )));
        }
    }

    // df over reference sets (count each n-gram once per example)
    let mut df: Vec<HashMap<Vec<String>, usize>> = vec![HashMap::new(); MAX_N];
    let n_docs = predictions.len() as f64;
    for id in predictions.keys() {
        let mut seen: Vec<HashMap<Vec<String>, bool>> = vec![HashMap::new(); MAX_N];
        for r in &references[id] {
            let counts = ngram_counts(&caption_tokens(r));
            for n in 0..MAX_N {
                for gram in counts[n].keys() {
                    seen[n].entry(gram.clone()).or_insert(true);
                }
            }
        }
        for n in 0..MAX_N {
            for gram in seen[n].keys() {
                *df[n].entry(gram.clone()).or_insert(0) += 1;
            }
        }
    }
    let idf = |n: usize, gram: &Vec<String>| -> f64 {
        let d = df[n].get(gram).copied().unwrap_or(0) as f64;
        (n_docs / d.max(1.0)).ln()
    };

    let mut per_example = BTreeMap::new();
    for (id, caption) in predictions {
        let hyp_tokens = caption_tokens(caption);
        let hyp_counts = ngram_counts(&hyp_tokens);
        let hyp_norm: Vec<f64> = (0..MAX_N)
            .map(|n| {
                hyp_counts[n]
                    .iter()
                    .map(|(g, &c)| (c as f64 * idf(n, g)).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();

        let refs = &references[id];
        let mut total = 0.0;
        for r in refs {
            let ref_tokens = caption_tokens(r);
            let ref_counts = ngram_counts(&ref_tokens);
            let delta = hyp_tokens.len() as f64 - ref_tokens.len() as f64;
            let penalty = (-delta * delta / (2.0 * SIGMA * SIGMA)).exp();
            for n in 0..MAX_N {
                let ref_norm = ref_counts[n]
                    .iter()
                    .map(|(g, &c)| (c as f64 * idf(n, g)).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if hyp_norm[n] == 0.0 || ref_norm == 0.0 {
                    continue;
                }
                // clipping lives only inside the min(): hyp counts are
                // capped by the reference count per n-gram
                let dot: f64 = hyp_counts[n]
                    .iter()
                    .filter_map(|(g, &hc)| {
                        ref_counts[n].get(g).map(|&rc| {
                            let w = idf(n, g);
                            (hc.min(rc) as f64 * w) * (rc as f64 * w)
                        })
                    })
                    .sum();
                total += penalty * dot / (hyp_norm[n] * ref_norm);
            }
        }
        let score = 10.0 * total / (MAX_N as f64 * refs.len() as f64);
        per_example.insert(id.clone(), score);
    }

    let corpus_score = per_example.values().sum::<f64>() / per_example.len() as f64;
    Ok(CiderResult {
        corpus_score,
        per_example,
    })
}
