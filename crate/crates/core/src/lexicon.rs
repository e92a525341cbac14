//! Concept vocabulary selection: nouns from a concreteness lexicon,
//! multi-word nouns from caption-corpus frequencies, curated verb and
//! adjective lists, and feasible pair queries counted against a corpus.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pos {
    Noun,
    Verb,
    Adjective,
}

/// A vocabulary entry with its selection metadata.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Concept {
    pub surface: String,
    pub pos: Pos,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concreteness: Option<ConcretenessScore>,
    pub multiword: bool,
    /// One of 16 adjective types; present iff pos is Adjective.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adj_type: Option<String>,
}

/// Concreteness in [0,5], wrapped so Concept can derive Ord/Hash.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConcretenessScore(pub f64);

impl Eq for ConcretenessScore {}
impl PartialOrd for ConcretenessScore {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ConcretenessScore {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
impl std::hash::Hash for ConcretenessScore {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl Concept {
    pub fn noun(surface: &str, concreteness: Option<f64>) -> Self {
        Concept {
            surface: surface.to_lowercase(),
            pos: Pos::Noun,
            concreteness: concreteness.map(ConcretenessScore),
            multiword: surface.contains(' '),
            adj_type: None,
        }
    }

    pub fn verb(surface: &str) -> Self {
        Concept {
            surface: surface.to_lowercase(),
            pos: Pos::Verb,
            concreteness: None,
            multiword: false,
            adj_type: None,
        }
    }

    pub fn adjective(surface: &str, adj_type: &str) -> Self {
        Concept {
            surface: surface.to_lowercase(),
            pos: Pos::Adjective,
            concreteness: None,
            multiword: false,
            adj_type: Some(adj_type.to_string()),
        }
    }
}

/// The selected vocabulary, disjoint by (surface, pos).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConceptLexicon {
    pub nouns: BTreeSet<Concept>,
    pub verbs: BTreeSet<Concept>,
    pub adjectives: BTreeSet<Concept>,
}

impl ConceptLexicon {
    /// Remove every concept whose surface (or any of its words) appears in
    /// the blacklist.
    pub fn apply_blacklist(&mut self, blacklist: &HashSet<String>) {
        let blocked = |c: &Concept| {
            blacklist.contains(&c.surface)
                || c.surface.split_whitespace().any(|w| blacklist.contains(w))
        };
        self.nouns.retain(|c| !blocked(c));
        self.verbs.retain(|c| !blocked(c));
        self.adjectives.retain(|c| !blocked(c));
    }
}

/// A search query: a bare noun or a noun paired with a modifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairQuery {
    pub noun: Concept,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modifier: Option<Concept>,
    pub query_text: String,
    pub corpus_count: u64,
}

impl PairQuery {
    /// Stable identifier used for seeding and manifests.
    pub fn id(&self) -> String {
        self.query_text.replace(' ', "_")
    }
}

/// A concreteness-lexicon row prior to threshold filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcretenessCandidate {
    pub word: String,
    pub score: f64,
    /// True for a verb or adjective with an alternate word sense as a noun.
    pub alt_sense: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseIssue {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ConcretenessLoad {
    pub candidates: Vec<ConcretenessCandidate>,
    pub issues: Vec<ParseIssue>,
}

/// Load a concreteness TSV: `word<TAB>score<TAB>flags` where flags are
/// `N` (plain noun) or `A` (alt-sense). Malformed rows are reported with
/// their line numbers, never silently dropped.
pub fn load_concreteness(path: &Path) -> Result<ConcretenessLoad, PipelineError> {
    let content = fs::read_to_string(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut out = ConcretenessLoad::default();
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            out.issues.push(ParseIssue {
                line: lineno,
                message: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
            continue;
        }
        let score: f64 = match fields[1].trim().parse() {
            Ok(s) => s,
            Err(_) => {
                out.issues.push(ParseIssue {
                    line: lineno,
                    message: format!("non-numeric score {:?}", fields[1]),
                });
                continue;
            }
        };
        if !(0.0..=5.0).contains(&score) {
            out.issues.push(ParseIssue {
                line: lineno,
                message: format!("score {score} outside [0,5]"),
            });
            continue;
        }
        let alt_sense = match fields[2].trim() {
            "N" => false,
            "A" => true,
            other => {
                out.issues.push(ParseIssue {
                    line: lineno,
                    message: format!("unknown flag {other:?}"),
                });
                continue;
            }
        };
        out.candidates.push(ConcretenessCandidate {
            word: fields[0].trim().to_lowercase(),
            score,
            alt_sense,
        });
    }
    Ok(out)
}

/// Keep plain nouns with score strictly above `threshold_primary` and
/// alt-sense words strictly above `threshold_alt_sense`.
pub fn select_nouns(
    candidates: &[ConcretenessCandidate],
    threshold_primary: f64,
    threshold_alt_sense: f64,
) -> BTreeSet<Concept> {
    candidates
        .iter()
        .filter(|c| {
            if c.alt_sense {
                c.score > threshold_alt_sense
            } else {
                c.score > threshold_primary
            }
        })
        .map(|c| Concept::noun(&c.word, Some(c.score)))
        .collect()
}

/// Select multi-word nouns: the `top_k` most frequent candidate phrases
/// (frequency ties broken lexicographically), plus phrases whose second
/// word is in `concrete_words`, capped at `extra_rule_cap` additions.
pub fn select_multiword_nouns(
    candidate_bigrams: &[(String, u64)],
    concrete_words: &HashSet<String>,
    top_k: usize,
    extra_rule_cap: usize,
) -> BTreeSet<Concept> {
    let mut ranked: Vec<(String, u64)> = candidate_bigrams
        .iter()
        .map(|(p, f)| (p.to_lowercase(), *f))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.dedup_by(|a, b| a.0 == b.0);

    let mut selected: BTreeSet<String> = ranked.iter().take(top_k).map(|(p, _)| p.clone()).collect();

    // Extra rule applies only to phrases not already selected; the cap
    // counts distinct additions.
    let mut extra = 0usize;
    for (phrase, _) in &ranked {
        if extra >= extra_rule_cap {
            break;
        }
        if selected.contains(phrase) {
            continue;
        }
        if let Some(second) = phrase.split_whitespace().nth(1) {
            if concrete_words.contains(second) {
                selected.insert(phrase.clone());
                extra += 1;
            }
        }
    }

    selected.into_iter().map(|p| Concept::noun(&p, None)).collect()
}

/// Union of curated verb lists minus the exclusion set, lowercased.
pub fn select_verbs(
    source_lists: &[BTreeSet<String>],
    exclusions: &HashSet<String>,
) -> BTreeSet<Concept> {
    source_lists
        .iter()
        .flatten()
        .map(|v| v.to_lowercase())
        .filter(|v| !exclusions.contains(v))
        .map(|v| Concept::verb(&v))
        .collect()
}

/// Union of adjective lists minus exclusions; every retained adjective
/// must carry a type from `type_map`, otherwise the offenders are a
/// hard error.
pub fn select_adjectives(
    source_lists: &[BTreeSet<String>],
    exclusions: &HashSet<String>,
    type_map: &BTreeMap<String, String>,
) -> Result<BTreeSet<Concept>, PipelineError> {
    let retained: BTreeSet<String> = source_lists
        .iter()
        .flatten()
        .map(|a| a.to_lowercase())
        .filter(|a| !exclusions.contains(a))
        .collect();
    let missing: Vec<&String> = retained.iter().filter(|a| !type_map.contains_key(*a)).collect();
    if !missing.is_empty() {
        let names: Vec<String> = missing.iter().map(|s| s.to_string()).collect();
        return Err(PipelineError::invalid(format!(
            "adjectives missing from type map: {}",
            names.join(", ")
        )));
    }
    Ok(retained
        .into_iter()
        .map(|a| {
            let ty = &type_map[&a];
            Concept::adjective(&a, ty)
        })
        .collect())
}

/// A lowercased, tokenized caption corpus with phrase-occurrence counting.
pub struct CaptionCorpus {
    captions: Vec<Vec<String>>,
}

impl CaptionCorpus {
    pub fn from_lines<'a>(lines: impl Iterator<Item = &'a str>) -> Self {
        CaptionCorpus {
            captions: lines.map(tokenize).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let content = fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(Self::from_lines(content.lines()))
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }

    /// Count adjacent-token occurrences of each phrase across the corpus.
    /// Phrases are whitespace-tokenized and matched as exact consecutive
    /// token subsequences.
    pub fn count_phrases(&self, phrases: &[String]) -> HashMap<String, u64> {
        let mut counts: HashMap<String, u64> =
            phrases.iter().map(|p| (p.clone(), 0)).collect();
        let tokenized: Vec<(String, Vec<String>)> = phrases
            .iter()
            .map(|p| (p.clone(), tokenize(p)))
            .collect();
        for caption in &self.captions {
            for (phrase, toks) in &tokenized {
                if toks.is_empty() || toks.len() > caption.len() {
                    continue;
                }
                let n = caption.windows(toks.len()).filter(|w| *w == &toks[..]).count();
                if n > 0 {
                    *counts.get_mut(phrase).expect("phrase preinserted") += n as u64;
                }
            }
        }
        counts
    }
}

/// Emit one bare query per noun plus every (adjective, noun) and
/// (noun, verb) pair whose phrase occurs at least `min_count` times in
/// the corpus.
pub fn build_pair_queries(
    nouns: &BTreeSet<Concept>,
    adjectives: &BTreeSet<Concept>,
    verbs: &BTreeSet<Concept>,
    corpus: &CaptionCorpus,
    min_count: u64,
) -> Vec<PairQuery> {
    let mut phrases: Vec<String> = Vec::new();
    for noun in nouns {
        for adj in adjectives {
            phrases.push(format!("{} {}", adj.surface, noun.surface));
        }
        for verb in verbs {
            phrases.push(format!("{} {}", noun.surface, verb.surface));
        }
    }
    let counts = corpus.count_phrases(&phrases);

    let mut out = Vec::new();
    for noun in nouns {
        out.push(PairQuery {
            noun: noun.clone(),
            modifier: None,
            query_text: noun.surface.clone(),
            corpus_count: 0,
        });
        for adj in adjectives {
            let phrase = format!("{} {}", adj.surface, noun.surface);
            let n = counts[&phrase];
            if n >= min_count {
                out.push(PairQuery {
                    noun: noun.clone(),
                    modifier: Some(adj.clone()),
                    query_text: phrase,
                    corpus_count: n,
                });
            }
        }
        for verb in verbs {
            let phrase = format!("{} {}", noun.surface, verb.surface);
            let n = counts[&phrase];
            if n >= min_count {
                out.push(PairQuery {
                    noun: noun.clone(),
                    modifier: Some(verb.clone()),
                    query_text: phrase,
                    corpus_count: n,
                });
            }
        }
    }
    out
}
