//! Evaluation benchmark sampling: mutually exclusive category selection,
//! capped per-category Cls/CiC/Loc sampling, co-occurrence-aware VQA
//! sampling, and VQA answer aggregation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::scoring::geometry::BoundingBox;
use crate::text::{keyed_rng, mix, normalize_answer, stable_hash};

/// One node of the category hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryNode {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

/// Leaves of the hierarchy minus the noisy-category exclusions.
pub fn select_categories(
    hierarchy: &[CategoryNode],
    noisy_exclusions: &HashSet<String>,
) -> Result<BTreeSet<String>, PipelineError> {
    // cycle check via parent-chain walking
    let parents: HashMap<&str, Option<&str>> = hierarchy
        .iter()
        .map(|n| (n.name.as_str(), n.parent.as_deref()))
        .collect();
    for node in hierarchy {
        let mut seen = HashSet::new();
        let mut cur = node.name.as_str();
        while let Some(Some(p)) = parents.get(cur) {
            if !seen.insert(*p) {
                return Err(PipelineError::invalid(format!(
                    "hierarchy contains a cycle through {:?}",
                    p
                )));
            }
            cur = *p;
        }
    }
    let has_children: HashSet<&str> = hierarchy
        .iter()
        .filter_map(|n| n.parent.as_deref())
        .collect();
    let selected: BTreeSet<String> = hierarchy
        .iter()
        .filter(|n| !has_children.contains(n.name.as_str()))
        .filter(|n| !noisy_exclusions.contains(&n.name))
        .map(|n| n.name.clone())
        .collect();
    if selected.is_empty() {
        eprintln!("[WARN] category selection produced an empty set");
    }
    Ok(selected)
}

/// An annotated bounding box from the detection source dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxAnnotation {
    pub image_id: String,
    pub category: String,
    #[serde(rename = "box")]
    pub box_: BoundingBox,
    pub is_group: bool,
}

/// One classification / classification-in-context sample: a single box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsSample {
    pub sample_id: String,
    pub image_id: String,
    pub category: String,
    #[serde(rename = "box")]
    pub box_: BoundingBox,
}

/// One localization sample: all of a category's boxes in one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocSample {
    pub sample_id: String,
    pub image_id: String,
    pub category: String,
    pub boxes: Vec<BoundingBox>,
}

fn per_category_rng(seed: u64, task: &str, category: &str) -> rand_chacha::ChaCha8Rng {
    keyed_rng(mix(seed, stable_hash(task.as_bytes())), &[category])
}

/// Sample up to `cap` annotated boxes per category, uniformly without
/// replacement.
pub fn sample_cls_cic(
    annotations: &[BoxAnnotation],
    categories: &BTreeSet<String>,
    cap: usize,
    seed: u64,
) -> Result<Vec<ClsSample>, PipelineError> {
    if cap == 0 {
        return Err(PipelineError::invalid("cap must be positive"));
    }
    let mut by_category: BTreeMap<&String, Vec<&BoxAnnotation>> = BTreeMap::new();
    for ann in annotations {
        if categories.contains(&ann.category) {
            by_category.entry(&ann.category).or_default().push(ann);
        }
    }
    let mut out = Vec::new();
    for (category, mut anns) in by_category {
        let mut rng = per_category_rng(seed, "cls", category);
        anns.shuffle(&mut rng);
        for (i, ann) in anns.into_iter().take(cap).enumerate() {
            out.push(ClsSample {
                sample_id: format!("cls|{category}|{i}"),
                image_id: ann.image_id.clone(),
                category: category.clone(),
                box_: ann.box_,
            });
        }
    }
    Ok(out)
}

/// Sample up to `cap` (image, category) localization samples per category;
/// each sample carries all the category's non-group boxes in the image.
pub fn sample_loc(
    annotations: &[BoxAnnotation],
    categories: &BTreeSet<String>,
    cap: usize,
    seed: u64,
) -> Result<Vec<LocSample>, PipelineError> {
    if cap == 0 {
        return Err(PipelineError::invalid("cap must be positive"));
    }
    let mut by_pair: BTreeMap<(&String, &String), Vec<BoundingBox>> = BTreeMap::new();
    for ann in annotations.iter().filter(|a| !a.is_group) {
        if categories.contains(&ann.category) {
            by_pair
                .entry((&ann.category, &ann.image_id))
                .or_default()
                .push(ann.box_);
        }
    }
    let mut by_category: BTreeMap<&String, Vec<(&String, Vec<BoundingBox>)>> = BTreeMap::new();
    for ((category, image_id), boxes) in by_pair {
        by_category
            .entry(category)
            .or_default()
            .push((image_id, boxes));
    }
    let mut out = Vec::new();
    for (category, mut pairs) in by_category {
        let mut rng = per_category_rng(seed, "loc", category);
        pairs.shuffle(&mut rng);
        for (i, (image_id, boxes)) in pairs.into_iter().take(cap).enumerate() {
            out.push(LocSample {
                sample_id: format!("loc|{category}|{i}"),
                image_id: image_id.clone(),
                category: category.clone(),
                boxes,
            });
        }
    }
    Ok(out)
}

/// A VQA annotation from the source dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VQAAnnotation {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub image_id: String,
    #[serde(default)]
    pub extra_answers: Vec<String>,
}

/// Whole-word surface match of a category in text, lowercased, with naive
/// "s"-suffix plural equivalence.
pub fn mentions_category(text: &str, category: &str) -> bool {
    let cat = category.to_lowercase();
    let cat_words: Vec<&str> = cat.split_whitespace().collect();
    if cat_words.is_empty() {
        return false;
    }
    let text = text.to_lowercase();
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_string())
        .collect();
    let eq = |a: &str, b: &str| {
        a == b || a.strip_suffix('s') == Some(b) || b.strip_suffix('s') == Some(a)
    };
    words.windows(cat_words.len()).any(|w| {
        w.iter()
            .zip(&cat_words)
            .all(|(tw, cw)| eq(tw, cw))
    })
}

/// Tag the selected categories mentioned in a question or answer.
pub fn tag_categories(ann: &VQAAnnotation, categories: &BTreeSet<String>) -> BTreeSet<String> {
    categories
        .iter()
        .filter(|c| mentions_category(&ann.question, c) || mentions_category(&ann.answer, c))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VQASample {
    pub sample_id: String,
    pub annotation: VQAAnnotation,
    pub tagged_categories: BTreeSet<String>,
}

/// Sample VQA examples per category with the co-occurrence-aware rule:
/// iterating categories (descending by availability, then lexicographic),
/// a category that already has `k` sampled co-occurring examples draws
/// only `max(0, cap - k)` new ones. Answers longer than 2 words after
/// article removal are discarded up front.
pub fn sample_vqa(
    annotations: &[VQAAnnotation],
    categories: &BTreeSet<String>,
    cap: usize,
    seed: u64,
) -> Result<Vec<VQASample>, PipelineError> {
    if cap == 0 {
        return Err(PipelineError::invalid("cap must be positive"));
    }
    let eligible: Vec<(&VQAAnnotation, BTreeSet<String>)> = annotations
        .iter()
        .filter(|a| crate::text::words_without_articles(&a.answer) <= 2)
        .map(|a| (a, tag_categories(a, categories)))
        .filter(|(_, tags)| !tags.is_empty())
        .collect();

    // availability per category determines iteration order
    let mut availability: BTreeMap<&String, usize> = BTreeMap::new();
    for (_, tags) in &eligible {
        for c in tags {
            // tags are owned Strings cloned from categories; count by name
            *availability
                .entry(categories.get(c).expect("tag from selected set"))
                .or_default() += 1;
        }
    }
    let mut order: Vec<&String> = availability.keys().cloned().collect();
    order.sort_by(|a, b| availability[b].cmp(&availability[a]).then(a.cmp(b)));

    let mut taken: HashSet<usize> = HashSet::new();
    let mut per_category_count: HashMap<&String, usize> = HashMap::new();
    let mut out = Vec::new();
    for category in order {
        let k = *per_category_count.get(category).unwrap_or(&0);
        let want = cap.saturating_sub(k);
        if want == 0 {
            continue;
        }
        let mut pool: Vec<usize> = eligible
            .iter()
            .enumerate()
            .filter(|(i, (_, tags))| !taken.contains(i) && tags.contains(category))
            .map(|(i, _)| i)
            .collect();
        let mut rng = per_category_rng(seed, "vqa", category);
        pool.shuffle(&mut rng);
        for &i in pool.iter().take(want) {
            taken.insert(i);
            let (ann, tags) = &eligible[i];
            for t in tags {
                *per_category_count
                    .entry(categories.get(t).expect("selected"))
                    .or_default() += 1;
            }
            out.push(VQASample {
                sample_id: format!("vqa|{}", ann.id),
                annotation: (*ann).clone(),
                tagged_categories: tags.clone(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedVQA {
    pub retained: bool,
    /// All 10 normalized answers, kept as the reference multiset.
    pub reference_answers: Vec<String>,
    /// The most frequent normalized answer, if retained.
    pub consensus: Option<String>,
}

/// Aggregate the original answer plus 9 collected answers: retained iff
/// some normalized answer occurs at least 3 times among the 10.
pub fn aggregate_vqa_answers(
    original_answer: &str,
    collected: &[String],
) -> Result<AggregatedVQA, PipelineError> {
    if collected.len() != 9 {
        return Err(PipelineError::invalid(format!(
            "expected 9 extra answers, got {}",
            collected.len()
        )));
    }
    let all: Vec<String> = std::iter::once(original_answer)
        .chain(collected.iter().map(|s| s.as_str()))
        .map(normalize_answer)
        .collect();
    let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
    for a in &all {
        *counts.entry(a).or_default() += 1;
    }
    let (best, best_count) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(a, c)| ((*a).clone(), *c))
        .expect("ten answers");
    Ok(AggregatedVQA {
        retained: best_count >= 3,
        reference_answers: all,
        consensus: if best_count >= 3 { Some(best) } else { None },
    })
}
