//! Wire formats for model-exported prediction files (JSON-Lines, one
//! record per example) and conversions into the scoring types.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::jsonl::read_jsonl;
use crate::scoring::answers::{CandidateAnswer, RegionScore};
use crate::scoring::geometry::BoundingBox;
use crate::scoring::hoi::HOICandidate;

/// Classification / VQA: ranked by the toolkit, so order is free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerPrediction {
    pub id: String,
    pub candidates: Vec<CandidateAnswer>,
}

/// Localization: per-region label-vs-other log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationPrediction {
    pub id: String,
    pub regions: Vec<RegionScore>,
}

/// Captioning: free-form text only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionPrediction {
    pub id: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonDetection {
    #[serde(rename = "box")]
    pub box_: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HOIPair {
    pub person_idx: usize,
    #[serde(rename = "box")]
    pub box_: BoundingBox,
    pub labels: BTreeMap<String, f64>,
    pub no_interaction: f64,
}

/// HOI: first-pass person detections plus per-(person, object) pair
/// log-probability tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HOIPrediction {
    pub image_id: String,
    pub persons: Vec<PersonDetection>,
    pub pairs: Vec<HOIPair>,
}

impl HOIPrediction {
    /// Flatten into per-pair candidates for chained inference.
    pub fn candidates(&self) -> Result<Vec<HOICandidate>, PipelineError> {
        self.pairs
            .iter()
            .map(|pair| {
                let person = self.persons.get(pair.person_idx).ok_or_else(|| {
                    PipelineError::invalid(format!(
                        "image {}: pair references person {} of {}",
                        self.image_id,
                        pair.person_idx,
                        self.persons.len()
                    ))
                })?;
                Ok(HOICandidate {
                    person: person.box_,
                    person_score: person.score,
                    object: pair.box_,
                    interaction_logprobs: pair.labels.clone(),
                    no_interaction_logprob: pair.no_interaction,
                })
            })
            .collect()
    }
}

pub fn read_answer_predictions(path: &Path) -> Result<Vec<AnswerPrediction>, PipelineError> {
    read_jsonl(path)
}

pub fn read_localization_predictions(
    path: &Path,
) -> Result<Vec<LocalizationPrediction>, PipelineError> {
    read_jsonl(path)
}

pub fn read_caption_predictions(path: &Path) -> Result<Vec<CaptionPrediction>, PipelineError> {
    read_jsonl(path)
}

pub fn read_hoi_predictions(path: &Path) -> Result<Vec<HOIPrediction>, PipelineError> {
    read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jsonl::{write_jsonl, ArtifactHeader};

    #[test]
    fn answer_record_wire_shape() {
        let json = r#"{"id":"q1","candidates":[{"text":"dog","logprob":-0.1}]}"#;
        let rec: AnswerPrediction = serde_json::from_str(json).unwrap();
        assert_eq!(rec.id, "q1");
        assert_eq!(rec.candidates[0].text, "dog");
        assert_eq!(serde_json::from_str::<AnswerPrediction>(&serde_json::to_string(&rec).unwrap()).unwrap(), rec);
    }

    #[test]
    fn localization_record_wire_shape() {
        let json = r#"{"id":"s1","regions":[{"box":[0,0,10,10],"logp_label":-0.2,"logp_other":-1.5}]}"#;
        let rec: LocalizationPrediction = serde_json::from_str(json).unwrap();
        assert_eq!(rec.regions[0].box_.x2, 10.0);
        // degenerate boxes are rejected at parse time
        let bad = r#"{"id":"s1","regions":[{"box":[10,0,10,10],"logp_label":-0.2,"logp_other":-1.5}]}"#;
        assert!(serde_json::from_str::<LocalizationPrediction>(bad).is_err());
    }

    #[test]
    fn hoi_record_flattens_to_candidates() {
        let json = r#"{"image_id":"img1",
            "persons":[{"box":[0,0,10,20],"score":0.9}],
            "pairs":[{"person_idx":0,"box":[20,0,40,10],
                      "labels":{"riding+horse":-0.3},"no_interaction":-2.0}]}"#;
        let rec: HOIPrediction = serde_json::from_str(json).unwrap();
        let cands = rec.candidates().unwrap();
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].person_score, 0.9);
        assert_eq!(cands[0].interaction_logprobs["riding+horse"], -0.3);

        let dangling = HOIPrediction {
            image_id: "img1".into(),
            persons: vec![],
            pairs: rec.pairs.clone(),
        };
        assert!(dangling.candidates().is_err());
    }

    #[test]
    fn file_roundtrip_with_logprob_norm_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        let recs = vec![CaptionPrediction {
            id: "c1".into(),
            caption: "a dog".into(),
        }];
        let header = ArtifactHeader::new(1, "h").with_logprob_norm("none");
        write_jsonl(&path, &header, &recs).unwrap();
        assert_eq!(read_caption_predictions(&path).unwrap(), recs);
        let back = crate::jsonl::read_header(&path).unwrap().unwrap();
        assert_eq!(back.header.logprob_norm.as_deref(), Some("none"));
    }
}
