//! Scoring-side subcommands: calibration, prediction scoring,
//! evaluation, and report aggregation.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use webcept::jsonl::{read_jsonl, write_jsonl, ArtifactHeader};
use webcept::metrics::{
    cider_d, hoi_ap, localization_map, vqa_accuracy, web10k_accuracy, EvalReport, GtTriple,
    LocalizationSample,
};
use webcept::predictions::{
    AnswerPrediction, CaptionPrediction, HOIPrediction, LocalizationPrediction,
};
use webcept::scoring::answers::{
    fit_delta, localize, rank_answers, recalibrate, Detection, LblParams, RecalibrationConfig,
    ValExample,
};
use webcept::scoring::geometry::BoundingBox;
use webcept::scoring::hoi::{hoi_infer, HOITriple};
use webcept::templates::AnswerType;
use webcept::text::normalize_answer;

use crate::config::{require, require_out, LoadedConfig};
use crate::CmdError;

fn header(loaded: &LoadedConfig) -> ArtifactHeader {
    ArtifactHeader::new(loaded.config.seed, &loaded.config_hash)
}

#[derive(Debug, Serialize, Deserialize)]
struct CalExample {
    candidates: Vec<webcept::scoring::answers::CandidateAnswer>,
    gold: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub delta: f64,
}

fn read_seen_classes(path: &Path) -> Result<HashSet<String>, CmdError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(content
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

pub fn calibrate(loaded: &LoadedConfig) -> Result<(), CmdError> {
    let cfg = &loaded.config;
    let out_path = require_out("calibration", &cfg.paths.calibration)?;
    let examples: Vec<CalExample> = read_jsonl(require("val_examples", &cfg.paths.val_examples)?)?;
    let seen = read_seen_classes(require("seen_classes", &cfg.paths.seen_classes)?)?;
    let val: Vec<ValExample> = examples
        .into_iter()
        .map(|e| ValExample {
            candidates: e.candidates,
            gold: e.gold,
        })
        .collect();
    let steps = (cfg.scoring.delta_grid_max / cfg.scoring.delta_grid_step).round() as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| i as f64 * cfg.scoring.delta_grid_step)
        .collect();
    let delta = fit_delta(&val, &seen, &grid)?;
    write_jsonl(out_path, &header(loaded), &[CalibrationRecord { delta }])?;
    println!(
        "calibrate: delta {delta} over {} val examples -> {}",
        val.len(),
        out_path.display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoredAnswer {
    pub id: String,
    pub answer: String,
    pub logprob: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoredLocalization {
    pub id: String,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoredHOI {
    pub image_id: String,
    pub triples: Vec<HOITriple>,
}

fn effective_delta(loaded: &LoadedConfig) -> Result<f64, CmdError> {
    // a stored calibration takes precedence over the configured delta
    if let Some(p) = loaded.config.paths.calibration.as_deref() {
        if p.exists() {
            let recs: Vec<CalibrationRecord> = read_jsonl(p)?;
            if let Some(r) = recs.first() {
                return Ok(r.delta);
            }
        }
    }
    Ok(loaded.config.scoring.delta)
}

pub fn score(loaded: &LoadedConfig, task: &str) -> Result<(), CmdError> {
    let cfg = &loaded.config;
    let out_path = require_out("scored", &cfg.paths.scored)?;
    let pred_path = require("predictions", &cfg.paths.predictions)?;
    match task {
        "classification" | "vqa" => {
            let preds: Vec<AnswerPrediction> = read_jsonl(pred_path)?;
            let recal = match &cfg.paths.seen_classes {
                Some(p) if p.exists() => Some(RecalibrationConfig::new(
                    read_seen_classes(p)?,
                    effective_delta(loaded)?,
                )?),
                _ => None,
            };
            let mut out = Vec::new();
            for p in &preds {
                let candidates = match &recal {
                    Some(c) => recalibrate(&p.candidates, c),
                    None => p.candidates.clone(),
                };
                let (best, _) = rank_answers(&candidates)?;
                out.push(ScoredAnswer {
                    id: p.id.clone(),
                    answer: best.text,
                    logprob: best.logprob,
                });
            }
            write_jsonl(out_path, &header(loaded), &out)?;
            println!(
                "score: {task} ranked {} examples (delta {}) -> {}",
                out.len(),
                recal.map_or(0.0, |c| c.delta),
                out_path.display()
            );
        }
        "localization" => {
            let preds: Vec<LocalizationPrediction> = read_jsonl(pred_path)?;
            let params = LblParams {
                w1: cfg.scoring.lbl_w1,
                w2: cfg.scoring.lbl_w2,
                b: cfg.scoring.lbl_b,
            };
            let out: Vec<ScoredLocalization> = preds
                .iter()
                .map(|p| ScoredLocalization {
                    id: p.id.clone(),
                    detections: localize(&p.regions, &params, None),
                })
                .collect();
            write_jsonl(out_path, &header(loaded), &out)?;
            println!(
                "score: localization ranked {} samples -> {}",
                out.len(),
                out_path.display()
            );
        }
        "hoi" => {
            let preds: Vec<HOIPrediction> = read_jsonl(pred_path)?;
            let mut out = Vec::new();
            for p in &preds {
                let triples =
                    hoi_infer(&p.candidates()?, cfg.scoring.person_threshold, None);
                out.push(ScoredHOI {
                    image_id: p.image_id.clone(),
                    triples,
                });
            }
            let n: usize = out.iter().map(|o| o.triples.len()).sum();
            write_jsonl(out_path, &header(loaded), &out)?;
            println!(
                "score: hoi produced {n} triples across {} images -> {}",
                out.len(),
                out_path.display()
            );
        }
        other => {
            return Err(CmdError::Validation(format!(
                "unknown score task {other:?} (classification, vqa, localization, hoi)"
            )))
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ReferenceGold {
    id: String,
    references: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LocGold {
    id: String,
    boxes: Vec<BoundingBox>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HOIGoldTriple {
    person: BoundingBox,
    object: BoundingBox,
    class: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct HOIGold {
    image_id: String,
    triples: Vec<HOIGoldTriple>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Web10kGold {
    id: String,
    answer: String,
    answer_type: AnswerType,
}

fn gold_for<'a, T>(map: &'a BTreeMap<String, T>, id: &str) -> Result<&'a T, CmdError> {
    map.get(id)
        .ok_or_else(|| CmdError::Validation(format!("no gold record for id {id:?}")))
}

pub fn evaluate(loaded: &LoadedConfig, task: &str) -> Result<(), CmdError> {
    let cfg = &loaded.config;
    let gold_path = require("gold", &cfg.paths.gold)?;
    let scored_path = require("scored", &cfg.paths.scored)?;
    let report = match task {
        "vqa" | "classification" => {
            let gold: BTreeMap<String, ReferenceGold> = read_jsonl::<ReferenceGold>(gold_path)?
                .into_iter()
                .map(|g| (g.id.clone(), g))
                .collect();
            let preds: Vec<ScoredAnswer> = read_jsonl(scored_path)?;
            let mut total = 0.0;
            for p in &preds {
                total += vqa_accuracy(&p.answer, &gold_for(&gold, &p.id)?.references);
            }
            EvalReport {
                task: task.to_string(),
                overall: if preds.is_empty() { 0.0 } else { total / preds.len() as f64 },
                per_category: BTreeMap::new(),
                per_answer_type: None,
                n_examples: preds.len(),
            }
        }
        "captioning" => {
            let gold: BTreeMap<String, Vec<String>> = read_jsonl::<ReferenceGold>(gold_path)?
                .into_iter()
                .map(|g| (g.id, g.references))
                .collect();
            let preds: BTreeMap<String, String> = read_jsonl::<CaptionPrediction>(scored_path)?
                .into_iter()
                .map(|p| (p.id, p.caption))
                .collect();
            let n = preds.len();
            let result = cider_d(&preds, &gold)?;
            EvalReport {
                task: task.to_string(),
                overall: result.corpus_score,
                per_category: BTreeMap::new(),
                per_answer_type: None,
                n_examples: n,
            }
        }
        "localization" => {
            let gold: BTreeMap<String, LocGold> = read_jsonl::<LocGold>(gold_path)?
                .into_iter()
                .map(|g| (g.id.clone(), g))
                .collect();
            let preds: Vec<ScoredLocalization> = read_jsonl(scored_path)?;
            let mut samples = Vec::new();
            for p in &preds {
                samples.push(LocalizationSample {
                    detections: p.detections.iter().map(|d| (d.box_, d.score)).collect(),
                    gts: gold_for(&gold, &p.id)?.boxes.clone(),
                });
            }
            EvalReport {
                task: task.to_string(),
                overall: localization_map(&samples, cfg.scoring.iou_threshold),
                per_category: BTreeMap::new(),
                per_answer_type: None,
                n_examples: samples.len(),
            }
        }
        "hoi" => {
            let gold: Vec<GtTriple> = read_jsonl::<HOIGold>(gold_path)?
                .into_iter()
                .flat_map(|g| {
                    g.triples.into_iter().map(|t| GtTriple {
                        person: t.person,
                        object: t.object,
                        class: t.class,
                    })
                })
                .collect();
            let preds: Vec<HOITriple> = read_jsonl::<ScoredHOI>(scored_path)?
                .into_iter()
                .flat_map(|s| s.triples)
                .collect();
            let n = preds.len();
            let (per_class, mean) = hoi_ap(&preds, &gold, cfg.scoring.iou_threshold);
            EvalReport {
                task: task.to_string(),
                overall: mean,
                per_category: per_class,
                per_answer_type: None,
                n_examples: n,
            }
        }
        "web10k" => {
            let gold: BTreeMap<String, Web10kGold> = read_jsonl::<Web10kGold>(gold_path)?
                .into_iter()
                .map(|g| (g.id.clone(), g))
                .collect();
            let preds: Vec<ScoredAnswer> = read_jsonl(scored_path)?;
            let mut results = Vec::new();
            for p in &preds {
                let g = gold_for(&gold, &p.id)?;
                let correct = normalize_answer(&p.answer) == normalize_answer(&g.answer);
                results.push((g.answer_type, correct));
            }
            web10k_accuracy(&results)
        }
        other => {
            return Err(CmdError::Validation(format!(
                "unknown evaluate task {other:?} (vqa, classification, captioning, localization, hoi, web10k)"
            )))
        }
    };

    let dir = cfg
        .paths
        .reports_dir
        .as_deref()
        .ok_or_else(|| CmdError::Validation("config field paths.reports_dir is required".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| CmdError::Runtime(format!("{}: {e}", dir.display())))?;
    let out_path = dir.join(format!("{task}.json"));
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CmdError::Runtime(format!("report serialize: {e}")))?;
    std::fs::write(&out_path, json + "\n")
        .map_err(|e| CmdError::Runtime(format!("{}: {e}", out_path.display())))?;
    println!(
        "evaluate: {task} overall {:.4} over {} examples -> {}",
        report.overall,
        report.n_examples,
        out_path.display()
    );
    Ok(())
}

pub fn report(loaded: &LoadedConfig) -> Result<(), CmdError> {
    let dir = require("reports_dir", &loaded.config.paths.reports_dir)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| CmdError::Runtime(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().is_some_and(|n| n != "combined.json")
        })
        .collect();
    entries.sort();
    for path in &entries {
        let content = std::fs::read_to_string(path)
            .map_err(|e| CmdError::Runtime(format!("{}: {e}", path.display())))?;
        let r: EvalReport = serde_json::from_str(&content)
            .map_err(|e| CmdError::Validation(format!("{}: {e}", path.display())))?;
        reports.push(r);
    }
    if reports.is_empty() {
        return Err(CmdError::Validation(format!(
            "no reports found in {}",
            dir.display()
        )));
    }

    // combined JSON plus a flat CSV dump
    let combined = serde_json::to_string_pretty(&reports)
        .map_err(|e| CmdError::Runtime(format!("combined serialize: {e}")))?;
    std::fs::write(dir.join("combined.json"), combined + "\n")
        .map_err(|e| CmdError::Runtime(format!("combined.json: {e}")))?;
    let mut csv = String::from("task,metric,value\n");
    for r in &reports {
        csv.push_str(&format!("{},overall,{}\n", r.task, r.overall));
        for (k, v) in &r.per_category {
            csv.push_str(&format!("{},category:{k},{v}\n", r.task));
        }
        if let Some(per) = &r.per_answer_type {
            for (k, v) in per {
                csv.push_str(&format!("{},answer_type:{k},{v}\n", r.task));
            }
        }
    }
    std::fs::write(dir.join("combined.csv"), csv)
        .map_err(|e| CmdError::Runtime(format!("combined.csv: {e}")))?;

    for r in &reports {
        println!(
            "report: {} overall {:.4} (n={})",
            r.task, r.overall, r.n_examples
        );
    }
    println!(
        "report: {} tasks -> {}",
        reports.len(),
        dir.join("combined.json").display()
    );
    let _ = loaded;
    Ok(())
}
