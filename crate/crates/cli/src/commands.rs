//! Dataset-pipeline subcommands: lexicon building through benchmark
//! sampling.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use webcept::dce::{
    aggregate_vqa_answers, sample_cls_cic, sample_loc, sample_vqa, select_categories,
    BoxAnnotation, CategoryNode, VQAAnnotation,
};
use webcept::ingest::{
    fetch_missing, read_manifest, write_manifest, Clock, FakeClock, FixtureClient, Manifest,
    RateLimiter, RetryPolicy, SearchClient, SearchHit, SystemClock,
};
use webcept::jsonl::{read_jsonl, write_jsonl, ArtifactHeader};
use webcept::lexicon::{
    build_pair_queries, load_concreteness, select_adjectives, select_multiword_nouns,
    select_nouns, select_verbs, CaptionCorpus, Concept, ConceptLexicon, PairQuery, Pos,
};
use webcept::splits::{
    apply_verification, shard, split_pairs, stratified_batches, SplitSpec, VerificationRule,
    VerificationVote,
};
use webcept::templates::{expected_qa_count, generate_qas, TemplateTable};
use webcept::text::tokenize;

use crate::config::{require, require_out, LoadedConfig};
use crate::CmdError;

fn read_lines(path: &Path) -> Result<Vec<String>, CmdError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(content
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

fn read_lines_opt(path: &Option<std::path::PathBuf>) -> Result<Vec<String>, CmdError> {
    match path {
        Some(p) => read_lines(p),
        None => Ok(Vec::new()),
    }
}

fn header(loaded: &LoadedConfig) -> ArtifactHeader {
    ArtifactHeader::new(loaded.config.seed, &loaded.config_hash)
}

/// Adjacent-token bigram counts over the corpus, for multi-word noun
/// candidates.
fn corpus_bigrams(path: &Path) -> Result<Vec<(String, u64)>, CmdError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Runtime(format!("{}: {e}", path.display())))?;
    let mut counts: HashMap<String, u64> = HashMap::new();
    for line in content.lines() {
        let toks = tokenize(line);
        for w in toks.windows(2) {
            *counts.entry(format!("{} {}", w[0], w[1])).or_insert(0) += 1;
        }
    }
    Ok(counts.into_iter().collect())
}

pub fn build_lexicon(loaded: &LoadedConfig) -> Result<(), CmdError> {
    let cfg = &loaded.config;
    let out_path = require_out("lexicon", &cfg.paths.lexicon)?;

    let load = load_concreteness(require("concreteness", &cfg.paths.concreteness)?)?;
    for issue in &load.issues {
        eprintln!("[WARN] concreteness line {}: {}", issue.line, issue.message);
    }
    let mut nouns = select_nouns(
        &load.candidates,
        cfg.lexicon.concreteness_threshold,
        cfg.lexicon.alt_sense_threshold,
    );

    if cfg.lexicon.multiword_top_k > 0 {
        let bigrams = corpus_bigrams(require("corpus", &cfg.paths.corpus)?)?;
        let concrete: HashSet<String> = nouns.iter().map(|c| c.surface.clone()).collect();
        nouns.extend(select_multiword_nouns(
            &bigrams,
            &concrete,
            cfg.lexicon.multiword_top_k,
            cfg.lexicon.multiword_extra_cap,
        ));
    }

    let verb_list: BTreeSet<String> = read_lines(require("verbs", &cfg.paths.verbs)?)?
        .into_iter()
        .collect();
    let verb_excl: HashSet<String> = read_lines_opt(&cfg.paths.verb_exclusions)?
        .into_iter()
        .collect();
    let verbs = select_verbs(&[verb_list], &verb_excl);

    // adjectives ship as `surface<TAB>type` rows
    let mut adj_sources: BTreeSet<String> = BTreeSet::new();
    let mut type_map: BTreeMap<String, String> = BTreeMap::new();
    for line in read_lines(require("adjectives", &cfg.paths.adjectives)?)? {
        let (surface, ty) = line.split_once('\t').ok_or_else(|| {
            CmdError::Validation(format!("adjective row {line:?}: expected surface<TAB>type"))
        })?;
        adj_sources.insert(surface.to_lowercase());
        type_map.insert(surface.to_lowercase(), ty.trim().to_string());
    }
    let adj_excl: HashSet<String> = read_lines_opt(&cfg.paths.adjective_exclusions)?
        .into_iter()
        .collect();
    let adjectives = select_adjectives(&[adj_sources], &adj_excl, &type_map)?;

    let mut lexicon = ConceptLexicon {
        nouns,
        verbs,
        adjectives,
    };
    let blacklist: HashSet<String> = read_lines_opt(&cfg.paths.blacklist)?
        .into_iter()
        .map(|w| w.to_lowercase())
        .collect();
    lexicon.apply_blacklist(&blacklist);

    let records: Vec<&Concept> = lexicon
        .nouns
        .iter()
        .chain(&lexicon.verbs)
        .chain(&lexicon.adjectives)
        .collect();
    write_jsonl(out_path, &header(loaded), &records)?;
    let multiword = lexicon.nouns.iter().filter(|c| c.multiword).count();
    println!(
        "build-lexicon: {} nouns ({multiword} multiword), {} verbs, {} adjectives -> {}",
        lexicon.nouns.len(),
        lexicon.verbs.len(),
        lexicon.adjectives.len(),
        out_path.display()
    );
    Ok(())
}

fn read_lexicon(path: &Path) -> Result<ConceptLexicon, CmdError> {
    let concepts: Vec<Concept> = read_jsonl(path)?;
    let mut lexicon = ConceptLexicon::default();
    for c in concepts {
        match c.pos {
            Pos::Noun => lexicon.nouns.insert(c),
            Pos::Verb => lexicon.verbs.insert(c),
            Pos::Adjective => lexicon.adjectives.insert(c),
        };
    }
    Ok(lexicon)
}

pub fn gen_queries(loaded: &LoadedConfig, terms_file: Option<&Path>) -> Result<(), CmdError> {
    let cfg = &loaded.config;
    let out_path = require_out("queries", &cfg.paths.queries)?;

    let queries: Vec<PairQuery> = match terms_file {
        // ad-hoc term lists (e.g. emerging concepts) bypass the lexicon
        Some(tf) => read_lines(tf)?
            .into_iter()
            .map(|term| {
                let term = term.to_lowercase();
                PairQuery {
                    noun: Concept::noun(&term, None),
                    modifier: None,
                    query_text: term,
                    corpus_count: 0,
                }
            })
            .collect(),
        None => {
            let lexicon = read_lexicon(require("lexicon", &cfg.paths.lexicon)?)?;
            let corpus = CaptionCorpus::load(require("corpus", &cfg.paths.corpus)?)?;
            build_pair_queries(
                &lexicon.nouns,
                &lexicon.adjectives,
                &lexicon.verbs,
                &corpus,
                cfg.lexicon.min_pair_count,
            )
        }
    };

    write_jsonl(out_path, &header(loaded), &queries)?;
    let bare = queries.iter().filter(|q| q.modifier.is_none()).count();
    let adj = queries
        .iter()
        .filter(|q| matches!(&q.modifier, Some(m) if m.pos == Pos::Adjective))
        .count();
    let verb = queries.len() - bare - adj;
    println!(
        "gen-queries: {} queries ({bare} bare, {adj} noun-adj, {verb} noun-verb) -> {}",
        queries.len(),
        out_path.display()
    );
    Ok(())
}

pub fn fetch(loaded: &LoadedConfig) -> Result<(), CmdError> {
    let cfg = &loaded.config;
    let out_path = require_out("manifest", &cfg.paths.manifest)?;
    let queries: Vec<PairQuery> = read_jsonl(require("queries", &cfg.paths.queries)?)?;
    let existing = if out_path.exists() {
        read_manifest(out_path)?
    } else {
        Manifest::default()
    };
    let blacklist: HashSet<String> = read_lines_opt(&cfg.paths.blacklist)?
        .into_iter()
        .map(|w| w.to_lowercase())
        .collect();

    let endpoint = cfg.fetch.endpoint.as_str();
    if endpoint.is_empty() {
        return Err(CmdError::Validation(
            "config field fetch.endpoint is required".into(),
        ));
    }
    let (client, clock): (Box<dyn SearchClient>, Box<dyn Clock>) =
        if let Some(path) = endpoint.strip_prefix("fixture://") {
            // fixture runs use the fake clock so reruns are byte-identical
            (
                Box::new(FixtureClient::load(Path::new(path))?),
                Box::new(FakeClock::default()),
            )
        } else if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
            let api_key = std::env::var(&cfg.fetch.api_key_env).map_err(|_| {
                CmdError::Validation(format!(
                    "environment variable {} (fetch.api_key_env) is not set",
                    cfg.fetch.api_key_env
                ))
            })?;
            (
                Box::new(HttpSearchClient {
                    endpoint: endpoint.to_string(),
                    api_key,
                }),
                Box::new(SystemClock),
            )
        } else {
            return Err(CmdError::Validation(format!(
                "fetch.endpoint {endpoint:?} must be fixture:// or http(s)://"
            )));
        };

    let limiter = RateLimiter::new(cfg.fetch.rate_per_sec, clock.as_ref());
    let (manifest, failed) = fetch_missing(
        &queries,
        &existing,
        cfg.fetch.limit,
        cfg.fetch.workers,
        client.as_ref(),
        &RetryPolicy::default(),
        &limiter,
        &blacklist,
        clock.as_ref(),
    );
    write_manifest(out_path, &manifest, &header(loaded))?;
    println!(
        "fetch: {} records across {} queries ({} failed, {} resumed) -> {}",
        manifest.records.len(),
        manifest.query_index.len(),
        failed.len(),
        existing.query_index.len(),
        out_path.display()
    );
    Ok(())
}

struct HttpSearchClient {
    endpoint: String,
    api_key: String,
}

impl SearchClient for HttpSearchClient {
    fn search(&self, query_text: &str, limit: usize) -> Result<Vec<SearchHit>, String> {
        let client = reqwest::blocking::Client::new();
        let resp = client
            .get(&self.endpoint)
            .query(&[("q", query_text), ("count", &limit.to_string())])
            .header("x-api-key", &self.api_key)
            .send()
            .map_err(|e| e.to_string())?
            .error_for_status()
            .map_err(|e| e.to_string())?;
        resp.json().map_err(|e| e.to_string())
    }
}

pub fn gen_qa(loaded: &LoadedConfig) -> Result<(), CmdError> {
    let cfg = &loaded.config;
    let out_path = require_out("qa", &cfg.paths.qa)?;
    let queries: Vec<PairQuery> = read_jsonl(require("queries", &cfg.paths.queries)?)?;
    let manifest = read_manifest(require("manifest", &cfg.paths.manifest)?)?;
    let table = TemplateTable::default();

    let mut qas = Vec::new();
    let mut expected = 0usize;
    for query in &queries {
        for record in manifest.records_for(&query.id()) {
            qas.extend(generate_qas(&table, query, &record.url, cfg.seed)?);
            expected += expected_qa_count(query);
        }
    }
    debug_assert_eq!(qas.len(), expected);
    write_jsonl(out_path, &header(loaded), &qas)?;
    println!(
        "gen-qa: {} QA examples from {} queries x {} images -> {}",
        qas.len(),
        queries.len(),
        manifest.records.len(),
        out_path.display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SplitRecord {
    pub split: String,
    pub pair_id: String,
}

pub fn split_cmd(loaded: &LoadedConfig) -> Result<(), CmdError> {
    let cfg = &loaded.config;
    let out_path = require_out("splits", &cfg.paths.splits)?;
    let manifest = read_manifest(require("manifest", &cfg.paths.manifest)?)?;
    let spec = SplitSpec {
        train_n: cfg.split.train,
        val_n: cfg.split.val,
        test_n: cfg.split.test,
        seed: cfg.seed,
    };
    let splits = split_pairs(&manifest, &spec)?;
    let mut records = Vec::new();
    for (name, ids) in [
        ("train", &splits.train),
        ("val", &splits.val),
        ("test", &splits.test),
    ] {
        records.extend(ids.iter().map(|id| SplitRecord {
            split: name.to_string(),
            pair_id: id.clone(),
        }));
    }
    write_jsonl(out_path, &header(loaded), &records)?;
    println!(
        "split: train {} / val {} / test {} of {} pairs -> {}",
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        manifest.records.len(),
        out_path.display()
    );
    Ok(())
}

fn read_split(path: &Path, which: &str) -> Result<Vec<String>, CmdError> {
    let records: Vec<SplitRecord> = read_jsonl(path)?;
    Ok(records
        .into_iter()
        .filter(|r| r.split == which)
        .map(|r| r.pair_id)
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RetainedRecord {
    pub pair_id: String,
}

pub fn verify(loaded: &LoadedConfig, which_split: &str) -> Result<(), CmdError> {
    let cfg = &loaded.config;
    let out_path = require_out("retained", &cfg.paths.retained)?;
    let pairs = read_split(require("splits", &cfg.paths.splits)?, which_split)?;
    let votes: Vec<VerificationVote> = read_jsonl(require("votes", &cfg.paths.votes)?)?;
    let rule = if cfg.split.unanimous {
        VerificationRule::Unanimous
    } else {
        VerificationRule::Majority
    };
    let outcome = apply_verification(&pairs, &votes, rule)?;
    let records: Vec<RetainedRecord> = outcome
        .retained
        .iter()
        .map(|p| RetainedRecord { pair_id: p.clone() })
        .collect();
    write_jsonl(out_path, &header(loaded), &records)?;
    println!(
        "verify: retained {} of {} voted pairs (retention {:.1}%) -> {}",
        outcome.retained.len(),
        votes.len(),
        outcome.retention_rate * 100.0,
        out_path.display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ShardRecord {
    pub partition_id: u64,
    pub shard: usize,
    pub active: bool,
    pub pair_id: String,
}

pub fn shard_cmd(loaded: &LoadedConfig) -> Result<(), CmdError> {
    let cfg = &loaded.config;
    let out_path = require_out("shards", &cfg.paths.shards)?;
    // shard the verified pairs when present, the raw train split otherwise
    let pairs = match &cfg.paths.retained {
        Some(p) if p.exists() => read_jsonl::<RetainedRecord>(p)?
            .into_iter()
            .map(|r| r.pair_id)
            .collect(),
        _ => read_split(require("splits", &cfg.paths.splits)?, "train")?,
    };
    let assignment = shard(&pairs, cfg.shard.k, cfg.seed, cfg.shard.epoch)?;
    let mut records = Vec::new();
    for (si, ids) in assignment.shards.iter().enumerate() {
        records.extend(ids.iter().map(|id| ShardRecord {
            partition_id: assignment.partition_id,
            shard: si,
            active: si == assignment.shard_index,
            pair_id: id.clone(),
        }));
    }
    write_jsonl(out_path, &header(loaded), &records)?;
    println!(
        "shard: epoch {} -> partition {} shard {}/{} ({} pairs total) -> {}",
        cfg.shard.epoch,
        assignment.partition_id,
        assignment.shard_index,
        cfg.shard.k,
        pairs.len(),
        out_path.display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch: usize,
    pub items: Vec<(usize, usize)>,
}

pub fn schedule_cmd(loaded: &LoadedConfig) -> Result<(), CmdError> {
    let cfg = &loaded.config;
    let out_path = require_out("schedule", &cfg.paths.schedule)?;
    let source_sizes = if cfg.schedule.source_sizes.is_empty() {
        vec![read_split(require("splits", &cfg.paths.splits)?, "train")?.len()]
    } else {
        cfg.schedule.source_sizes.clone()
    };
    let schedule = stratified_batches(&source_sizes, cfg.schedule.batch_size, cfg.seed)?;
    let records: Vec<BatchRecord> = schedule
        .batches
        .iter()
        .enumerate()
        .map(|(i, items)| BatchRecord {
            batch: i,
            items: items.clone(),
        })
        .collect();
    write_jsonl(out_path, &header(loaded), &records)?;
    println!(
        "schedule: {} batches of size {} over sources {:?} -> {}",
        schedule.batches.len(),
        cfg.schedule.batch_size,
        source_sizes,
        out_path.display()
    );
    Ok(())
}

pub fn sample_dce(loaded: &LoadedConfig) -> Result<(), CmdError> {
    let cfg = &loaded.config;
    let dir = cfg
        .paths
        .dce_dir
        .as_deref()
        .ok_or_else(|| CmdError::Validation("config field paths.dce_dir is required".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| CmdError::Runtime(format!("{}: {e}", dir.display())))?;

    let hierarchy_path = require("hierarchy", &cfg.paths.hierarchy)?;
    let content = std::fs::read_to_string(hierarchy_path)
        .map_err(|e| CmdError::Runtime(format!("{}: {e}", hierarchy_path.display())))?;
    let hierarchy: Vec<CategoryNode> = serde_json::from_str(&content)
        .map_err(|e| CmdError::Validation(format!("{}: {e}", hierarchy_path.display())))?;
    let exclusions: HashSet<String> = read_lines_opt(&cfg.paths.category_exclusions)?
        .into_iter()
        .collect();
    let categories = select_categories(&hierarchy, &exclusions)?;

    let boxes: Vec<BoxAnnotation> = read_jsonl(require("box_annotations", &cfg.paths.box_annotations)?)?;
    let cls = sample_cls_cic(&boxes, &categories, cfg.dce.cls_cap, cfg.seed)?;
    let loc = sample_loc(&boxes, &categories, cfg.dce.loc_cap, cfg.seed)?;
    write_jsonl(&dir.join("cls.jsonl"), &header(loaded), &cls)?;
    write_jsonl(&dir.join("loc.jsonl"), &header(loaded), &loc)?;

    let vqa_rows: Vec<VQAAnnotation> =
        read_jsonl(require("vqa_annotations", &cfg.paths.vqa_annotations)?)?;
    let vqa = sample_vqa(&vqa_rows, &categories, cfg.dce.vqa_cap, cfg.seed)?;
    // aggregate answers for samples that carry the 9 collected answers
    let mut aggregated = 0usize;
    let mut retained = 0usize;
    #[derive(Serialize)]
    struct VQAOut<'a> {
        #[serde(flatten)]
        sample: &'a webcept::dce::VQASample,
        #[serde(skip_serializing_if = "Option::is_none")]
        aggregation: Option<webcept::dce::AggregatedVQA>,
    }
    let mut out_rows = Vec::new();
    for s in &vqa {
        let aggregation = if s.annotation.extra_answers.len() == 9 {
            aggregated += 1;
            let agg = aggregate_vqa_answers(&s.annotation.answer, &s.annotation.extra_answers)?;
            if agg.retained {
                retained += 1;
            }
            Some(agg)
        } else {
            None
        };
        out_rows.push(VQAOut {
            sample: s,
            aggregation,
        });
    }
    write_jsonl(&dir.join("vqa.jsonl"), &header(loaded), &out_rows)?;
    println!(
        "sample-dce: {} categories, {} cls, {} loc, {} vqa ({aggregated} aggregated, {retained} retained) -> {}",
        categories.len(),
        cls.len(),
        loc.len(),
        vqa.len(),
        dir.display()
    );
    Ok(())
}
