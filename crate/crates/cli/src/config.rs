//! Pipeline configuration: TOML file + `--set key=value` flag overrides
//! (flags win), with a stable hash recorded into every artifact header.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A validation failure (bad config, missing input): exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub lexicon: LexiconCfg,
    pub fetch: FetchCfg,
    pub split: SplitCfg,
    pub shard: ShardCfg,
    pub schedule: ScheduleCfg,
    pub dce: DceCfg,
    pub scoring: ScoringCfg,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    // inputs
    pub concreteness: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub verbs: Option<PathBuf>,
    pub verb_exclusions: Option<PathBuf>,
    pub adjectives: Option<PathBuf>,
    pub adjective_exclusions: Option<PathBuf>,
    pub blacklist: Option<PathBuf>,
    pub votes: Option<PathBuf>,
    pub hierarchy: Option<PathBuf>,
    pub category_exclusions: Option<PathBuf>,
    pub box_annotations: Option<PathBuf>,
    pub vqa_annotations: Option<PathBuf>,
    pub seen_classes: Option<PathBuf>,
    pub val_examples: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    // artifacts
    pub lexicon: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub qa: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub retained: Option<PathBuf>,
    pub shards: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    pub dce_dir: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub scored: Option<PathBuf>,
    pub reports_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LexiconCfg {
    pub concreteness_threshold: f64,
    pub alt_sense_threshold: f64,
    pub multiword_top_k: usize,
    pub multiword_extra_cap: usize,
    pub min_pair_count: u64,
}

impl Default for LexiconCfg {
    fn default() -> Self {
        LexiconCfg {
            concreteness_threshold: 4.0,
            alt_sense_threshold: 4.5,
            multiword_top_k: 0,
            multiword_extra_cap: 0,
            min_pair_count: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FetchCfg {
    pub endpoint: String,
    pub api_key_env: String,
    pub limit: usize,
    pub workers: usize,
    pub rate_per_sec: f64,
}

impl Default for FetchCfg {
    fn default() -> Self {
        FetchCfg {
            endpoint: String::new(),
            api_key_env: "SEARCH_API_KEY".into(),
            limit: 25,
            workers: 4,
            rate_per_sec: 10.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitCfg {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub unanimous: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShardCfg {
    pub k: usize,
    pub epoch: usize,
}

impl Default for ShardCfg {
    fn default() -> Self {
        ShardCfg { k: 4, epoch: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleCfg {
    pub batch_size: usize,
    /// Example counts per training source; when empty, a single source is
    /// derived from the train split.
    pub source_sizes: Vec<usize>,
}

impl Default for ScheduleCfg {
    fn default() -> Self {
        ScheduleCfg {
            batch_size: 60,
            source_sizes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DceCfg {
    pub cls_cap: usize,
    pub loc_cap: usize,
    pub vqa_cap: usize,
}

impl Default for DceCfg {
    fn default() -> Self {
        DceCfg {
            cls_cap: 25,
            loc_cap: 25,
            vqa_cap: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringCfg {
    pub delta: f64,
    pub delta_grid_max: f64,
    pub delta_grid_step: f64,
    pub iou_threshold: f64,
    pub nms_threshold: f64,
    pub person_threshold: f64,
    pub lbl_w1: f64,
    pub lbl_w2: f64,
    pub lbl_b: f64,
}

impl Default for ScoringCfg {
    fn default() -> Self {
        ScoringCfg {
            delta: 0.0,
            delta_grid_max: 10.0,
            delta_grid_step: 0.25,
            iou_threshold: 0.5,
            nms_threshold: 0.7,
            person_threshold: 0.5,
            lbl_w1: 1.0,
            lbl_w2: -1.0,
            lbl_b: 0.0,
        }
    }
}

/// The loaded config plus the hash of its effective (post-override) form.
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub config_hash: String,
}

/// Apply one `section.key=value` override to a TOML table. Values parse
/// as TOML fragments, falling back to a string.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override {assignment:?} is not key=value")))?;
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        cur = cur
            .entry(k.to_string())
            .or_insert(toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("override path {path:?}: {k} is not a table")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Load the config file (optional: defaults apply when absent) and apply
/// flag overrides; flags win.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<LoadedConfig, ConfigError> {
    let mut table: toml::Table = match path {
        Some(p) => {
            let content = std::fs::read_to_string(p)
                .map_err(|e| ConfigError(format!("config {}: {e}", p.display())))?;
            content
                .parse()
                .map_err(|e| ConfigError(format!("config {}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let effective =
        toml::to_string(&table).map_err(|e| ConfigError(format!("config serialize: {e}")))?;
    let config: PipelineConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| ConfigError(format!("config: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(effective.as_bytes());
    let digest = hasher.finalize();
    let config_hash: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    Ok(LoadedConfig {
        config,
        config_hash,
    })
}

/// Resolve a required input path, failing with the field name.
pub fn require<'a>(field: &str, path: &'a Option<PathBuf>) -> Result<&'a Path, ConfigError> {
    let p = path
        .as_deref()
        .ok_or_else(|| ConfigError(format!("config field paths.{field} is required")))?;
    if !p.exists() {
        return Err(ConfigError(format!(
            "paths.{field}: {} does not exist",
            p.display()
        )));
    }
    Ok(p)
}

/// Resolve a required output path (parent directories are created).
pub fn require_out<'a>(field: &str, path: &'a Option<PathBuf>) -> Result<&'a Path, ConfigError> {
    let p = path
        .as_deref()
        .ok_or_else(|| ConfigError(format!("config field paths.{field} is required")))?;
    if let Some(parent) = p.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| ConfigError(format!("paths.{field}: {e}")))?;
        }
    }
    Ok(p)
}
