//! Image-search ingestion: rate-limited, retrying, resumable URL fetch
//! behind a pluggable search-API client, persisted as a JSONL manifest.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::jsonl::{read_jsonl, write_jsonl, ArtifactHeader};
use crate::lexicon::PairQuery;

/// One retrieved image URL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub url: String,
    pub query_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub content_hash: Option<u64>,
    pub fetched_at: i64,
    pub family_friendly: bool,
}

/// Persisted fetch results with a per-query index into the record list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<ImageRecord>,
    pub query_index: HashMap<String, std::ops::Range<usize>>,
}

impl Manifest {
    pub fn from_records(records: Vec<ImageRecord>) -> Self {
        let mut m = Manifest {
            records,
            query_index: HashMap::new(),
        };
        m.rebuild_index();
        m
    }

    fn rebuild_index(&mut self) {
        self.query_index.clear();
        let mut start = 0usize;
        while start < self.records.len() {
            let qid = self.records[start].query_id.clone();
            let mut end = start;
            while end < self.records.len() && self.records[end].query_id == qid {
                end += 1;
            }
            // keep the first contiguous run per query
            self.query_index.entry(qid).or_insert(start..end);
            start = end;
        }
    }

    pub fn queries(&self) -> impl Iterator<Item = &String> {
        self.query_index.keys()
    }

    pub fn records_for(&self, query_id: &str) -> &[ImageRecord] {
        match self.query_index.get(query_id) {
            Some(range) => &self.records[range.clone()],
            None => &[],
        }
    }
}

/// One hit returned by the search API.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    #[serde(default)]
    pub metadata: String,
    #[serde(default = "default_true")]
    pub family_friendly: bool,
}

fn default_true() -> bool {
    true
}

/// The search-API endpoint contract: a query in, a page of hits out.
pub trait SearchClient: Sync {
    fn search(&self, query_text: &str, limit: usize) -> Result<Vec<SearchHit>, String>;
}

/// A recorded-fixture client: responses keyed by query text in a JSON file.
pub struct FixtureClient {
    responses: HashMap<String, Vec<SearchHit>>,
    /// Queries that fail on their first `fail_times` attempts, for retry tests.
    pub fail_times: Mutex<HashMap<String, u32>>,
}

impl FixtureClient {
    pub fn new(responses: HashMap<String, Vec<SearchHit>>) -> Self {
        FixtureClient {
            responses,
            fail_times: Mutex::new(HashMap::new()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let content = fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let responses: HashMap<String, Vec<SearchHit>> = serde_json::from_str(&content)?;
        Ok(FixtureClient::new(responses))
    }
}

impl SearchClient for FixtureClient {
    fn search(&self, query_text: &str, limit: usize) -> Result<Vec<SearchHit>, String> {
        let mut failures = self.fail_times.lock().expect("poisoned");
        if let Some(n) = failures.get_mut(query_text) {
            if *n > 0 {
                *n -= 1;
                return Err(format!("injected failure for {query_text:?}"));
            }
        }
        drop(failures);
        let hits = self.responses.get(query_text).cloned().unwrap_or_default();
        Ok(hits.into_iter().take(limit).collect())
    }
}

/// Clock abstraction so rate limiting and timestamps are testable.
pub trait Clock: Sync {
    /// Monotonic seconds.
    fn now(&self) -> f64;
    fn sleep(&self, seconds: f64);
    /// Wall-clock unix seconds recorded into ImageRecord::fetched_at.
    fn unix_time(&self) -> i64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        use std::time::Instant;
        use std::sync::OnceLock;
        static START: OnceLock<Instant> = OnceLock::new();
        START.get_or_init(Instant::now).elapsed().as_secs_f64()
    }
    fn sleep(&self, seconds: f64) {
        std::thread::sleep(Duration::from_secs_f64(seconds.max(0.0)));
    }
    fn unix_time(&self) -> i64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0)
    }
}

/// A fake clock that advances instantly on sleep; records total sleep.
#[derive(Default)]
pub struct FakeClock {
    pub time: Mutex<f64>,
}

impl Clock for FakeClock {
    fn now(&self) -> f64 {
        *self.time.lock().expect("poisoned")
    }
    fn sleep(&self, seconds: f64) {
        *self.time.lock().expect("poisoned") += seconds.max(0.0);
    }
    fn unix_time(&self) -> i64 {
        0
    }
}

/// Token-bucket rate limiter over an injected clock.
pub struct RateLimiter<'a> {
    capacity: f64,
    refill_per_sec: f64,
    tokens: Mutex<(f64, f64)>, // (tokens, last refill time)
    clock: &'a dyn Clock,
}

impl<'a> RateLimiter<'a> {
    pub fn new(rate_per_sec: f64, clock: &'a dyn Clock) -> Self {
        let capacity = rate_per_sec.max(1.0);
        RateLimiter {
            capacity,
            refill_per_sec: rate_per_sec,
            tokens: Mutex::new((capacity, clock.now())),
            clock,
        }
    }

    /// Block (via the clock) until one request token is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.tokens.lock().expect("poisoned");
                let now = self.clock.now();
                let (ref mut tokens, ref mut last) = *state;
                *tokens = (*tokens + (now - *last) * self.refill_per_sec).min(self.capacity);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                (1.0 - *tokens) / self.refill_per_sec
            };
            self.clock.sleep(wait);
        }
    }
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff_secs: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff_secs: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FetchOutcome {
    pub records: Vec<ImageRecord>,
    pub failed: bool,
}

/// Fetch up to `limit` records for one query, applying the family-friendly
/// flag and a blacklist term check on the surrounding metadata. HTTP-level
/// failures retry per policy; a query that keeps failing is marked failed
/// and the pipeline continues.
pub fn fetch_query(
    query: &PairQuery,
    limit: usize,
    client: &dyn SearchClient,
    retry: &RetryPolicy,
    limiter: &RateLimiter,
    blacklist: &HashSet<String>,
    clock: &dyn Clock,
) -> FetchOutcome {
    assert!(limit > 0, "limit must be positive");
    let mut backoff = retry.initial_backoff_secs;
    for attempt in 0..retry.attempts {
        limiter.acquire();
        match client.search(&query.query_text, limit) {
            Ok(hits) => {
                let records = hits
                    .into_iter()
                    .filter(|h| h.family_friendly)
                    .filter(|h| {
                        !h.metadata
                            .to_lowercase()
                            .split_whitespace()
                            .any(|w| blacklist.contains(w))
                    })
                    .take(limit)
                    .map(|h| ImageRecord {
                        url: h.url,
                        query_id: query.id(),
                        content_hash: None,
                        fetched_at: clock.unix_time(),
                        family_friendly: true,
                    })
                    .collect();
                return FetchOutcome {
                    records,
                    failed: false,
                };
            }
            Err(msg) => {
                eprintln!(
                    "[WARN] fetch {:?} attempt {}/{} failed: {msg}",
                    query.query_text,
                    attempt + 1,
                    retry.attempts
                );
                if attempt + 1 < retry.attempts {
                    clock.sleep(backoff);
                    backoff *= 2.0;
                }
            }
        }
    }
    FetchOutcome {
        records: Vec::new(),
        failed: true,
    }
}

/// Fetch all queries not already present in `existing` with bounded
/// parallelism, preserving query order in the output. Returns the merged
/// manifest and the ids of failed queries.
#[allow(clippy::too_many_arguments)]
pub fn fetch_missing(
    queries: &[PairQuery],
    existing: &Manifest,
    limit: usize,
    workers: usize,
    client: &dyn SearchClient,
    retry: &RetryPolicy,
    limiter: &RateLimiter,
    blacklist: &HashSet<String>,
    clock: &dyn Clock,
) -> (Manifest, Vec<String>) {
    let missing: Vec<&PairQuery> = queries
        .iter()
        .filter(|q| !existing.query_index.contains_key(&q.id()))
        .collect();
    let workers = workers.max(1).min(missing.len().max(1));

    let mut outcomes: Vec<Option<FetchOutcome>> = vec![None; missing.len()];
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            let missing = &missing;
            handles.push(scope.spawn(move || {
                let mut partial = Vec::new();
                let mut i = w;
                while i < missing.len() {
                    let outcome = fetch_query(
                        missing[i], limit, client, retry, limiter, blacklist, clock,
                    );
                    partial.push((i, outcome));
                    i += workers;
                }
                partial
            }));
        }
        for h in handles {
            for (i, outcome) in h.join().expect("fetch worker panicked") {
                outcomes[i] = Some(outcome);
            }
        }
    });

    let mut records = existing.records.clone();
    let mut failed = Vec::new();
    for (query, outcome) in missing.iter().zip(outcomes) {
        let outcome = outcome.expect("every query processed");
        if outcome.failed {
            failed.push(query.id());
        } else {
            records.extend(outcome.records);
        }
    }
    (dedup_manifest(records), failed)
}

/// Remove exact-URL duplicates within a query (first occurrence kept);
/// cross-query duplicates are retained.
pub fn dedup_manifest(records: Vec<ImageRecord>) -> Manifest {
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let deduped = records
        .into_iter()
        .filter(|r| seen.insert((r.query_id.clone(), r.url.clone())))
        .collect();
    Manifest::from_records(deduped)
}

pub fn write_manifest(
    path: &Path,
    manifest: &Manifest,
    header: &ArtifactHeader,
) -> Result<(), PipelineError> {
    write_jsonl(path, header, &manifest.records)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, PipelineError> {
    Ok(Manifest::from_records(read_jsonl(path)?))
}
