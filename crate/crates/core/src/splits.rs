//! Train/val/test splitting, human-verification aggregation, web-data
//! sharding, and stratified batch scheduling.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::ingest::Manifest;
use crate::text::{keyed_hash, keyed_rng, mix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_n: usize,
    pub val_n: usize,
    pub test_n: usize,
    pub seed: u64,
}

/// Identifier of one image-query pair.
pub type PairId = String;

pub fn pair_id(query_id: &str, url: &str) -> PairId {
    format!("{query_id}\t{url}")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<PairId>,
    pub val: Vec<PairId>,
    pub test: Vec<PairId>,
}

/// Partition manifest pairs into train/val/test. Assignment sorts pairs by
/// a seeded hash of (query_id, url), so membership is stable under
/// manifest reordering; the sort order itself trims to the exact requested
/// sizes deterministically.
pub fn split_pairs(manifest: &Manifest, spec: &SplitSpec) -> Result<Splits, PipelineError> {
    let total = spec.train_n + spec.val_n + spec.test_n;
    if total > manifest.records.len() {
        return Err(PipelineError::invalid(format!(
            "split sizes sum to {total} but manifest has {} pairs",
            manifest.records.len()
        )));
    }
    let mut keyed: Vec<(u64, PairId)> = manifest
        .records
        .iter()
        .map(|r| {
            let h = keyed_hash(spec.seed, &[&r.query_id, &r.url]);
            (h, pair_id(&r.query_id, &r.url))
        })
        .collect();
    keyed.sort();
    let ids: Vec<PairId> = keyed.into_iter().map(|(_, id)| id).collect();
    Ok(Splits {
        train: ids[..spec.train_n].to_vec(),
        val: ids[spec.train_n..spec.train_n + spec.val_n].to_vec(),
        test: ids[spec.train_n + spec.val_n..total].to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationVote {
    pub pair_id: PairId,
    pub worker_votes: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerificationRule {
    Unanimous,
    Majority,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationOutcome {
    pub retained: Vec<PairId>,
    pub retention_rate: f64,
}

/// Keep pairs passing the vote rule; unvoted pairs are dropped. Every vote
/// must carry exactly 3 worker votes and refer to a known pair.
pub fn apply_verification(
    pairs: &[PairId],
    votes: &[VerificationVote],
    rule: VerificationRule,
) -> Result<VerificationOutcome, PipelineError> {
    let known: std::collections::HashSet<&PairId> = pairs.iter().collect();
    let mut retained = Vec::new();
    let mut voted = 0usize;
    for vote in votes {
        if vote.worker_votes.len() != 3 {
            return Err(PipelineError::invalid(format!(
                "pair {:?} has {} votes, expected 3",
                vote.pair_id,
                vote.worker_votes.len()
            )));
        }
        if !known.contains(&vote.pair_id) {
            return Err(PipelineError::invalid(format!(
                "vote for unknown pair {:?}",
                vote.pair_id
            )));
        }
        voted += 1;
        let positives = vote.worker_votes.iter().filter(|v| **v).count();
        let keep = match rule {
            VerificationRule::Unanimous => positives == 3,
            VerificationRule::Majority => positives >= 2,
        };
        if keep {
            retained.push(vote.pair_id.clone());
        }
    }
    let retention_rate = if voted == 0 {
        0.0
    } else {
        retained.len() as f64 / voted as f64
    };
    Ok(VerificationOutcome {
        retained,
        retention_rate,
    })
}

/// Draw a seeded uniform sample of `n` pairs without replacement.
pub fn sample_pairs(pairs: &[PairId], n: usize, seed: u64) -> Vec<PairId> {
    let mut rng = keyed_rng(seed, &["verification-sample"]);
    let mut shuffled = pairs.to_vec();
    shuffled.shuffle(&mut rng);
    shuffled.truncate(n);
    shuffled
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShardAssignment {
    /// Which re-shuffle this epoch uses: epochs 0..k use partition 0,
    /// epochs k..2k use partition 1, and so on.
    pub partition_id: u64,
    pub shard_index: usize,
    pub shards: Vec<Vec<PairId>>,
}

/// Shard the web training data into `k` near-equal disjoint parts for the
/// given epoch. After `k` epochs the data is re-sharded into fresh parts.
pub fn shard(
    web_train: &[PairId],
    k: usize,
    seed: u64,
    epoch: usize,
) -> Result<ShardAssignment, PipelineError> {
    if k < 1 {
        return Err(PipelineError::invalid("shard count must be >= 1"));
    }
    let partition_id = (epoch / k) as u64;
    let mut rng = keyed_rng(mix(seed, partition_id), &["shard"]);
    let mut shuffled = web_train.to_vec();
    shuffled.shuffle(&mut rng);
    let mut shards: Vec<Vec<PairId>> = vec![Vec::new(); k];
    for (i, id) in shuffled.into_iter().enumerate() {
        shards[i % k].push(id);
    }
    Ok(ShardAssignment {
        partition_id,
        shard_index: epoch % k,
        shards,
    })
}

/// One epoch's batch schedule over multiple example sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSchedule {
    /// Each batch is a list of (source index, example index within source).
    pub batches: Vec<Vec<(usize, usize)>>,
    pub batch_size: usize,
    pub source_sizes: Vec<usize>,
}

/// Largest-remainder apportionment of `total` slots across `weights`.
fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights
        .iter()
        .map(|w| total as f64 * *w as f64 / sum as f64)
        .collect();
    let mut quotas: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        quotas[i] += 1;
    }
    quotas
}

/// Build a stratified schedule: each batch draws from every source in
/// proportion to its size, quotas by largest fractional remainder, with a
/// seeded within-source shuffle. Every example appears exactly once.
pub fn stratified_batches(
    source_sizes: &[usize],
    batch_size: usize,
    seed: u64,
) -> Result<BatchSchedule, PipelineError> {
    if batch_size == 0 {
        return Err(PipelineError::invalid("batch size must be positive"));
    }
    // per-source shuffled index streams
    let mut streams: Vec<Vec<usize>> = Vec::new();
    for (si, &n) in source_sizes.iter().enumerate() {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = keyed_rng(mix(seed, si as u64), &["schedule"]);
        idx.shuffle(&mut rng);
        streams.push(idx);
    }
    let mut cursors = vec![0usize; source_sizes.len()];
    let mut remaining: Vec<usize> = source_sizes.to_vec();
    let base_quota = apportion(batch_size, source_sizes);

    let mut batches = Vec::new();
    while remaining.iter().sum::<usize>() > 0 {
        let left: usize = remaining.iter().sum();
        let take = batch_size.min(left);
        let mut quota = if take == batch_size {
            base_quota.clone()
        } else {
            // final short batch takes whatever remains
            remaining.clone()
        };
        // clamp to availability and refill the shortfall from the sources
        // with the most remaining examples
        let mut shortfall = 0usize;
        for (q, r) in quota.iter_mut().zip(remaining.iter()) {
            if *q > *r {
                shortfall += *q - *r;
                *q = *r;
            }
        }
        while shortfall > 0 {
            let (best, _) = remaining
                .iter()
                .zip(quota.iter())
                .map(|(r, q)| r - q)
                .enumerate()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .expect("nonempty sources");
            if remaining[best] == quota[best] {
                break;
            }
            quota[best] += 1;
            shortfall -= 1;
        }

        let mut batch = Vec::with_capacity(take);
        for (si, &q) in quota.iter().enumerate() {
            for _ in 0..q {
                batch.push((si, streams[si][cursors[si]]));
                cursors[si] += 1;
                remaining[si] -= 1;
            }
        }
        batches.push(batch);
    }

    Ok(BatchSchedule {
        batches,
        batch_size,
        source_sizes: source_sizes.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{dedup_manifest, ImageRecord};

    fn manifest(n: usize) -> Manifest {
        dedup_manifest(
            (0..n)
                .map(|i| ImageRecord {
                    url: format!("http://img/{i}"),
                    query_id: format!("q{}", i % 10),
                    content_hash: None,
                    fetched_at: 0,
                    family_friendly: true,
                })
                .collect(),
        )
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let m = manifest(100);
        let spec = SplitSpec {
            train_n: 70,
            val_n: 15,
            test_n: 15,
            seed: 1,
        };
        let s = split_pairs(&m, &spec).unwrap();
        assert_eq!(s.train.len(), 70);
        assert_eq!(s.val.len(), 15);
        assert_eq!(s.test.len(), 15);
        let mut all: Vec<&PairId> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn split_zero_spec_is_empty() {
        let m = manifest(10);
        let s = split_pairs(
            &m,
            &SplitSpec {
                train_n: 0,
                val_n: 0,
                test_n: 0,
                seed: 1,
            },
        )
        .unwrap();
        assert!(s.train.is_empty() && s.val.is_empty() && s.test.is_empty());
    }

    #[test]
    fn split_infeasible_sizes_error() {
        let m = manifest(10);
        assert!(split_pairs(
            &m,
            &SplitSpec {
                train_n: 9,
                val_n: 1,
                test_n: 1,
                seed: 1
            }
        )
        .is_err());
    }

    #[test]
    fn split_stable_under_manifest_reordering() {
        let m = manifest(100);
        let mut shuffled_records = m.records.clone();
        shuffled_records.reverse();
        let m2 = Manifest::from_records(shuffled_records);
        let spec = SplitSpec {
            train_n: 50,
            val_n: 25,
            test_n: 25,
            seed: 9,
        };
        let a = split_pairs(&m, &spec).unwrap();
        let b = split_pairs(&m2, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn verification_rules() {
        let pairs: Vec<PairId> = vec!["a".into(), "b".into(), "c".into()];
        let votes = vec![
            VerificationVote {
                pair_id: "a".into(),
                worker_votes: vec![true, true, true],
            },
            VerificationVote {
                pair_id: "b".into(),
                worker_votes: vec![true, true, false],
            },
            VerificationVote {
                pair_id: "c".into(),
                worker_votes: vec![false, false, false],
            },
        ];
        let out = apply_verification(&pairs, &votes, VerificationRule::Unanimous).unwrap();
        assert_eq!(out.retained, vec!["a".to_string()]);
        assert!((out.retention_rate - 1.0 / 3.0).abs() < 1e-12);

        let out = apply_verification(&pairs, &votes, VerificationRule::Majority).unwrap();
        assert_eq!(out.retained, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn verification_rejects_bad_votes() {
        let pairs: Vec<PairId> = vec!["a".into()];
        let short = vec![VerificationVote {
            pair_id: "a".into(),
            worker_votes: vec![true, true],
        }];
        assert!(apply_verification(&pairs, &short, VerificationRule::Unanimous).is_err());
        let unknown = vec![VerificationVote {
            pair_id: "zz".into(),
            worker_votes: vec![true, true, true],
        }];
        assert!(apply_verification(&pairs, &unknown, VerificationRule::Unanimous).is_err());
    }

    #[test]
    fn shard_partitions_evenly_and_reshards() {
        let items: Vec<PairId> = (0..8).map(|i| format!("p{i}")).collect();
        let a = shard(&items, 4, 7, 0).unwrap();
        assert_eq!(a.shards.len(), 4);
        assert!(a.shards.iter().all(|s| s.len() == 2));
        let mut union: Vec<PairId> = a.shards.iter().flatten().cloned().collect();
        union.sort();
        let mut expected = items.clone();
        expected.sort();
        assert_eq!(union, expected);

        // epochs 0..3 share a partition; epoch 4 re-shards
        let e3 = shard(&items, 4, 7, 3).unwrap();
        let e4 = shard(&items, 4, 7, 4).unwrap();
        assert_eq!(a.partition_id, e3.partition_id);
        assert_eq!(a.shards, e3.shards);
        assert_ne!(e3.partition_id, e4.partition_id);
        assert_ne!(e3.shards, e4.shards);
    }

    #[test]
    fn shard_union_is_partition_for_any_k() {
        let items: Vec<PairId> = (0..23).map(|i| format!("p{i}")).collect();
        for k in 1..6 {
            let a = shard(&items, k, 1, 0).unwrap();
            let sizes: Vec<usize> = a.shards.iter().map(|s| s.len()).collect();
            let max = *sizes.iter().max().unwrap();
            let min = *sizes.iter().min().unwrap();
            assert!(max - min <= 1);
            let mut union: Vec<PairId> = a.shards.iter().flatten().cloned().collect();
            union.sort();
            let mut expected = items.clone();
            expected.sort();
            assert_eq!(union, expected);
        }
    }

    #[test]
    fn stratified_symmetric_sources() {
        let s = stratified_batches(&[60, 60], 60, 0).unwrap();
        for batch in &s.batches {
            assert_eq!(batch.len(), 60);
            let a = batch.iter().filter(|(si, _)| *si == 0).count();
            assert_eq!(a, 30);
        }
    }

    #[test]
    fn stratified_exact_proportions() {
        let s = stratified_batches(&[100, 50], 60, 0).unwrap();
        let full: Vec<_> = s.batches.iter().filter(|b| b.len() == 60).collect();
        assert!(!full.is_empty());
        for batch in full {
            let a = batch.iter().filter(|(si, _)| *si == 0).count();
            let b = batch.iter().filter(|(si, _)| *si == 1).count();
            assert_eq!((a, b), (40, 20));
        }
    }

    #[test]
    fn stratified_covers_every_example_once() {
        for sizes in [vec![7usize, 13, 0, 29], vec![1, 1, 1], vec![100, 50, 50]] {
            let s = stratified_batches(&sizes, 10, 3).unwrap();
            let mut seen: Vec<Vec<bool>> = sizes.iter().map(|&n| vec![false; n]).collect();
            for batch in &s.batches {
                for &(si, ei) in batch {
                    assert!(!seen[si][ei], "duplicate ({si},{ei})");
                    seen[si][ei] = true;
                }
            }
            assert!(seen.iter().flatten().all(|&v| v));
        }
    }

    #[test]
    fn stratified_rejects_zero_batch_size() {
        assert!(stratified_batches(&[1], 0, 0).is_err());
    }

    #[test]
    fn web_shard_third_of_each_batch() {
        // five supervised sources plus a web shard making ~1/3 of the epoch
        let sizes = [60usize, 60, 60, 60, 60, 150];
        let s = stratified_batches(&sizes, 60, 0).unwrap();
        let total: usize = sizes.iter().sum();
        let web_share = sizes[5] as f64 / total as f64;
        for batch in s.batches.iter().filter(|b| b.len() == 60) {
            let web = batch.iter().filter(|(si, _)| *si == 5).count() as f64;
            assert!((web - 60.0 * web_share).abs() <= 1.0);
        }
    }
}
