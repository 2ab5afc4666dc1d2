//! Label-efficiency sweep: how each model's accuracy degrades as the
//! labeled training pool shrinks, with the unlabeled pool and test set held
//! fixed.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    build_seed_data, partition_digest, run_baselines_for_seed, ExperimentConfig, HarnessError,
    SeedData, MODEL_NAMES, REPORT_SCHEMA,
};
use crate::features::{
    class_counts, stratified_allocation, EpisodeSplit, LabeledSample, CLASS_COUNT,
};

/// One (model, labeled-size, seed) measurement, with the seed-aggregated
/// mean and spread for its (model, size) group repeated for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Model name (`MODEL_NAMES` entry).
    pub model: String,
    /// Labeled training-pool size (support plus query) after subsampling.
    pub labeled_size: usize,
    /// Experiment seed.
    pub seed: u64,
    /// Average (macro) accuracy on the fixed test set.
    pub accuracy: f64,
    /// Seed-mean accuracy of this row's (model, size) group.
    pub mean_accuracy: f64,
    /// Population spread of this row's (model, size) group.
    pub spread: f64,
}

/// A full sweep: rows in model-major, then size, then seed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSweep {
    /// Report format version.
    pub schema: u32,
    /// Echo of the experiment configuration.
    pub config: ExperimentConfig,
    /// The labeled sizes evaluated, in request order.
    pub sizes: Vec<usize>,
    /// `MODEL_NAMES.len() × sizes.len() × seeds.len()` rows.
    pub rows: Vec<SweepRow>,
    /// Wall-clock seconds (in-memory only).
    #[serde(skip_serializing, default)]
    pub wall_clock_seconds: f64,
}

impl SizeSweep {
    /// Seed-mean accuracy for one (model, size) cell.
    pub fn mean_accuracy(&self, model: &str, size: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.labeled_size == size)
            .map(|r| r.mean_accuracy)
    }

    /// Plot-ready CSV with a fixed header:
    /// `model,labeled_size,seed,accuracy,mean_accuracy,spread`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,labeled_size,seed,accuracy,mean_accuracy,spread\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.model, r.labeled_size, r.seed, r.accuracy, r.mean_accuracy, r.spread
            ));
        }
        out
    }
}

/// Deterministic per-(seed, size) shuffle seed for the subsampling draw.
fn derive_subsample_seed(seed: u64, size: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(size as u64)
}

/// Shrinks the labeled training pool to the per-class allocation.
///
/// Per class, candidates are the support samples followed by the query
/// samples in split order. Taking the whole class keeps the original
/// support/query membership bit-for-bit (so a full-size sweep reproduces
/// the unshrunk experiment exactly); a strict subset is drawn by seeded
/// shuffle and re-divided, support first (rounded up).
fn shrink_train(
    support: &[LabeledSample],
    query: &[LabeledSample],
    alloc: &[usize; CLASS_COUNT],
    shuffle_seed: u64,
) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut new_support = Vec::new();
    let mut new_query = Vec::new();
    for k in 0..CLASS_COUNT {
        let from_support: Vec<&LabeledSample> =
            support.iter().filter(|s| s.y.index() == k).collect();
        let from_query: Vec<&LabeledSample> = query.iter().filter(|s| s.y.index() == k).collect();
        let available = from_support.len() + from_query.len();
        let take = alloc[k];
        if take == available {
            new_support.extend(from_support.iter().map(|s| (*s).clone()));
            new_query.extend(from_query.iter().map(|s| (*s).clone()));
            continue;
        }
        let members: Vec<&LabeledSample> = from_support.into_iter().chain(from_query).collect();
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.shuffle(&mut rng);
        let n_support = take.div_ceil(2);
        for (rank, &i) in order.iter().take(take).enumerate() {
            if rank < n_support {
                new_support.push(members[i].clone());
            } else {
                new_query.push(members[i].clone());
            }
        }
    }
    (new_support, new_query)
}

/// Evaluates all four models at each labeled-pool size.
///
/// The unlabeled pool and the test set never shrink; only the labeled
/// support/query pool is subsampled (class-stratified, largest-remainder).
/// At the full size the subsample is the identity, so those rows reproduce
/// the unshrunk experiments exactly.
pub fn run_size_sweep(cfg: &ExperimentConfig, sizes: &[usize]) -> Result<SizeSweep, HarnessError> {
    cfg.validate()?;
    let bad = |detail: String| Err(HarnessError::BadConfig { detail });
    if sizes.is_empty() {
        return bad("at least one labeled size is required".to_string());
    }
    let started = Instant::now();

    // Per-seed, per-size results in MODEL_NAMES order.
    use rayon::prelude::*;
    let per_seed: Vec<Vec<[f64; 4]>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<[f64; 4]>, HarnessError> {
            let data = build_seed_data(cfg, seed)?;
            let combined = {
                let mut totals = class_counts(&data.split.support);
                let query_counts = class_counts(&data.split.query);
                for (t, q) in totals.iter_mut().zip(query_counts) {
                    *t += q;
                }
                totals
            };
            let total: usize = combined.iter().sum();
            sizes
                .iter()
                .map(|&size| -> Result<[f64; 4], HarnessError> {
                    if size == 0 || size > total {
                        return Err(HarnessError::BadConfig {
                            detail: format!(
                                "labeled size {size} outside the available pool of {total}"
                            ),
                        });
                    }
                    let alloc = stratified_allocation(combined, size);
                    for (k, (&a, &have)) in alloc.iter().zip(&combined).enumerate() {
                        if have > 0 && a == 0 {
                            return Err(HarnessError::BadConfig {
                                detail: format!(
                                    "labeled size {size} leaves class {} without any sample",
                                    k + 1
                                ),
                            });
                        }
                    }
                    let (support, query) = shrink_train(
                        &data.split.support,
                        &data.split.query,
                        &alloc,
                        derive_subsample_seed(seed, size),
                    );
                    let split = EpisodeSplit {
                        support,
                        query,
                        unlabeled: data.split.unlabeled.clone(),
                        test: data.split.test.clone(),
                    };
                    let digest = partition_digest(&split);
                    let shrunk = SeedData { split, digest };
                    let results = run_baselines_for_seed(cfg, &shrunk, seed)?;
                    Ok([
                        results[0].average_accuracy,
                        results[1].average_accuracy,
                        results[2].average_accuracy,
                        results[3].average_accuracy,
                    ])
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    // Rearrange into model-major rows with per-(model, size) aggregates.
    let mut rows = Vec::with_capacity(MODEL_NAMES.len() * sizes.len() * cfg.seeds.len());
    for (m, model) in MODEL_NAMES.iter().enumerate() {
        for (si, &size) in sizes.iter().enumerate() {
            let group: Vec<f64> = per_seed.iter().map(|by_size| by_size[si][m]).collect();
            let (mean_accuracy, spread) = super::mean_and_spread(&group);
            for (seed_idx, &seed) in cfg.seeds.iter().enumerate() {
                rows.push(SweepRow {
                    model: model.to_string(),
                    labeled_size: size,
                    seed,
                    accuracy: group[seed_idx],
                    mean_accuracy,
                    spread,
                });
            }
        }
    }

    Ok(SizeSweep {
        schema: REPORT_SCHEMA,
        config: cfg.clone(),
        sizes: sizes.to_vec(),
        rows,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::mini_config;
    use super::super::{report_to_json_bytes, run_main_experiment};
    use super::*;

    #[test]
    fn full_size_shrink_is_the_identity() {
        let cfg = mini_config();
        let data = build_seed_data(&cfg, 0).unwrap();
        let combined = [4usize; CLASS_COUNT];
        let (support, query) = shrink_train(
            &data.split.support,
            &data.split.query,
            &combined.map(|_| 4),
            derive_subsample_seed(0, 28),
        );
        let ids = |v: &[LabeledSample]| v.iter().map(|s| s.id).collect::<Vec<_>>();
        assert_eq!(ids(&support), ids(&data.split.support));
        assert_eq!(ids(&query), ids(&data.split.query));
    }

    #[test]
    fn partial_shrink_is_a_stratified_deterministic_subset() {
        let cfg = mini_config();
        let data = build_seed_data(&cfg, 0).unwrap();
        let alloc = [2usize; CLASS_COUNT];
        let (support, query) = shrink_train(&data.split.support, &data.split.query, &alloc, 7);
        assert_eq!(class_counts(&support), [1; CLASS_COUNT]);
        assert_eq!(class_counts(&query), [1; CLASS_COUNT]);
        let pool_ids: std::collections::BTreeSet<u64> = data
            .split
            .support
            .iter()
            .chain(&data.split.query)
            .map(|s| s.id)
            .collect();
        for s in support.iter().chain(&query) {
            assert!(pool_ids.contains(&s.id));
        }
        let (support2, query2) = shrink_train(&data.split.support, &data.split.query, &alloc, 7);
        assert_eq!(support, support2);
        assert_eq!(query, query2);
        let (support3, _) = shrink_train(&data.split.support, &data.split.query, &alloc, 8);
        assert_ne!(support, support3, "different draw seed, different subset");
    }

    #[test]
    fn sweep_rows_are_structured_and_full_size_matches_the_weak_arm() {
        let cfg = mini_config();
        let sweep = run_size_sweep(&cfg, &[28, 14]).unwrap();
        assert_eq!(sweep.rows.len(), 4 * 2 * 2);
        let csv = sweep.to_csv();
        assert_eq!(csv.lines().count(), 4 * 2 * 2 + 1);
        assert_eq!(
            csv.lines().next().unwrap(),
            "model,labeled_size,seed,accuracy,mean_accuracy,spread"
        );

        let (_, weak) = run_main_experiment(&cfg).unwrap();
        for seed_result in &weak.seeds {
            let row = sweep
                .rows
                .iter()
                .find(|r| r.model == "rln" && r.labeled_size == 28 && r.seed == seed_result.seed)
                .unwrap();
            assert_eq!(
                row.accuracy, seed_result.average_accuracy,
                "full-size sweep must reproduce the weak arm bit-for-bit"
            );
        }

        // Byte-reproducible like every other report.
        let sweep2 = run_size_sweep(&cfg, &[28, 14]).unwrap();
        assert_eq!(
            report_to_json_bytes(&sweep).unwrap(),
            report_to_json_bytes(&sweep2).unwrap()
        );
    }

    #[test]
    fn degenerate_sizes_are_rejected() {
        let cfg = mini_config();
        assert!(run_size_sweep(&cfg, &[]).is_err());
        assert!(run_size_sweep(&cfg, &[0]).is_err());
        assert!(run_size_sweep(&cfg, &[29]).is_err(), "beyond the pool");
        assert!(
            run_size_sweep(&cfg, &[3]).is_err(),
            "three samples cannot cover seven classes"
        );
    }
}
