//! Experiment orchestration: seeded, reproducible comparisons of the
//! radius-gated prototype model against its own ablations and the
//! KNN/SVM/CNN baselines on simulated switchgear telemetry.
//!
//! Every experiment is a pure function of (scenario config, train config,
//! seed list). One experiment seed `s` drives the whole pipeline: the
//! simulator runs with `scenario.seed + s`, the support/query/test split is
//! shuffled with `s`, and training initializes from `s`. Arms and variants
//! inside one experiment always share the per-seed dataset and partition —
//! each report records a partition digest so that can be audited — and
//! report JSON is byte-reproducible (wall-clock time is kept in memory but
//! never serialized).

mod gradients;
mod sweep;

pub use gradients::{run_gradient_checks, GradCheckSummary};
pub use sweep::{run_size_sweep, SizeSweep, SweepRow};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    cnn_fit, cnn_predict, knn_fit, knn_predict, polynomial_features, svm_fit, svm_predict,
    BaselineError, CnnConfig,
};
use crate::features::{
    ConditionLabel, EpisodeSplit, FeatureError, LabeledSample, SplitSpec, CLASS_COUNT,
};
use crate::nnet::NnetError;
use crate::simulator::{generate_dataset, ScenarioConfig, SimError, DEFAULT_TEST_MIX};
use crate::training::{fit, predict, TrainConfig, TrainError, TrainedModel};

/// Version stamp embedded in every report.
pub const REPORT_SCHEMA: u32 = 1;

/// Default per-class support counts (half of each class's training share).
pub const DEFAULT_SUPPORT_MIX: [usize; CLASS_COUNT] = [17, 8, 12, 20, 19, 9, 15];
/// Default per-class query counts (the other half of the training share).
pub const DEFAULT_QUERY_MIX: [usize; CLASS_COUNT] = [17, 8, 12, 20, 19, 9, 15];

/// Fixed model order in baseline-comparison and size-sweep outputs.
pub const MODEL_NAMES: [&str; 4] = ["rln", "svm", "knn", "cnn"];

/// Ablation variants in report order: a name plus the configuration change
/// it applies to the complete model.
pub const ABLATION_VARIANTS: [(&str, fn(&mut TrainConfig)); 5] = [
    ("complete", |_| {}),
    ("no-feature-mapping", |c| c.use_feature_mapping = false),
    ("no-decision-radius", |c| c.all_in_radius = true),
    ("no-unsupervised-error", |c| c.lambda = 0.0),
    ("no-consistency-error", |c| c.mu = 0.0),
];

/// Errors raised while orchestrating experiments.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// The experiment configuration is unusable.
    #[error("invalid experiment setup: {detail}")]
    BadConfig { detail: String },
    /// Dataset generation failed for one seed.
    #[error("simulation failed for seed {seed}: {source}")]
    Sim {
        seed: u64,
        #[source]
        source: SimError,
    },
    /// Splitting the labeled pool failed for one seed.
    #[error("data split failed for seed {seed}: {source}")]
    Split {
        seed: u64,
        #[source]
        source: FeatureError,
    },
    /// Training failed, with the arm/variant and seed where it happened.
    #[error("training '{arm}' failed for seed {seed}: {source}")]
    Train {
        arm: String,
        seed: u64,
        #[source]
        source: TrainError,
    },
    /// A baseline failed, with the model and seed where it happened.
    #[error("baseline '{model}' failed for seed {seed}: {source}")]
    Baseline {
        model: String,
        seed: u64,
        #[source]
        source: BaselineError,
    },
    /// A report failed its own consistency checks.
    #[error("report inconsistency: {detail}")]
    BadReport { detail: String },
    /// Report serialization failed.
    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    TrainOp(#[from] TrainError),
}

/// Everything one experiment run needs: data scenario, model and baseline
/// hyperparameters, the labeled split, and the seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Synthetic telemetry scenario; per-seed runs offset its seed.
    pub scenario: ScenarioConfig,
    /// Training hyperparameters for the main model (the weak-supervision
    /// arm uses these unchanged; other arms derive from them).
    pub train: TrainConfig,
    /// How the labeled pool divides into support/query/test.
    pub split: SplitSpec,
    /// CNN baseline hyperparameters.
    pub cnn: CnnConfig,
    /// Neighbor count for the KNN baseline.
    pub knn_k: usize,
    /// Regularization constant for the SVM baseline.
    pub svm_reg: f64,
    /// Subgradient epochs for the SVM baseline.
    pub svm_epochs: usize,
    /// Experiment seeds; every arm/variant runs once per seed.
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioConfig::default(),
            train: TrainConfig::default(),
            split: SplitSpec::Counts {
                support: DEFAULT_SUPPORT_MIX,
                query: DEFAULT_QUERY_MIX,
                test: DEFAULT_TEST_MIX,
            },
            cnn: CnnConfig::default(),
            knn_k: 10,
            svm_reg: 1e-3,
            svm_epochs: 200,
            seeds: (0..10).collect(),
        }
    }
}

impl ExperimentConfig {
    /// Checks the whole bundle, including cross-field consistency between
    /// the split counts and the scenario's labeled pool.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |detail: String| Err(HarnessError::BadConfig { detail });
        self.scenario
            .validate()
            .map_err(|e| HarnessError::BadConfig {
                detail: format!("scenario: {e}"),
            })?;
        self.train.validate().map_err(|e| HarnessError::BadConfig {
            detail: format!("training: {e}"),
        })?;
        self.cnn.validate().map_err(|e| HarnessError::BadConfig {
            detail: format!("cnn baseline: {e}"),
        })?;
        if self.seeds.is_empty() {
            return bad("at least one seed is required".to_string());
        }
        if self.knn_k == 0 {
            return bad("knn neighbor count must be at least 1".to_string());
        }
        if !(self.svm_reg > 0.0 && self.svm_reg.is_finite()) {
            return bad(format!(
                "svm regularization must be positive and finite, got {}",
                self.svm_reg
            ));
        }
        if let SplitSpec::Counts {
            support,
            query,
            test,
        } = &self.split
        {
            for k in 0..CLASS_COUNT {
                let requested = support[k] + query[k] + test[k];
                if requested > self.scenario.labeled_counts[k] {
                    return bad(format!(
                        "split requests {requested} class-{} samples but the scenario labels {}",
                        k + 1,
                        self.scenario.labeled_counts[k]
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One seed's outcome for one model/arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    /// The experiment seed.
    pub seed: u64,
    /// Digest of the support/query/test/unlabeled partition this seed used.
    pub partition_digest: String,
    /// Test confusion counts: rows are true classes, columns predictions.
    pub confusion: [[usize; CLASS_COUNT]; CLASS_COUNT],
    /// Per-class recall (diagonal over row sum; 0 for absent classes).
    pub per_class_accuracy: [f64; CLASS_COUNT],
    /// Trace over total count.
    pub overall_accuracy: f64,
    /// Mean of the per-class accuracies over classes present in the test
    /// set (the headline "average accuracy").
    pub average_accuracy: f64,
}

impl SeedResult {
    /// Derives all accuracy figures from a confusion matrix.
    pub fn from_confusion(
        seed: u64,
        partition_digest: String,
        confusion: [[usize; CLASS_COUNT]; CLASS_COUNT],
    ) -> Self {
        SeedResult {
            seed,
            partition_digest,
            confusion,
            per_class_accuracy: per_class_accuracy(&confusion),
            overall_accuracy: overall_accuracy(&confusion),
            average_accuracy: average_accuracy(&confusion),
        }
    }
}

/// Aggregated outcome of one arm/variant/model across all seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Report format version.
    pub schema: u32,
    /// Arm, variant, or model name.
    pub name: String,
    /// Echo of the full experiment configuration.
    pub config: ExperimentConfig,
    /// The training configuration this arm actually ran with (per-seed runs
    /// override only its seed); absent for baselines that do not train the
    /// main model.
    pub effective_train: Option<TrainConfig>,
    /// One entry per experiment seed, in seed-list order.
    pub seeds: Vec<SeedResult>,
    /// Element-wise sum of the per-seed confusion matrices.
    pub confusion_total: [[usize; CLASS_COUNT]; CLASS_COUNT],
    /// Per-class accuracy averaged over seeds.
    pub per_class_mean: [f64; CLASS_COUNT],
    /// Mean and population spread of the overall accuracy across seeds.
    pub mean_overall_accuracy: f64,
    pub spread_overall_accuracy: f64,
    /// Mean and population spread of the average (macro) accuracy.
    pub mean_average_accuracy: f64,
    pub spread_average_accuracy: f64,
    /// Wall-clock seconds for the producing run. Never serialized, so
    /// report bytes stay reproducible; reloaded reports read 0.
    #[serde(skip_serializing, default)]
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    /// Verifies the arithmetic identities every report must satisfy:
    /// accuracies derive from the confusion matrices, the total matrix is
    /// the sum of the per-seed ones, and means/spreads match the per-seed
    /// values.
    pub fn check_consistency(&self) -> Result<(), HarnessError> {
        let fail = |detail: String| Err(HarnessError::BadReport { detail });
        let mut total = [[0usize; CLASS_COUNT]; CLASS_COUNT];
        for s in &self.seeds {
            let expect = SeedResult::from_confusion(
                s.seed,
                s.partition_digest.clone(),
                s.confusion,
            );
            if expect != *s {
                return fail(format!(
                    "seed {} accuracies do not derive from its confusion matrix",
                    s.seed
                ));
            }
            for (t, row) in total.iter_mut().zip(&s.confusion) {
                for (t, v) in t.iter_mut().zip(row) {
                    *t += v;
                }
            }
        }
        if total != self.confusion_total {
            return fail("confusion_total is not the sum of per-seed matrices".to_string());
        }
        let overall: Vec<f64> = self.seeds.iter().map(|s| s.overall_accuracy).collect();
        let average: Vec<f64> = self.seeds.iter().map(|s| s.average_accuracy).collect();
        let (mo, so) = mean_and_spread(&overall);
        let (ma, sa) = mean_and_spread(&average);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        if !(close(mo, self.mean_overall_accuracy)
            && close(so, self.spread_overall_accuracy)
            && close(ma, self.mean_average_accuracy)
            && close(sa, self.spread_average_accuracy))
        {
            return fail("summary statistics do not match the per-seed results".to_string());
        }
        for k in 0..CLASS_COUNT {
            let mean = self.seeds.iter().map(|s| s.per_class_accuracy[k]).sum::<f64>()
                / self.seeds.len().max(1) as f64;
            if !close(mean, self.per_class_mean[k]) {
                return fail(format!("per-class mean for class {} is wrong", k + 1));
            }
        }
        Ok(())
    }

    /// Verifies that every seed's confusion rows sum to the expected
    /// per-class test counts.
    pub fn check_test_counts(
        &self,
        expected: [usize; CLASS_COUNT],
    ) -> Result<(), HarnessError> {
        for s in &self.seeds {
            for (k, row) in s.confusion.iter().enumerate() {
                let sum: usize = row.iter().sum();
                if sum != expected[k] {
                    return Err(HarnessError::BadReport {
                        detail: format!(
                            "seed {}: class {} row sums to {sum}, test holds {}",
                            s.seed,
                            k + 1,
                            expected[k]
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Trace over total; 0 for an empty matrix.
pub fn overall_accuracy(m: &[[usize; CLASS_COUNT]; CLASS_COUNT]) -> f64 {
    let total: usize = m.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let trace: usize = (0..CLASS_COUNT).map(|k| m[k][k]).sum();
    trace as f64 / total as f64
}

/// Per-class recall: diagonal over row sum, 0 for classes with no test
/// samples.
pub fn per_class_accuracy(m: &[[usize; CLASS_COUNT]; CLASS_COUNT]) -> [f64; CLASS_COUNT] {
    let mut out = [0.0; CLASS_COUNT];
    for (k, row) in m.iter().enumerate() {
        let sum: usize = row.iter().sum();
        if sum > 0 {
            out[k] = m[k][k] as f64 / sum as f64;
        }
    }
    out
}

/// Mean per-class recall over the classes that appear in the test set.
pub fn average_accuracy(m: &[[usize; CLASS_COUNT]; CLASS_COUNT]) -> f64 {
    let mut sum = 0.0;
    let mut present = 0usize;
    for (k, row) in m.iter().enumerate() {
        let count: usize = row.iter().sum();
        if count > 0 {
            sum += m[k][k] as f64 / count as f64;
            present += 1;
        }
    }
    if present == 0 {
        0.0
    } else {
        sum / present as f64
    }
}

/// Mean and population standard deviation.
fn mean_and_spread(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// 64-bit FNV-1a over a canonical encoding of the partition: section tags,
/// labeled ids/classes/feature bits, and unlabeled feature bits. Equal
/// digests across arms certify they trained on the same data split.
pub fn partition_digest(split: &EpisodeSplit) -> String {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(PRIME);
        }
    };
    let eat_labeled = |tag: &[u8], samples: &[LabeledSample], eat: &mut dyn FnMut(&[u8])| {
        eat(tag);
        for s in samples {
            eat(&s.id.to_le_bytes());
            eat(&[s.y.class()]);
            for v in s.x.to_array() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
    };
    eat_labeled(b"support", &split.support, &mut eat);
    eat_labeled(b"query", &split.query, &mut eat);
    eat_labeled(b"test", &split.test, &mut eat);
    eat(b"unlabeled");
    for x in &split.unlabeled {
        for v in x.to_array() {
            eat(&v.to_bits().to_le_bytes());
        }
    }
    format!("{hash:016x}")
}

/// The per-seed dataset every arm of an experiment shares.
struct SeedData {
    split: EpisodeSplit,
    digest: String,
}

/// Generates and splits one seed's dataset: the simulator seed is offset by
/// the experiment seed, the split shuffle uses the experiment seed itself.
fn build_seed_data(cfg: &ExperimentConfig, seed: u64) -> Result<SeedData, HarnessError> {
    let mut scenario = cfg.scenario.clone();
    scenario.seed = cfg.scenario.seed.wrapping_add(seed);
    let data = generate_dataset(&scenario).map_err(|source| HarnessError::Sim { seed, source })?;
    let split = crate::features::split_dataset(&data.labeled, &data.unlabeled, &cfg.split, seed)
        .map_err(|source| HarnessError::Split { seed, source })?;
    let digest = partition_digest(&split);
    Ok(SeedData { split, digest })
}

/// Trains one arm: the base configuration with only the seed overridden.
fn fit_rln(
    split: &EpisodeSplit,
    base: &TrainConfig,
    seed: u64,
    arm: &str,
) -> Result<TrainedModel, HarnessError> {
    let mut config = base.clone();
    config.seed = seed;
    fit(split, &config).map_err(|source| HarnessError::Train {
        arm: arm.to_string(),
        seed,
        source,
    })
}

/// Confusion matrix of a predictor over the test set (rows: true class).
fn confusion_matrix<F>(
    test: &[LabeledSample],
    mut predictor: F,
) -> Result<[[usize; CLASS_COUNT]; CLASS_COUNT], HarnessError>
where
    F: FnMut(&LabeledSample) -> Result<ConditionLabel, HarnessError>,
{
    let mut m = [[0usize; CLASS_COUNT]; CLASS_COUNT];
    for sample in test {
        let predicted = predictor(sample)?;
        m[sample.y.index()][predicted.index()] += 1;
    }
    Ok(m)
}

fn evaluate_rln(
    model: &TrainedModel,
    data: &SeedData,
    seed: u64,
    arm: &str,
) -> Result<SeedResult, HarnessError> {
    let confusion = confusion_matrix(&data.split.test, |s| {
        predict(model, &s.x)
            .map(|(label, _)| label)
            .map_err(|source| HarnessError::Train {
                arm: arm.to_string(),
                seed,
                source,
            })
    })?;
    Ok(SeedResult::from_confusion(seed, data.digest.clone(), confusion))
}

/// Builds a report from per-seed results (already in seed-list order).
fn assemble_report(
    name: &str,
    cfg: &ExperimentConfig,
    effective_train: Option<TrainConfig>,
    seeds: Vec<SeedResult>,
    wall_clock_seconds: f64,
) -> ExperimentReport {
    let mut confusion_total = [[0usize; CLASS_COUNT]; CLASS_COUNT];
    for s in &seeds {
        for (t, row) in confusion_total.iter_mut().zip(&s.confusion) {
            for (t, v) in t.iter_mut().zip(row) {
                *t += v;
            }
        }
    }
    let mut per_class_mean = [0.0; CLASS_COUNT];
    if !seeds.is_empty() {
        for k in 0..CLASS_COUNT {
            per_class_mean[k] = seeds.iter().map(|s| s.per_class_accuracy[k]).sum::<f64>()
                / seeds.len() as f64;
        }
    }
    let overall: Vec<f64> = seeds.iter().map(|s| s.overall_accuracy).collect();
    let average: Vec<f64> = seeds.iter().map(|s| s.average_accuracy).collect();
    let (mean_overall_accuracy, spread_overall_accuracy) = mean_and_spread(&overall);
    let (mean_average_accuracy, spread_average_accuracy) = mean_and_spread(&average);
    ExperimentReport {
        schema: REPORT_SCHEMA,
        name: name.to_string(),
        config: cfg.clone(),
        effective_train,
        seeds,
        confusion_total,
        per_class_mean,
        mean_overall_accuracy,
        spread_overall_accuracy,
        mean_average_accuracy,
        spread_average_accuracy,
        wall_clock_seconds,
    }
}

/// Compares labeled-only training against the full semi-supervised method.
///
/// The strong arm trains with `λ = μ = 0` and an empty unlabeled pool; the
/// weak arm trains the complete method. Both arms share each seed's dataset
/// and partition (equal digests), differing only in whether the unlabeled
/// pool is exploited.
pub fn run_main_experiment(
    cfg: &ExperimentConfig,
) -> Result<(ExperimentReport, ExperimentReport), HarnessError> {
    cfg.validate()?;
    let started = Instant::now();

    let mut strong_train = cfg.train.clone();
    strong_train.lambda = 0.0;
    strong_train.mu = 0.0;

    let per_seed: Vec<(SeedResult, SeedResult)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<(SeedResult, SeedResult), HarnessError> {
            let data = build_seed_data(cfg, seed)?;
            let strong_split = EpisodeSplit {
                unlabeled: Vec::new(),
                ..data.split.clone()
            };
            let strong_model = fit_rln(&strong_split, &strong_train, seed, "strong-supervision")?;
            let strong = evaluate_rln(&strong_model, &data, seed, "strong-supervision")?;
            let weak_model = fit_rln(&data.split, &cfg.train, seed, "weak-supervision")?;
            let weak = evaluate_rln(&weak_model, &data, seed, "weak-supervision")?;
            assert_eq!(
                strong.partition_digest, weak.partition_digest,
                "arms must share the data partition"
            );
            Ok((strong, weak))
        })
        .collect::<Result<_, _>>()?;

    let (strong_results, weak_results): (Vec<_>, Vec<_>) = per_seed.into_iter().unzip();
    let wall = started.elapsed().as_secs_f64();
    let strong = assemble_report(
        "strong-supervision",
        cfg,
        Some(strong_train),
        strong_results,
        wall,
    );
    let weak = assemble_report(
        "weak-supervision",
        cfg,
        Some(cfg.train.clone()),
        weak_results,
        wall,
    );
    Ok((strong, weak))
}

/// Runs the five ablation variants on identical per-seed data partitions.
///
/// Reports come back in `ABLATION_VARIANTS` order: the complete model first,
/// then one variant per removed ingredient.
pub fn run_ablations(
    cfg: &ExperimentConfig,
) -> Result<Vec<(String, ExperimentReport)>, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();

    let per_seed: Vec<Vec<SeedResult>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<SeedResult>, HarnessError> {
            let data = build_seed_data(cfg, seed)?;
            ABLATION_VARIANTS
                .iter()
                .map(|(name, tweak)| {
                    let mut train = cfg.train.clone();
                    tweak(&mut train);
                    let model = fit_rln(&data.split, &train, seed, name)?;
                    evaluate_rln(&model, &data, seed, name)
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let wall = started.elapsed().as_secs_f64();
    let mut reports = Vec::with_capacity(ABLATION_VARIANTS.len());
    for (v, (name, tweak)) in ABLATION_VARIANTS.iter().enumerate() {
        let results: Vec<SeedResult> = per_seed.iter().map(|seeds| seeds[v].clone()).collect();
        let mut train = cfg.train.clone();
        tweak(&mut train);
        reports.push((
            name.to_string(),
            assemble_report(name, cfg, Some(train), results, wall),
        ));
    }
    Ok(reports)
}

/// Per-seed artifacts of a baseline comparison, in `MODEL_NAMES` order.
type BaselineSeedResults = [SeedResult; 4];

/// Compares the full model with the three baselines on identical splits.
///
/// KNN and SVM consume feature vectors mapped by the trained model's
/// encoder (its normalization plus feature-mapping network); the CNN
/// consumes the raw 24-dimensional records. Reports come back in
/// `MODEL_NAMES` order.
pub fn run_baseline_comparison(cfg: &ExperimentConfig) -> Result<BaselineComparison, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();

    let per_seed: Vec<BaselineSeedResults> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<BaselineSeedResults, HarnessError> {
            let data = build_seed_data(cfg, seed)?;
            run_baselines_for_seed(cfg, &data, seed)
        })
        .collect::<Result<_, _>>()?;

    let wall = started.elapsed().as_secs_f64();
    let mut models = Vec::with_capacity(MODEL_NAMES.len());
    for (m, name) in MODEL_NAMES.iter().enumerate() {
        let results: Vec<SeedResult> = per_seed.iter().map(|r| r[m].clone()).collect();
        let effective_train = (*name == "rln").then(|| cfg.train.clone());
        models.push(assemble_report(name, cfg, effective_train, results, wall));
    }
    Ok(BaselineComparison {
        schema: REPORT_SCHEMA,
        config: cfg.clone(),
        models,
        wall_clock_seconds: wall,
    })
}

/// Trains and evaluates all four models on one seed's shared partition.
fn run_baselines_for_seed(
    cfg: &ExperimentConfig,
    data: &SeedData,
    seed: u64,
) -> Result<BaselineSeedResults, HarnessError> {
    let split = &data.split;
    let model = fit_rln(split, &cfg.train, seed, "rln")?;
    let rln = evaluate_rln(&model, data, seed, "rln")?;

    // Labeled training pool for every baseline: support plus query.
    let train_pool: Vec<&LabeledSample> = split.support.iter().chain(&split.query).collect();

    let baseline_err = |model: &str, seed: u64| {
        let model = model.to_string();
        move |source: BaselineError| HarnessError::Baseline {
            model: model.clone(),
            seed,
            source,
        }
    };
    let embed_err = |model: &str, seed: u64| {
        let model = model.to_string();
        move |source: TrainError| HarnessError::Train {
            arm: format!("{model} feature mapping"),
            seed,
            source,
        }
    };

    // KNN and SVM see the encoder-mapped representation.
    let mapped_train: Vec<(Vec<f64>, ConditionLabel)> = train_pool
        .iter()
        .map(|s| Ok((model.embed(&s.x).map_err(embed_err("knn/svm", seed))?, s.y)))
        .collect::<Result<_, HarnessError>>()?;

    let knn_model = knn_fit(&mapped_train, cfg.knn_k).map_err(baseline_err("knn", seed))?;
    let knn_confusion = confusion_matrix(&split.test, |s| {
        let v = model.embed(&s.x).map_err(embed_err("knn", seed))?;
        knn_predict(&knn_model, &v).map_err(baseline_err("knn", seed))
    })?;
    let knn = SeedResult::from_confusion(seed, data.digest.clone(), knn_confusion);

    let svm_train: Vec<(Vec<f64>, ConditionLabel)> = mapped_train
        .iter()
        .map(|(v, y)| (polynomial_features(v), *y))
        .collect();
    let svm_model =
        svm_fit(&svm_train, cfg.svm_reg, cfg.svm_epochs).map_err(baseline_err("svm", seed))?;
    let svm_confusion = confusion_matrix(&split.test, |s| {
        let v = model.embed(&s.x).map_err(embed_err("svm", seed))?;
        svm_predict(&svm_model, &polynomial_features(&v)).map_err(baseline_err("svm", seed))
    })?;
    let svm = SeedResult::from_confusion(seed, data.digest.clone(), svm_confusion);

    // The CNN trains on raw records with its own internal scaling.
    let cnn_train: Vec<LabeledSample> = train_pool.iter().map(|s| (*s).clone()).collect();
    let cnn_config = CnnConfig {
        seed,
        ..cfg.cnn
    };
    let cnn_model = cnn_fit(&cnn_train, &cnn_config).map_err(baseline_err("cnn", seed))?;
    let cnn_confusion = confusion_matrix(&split.test, |s| {
        cnn_predict(&cnn_model, &s.x).map_err(baseline_err("cnn", seed))
    })?;
    let cnn = SeedResult::from_confusion(seed, data.digest.clone(), cnn_confusion);

    Ok([rln, svm, knn, cnn])
}

/// Side-by-side reports for the four models plus the Table-style CSV view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    /// Report format version.
    pub schema: u32,
    /// Echo of the experiment configuration.
    pub config: ExperimentConfig,
    /// One report per model, in `MODEL_NAMES` order.
    pub models: Vec<ExperimentReport>,
    /// Wall-clock seconds (in-memory only; see `ExperimentReport`).
    #[serde(skip_serializing, default)]
    pub wall_clock_seconds: f64,
}

impl BaselineComparison {
    /// The report for one model name, if present.
    pub fn report(&self, name: &str) -> Option<&ExperimentReport> {
        self.models.iter().find(|r| r.name == name)
    }

    /// Plot-ready per-class accuracy table: one row per class plus an
    /// `average` row, one column per model, values are seed means.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for name in MODEL_NAMES {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for k in 0..CLASS_COUNT {
            out.push_str(&format!("{}", k + 1));
            for model in &self.models {
                out.push_str(&format!(",{}", model.per_class_mean[k]));
            }
            out.push('\n');
        }
        out.push_str("average");
        for model in &self.models {
            out.push_str(&format!(",{}", model.mean_average_accuracy));
        }
        out.push('\n');
        out
    }
}

/// Serializes any report as stable, pretty-printed JSON with a trailing
/// newline — the byte-reproducible on-disk form.
pub fn report_to_json_bytes<T: Serialize>(report: &T) -> Result<Vec<u8>, HarnessError> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    Ok(bytes)
}
