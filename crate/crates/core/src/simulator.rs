//! Synthetic switchgear telemetry.
//!
//! Draws 24-dimensional condition records for the seven operating classes.
//! Class 1 samples every feature from its configured normal range; each fault
//! class then overlays a signature — a small set of feature shifts chosen so
//! that faults are statistically separable from normal operation but overlap
//! enough under noise that classification stays non-trivial.
//!
//! The generator is a pure function of `(config, seed)`: two runs with the
//! same configuration produce identical datasets and, through
//! [`write_dataset_files`], byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    class_counts, save_dataset, ConditionLabel, DatasetFormat, DatasetRecord, FeatureError,
    FeatureVector, LabeledSample, CLASS_COUNT, FEATURE_DIM, FEATURE_NAMES,
};
use crate::nnet::standard_normal;

/// Indices of the switch-position flags, the only binary features; they are
/// never drawn from a Gaussian.
const BINARY_FEATURES: [usize; 2] = [9, 10];

/// Errors from scenario validation or dataset emission.
#[derive(Debug, Error)]
pub enum SimError {
    /// The scenario configuration is unusable.
    #[error("bad scenario: {detail}")]
    BadScenario { detail: String },
    /// Dataset I/O or record validation failed.
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Normal operating envelope of one feature: the nominal mean, the spread of
/// day-to-day variation, and hard physical bounds that no reading may leave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRange {
    /// Nominal value under normal operation.
    pub mean: f64,
    /// Standard deviation of normal variation (scaled by the noise level).
    pub spread: f64,
    /// Physical lower bound; every emitted value is clamped above it.
    pub lo: f64,
    /// Physical upper bound; every emitted value is clamped below it.
    pub hi: f64,
}

/// How one fault signature perturbs a single feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum Shift {
    /// Add a fixed offset to the normally drawn value.
    Add { amount: f64 },
    /// Overwrite the value outright (used for the binary position flags).
    Set { value: f64 },
    /// Overwrite the value with the given probability, else leave it.
    SetWithProbability { value: f64, probability: f64 },
}

/// One entry of a fault signature: which feature moves and how.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureShift {
    /// Flat feature index (0-based, in `FEATURE_NAMES` order).
    pub feature: usize,
    /// The perturbation applied after the normal draw.
    pub shift: Shift,
}

/// Full description of a synthetic data scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Labeled records to generate per class (classes 1–7 in order).
    pub labeled_counts: [usize; CLASS_COUNT],
    /// Unlabeled records to generate per class; their true classes are kept
    /// aside for evaluation only.
    pub unlabeled_counts: [usize; CLASS_COUNT],
    /// Multiplier on every feature's spread: 0 collapses each class onto its
    /// mean vector, larger values blur the classes into one another.
    pub noise_level: f64,
    /// Seed for the generator's random stream.
    pub seed: u64,
    /// Normal envelope per feature, in flat feature order.
    pub normal_ranges: [FeatureRange; FEATURE_DIM],
    /// Fault signature per class 2–7 (class 1 has none by definition).
    pub signatures: BTreeMap<u8, Vec<FeatureShift>>,
}

/// Class mix of the default labeled training pool (200 records).
pub const DEFAULT_TRAIN_MIX: [usize; CLASS_COUNT] = [34, 16, 24, 40, 38, 18, 30];
/// Class mix of the default labeled held-out pool (200 records).
pub const DEFAULT_TEST_MIX: [usize; CLASS_COUNT] = [46, 12, 20, 48, 34, 14, 26];
/// Size of the default unlabeled pool.
pub const DEFAULT_UNLABELED_TOTAL: usize = 478;

impl ScenarioConfig {
    /// The default scenario: 400 labeled records (the train and test mixes
    /// combined, split downstream) plus 478 unlabeled records whose class mix
    /// follows the labeled proportions.
    pub fn default_scenario() -> Self {
        let mut labeled_counts = [0usize; CLASS_COUNT];
        for k in 0..CLASS_COUNT {
            labeled_counts[k] = DEFAULT_TRAIN_MIX[k] + DEFAULT_TEST_MIX[k];
        }
        ScenarioConfig {
            labeled_counts,
            unlabeled_counts: proportional_counts(&labeled_counts, DEFAULT_UNLABELED_TOTAL),
            noise_level: 1.0,
            seed: 0,
            normal_ranges: default_normal_ranges(),
            signatures: default_signatures(),
        }
    }

    /// Truncation envelope of feature `i`'s normal draw: `mean ± 3σ`
    /// intersected with the physical bounds, where `σ` is the feature's total
    /// standard deviation (independent noise plus the common-mode factor's
    /// contribution) at this scenario's noise level.
    pub fn normal_envelope(&self, i: usize) -> (f64, f64) {
        let range = &self.normal_ranges[i];
        let sigma = range.spread
            * self.noise_level
            * (1.0 + COMMON_MODE_LOADINGS[i].powi(2)).sqrt();
        (
            (range.mean - 3.0 * sigma).max(range.lo),
            (range.mean + 3.0 * sigma).min(range.hi),
        )
    }

    /// Checks every number in the scenario is usable before generation.
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |detail: String| Err(SimError::BadScenario { detail });
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return bad(format!("noise level must be finite and ≥ 0, got {}", self.noise_level));
        }
        for (i, range) in self.normal_ranges.iter().enumerate() {
            let name = FEATURE_NAMES[i];
            let finite = [range.mean, range.spread, range.lo, range.hi]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return bad(format!("normal range of {name} has a non-finite entry"));
            }
            if range.spread < 0.0 {
                return bad(format!("spread of {name} must be ≥ 0, got {}", range.spread));
            }
            if range.lo > range.hi {
                return bad(format!(
                    "bounds of {name} are inverted: lo {} > hi {}",
                    range.lo, range.hi
                ));
            }
            if !(range.lo..=range.hi).contains(&range.mean) {
                return bad(format!(
                    "mean of {name} ({}) falls outside its bounds [{}, {}]",
                    range.mean, range.lo, range.hi
                ));
            }
        }
        for class in 2..=CLASS_COUNT as u8 {
            match self.signatures.get(&class) {
                None => return bad(format!("class {class} has no fault signature")),
                Some(entries) if entries.is_empty() => {
                    return bad(format!("class {class} has an empty fault signature"))
                }
                Some(entries) => {
                    for entry in entries {
                        self.validate_shift(class, entry)?;
                    }
                }
            }
        }
        if let Some(&class) = self.signatures.keys().find(|k| !(2..=7).contains(*k)) {
            return bad(format!("signature listed for nonexistent class {class}"));
        }
        Ok(())
    }

    fn validate_shift(&self, class: u8, entry: &FeatureShift) -> Result<(), SimError> {
        let bad = |detail: String| Err(SimError::BadScenario { detail });
        if entry.feature >= FEATURE_DIM {
            return bad(format!(
                "class {class} signature names feature index {} (max {})",
                entry.feature,
                FEATURE_DIM - 1
            ));
        }
        let name = FEATURE_NAMES[entry.feature];
        let binary = BINARY_FEATURES.contains(&entry.feature);
        match entry.shift {
            Shift::Add { amount } => {
                if !amount.is_finite() {
                    return bad(format!("class {class} shift of {name} is not finite"));
                }
                if binary {
                    return bad(format!(
                        "class {class} cannot add to position flag {name}; use a set shift"
                    ));
                }
            }
            Shift::Set { value } | Shift::SetWithProbability { value, .. } => {
                if !value.is_finite() {
                    return bad(format!("class {class} shift of {name} is not finite"));
                }
                if binary && value != 0.0 && value != 1.0 {
                    return bad(format!(
                        "class {class} sets position flag {name} to {value}; must be 0 or 1"
                    ));
                }
                if let Shift::SetWithProbability { probability, .. } = entry.shift {
                    if !(0.0..=1.0).contains(&probability) {
                        return bad(format!(
                            "class {class} shift of {name} has probability {probability} outside [0, 1]"
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::default_scenario()
    }
}

/// Splits `total` across classes proportionally to `weights`
/// (largest-remainder rounding; ties favor lower classes).
fn proportional_counts(weights: &[usize; CLASS_COUNT], total: usize) -> [usize; CLASS_COUNT] {
    let weight_sum: usize = weights.iter().sum();
    let mut counts = [0usize; CLASS_COUNT];
    if weight_sum == 0 {
        return counts;
    }
    let exact: Vec<f64> = weights
        .iter()
        .map(|&w| w as f64 * total as f64 / weight_sum as f64)
        .collect();
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..CLASS_COUNT).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..total - assigned {
        counts[order[i % CLASS_COUNT]] += 1;
    }
    counts
}

/// Normal envelopes for all 24 features.
///
/// Values are chosen as plausible medium-voltage switchgear telemetry:
/// outgoing-line temperatures around 42 °C, closing/opening speeds near
/// 1.1 / 1.3 m/s, strokes near 12 mm, switching times of 30 / 45 ms,
/// position flags at 1, ambient 25 °C and 60 % humidity, partial-discharge
/// ultrasound near 6 dB, motor run times of a few seconds with currents of a
/// few amperes, insulation resistance near 1 500 MΩ, and a load rate around
/// 55 % of rating.
fn default_normal_ranges() -> [FeatureRange; FEATURE_DIM] {
    let r = |mean: f64, spread: f64, lo: f64, hi: f64| FeatureRange { mean, spread, lo, hi };
    [
        // r1–r3: three-phase outgoing-line temperatures (°C).
        r(42.0, 4.0, -40.0, 300.0),
        r(42.0, 4.0, -40.0, 300.0),
        r(42.0, 4.0, -40.0, 300.0),
        // q1–q2: closing / opening speed (m/s).
        r(1.10, 0.08, 0.0, 20.0),
        r(1.30, 0.09, 0.0, 20.0),
        // q3–q4: closing / opening stroke (mm).
        r(12.0, 0.6, 0.0, 200.0),
        r(12.5, 0.6, 0.0, 200.0),
        // q5–q6: closing / opening time (ms).
        r(30.0, 2.5, 0.0, 1000.0),
        r(45.0, 3.5, 0.0, 1000.0),
        // p1–p2: breaker / ground-knife position agreement flags.
        r(1.0, 0.0, 0.0, 1.0),
        r(1.0, 0.0, 0.0, 1.0),
        // t1: ambient temperature (°C), t2: relative humidity (%).
        r(25.0, 3.0, -50.0, 80.0),
        r(60.0, 8.0, 0.0, 100.0),
        // c1–c3: ultrasonic discharge levels (dB).
        r(6.0, 2.5, 0.0, 150.0),
        r(6.0, 2.5, 0.0, 150.0),
        r(6.0, 2.5, 0.0, 150.0),
        // l1–l2: energy-storage motor run time (s) / peak current (A).
        r(5.0, 0.5, 0.0, 120.0),
        r(3.0, 0.3, 0.0, 80.0),
        // l3–l4: drive motor run time / peak current.
        r(3.0, 0.35, 0.0, 120.0),
        r(2.5, 0.25, 0.0, 80.0),
        // l5–l6: ground-cutter drive motor run time / peak current.
        r(4.0, 0.4, 0.0, 120.0),
        r(0.60, 0.15, 0.0, 80.0),
        // f: insulation resistance (MΩ).
        r(1500.0, 250.0, 0.5, 1.0e7),
        // m: equipment load rate (fraction of rating).
        r(0.55, 0.10, 0.0, 2.0),
    ]
}

/// Fault signatures for classes 2–7.
///
/// Shift magnitudes sit mostly at 2–4 normal spreads so that single features
/// rarely separate a fault on their own:
///
/// * class 2 (operating-mechanism stall): both switching speeds drop, both
///   switching times stretch, and motor run times / peak currents climb;
/// * class 3 (insulation failure): insulation resistance collapses and
///   humidity runs high;
/// * class 4 (empty-close): speeds and strokes degrade in cold ambient air;
/// * class 5 (mechanical failure): opening speed and both strokes drift
///   against an elevated load rate;
/// * class 6 (accidental tripping): the breaker flag reads abnormal (the
///   ground-knife flag half the time) and the outgoing lines overheat, the
///   A phase most of all;
/// * class 7 (secondary-equipment faults): ultrasound readings jump,
///   switching slows, and ambient temperature, humidity, and load run high.
fn default_signatures() -> BTreeMap<u8, Vec<FeatureShift>> {
    let add = |feature: usize, amount: f64| FeatureShift {
        feature,
        shift: Shift::Add { amount },
    };
    let mut table = BTreeMap::new();
    table.insert(
        2,
        vec![
            add(3, -0.22), // q1 closing speed
            add(4, -0.43), // q2 opening speed
            add(7, 8.0),   // q5 closing time
            add(8, 9.0),   // q6 opening time
            add(16, 1.5),  // l1 energy-storage motor run time
            add(17, 0.9),  // l2 energy-storage motor peak current
            add(18, 1.0),  // l3 drive motor run time
            add(21, 0.6),  // l6 ground-cutter motor peak current
        ],
    );
    table.insert(
        3,
        vec![
            add(22, -900.0), // f insulation resistance
            add(12, 20.0),   // t2 humidity
        ],
    );
    table.insert(
        4,
        vec![
            add(3, -0.25),  // q1 closing speed
            add(4, -0.30),  // q2 opening speed
            add(5, -1.8),   // q3 closing stroke
            add(6, -1.8),   // q4 opening stroke
            add(11, -9.5),  // t1 ambient temperature
        ],
    );
    table.insert(
        5,
        vec![
            add(4, 0.25), // q2 opening speed
            add(5, 1.9),  // q3 closing stroke
            add(6, -1.9), // q4 opening stroke
            add(23, 0.32), // m load rate
        ],
    );
    table.insert(
        6,
        vec![
            FeatureShift {
                feature: 9, // p1 breaker position flag
                shift: Shift::Set { value: 0.0 },
            },
            FeatureShift {
                feature: 10, // p2 ground-knife position flag
                shift: Shift::SetWithProbability {
                    value: 0.0,
                    probability: 0.5,
                },
            },
            add(0, 43.6), // r1 A-phase outgoing temperature
            add(1, 14.0), // r2
            add(2, 13.0), // r3
        ],
    );
    table.insert(
        7,
        vec![
            add(13, 12.2), // c1 breaker-compartment ultrasound
            add(14, 9.0),  // c2 busbar-compartment ultrasound
            add(15, 9.5),  // c3 cable-compartment ultrasound
            add(7, 8.1),   // q5 closing time
            add(8, 11.0),  // q6 opening time
            add(11, 8.0),  // t1 ambient temperature
            add(12, 10.0), // t2 humidity
            add(23, 0.28), // m load rate
        ],
    );
    table
}

/// The expected feature vector of one class: the normal means with the
/// class's signature applied (probabilistic overwrites contribute their
/// expectation). Because the per-record severity factor averages to 1, this
/// is the class-conditional mean at noise level 0 wherever clamping does not
/// bind, though individual records spread along the signature direction.
pub fn signature_means(config: &ScenarioConfig, class: ConditionLabel) -> [f64; FEATURE_DIM] {
    let mut values = [0.0; FEATURE_DIM];
    for (i, range) in config.normal_ranges.iter().enumerate() {
        values[i] = range.mean;
    }
    if let Some(entries) = config.signatures.get(&class.class()) {
        for entry in entries {
            let range = &config.normal_ranges[entry.feature];
            let v = &mut values[entry.feature];
            match entry.shift {
                Shift::Add { amount } => *v = (*v + amount).clamp(range.lo, range.hi),
                Shift::Set { value } => *v = value,
                Shift::SetWithProbability { value, probability } => {
                    *v = *v * (1.0 - probability) + value * probability;
                }
            }
        }
    }
    values
}

/// Lower bound of the per-record fault-severity factor.
pub const SEVERITY_LO: f64 = 0.35;
/// Upper bound of the per-record fault-severity factor.
pub const SEVERITY_HI: f64 = 1.65;
/// The accidental-tripping class, whose signature does not severity-scale.
pub const ACCIDENTAL_TRIP_CLASS: u8 = 6;

/// Per-feature loadings of the common operating-condition factor.
///
/// Real telemetry channels are not independent: ambient conditions and the
/// equipment's load move many readings together, and the swing they cause is
/// comparable to a mild fault symptom. Each record draws one standard-normal
/// factor shared by all 24 features, scaled per feature by these loadings (in
/// units of the feature's effective spread, so the factor obeys the same
/// noise-level dial as the independent noise). Thermal and electrical
/// channels ride the factor hardest, discharge readings and mechanical
/// timings more weakly, and insulation resistance moves against it (hot,
/// loaded gear measures lower). The binary position flags carry no noise at
/// all.
///
/// Per-feature marginals remain Gaussian; what the factor adds is
/// correlation. Channel by channel, a heavily loaded record is hard to tell
/// from a mildly faulty one — a hot day depresses insulation resistance and
/// raises humidity much like early insulation deterioration does — so any
/// method that treats features independently (or measures raw distances over
/// them) loses margin. The factor is identifiable from the joint pattern
/// across ~20 channels, which is what a learned feature mapping can exploit
/// to project it out.
pub const COMMON_MODE_LOADINGS: [f64; FEATURE_DIM] = [
    1.4, 1.4, 1.4, // r1–r3 outgoing-line temperatures
    1.0, 1.0, // q1–q2 switching speeds
    1.0, 1.0, // q3–q4 strokes
    1.0, 1.0, // q5–q6 switching times
    0.0, 0.0, // p1–p2 position flags (noise-free)
    2.4, 1.2, // t1 ambient temperature, t2 humidity
    1.4, 1.4, 1.4, // c1–c3 ultrasonic discharge levels
    1.6, 1.6, // l1–l2 energy-storage motor run time / peak current
    1.6, 1.6, // l3–l4 drive motor run time / peak current
    1.6, 1.6, // l5–l6 ground-cutter motor run time / peak current
    -1.2, // f insulation resistance
    1.5, // m equipment load rate
];

/// Draws one labeled record of the given class.
///
/// Every non-binary feature is sampled from its normal envelope (a Gaussian
/// truncated at three total standard deviations and at the physical bounds,
/// see [`ScenarioConfig::normal_envelope`]), the class signature is applied
/// on top, and the result is clamped back into the physical bounds. Position
/// flags default to 1 and change only through signature entries. The
/// per-feature Gaussians are not independent: one operating-condition factor
/// per record moves correlated channels together (see
/// [`COMMON_MODE_LOADINGS`]).
///
/// Faults vary in severity from record to record: each faulty record draws a
/// single severity factor, uniform on [`SEVERITY_LO`, `SEVERITY_HI`], that
/// scales every additive offset of its class signature (binary flag
/// overwrites are unaffected — a tripped breaker is tripped, not 70 %
/// tripped, and class 6's thermal symptoms don't scale either because the
/// trip is a discrete event rather than a progressing degradation). One
/// underlying severity drives all of a fault's symptoms, so a class's records
/// fall along a line segment in its signature coordinates rather than in a
/// single blob: mild records sit close to normal telemetry and severe ones
/// far from it. The factor averages to 1, so class-conditional means still
/// match [`signature_means`]. The number of random draws per record is fixed
/// by the class, so generation stays reproducible regardless of batching.
///
/// The configuration must have passed [`ScenarioConfig::validate`].
pub fn generate_record<R: Rng>(
    class: ConditionLabel,
    config: &ScenarioConfig,
    id: u64,
    rng: &mut R,
) -> LabeledSample {
    let mut values = [0.0; FEATURE_DIM];
    let common_mode = standard_normal(rng);
    for (i, range) in config.normal_ranges.iter().enumerate() {
        if BINARY_FEATURES.contains(&i) {
            values[i] = range.mean;
            continue;
        }
        let eff = range.spread * config.noise_level;
        let draw = range.mean
            + eff * (standard_normal(rng) + COMMON_MODE_LOADINGS[i] * common_mode);
        let (lo, hi) = config.normal_envelope(i);
        values[i] = draw.clamp(lo, hi);
    }
    if let Some(entries) = config.signatures.get(&class.class()) {
        let severity = if class.class() == ACCIDENTAL_TRIP_CLASS {
            // Accidental tripping is a discrete event, not a gradual
            // degradation: its symptoms don't scale. The draw is still
            // consumed so every faulty class uses the same stream layout.
            let _ = rng.random::<f64>();
            1.0
        } else {
            SEVERITY_LO + (SEVERITY_HI - SEVERITY_LO) * rng.random::<f64>()
        };
        for entry in entries {
            let range = &config.normal_ranges[entry.feature];
            let v = &mut values[entry.feature];
            match entry.shift {
                Shift::Add { amount } => {
                    *v = (*v + severity * amount).clamp(range.lo, range.hi);
                }
                Shift::Set { value } => *v = value,
                Shift::SetWithProbability { value, probability } => {
                    if rng.random::<f64>() < probability {
                        *v = value;
                    }
                }
            }
        }
    }
    LabeledSample {
        id,
        x: FeatureVector::from_array(values),
        y: class,
    }
}

/// A generated dataset: labeled records, an unlabeled pool, and the pool's
/// true classes.
///
/// `unlabeled_truth` is index-aligned with `unlabeled` and exists only for
/// evaluating pseudo-label quality after the fact; training consumes
/// `labeled` and `unlabeled` alone, and nothing written for training carries
/// the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDataset {
    /// Labeled records with ids 0..n, grouped by class in class order.
    pub labeled: Vec<LabeledSample>,
    /// Feature vectors whose labels were erased.
    pub unlabeled: Vec<FeatureVector>,
    /// True class of each unlabeled vector (evaluation only).
    pub unlabeled_truth: Vec<ConditionLabel>,
}

/// Generates a full dataset for the scenario: `labeled_counts` labeled
/// records per class, then `unlabeled_counts` further draws whose labels are
/// erased into the pool (with the truth kept aside). Deterministic in the
/// scenario seed.
pub fn generate_dataset(config: &ScenarioConfig) -> Result<SimDataset, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut labeled = Vec::new();
    for class in ConditionLabel::ALL {
        for _ in 0..config.labeled_counts[class.index()] {
            let id = labeled.len() as u64;
            labeled.push(generate_record(class, config, id, &mut rng));
        }
    }
    let mut unlabeled = Vec::new();
    let mut unlabeled_truth = Vec::new();
    for class in ConditionLabel::ALL {
        for i in 0..config.unlabeled_counts[class.index()] {
            let id = i as u64; // erased below; only the vector is kept
            unlabeled.push(generate_record(class, config, id, &mut rng).x);
            unlabeled_truth.push(class);
        }
    }
    Ok(SimDataset {
        labeled,
        unlabeled,
        unlabeled_truth,
    })
}

/// Schema version of `manifest.json`.
pub const MANIFEST_SCHEMA: u32 = 1;

/// Companion file describing a written dataset: the full scenario echo plus
/// aggregate class counts. Per-sample truth of the unlabeled pool is
/// deliberately absent — only the histogram is recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Manifest layout version.
    pub schema: u32,
    /// The exact scenario that produced the files.
    pub scenario: ScenarioConfig,
    /// File name of the labeled records.
    pub labeled_file: String,
    /// File name of the unlabeled records.
    pub unlabeled_file: String,
    /// Labeled records per class, as written.
    pub labeled_class_counts: [usize; CLASS_COUNT],
    /// True class histogram of the unlabeled pool (aggregate only).
    pub unlabeled_truth_counts: [usize; CLASS_COUNT],
}

/// Writes `labeled.<ext>`, `unlabeled.<ext>`, and `manifest.json` into `dir`.
///
/// The labeled file carries one labeled record per row; the unlabeled file
/// has the same layout with the label column empty. Bytes are identical
/// across runs for the same dataset.
pub fn write_dataset_files(
    dataset: &SimDataset,
    config: &ScenarioConfig,
    dir: &Path,
    format: DatasetFormat,
) -> Result<DatasetManifest, SimError> {
    let ext = match format {
        DatasetFormat::Csv => "csv",
        DatasetFormat::Json => "json",
    };
    let labeled_file = format!("labeled.{ext}");
    let unlabeled_file = format!("unlabeled.{ext}");

    let labeled_records: Vec<DatasetRecord> = dataset
        .labeled
        .iter()
        .map(|s| (s.x.clone(), Some(s.y)))
        .collect();
    let unlabeled_records: Vec<DatasetRecord> = dataset
        .unlabeled
        .iter()
        .map(|x| (x.clone(), None))
        .collect();
    save_dataset(&dir.join(&labeled_file), format, &labeled_records)?;
    save_dataset(&dir.join(&unlabeled_file), format, &unlabeled_records)?;

    let mut unlabeled_truth_counts = [0usize; CLASS_COUNT];
    for class in &dataset.unlabeled_truth {
        unlabeled_truth_counts[class.index()] += 1;
    }
    let manifest = DatasetManifest {
        schema: MANIFEST_SCHEMA,
        scenario: config.clone(),
        labeled_file,
        unlabeled_file,
        labeled_class_counts: class_counts(&dataset.labeled),
        unlabeled_truth_counts,
    };
    let manifest_path = dir.join("manifest.json");
    let io = |source: std::io::Error| {
        SimError::Feature(FeatureError::Io {
            path: manifest_path.display().to_string(),
            source,
        })
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| SimError::BadScenario {
        detail: format!("manifest serialization failed: {e}"),
    })?;
    bytes.push(b'\n');
    let mut file = fs::File::create(&manifest_path).map_err(io)?;
    file.write_all(&bytes).map_err(io)?;
    file.flush().map_err(io)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{load_dataset, partition_records, EpisodeSplit};
    use tempfile::tempdir;

    fn range_at(config: &ScenarioConfig, i: usize) -> (f64, f64) {
        config.normal_envelope(i)
    }

    #[test]
    fn default_scenario_validates_and_matches_published_shape() {
        let config = ScenarioConfig::default_scenario();
        config.validate().unwrap();
        assert_eq!(config.labeled_counts.iter().sum::<usize>(), 400);
        assert_eq!(config.unlabeled_counts.iter().sum::<usize>(), 478);
        assert_eq!(config.labeled_counts, [80, 28, 44, 88, 72, 32, 56]);
        assert_eq!(config.unlabeled_counts, [96, 33, 53, 105, 86, 38, 67]);
    }

    #[test]
    fn proportional_counts_use_largest_remainder() {
        assert_eq!(
            proportional_counts(&[80, 28, 44, 88, 72, 32, 56], 478),
            [96, 33, 53, 105, 86, 38, 67]
        );
        assert_eq!(proportional_counts(&[1, 1, 1, 1, 1, 1, 1], 7), [1; 7]);
        assert_eq!(proportional_counts(&[0; 7], 40), [0; 7]);
        // Remainders 6/7 everywhere: the first six classes get the extras.
        assert_eq!(
            proportional_counts(&[1, 1, 1, 1, 1, 1, 1], 6),
            [1, 1, 1, 1, 1, 1, 0]
        );
    }

    #[test]
    fn zero_noise_class_means_are_pairwise_distinct() {
        let config = ScenarioConfig {
            noise_level: 0.0,
            ..ScenarioConfig::default_scenario()
        };
        let means: Vec<[f64; FEATURE_DIM]> = ConditionLabel::ALL
            .iter()
            .map(|&c| signature_means(&config, c))
            .collect();
        for a in 0..CLASS_COUNT {
            for b in a + 1..CLASS_COUNT {
                let max_gap = means[a]
                    .iter()
                    .zip(&means[b])
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                assert!(
                    max_gap > 1e-9,
                    "classes {} and {} share a mean vector",
                    a + 1,
                    b + 1
                );
            }
        }
        // At zero noise every feature starts exactly at its normal mean, so a
        // record deviates only along its class signature: additive entries
        // land on the severity segment [mean + SEVERITY_LO·amount,
        // mean + SEVERITY_HI·amount] (clamped), flags on their set values,
        // and everything else stays at the mean.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &class in &ConditionLabel::ALL {
            for _ in 0..20 {
                let record = generate_record(class, &config, 0, &mut rng);
                let values = record.x.to_array();
                for (i, range) in config.normal_ranges.iter().enumerate() {
                    let entry = config
                        .signatures
                        .get(&class.class())
                        .and_then(|sig| sig.iter().find(|e| e.feature == i));
                    match entry.map(|e| e.shift) {
                        None => assert!(
                            (values[i] - range.mean).abs() < 1e-12,
                            "class {} feature {i}: {} vs mean {}",
                            class.class(),
                            values[i],
                            range.mean
                        ),
                        Some(Shift::Add { amount }) => {
                            let (s_lo, s_hi) = if class.class() == ACCIDENTAL_TRIP_CLASS {
                                (1.0, 1.0)
                            } else {
                                (SEVERITY_LO, SEVERITY_HI)
                            };
                            let a = (range.mean + s_lo * amount).clamp(range.lo, range.hi);
                            let b = (range.mean + s_hi * amount).clamp(range.lo, range.hi);
                            let (lo, hi) = (a.min(b), a.max(b));
                            assert!(
                                (lo - 1e-12..=hi + 1e-12).contains(&values[i]),
                                "class {} feature {i}: {} off the severity segment [{lo}, {hi}]",
                                class.class(),
                                values[i]
                            );
                        }
                        Some(Shift::Set { value }) => assert_eq!(values[i], value),
                        Some(Shift::SetWithProbability { value, .. }) => {
                            assert!(values[i] == value || (values[i] - range.mean).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn class_1_stays_inside_normal_ranges_with_flags_up() {
        let config = ScenarioConfig::default_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..500 {
            let record = generate_record(ConditionLabel::Normal, &config, i, &mut rng);
            record.x.validate().unwrap();
            assert_eq!(record.x.p, [1.0, 1.0]);
            for (j, v) in record.x.to_array().iter().enumerate() {
                let (lo, hi) = range_at(&config, j);
                assert!(
                    (lo..=hi).contains(v),
                    "feature {j} = {v} outside normal range [{lo}, {hi}]"
                );
            }
        }
    }

    #[test]
    fn class_6_breaks_flags_and_overheats_outgoing_lines() {
        let config = ScenarioConfig::default_scenario();
        let class6 = ConditionLabel::from_class(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (_, r_hi) = range_at(&config, 0);
        let mut r1_sum = 0.0;
        let n = 500;
        for i in 0..n {
            let record = generate_record(class6, &config, i, &mut rng);
            record.x.validate().unwrap();
            assert!(record.x.p.contains(&0.0), "no abnormal position flag");
            let max_r = record.x.r.iter().cloned().fold(f64::MIN, f64::max);
            assert!(
                max_r > r_hi,
                "outgoing-line peak {max_r} inside normal range (≤ {r_hi})"
            );
            r1_sum += record.x.r[0];
        }
        let r1_mean = r1_sum / n as f64;
        assert!(
            (80.0..=91.0).contains(&r1_mean),
            "A-phase mean {r1_mean} strayed from the configured 85.6 °C"
        );
    }

    #[test]
    fn class_3_depresses_insulation_and_raises_humidity() {
        let config = ScenarioConfig::default_scenario();
        let class3 = ConditionLabel::from_class(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 10_000;
        let (mut f_sum, mut t2_sum) = (0.0, 0.0);
        for i in 0..n {
            let record = generate_record(class3, &config, i, &mut rng);
            f_sum += record.x.f;
            t2_sum += record.x.t[1];
        }
        let f_mean = f_sum / n as f64;
        let t2_mean = t2_sum / n as f64;
        let normal_f = config.normal_ranges[22];
        assert!(
            f_mean <= normal_f.mean - 3.0 * normal_f.spread,
            "insulation mean {f_mean} not depressed by ≥ 3 spreads"
        );
        let normal_t2 = config.normal_ranges[12];
        assert!(
            t2_mean >= normal_t2.mean + 2.0 * normal_t2.spread,
            "humidity mean {t2_mean} not clearly elevated"
        );
    }

    #[test]
    fn dataset_counts_match_config_and_every_vector_validates() {
        let config = ScenarioConfig::default_scenario();
        let dataset = generate_dataset(&config).unwrap();
        assert_eq!(class_counts(&dataset.labeled), config.labeled_counts);
        assert_eq!(dataset.unlabeled.len(), 478);
        assert_eq!(dataset.unlabeled_truth.len(), 478);
        let mut truth = [0usize; CLASS_COUNT];
        for c in &dataset.unlabeled_truth {
            truth[c.index()] += 1;
        }
        assert_eq!(truth, config.unlabeled_counts);
        let ids: std::collections::BTreeSet<u64> =
            dataset.labeled.iter().map(|s| s.id).collect();
        assert_eq!(ids.len(), dataset.labeled.len(), "labeled ids not unique");
        for s in &dataset.labeled {
            s.x.validate().unwrap();
        }
        for x in &dataset.unlabeled {
            x.validate().unwrap();
        }
    }

    #[test]
    fn all_zero_counts_give_an_empty_dataset() {
        let config = ScenarioConfig {
            labeled_counts: [0; CLASS_COUNT],
            unlabeled_counts: [0; CLASS_COUNT],
            ..ScenarioConfig::default_scenario()
        };
        let dataset = generate_dataset(&config).unwrap();
        assert!(dataset.labeled.is_empty());
        assert!(dataset.unlabeled.is_empty());
        assert!(dataset.unlabeled_truth.is_empty());
    }

    #[test]
    fn same_seed_gives_identical_datasets_and_bytes() {
        let config = ScenarioConfig::default_scenario();
        let a = generate_dataset(&config).unwrap();
        let b = generate_dataset(&config).unwrap();
        assert_eq!(a, b);

        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        write_dataset_files(&a, &config, dir_a.path(), DatasetFormat::Csv).unwrap();
        write_dataset_files(&b, &config, dir_b.path(), DatasetFormat::Csv).unwrap();
        for name in ["labeled.csv", "unlabeled.csv", "manifest.json"] {
            let bytes_a = std::fs::read(dir_a.path().join(name)).unwrap();
            let bytes_b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(bytes_a, bytes_b, "{name} differs between runs");
            assert!(!bytes_a.is_empty());
        }
    }

    #[test]
    fn written_files_round_trip_and_unlabeled_rows_carry_no_label() {
        let mut config = ScenarioConfig::default_scenario();
        config.labeled_counts = [3; CLASS_COUNT];
        config.unlabeled_counts = [2; CLASS_COUNT];
        let dataset = generate_dataset(&config).unwrap();
        let dir = tempdir().unwrap();
        let manifest =
            write_dataset_files(&dataset, &config, dir.path(), DatasetFormat::Csv).unwrap();
        assert_eq!(manifest.labeled_class_counts, [3; CLASS_COUNT]);
        assert_eq!(manifest.unlabeled_truth_counts, [2; CLASS_COUNT]);

        let labeled = load_dataset(&dir.path().join("labeled.csv"), DatasetFormat::Csv).unwrap();
        let unlabeled =
            load_dataset(&dir.path().join("unlabeled.csv"), DatasetFormat::Csv).unwrap();
        let (labeled_samples, stray) = partition_records(labeled);
        assert!(stray.is_empty(), "labeled file contained unlabeled rows");
        assert_eq!(labeled_samples.len(), dataset.labeled.len());
        for (loaded, original) in labeled_samples.iter().zip(&dataset.labeled) {
            assert_eq!(loaded.x, original.x);
            assert_eq!(loaded.y, original.y);
        }
        for (x, label) in &unlabeled {
            assert!(label.is_none(), "unlabeled row carries a label");
            x.validate().unwrap();
        }

        // The manifest records the truth only as an aggregate histogram.
        let manifest_text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let parsed: DatasetManifest = serde_json::from_str(&manifest_text).unwrap();
        assert_eq!(parsed, manifest);
    }

    #[test]
    fn training_partitions_never_see_the_hidden_truth() {
        let mut config = ScenarioConfig::default_scenario();
        config.labeled_counts = [4; CLASS_COUNT];
        config.unlabeled_counts = [3; CLASS_COUNT];
        let dataset = generate_dataset(&config).unwrap();
        let split = EpisodeSplit {
            support: dataset.labeled.iter().step_by(2).cloned().collect(),
            query: dataset.labeled.iter().skip(1).step_by(2).cloned().collect(),
            unlabeled: dataset.unlabeled.clone(),
            test: Vec::new(),
        };
        split.validate().unwrap();
        // Everything training consumes is in this value; serializing it must
        // not mention the pool's true classes anywhere.
        let serialized = serde_json::to_string(&split).unwrap();
        assert!(!serialized.contains("truth"));
        let as_value: serde_json::Value = serde_json::from_str(&serialized).unwrap();
        for entry in as_value["unlabeled"].as_array().unwrap() {
            assert!(entry.get("label").is_none());
            assert!(entry.get("y").is_none());
        }
    }

    #[test]
    fn bad_scenarios_are_rejected() {
        let base = ScenarioConfig::default_scenario();

        let mut bad = base.clone();
        bad.noise_level = f64::NAN;
        assert!(matches!(bad.validate(), Err(SimError::BadScenario { .. })));

        let mut bad = base.clone();
        bad.normal_ranges[0].spread = -1.0;
        assert!(matches!(bad.validate(), Err(SimError::BadScenario { .. })));

        let mut bad = base.clone();
        bad.normal_ranges[5].mean = 500.0; // outside [0, 200]
        assert!(matches!(bad.validate(), Err(SimError::BadScenario { .. })));

        let mut bad = base.clone();
        bad.signatures.remove(&4);
        assert!(matches!(bad.validate(), Err(SimError::BadScenario { .. })));

        let mut bad = base.clone();
        bad.signatures.insert(5, Vec::new());
        assert!(matches!(bad.validate(), Err(SimError::BadScenario { .. })));

        let mut bad = base.clone();
        bad.signatures.get_mut(&2).unwrap().push(FeatureShift {
            feature: 9,
            shift: Shift::Add { amount: -0.5 },
        });
        assert!(matches!(bad.validate(), Err(SimError::BadScenario { .. })));

        let mut bad = base.clone();
        bad.signatures.get_mut(&6).unwrap()[1] = FeatureShift {
            feature: 10,
            shift: Shift::SetWithProbability {
                value: 0.0,
                probability: 1.5,
            },
        };
        assert!(matches!(bad.validate(), Err(SimError::BadScenario { .. })));

        let mut bad = base.clone();
        bad.signatures.insert(
            1,
            vec![FeatureShift {
                feature: 0,
                shift: Shift::Add { amount: 1.0 },
            }],
        );
        assert!(matches!(bad.validate(), Err(SimError::BadScenario { .. })));

        // The unmodified default passes.
        base.validate().unwrap();
    }

    #[test]
    fn scenario_config_round_trips_through_json() {
        let config = ScenarioConfig::default_scenario();
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
    }
}
