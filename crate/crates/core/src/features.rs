//! Feature-vector schema, condition labels, dataset I/O, and episode splits.
//!
//! A telemetry record for one switchgear cabinet is a 24-dimensional vector
//! grouped into named segments: three-phase outgoing-line temperatures,
//! opening/closing mechanical characteristics, switch positions, ambient
//! conditions, ultrasonic partial-discharge readings, motor run times and
//! peak currents, insulation resistance, and load rate. This module defines
//! those types, the seven-way condition taxonomy, CSV/JSON persistence with
//! bit-exact round-trips, and deterministic stratified splitting of a dataset
//! into the support / query / unlabeled / test partitions used by training.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Flattened length of a [`FeatureVector`].
pub const FEATURE_DIM: usize = 24;

/// Number of condition classes.
pub const CLASS_COUNT: usize = 7;

/// Column names of the flattened feature vector, in flattening order.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "r1", "r2", "r3", "q1", "q2", "q3", "q4", "q5", "q6", "p1", "p2", "t1",
    "t2", "c1", "c2", "c3", "l1", "l2", "l3", "l4", "l5", "l6", "f", "m",
];

/// Errors raised by dataset loading, saving, and splitting.
#[derive(Debug, Error)]
pub enum FeatureError {
    /// Underlying file I/O failed.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// The file parsed but contained no data rows.
    #[error("empty dataset: {path} contains no data rows")]
    EmptyDataset { path: String },
    /// The header row (or JSON object keys) did not match the schema.
    #[error("bad header in {path}: {detail}")]
    BadHeader { path: String, detail: String },
    /// A data row could not be interpreted.
    #[error("malformed data row {row}, column `{column}`: {detail}")]
    MalformedRow {
        row: usize,
        column: String,
        detail: String,
    },
    /// A label outside 1..=7 was encountered.
    #[error("unknown condition class {value} (expected an integer in 1..=7)")]
    UnknownClass { value: i64 },
    /// Two samples carried the same identifier.
    #[error("duplicate sample id {id}")]
    DuplicateId { id: u64 },
    /// A class cannot be split across partitions.
    #[error("class {class} has {count} labeled sample(s); at least 2 are needed to stratify")]
    CannotStratify { class: u8, count: usize },
    /// Split fractions were negative or did not sum to one.
    #[error("split fractions must be non-negative and sum to 1 (got {support}, {query}, {test})")]
    BadFractions { support: f64, query: f64, test: f64 },
    /// Explicit per-class counts exceeded the available samples.
    #[error("class {class}: requested {requested} samples but only {available} are available")]
    CountExceedsAvailable {
        class: u8,
        requested: usize,
        available: usize,
    },
    /// A query partition contained a class missing from the support set.
    #[error("class {class} appears in the query set but not in the support set")]
    QueryWithoutSupport { class: u8 },
    /// A feature vector violated a physical-range constraint.
    #[error("invalid feature vector: {detail}")]
    InvalidFeature { detail: String },
}

/// One of the seven switchgear operating conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum ConditionLabel {
    /// Healthy operation.
    Normal = 1,
    /// Operating mechanism jamming (slow, high-current actuation).
    MechanismJamming = 2,
    /// Insulation failure (low insulation resistance).
    InsulationFailure = 3,
    /// Empty-closing: the mechanism cycles without moving the contacts.
    EmptyClosing = 4,
    /// Mechanical failure of the transmission linkage.
    MechanicalFailure = 5,
    /// Accidental tripping (breaker found open unexpectedly).
    AccidentalTripping = 6,
    /// Secondary-equipment problem (instrumentation / terminal unit).
    SecondaryEquipment = 7,
}

impl ConditionLabel {
    /// All seven labels in class order.
    pub const ALL: [ConditionLabel; CLASS_COUNT] = [
        ConditionLabel::Normal,
        ConditionLabel::MechanismJamming,
        ConditionLabel::InsulationFailure,
        ConditionLabel::EmptyClosing,
        ConditionLabel::MechanicalFailure,
        ConditionLabel::AccidentalTripping,
        ConditionLabel::SecondaryEquipment,
    ];

    /// The 1-based class number used in files and reports.
    pub fn class(self) -> u8 {
        self as u8
    }

    /// The 0-based index used for arrays over classes.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    /// Parses a 1-based class number.
    pub fn from_class(value: i64) -> Result<Self, FeatureError> {
        match value {
            1 => Ok(ConditionLabel::Normal),
            2 => Ok(ConditionLabel::MechanismJamming),
            3 => Ok(ConditionLabel::InsulationFailure),
            4 => Ok(ConditionLabel::EmptyClosing),
            5 => Ok(ConditionLabel::MechanicalFailure),
            6 => Ok(ConditionLabel::AccidentalTripping),
            7 => Ok(ConditionLabel::SecondaryEquipment),
            _ => Err(FeatureError::UnknownClass { value }),
        }
    }

    /// Parses a 0-based class index.
    pub fn from_index(index: usize) -> Result<Self, FeatureError> {
        Self::from_class(index as i64 + 1)
    }
}

impl fmt::Display for ConditionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ConditionLabel::Normal => "normal",
            ConditionLabel::MechanismJamming => "mechanism jamming",
            ConditionLabel::InsulationFailure => "insulation failure",
            ConditionLabel::EmptyClosing => "empty-closing",
            ConditionLabel::MechanicalFailure => "mechanical failure",
            ConditionLabel::AccidentalTripping => "accidental tripping",
            ConditionLabel::SecondaryEquipment => "secondary-equipment problem",
        };
        write!(f, "{name}")
    }
}

impl Serialize for ConditionLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.class())
    }
}

impl<'de> Deserialize<'de> for ConditionLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = i64::deserialize(deserializer)?;
        ConditionLabel::from_class(value).map_err(serde::de::Error::custom)
    }
}

/// A 24-dimensional telemetry record with named segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Three-phase outgoing-line temperatures (°C).
    pub r: [f64; 3],
    /// Mechanical characteristics: closing/opening speed (m/s), closing/
    /// opening stroke (mm), closing/opening time (ms).
    pub q: [f64; 6],
    /// Actual open/close state of circuit breaker and ground knife
    /// (1 = position agrees with the command, 0 = abnormal).
    pub p: [f64; 2],
    /// Ambient temperature (°C) and relative humidity (%).
    pub t: [f64; 2],
    /// Ultrasonic partial-discharge levels at breaker, busbar, and cable
    /// compartments (dB).
    pub c: [f64; 3],
    /// Motor telemetry: run time (s) and peak current (A) for the
    /// energy-storage motor, the drive motor, and the ground-cutter drive
    /// motor.
    pub l: [f64; 6],
    /// Insulation resistance (MΩ).
    pub f: f64,
    /// Equipment load rate (fraction of rated load).
    pub m: f64,
}

impl FeatureVector {
    /// A vector with every component zero (useful as a neutral placeholder).
    pub fn zeros() -> Self {
        FeatureVector {
            r: [0.0; 3],
            q: [0.0; 6],
            p: [0.0; 2],
            t: [0.0; 2],
            c: [0.0; 3],
            l: [0.0; 6],
            f: 0.0,
            m: 0.0,
        }
    }

    /// Flattens the segments into a 24-element array in column order
    /// (`r1..r3, q1..q6, p1..p2, t1..t2, c1..c3, l1..l6, f, m`).
    pub fn to_array(&self) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        let mut i = 0;
        for v in self.r {
            out[i] = v;
            i += 1;
        }
        for v in self.q {
            out[i] = v;
            i += 1;
        }
        for v in self.p {
            out[i] = v;
            i += 1;
        }
        for v in self.t {
            out[i] = v;
            i += 1;
        }
        for v in self.c {
            out[i] = v;
            i += 1;
        }
        for v in self.l {
            out[i] = v;
            i += 1;
        }
        out[i] = self.f;
        out[i + 1] = self.m;
        out
    }

    /// Rebuilds the segments from a flattened 24-element array.
    pub fn from_array(values: [f64; FEATURE_DIM]) -> Self {
        let mut fv = FeatureVector::zeros();
        let mut i = 0;
        for v in fv.r.iter_mut() {
            *v = values[i];
            i += 1;
        }
        for v in fv.q.iter_mut() {
            *v = values[i];
            i += 1;
        }
        for v in fv.p.iter_mut() {
            *v = values[i];
            i += 1;
        }
        for v in fv.t.iter_mut() {
            *v = values[i];
            i += 1;
        }
        for v in fv.c.iter_mut() {
            *v = values[i];
            i += 1;
        }
        for v in fv.l.iter_mut() {
            *v = values[i];
            i += 1;
        }
        fv.f = values[i];
        fv.m = values[i + 1];
        fv
    }

    /// Checks the physical-range constraints of a raw (unnormalized) record:
    /// all components finite, switch positions exactly 0 or 1, load rate in
    /// [0, 2], positive insulation resistance, humidity in [0, 100].
    pub fn validate(&self) -> Result<(), FeatureError> {
        let invalid = |detail: String| Err(FeatureError::InvalidFeature { detail });
        for (name, value) in FEATURE_NAMES.iter().zip(self.to_array()) {
            if !value.is_finite() {
                return invalid(format!("component {name} is not finite"));
            }
        }
        for (i, v) in self.p.iter().enumerate() {
            if *v != 0.0 && *v != 1.0 {
                return invalid(format!("position p{} must be 0 or 1, got {v}", i + 1));
            }
        }
        if !(0.0..=2.0).contains(&self.m) {
            return invalid(format!("load rate m must lie in [0, 2], got {}", self.m));
        }
        if self.f <= 0.0 {
            return invalid(format!("insulation resistance f must be positive, got {}", self.f));
        }
        if !(0.0..=100.0).contains(&self.t[1]) {
            return invalid(format!("humidity t2 must lie in [0, 100], got {}", self.t[1]));
        }
        Ok(())
    }
}

/// A feature vector together with its known condition and a dataset-unique id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    /// Identifier, unique within one dataset.
    pub id: u64,
    /// The telemetry record.
    pub x: FeatureVector,
    /// The known operating condition.
    pub y: ConditionLabel,
}

/// The four partitions consumed by semi-supervised training.
///
/// `support` fixes the class centers, `query` drives the supervised loss,
/// `unlabeled` feeds pseudo-labeling and consistency regularization, and
/// `test` is held out for final metrics only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSplit {
    pub support: Vec<LabeledSample>,
    pub query: Vec<LabeledSample>,
    pub unlabeled: Vec<FeatureVector>,
    pub test: Vec<LabeledSample>,
}

impl EpisodeSplit {
    /// Checks that the labeled partitions are disjoint by id and that every
    /// class appearing in the query set also appears in the support set.
    pub fn validate(&self) -> Result<(), FeatureError> {
        let mut seen = BTreeSet::new();
        for sample in self.support.iter().chain(&self.query).chain(&self.test) {
            if !seen.insert(sample.id) {
                return Err(FeatureError::DuplicateId { id: sample.id });
            }
        }
        let support_classes = class_counts(&self.support);
        for label in ConditionLabel::ALL {
            let in_query = class_counts(&self.query)[label.index()] > 0;
            if in_query && support_classes[label.index()] == 0 {
                return Err(FeatureError::QueryWithoutSupport {
                    class: label.class(),
                });
            }
        }
        Ok(())
    }
}

/// Per-class sample counts, indexed by 0-based class index.
pub fn class_counts(samples: &[LabeledSample]) -> [usize; CLASS_COUNT] {
    let mut counts = [0usize; CLASS_COUNT];
    for s in samples {
        counts[s.y.index()] += 1;
    }
    counts
}

/// On-disk dataset encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// Comma-separated values with a fixed header.
    Csv,
    /// A JSON array of flat objects with the same field names.
    Json,
}

/// One loaded record: the feature vector plus its label, if any.
pub type DatasetRecord = (FeatureVector, Option<ConditionLabel>);

fn io_err(path: &Path, source: std::io::Error) -> FeatureError {
    FeatureError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a dataset file. Row order is preserved; a missing or empty `label`
/// field yields an unlabeled record.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<DatasetRecord>, FeatureError> {
    match format {
        DatasetFormat::Csv => load_csv(path),
        DatasetFormat::Json => load_json(path),
    }
}

/// Saves a dataset file in the chosen format. Values round-trip bit-exactly
/// through [`load_dataset`].
pub fn save_dataset(
    path: &Path,
    format: DatasetFormat,
    records: &[DatasetRecord],
) -> Result<(), FeatureError> {
    match format {
        DatasetFormat::Csv => save_csv(path, records),
        DatasetFormat::Json => save_json(path, records),
    }
}

fn parse_field(row: usize, column: &str, raw: &str) -> Result<f64, FeatureError> {
    let malformed = |detail: String| FeatureError::MalformedRow {
        row,
        column: column.to_string(),
        detail,
    };
    let value: f64 = raw
        .trim()
        .parse()
        .map_err(|_| malformed(format!("`{raw}` is not a number")))?;
    if !value.is_finite() {
        return Err(malformed(format!("`{raw}` is not finite")));
    }
    Ok(value)
}

fn parse_label(row: usize, raw: &str) -> Result<Option<ConditionLabel>, FeatureError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    let value: i64 = trimmed.parse().map_err(|_| FeatureError::MalformedRow {
        row,
        column: "label".to_string(),
        detail: format!("`{raw}` is not an integer class"),
    })?;
    ConditionLabel::from_class(value).map(Some)
}

fn load_csv(path: &Path) -> Result<Vec<DatasetRecord>, FeatureError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| FeatureError::BadHeader {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let has_label = names.len() == FEATURE_DIM + 1 && names[FEATURE_DIM] == "label";
    if !(names.len() == FEATURE_DIM || has_label) || names[..FEATURE_DIM] != FEATURE_NAMES {
        return Err(FeatureError::BadHeader {
            path: path.display().to_string(),
            detail: format!(
                "expected columns {} plus optional `label`, got {}",
                FEATURE_NAMES.join(","),
                names.join(",")
            ),
        });
    }

    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let row_no = idx + 1;
        let row = row.map_err(|e| FeatureError::MalformedRow {
            row: row_no,
            column: "<record>".to_string(),
            detail: e.to_string(),
        })?;
        if row.len() != names.len() {
            return Err(FeatureError::MalformedRow {
                row: row_no,
                column: "<record>".to_string(),
                detail: format!("expected {} fields, got {}", names.len(), row.len()),
            });
        }
        let mut values = [0.0; FEATURE_DIM];
        for (i, name) in FEATURE_NAMES.iter().enumerate() {
            values[i] = parse_field(row_no, name, &row[i])?;
        }
        let label = if has_label {
            parse_label(row_no, &row[FEATURE_DIM])?
        } else {
            None
        };
        records.push((FeatureVector::from_array(values), label));
    }
    if records.is_empty() {
        return Err(FeatureError::EmptyDataset {
            path: path.display().to_string(),
        });
    }
    Ok(records)
}

fn save_csv(path: &Path, records: &[DatasetRecord]) -> Result<(), FeatureError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.push("label");
    writer
        .write_record(&header)
        .map_err(|e| io_err(path, std::io::Error::other(e)))?;
    for (fv, label) in records {
        let mut fields: Vec<String> = fv.to_array().iter().map(|v| format!("{v}")).collect();
        fields.push(label.map(|l| l.class().to_string()).unwrap_or_default());
        writer
            .write_record(&fields)
            .map_err(|e| io_err(path, std::io::Error::other(e)))?;
    }
    writer
        .flush()
        .map_err(|e| io_err(path, e))?;
    Ok(())
}

fn load_json(path: &Path) -> Result<Vec<DatasetRecord>, FeatureError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let rows: Vec<serde_json::Map<String, serde_json::Value>> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| FeatureError::BadHeader {
            path: path.display().to_string(),
            detail: format!("not a JSON array of flat objects: {e}"),
        })?;
    if rows.is_empty() {
        return Err(FeatureError::EmptyDataset {
            path: path.display().to_string(),
        });
    }
    let mut records = Vec::new();
    for (idx, obj) in rows.iter().enumerate() {
        let row_no = idx + 1;
        for key in obj.keys() {
            if key != "label" && !FEATURE_NAMES.contains(&key.as_str()) {
                return Err(FeatureError::BadHeader {
                    path: path.display().to_string(),
                    detail: format!("row {row_no} has unexpected field `{key}`"),
                });
            }
        }
        let mut values = [0.0; FEATURE_DIM];
        for (i, name) in FEATURE_NAMES.iter().enumerate() {
            let value = obj.get(*name).ok_or_else(|| FeatureError::MalformedRow {
                row: row_no,
                column: name.to_string(),
                detail: "missing field".to_string(),
            })?;
            let number = value.as_f64().ok_or_else(|| FeatureError::MalformedRow {
                row: row_no,
                column: name.to_string(),
                detail: format!("`{value}` is not a number"),
            })?;
            if !number.is_finite() {
                return Err(FeatureError::MalformedRow {
                    row: row_no,
                    column: name.to_string(),
                    detail: "value is not finite".to_string(),
                });
            }
            values[i] = number;
        }
        let label = match obj.get("label") {
            None | Some(serde_json::Value::Null) => None,
            Some(value) => {
                let class = value.as_i64().ok_or_else(|| FeatureError::MalformedRow {
                    row: row_no,
                    column: "label".to_string(),
                    detail: format!("`{value}` is not an integer class"),
                })?;
                Some(ConditionLabel::from_class(class)?)
            }
        };
        records.push((FeatureVector::from_array(values), label));
    }
    Ok(records)
}

fn save_json(path: &Path, records: &[DatasetRecord]) -> Result<(), FeatureError> {
    #[derive(Serialize)]
    struct FlatRow {
        r1: f64,
        r2: f64,
        r3: f64,
        q1: f64,
        q2: f64,
        q3: f64,
        q4: f64,
        q5: f64,
        q6: f64,
        p1: f64,
        p2: f64,
        t1: f64,
        t2: f64,
        c1: f64,
        c2: f64,
        c3: f64,
        l1: f64,
        l2: f64,
        l3: f64,
        l4: f64,
        l5: f64,
        l6: f64,
        f: f64,
        m: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        label: Option<u8>,
    }

    let rows: Vec<FlatRow> = records
        .iter()
        .map(|(fv, label)| {
            let a = fv.to_array();
            FlatRow {
                r1: a[0],
                r2: a[1],
                r3: a[2],
                q1: a[3],
                q2: a[4],
                q3: a[5],
                q4: a[6],
                q5: a[7],
                q6: a[8],
                p1: a[9],
                p2: a[10],
                t1: a[11],
                t2: a[12],
                c1: a[13],
                c2: a[14],
                c3: a[15],
                l1: a[16],
                l2: a[17],
                l3: a[18],
                l4: a[19],
                l5: a[20],
                l6: a[21],
                f: a[22],
                m: a[23],
                label: label.map(ConditionLabel::class),
            }
        })
        .collect();
    let mut file = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    serde_json::to_writer_pretty(&mut file, &rows)
        .map_err(|e| io_err(path, std::io::Error::other(e)))?;
    file.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Separates loaded records into labeled samples (ids assigned from the row
/// position) and unlabeled feature vectors, preserving row order.
pub fn partition_records(records: Vec<DatasetRecord>) -> (Vec<LabeledSample>, Vec<FeatureVector>) {
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for (idx, (x, label)) in records.into_iter().enumerate() {
        match label {
            Some(y) => labeled.push(LabeledSample {
                id: idx as u64,
                x,
                y,
            }),
            None => unlabeled.push(x),
        }
    }
    (labeled, unlabeled)
}

/// How to divide the labeled pool among support, query, and test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitSpec {
    /// Per-class stratified fractions; must be non-negative and sum to 1.
    /// Within each class, whole-sample targets are met by largest-remainder
    /// rounding (ties favor support, then query).
    Fractions { support: f64, query: f64, test: f64 },
    /// Explicit per-class counts (class 1 first). The per-class total may be
    /// smaller than the available pool; leftover samples are dropped.
    Counts {
        support: [usize; CLASS_COUNT],
        query: [usize; CLASS_COUNT],
        test: [usize; CLASS_COUNT],
    },
}

/// Splits a labeled pool into support/query/test partitions, stratified by
/// class, and attaches the unlabeled pool unchanged. Deterministic for a
/// fixed seed: samples are grouped per class in input order, shuffled with a
/// seeded generator, then assigned in support, query, test order.
pub fn split_dataset(
    labeled: &[LabeledSample],
    unlabeled: &[FeatureVector],
    spec: &SplitSpec,
    seed: u64,
) -> Result<EpisodeSplit, FeatureError> {
    let mut seen = BTreeSet::new();
    for sample in labeled {
        if !seen.insert(sample.id) {
            return Err(FeatureError::DuplicateId { id: sample.id });
        }
    }

    if let SplitSpec::Fractions {
        support,
        query,
        test,
    } = spec
    {
        let bad = [*support, *query, *test].iter().any(|f| !(0.0..=1.0).contains(f))
            || (support + query + test - 1.0).abs() > 1e-9;
        if bad {
            return Err(FeatureError::BadFractions {
                support: *support,
                query: *query,
                test: *test,
            });
        }
    }

    let mut by_class: [Vec<usize>; CLASS_COUNT] = Default::default();
    for (i, sample) in labeled.iter().enumerate() {
        by_class[sample.y.index()].push(i);
    }
    for (k, members) in by_class.iter().enumerate() {
        if members.len() == 1 {
            return Err(FeatureError::CannotStratify {
                class: k as u8 + 1,
                count: members.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = EpisodeSplit {
        support: Vec::new(),
        query: Vec::new(),
        unlabeled: unlabeled.to_vec(),
        test: Vec::new(),
    };
    for (k, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        let n = members.len();
        let (n_support, n_query, n_test) = match spec {
            SplitSpec::Fractions {
                support,
                query,
                test,
            } => {
                let alloc = largest_remainder(n, &[*support, *query, *test]);
                (alloc[0], alloc[1], alloc[2])
            }
            SplitSpec::Counts {
                support,
                query,
                test,
            } => {
                let requested = support[k] + query[k] + test[k];
                if requested > n {
                    return Err(FeatureError::CountExceedsAvailable {
                        class: k as u8 + 1,
                        requested,
                        available: n,
                    });
                }
                (support[k], query[k], test[k])
            }
        };
        let mut cursor = members.iter().copied();
        split
            .support
            .extend(cursor.by_ref().take(n_support).map(|i| labeled[i].clone()));
        split
            .query
            .extend(cursor.by_ref().take(n_query).map(|i| labeled[i].clone()));
        split
            .test
            .extend(cursor.by_ref().take(n_test).map(|i| labeled[i].clone()));
    }
    split.validate()?;
    Ok(split)
}

/// Distributes `n` whole samples over buckets proportionally to `fractions`
/// using largest-remainder rounding; ties favor earlier buckets.
fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..n.saturating_sub(assigned) {
        alloc[order[i % fractions.len()]] += 1;
    }
    alloc
}

/// Allocates a reduced labeled budget across classes proportionally to the
/// existing class counts (largest-remainder rounding, ties favor lower
/// classes). Used to shrink the labeled pool for label-efficiency sweeps.
pub fn stratified_allocation(
    class_sizes: [usize; CLASS_COUNT],
    target: usize,
) -> [usize; CLASS_COUNT] {
    let total: usize = class_sizes.iter().sum();
    let mut alloc = [0usize; CLASS_COUNT];
    if total == 0 {
        return alloc;
    }
    let target = target.min(total);
    let exact: Vec<f64> = class_sizes
        .iter()
        .map(|&n| n as f64 * target as f64 / total as f64)
        .collect();
    for (a, e) in alloc.iter_mut().zip(&exact) {
        *a = e.floor() as usize;
    }
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..CLASS_COUNT).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..target - assigned {
        alloc[order[i]] += 1;
    }
    alloc
}

/// Draws a stratified subsample of the labeled pool with the given per-class
/// counts, deterministically for a fixed seed.
pub fn subsample_labeled(
    labeled: &[LabeledSample],
    per_class: [usize; CLASS_COUNT],
    seed: u64,
) -> Result<Vec<LabeledSample>, FeatureError> {
    let mut by_class: [Vec<usize>; CLASS_COUNT] = Default::default();
    for (i, sample) in labeled.iter().enumerate() {
        by_class[sample.y.index()].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (k, members) in by_class.iter_mut().enumerate() {
        if per_class[k] > members.len() {
            return Err(FeatureError::CountExceedsAvailable {
                class: k as u8 + 1,
                requested: per_class[k],
                available: members.len(),
            });
        }
        members.shuffle(&mut rng);
        out.extend(members.iter().take(per_class[k]).map(|&i| labeled[i].clone()));
    }
    Ok(out)
}
