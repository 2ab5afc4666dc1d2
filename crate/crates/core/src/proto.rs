//! The prototypical head: per-class centers in embedding space, normalized
//! squared distances, distance-distribution statistics, learned decision
//! radii, radius-gated pseudo-labeling, and center correction.
//!
//! Distances are squared Euclidean throughout. Class probabilities come from
//! a softmax over negative *raw* squared distances, while the radius gate
//! compares the *normalized* distance (raw distance divided by its column
//! mean over the unlabeled pool) against the class radius.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::ConditionLabel;
use crate::nnet::{Mlp, NnetError, OutputActivation};

/// Errors raised by the prototypical head.
#[derive(Debug, Error)]
pub enum ProtoError {
    /// An operation received no samples.
    #[error("empty input: {what}")]
    EmptyInput { what: String },
    /// Vector widths disagree.
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    /// A needed class has no samples.
    #[error("class {class} has no contributing samples")]
    MissingClass { class: u8 },
    /// Every unlabeled sample sits exactly on a class center.
    #[error("degenerate class column: all unlabeled samples coincide with the class-{class} center")]
    DegenerateColumn { class: u8 },
    /// Too few values to compute distribution statistics.
    #[error("need at least {need} values for distance statistics, got {got}")]
    TooFewSamples { need: usize, got: usize },
    /// NaN or infinity encountered.
    #[error("{what} contains a non-finite value")]
    NonFinite { what: String },
    /// The radius network has the wrong shape for 5-statistic input.
    #[error("unsuitable radius network: {detail}")]
    BadRadiusNet { detail: String },
    /// An inner network evaluation failed.
    #[error(transparent)]
    Nnet(#[from] NnetError),
}

/// Per-class centers in embedding space with their contributor counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototypes {
    centers: BTreeMap<u8, Vec<f64>>,
    counts: BTreeMap<u8, usize>,
}

impl Prototypes {
    /// The center of a class, if that class has contributors.
    pub fn center(&self, label: ConditionLabel) -> Option<&[f64]> {
        self.centers.get(&label.class()).map(Vec::as_slice)
    }

    /// Number of samples that contributed to a class center.
    pub fn count(&self, label: ConditionLabel) -> usize {
        self.counts.get(&label.class()).copied().unwrap_or(0)
    }

    /// Classes with centers, in ascending class order.
    pub fn classes(&self) -> Vec<ConditionLabel> {
        self.centers
            .keys()
            .map(|&k| ConditionLabel::from_class(k as i64).expect("stored classes are valid"))
            .collect()
    }

    /// Embedding dimension.
    pub fn dim(&self) -> usize {
        self.centers.values().next().map_or(0, Vec::len)
    }

    /// Checks finiteness, consistent dimensions, and positive counts.
    pub fn validate(&self) -> Result<(), ProtoError> {
        if self.centers.is_empty() {
            return Err(ProtoError::EmptyInput {
                what: "prototype set".to_string(),
            });
        }
        let dim = self.dim();
        for (class, center) in &self.centers {
            if center.len() != dim {
                return Err(ProtoError::DimensionMismatch {
                    what: format!("center of class {class}"),
                    expected: dim,
                    got: center.len(),
                });
            }
            if center.iter().any(|v| !v.is_finite()) {
                return Err(ProtoError::NonFinite {
                    what: format!("center of class {class}"),
                });
            }
            if self.counts.get(class).copied().unwrap_or(0) == 0 {
                return Err(ProtoError::MissingClass { class: *class });
            }
        }
        Ok(())
    }
}

/// Squared Euclidean distance.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Raw and normalized squared distances from each unlabeled sample to each
/// class center. Columns follow [`DistanceTable::classes`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    /// Classes in column order (ascending).
    pub classes: Vec<ConditionLabel>,
    /// `raw[n][k]` = squared distance from sample `n` to center `k`.
    pub raw: Vec<Vec<f64>>,
    /// `normalized[n][k]` = raw divided by the column mean; every column
    /// averages to 1.
    pub normalized: Vec<Vec<f64>>,
}

impl DistanceTable {
    /// Number of unlabeled samples (rows).
    pub fn unlabeled_count(&self) -> usize {
        self.raw.len()
    }

    /// Column position of a class, if present.
    pub fn class_column(&self, label: ConditionLabel) -> Option<usize> {
        self.classes.iter().position(|&c| c == label)
    }

    /// One normalized column.
    pub fn normalized_column(&self, column: usize) -> Vec<f64> {
        self.normalized.iter().map(|row| row[column]).collect()
    }
}

/// Per-class decision radii and the distance statistics that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusDecision {
    /// class → radius (strictly positive).
    pub radii: BTreeMap<u8, f64>,
    /// class → (max, mean, variance, skewness, kurtosis) of its normalized
    /// distance column.
    pub stats: BTreeMap<u8, [f64; 5]>,
}

impl RadiusDecision {
    /// The radius of a class, if present.
    pub fn radius(&self, label: ConditionLabel) -> Option<f64> {
        self.radii.get(&label.class()).copied()
    }
}

/// The pseudo-label proposed for one unlabeled sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabel {
    /// Row index into the unlabeled pool.
    pub index: usize,
    /// Nearest-center class.
    pub label: ConditionLabel,
    /// Whether the normalized distance to the assigned center is strictly
    /// below that class's radius.
    pub in_radius: bool,
}

fn check_uniform_dims(vectors: &[&[f64]], what: &str) -> Result<usize, ProtoError> {
    let dim = vectors.first().map_or(0, |v| v.len());
    for v in vectors {
        if v.len() != dim {
            return Err(ProtoError::DimensionMismatch {
                what: what.to_string(),
                expected: dim,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ProtoError::NonFinite {
                what: what.to_string(),
            });
        }
    }
    Ok(dim)
}

/// Class centers as per-class arithmetic means of the mapped vectors.
pub fn compute_prototypes(
    mapped: &[(Vec<f64>, ConditionLabel)],
) -> Result<Prototypes, ProtoError> {
    update_prototypes(mapped, &[])
}

/// Corrected class centers: each class center is the mean of its labeled
/// vectors plus those pseudo-labeled vectors that fell inside the class
/// radius. Out-of-radius pseudo-labels contribute nothing. With an empty
/// pseudo set this is exactly [`compute_prototypes`].
pub fn update_prototypes(
    labeled_mapped: &[(Vec<f64>, ConditionLabel)],
    pseudo: &[(Vec<f64>, PseudoLabel)],
) -> Result<Prototypes, ProtoError> {
    if labeled_mapped.is_empty() {
        return Err(ProtoError::EmptyInput {
            what: "labeled vectors for prototype computation".to_string(),
        });
    }
    let all_vecs: Vec<&[f64]> = labeled_mapped
        .iter()
        .map(|(v, _)| v.as_slice())
        .chain(pseudo.iter().map(|(v, _)| v.as_slice()))
        .collect();
    let dim = check_uniform_dims(&all_vecs, "mapped vectors")?;

    let mut sums: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
    let mut add = |class: u8, v: &[f64]| {
        let sum = sums.entry(class).or_insert_with(|| vec![0.0; dim]);
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        *counts.entry(class).or_insert(0) += 1;
    };
    for (v, y) in labeled_mapped {
        add(y.class(), v);
    }
    for (v, p) in pseudo {
        if p.in_radius {
            if !labeled_mapped.iter().any(|(_, y)| *y == p.label) {
                return Err(ProtoError::MissingClass {
                    class: p.label.class(),
                });
            }
            add(p.label.class(), v);
        }
    }

    let centers: BTreeMap<u8, Vec<f64>> = sums
        .into_iter()
        .map(|(class, sum)| {
            let n = counts[&class] as f64;
            (class, sum.into_iter().map(|s| s / n).collect())
        })
        .collect();
    let protos = Prototypes { centers, counts };
    protos.validate()?;
    Ok(protos)
}

/// Squared distances from every unlabeled vector to every class center, both
/// raw and normalized so that each class column averages to exactly 1.
pub fn normalized_distances(
    unlabeled_mapped: &[Vec<f64>],
    prototypes: &Prototypes,
) -> Result<DistanceTable, ProtoError> {
    prototypes.validate()?;
    if unlabeled_mapped.is_empty() {
        return Err(ProtoError::EmptyInput {
            what: "unlabeled vectors for the distance table".to_string(),
        });
    }
    let refs: Vec<&[f64]> = unlabeled_mapped.iter().map(Vec::as_slice).collect();
    let dim = check_uniform_dims(&refs, "unlabeled vectors")?;
    if dim != prototypes.dim() {
        return Err(ProtoError::DimensionMismatch {
            what: "unlabeled vectors vs prototype centers".to_string(),
            expected: prototypes.dim(),
            got: dim,
        });
    }

    let classes = prototypes.classes();
    let m = unlabeled_mapped.len();
    let mut raw = vec![vec![0.0; classes.len()]; m];
    for (n, v) in unlabeled_mapped.iter().enumerate() {
        for (k, &class) in classes.iter().enumerate() {
            raw[n][k] = squared_distance(v, prototypes.center(class).expect("class listed"));
        }
    }

    let mut normalized = vec![vec![0.0; classes.len()]; m];
    for (k, &class) in classes.iter().enumerate() {
        let mean: f64 = raw.iter().map(|row| row[k]).sum::<f64>() / m as f64;
        if mean == 0.0 {
            return Err(ProtoError::DegenerateColumn {
                class: class.class(),
            });
        }
        for (n, row) in raw.iter().enumerate() {
            normalized[n][k] = row[k] / mean;
        }
    }
    Ok(DistanceTable {
        classes,
        raw,
        normalized,
    })
}

/// (max, mean, variance, skewness, kurtosis) of one distance column, using
/// population (1/M) central moments; kurtosis is the plain `m₄/m₂²` ratio
/// (not excess). A column whose variance is zero at the working scale gets
/// skewness and kurtosis 0 by convention.
pub fn distance_stats(column: &[f64]) -> Result<[f64; 5], ProtoError> {
    let m = column.len();
    if m < 2 {
        return Err(ProtoError::TooFewSamples { need: 2, got: m });
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(ProtoError::NonFinite {
            what: "distance column".to_string(),
        });
    }
    let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = column.iter().sum::<f64>() / m as f64;
    let central = |p: i32| column.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / m as f64;
    let m2 = central(2);
    let m3 = central(3);
    let m4 = central(4);
    // Degenerate at the working scale: a constant column can acquire a tiny
    // nonzero variance purely from rounding of its mean, which would turn
    // the moment ratios into noise.
    let scale = max.abs().max(mean.abs()).max(1.0);
    let degenerate = m2 <= (1e-12 * scale).powi(2);
    let skewness = if degenerate { 0.0 } else { m3 / m2.powf(1.5) };
    let kurtosis = if degenerate { 0.0 } else { m4 / (m2 * m2) };
    Ok([max, mean, if degenerate { 0.0 } else { m2 }, skewness, kurtosis])
}

/// One decision radius per class: the shared radius network applied to each
/// class's 5-statistic summary of its normalized distance column. The
/// network must map 5 inputs to 1 softplus output so radii are positive.
pub fn predict_radii(
    radius_net: &Mlp,
    table: &DistanceTable,
) -> Result<RadiusDecision, ProtoError> {
    if radius_net.input_dim() != 5 || radius_net.output_dim() != 1 {
        return Err(ProtoError::BadRadiusNet {
            detail: format!(
                "network maps {} -> {} values, need 5 -> 1",
                radius_net.input_dim(),
                radius_net.output_dim()
            ),
        });
    }
    if radius_net.output != OutputActivation::Softplus {
        return Err(ProtoError::BadRadiusNet {
            detail: "output activation must be softplus to keep radii positive".to_string(),
        });
    }
    let mut radii = BTreeMap::new();
    let mut stats = BTreeMap::new();
    for (k, &class) in table.classes.iter().enumerate() {
        let column = table.normalized_column(k);
        let s = distance_stats(&column)?;
        let (out, _) = radius_net.forward(&s)?;
        radii.insert(class.class(), out[0]);
        stats.insert(class.class(), s);
    }
    Ok(RadiusDecision { radii, stats })
}

/// Class probabilities for one embedded vector: softmax over negative raw
/// squared distances to the class centers (shifted by the minimum distance
/// inside the exponent for stability, which cancels in the ratio). Returns
/// the probabilities in [`Prototypes::classes`] order and the argmax class,
/// ties broken toward the lowest class.
pub fn classify(
    v: &[f64],
    prototypes: &Prototypes,
) -> Result<(Vec<f64>, ConditionLabel), ProtoError> {
    prototypes.validate()?;
    if v.len() != prototypes.dim() {
        return Err(ProtoError::DimensionMismatch {
            what: "query vector".to_string(),
            expected: prototypes.dim(),
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ProtoError::NonFinite {
            what: "query vector".to_string(),
        });
    }
    let classes = prototypes.classes();
    let distances: Vec<f64> = classes
        .iter()
        .map(|&c| squared_distance(v, prototypes.center(c).expect("class listed")))
        .collect();
    let min = distances.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = distances.iter().map(|d| (-(d - min)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let probabilities: Vec<f64> = weights.iter().map(|w| w / total).collect();

    let mut best = 0;
    for (i, p) in probabilities.iter().enumerate() {
        if *p > probabilities[best] {
            best = i;
        }
    }
    Ok((probabilities, classes[best]))
}

/// Nearest-center pseudo-labels for the whole unlabeled pool, with the
/// radius gate evaluated on the assigned class: `in_radius` iff the
/// normalized distance is strictly below that class's radius.
pub fn assign_pseudo_labels(
    table: &DistanceTable,
    radii: &RadiusDecision,
    unlabeled_mapped: &[Vec<f64>],
    prototypes: &Prototypes,
) -> Result<Vec<PseudoLabel>, ProtoError> {
    if unlabeled_mapped.len() != table.unlabeled_count() {
        return Err(ProtoError::DimensionMismatch {
            what: "unlabeled pool vs distance table rows".to_string(),
            expected: table.unlabeled_count(),
            got: unlabeled_mapped.len(),
        });
    }
    if prototypes.classes() != table.classes {
        return Err(ProtoError::BadRadiusNet {
            detail: "distance table and prototypes list different classes".to_string(),
        });
    }
    for &class in &table.classes {
        if radii.radius(class).is_none() {
            return Err(ProtoError::MissingClass {
                class: class.class(),
            });
        }
    }

    let mut out = Vec::with_capacity(table.unlabeled_count());
    for (n, row) in table.raw.iter().enumerate() {
        // Argmax of the distance softmax = argmin raw distance; ties break
        // toward the lowest class index.
        let mut best = 0;
        for (k, d) in row.iter().enumerate() {
            if *d < row[best] {
                best = k;
            }
        }
        let label = table.classes[best];
        let radius = radii.radius(label).expect("checked above");
        let in_radius = table.normalized[n][best] < radius;
        out.push(PseudoLabel {
            index: n,
            label,
            in_radius,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn label(k: u8) -> ConditionLabel {
        ConditionLabel::from_class(k as i64).unwrap()
    }

    #[test]
    fn single_sample_classes_center_on_themselves() {
        let mapped: Vec<(Vec<f64>, ConditionLabel)> = (1..=7)
            .map(|k| (vec![k as f64, -(k as f64)], label(k)))
            .collect();
        let protos = compute_prototypes(&mapped).unwrap();
        for (v, y) in &mapped {
            assert_eq!(protos.center(*y).unwrap(), v.as_slice());
            assert_eq!(protos.count(*y), 1);
        }
    }

    #[test]
    fn two_point_class_centers_on_midpoint() {
        let mapped = vec![
            (vec![0.0; 8], label(1)),
            (vec![2.0; 8], label(1)),
        ];
        let protos = compute_prototypes(&mapped).unwrap();
        assert_eq!(protos.center(label(1)).unwrap(), vec![1.0; 8].as_slice());
        assert_eq!(protos.count(label(1)), 2);
    }

    /// Independent oracle: per-class means recomputed with a separate
    /// accumulation pass.
    #[test]
    fn random_centers_match_brute_force_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let mapped: Vec<(Vec<f64>, ConditionLabel)> = (0..50)
            .map(|i| {
                let v: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
                (v, label((i % 7) as u8 + 1))
            })
            .collect();
        let protos = compute_prototypes(&mapped).unwrap();

        for k in 1..=7u8 {
            let members: Vec<&Vec<f64>> = mapped
                .iter()
                .filter(|(_, y)| y.class() == k)
                .map(|(v, _)| v)
                .collect();
            let mut mean = vec![0.0; 8];
            for v in &members {
                for (m, x) in mean.iter_mut().zip(v.iter()) {
                    *m += x;
                }
            }
            for m in mean.iter_mut() {
                *m /= members.len() as f64;
            }
            let center = protos.center(label(k)).unwrap();
            for (a, b) in center.iter().zip(&mean) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(protos.count(label(k)), members.len());
        }
    }

    #[test]
    fn prototype_errors_cover_bad_inputs() {
        assert!(matches!(
            compute_prototypes(&[]),
            Err(ProtoError::EmptyInput { .. })
        ));
        let ragged = vec![
            (vec![1.0, 2.0], label(1)),
            (vec![1.0], label(2)),
        ];
        assert!(matches!(
            compute_prototypes(&ragged),
            Err(ProtoError::DimensionMismatch { .. })
        ));
        let non_finite = vec![(vec![f64::NAN, 0.0], label(1))];
        assert!(matches!(
            compute_prototypes(&non_finite),
            Err(ProtoError::NonFinite { .. })
        ));
    }

    #[test]
    fn equidistant_samples_normalize_to_one() {
        let mapped = vec![(vec![0.0, 0.0], label(1))];
        let protos = compute_prototypes(&mapped).unwrap();
        // Four samples on the unit circle: all raw distances 1.
        let unlabeled = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ];
        let table = normalized_distances(&unlabeled, &protos).unwrap();
        for row in &table.normalized {
            assert!((row[0] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_sample_normalization_matches_hand_values() {
        let mapped = vec![(vec![0.0], label(1))];
        let protos = compute_prototypes(&mapped).unwrap();
        let unlabeled = vec![vec![1.0], vec![3.0_f64.sqrt()]];
        let table = normalized_distances(&unlabeled, &protos).unwrap();
        // Raw distances [1, 3]; mean 2; normalized [0.5, 1.5].
        assert!((table.normalized[0][0] - 0.5).abs() < 1e-12);
        assert!((table.normalized[1][0] - 1.5).abs() < 1e-12);
    }

    /// Independent oracle: direct evaluation of distance / column-mean.
    #[test]
    fn random_table_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let mapped: Vec<(Vec<f64>, ConditionLabel)> = (0..21)
            .map(|i| {
                let v: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 2.0).collect();
                (v, label((i % 7) as u8 + 1))
            })
            .collect();
        let protos = compute_prototypes(&mapped).unwrap();
        let unlabeled: Vec<Vec<f64>> = (0..13)
            .map(|_| (0..8).map(|_| rng.random::<f64>() * 2.0).collect())
            .collect();
        let table = normalized_distances(&unlabeled, &protos).unwrap();

        for (k, &class) in table.classes.iter().enumerate() {
            let center = protos.center(class).unwrap();
            let dists: Vec<f64> = unlabeled
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(center)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .collect();
            let mean: f64 = dists.iter().sum::<f64>() / dists.len() as f64;
            for (n, d) in dists.iter().enumerate() {
                assert!((table.raw[n][k] - d).abs() < 1e-12);
                assert!((table.normalized[n][k] - d / mean).abs() < 1e-12);
            }
            // Column-mean invariant.
            let col_mean: f64 =
                table.normalized.iter().map(|r| r[k]).sum::<f64>() / unlabeled.len() as f64;
            assert!((col_mean - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_samples_on_center_is_degenerate() {
        let mapped = vec![(vec![2.0, 2.0], label(3))];
        let protos = compute_prototypes(&mapped).unwrap();
        let unlabeled = vec![vec![2.0, 2.0], vec![2.0, 2.0]];
        assert!(matches!(
            normalized_distances(&unlabeled, &protos),
            Err(ProtoError::DegenerateColumn { class: 3 })
        ));
    }

    #[test]
    fn distance_stats_match_hand_computed_moments() {
        // Mean 3; m2 = 2; symmetric so m3 = 0; m4 = 34/5 = 6.8; kurtosis
        // 6.8 / 4 = 1.7.
        let [max, mean, var, skew, kurt] = distance_stats(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(max, 5.0);
        assert!((mean - 3.0).abs() < 1e-15);
        assert!((var - 2.0).abs() < 1e-15);
        assert!(skew.abs() < 1e-15);
        assert!((kurt - 1.7).abs() < 1e-12);
    }

    #[test]
    fn constant_column_uses_degenerate_convention() {
        assert_eq!(distance_stats(&[1.0, 1.0, 1.0]).unwrap(), [1.0, 1.0, 0.0, 0.0, 0.0]);
        // A constant whose mean rounds: still treated as degenerate.
        let [_, _, var, skew, kurt] = distance_stats(&[0.1, 0.1, 0.1]).unwrap();
        assert_eq!(var, 0.0);
        assert_eq!(skew, 0.0);
        assert_eq!(kurt, 0.0);

        assert!(matches!(
            distance_stats(&[1.0]),
            Err(ProtoError::TooFewSamples { .. })
        ));
    }

    fn toy_table() -> (Vec<Vec<f64>>, Prototypes, DistanceTable) {
        // 1-D embeddings: centers at 0 (class 1) and 10 (class 2).
        let mapped = vec![(vec![0.0], label(1)), (vec![10.0], label(2))];
        let protos = compute_prototypes(&mapped).unwrap();
        let unlabeled = vec![vec![1.0], vec![2.0], vec![9.0], vec![11.0], vec![5.0]];
        let table = normalized_distances(&unlabeled, &protos).unwrap();
        (unlabeled, protos, table)
    }

    #[test]
    fn zero_weight_radius_network_gives_ln_two() {
        let (_, _, table) = toy_table();
        let net = Mlp::zeros(&[5, 16, 1], OutputActivation::Softplus).unwrap();
        let decision = predict_radii(&net, &table).unwrap();
        for k in [1u8, 2] {
            let r = decision.radii[&k];
            assert!((r - std::f64::consts::LN_2).abs() < 1e-15, "r = {r}");
        }
    }

    #[test]
    fn identical_stat_columns_give_identical_radii() {
        // Two classes whose centers coincide: identical distance columns.
        let mapped = vec![(vec![1.0, 1.0], label(4)), (vec![1.0, 1.0], label(6))];
        let protos = compute_prototypes(&mapped).unwrap();
        let unlabeled = vec![vec![0.0, 0.0], vec![2.0, 3.0], vec![-1.0, 1.0]];
        let table = normalized_distances(&unlabeled, &protos).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Mlp::new(&[5, 16, 1], OutputActivation::Softplus, &mut rng).unwrap();
        let decision = predict_radii(&net, &table).unwrap();
        assert_eq!(decision.radii[&4], decision.radii[&6]);
        assert!(decision.radii[&4] > 0.0);
    }

    /// Independent oracle: hand-rolled forward pass over the same weights.
    #[test]
    fn radius_prediction_matches_matmul_oracle() {
        let (_, _, table) = toy_table();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let net = Mlp::new(&[5, 16, 1], OutputActivation::Softplus, &mut rng).unwrap();
        let decision = predict_radii(&net, &table).unwrap();

        for (k, &class) in table.classes.iter().enumerate() {
            let stats = distance_stats(&table.normalized_column(k)).unwrap();
            let mut hidden = vec![0.0; 16];
            for (o, h) in hidden.iter_mut().enumerate() {
                let mut acc = net.layers[0].b[o];
                for (i, s) in stats.iter().enumerate() {
                    acc += net.layers[0].w[o][i] * s;
                }
                *h = acc.max(0.0);
            }
            let mut z = net.layers[1].b[0];
            for (i, h) in hidden.iter().enumerate() {
                z += net.layers[1].w[0][i] * h;
            }
            let expected = crate::nnet::softplus(z);
            let got = decision.radii[&class.class()];
            assert!((got - expected).abs() < 1e-12);
            assert!(got > 0.0);
        }

        let bad = Mlp::zeros(&[4, 1], OutputActivation::Softplus).unwrap();
        assert!(matches!(
            predict_radii(&bad, &table),
            Err(ProtoError::BadRadiusNet { .. })
        ));
        let not_softplus = Mlp::zeros(&[5, 1], OutputActivation::Identity).unwrap();
        assert!(matches!(
            predict_radii(&not_softplus, &table),
            Err(ProtoError::BadRadiusNet { .. })
        ));
    }

    #[test]
    fn equidistant_query_gets_uniform_probabilities() {
        // Centers on the coordinate axes: the origin is equidistant.
        let mapped: Vec<(Vec<f64>, ConditionLabel)> = (0..7)
            .map(|k| {
                let mut v = vec![0.0; 7];
                v[k] = 1.0;
                (v, label(k as u8 + 1))
            })
            .collect();
        let protos = compute_prototypes(&mapped).unwrap();
        let (probs, best) = classify(&vec![0.0; 7], &protos).unwrap();
        for p in &probs {
            assert!((p - 1.0 / 7.0).abs() < 1e-12);
        }
        // Exact tie: lowest class wins.
        assert_eq!(best, label(1));
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dominant_center_takes_nearly_all_mass() {
        let mut mapped = vec![(vec![0.0, 0.0], label(1))];
        for k in 2..=7u8 {
            mapped.push((vec![10.0, (k - 2) as f64 * 1e-9], label(k)));
        }
        let protos = compute_prototypes(&mapped).unwrap();
        let (probs, best) = classify(&[0.0, 0.0], &protos).unwrap();
        assert_eq!(best, label(1));
        // Squared distance 100 to the far centers: P(1) = 1/(1 + 6e⁻¹⁰⁰).
        let expected = 1.0 / (1.0 + 6.0 * (-100.0_f64).exp());
        assert!((probs[0] - expected).abs() < 1e-20);
    }

    /// Independent oracle: brute-force softmax over negative squared
    /// distances, plus the shift-invariance property.
    #[test]
    fn classification_matches_brute_force_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mapped: Vec<(Vec<f64>, ConditionLabel)> = (0..3)
            .map(|k| {
                let v: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                (v, label(k as u8 + 1))
            })
            .collect();
        let protos = compute_prototypes(&mapped).unwrap();
        let v: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
        let (probs, best) = classify(&v, &protos).unwrap();

        let dists: Vec<f64> = (1..=3u8)
            .map(|k| squared_distance(&v, protos.center(label(k)).unwrap()))
            .collect();
        let weights: Vec<f64> = dists.iter().map(|d| (-d).exp()).collect();
        let total: f64 = weights.iter().sum();
        for (p, w) in probs.iter().zip(&weights) {
            assert!((p - w / total).abs() < 1e-12);
        }
        // Adding a constant to every squared distance leaves the
        // distribution unchanged.
        let shifted: Vec<f64> = dists.iter().map(|d| (-(d + 3.7)).exp()).collect();
        let shifted_total: f64 = shifted.iter().sum();
        let mut arg = 0;
        for (i, w) in shifted.iter().enumerate() {
            if *w > shifted[arg] {
                arg = i;
            }
        }
        assert_eq!(best, label(arg as u8 + 1));
        for (p, w) in probs.iter().zip(&shifted) {
            assert!((p - w / shifted_total).abs() < 1e-12);
        }
    }

    #[test]
    fn pseudo_labels_follow_radius_gate() {
        let (unlabeled, protos, table) = toy_table();
        // Raw distances to (c1, c2): s0 (1, 81), s1 (4, 64), s2 (81, 1),
        // s3 (121, 1), s4 (25, 25 — tie, class 1 wins).
        // Column means: 232/5 = 46.4 and 172/5 = 34.4.
        let radii = RadiusDecision {
            radii: [(1u8, 0.5), (2u8, 0.03)].into_iter().collect(),
            stats: BTreeMap::new(),
        };
        let labels = assign_pseudo_labels(&table, &radii, &unlabeled, &protos).unwrap();
        let classes: Vec<u8> = labels.iter().map(|p| p.label.class()).collect();
        assert_eq!(classes, vec![1, 1, 2, 2, 1]);
        // Normalized to assigned class: 1/46.4, 4/46.4, 1/34.4, 1/34.4,
        // 25/46.4 = 0.5388 > 0.5.
        let in_radius: Vec<bool> = labels.iter().map(|p| p.in_radius).collect();
        assert_eq!(in_radius, vec![true, true, true, true, false]);

        // Degenerate radii.
        let zero = RadiusDecision {
            radii: [(1u8, 0.0), (2u8, 0.0)].into_iter().collect(),
            stats: BTreeMap::new(),
        };
        let none = assign_pseudo_labels(&table, &zero, &unlabeled, &protos).unwrap();
        assert!(none.iter().all(|p| !p.in_radius));

        let huge = RadiusDecision {
            radii: [(1u8, 1e9), (2u8, 1e9)].into_iter().collect(),
            stats: BTreeMap::new(),
        };
        let all = assign_pseudo_labels(&table, &huge, &unlabeled, &protos).unwrap();
        assert!(all.iter().all(|p| p.in_radius));
    }

    #[test]
    fn monotone_gate_under_radius_increase() {
        let (unlabeled, protos, table) = toy_table();
        let mut previous: Option<Vec<usize>> = None;
        for step in 0..20 {
            let r = 0.05 + step as f64 * 0.15;
            let radii = RadiusDecision {
                radii: [(1u8, r), (2u8, r)].into_iter().collect(),
                stats: BTreeMap::new(),
            };
            let labels = assign_pseudo_labels(&table, &radii, &unlabeled, &protos).unwrap();
            let members: Vec<usize> = labels
                .iter()
                .filter(|p| p.in_radius)
                .map(|p| p.index)
                .collect();
            if let Some(prev) = &previous {
                assert!(prev.iter().all(|i| members.contains(i)));
            }
            previous = Some(members);
        }
    }

    #[test]
    fn empty_pseudo_set_reproduces_plain_prototypes() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mapped: Vec<(Vec<f64>, ConditionLabel)> = (0..20)
            .map(|i| {
                let v: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
                (v, label((i % 7) as u8 + 1))
            })
            .collect();
        let direct = compute_prototypes(&mapped).unwrap();
        let updated = update_prototypes(&mapped, &[]).unwrap();
        assert_eq!(direct, updated);
    }

    #[test]
    fn correction_averages_in_radius_vectors_only() {
        let labeled = vec![(vec![2.0, 0.0], label(1)), (vec![0.0, 4.0], label(2))];
        let pseudo = vec![
            (
                vec![4.0, 2.0],
                PseudoLabel {
                    index: 0,
                    label: label(1),
                    in_radius: true,
                },
            ),
            (
                vec![100.0, 100.0],
                PseudoLabel {
                    index: 1,
                    label: label(1),
                    in_radius: false,
                },
            ),
        ];
        let protos = update_prototypes(&labeled, &pseudo).unwrap();
        // (a + b) / 2 for class 1; class 2 untouched.
        assert_eq!(protos.center(label(1)).unwrap(), [3.0, 1.0].as_slice());
        assert_eq!(protos.count(label(1)), 2);
        assert_eq!(protos.center(label(2)).unwrap(), [0.0, 4.0].as_slice());
        assert_eq!(protos.count(label(2)), 1);
    }

    /// Independent oracle: weighted means recomputed directly.
    #[test]
    fn random_correction_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let labeled: Vec<(Vec<f64>, ConditionLabel)> = (0..30)
            .map(|i| {
                let v: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 3.0).collect();
                (v, label((i % 7) as u8 + 1))
            })
            .collect();
        let pseudo: Vec<(Vec<f64>, PseudoLabel)> = (0..40)
            .map(|i| {
                let v: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 3.0).collect();
                (
                    v,
                    PseudoLabel {
                        index: i,
                        label: label((i % 7) as u8 + 1),
                        in_radius: rng.random::<f64>() < 0.5,
                    },
                )
            })
            .collect();
        let protos = update_prototypes(&labeled, &pseudo).unwrap();

        for k in 1..=7u8 {
            let mut sum = vec![0.0; 8];
            let mut count = 0usize;
            for (v, y) in &labeled {
                if y.class() == k {
                    for (s, x) in sum.iter_mut().zip(v) {
                        *s += x;
                    }
                    count += 1;
                }
            }
            for (v, p) in &pseudo {
                if p.label.class() == k && p.in_radius {
                    for (s, x) in sum.iter_mut().zip(v) {
                        *s += x;
                    }
                    count += 1;
                }
            }
            let center = protos.center(label(k)).unwrap();
            for (c, s) in center.iter().zip(&sum) {
                assert!((c - s / count as f64).abs() < 1e-12);
            }
            assert_eq!(protos.count(label(k)), count);
        }
    }

    #[test]
    fn in_radius_pseudo_class_must_be_covered_by_labels() {
        let labeled = vec![(vec![1.0], label(1))];
        let pseudo = vec![(
            vec![2.0],
            PseudoLabel {
                index: 0,
                label: label(5),
                in_radius: true,
            },
        )];
        assert!(matches!(
            update_prototypes(&labeled, &pseudo),
            Err(ProtoError::MissingClass { class: 5 })
        ));
        // Out-of-radius pseudo-labels of uncovered classes are fine — they
        // contribute nothing.
        let pseudo_out = vec![(
            vec![2.0],
            PseudoLabel {
                index: 0,
                label: label(5),
                in_radius: false,
            },
        )];
        assert!(update_prototypes(&labeled, &pseudo_out).is_ok());
    }
}
