//! K-nearest-neighbors over Euclidean distance.

use serde::{Deserialize, Serialize};

use super::{check_matrix, BaselineError};
use crate::features::{ConditionLabel, CLASS_COUNT};

/// A fitted KNN classifier: the training vectors verbatim plus the neighbor
/// count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    vectors: Vec<Vec<f64>>,
    labels: Vec<ConditionLabel>,
    k: usize,
}

impl KnnModel {
    /// Neighbor count.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of stored training vectors.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    /// True when no vectors are stored (never the case for a fitted model).
    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Dimension of the stored vectors.
    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

/// Stores the training set for nearest-neighbor lookup.
///
/// Requires `1 ≤ k ≤ |train|`, a non-empty training set, and consistent
/// finite vectors.
pub fn knn_fit(
    train: &[(Vec<f64>, ConditionLabel)],
    k: usize,
) -> Result<KnnModel, BaselineError> {
    let rows: Vec<&[f64]> = train.iter().map(|(x, _)| x.as_slice()).collect();
    check_matrix("knn training vector", &rows)?;
    if k == 0 || k > train.len() {
        return Err(BaselineError::BadNeighborCount {
            k,
            max: train.len(),
        });
    }
    Ok(KnnModel {
        vectors: train.iter().map(|(x, _)| x.clone()).collect(),
        labels: train.iter().map(|(_, y)| *y).collect(),
        k,
    })
}

/// Majority vote over the `k` nearest stored vectors by Euclidean distance.
///
/// Equal distances are broken by lower stored index; vote ties go to the
/// lowest class.
pub fn knn_predict(model: &KnnModel, v: &[f64]) -> Result<ConditionLabel, BaselineError> {
    if v.len() != model.dim() {
        return Err(BaselineError::DimensionMismatch {
            what: "knn query".to_string(),
            expected: model.dim(),
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(BaselineError::NonFinite {
            what: "knn query".to_string(),
        });
    }

    // Squared distances order identically to true Euclidean distances.
    let mut order: Vec<(f64, usize)> = model
        .vectors
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let d2: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        })
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));

    let mut votes = [0usize; CLASS_COUNT];
    for &(_, i) in order.iter().take(model.k) {
        votes[model.labels[i].index()] += 1;
    }
    let mut best = 0usize;
    for (i, &count) in votes.iter().enumerate() {
        if count > votes[best] {
            best = i;
        }
    }
    Ok(ConditionLabel::from_index(best).expect("index in range"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn label(class: u8) -> ConditionLabel {
        ConditionLabel::from_class(class as i64).unwrap()
    }

    fn random_points(
        n: usize,
        dim: usize,
        classes: u8,
        rng: &mut ChaCha8Rng,
    ) -> Vec<(Vec<f64>, ConditionLabel)> {
        (0..n)
            .map(|i| {
                let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
                (x, label(1 + (i as u8 % classes)))
            })
            .collect()
    }

    /// Independent oracle: selects the k nearest by repeated linear scans
    /// (no sorting), then votes by scanning classes in ascending order.
    fn oracle_predict(
        train: &[(Vec<f64>, ConditionLabel)],
        k: usize,
        v: &[f64],
    ) -> ConditionLabel {
        let d2 = |x: &[f64]| -> f64 { x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum() };
        let mut taken = vec![false; train.len()];
        let mut votes = [0usize; CLASS_COUNT];
        for _ in 0..k {
            let mut best: Option<usize> = None;
            for (i, (x, _)) in train.iter().enumerate() {
                if taken[i] {
                    continue;
                }
                best = match best {
                    None => Some(i),
                    Some(j) if d2(x) < d2(&train[j].0) => Some(i),
                    keep => keep,
                };
            }
            let chosen = best.expect("k ≤ n");
            taken[chosen] = true;
            votes[train[chosen].1.index()] += 1;
        }
        let mut best_class = 0;
        for (i, &count) in votes.iter().enumerate() {
            if count > votes[best_class] {
                best_class = i;
            }
        }
        ConditionLabel::from_index(best_class).unwrap()
    }

    #[test]
    fn k1_returns_the_label_of_an_exactly_matching_vector() {
        let train = vec![
            (vec![0.0, 0.0], label(3)),
            (vec![5.0, 5.0], label(1)),
            (vec![-2.0, 7.0], label(6)),
        ];
        let model = knn_fit(&train, 1).unwrap();
        for (x, y) in &train {
            assert_eq!(knn_predict(&model, x).unwrap(), *y);
        }
    }

    #[test]
    fn unanimous_training_labels_win_regardless_of_query() {
        let train: Vec<_> = (0..8)
            .map(|i| (vec![i as f64, -(i as f64)], label(5)))
            .collect();
        let model = knn_fit(&train, train.len()).unwrap();
        assert_eq!(knn_predict(&model, &[100.0, 100.0]).unwrap(), label(5));
        assert_eq!(knn_predict(&model, &[-3.5, 0.0]).unwrap(), label(5));
    }

    #[test]
    fn agrees_with_the_linear_scan_oracle_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let train = random_points(20, 3, 7, &mut rng);
        let model = knn_fit(&train, 5).unwrap();
        for _ in 0..100 {
            let q: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            assert_eq!(
                knn_predict(&model, &q).unwrap(),
                oracle_predict(&train, 5, &q)
            );
        }
    }

    #[test]
    fn distance_ties_break_toward_the_lower_stored_index() {
        // Both stored points sit exactly 1.0 from the query.
        let train = vec![(vec![0.0], label(4)), (vec![2.0], label(2))];
        let model = knn_fit(&train, 1).unwrap();
        assert_eq!(knn_predict(&model, &[1.0]).unwrap(), label(4));

        // Swapping storage order flips the winner: the tie-break is on the
        // index, not the value.
        let swapped = vec![(vec![2.0], label(2)), (vec![0.0], label(4))];
        let model = knn_fit(&swapped, 1).unwrap();
        assert_eq!(knn_predict(&model, &[1.0]).unwrap(), label(2));
    }

    #[test]
    fn vote_ties_go_to_the_lowest_class() {
        let train = vec![
            (vec![-1.0], label(6)),
            (vec![1.0], label(3)),
            (vec![-9.0], label(1)),
            (vec![9.0], label(1)),
        ];
        // k = 2 catches one vote each for classes 6 and 3 → class 3 wins.
        let model = knn_fit(&train, 2).unwrap();
        assert_eq!(knn_predict(&model, &[0.0]).unwrap(), label(3));
    }

    #[test]
    fn predictions_are_invariant_under_training_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let train = random_points(30, 4, 7, &mut rng);
        let mut shuffled = train.clone();
        shuffled.reverse();
        shuffled.swap(0, 15);
        shuffled.swap(3, 22);
        let a = knn_fit(&train, 10).unwrap();
        let b = knn_fit(&shuffled, 10).unwrap();
        // Random real-valued points have no exact distance ties, so the
        // index tie-break never binds and order cannot matter.
        for _ in 0..50 {
            let q: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            assert_eq!(knn_predict(&a, &q).unwrap(), knn_predict(&b, &q).unwrap());
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(matches!(
            knn_fit(&[], 1),
            Err(BaselineError::EmptyTrainingSet)
        ));
        let train = vec![(vec![0.0], label(1)), (vec![1.0], label(2))];
        assert!(matches!(
            knn_fit(&train, 0),
            Err(BaselineError::BadNeighborCount { k: 0, max: 2 })
        ));
        assert!(matches!(
            knn_fit(&train, 3),
            Err(BaselineError::BadNeighborCount { k: 3, max: 2 })
        ));
        let ragged = vec![(vec![0.0], label(1)), (vec![1.0, 2.0], label(2))];
        assert!(matches!(
            knn_fit(&ragged, 1),
            Err(BaselineError::DimensionMismatch { .. })
        ));
        let model = knn_fit(&train, 1).unwrap();
        assert!(matches!(
            knn_predict(&model, &[1.0, 2.0]),
            Err(BaselineError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            knn_predict(&model, &[f64::NAN]),
            Err(BaselineError::NonFinite { .. })
        ));
    }
}
