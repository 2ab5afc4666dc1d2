//! One-vs-rest soft-margin SVM over an explicit degree-2 polynomial feature
//! expansion.
//!
//! Instead of a kernelized dual solver, inputs are expanded to the monomial
//! basis `[x_i] ∪ [x_i·x_j for i ≤ j]` and a linear hinge model with an
//! unregularized bias is trained per class by deterministic full-batch
//! subgradient descent. With the bias, that basis spans exactly the
//! polynomials of degree ≤ 2, so the hypothesis class matches a degree-2
//! polynomial kernel machine.

use serde::{Deserialize, Serialize};

use super::{check_matrix, BaselineError};
use crate::features::ConditionLabel;

/// A fitted one-vs-rest polynomial SVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Classes present in training, ascending; scores align with this list.
    classes: Vec<ConditionLabel>,
    /// Per-class weights over the expanded features.
    weights: Vec<Vec<f64>>,
    /// Per-class unregularized bias.
    biases: Vec<f64>,
    /// Regularization constant used in training.
    reg: f64,
    /// Dimension of the raw (unexpanded) inputs.
    input_dim: usize,
}

impl SvmModel {
    /// The classes this model can emit, ascending.
    pub fn classes(&self) -> &[ConditionLabel] {
        &self.classes
    }

    /// Dimension of the raw inputs the model expects.
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }
}

/// Expands a vector to the degree-2 monomial basis: all `x_i` followed by all
/// products `x_i·x_j` with `i ≤ j` (the constant term lives in the model
/// bias). An `n`-dimensional input becomes `n + n(n+1)/2` features.
pub fn polynomial_features(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + n * (n + 1) / 2);
    out.extend_from_slice(x);
    for i in 0..n {
        for j in i..n {
            out.push(x[i] * x[j]);
        }
    }
    out
}

/// Trains one binary hinge model per class present in `train`.
///
/// Each class's objective is `(reg/2)·‖w‖² + mean hinge loss` over the
/// expanded features, minimized by full-batch subgradient descent with step
/// `0.5/√(t+1)` at epoch `t`; a sample is hinge-active only while its margin
/// is strictly below 1. Training is deterministic (zero initialization, no
/// randomness), and duplicating every training sample leaves the averaged
/// objective — hence the learned scores — unchanged up to rounding.
pub fn svm_fit(
    train: &[(Vec<f64>, ConditionLabel)],
    reg: f64,
    epochs: usize,
) -> Result<SvmModel, BaselineError> {
    let rows: Vec<&[f64]> = train.iter().map(|(x, _)| x.as_slice()).collect();
    let input_dim = check_matrix("svm training vector", &rows)?;
    if !(reg > 0.0 && reg.is_finite()) {
        return Err(BaselineError::BadParameter {
            detail: format!("regularization constant must be positive and finite, got {reg}"),
        });
    }
    let mut classes: Vec<ConditionLabel> = train.iter().map(|(_, y)| *y).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(BaselineError::SingleClass);
    }

    let expanded: Vec<Vec<f64>> = train.iter().map(|(x, _)| polynomial_features(x)).collect();
    let dim = expanded[0].len();
    let n = expanded.len() as f64;

    let mut weights = vec![vec![0.0; dim]; classes.len()];
    let mut biases = vec![0.0; classes.len()];
    for (ci, class) in classes.iter().enumerate() {
        let targets: Vec<f64> = train
            .iter()
            .map(|(_, y)| if y == class { 1.0 } else { -1.0 })
            .collect();
        let w = &mut weights[ci];
        let b = &mut biases[ci];
        for t in 0..epochs {
            let step = 0.5 / ((t + 1) as f64).sqrt();
            // Subgradient of the averaged hinge term.
            let mut gw = vec![0.0; dim];
            let mut gb = 0.0;
            for (phi, &y) in expanded.iter().zip(&targets) {
                let margin = y * (dot(w, phi) + *b);
                if margin < 1.0 {
                    for (g, v) in gw.iter_mut().zip(phi) {
                        *g -= y * v;
                    }
                    gb -= y;
                }
            }
            for (wi, gi) in w.iter_mut().zip(&gw) {
                *wi -= step * (reg * *wi + gi / n);
            }
            *b -= step * gb / n;
        }
    }

    Ok(SvmModel {
        classes,
        weights,
        biases,
        reg,
        input_dim,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Raw one-vs-rest margin scores, aligned with [`SvmModel::classes`].
pub fn svm_scores(model: &SvmModel, v: &[f64]) -> Result<Vec<f64>, BaselineError> {
    if v.len() != model.input_dim {
        return Err(BaselineError::DimensionMismatch {
            what: "svm query".to_string(),
            expected: model.input_dim,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(BaselineError::NonFinite {
            what: "svm query".to_string(),
        });
    }
    let phi = polynomial_features(v);
    Ok(model
        .weights
        .iter()
        .zip(&model.biases)
        .map(|(w, b)| dot(w, &phi) + b)
        .collect())
}

/// Predicts the class with the largest margin score; ties go to the lowest
/// class.
pub fn svm_predict(model: &SvmModel, v: &[f64]) -> Result<ConditionLabel, BaselineError> {
    let scores = svm_scores(model, v)?;
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(model.classes[best])
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

    fn training_accuracy(model: &SvmModel, train: &[(Vec<f64>, ConditionLabel)]) -> f64 {
        let correct = train
            .iter()
            .filter(|(x, y)| svm_predict(model, x).unwrap() == *y)
            .count();
        correct as f64 / train.len() as f64
    }

    #[test]
    fn expansion_lists_coordinates_then_upper_triangle_products() {
        assert_eq!(
            polynomial_features(&[2.0, 3.0]),
            vec![2.0, 3.0, 4.0, 6.0, 9.0]
        );
        // n + n(n+1)/2 features: 8 → 44, 24 → 324.
        assert_eq!(polynomial_features(&[1.0; 8]).len(), 44);
        assert_eq!(polynomial_features(&[1.0; 24]).len(), 324);
        assert!(polynomial_features(&[]).is_empty());
    }

    #[test]
    fn separated_one_dimensional_classes_are_learned_perfectly() {
        let mut train = Vec::new();
        for i in 0..10 {
            train.push((vec![-1.0 - 0.01 * i as f64], label(1)));
            train.push((vec![1.0 + 0.01 * i as f64], label(2)));
        }
        let model = svm_fit(&train, 1e-3, 200).unwrap();
        assert_eq!(training_accuracy(&model, &train), 1.0);
    }

    #[test]
    fn scoring_and_fitting_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train: Vec<_> = (0..30)
            .map(|i| {
                let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                (x, label(1 + (i % 3) as u8))
            })
            .collect();
        let a = svm_fit(&train, 1e-2, 150).unwrap();
        let b = svm_fit(&train, 1e-2, 150).unwrap();
        assert_eq!(a, b);
        let q = vec![0.3, -0.2, 0.9, 0.1];
        assert_eq!(svm_scores(&a, &q).unwrap(), svm_scores(&b, &q).unwrap());
    }

    #[test]
    fn degree_two_expansion_solves_xor_where_linear_cannot() {
        let train = vec![
            (vec![0.0, 0.0], label(1)),
            (vec![1.0, 1.0], label(1)),
            (vec![0.0, 1.0], label(2)),
            (vec![1.0, 0.0], label(2)),
        ];
        let model = svm_fit(&train, 1e-3, 3000).unwrap();
        assert_eq!(
            training_accuracy(&model, &train),
            1.0,
            "degree-2 expansion failed on the four XOR points"
        );

        // A linear decision rule w·x + b caps at 3 of 4 correct: exhaustive
        // grid over directions and offsets never beats 75%.
        let mut best_linear = 0usize;
        let grid: Vec<f64> = (-20..=20).map(|i| i as f64 / 5.0).collect();
        for &w1 in &grid {
            for &w2 in &grid {
                for &b in &grid {
                    let correct = train
                        .iter()
                        .filter(|(x, y)| {
                            let score = w1 * x[0] + w2 * x[1] + b;
                            let predicted = if score > 0.0 { label(1) } else { label(2) };
                            predicted == *y
                        })
                        .count();
                    best_linear = best_linear.max(correct);
                }
            }
        }
        assert_eq!(best_linear, 3, "a linear rule should top out at 3/4");
    }

    #[test]
    fn duplicating_every_sample_leaves_scores_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut train = Vec::new();
        for i in 0..3u8 {
            let center = [i as f64 * 4.0, -(i as f64) * 3.0, 1.0 + i as f64];
            for _ in 0..12 {
                let x: Vec<f64> = center
                    .iter()
                    .map(|c| c + 0.3 * (rng.random::<f64>() - 0.5))
                    .collect();
                train.push((x, label(1 + i)));
            }
        }
        let doubled: Vec<_> = train.iter().chain(train.iter()).cloned().collect();
        let a = svm_fit(&train, 1e-2, 200).unwrap();
        let b = svm_fit(&doubled, 1e-2, 200).unwrap();
        for (x, y) in &train {
            let sa = svm_scores(&a, x).unwrap();
            let sb = svm_scores(&b, x).unwrap();
            for (u, v) in sa.iter().zip(&sb) {
                assert!(
                    (u - v).abs() < 1e-6,
                    "scores diverged under duplication: {u} vs {v}"
                );
            }
            assert_eq!(svm_predict(&a, x).unwrap(), *y);
            assert_eq!(svm_predict(&b, x).unwrap(), *y);
        }
    }

    #[test]
    fn well_separated_blobs_are_classified() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut train = Vec::new();
        for class in 0..4u8 {
            for _ in 0..15 {
                let x: Vec<f64> = (0..4)
                    .map(|d| {
                        let center = if d == class as usize { 3.0 } else { 0.0 };
                        center + 0.4 * (rng.random::<f64>() - 0.5)
                    })
                    .collect();
                train.push((x, label(1 + class)));
            }
        }
        let model = svm_fit(&train, 1e-3, 300).unwrap();
        assert!(training_accuracy(&model, &train) >= 0.95);
        assert_eq!(model.classes().len(), 4);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(matches!(
            svm_fit(&[], 1e-3, 10),
            Err(BaselineError::EmptyTrainingSet)
        ));
        let single = vec![(vec![0.0], label(1)), (vec![1.0], label(1))];
        assert!(matches!(
            svm_fit(&single, 1e-3, 10),
            Err(BaselineError::SingleClass)
        ));
        let two = vec![(vec![0.0], label(1)), (vec![1.0], label(2))];
        assert!(matches!(
            svm_fit(&two, 0.0, 10),
            Err(BaselineError::BadParameter { .. })
        ));
        let model = svm_fit(&two, 1e-3, 10).unwrap();
        assert!(matches!(
            svm_predict(&model, &[1.0, 2.0]),
            Err(BaselineError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            svm_predict(&model, &[f64::INFINITY]),
            Err(BaselineError::NonFinite { .. })
        ));
    }
}
