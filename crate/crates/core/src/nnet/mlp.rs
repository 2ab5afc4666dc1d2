//! Fully-connected networks with ReLU hidden layers, manual backpropagation,
//! and optional inverted dropout on the hidden activations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{relu, sigmoid, softplus, NnetError};

/// One dense layer: `z = W·x + b` with `W` stored row-major as `w[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Dense {
    /// A zero-filled layer of the given shape.
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Dense {
            w: vec![vec![0.0; in_dim]; out_dim],
            b: vec![0.0; out_dim],
        }
    }

    /// He-uniform fan-in initialization: weights uniform on ±√(6 / fan_in),
    /// biases zero.
    pub fn he_uniform<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / in_dim as f64).sqrt();
        let w = (0..out_dim)
            .map(|_| {
                (0..in_dim)
                    .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
                    .collect()
            })
            .collect();
        Dense {
            w,
            b: vec![0.0; out_dim],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.b.len()
    }

    pub fn in_dim(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Adds `scale * other` element-wise (gradient accumulation).
    pub fn axpy(&mut self, other: &Dense, scale: f64) {
        for (row, orow) in self.w.iter_mut().zip(&other.w) {
            for (v, o) in row.iter_mut().zip(orow) {
                *v += scale * o;
            }
        }
        for (v, o) in self.b.iter_mut().zip(&other.b) {
            *v += scale * o;
        }
    }
}

/// Activation applied to the final layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    /// Unconstrained output (embeddings).
    Identity,
    /// `ln(1 + eˣ)` — strictly positive output (decision radii).
    Softplus,
}

/// A multilayer perceptron: ReLU on every hidden layer, a configurable
/// activation on the output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub output: OutputActivation,
}

/// Cached forward activations, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct GradientTape {
    input: Vec<f64>,
    /// Pre-activation `z` per layer.
    pre: Vec<Vec<f64>>,
    /// Post-activation output per layer (masked where dropout applies).
    act: Vec<Vec<f64>>,
    /// Dropout masks per hidden layer, when the forward pass used them.
    masks: Option<Vec<Vec<f64>>>,
    dims: Vec<usize>,
}

impl GradientTape {
    /// Smallest |pre-activation| over all ReLU inputs in this pass; a finite-
    /// difference check should skip coordinates when this is nearly zero
    /// because the loss is locally non-differentiable there.
    pub fn min_abs_preactivation(&self) -> f64 {
        let hidden = self.pre.len().saturating_sub(1);
        self.pre[..hidden]
            .iter()
            .flatten()
            .map(|z| z.abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// The network output recorded by the forward pass.
    pub fn output(&self) -> &[f64] {
        self.act.last().expect("tape always has at least one layer")
    }
}

/// Parameter gradients, shaped exactly like [`Mlp::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl MlpGrads {
    /// Zero gradients matching a network's shape.
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            layers: mlp
                .layers
                .iter()
                .map(|l| Dense::zeros(l.out_dim(), l.in_dim()))
                .collect(),
        }
    }

    /// Adds `scale * other` (accumulation across samples / loss terms).
    pub fn axpy(&mut self, other: &MlpGrads, scale: f64) {
        for (mine, theirs) in self.layers.iter_mut().zip(&other.layers) {
            mine.axpy(theirs, scale);
        }
    }

    /// Flattens to the same order as [`Mlp::flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        flatten_dense(&self.layers)
    }
}

fn flatten_dense(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in layers {
        for row in &layer.w {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&layer.b);
    }
    out
}

fn unflatten_dense(layers: &mut [Dense], values: &[f64]) -> Result<(), NnetError> {
    let expected: usize = layers
        .iter()
        .map(|l| l.out_dim() * l.in_dim() + l.out_dim())
        .sum();
    if values.len() != expected {
        return Err(NnetError::ShapeMismatch {
            detail: format!("expected {expected} flat parameters, got {}", values.len()),
        });
    }
    let mut cursor = values.iter();
    for layer in layers {
        for row in layer.w.iter_mut() {
            for v in row.iter_mut() {
                *v = *cursor.next().unwrap();
            }
        }
        for v in layer.b.iter_mut() {
            *v = *cursor.next().unwrap();
        }
    }
    Ok(())
}

impl Mlp {
    /// Builds a seeded He-uniform network with the given layer sizes
    /// (`dims[0]` inputs through `dims.last()` outputs).
    pub fn new<R: Rng>(
        dims: &[usize],
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self, NnetError> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(NnetError::BadArchitecture {
                detail: format!("layer sizes {dims:?} must list at least input and output, all positive"),
            });
        }
        let layers = dims
            .windows(2)
            .map(|pair| Dense::he_uniform(pair[1], pair[0], rng))
            .collect();
        Ok(Mlp { layers, output })
    }

    /// A zero-parameter network of the given shape.
    pub fn zeros(dims: &[usize], output: OutputActivation) -> Result<Self, NnetError> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(NnetError::BadArchitecture {
                detail: format!("layer sizes {dims:?} must list at least input and output, all positive"),
            });
        }
        let layers = dims
            .windows(2)
            .map(|pair| Dense::zeros(pair[1], pair[0]))
            .collect();
        Ok(Mlp { layers, output })
    }

    /// Layer sizes, input first.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Dense::out_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::out_dim)
    }

    /// Checks that adjacent layer dimensions chain correctly.
    pub fn validate(&self) -> Result<(), NnetError> {
        if self.layers.is_empty() {
            return Err(NnetError::BadArchitecture {
                detail: "network has no layers".to_string(),
            });
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NnetError::ShapeMismatch {
                    detail: format!(
                        "layer {} outputs {} values but layer {} expects {}",
                        i,
                        pair[0].out_dim(),
                        i + 1,
                        pair[1].in_dim()
                    ),
                });
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.w.iter().any(|row| row.len() != layer.in_dim()) {
                return Err(NnetError::ShapeMismatch {
                    detail: format!("layer {i} has ragged weight rows"),
                });
            }
            if layer.w.len() != layer.b.len() {
                return Err(NnetError::ShapeMismatch {
                    detail: format!("layer {i}: {} weight rows vs {} biases", layer.w.len(), layer.b.len()),
                });
            }
        }
        Ok(())
    }

    /// Deterministic forward pass; returns the output and the tape needed to
    /// backpropagate.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, GradientTape), NnetError> {
        self.forward_inner(x, None)
    }

    /// Forward pass with the given dropout masks applied to the hidden
    /// activations (one mask per hidden layer). Passing the same masks
    /// reproduces the same stochastic sub-network, which keeps the pass
    /// differentiable for gradient checking.
    pub fn forward_with_masks(
        &self,
        x: &[f64],
        masks: &[Vec<f64>],
    ) -> Result<(Vec<f64>, GradientTape), NnetError> {
        if masks.len() != self.layers.len() - 1 {
            return Err(NnetError::ShapeMismatch {
                detail: format!(
                    "{} dropout masks for {} hidden layers",
                    masks.len(),
                    self.layers.len() - 1
                ),
            });
        }
        self.forward_inner(x, Some(masks))
    }

    /// Forward pass drawing fresh dropout masks from `rng`.
    pub fn forward_dropout<R: Rng>(
        &self,
        x: &[f64],
        rate: f64,
        rng: &mut R,
    ) -> Result<(Vec<f64>, GradientTape), NnetError> {
        let masks: Vec<Vec<f64>> = self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| dropout_mask(l.out_dim(), rate, rng))
            .collect::<Result<_, _>>()?;
        self.forward_with_masks(x, &masks)
    }

    fn forward_inner(
        &self,
        x: &[f64],
        masks: Option<&[Vec<f64>]>,
    ) -> Result<(Vec<f64>, GradientTape), NnetError> {
        self.validate()?;
        if x.len() != self.input_dim() {
            return Err(NnetError::DimensionMismatch {
                what: "network input".to_string(),
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NnetError::NonFinite {
                what: "network input".to_string(),
            });
        }
        if let Some(masks) = masks {
            for (i, (mask, layer)) in masks.iter().zip(&self.layers).enumerate() {
                if mask.len() != layer.out_dim() {
                    return Err(NnetError::DimensionMismatch {
                        what: format!("dropout mask for hidden layer {i}"),
                        expected: layer.out_dim(),
                        got: mask.len(),
                    });
                }
            }
        }

        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&current);
            let mut a: Vec<f64> = if l == last {
                match self.output {
                    OutputActivation::Identity => z.clone(),
                    OutputActivation::Softplus => z.iter().map(|&v| softplus(v)).collect(),
                }
            } else {
                z.iter().map(|&v| relu(v)).collect()
            };
            if l != last {
                if let Some(masks) = masks {
                    for (v, m) in a.iter_mut().zip(&masks[l]) {
                        *v *= m;
                    }
                }
            }
            pre.push(z);
            act.push(a.clone());
            current = a;
        }
        let tape = GradientTape {
            input: x.to_vec(),
            pre,
            act,
            masks: masks.map(<[Vec<f64>]>::to_vec),
            dims: self.dims(),
        };
        Ok((current, tape))
    }

    /// Backpropagates `grad_out` (∂loss/∂output) through the taped pass,
    /// returning parameter gradients and the gradient at the input.
    pub fn backward(
        &self,
        tape: &GradientTape,
        grad_out: &[f64],
    ) -> Result<(MlpGrads, Vec<f64>), NnetError> {
        if tape.dims != self.dims() {
            return Err(NnetError::ShapeMismatch {
                detail: format!(
                    "tape was recorded for layer sizes {:?}, network has {:?}",
                    tape.dims,
                    self.dims()
                ),
            });
        }
        if grad_out.len() != self.output_dim() {
            return Err(NnetError::DimensionMismatch {
                what: "output gradient".to_string(),
                expected: self.output_dim(),
                got: grad_out.len(),
            });
        }

        let mut grads = MlpGrads::zeros_like(self);
        let last = self.layers.len() - 1;
        // Gradient w.r.t. the current layer's pre-activation.
        let mut delta: Vec<f64> = match self.output {
            OutputActivation::Identity => grad_out.to_vec(),
            OutputActivation::Softplus => grad_out
                .iter()
                .zip(&tape.pre[last])
                .map(|(g, &z)| g * sigmoid(z))
                .collect(),
        };

        for l in (0..=last).rev() {
            let upstream: &[f64] = if l == 0 { &tape.input } else { &tape.act[l - 1] };
            for (o, d) in delta.iter().enumerate() {
                grads.layers[l].b[o] += d;
                for (i, u) in upstream.iter().enumerate() {
                    grads.layers[l].w[o][i] += d * u;
                }
            }
            // Gradient w.r.t. the layer input = Wᵀ·delta, then through the
            // previous layer's dropout mask and ReLU.
            let mut grad_in = vec![0.0; self.layers[l].in_dim()];
            for (o, d) in delta.iter().enumerate() {
                for (i, g) in grad_in.iter_mut().enumerate() {
                    *g += self.layers[l].w[o][i] * d;
                }
            }
            if l == 0 {
                return Ok((grads, grad_in));
            }
            if let Some(masks) = &tape.masks {
                for (g, m) in grad_in.iter_mut().zip(&masks[l - 1]) {
                    *g *= m;
                }
            }
            delta = grad_in
                .iter()
                .zip(&tape.pre[l - 1])
                .map(|(g, &z)| if z > 0.0 { *g } else { 0.0 })
                .collect();
        }
        unreachable!("loop returns at layer 0");
    }

    /// All parameters in a flat vector (row-major weights then biases, layer
    /// by layer) — the layout shared with [`MlpGrads::flatten`] and Adam.
    pub fn flatten_params(&self) -> Vec<f64> {
        flatten_dense(&self.layers)
    }

    /// Overwrites the parameters from a flat vector in the same layout.
    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<(), NnetError> {
        unflatten_dense(&mut self.layers, values)
    }

    /// Number of trainable parameters.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_dim() * (l.in_dim() + 1))
            .sum()
    }
}

/// Inverted-scaling dropout mask: each component is 0 with probability
/// `rate`, else `1 / (1 - rate)`, so the mask has unit expectation.
pub fn dropout_mask<R: Rng>(dim: usize, rate: f64, rng: &mut R) -> Result<Vec<f64>, NnetError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnetError::BadRate { rate });
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..dim)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect())
}
