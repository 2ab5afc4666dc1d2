//! Valid (no-padding) 1-D convolutional networks with a dense classification
//! head, used by the CNN baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{dropout_mask, Dense};
use super::{relu, NnetError};

/// One convolution layer: weights indexed `w[out_channel][in_channel][tap]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub w: Vec<Vec<Vec<f64>>>,
    pub b: Vec<f64>,
}

impl ConvLayer {
    fn zeros(out_ch: usize, in_ch: usize, kernel: usize) -> Self {
        ConvLayer {
            w: vec![vec![vec![0.0; kernel]; in_ch]; out_ch],
            b: vec![0.0; out_ch],
        }
    }

    fn he_uniform<R: Rng>(out_ch: usize, in_ch: usize, kernel: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_ch * kernel) as f64).sqrt();
        let w = (0..out_ch)
            .map(|_| {
                (0..in_ch)
                    .map(|_| {
                        (0..kernel)
                            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        ConvLayer {
            w,
            b: vec![0.0; out_ch],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.b.len()
    }

    pub fn in_channels(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    pub fn kernel_len(&self) -> usize {
        self.w
            .first()
            .and_then(|ch| ch.first())
            .map_or(0, Vec::len)
    }

    fn axpy(&mut self, other: &ConvLayer, scale: f64) {
        for (oc, ooc) in self.w.iter_mut().zip(&other.w) {
            for (ic, oic) in oc.iter_mut().zip(ooc) {
                for (v, o) in ic.iter_mut().zip(oic) {
                    *v += scale * o;
                }
            }
        }
        for (v, o) in self.b.iter_mut().zip(&other.b) {
            *v += scale * o;
        }
    }
}

/// A 1-D CNN: valid convolutions with ReLU, channel-major flattening,
/// optional inverted dropout on the flattened vector, and a dense head
/// emitting raw class scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub convs: Vec<ConvLayer>,
    pub head: Dense,
    input_len: usize,
}

/// Cached activations from a [`Conv1d`] forward pass.
#[derive(Debug, Clone)]
pub struct ConvTape {
    input: Vec<f64>,
    /// Pre-activation maps per conv layer: `pre[layer][channel][t]`.
    pre: Vec<Vec<Vec<f64>>>,
    /// Post-ReLU maps per conv layer.
    act: Vec<Vec<Vec<f64>>>,
    /// Flattened (and masked, when dropout applies) head input.
    flat: Vec<f64>,
    mask: Option<Vec<f64>>,
    input_len: usize,
}

impl ConvTape {
    /// Smallest |pre-activation| over all ReLU inputs in this pass.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.pre
            .iter()
            .flatten()
            .flatten()
            .map(|z| z.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Parameter gradients shaped exactly like [`Conv1d`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub convs: Vec<ConvLayer>,
    pub head: Dense,
}

impl ConvGrads {
    pub fn zeros_like(net: &Conv1d) -> Self {
        ConvGrads {
            convs: net
                .convs
                .iter()
                .map(|c| ConvLayer::zeros(c.out_channels(), c.in_channels(), c.kernel_len()))
                .collect(),
            head: Dense::zeros(net.head.out_dim(), net.head.in_dim()),
        }
    }

    pub fn axpy(&mut self, other: &ConvGrads, scale: f64) {
        for (mine, theirs) in self.convs.iter_mut().zip(&other.convs) {
            mine.axpy(theirs, scale);
        }
        self.head.axpy(&other.head, scale);
    }

    /// Flat layout matching [`Conv1d::flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        flatten_conv(&self.convs, &self.head)
    }
}

fn flatten_conv(convs: &[ConvLayer], head: &Dense) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in convs {
        for oc in &layer.w {
            for ic in oc {
                out.extend_from_slice(ic);
            }
        }
        out.extend_from_slice(&layer.b);
    }
    for row in &head.w {
        out.extend_from_slice(row);
    }
    out.extend_from_slice(&head.b);
    out
}

impl Conv1d {
    /// Builds a seeded network. `conv_specs` lists `(out_channels, kernel)`
    /// per layer applied to a 1-channel series of `input_len` samples;
    /// `classes` is the head's output width.
    pub fn new<R: Rng>(
        input_len: usize,
        conv_specs: &[(usize, usize)],
        classes: usize,
        rng: &mut R,
    ) -> Result<Self, NnetError> {
        if conv_specs.is_empty() || classes == 0 || input_len == 0 {
            return Err(NnetError::BadArchitecture {
                detail: "need at least one conv layer, one class, and a non-empty input"
                    .to_string(),
            });
        }
        let mut len = input_len;
        let mut in_ch = 1;
        let mut convs = Vec::with_capacity(conv_specs.len());
        for &(out_ch, kernel) in conv_specs {
            if out_ch == 0 || kernel == 0 {
                return Err(NnetError::BadArchitecture {
                    detail: "conv layers need positive channel count and kernel length"
                        .to_string(),
                });
            }
            if kernel > len {
                return Err(NnetError::KernelTooLong { kernel, len });
            }
            convs.push(ConvLayer::he_uniform(out_ch, in_ch, kernel, rng));
            len = len - kernel + 1;
            in_ch = out_ch;
        }
        let head = Dense::he_uniform(classes, in_ch * len, rng);
        Ok(Conv1d {
            convs,
            head,
            input_len,
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    /// Width of the flattened vector feeding the head.
    pub fn flat_dim(&self) -> usize {
        self.head.in_dim()
    }

    /// Deterministic forward pass (no dropout): raw class scores plus tape.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ConvTape), NnetError> {
        self.forward_inner(x, None)
    }

    /// Forward pass applying a fixed dropout mask to the flattened vector.
    pub fn forward_with_mask(
        &self,
        x: &[f64],
        mask: &[f64],
    ) -> Result<(Vec<f64>, ConvTape), NnetError> {
        if mask.len() != self.flat_dim() {
            return Err(NnetError::DimensionMismatch {
                what: "dropout mask".to_string(),
                expected: self.flat_dim(),
                got: mask.len(),
            });
        }
        self.forward_inner(x, Some(mask))
    }

    /// Forward pass drawing a fresh dropout mask from `rng`.
    pub fn forward_dropout<R: Rng>(
        &self,
        x: &[f64],
        rate: f64,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ConvTape), NnetError> {
        let mask = dropout_mask(self.flat_dim(), rate, rng)?;
        self.forward_with_mask(x, &mask)
    }

    fn forward_inner(
        &self,
        x: &[f64],
        mask: Option<&[f64]>,
    ) -> Result<(Vec<f64>, ConvTape), NnetError> {
        if x.len() != self.input_len {
            return Err(NnetError::DimensionMismatch {
                what: "conv input".to_string(),
                expected: self.input_len,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NnetError::NonFinite {
                what: "conv input".to_string(),
            });
        }

        let mut channels: Vec<Vec<f64>> = vec![x.to_vec()];
        let mut pre_all = Vec::with_capacity(self.convs.len());
        let mut act_all = Vec::with_capacity(self.convs.len());
        for layer in &self.convs {
            let len = channels[0].len();
            let kernel = layer.kernel_len();
            if layer.in_channels() != channels.len() {
                return Err(NnetError::ShapeMismatch {
                    detail: format!(
                        "conv layer expects {} input channels, got {}",
                        layer.in_channels(),
                        channels.len()
                    ),
                });
            }
            if kernel > len {
                return Err(NnetError::KernelTooLong { kernel, len });
            }
            let out_len = len - kernel + 1;
            let mut pre = vec![vec![0.0; out_len]; layer.out_channels()];
            for (o, out_map) in pre.iter_mut().enumerate() {
                for (t, slot) in out_map.iter_mut().enumerate() {
                    let mut acc = layer.b[o];
                    for (ic, in_map) in channels.iter().enumerate() {
                        for (k, &w) in layer.w[o][ic].iter().enumerate() {
                            acc += w * in_map[t + k];
                        }
                    }
                    *slot = acc;
                }
            }
            let act: Vec<Vec<f64>> = pre
                .iter()
                .map(|ch| ch.iter().map(|&z| relu(z)).collect())
                .collect();
            pre_all.push(pre);
            act_all.push(act.clone());
            channels = act;
        }

        let mut flat: Vec<f64> = channels.iter().flatten().copied().collect();
        if let Some(mask) = mask {
            for (v, m) in flat.iter_mut().zip(mask) {
                *v *= m;
            }
        }
        let scores = self.head_affine(&flat)?;
        let tape = ConvTape {
            input: x.to_vec(),
            pre: pre_all,
            act: act_all,
            flat,
            mask: mask.map(<[f64]>::to_vec),
            input_len: self.input_len,
        };
        Ok((scores, tape))
    }

    fn head_affine(&self, flat: &[f64]) -> Result<Vec<f64>, NnetError> {
        if flat.len() != self.head.in_dim() {
            return Err(NnetError::ShapeMismatch {
                detail: format!(
                    "flattened vector has {} entries, head expects {}",
                    flat.len(),
                    self.head.in_dim()
                ),
            });
        }
        Ok(self
            .head
            .w
            .iter()
            .zip(&self.head.b)
            .map(|(row, b)| row.iter().zip(flat).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect())
    }

    /// Backpropagates ∂loss/∂scores through the taped pass.
    pub fn backward(
        &self,
        tape: &ConvTape,
        grad_scores: &[f64],
    ) -> Result<(ConvGrads, Vec<f64>), NnetError> {
        if tape.input_len != self.input_len || tape.pre.len() != self.convs.len() {
            return Err(NnetError::ShapeMismatch {
                detail: "tape does not match this network".to_string(),
            });
        }
        if grad_scores.len() != self.head.out_dim() {
            return Err(NnetError::DimensionMismatch {
                what: "score gradient".to_string(),
                expected: self.head.out_dim(),
                got: grad_scores.len(),
            });
        }

        let mut grads = ConvGrads::zeros_like(self);
        // Head: dW = g·flatᵀ (flat already carries the mask), db = g.
        let mut d_flat = vec![0.0; tape.flat.len()];
        for (o, &g) in grad_scores.iter().enumerate() {
            grads.head.b[o] += g;
            for (i, &v) in tape.flat.iter().enumerate() {
                grads.head.w[o][i] += g * v;
                d_flat[i] += self.head.w[o][i] * g;
            }
        }
        if let Some(mask) = &tape.mask {
            for (g, m) in d_flat.iter_mut().zip(mask) {
                *g *= m;
            }
        }

        // Unflatten to per-channel gradient of the last activation map.
        let last = self.convs.len() - 1;
        let last_len = tape.act[last][0].len();
        let mut d_act: Vec<Vec<f64>> = (0..self.convs[last].out_channels())
            .map(|o| d_flat[o * last_len..(o + 1) * last_len].to_vec())
            .collect();

        for l in (0..self.convs.len()).rev() {
            let layer = &self.convs[l];
            // Through this layer's ReLU.
            let delta: Vec<Vec<f64>> = d_act
                .iter()
                .zip(&tape.pre[l])
                .map(|(d_ch, pre_ch)| {
                    d_ch.iter()
                        .zip(pre_ch)
                        .map(|(d, &z)| if z > 0.0 { *d } else { 0.0 })
                        .collect()
                })
                .collect();
            let prev_maps: Vec<Vec<f64>> = if l == 0 {
                vec![tape.input.clone()]
            } else {
                tape.act[l - 1].clone()
            };
            let mut d_prev = vec![vec![0.0; prev_maps[0].len()]; prev_maps.len()];
            for (o, delta_ch) in delta.iter().enumerate() {
                for (t, &d) in delta_ch.iter().enumerate() {
                    grads.convs[l].b[o] += d;
                    for (ic, prev) in prev_maps.iter().enumerate() {
                        for (k, &w) in layer.w[o][ic].iter().enumerate() {
                            grads.convs[l].w[o][ic][k] += d * prev[t + k];
                            d_prev[ic][t + k] += w * d;
                        }
                    }
                }
            }
            if l == 0 {
                return Ok((grads, d_prev.remove(0)));
            }
            d_act = d_prev;
        }
        unreachable!("loop returns at layer 0");
    }

    /// All parameters flattened (conv layers then head, weights then biases).
    pub fn flatten_params(&self) -> Vec<f64> {
        flatten_conv(&self.convs, &self.head)
    }

    /// Overwrites the parameters from a flat vector in the same layout.
    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<(), NnetError> {
        let expected = self.param_count();
        if values.len() != expected {
            return Err(NnetError::ShapeMismatch {
                detail: format!("expected {expected} flat parameters, got {}", values.len()),
            });
        }
        let mut cursor = values.iter();
        for layer in &mut self.convs {
            for oc in layer.w.iter_mut() {
                for ic in oc.iter_mut() {
                    for v in ic.iter_mut() {
                        *v = *cursor.next().unwrap();
                    }
                }
            }
            for v in layer.b.iter_mut() {
                *v = *cursor.next().unwrap();
            }
        }
        for row in self.head.w.iter_mut() {
            for v in row.iter_mut() {
                *v = *cursor.next().unwrap();
            }
        }
        for v in self.head.b.iter_mut() {
            *v = *cursor.next().unwrap();
        }
        Ok(())
    }

    /// Number of trainable parameters.
    pub fn param_count(&self) -> usize {
        let conv: usize = self
            .convs
            .iter()
            .map(|c| c.out_channels() * (c.in_channels() * c.kernel_len() + 1))
            .sum();
        conv + self.head.out_dim() * (self.head.in_dim() + 1)
    }
}
