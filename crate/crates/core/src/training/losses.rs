//! The three training losses with analytic gradients.
//!
//! All losses are computed from *raw normalized inputs*: the encoder is
//! re-applied inside each loss so that gradients reach the encoder both
//! through the embedded query/pseudo/consistency samples and through the
//! class centers (which are means of encoded contributor samples). Which
//! samples contribute to which center is frozen before the loss is
//! evaluated — the radius gate's membership decision is treated as a
//! constant — which keeps every loss a smooth function of the encoder
//! parameters and therefore checkable against finite differences.
//!
//! The gate itself is trained through a separate smooth surrogate
//! ([`soft_gate_loss`]): the hard in/out membership is replaced by a
//! sigmoid of the margin between the class radius and the sample's
//! normalized distance, and only the resulting gradient with respect to
//! the radii is kept.

use std::collections::BTreeMap;

use rand::Rng;

use crate::features::ConditionLabel;
use crate::nnet::{standard_normal, dropout_mask, Mlp, MlpGrads};
use crate::proto::squared_distance;

use super::TrainError;

/// Raw (already normalized) input vectors contributing to each class
/// center: labeled support samples plus any in-radius pseudo-labeled
/// samples, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct CenterContributors {
    per_class: BTreeMap<u8, Vec<Vec<f64>>>,
}

impl CenterContributors {
    /// Contributors from labeled samples only.
    pub fn from_support(support: &[(Vec<f64>, ConditionLabel)]) -> Self {
        let mut out = Self::default();
        for (x, y) in support {
            out.push(*y, x.clone());
        }
        out
    }

    /// Adds one contributing input to a class.
    pub fn push(&mut self, label: ConditionLabel, x: Vec<f64>) {
        self.per_class.entry(label.class()).or_default().push(x);
    }

    /// Classes with at least one contributor, ascending.
    pub fn classes(&self) -> Vec<ConditionLabel> {
        self.per_class
            .keys()
            .map(|&k| ConditionLabel::from_class(k as i64).expect("keys are valid classes"))
            .collect()
    }

    /// Contributing inputs of one class.
    pub fn members(&self, label: ConditionLabel) -> &[Vec<f64>] {
        self.per_class
            .get(&label.class())
            .map_or(&[], Vec::as_slice)
    }

    /// True when no class has contributors.
    pub fn is_empty(&self) -> bool {
        self.per_class.is_empty()
    }
}

/// Value and gradient of a prototype cross-entropy loss.
#[derive(Debug)]
pub struct NllResult {
    /// Mean negative log probability of the target class.
    pub loss: f64,
    /// Encoder parameter gradients; `None` when no encoder is in play
    /// (raw inputs used as embeddings).
    pub grads: Option<MlpGrads>,
    /// Terms whose nearest center belongs to the target class.
    pub correct: usize,
    /// Number of loss terms.
    pub count: usize,
    /// Smallest |ReLU pre-activation| seen across every encoder pass
    /// (`f64::INFINITY` without an encoder); used by gradient checks to
    /// skip near-kink evaluations.
    pub kink: f64,
}

impl NllResult {
    fn zero(encoder: Option<&Mlp>) -> Self {
        NllResult {
            loss: 0.0,
            grads: encoder.map(MlpGrads::zeros_like),
            correct: 0,
            count: 0,
            kink: f64::INFINITY,
        }
    }
}

fn encode(
    encoder: Option<&Mlp>,
    x: &[f64],
) -> Result<(Vec<f64>, Option<crate::nnet::GradientTape>), TrainError> {
    match encoder {
        Some(net) => {
            let (v, tape) = net.forward(x)?;
            Ok((v, Some(tape)))
        }
        None => Ok((x.to_vec(), None)),
    }
}

/// Mean negative log softmax-probability of each term's target class,
/// where class centers are means of the encoded contributor inputs.
/// Gradients flow to the encoder through the term embeddings *and* the
/// centers.
fn prototype_nll(
    encoder: Option<&Mlp>,
    contributors: &CenterContributors,
    terms: &[(Vec<f64>, ConditionLabel)],
) -> Result<NllResult, TrainError> {
    if contributors.is_empty() {
        return Err(TrainError::BadConfig {
            detail: "prototype loss needs at least one center contributor".to_string(),
        });
    }
    if terms.is_empty() {
        return Err(TrainError::BadConfig {
            detail: "prototype loss needs at least one term".to_string(),
        });
    }

    let classes = contributors.classes();
    let mut kink = f64::INFINITY;

    // Encode every contributor, keeping tapes for the center-path backward.
    let mut member_embeddings: Vec<Vec<Vec<f64>>> = Vec::with_capacity(classes.len());
    let mut member_tapes: Vec<Vec<Option<crate::nnet::GradientTape>>> = Vec::new();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes.len());
    for &class in &classes {
        let members = contributors.members(class);
        let mut embeddings = Vec::with_capacity(members.len());
        let mut tapes = Vec::with_capacity(members.len());
        for x in members {
            let (v, tape) = encode(encoder, x)?;
            if let Some(t) = &tape {
                kink = kink.min(t.min_abs_preactivation());
            }
            embeddings.push(v);
            tapes.push(tape);
        }
        let dim = embeddings[0].len();
        let mut center = vec![0.0; dim];
        for v in &embeddings {
            for (c, x) in center.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in center.iter_mut() {
            *c /= embeddings.len() as f64;
        }
        centers.push(center);
        member_embeddings.push(embeddings);
        member_tapes.push(tapes);
    }
    let dim = centers[0].len();

    let mut grads = encoder.map(MlpGrads::zeros_like);
    let mut center_grads = vec![vec![0.0; dim]; classes.len()];
    let t_count = terms.len() as f64;
    let mut loss = 0.0;
    let mut correct = 0;

    for (x, y) in terms {
        let y_col = classes.iter().position(|c| c == y).ok_or_else(|| {
            TrainError::ClassNotCovered { class: y.class() }
        })?;
        let (v, tape) = encode(encoder, x)?;
        if let Some(t) = &tape {
            kink = kink.min(t.min_abs_preactivation());
        }
        let dists: Vec<f64> = centers.iter().map(|c| squared_distance(&v, c)).collect();
        let d_min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = dists.iter().map(|d| (-(d - d_min)).exp()).collect();
        let total: f64 = weights.iter().sum();
        // −ln p_y in the numerically stable shifted form.
        loss += (dists[y_col] - d_min) + total.ln();

        let mut best = 0;
        for (k, w) in weights.iter().enumerate() {
            if *w > weights[best] {
                best = k;
            }
        }
        if best == y_col {
            correct += 1;
        }

        if let (Some(net), Some(acc)) = (encoder, grads.as_mut()) {
            // ∂loss/∂d_k = (δ_{ky} − p_k) / T; d_k = ‖v − c_k‖².
            let mut g_v = vec![0.0; dim];
            for (k, w) in weights.iter().enumerate() {
                let p = w / total;
                let delta = if k == y_col { 1.0 } else { 0.0 };
                let g_d = (delta - p) / t_count;
                for j in 0..dim {
                    let diff = v[j] - centers[k][j];
                    g_v[j] += g_d * 2.0 * diff;
                    center_grads[k][j] -= g_d * 2.0 * diff;
                }
            }
            let (g, _) = net.backward(tape.as_ref().expect("encoder pass has a tape"), &g_v)?;
            acc.axpy(&g, 1.0);
        }
    }
    loss /= t_count;

    // Center path: ∂c_k/∂(member embedding) = I / n_k.
    if let (Some(net), Some(acc)) = (encoder, grads.as_mut()) {
        for (k, tapes) in member_tapes.iter().enumerate() {
            let n_k = tapes.len() as f64;
            let per_member: Vec<f64> = center_grads[k].iter().map(|g| g / n_k).collect();
            for tape in tapes {
                let (g, _) =
                    net.backward(tape.as_ref().expect("encoder pass has a tape"), &per_member)?;
                acc.axpy(&g, 1.0);
            }
        }
    }

    Ok(NllResult {
        loss,
        grads,
        correct,
        count: terms.len(),
        kink,
    })
}

/// Mean negative log probability of the true class over the labeled query
/// set, against centers built from the given contributors.
pub fn supervised_loss(
    encoder: Option<&Mlp>,
    contributors: &CenterContributors,
    query: &[(Vec<f64>, ConditionLabel)],
) -> Result<NllResult, TrainError> {
    if query.is_empty() {
        return Err(TrainError::BadConfig {
            detail: "supervised loss needs a non-empty query set".to_string(),
        });
    }
    prototype_nll(encoder, contributors, query)
}

/// Mean negative log probability of the *pseudo* class over in-radius
/// samples. The pseudo-labels are constants (no gradient flows through the
/// assignment). An empty set yields zero loss and zero gradients.
pub fn pseudo_loss(
    encoder: Option<&Mlp>,
    contributors: &CenterContributors,
    in_radius: &[(Vec<f64>, ConditionLabel)],
) -> Result<NllResult, TrainError> {
    if in_radius.is_empty() {
        return Ok(NllResult::zero(encoder));
    }
    prototype_nll(encoder, contributors, in_radius)
}

/// Value and encoder gradient of the consistency penalty.
#[derive(Debug)]
pub struct ConsistencyResult {
    /// Mean squared embedding distance between perturbed and clean passes.
    pub loss: f64,
    /// Encoder parameter gradients (perturbed path only).
    pub grads: MlpGrads,
    /// Smallest |ReLU pre-activation| across the perturbed passes.
    pub kink: f64,
}

/// The differentiable core of the consistency penalty: mean over samples of
/// `‖f(perturbed_input; masks) − target‖²`, where the targets (clean
/// embeddings) are constants. Freezing the perturbed inputs, masks, and
/// targets makes this a smooth function of the encoder parameters, so it can
/// be verified against finite differences directly.
pub fn consistency_core(
    encoder: &Mlp,
    perturbed: &[Vec<f64>],
    masks: &[Vec<Vec<f64>>],
    targets: &[Vec<f64>],
) -> Result<ConsistencyResult, TrainError> {
    if perturbed.len() != masks.len() || perturbed.len() != targets.len() {
        return Err(TrainError::BadConfig {
            detail: format!(
                "consistency core got {} inputs, {} mask sets, {} targets",
                perturbed.len(),
                masks.len(),
                targets.len()
            ),
        });
    }
    let mut grads = MlpGrads::zeros_like(encoder);
    if perturbed.is_empty() {
        return Ok(ConsistencyResult {
            loss: 0.0,
            grads,
            kink: f64::INFINITY,
        });
    }
    let n = perturbed.len() as f64;
    let mut loss = 0.0;
    let mut kink = f64::INFINITY;
    for ((x, mask), target) in perturbed.iter().zip(masks).zip(targets) {
        let (v, tape) = encoder.forward_with_masks(x, mask)?;
        kink = kink.min(tape.min_abs_preactivation());
        if v.len() != target.len() {
            return Err(TrainError::BadConfig {
                detail: format!(
                    "consistency target has {} components, embedding has {}",
                    target.len(),
                    v.len()
                ),
            });
        }
        let mut g = vec![0.0; v.len()];
        for (j, gj) in g.iter_mut().enumerate() {
            let d = v[j] - target[j];
            loss += d * d;
            *gj = 2.0 * d / n;
        }
        let (gg, _) = encoder.backward(&tape, &g)?;
        grads.axpy(&gg, 1.0);
    }
    Ok(ConsistencyResult {
        loss: loss / n,
        grads,
        kink,
    })
}

/// Consistency penalty over out-of-radius inputs: each input gets one clean
/// pass (the stop-gradient target) and one perturbed pass with additive
/// Gaussian input noise of scale `sigma` and dropout at rate `theta` on the
/// hidden activations. Per sample, the noise vector is drawn before the
/// dropout masks.
pub fn consistency_loss<R: Rng>(
    encoder: &Mlp,
    inputs: &[Vec<f64>],
    sigma: f64,
    theta: f64,
    rng: &mut R,
) -> Result<ConsistencyResult, TrainError> {
    if !(sigma >= 0.0) {
        return Err(TrainError::BadConfig {
            detail: format!("perturbation scale must be ≥ 0, got {sigma}"),
        });
    }
    let hidden_dims: Vec<usize> = encoder.layers[..encoder.layers.len() - 1]
        .iter()
        .map(|l| l.out_dim())
        .collect();
    let mut perturbed = Vec::with_capacity(inputs.len());
    let mut masks = Vec::with_capacity(inputs.len());
    let mut targets = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (clean, _) = encoder.forward(x)?;
        targets.push(clean);
        perturbed.push(
            x.iter()
                .map(|v| v + sigma * standard_normal(rng))
                .collect::<Vec<f64>>(),
        );
        let mask_set: Vec<Vec<f64>> = hidden_dims
            .iter()
            .map(|&d| dropout_mask(d, theta, rng))
            .collect::<Result<_, _>>()?;
        masks.push(mask_set);
    }
    consistency_core(encoder, &perturbed, &masks, &targets)
}

/// Everything the radius soft-gate surrogate needs, frozen for one epoch:
/// embeddings, pseudo assignments, and normalized distances are constants;
/// only the radii vary.
#[derive(Debug, Clone)]
pub struct RadiusGateContext {
    /// Per-class sums of the labeled support embeddings (column order).
    pub support_sums: Vec<Vec<f64>>,
    /// Per-class labeled counts (all ≥ 1).
    pub support_counts: Vec<usize>,
    /// Unlabeled embeddings.
    pub unlabeled: Vec<Vec<f64>>,
    /// Column index of each unlabeled sample's pseudo class.
    pub assigned: Vec<usize>,
    /// Normalized distance of each unlabeled sample to its assigned center.
    pub dtilde: Vec<f64>,
    /// Query embeddings with true-class column indices.
    pub query: Vec<(Vec<f64>, usize)>,
    /// Gate temperature.
    pub tau: f64,
}

/// Smooth surrogate for the radius gradient: the hard gate is replaced by
/// `s_n = sigmoid((r_{k(n)} − d̃_n)/τ)` and each class center becomes the
/// `s`-weighted mean of support plus unlabeled embeddings. Returns the
/// supervised cross-entropy of the query set against those soft centers and
/// its exact gradient with respect to the radii.
pub fn soft_gate_loss(
    ctx: &RadiusGateContext,
    radii: &[f64],
) -> Result<(f64, Vec<f64>), TrainError> {
    let k_count = ctx.support_sums.len();
    if radii.len() != k_count || ctx.support_counts.len() != k_count {
        return Err(TrainError::BadConfig {
            detail: format!(
                "soft gate saw {} radii for {} classes",
                radii.len(),
                k_count
            ),
        });
    }
    if ctx.unlabeled.len() != ctx.assigned.len() || ctx.unlabeled.len() != ctx.dtilde.len() {
        return Err(TrainError::BadConfig {
            detail: "soft gate unlabeled/assignment/distance lengths disagree".to_string(),
        });
    }
    if ctx.query.is_empty() {
        return Err(TrainError::BadConfig {
            detail: "soft gate needs a non-empty query set".to_string(),
        });
    }
    if !(ctx.tau > 0.0) {
        return Err(TrainError::BadConfig {
            detail: format!("gate temperature must be positive, got {}", ctx.tau),
        });
    }
    if ctx.support_counts.iter().any(|&n| n == 0) {
        return Err(TrainError::BadConfig {
            detail: "soft gate needs at least one support sample per class".to_string(),
        });
    }
    let dim = ctx.support_sums.first().map_or(0, Vec::len);

    // Soft memberships and soft centers.
    let gates: Vec<f64> = ctx
        .assigned
        .iter()
        .zip(&ctx.dtilde)
        .map(|(&k, &d)| crate::nnet::sigmoid((radii[k] - d) / ctx.tau))
        .collect();
    let mut denom: Vec<f64> = ctx.support_counts.iter().map(|&n| n as f64).collect();
    let mut centers: Vec<Vec<f64>> = ctx.support_sums.clone();
    for (n, u) in ctx.unlabeled.iter().enumerate() {
        let k = ctx.assigned[n];
        denom[k] += gates[n];
        for (c, x) in centers[k].iter_mut().zip(u) {
            *c += gates[n] * x;
        }
    }
    for (k, center) in centers.iter_mut().enumerate() {
        for c in center.iter_mut() {
            *c /= denom[k];
        }
    }

    // Query cross-entropy against the soft centers.
    let t_count = ctx.query.len() as f64;
    let mut loss = 0.0;
    let mut center_grads = vec![vec![0.0; dim]; k_count];
    for (v, y_col) in &ctx.query {
        if *y_col >= k_count {
            return Err(TrainError::BadConfig {
                detail: format!("query class column {y_col} out of range for {k_count} classes"),
            });
        }
        let dists: Vec<f64> = centers.iter().map(|c| squared_distance(v, c)).collect();
        let d_min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = dists.iter().map(|d| (-(d - d_min)).exp()).collect();
        let total: f64 = weights.iter().sum();
        loss += (dists[*y_col] - d_min) + total.ln();
        for (k, w) in weights.iter().enumerate() {
            let p = w / total;
            let delta = if k == *y_col { 1.0 } else { 0.0 };
            let g_d = (delta - p) / t_count;
            for j in 0..dim {
                center_grads[k][j] += g_d * 2.0 * (centers[k][j] - v[j]);
            }
        }
    }
    loss /= t_count;

    // Chain into the radii: ∂c_k/∂s_n = (u_n − c_k)/D_k,
    // ∂s_n/∂r_k = s_n (1 − s_n) / τ.
    let mut grad_radii = vec![0.0; k_count];
    for (n, u) in ctx.unlabeled.iter().enumerate() {
        let k = ctx.assigned[n];
        let mut dot = 0.0;
        for j in 0..dim {
            dot += center_grads[k][j] * (u[j] - centers[k][j]);
        }
        grad_radii[k] += dot / denom[k] * gates[n] * (1.0 - gates[n]) / ctx.tau;
    }
    Ok((loss, grad_radii))
}
