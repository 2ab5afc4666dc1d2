//! The semi-supervised training loop.
//!
//! Each epoch: encode the support set and build plain class centers; score
//! every unlabeled sample's distance to every center; summarize each class's
//! normalized distance column into five statistics and predict a decision
//! radius per class; pseudo-label the unlabeled pool (nearest center, gated
//! by the radius); rebuild corrected centers from support plus in-radius
//! pseudo samples; evaluate the three losses against those corrected
//! centers; and update the encoder with the full weighted gradient while the
//! radius network receives only the supervised gradient, routed through a
//! smooth soft-gate surrogate.
//!
//! With both mixing weights at zero the unlabeled pathway is disengaged
//! entirely and the loop reduces to plain supervised prototype training:
//! the trajectory is then bitwise independent of the unlabeled pool.

mod checkpoint;
mod losses;

pub use checkpoint::{load_model, model_to_json_bytes, save_model, CHECKPOINT_SCHEMA};
pub use losses::{
    consistency_core, consistency_loss, pseudo_loss, soft_gate_loss, supervised_loss,
    CenterContributors, ConsistencyResult, NllResult, RadiusGateContext,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{ConditionLabel, EpisodeSplit, FeatureError, FeatureVector, FEATURE_DIM};
use crate::nnet::{
    adam_step, AdamState, GradientTape, Mlp, MlpGrads, NnetError, OutputActivation,
};
use crate::preprocess::{normalize, NormStats, PreprocessError};
use crate::proto::{
    assign_pseudo_labels, classify, compute_prototypes, distance_stats, normalized_distances,
    update_prototypes, ProtoError, Prototypes, PseudoLabel, RadiusDecision,
};

/// Encoder layer widths: 24 input features, two hidden layers, 8 embedding
/// dimensions.
pub const ENCODER_DIMS: [usize; 4] = [24, 48, 12, 8];
/// Embedding dimension produced by the encoder.
pub const EMBEDDING_DIM: usize = 8;
/// Radius network layer widths: 5 distance statistics in, 1 radius out.
pub const RADIUS_DIMS: [usize; 3] = [5, 16, 1];
/// Temperature of the soft gate used to route supervised gradient into the
/// radius network.
pub const GATE_TAU: f64 = 0.1;

/// Errors raised by training, prediction, and checkpointing.
#[derive(Debug, Error)]
pub enum TrainError {
    /// A configuration value is out of range or inputs are unusable.
    #[error("invalid training input: {detail}")]
    BadConfig { detail: String },
    /// A loss term references a class with no center.
    #[error("class {class} appears in the loss terms but has no center contributors")]
    ClassNotCovered { class: u8 },
    /// A loss became non-finite.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    /// Prediction input contains NaN or infinity.
    #[error("prediction input contains a non-finite value")]
    NonFiniteInput,
    /// A checkpoint file failed structural validation.
    #[error("malformed checkpoint: {detail}")]
    MalformedCheckpoint { detail: String },
    /// Checkpoint file i/o failed.
    #[error("checkpoint i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Proto(#[from] ProtoError),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

/// The three loss components and their weighted sum for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Supervised query loss.
    pub l_s: f64,
    /// Pseudo-label loss over in-radius samples.
    pub l_p: f64,
    /// Consistency loss over out-of-radius samples.
    pub l_u: f64,
    /// Weight of the pseudo-label loss.
    pub lambda: f64,
    /// Weight of the consistency loss.
    pub mu: f64,
    /// `l_s + lambda·l_p + mu·l_u`, computed exactly in this form.
    pub l_final: f64,
}

impl LossBreakdown {
    /// Combines the components; `l_final` is defined by this expression.
    pub fn combine(l_s: f64, l_p: f64, l_u: f64, lambda: f64, mu: f64) -> Self {
        LossBreakdown {
            l_s,
            l_p,
            l_u,
            lambda,
            mu,
            l_final: l_s + lambda * l_p + mu * l_u,
        }
    }
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Maximum number of epochs.
    pub epochs: usize,
    /// Adam learning rate for the encoder.
    pub lr_encoder: f64,
    /// Adam learning rate for the radius network.
    pub lr_radius: f64,
    /// Weight of the pseudo-label loss.
    pub lambda: f64,
    /// Weight of the consistency loss.
    pub mu: f64,
    /// Scale of the additive Gaussian input noise in the consistency pass.
    pub perturb_sigma: f64,
    /// Dropout rate on hidden activations in the consistency pass.
    pub dropout_theta: f64,
    /// Seed for initialization and perturbation draws.
    pub seed: u64,
    /// Early-stop threshold: training stops once the final loss changes by
    /// less than this for 10 consecutive epochs.
    pub convergence_tol: f64,
    /// Train an encoder (`true`) or feed raw normalized features straight
    /// into the prototype head (`false`).
    pub use_feature_mapping: bool,
    /// Bypass the decision radius: every pseudo-labeled sample counts as
    /// in-radius and the radius network is left untouched.
    pub all_in_radius: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr_encoder: 1e-3,
            lr_radius: 1e-3,
            lambda: 1.0,
            mu: 0.5,
            perturb_sigma: 0.05,
            dropout_theta: 0.2,
            seed: 0,
            convergence_tol: 1e-6,
            use_feature_mapping: true,
            all_in_radius: false,
        }
    }
}

impl TrainConfig {
    /// Checks every hyperparameter range.
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |detail: String| Err(TrainError::BadConfig { detail });
        if !(self.lr_encoder > 0.0 && self.lr_encoder.is_finite()) {
            return bad(format!("encoder learning rate must be positive, got {}", self.lr_encoder));
        }
        if !(self.lr_radius > 0.0 && self.lr_radius.is_finite()) {
            return bad(format!("radius learning rate must be positive, got {}", self.lr_radius));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be ≥ 0, got {}", self.lambda));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be ≥ 0, got {}", self.mu));
        }
        if !(self.perturb_sigma >= 0.0 && self.perturb_sigma.is_finite()) {
            return bad(format!("perturbation scale must be ≥ 0, got {}", self.perturb_sigma));
        }
        if !(0.0..1.0).contains(&self.dropout_theta) {
            return bad(format!("dropout rate must lie in [0, 1), got {}", self.dropout_theta));
        }
        if !(self.convergence_tol >= 0.0 && self.convergence_tol.is_finite()) {
            return bad(format!("convergence tolerance must be ≥ 0, got {}", self.convergence_tol));
        }
        Ok(())
    }
}

/// One epoch's telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Zero-based epoch index.
    pub epoch: usize,
    /// Loss components for this epoch.
    pub losses: LossBreakdown,
    /// Fraction of query samples whose nearest corrected center is their
    /// true class.
    pub query_accuracy: f64,
    /// Number of unlabeled samples inside their class radius this epoch.
    pub in_radius: usize,
}

/// A trained diagnosis model: encoder, radius network, final corrected
/// centers, normalization statistics, and the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedModel {
    /// Checkpoint schema version.
    pub schema: u32,
    /// The feature-mapping network; `None` when trained without mapping.
    pub encoder: Option<Mlp>,
    /// The radius network (5 statistics → 1 radius).
    pub radius_net: Mlp,
    /// Final corrected class centers in embedding space.
    pub prototypes: Prototypes,
    /// Min–max statistics used to normalize inputs.
    pub norm_stats: NormStats,
    /// The configuration the model was trained with.
    pub config: TrainConfig,
    /// Per-epoch losses and accuracies.
    pub history: Vec<EpochRecord>,
}

impl TrainedModel {
    /// Structural validation of a checkpoint.
    pub fn validate(&self) -> Result<(), TrainError> {
        let malformed = |detail: String| Err(TrainError::MalformedCheckpoint { detail });
        if self.schema != CHECKPOINT_SCHEMA {
            return malformed(format!(
                "unsupported schema {} (this build reads schema {})",
                self.schema, CHECKPOINT_SCHEMA
            ));
        }
        if let Some(encoder) = &self.encoder {
            encoder.validate()?;
            if encoder.input_dim() != FEATURE_DIM {
                return malformed(format!(
                    "encoder expects {} inputs, features have {}",
                    encoder.input_dim(),
                    FEATURE_DIM
                ));
            }
            if self.prototypes.dim() != encoder.output_dim() {
                return malformed(format!(
                    "prototype dimension {} does not match encoder output {}",
                    self.prototypes.dim(),
                    encoder.output_dim()
                ));
            }
        } else if self.prototypes.dim() != FEATURE_DIM {
            return malformed(format!(
                "prototype dimension {} does not match raw feature width {}",
                self.prototypes.dim(),
                FEATURE_DIM
            ));
        }
        self.radius_net.validate()?;
        if self.radius_net.input_dim() != RADIUS_DIMS[0] || self.radius_net.output_dim() != 1 {
            return malformed("radius network must map 5 statistics to 1 radius".to_string());
        }
        self.prototypes.validate()?;
        self.norm_stats.validate()?;
        if self.norm_stats.width() != FEATURE_DIM {
            return malformed(format!(
                "normalization statistics cover {} columns, features have {}",
                self.norm_stats.width(),
                FEATURE_DIM
            ));
        }
        self.config.validate()?;
        Ok(())
    }

    /// Maps one raw record into the space the stored centers live in:
    /// normalize with the stored statistics (clipping to the training
    /// range), then apply the encoder when one was trained. This is the
    /// representation nearest-center classification runs on, and the input
    /// the mapped-feature baselines consume.
    pub fn embed(&self, x: &FeatureVector) -> Result<Vec<f64>, TrainError> {
        if !x.to_array().iter().all(|v| v.is_finite()) {
            return Err(TrainError::NonFiniteInput);
        }
        let row = x.to_array().to_vec();
        let (normed, _) = normalize(&[row], Some(&self.norm_stats))?;
        encode_value(self.encoder.as_ref(), &normed[0])
    }
}

/// Everything one epoch's losses need, with gate membership frozen.
struct Episode {
    contributors: CenterContributors,
    pseudo_terms: Vec<(Vec<f64>, ConditionLabel)>,
    out_inputs: Vec<Vec<f64>>,
    radius_backward: Option<RadiusBackward>,
    support_embedded: Vec<(Vec<f64>, ConditionLabel)>,
    unlabeled_embedded: Vec<Vec<f64>>,
    pseudo: Vec<PseudoLabel>,
    in_radius_count: usize,
}

/// Tapes and context needed to push supervised gradient into the radius net.
struct RadiusBackward {
    ctx: RadiusGateContext,
    radii: Vec<f64>,
    tapes: Vec<GradientTape>,
}

fn encode_value(encoder: Option<&Mlp>, x: &[f64]) -> Result<Vec<f64>, TrainError> {
    match encoder {
        Some(net) => Ok(net.forward(x)?.0),
        None => Ok(x.to_vec()),
    }
}

/// Runs the per-epoch forward pipeline: plain centers, distance table,
/// radii, pseudo-labels, and membership; `pathway` off means support-only
/// training with every unlabeled structure empty.
fn assemble_episode(
    encoder: Option<&Mlp>,
    radius_net: &Mlp,
    support: &[(Vec<f64>, ConditionLabel)],
    query: &[(Vec<f64>, ConditionLabel)],
    unlabeled: &[Vec<f64>],
    pathway: bool,
    all_in_radius: bool,
) -> Result<Episode, TrainError> {
    let support_embedded: Vec<(Vec<f64>, ConditionLabel)> = support
        .iter()
        .map(|(x, y)| Ok((encode_value(encoder, x)?, *y)))
        .collect::<Result<_, TrainError>>()?;

    if !pathway {
        return Ok(Episode {
            contributors: CenterContributors::from_support(support),
            pseudo_terms: Vec::new(),
            out_inputs: Vec::new(),
            radius_backward: None,
            support_embedded,
            unlabeled_embedded: Vec::new(),
            pseudo: Vec::new(),
            in_radius_count: 0,
        });
    }

    let plain = compute_prototypes(&support_embedded)?;
    let unlabeled_embedded: Vec<Vec<f64>> = unlabeled
        .iter()
        .map(|x| encode_value(encoder, x))
        .collect::<Result<_, _>>()?;
    let table = normalized_distances(&unlabeled_embedded, &plain)?;

    let (decision, radius_backward) = if all_in_radius {
        // Gate bypassed: every sample is in radius and the radius network
        // plays no role.
        let radii = table
            .classes
            .iter()
            .map(|c| (c.class(), f64::MAX))
            .collect();
        (
            RadiusDecision {
                radii,
                stats: std::collections::BTreeMap::new(),
            },
            None,
        )
    } else {
        let mut radii_map = std::collections::BTreeMap::new();
        let mut stats_map = std::collections::BTreeMap::new();
        let mut radii = Vec::with_capacity(table.classes.len());
        let mut tapes = Vec::with_capacity(table.classes.len());
        for (k, &class) in table.classes.iter().enumerate() {
            let stats = distance_stats(&table.normalized_column(k))?;
            let (out, tape) = radius_net.forward(&stats)?;
            radii_map.insert(class.class(), out[0]);
            stats_map.insert(class.class(), stats);
            radii.push(out[0]);
            tapes.push(tape);
        }

        // Freeze this epoch's embeddings and assignments for the soft-gate
        // surrogate that routes supervised gradient into the radius net.
        let dim = plain.dim();
        let mut support_sums = vec![vec![0.0; dim]; table.classes.len()];
        let mut support_counts = vec![0usize; table.classes.len()];
        for (v, y) in &support_embedded {
            let k = table
                .class_column(*y)
                .expect("support classes define the table columns");
            support_counts[k] += 1;
            for (s, x) in support_sums[k].iter_mut().zip(v) {
                *s += x;
            }
        }
        let query_embedded: Vec<(Vec<f64>, usize)> = query
            .iter()
            .map(|(x, y)| {
                let col = table
                    .class_column(*y)
                    .expect("query classes are covered by support");
                Ok((encode_value(encoder, x)?, col))
            })
            .collect::<Result<_, TrainError>>()?;

        (
            RadiusDecision {
                radii: radii_map,
                stats: stats_map,
            },
            Some((radii, tapes, support_sums, support_counts, query_embedded)),
        )
    };

    let mut pseudo = assign_pseudo_labels(&table, &decision, &unlabeled_embedded, &plain)?;
    if all_in_radius {
        for p in pseudo.iter_mut() {
            p.in_radius = true;
        }
    }

    let mut contributors = CenterContributors::from_support(support);
    let mut pseudo_terms = Vec::new();
    let mut out_inputs = Vec::new();
    for p in &pseudo {
        let raw = unlabeled[p.index].clone();
        if p.in_radius {
            contributors.push(p.label, raw.clone());
            pseudo_terms.push((raw, p.label));
        } else {
            out_inputs.push(raw);
        }
    }
    let in_radius_count = pseudo_terms.len();

    let radius_backward = radius_backward.map(
        |(radii, tapes, support_sums, support_counts, query_embedded)| RadiusBackward {
            ctx: RadiusGateContext {
                support_sums,
                support_counts,
                unlabeled: unlabeled_embedded.clone(),
                assigned: pseudo
                    .iter()
                    .map(|p| {
                        table
                            .class_column(p.label)
                            .expect("pseudo labels come from table columns")
                    })
                    .collect(),
                dtilde: pseudo
                    .iter()
                    .map(|p| {
                        let col = table
                            .class_column(p.label)
                            .expect("pseudo labels come from table columns");
                        table.normalized[p.index][col]
                    })
                    .collect(),
                query: query_embedded,
                tau: GATE_TAU,
            },
            radii,
            tapes,
        },
    );

    Ok(Episode {
        contributors,
        pseudo_terms,
        out_inputs,
        radius_backward,
        support_embedded,
        unlabeled_embedded,
        pseudo,
        in_radius_count,
    })
}

fn rows(samples: &[crate::features::LabeledSample]) -> Vec<Vec<f64>> {
    samples.iter().map(|s| s.x.to_array().to_vec()).collect()
}

/// Trains the full model on one episode split.
///
/// Deterministic for a fixed `(split, config)`: initialization and every
/// perturbation draw come from one seeded generator.
pub fn fit(split: &EpisodeSplit, config: &TrainConfig) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    split.validate()?;
    if split.support.is_empty() {
        return Err(TrainError::BadConfig {
            detail: "support set is empty".to_string(),
        });
    }
    if split.query.is_empty() {
        return Err(TrainError::BadConfig {
            detail: "query set is empty".to_string(),
        });
    }

    // Normalization statistics come from the labeled training data only
    // (support and query). The unlabeled pool is mapped through those same
    // statistics with clipping, exactly as held-out data is at prediction
    // time; computing statistics over the pool would let it influence the
    // trajectory even when both unlabeled losses are switched off.
    let mut matrix = rows(&split.support);
    matrix.extend(rows(&split.query));
    let (normed, norm_stats) = normalize(&matrix, None)?;

    let n_support = split.support.len();
    let support: Vec<(Vec<f64>, ConditionLabel)> = normed[..n_support]
        .iter()
        .cloned()
        .zip(split.support.iter().map(|s| s.y))
        .collect();
    let query: Vec<(Vec<f64>, ConditionLabel)> = normed[n_support..]
        .iter()
        .cloned()
        .zip(split.query.iter().map(|s| s.y))
        .collect();
    let unlabeled: Vec<Vec<f64>> = if split.unlabeled.is_empty() {
        Vec::new()
    } else {
        let pool: Vec<Vec<f64>> = split.unlabeled.iter().map(|x| x.to_array().to_vec()).collect();
        normalize(&pool, Some(&norm_stats))?.0
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut encoder: Option<Mlp> = if config.use_feature_mapping {
        Some(Mlp::new(&ENCODER_DIMS, OutputActivation::Identity, &mut rng)?)
    } else {
        None
    };
    let mut radius_net = Mlp::new(&RADIUS_DIMS, OutputActivation::Softplus, &mut rng)?;

    let mut encoder_adam = encoder.as_ref().map(|e| AdamState::new(e.param_count()));
    let mut radius_adam = AdamState::new(radius_net.param_count());

    // The unlabeled pathway is engaged only when there is a pool to use and
    // at least one of the unlabeled losses is active; with λ = μ = 0 the
    // loop is plain supervised prototype training.
    let pathway = !unlabeled.is_empty() && !(config.lambda == 0.0 && config.mu == 0.0);

    let mut history: Vec<EpochRecord> = Vec::new();
    let mut previous_final = f64::NAN;
    let mut quiet_epochs = 0usize;

    // Inputs are validated before the loop starts, so a non-finite value
    // surfacing later was produced by the optimizer itself: report it as
    // divergence at the epoch where it appeared, not as an input error.
    fn as_divergence(epoch: usize, err: TrainError) -> TrainError {
        match &err {
            TrainError::Proto(ProtoError::NonFinite { what })
            | TrainError::Nnet(NnetError::NonFinite { what }) => TrainError::Diverged {
                epoch,
                detail: format!("{what} became non-finite"),
            },
            _ => err,
        }
    }

    for epoch in 0..config.epochs {
        let episode = assemble_episode(
            encoder.as_ref(),
            &radius_net,
            &support,
            &query,
            &unlabeled,
            pathway,
            config.all_in_radius,
        )
        .map_err(|e| as_divergence(epoch, e))?;

        let ls = supervised_loss(encoder.as_ref(), &episode.contributors, &query)
            .map_err(|e| as_divergence(epoch, e))?;
        let lp = pseudo_loss(encoder.as_ref(), &episode.contributors, &episode.pseudo_terms)
            .map_err(|e| as_divergence(epoch, e))?;
        let lu = match (&encoder, pathway && config.mu > 0.0) {
            (Some(net), true) => Some(
                consistency_loss(
                    net,
                    &episode.out_inputs,
                    config.perturb_sigma,
                    config.dropout_theta,
                    &mut rng,
                )
                .map_err(|e| as_divergence(epoch, e))?,
            ),
            _ => None,
        };
        let lu_value = lu.as_ref().map_or(0.0, |r| r.loss);

        let losses = LossBreakdown::combine(ls.loss, lp.loss, lu_value, config.lambda, config.mu);
        if !losses.l_final.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                detail: format!(
                    "L_s = {}, L_p = {}, L_u = {}",
                    losses.l_s, losses.l_p, losses.l_u
                ),
            });
        }

        // Radius gradient before any parameter moves.
        let radius_grads = match &episode.radius_backward {
            Some(rb) => {
                let (_, grad_radii) =
                    soft_gate_loss(&rb.ctx, &rb.radii).map_err(|e| as_divergence(epoch, e))?;
                let mut acc = MlpGrads::zeros_like(&radius_net);
                for (tape, g) in rb.tapes.iter().zip(&grad_radii) {
                    let (grads, _) = radius_net.backward(tape, &[*g])?;
                    acc.axpy(&grads, 1.0);
                }
                Some(acc.flatten())
            }
            None => None,
        };

        if let Some(net) = encoder.as_mut() {
            let mut total = ls.grads.expect("encoder in play");
            if let Some(g) = lp.grads {
                total.axpy(&g, config.lambda);
            }
            if let Some(r) = &lu {
                total.axpy(&r.grads, config.mu);
            }
            let mut params = net.flatten_params();
            adam_step(
                &mut params,
                &total.flatten(),
                encoder_adam.as_mut().expect("state exists with encoder"),
                config.lr_encoder,
            )?;
            net.set_flat_params(&params)?;
        }
        if let Some(grads) = radius_grads {
            let mut params = radius_net.flatten_params();
            adam_step(&mut params, &grads, &mut radius_adam, config.lr_radius)?;
            radius_net.set_flat_params(&params)?;
        }

        history.push(EpochRecord {
            epoch,
            losses,
            query_accuracy: ls.correct as f64 / ls.count as f64,
            in_radius: episode.in_radius_count,
        });

        if (losses.l_final - previous_final).abs() < config.convergence_tol {
            quiet_epochs += 1;
        } else {
            quiet_epochs = 0;
        }
        previous_final = losses.l_final;
        if quiet_epochs >= 10 {
            break;
        }
    }

    // Final corrected centers under the final parameters.
    let episode = assemble_episode(
        encoder.as_ref(),
        &radius_net,
        &support,
        &query,
        &unlabeled,
        pathway,
        config.all_in_radius,
    )
    .map_err(|e| as_divergence(history.len(), e))?;
    let pseudo_embedded: Vec<(Vec<f64>, PseudoLabel)> = episode
        .pseudo
        .iter()
        .map(|p| (episode.unlabeled_embedded[p.index].clone(), *p))
        .collect();
    let prototypes = update_prototypes(&episode.support_embedded, &pseudo_embedded)?;

    let model = TrainedModel {
        schema: CHECKPOINT_SCHEMA,
        encoder,
        radius_net,
        prototypes,
        norm_stats,
        config: config.clone(),
        history,
    };
    model.validate().map_err(|e| match e {
        TrainError::MalformedCheckpoint { detail } => TrainError::BadConfig {
            detail: format!("trained model failed validation: {detail}"),
        },
        other => other,
    })?;
    Ok(model)
}

/// Classifies one telemetry record: normalize with the stored statistics
/// (clipping to the training range), embed, and take the softmax over
/// negative squared distances to the stored centers. Returns the argmax
/// class and the per-class probabilities in ascending class order.
pub fn predict(
    model: &TrainedModel,
    x: &FeatureVector,
) -> Result<(ConditionLabel, Vec<f64>), TrainError> {
    let embedded = model.embed(x)?;
    let (probabilities, label) = classify(&embedded, &model.prototypes)?;
    Ok((label, probabilities))
}
