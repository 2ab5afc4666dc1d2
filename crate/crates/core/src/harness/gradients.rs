//! The finite-difference gradient audit: every analytic gradient the engine
//! trains with, re-derived numerically at freshly seeded random points.
//!
//! Six components are audited: the encoder and radius networks through
//! their production architectures, the CNN baseline through its
//! cross-entropy objective, and the three loss terms (supervised,
//! pseudo-label, consistency) as functions of the encoder parameters. Each
//! component is evaluated at `points` independent seeded instantiations of
//! parameters and data; the summaries aggregate the worst relative error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::baselines::{cross_entropy, CNN_CONV_SPECS};
use crate::features::{ConditionLabel, CLASS_COUNT, FEATURE_DIM};
use crate::nnet::{
    dropout_mask, CheckResult, Conv1d, ConvGrads, GradCheckConfig, Mlp, MlpGrads,
    OutputActivation,
};
use crate::training::{
    consistency_core, pseudo_loss, soft_gate_loss, supervised_loss, CenterContributors,
    RadiusGateContext, ENCODER_DIMS, GATE_TAU, RADIUS_DIMS,
};

/// Aggregate of one component's checks across all audited points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSummary {
    /// Component name.
    pub name: String,
    /// Number of random points audited.
    pub points: usize,
    /// Total coordinates compared against finite differences.
    pub checked: usize,
    /// Total coordinates skipped for riding or crossing a ReLU kink.
    pub skipped: usize,
    /// Worst relative error over every compared coordinate.
    pub max_rel_err: f64,
}

impl GradCheckSummary {
    /// True when at least one coordinate was compared and none exceeded the
    /// tolerance.
    pub fn passed(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_err < tolerance
    }
}

fn merge(name: &str, results: Vec<CheckResult>) -> GradCheckSummary {
    GradCheckSummary {
        name: name.to_string(),
        points: results.len(),
        checked: results.iter().map(|r| r.checked).sum(),
        skipped: results.iter().map(|r| r.skipped).sum(),
        max_rel_err: results.iter().fold(0.0, |m, r| m.max(r.max_rel_err)),
    }
}

fn uniform_vec<R: Rng>(rng: &mut R, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..dim).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
}

fn label(class: usize) -> ConditionLabel {
    ConditionLabel::from_index(class).expect("audit classes stay in range")
}

/// Probe loss for a bare network: `Σ aᵀy + ½‖y‖²` over a small batch, whose
/// score gradient `a + y` exercises every output coordinate.
fn encoder_point(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::new(&ENCODER_DIMS, OutputActivation::Identity, &mut rng)
        .expect("fixed architecture is valid");
    let inputs: Vec<Vec<f64>> = (0..4).map(|_| uniform_vec(&mut rng, FEATURE_DIM, 0.0, 1.0)).collect();
    let coeffs: Vec<Vec<f64>> = (0..4)
        .map(|_| uniform_vec(&mut rng, ENCODER_DIMS[3], -1.0, 1.0))
        .collect();

    let mut analytic = MlpGrads::zeros_like(&net);
    for (x, a) in inputs.iter().zip(&coeffs) {
        let (out, tape) = net.forward(x).expect("finite inputs");
        let grad_out: Vec<f64> = a.iter().zip(&out).map(|(a, y)| a + y).collect();
        let (grads, _) = net.backward(&tape, &grad_out).expect("tape matches net");
        analytic.axpy(&grads, 1.0);
    }

    let params = net.flatten_params();
    let mut probe = net.clone();
    GradCheckConfig::default().run("encoder", &params, &analytic.flatten(), |p| {
        probe.set_flat_params(p).expect("same parameter count");
        let mut loss = 0.0;
        let mut kink = f64::INFINITY;
        for (x, a) in inputs.iter().zip(&coeffs) {
            let (out, tape) = probe.forward(x).expect("finite inputs");
            kink = kink.min(tape.min_abs_preactivation());
            loss += out
                .iter()
                .zip(a)
                .map(|(y, a)| a * y + 0.5 * y * y)
                .sum::<f64>();
        }
        (loss, kink)
    })
}

/// The radius network through its production objective: distance statistics
/// feed the network, its radii feed the soft-gate supervised surrogate, and
/// the gradient flows back through both.
fn radius_point(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::new(&RADIUS_DIMS, OutputActivation::Softplus, &mut rng)
        .expect("fixed architecture is valid");
    let dim = 4;
    let classes = 3;
    let ctx = RadiusGateContext {
        support_sums: (0..classes)
            .map(|_| uniform_vec(&mut rng, dim, 0.0, 2.0))
            .collect(),
        support_counts: vec![2; classes],
        unlabeled: (0..9).map(|_| uniform_vec(&mut rng, dim, 0.0, 1.0)).collect(),
        assigned: (0..9).map(|i| i % classes).collect(),
        dtilde: (0..9).map(|_| 0.5 + rng.random::<f64>()).collect(),
        query: (0..6)
            .map(|i| (uniform_vec(&mut rng, dim, 0.0, 1.0), i % classes))
            .collect(),
        tau: GATE_TAU,
    };
    let stats: Vec<Vec<f64>> = (0..classes)
        .map(|_| uniform_vec(&mut rng, RADIUS_DIMS[0], 0.0, 2.0))
        .collect();

    let mut radii = Vec::with_capacity(classes);
    let mut tapes = Vec::with_capacity(classes);
    for s in &stats {
        let (out, tape) = net.forward(s).expect("finite inputs");
        radii.push(out[0]);
        tapes.push(tape);
    }
    let (_, grad_radii) = soft_gate_loss(&ctx, &radii).expect("context is valid");
    let mut analytic = MlpGrads::zeros_like(&net);
    for (tape, g) in tapes.iter().zip(&grad_radii) {
        let (grads, _) = net.backward(tape, &[*g]).expect("tape matches net");
        analytic.axpy(&grads, 1.0);
    }

    let params = net.flatten_params();
    let mut probe = net.clone();
    GradCheckConfig::default().run("radius", &params, &analytic.flatten(), |p| {
        probe.set_flat_params(p).expect("same parameter count");
        let mut radii = Vec::with_capacity(stats.len());
        let mut kink = f64::INFINITY;
        for s in &stats {
            let (out, tape) = probe.forward(s).expect("finite inputs");
            radii.push(out[0]);
            kink = kink.min(tape.min_abs_preactivation());
        }
        let (loss, _) = soft_gate_loss(&ctx, &radii).expect("context is valid");
        (loss, kink)
    })
}

/// The CNN baseline through its mean cross-entropy objective.
fn cnn_point(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Conv1d::new(FEATURE_DIM, &CNN_CONV_SPECS, CLASS_COUNT, &mut rng)
        .expect("fixed architecture is valid");
    let inputs: Vec<Vec<f64>> = (0..3).map(|_| uniform_vec(&mut rng, FEATURE_DIM, 0.0, 1.0)).collect();
    let targets: Vec<usize> = (0..3).map(|_| (rng.random::<f64>() * 7.0) as usize % 7).collect();

    let mut scores = Vec::new();
    let mut tapes = Vec::new();
    for x in &inputs {
        let (s, tape) = net.forward(x).expect("finite inputs");
        scores.push(s);
        tapes.push(tape);
    }
    let (_, score_grads) = cross_entropy(&scores, &targets);
    let mut analytic = ConvGrads::zeros_like(&net);
    for (tape, g) in tapes.iter().zip(&score_grads) {
        let (grads, _) = net.backward(tape, g).expect("tape matches net");
        analytic.axpy(&grads, 1.0);
    }

    let params = net.flatten_params();
    let mut probe = net.clone();
    let config = GradCheckConfig {
        max_coords: Some(500),
        ..GradCheckConfig::default()
    };
    config.run("cnn", &params, &analytic.flatten(), |p| {
        probe.set_flat_params(p).expect("same parameter count");
        let mut batch = Vec::with_capacity(inputs.len());
        let mut kink = f64::INFINITY;
        for x in &inputs {
            let (s, tape) = probe.forward(x).expect("finite inputs");
            kink = kink.min(tape.min_abs_preactivation());
            batch.push(s);
        }
        (cross_entropy(&batch, &targets).0, kink)
    })
}

/// A small random episode: 3 classes × 2 support vectors, plus query and
/// pseudo-labeled points drawn from the same classes.
fn audit_episode<R: Rng>(
    rng: &mut R,
) -> (
    CenterContributors,
    Vec<(Vec<f64>, ConditionLabel)>,
    Vec<(Vec<f64>, ConditionLabel)>,
) {
    let mut contributors = CenterContributors::default();
    for class in 0..3 {
        for _ in 0..2 {
            contributors.push(label(class), uniform_vec(rng, FEATURE_DIM, 0.0, 1.0));
        }
    }
    let query: Vec<(Vec<f64>, ConditionLabel)> = (0..4)
        .map(|i| (uniform_vec(rng, FEATURE_DIM, 0.0, 1.0), label(i % 3)))
        .collect();
    let pseudo: Vec<(Vec<f64>, ConditionLabel)> = (0..3)
        .map(|i| (uniform_vec(rng, FEATURE_DIM, 0.0, 1.0), label(i % 3)))
        .collect();
    (contributors, query, pseudo)
}

/// Supervised loss as a function of the encoder parameters (the gradient
/// flows through the query embeddings *and* the centers).
fn supervised_point(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::new(&ENCODER_DIMS, OutputActivation::Identity, &mut rng)
        .expect("fixed architecture is valid");
    let (contributors, query, _) = audit_episode(&mut rng);

    let base = supervised_loss(Some(&net), &contributors, &query).expect("episode is valid");
    let analytic = base.grads.expect("encoder in play").flatten();

    let params = net.flatten_params();
    let mut probe = net.clone();
    GradCheckConfig::default().run("supervised", &params, &analytic, |p| {
        probe.set_flat_params(p).expect("same parameter count");
        let res = supervised_loss(Some(&probe), &contributors, &query).expect("episode is valid");
        (res.loss, res.kink)
    })
}

/// Pseudo-label loss as a function of the encoder parameters.
fn pseudo_point(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::new(&ENCODER_DIMS, OutputActivation::Identity, &mut rng)
        .expect("fixed architecture is valid");
    let (contributors, _, pseudo) = audit_episode(&mut rng);

    let base = pseudo_loss(Some(&net), &contributors, &pseudo).expect("episode is valid");
    let analytic = base.grads.expect("encoder in play").flatten();

    let params = net.flatten_params();
    let mut probe = net.clone();
    GradCheckConfig::default().run("pseudo", &params, &analytic, |p| {
        probe.set_flat_params(p).expect("same parameter count");
        let res = pseudo_loss(Some(&probe), &contributors, &pseudo).expect("episode is valid");
        (res.loss, res.kink)
    })
}

/// Consistency loss with frozen perturbations, dropout masks, and clean
/// targets, as a function of the encoder parameters.
fn consistency_point(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::new(&ENCODER_DIMS, OutputActivation::Identity, &mut rng)
        .expect("fixed architecture is valid");
    let inputs: Vec<Vec<f64>> = (0..3).map(|_| uniform_vec(&mut rng, FEATURE_DIM, 0.0, 1.0)).collect();
    let hidden_dims = [ENCODER_DIMS[1], ENCODER_DIMS[2]];

    let mut perturbed = Vec::new();
    let mut masks = Vec::new();
    let mut targets = Vec::new();
    for x in &inputs {
        targets.push(net.forward(x).expect("finite inputs").0);
        perturbed.push(
            x.iter()
                .map(|v| v + 0.05 * (rng.random::<f64>() - 0.5))
                .collect::<Vec<f64>>(),
        );
        masks.push(
            hidden_dims
                .iter()
                .map(|&d| dropout_mask(d, 0.2, &mut rng).expect("valid rate"))
                .collect::<Vec<Vec<f64>>>(),
        );
    }

    let base =
        consistency_core(&net, &perturbed, &masks, &targets).expect("frozen pass is valid");
    let analytic = base.grads.flatten();

    let params = net.flatten_params();
    let mut probe = net.clone();
    GradCheckConfig::default().run("consistency", &params, &analytic, |p| {
        probe.set_flat_params(p).expect("same parameter count");
        let res = consistency_core(&probe, &perturbed, &masks, &targets)
            .expect("frozen pass is valid");
        (res.loss, res.kink)
    })
}

/// Runs the full audit: each component at `points` seeded random points.
///
/// Returns six summaries in a fixed order; a summary passes when every
/// compared coordinate's relative error stays below the tolerance (the
/// engine's contract is 1e-4 at ε = 1e-5).
pub fn run_gradient_checks(points: usize) -> Result<Vec<GradCheckSummary>, HarnessError> {
    if points == 0 {
        return Err(HarnessError::BadConfig {
            detail: "gradient audit needs at least one point per component".to_string(),
        });
    }
    let components: [(&str, fn(u64) -> CheckResult); 6] = [
        ("encoder-mlp", encoder_point),
        ("radius-soft-gate", radius_point),
        ("cnn-cross-entropy", cnn_point),
        ("supervised-loss", supervised_point),
        ("pseudo-label-loss", pseudo_point),
        ("consistency-loss", consistency_point),
    ];
    Ok(components
        .iter()
        .enumerate()
        .map(|(c, (name, point))| {
            let results: Vec<CheckResult> = (0..points)
                .map(|p| point((c as u64) * 10_000 + p as u64))
                .collect();
            merge(name, results)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_component_passes_at_two_points() {
        let summaries = run_gradient_checks(2).unwrap();
        let names: Vec<&str> = summaries.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "encoder-mlp",
                "radius-soft-gate",
                "cnn-cross-entropy",
                "supervised-loss",
                "pseudo-label-loss",
                "consistency-loss"
            ]
        );
        for s in &summaries {
            assert!(
                s.passed(1e-4),
                "{}: max_rel_err {} over {} checked ({} skipped)",
                s.name,
                s.max_rel_err,
                s.checked,
                s.skipped
            );
            assert_eq!(s.points, 2);
        }
    }

    #[test]
    fn zero_points_is_rejected() {
        assert!(run_gradient_checks(0).is_err());
    }
}
