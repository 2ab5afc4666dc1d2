//! Central finite-difference gradient checking.
//!
//! The checker perturbs each parameter by ±ε, recomputes the scalar loss,
//! and compares `(f(p+ε) − f(p−ε)) / 2ε` against the analytic gradient. The
//! loss closure also reports how close the evaluation came to a ReLU kink;
//! coordinates whose perturbed passes ride a kink are skipped because the
//! loss is not differentiable there.
//!
//! Reported kink distances alone cannot catch every crossing: in a network
//! with thousands of pre-activations the smallest |pre-activation| is tiny
//! at *every* point, so a unit passing through zero strictly between the
//! evaluation points goes unnoticed. The checker therefore also compares the
//! two one-sided difference quotients. On a twice-differentiable stretch they
//! agree to O(ε·f″); a crossed kink makes them disagree by the slope jump.
//! Skipping coordinates whose one-sided slopes disagree beyond `asym_tol`
//! cannot hide a wrong analytic gradient — the asymmetry is a property of
//! the loss surface, not of the gradient under test — and any crossing large
//! enough to corrupt the central difference beyond `asym_tol`/2 is caught.

/// Relative error with an absolute floor: `|a − b| / max(|a|, |b|, 1e-4)`.
///
/// The floor keeps near-zero gradient coordinates from failing on the
/// checker's own noise: a central difference at ε = 1e-5 on a loss of order
/// one carries roughly 1e-10 of absolute rounding noise, which would
/// dominate any comparison of coordinates whose true gradient is tiny.
/// Against the 1e-4 tolerance this floor is equivalent to accepting
/// `|a − b| ≤ 1e-8 + 1e-4·max(|a|, |b|)`, the conventional absolute-plus-
/// relative acceptance test.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Outcome of checking one gradient vector.
#[derive(Debug, Clone)]
pub struct CheckResult {
    /// Human-readable name of the checked loss/architecture.
    pub name: String,
    /// Largest relative error over the checked coordinates.
    pub max_rel_err: f64,
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates skipped for riding a ReLU kink.
    pub skipped: usize,
}

impl CheckResult {
    /// True when at least one coordinate was compared and all of them were
    /// inside the tolerance.
    pub fn passed(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_err < tolerance
    }
}

/// Step sizes and tolerances for a finite-difference run.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Perturbation step (central differences).
    pub eps: f64,
    /// A perturbed pass whose smallest |ReLU pre-activation| is below this
    /// is considered kink-riding and the coordinate is skipped.
    pub kink_eps: f64,
    /// Coordinates whose one-sided difference quotients disagree by more
    /// than this relative error are skipped as non-smooth (a kink was
    /// crossed strictly inside the ±ε interval).
    pub asym_tol: f64,
    /// Check at most this many coordinates, evenly spaced (None = all).
    pub max_coords: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            kink_eps: 1e-6,
            asym_tol: 1e-4,
            max_coords: None,
        }
    }
}

impl GradCheckConfig {
    /// Compares `analytic` against central finite differences of `loss`.
    ///
    /// `loss` receives a full parameter vector and returns the scalar loss
    /// plus the smallest |ReLU pre-activation| encountered (use
    /// `f64::INFINITY` for kink-free computations).
    pub fn run<F>(
        &self,
        name: &str,
        params: &[f64],
        analytic: &[f64],
        mut loss: F,
    ) -> CheckResult
    where
        F: FnMut(&[f64]) -> (f64, f64),
    {
        assert_eq!(
            params.len(),
            analytic.len(),
            "gradient vector must match parameter vector"
        );
        let coords: Vec<usize> = match self.max_coords {
            Some(limit) if limit < params.len() && limit > 0 => {
                let stride = params.len() as f64 / limit as f64;
                (0..limit).map(|i| (i as f64 * stride) as usize).collect()
            }
            _ => (0..params.len()).collect(),
        };

        let mut probe = params.to_vec();
        // Kink distance at the unperturbed point: a parameter sitting almost
        // exactly on a kink makes both perturbed losses one-sided even though
        // the perturbed passes themselves look safely differentiable.
        let (loss_center, kink_center) = loss(&probe);
        let mut max_rel_err: f64 = 0.0;
        let mut checked = 0;
        let mut skipped = 0;
        for &i in &coords {
            let original = probe[i];
            probe[i] = original + self.eps;
            let (loss_plus, kink_plus) = loss(&probe);
            probe[i] = original - self.eps;
            let (loss_minus, kink_minus) = loss(&probe);
            probe[i] = original;
            if kink_plus.min(kink_minus).min(kink_center) < self.kink_eps {
                skipped += 1;
                continue;
            }
            let fd_plus = (loss_plus - loss_center) / self.eps;
            let fd_minus = (loss_center - loss_minus) / self.eps;
            if relative_error(fd_plus, fd_minus) > self.asym_tol {
                skipped += 1;
                continue;
            }
            let fd = (loss_plus - loss_minus) / (2.0 * self.eps);
            max_rel_err = max_rel_err.max(relative_error(fd, analytic[i]));
            checked += 1;
        }
        CheckResult {
            name: name.to_string(),
            max_rel_err,
            checked,
            skipped,
        }
    }
}
