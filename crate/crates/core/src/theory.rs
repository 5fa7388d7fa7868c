//! Derived constants and batch-size/step-size schedules.
//!
//! Everything here is a pure function of the declared bound constants:
//! the smoothness constant L of ∇J, the score-estimator variance bound σ²,
//! the importance-weight drift constant C, and the (η, T, N) schedules
//! that make the convergence guarantees concrete.

use crate::model::TheoryConstants;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    /// The environment declares no importance-weight variance bound C_w.
    #[error("no importance-weight variance bound declared")]
    MissingWeightBound,
    #[error("step size {eta} is not inside (0, {limit})")]
    StepTooLarge { eta: f64, limit: f64 },
    /// L = 0: the variance-reduced schedule is undefined.
    #[error("smoothness constant is zero; schedule undefined")]
    DegenerateSmoothness,
    #[error("tolerance must satisfy {0}")]
    InvalidTolerance(&'static str),
    #[error("objective-gap bound must be positive")]
    InvalidDelta,
}

/// L := U(C_g² + C_h) + C̃_h + 2·C_g·C̃_g, the Lipschitz constant of ∇J.
pub fn lipschitz_constant(tc: &TheoryConstants) -> f64 {
    tc.reward_bound * (tc.score_grad_bound.powi(2) + tc.score_hess_bound)
        + tc.reward_hess_bound
        + 2.0 * tc.score_grad_bound * tc.reward_grad_bound
}

/// σ² := 2U²C_g² + 2C̃_g², a bound on E‖g(x,θ) − ∇J(θ)‖².
pub fn score_variance_bound(tc: &TheoryConstants) -> f64 {
    2.0 * tc.reward_bound.powi(2) * tc.score_grad_bound.powi(2)
        + 2.0 * tc.reward_grad_bound.powi(2)
}

/// C := 6U²C_h² + 6C_g²C̃_g² + 6C̃_h² + (4U²C_g² + 4C̃_g²)(2C_g² + C_h)(C_w² + 1),
/// the constant in E‖g(x,θ') − g_w(x,θ,θ')‖² ≤ C‖θ − θ'‖².
pub fn weight_drift_constant(tc: &TheoryConstants) -> Result<f64, TheoryError> {
    let c_w = tc.weight_var_bound.ok_or(TheoryError::MissingWeightBound)?;
    let u2 = tc.reward_bound.powi(2);
    let cg2 = tc.score_grad_bound.powi(2);
    Ok(6.0 * u2 * tc.score_hess_bound.powi(2)
        + 6.0 * cg2 * tc.reward_grad_bound.powi(2)
        + 6.0 * tc.reward_hess_bound.powi(2)
        + (4.0 * u2 * cg2 + 4.0 * tc.reward_grad_bound.powi(2))
            * (2.0 * cg2 + tc.score_hess_bound)
            * (c_w.powi(2) + 1.0))
}

/// The constants derived from a set of declared bounds.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DerivedConstants {
    /// L, smoothness of ∇J.
    pub smoothness: f64,
    /// σ², per-draw estimator variance bound.
    pub score_variance: f64,
    /// C, importance-weight drift constant (needs C_w).
    pub weight_drift: Option<f64>,
    /// The declared bounds these were computed from.
    pub source: TheoryConstants,
}

impl DerivedConstants {
    pub fn from_constants(tc: &TheoryConstants) -> Self {
        DerivedConstants {
            smoothness: lipschitz_constant(tc),
            score_variance: score_variance_bound(tc),
            weight_drift: weight_drift_constant(tc).ok(),
            source: *tc,
        }
    }

    pub fn weight_drift(&self) -> Result<f64, TheoryError> {
        self.weight_drift.ok_or(TheoryError::MissingWeightBound)
    }
}

/// Iteration count, batch size and step size for the plain stochastic
/// proximal gradient method at target tolerance ε.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SpgSchedule {
    pub eta: f64,
    /// T = ⌈(Δ/ε²)(4/η + 8/(η(1−2ηL)))⌉
    pub iterations: u64,
    /// N = ⌈(σ²/ε²)(4 + 4/(ηL(1−2ηL)))⌉
    pub batch_size: u64,
    pub total_samples: u64,
    /// Set when L = 0: η is then unconstrained and the batch size keeps
    /// only its variance term.
    pub degenerate_smoothness: bool,
}

/// Schedule for a target tolerance ε and objective-gap bound Δ.
///
/// `eta` defaults to 1/(4L), the midpoint of the admissible (0, 1/(2L)).
pub fn spg_schedule(
    eps: f64,
    delta: f64,
    dc: &DerivedConstants,
    eta: Option<f64>,
) -> Result<SpgSchedule, TheoryError> {
    spg_schedule_with_sigma(eps, delta, dc, eta, dc.score_variance)
}

/// [`spg_schedule`] with an explicitly supplied variance in place of the
/// σ² bound — an opt-in for callers holding a measured per-environment
/// variance. The guarantee then only covers environments whose true
/// variance is below the supplied value.
pub fn spg_schedule_with_sigma(
    eps: f64,
    delta: f64,
    dc: &DerivedConstants,
    eta: Option<f64>,
    sigma_sq: f64,
) -> Result<SpgSchedule, TheoryError> {
    if !(eps > 0.0) {
        return Err(TheoryError::InvalidTolerance("ε > 0"));
    }
    if !(delta > 0.0) {
        return Err(TheoryError::InvalidDelta);
    }
    let l = dc.smoothness;
    if l == 0.0 {
        let eta = eta.unwrap_or(1.0);
        let iterations = ((delta / eps.powi(2)) * (12.0 / eta)).ceil() as u64;
        let batch_size = ((sigma_sq / eps.powi(2)) * 4.0).ceil().max(1.0) as u64;
        return Ok(SpgSchedule {
            eta,
            iterations: iterations.max(1),
            batch_size,
            total_samples: iterations.max(1).saturating_mul(batch_size),
            degenerate_smoothness: true,
        });
    }
    let limit = 1.0 / (2.0 * l);
    let eta = eta.unwrap_or(1.0 / (4.0 * l));
    if !(eta > 0.0 && eta < limit) {
        return Err(TheoryError::StepTooLarge { eta, limit });
    }
    let slack = 1.0 - 2.0 * eta * l;
    let iterations =
        ((delta / eps.powi(2)) * (4.0 / eta + 8.0 / (eta * slack))).ceil().max(1.0) as u64;
    let batch_size =
        ((sigma_sq / eps.powi(2)) * (4.0 + 4.0 / (eta * l * slack))).ceil().max(1.0) as u64;
    Ok(SpgSchedule {
        eta,
        iterations,
        batch_size,
        total_samples: iterations.saturating_mul(batch_size),
        degenerate_smoothness: false,
    })
}

/// Schedule for the variance-reduced method at target tolerance ε ∈ (0, 1).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PageSchedule {
    /// Largest admissible step: L/(2C + 2L²).
    pub eta_max: f64,
    /// N₁ = ⌈c_N1/ε²⌉.
    pub large_batch: u64,
    /// N₂ = ⌈√N₁⌉.
    pub small_batch: u64,
    /// p = N₂/(N₁ + N₂).
    pub switch_prob: f64,
    /// T = ⌈c_T/ε²⌉.
    pub iterations: u64,
    /// N₁ + T·(p·N₁ + (1−p)·N₂), the expected sampling cost.
    pub expected_total_samples: f64,
    /// The simpler bound N₁ + 2·T·N₂ that dominates it.
    pub sample_budget_bound: f64,
}

/// The analysis fixes only the orders N₁ = O(ε⁻²), T = O(ε⁻²); the leading
/// constants are exposed as `c_n1` and `c_t` (`c_t` defaults to `c_n1`).
pub fn page_schedule(
    eps: f64,
    dc: &DerivedConstants,
    c_n1: f64,
    c_t: Option<f64>,
) -> Result<PageSchedule, TheoryError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(TheoryError::InvalidTolerance("ε ∈ (0, 1)"));
    }
    assert!(c_n1 > 0.0, "schedule constant must be positive");
    let c = dc.weight_drift()?;
    let l = dc.smoothness;
    if l == 0.0 {
        return Err(TheoryError::DegenerateSmoothness);
    }
    let large_batch = (c_n1 / eps.powi(2)).ceil().max(1.0) as u64;
    let small_batch = (large_batch as f64).sqrt().ceil().max(1.0) as u64;
    let switch_prob = small_batch as f64 / (large_batch + small_batch) as f64;
    let iterations = (c_t.unwrap_or(c_n1) / eps.powi(2)).ceil().max(1.0) as u64;
    let eta_max = l / (2.0 * c + 2.0 * l * l);
    let per_iteration = switch_prob * large_batch as f64 + (1.0 - switch_prob) * small_batch as f64;
    Ok(PageSchedule {
        eta_max,
        large_batch,
        small_batch,
        switch_prob,
        iterations,
        expected_total_samples: large_batch as f64 + iterations as f64 * per_iteration,
        sample_budget_bound: large_batch as f64 + 2.0 * iterations as f64 * small_batch as f64,
    })
}

/// The contraction factor `1 − (1−p)Cη / (p·N₂·L·(1−2ηL))` appearing in the
/// estimator-error budget; the admissible step keeps it ≥ 1/2.
pub fn page_error_factor(
    dc: &DerivedConstants,
    switch_prob: f64,
    small_batch: u64,
    eta: f64,
) -> Result<f64, TheoryError> {
    let c = dc.weight_drift()?;
    if c == 0.0 {
        return Ok(1.0);
    }
    let l = dc.smoothness;
    if l == 0.0 {
        return Err(TheoryError::DegenerateSmoothness);
    }
    let slack = 1.0 - 2.0 * eta * l;
    Ok(1.0 - (1.0 - switch_prob) * c * eta / (switch_prob * small_batch as f64 * l * slack))
}

/// Advisory message when an SPG step size leaves the region the analysis
/// covers (η must stay inside (0, 1/(2L))).
pub fn spg_step_warning(dc: &DerivedConstants, eta: f64) -> Option<String> {
    if dc.smoothness > 0.0 && eta >= 1.0 / (2.0 * dc.smoothness) {
        Some(format!(
            "step size {} is at or above 1/(2L) = {}; the convergence bound does not apply",
            eta,
            1.0 / (2.0 * dc.smoothness)
        ))
    } else {
        None
    }
}

/// Advisory message when a variance-reduced step size exceeds
/// L/(2C + 2L²).
pub fn page_step_warning(dc: &DerivedConstants, eta: f64) -> Option<String> {
    let c = dc.weight_drift.unwrap_or(0.0);
    if dc.smoothness > 0.0 {
        let limit = dc.smoothness / (2.0 * c + 2.0 * dc.smoothness * dc.smoothness);
        if eta > limit {
            return Some(format!(
                "step size {eta} exceeds L/(2C + 2L²) = {limit}; the error-budget bound does not apply"
            ));
        }
    }
    None
}
