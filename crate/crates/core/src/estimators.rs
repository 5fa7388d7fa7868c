//! Stochastic gradient estimators.
//!
//! All batch estimators draw each sample from its own counter substream
//! (label `Outcomes`, path `[batch, draw]`), so draws are independent of
//! evaluation order, and accumulate the mean in pairwise-summation order:
//! results are deterministic for a fixed seed no matter how the draws are
//! scheduled.

use crate::model::Environment;
use crate::model::Outcome;
use crate::rng::{StreamKey, StreamLabel};
use crate::vector::ParamVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    /// The reference density π_θ'(x) vanishes at a sampled outcome, so the
    /// importance weight is undefined.
    #[error("reference density vanishes at the sampled outcome")]
    ZeroDensity,
}

/// Which arm of the probabilistic estimator produced a sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Fresh large-batch estimate.
    Full,
    /// Previous estimate corrected with a small importance-weighted batch.
    Incremental,
}

/// A realized gradient estimate along with its sampling cost.
#[derive(Clone, Debug)]
pub struct EstimatorSample {
    pub grad: ParamVector,
    pub samples_used: u64,
    /// Set for probabilistic-estimator updates, `None` for plain batches.
    pub branch: Option<Branch>,
}

/// Per-outcome estimator g(x, θ); delegates to the environment, which may
/// use a lower-variance form with the same expectation.
pub fn score_gradient(env: &dyn Environment, theta: &ParamVector, x: &Outcome) -> ParamVector {
    env.score_gradient(theta, x)
}

/// Importance-weighted estimator g_w(x, θ, θ') = (π_θ(x)/π_θ'(x))·g(x, θ),
/// an unbiased estimate of ∇J(θ) from draws x ~ π_θ'. The weight is formed
/// in log space before exponentiation.
pub fn weighted_score_gradient(
    env: &dyn Environment,
    theta: &ParamVector,
    theta_ref: &ParamVector,
    x: &Outcome,
) -> Result<ParamVector, EstimatorError> {
    weighted_score_gradient_clipped(env, theta, theta_ref, x, None)
}

/// [`weighted_score_gradient`] with an optional hard cap on the weight.
///
/// Clipping biases the estimator, so it is off unless explicitly set; it
/// exists for diagnostic comparisons only.
pub fn weighted_score_gradient_clipped(
    env: &dyn Environment,
    theta: &ParamVector,
    theta_ref: &ParamVector,
    x: &Outcome,
    max_weight: Option<f64>,
) -> Result<ParamVector, EstimatorError> {
    if env.log_prob(theta_ref, x) == f64::NEG_INFINITY {
        return Err(EstimatorError::ZeroDensity);
    }
    let mut weight = env.log_weight(theta, theta_ref, x).exp();
    if let Some(cap) = max_weight {
        weight = weight.min(cap);
    }
    Ok(env.score_gradient(theta, x).scale(weight))
}

/// Mini-batch estimator: mean of g(x_j, θ) over `n` i.i.d. draws x_j ~ π_θ.
pub fn batch_gradient(
    env: &dyn Environment,
    theta: &ParamVector,
    n: usize,
    key: &StreamKey,
    batch: u64,
) -> EstimatorSample {
    assert!(n >= 1, "batch size must be at least 1");
    let sum = pairwise_sum(0, n as u64, &mut |j| {
        let mut rng = key.stream(StreamLabel::Outcomes, &[batch, j]);
        let x = env.sample(theta, &mut rng);
        Ok(env.score_gradient(theta, &x))
    })
    .expect("plain batch draws cannot fail");
    EstimatorSample { grad: sum.scale(1.0 / n as f64), samples_used: n as u64, branch: None }
}

/// Incremental arm of the probabilistic estimator:
/// `g_old + (1/n)·Σ_j [g(x_j, θ_new) − g_w(x_j, θ_old, θ_new)]` with the
/// same draws x_j ~ π_{θ_new} shared by both terms (so the correction
/// vanishes termwise when θ_new = θ_old).
pub fn incremental_update(
    env: &dyn Environment,
    theta_new: &ParamVector,
    theta_old: &ParamVector,
    g_old: &ParamVector,
    n: usize,
    key: &StreamKey,
    batch: u64,
) -> Result<EstimatorSample, EstimatorError> {
    assert!(n >= 1, "batch size must be at least 1");
    let sum = pairwise_sum(0, n as u64, &mut |j| {
        let mut rng = key.stream(StreamLabel::Outcomes, &[batch, j]);
        let x = env.sample(theta_new, &mut rng);
        let fresh = env.score_gradient(theta_new, &x);
        let stale = weighted_score_gradient(env, theta_old, theta_new, &x)?;
        Ok(fresh.sub(&stale))
    })?;
    Ok(EstimatorSample {
        grad: g_old.add(&sum.scale(1.0 / n as f64)),
        samples_used: n as u64,
        branch: Some(Branch::Incremental),
    })
}

/// Probabilistic estimator update: with probability `p` a fresh batch of
/// `n1` draws at θ_new, otherwise the incremental correction of `g_old`
/// with `n2` draws. The branch decision consumes its own substream, so
/// branch sequences are reproducible across batch-size changes.
#[allow(clippy::too_many_arguments)]
pub fn page_update(
    env: &dyn Environment,
    theta_new: &ParamVector,
    theta_old: &ParamVector,
    g_old: &ParamVector,
    n1: usize,
    n2: usize,
    p: f64,
    key: &StreamKey,
    iteration: u64,
) -> Result<EstimatorSample, EstimatorError> {
    assert!(p > 0.0 && p <= 1.0, "branch probability must lie in (0, 1]");
    let mut branch_rng = key.stream(StreamLabel::Branches, &[iteration]);
    if branch_rng.bernoulli(p) {
        let mut sample = batch_gradient(env, theta_new, n1, key, iteration);
        sample.branch = Some(Branch::Full);
        Ok(sample)
    } else {
        incremental_update(env, theta_new, theta_old, g_old, n2, key, iteration)
    }
}

/// Binary-tree pairwise sum of `eval(lo..hi)`.
fn pairwise_sum(
    lo: u64,
    hi: u64,
    eval: &mut impl FnMut(u64) -> Result<ParamVector, EstimatorError>,
) -> Result<ParamVector, EstimatorError> {
    debug_assert!(lo < hi);
    if hi - lo == 1 {
        return eval(lo);
    }
    let mid = lo + (hi - lo) / 2;
    let mut left = pairwise_sum(lo, mid, eval)?;
    let right = pairwise_sum(mid, hi, eval)?;
    left.accumulate(&right);
    Ok(left)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{DirectBandit, PointMass, SoftmaxBandit};
    use crate::model::{exact_gradient, prob};
    use approx::assert_abs_diff_eq;

    fn two_arm() -> SoftmaxBandit {
        SoftmaxBandit::new(vec![1.0, 0.0])
    }

    #[test]
    fn score_gradient_two_arm_example() {
        let env = two_arm();
        let theta = ParamVector::zeros(2);
        let g = score_gradient(&env, &theta, &Outcome::Arm(0));
        assert_abs_diff_eq!(g[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.5, epsilon = 1e-15);
        // Zero-reward arm with θ-independent reward contributes nothing.
        let g = score_gradient(&env, &theta, &Outcome::Arm(1));
        assert_abs_diff_eq!(g.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn score_gradient_point_mass_is_reward_gradient() {
        let env = PointMass::new(ParamVector::from(vec![2.0]), 1.0);
        let theta = ParamVector::from(vec![0.5]);
        let x = Outcome::Point(Vec::new());
        let g = score_gradient(&env, &theta, &x);
        let gr = env.grad_reward(&theta, &x);
        assert_eq!(g.as_slice(), gr.as_slice());
    }

    #[test]
    fn batch_of_one_is_a_single_draw() {
        let env = two_arm();
        let theta = ParamVector::from(vec![0.3, -0.4]);
        let key = StreamKey::new(5);
        let est = batch_gradient(&env, &theta, 1, &key, 7);
        let mut rng = key.stream(StreamLabel::Outcomes, &[7, 0]);
        let x = env.sample(&theta, &mut rng);
        let direct = score_gradient(&env, &theta, &x);
        assert_eq!(est.grad.as_slice(), direct.as_slice());
        assert_eq!(est.samples_used, 1);
        assert_eq!(est.branch, None);
    }

    #[test]
    fn batch_on_point_mass_is_exact_for_any_n() {
        let env = PointMass::new(ParamVector::from(vec![1.0, 1.0]), 0.9);
        let theta = ParamVector::from(vec![0.2, -0.3]);
        let key = StreamKey::new(1);
        let exact = env.grad_reward(&theta, &Outcome::Point(Vec::new()));
        for n in [1usize, 3, 8, 100] {
            let est = batch_gradient(&env, &theta, n, &key, 0);
            assert_abs_diff_eq!(est.grad[0], exact[0], epsilon = 1e-15);
            assert_abs_diff_eq!(est.grad[1], exact[1], epsilon = 1e-15);
        }
    }

    #[test]
    fn batch_mean_concentrates_on_exact_gradient() {
        let env = two_arm();
        let theta = ParamVector::zeros(2);
        let n = 100_000usize;
        let key = StreamKey::new(42);
        let est = batch_gradient(&env, &theta, n, &key, 0);
        let exact = exact_gradient(&env, &theta).unwrap();

        // Componentwise CLT band at 4σ̂/√N.
        let mut var = [0.0f64; 2];
        for j in 0..n as u64 {
            let mut rng = key.stream(StreamLabel::Outcomes, &[0, j]);
            let x = env.sample(&theta, &mut rng);
            let g = score_gradient(&env, &theta, &x);
            for i in 0..2 {
                var[i] += (g[i] - est.grad[i]).powi(2);
            }
        }
        for i in 0..2 {
            let sd = (var[i] / (n as f64 - 1.0)).sqrt();
            let band = 4.0 * sd / (n as f64).sqrt();
            assert!(
                (est.grad[i] - exact[i]).abs() <= band,
                "component {i}: {} vs {} ± {band}",
                est.grad[i],
                exact[i]
            );
        }
    }

    #[test]
    fn batch_unbiased_by_enumeration_at_n1() {
        let env = SoftmaxBandit::new(vec![1.0, 0.5, 0.0]);
        let theta = ParamVector::from(vec![0.4, 0.0, -0.9]);
        let mut mean = ParamVector::zeros(3);
        for x in env.enumerate().unwrap() {
            mean = mean.add_scaled(prob(&env, &theta, &x), &score_gradient(&env, &theta, &x));
        }
        let exact = exact_gradient(&env, &theta).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(mean[i], exact[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn weighted_score_gradient_examples() {
        let env = two_arm();
        let theta = ParamVector::zeros(2);
        let theta_ref = ParamVector::from(vec![2f64.ln(), 0.0]);

        // Equal parameters: weight is exactly one.
        let x = Outcome::Arm(0);
        let plain = score_gradient(&env, &theta, &x);
        let weighted = weighted_score_gradient(&env, &theta, &theta, &x).unwrap();
        assert_eq!(plain.as_slice(), weighted.as_slice());

        // Closed-form softmax densities: weight = 0.5/(2/3) = 0.75.
        let weighted = weighted_score_gradient(&env, &theta, &theta_ref, &x).unwrap();
        assert_abs_diff_eq!(weighted[0], 0.375, epsilon = 1e-12);
        assert_abs_diff_eq!(weighted[1], -0.375, epsilon = 1e-12);

        // Zero reward kills the estimate regardless of the weight.
        let zero_env = SoftmaxBandit::new(vec![0.0, 0.0]);
        let weighted = weighted_score_gradient(&zero_env, &theta, &theta_ref, &x).unwrap();
        assert_abs_diff_eq!(weighted.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn weighted_estimator_is_unbiased_by_enumeration() {
        let env = SoftmaxBandit::new(vec![1.0, 0.5, 0.0]);
        let theta = ParamVector::from(vec![0.7, -0.2, 0.1]);
        let theta_ref = ParamVector::from(vec![-0.5, 0.4, 0.3]);
        let mut mean = ParamVector::zeros(3);
        let mut weight_mass = 0.0;
        for x in env.enumerate().unwrap() {
            let p_ref = prob(&env, &theta_ref, &x);
            let gw = weighted_score_gradient(&env, &theta, &theta_ref, &x).unwrap();
            mean = mean.add_scaled(p_ref, &gw);
            weight_mass += p_ref * env.log_weight(&theta, &theta_ref, &x).exp();
        }
        let exact = exact_gradient(&env, &theta).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(mean[i], exact[i], epsilon = 1e-12);
        }
        // E_{x∼π_θ'}[π_θ/π_θ'] = 1.
        assert_abs_diff_eq!(weight_mass, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_density_reference_is_rejected() {
        let env = DirectBandit::new(vec![1.0, 0.0], 0.1);
        let theta = ParamVector::from(vec![0.5, 0.5]);
        let theta_ref = ParamVector::from(vec![1.0, 0.0]);
        let err = weighted_score_gradient(&env, &theta, &theta_ref, &Outcome::Arm(1)).unwrap_err();
        assert_eq!(err, EstimatorError::ZeroDensity);
    }

    #[test]
    fn page_update_with_p_one_is_a_full_batch() {
        let env = two_arm();
        let theta_new = ParamVector::from(vec![0.1, -0.1]);
        let theta_old = ParamVector::zeros(2);
        let g_old = ParamVector::zeros(2);
        let key = StreamKey::new(9);
        for iter in 0..20u64 {
            let est =
                page_update(&env, &theta_new, &theta_old, &g_old, 16, 4, 1.0, &key, iter).unwrap();
            assert_eq!(est.branch, Some(Branch::Full));
            assert_eq!(est.samples_used, 16);
            let full = batch_gradient(&env, &theta_new, 16, &key, iter);
            assert_eq!(est.grad.as_slice(), full.grad.as_slice());
        }
    }

    #[test]
    fn incremental_branch_with_equal_parameters_returns_g_old_exactly() {
        let env = two_arm();
        let theta = ParamVector::from(vec![0.6, -0.2]);
        let g_old = ParamVector::from(vec![0.123456, -0.654321]);
        let key = StreamKey::new(11);
        let est = incremental_update(&env, &theta, &theta, &g_old, 32, &key, 3).unwrap();
        assert_eq!(est.grad.as_slice(), g_old.as_slice());
        assert_eq!(est.branch, Some(Branch::Incremental));
        assert_eq!(est.samples_used, 32);

        // The same holds through the branching wrapper with p close to 0.
        let est = page_update(&env, &theta, &theta, &g_old, 64, 32, 1e-12, &key, 3).unwrap();
        assert_eq!(est.branch, Some(Branch::Incremental));
        assert_eq!(est.grad.as_slice(), g_old.as_slice());
    }

    #[test]
    fn page_conditional_unbiasedness_by_branch_outcome_enumeration() {
        // Three-arm bandit, N1 = N2 = 1: enumerate branch × outcome with
        // weights {p·π_new(x), (1−p)·π_new(x)} and g_old fixed at
        // ∇J(θ_old). The mixture expectation must equal ∇J(θ_new).
        let env = SoftmaxBandit::new(vec![1.0, 0.5, 0.0]);
        let theta_old = ParamVector::from(vec![0.2, -0.1, 0.4]);
        let theta_new = ParamVector::from(vec![-0.3, 0.5, 0.1]);
        let g_old = exact_gradient(&env, &theta_old).unwrap();
        let p = 0.37;

        let mut expectation = ParamVector::zeros(3);
        for x in env.enumerate().unwrap() {
            let weight = prob(&env, &theta_new, &x);
            // Full branch with a single draw: the estimate is g(x, θ_new).
            let full = score_gradient(&env, &theta_new, &x);
            expectation = expectation.add_scaled(p * weight, &full);
            // Incremental branch with a single draw.
            let incr = g_old
                .add(&score_gradient(&env, &theta_new, &x))
                .sub(&weighted_score_gradient(&env, &theta_old, &theta_new, &x).unwrap());
            expectation = expectation.add_scaled((1.0 - p) * weight, &incr);
        }
        let exact = exact_gradient(&env, &theta_new).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(expectation[i], exact[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn empirical_variance_respects_declared_bound() {
        // E‖g − ∇J‖² over 10⁵ draws stays below 2U²C_g² + 2C̃_g².
        let env = SoftmaxBandit::new(vec![1.0, 0.5, 0.0]);
        let theta = ParamVector::from(vec![0.5, 0.0, -0.5]);
        let exact = exact_gradient(&env, &theta).unwrap();
        let tc = env.constants();
        let bound = 2.0 * tc.reward_bound.powi(2) * tc.score_grad_bound.powi(2)
            + 2.0 * tc.reward_grad_bound.powi(2);
        let key = StreamKey::new(2718);
        let n = 100_000u64;
        let mut acc = 0.0;
        for j in 0..n {
            let mut rng = key.stream(StreamLabel::Outcomes, &[0, j]);
            let x = env.sample(&theta, &mut rng);
            acc += score_gradient(&env, &theta, &x).sub(&exact).norm_sq();
        }
        let empirical = acc / n as f64;
        assert!(empirical <= bound, "empirical {empirical} vs bound {bound}");
    }
}
