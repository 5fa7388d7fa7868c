//! Multi-armed bandit environments under softmax and direct
//! parameterizations.

use super::{log_softmax_at, softmax};
use crate::model::{Environment, Outcome, TheoryConstants};
use crate::rng::CounterRng;
use crate::vector::ParamVector;

/// K-armed bandit with softmax parameterization π_θ(a) = exp(θ_a)/Σ_b exp(θ_b)
/// and a θ-independent reward vector r ∈ [0, U]^K.
#[derive(Clone, Debug)]
pub struct SoftmaxBandit {
    rewards: Vec<f64>,
    weight_var_bound: Option<f64>,
}

impl SoftmaxBandit {
    pub fn new(rewards: Vec<f64>) -> Self {
        assert!(!rewards.is_empty(), "bandit needs at least one arm");
        assert!(rewards.iter().all(|r| r.is_finite() && *r >= 0.0), "rewards must be in [0, U]");
        SoftmaxBandit { rewards, weight_var_bound: None }
    }

    /// Declare an importance-weight variance bound C_w.
    ///
    /// No finite C_w holds for softmax policies over all of R^n; a declared
    /// value is the author's modeling assertion about the parameter drift a
    /// run will actually see, and the diagnostics can falsify it.
    pub fn with_weight_var_bound(mut self, c_w: f64) -> Self {
        assert!(c_w >= 0.0 && c_w.is_finite());
        self.weight_var_bound = Some(c_w);
        self
    }

    pub fn arms(&self) -> usize {
        self.rewards.len()
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }
}

impl Environment for SoftmaxBandit {
    fn dim(&self) -> usize {
        self.rewards.len()
    }

    fn constants(&self) -> TheoryConstants {
        TheoryConstants {
            reward_bound: self.rewards.iter().cloned().fold(0.0, f64::max),
            score_grad_bound: std::f64::consts::SQRT_2,
            score_hess_bound: 2.0,
            reward_grad_bound: 0.0,
            reward_hess_bound: 0.0,
            weight_var_bound: self.weight_var_bound,
        }
    }

    fn sample(&self, theta: &ParamVector, rng: &mut CounterRng) -> Outcome {
        Outcome::Arm(rng.categorical(&softmax(theta)))
    }

    fn log_prob(&self, theta: &ParamVector, x: &Outcome) -> f64 {
        log_softmax_at(theta, x.arm())
    }

    fn grad_log_prob(&self, theta: &ParamVector, x: &Outcome) -> ParamVector {
        let probs = softmax(theta);
        let arm = x.arm();
        ParamVector::from_fn(self.dim(), |b| if b == arm { 1.0 - probs[b] } else { -probs[b] })
    }

    fn reward(&self, _theta: &ParamVector, x: &Outcome) -> f64 {
        self.rewards[x.arm()]
    }

    fn grad_reward(&self, _theta: &ParamVector, _x: &Outcome) -> ParamVector {
        ParamVector::zeros(self.dim())
    }

    fn enumerate(&self) -> Option<Vec<Outcome>> {
        Some((0..self.arms()).map(Outcome::Arm).collect())
    }
}

/// Softmax bandit with a θ-modulated reward
/// `R_θ(a) = r_a·(1 + α·sin(v_aᵀθ))/2`, the designated test vehicle for
/// the non-oblivious (θ-dependent reward) setting. Its derivative bounds
/// are available in closed form.
#[derive(Clone, Debug)]
pub struct ThetaRewardBandit {
    rewards: Vec<f64>,
    alpha: f64,
    directions: Vec<ParamVector>,
    weight_var_bound: Option<f64>,
}

impl ThetaRewardBandit {
    pub fn new(rewards: Vec<f64>, alpha: f64, directions: Vec<ParamVector>) -> Self {
        assert!(!rewards.is_empty(), "bandit needs at least one arm");
        assert!(rewards.iter().all(|r| r.is_finite() && *r >= 0.0));
        assert!((0.0..1.0).contains(&alpha), "alpha must lie in [0, 1)");
        assert_eq!(rewards.len(), directions.len(), "one direction per arm");
        let dim = rewards.len();
        assert!(directions.iter().all(|v| v.dim() == dim), "direction dim must equal arm count");
        ThetaRewardBandit { rewards, alpha, directions, weight_var_bound: None }
    }

    /// See [`SoftmaxBandit::with_weight_var_bound`].
    pub fn with_weight_var_bound(mut self, c_w: f64) -> Self {
        assert!(c_w >= 0.0 && c_w.is_finite());
        self.weight_var_bound = Some(c_w);
        self
    }

    fn max_reward(&self) -> f64 {
        self.rewards.iter().cloned().fold(0.0, f64::max)
    }

    fn max_dir_norm(&self) -> f64 {
        self.directions.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl Environment for ThetaRewardBandit {
    fn dim(&self) -> usize {
        self.rewards.len()
    }

    fn constants(&self) -> TheoryConstants {
        let u = self.max_reward();
        let vmax = self.max_dir_norm();
        TheoryConstants {
            reward_bound: u,
            score_grad_bound: std::f64::consts::SQRT_2,
            score_hess_bound: 2.0,
            reward_grad_bound: 0.5 * self.alpha * u * vmax,
            reward_hess_bound: 0.5 * self.alpha * u * vmax * vmax,
            weight_var_bound: self.weight_var_bound,
        }
    }

    fn sample(&self, theta: &ParamVector, rng: &mut CounterRng) -> Outcome {
        Outcome::Arm(rng.categorical(&softmax(theta)))
    }

    fn log_prob(&self, theta: &ParamVector, x: &Outcome) -> f64 {
        log_softmax_at(theta, x.arm())
    }

    fn grad_log_prob(&self, theta: &ParamVector, x: &Outcome) -> ParamVector {
        let probs = softmax(theta);
        let arm = x.arm();
        ParamVector::from_fn(self.dim(), |b| if b == arm { 1.0 - probs[b] } else { -probs[b] })
    }

    fn reward(&self, theta: &ParamVector, x: &Outcome) -> f64 {
        let a = x.arm();
        let phase = self.directions[a].dot(theta);
        0.5 * self.rewards[a] * (1.0 + self.alpha * phase.sin())
    }

    fn grad_reward(&self, theta: &ParamVector, x: &Outcome) -> ParamVector {
        let a = x.arm();
        let phase = self.directions[a].dot(theta);
        self.directions[a].scale(0.5 * self.rewards[a] * self.alpha * phase.cos())
    }

    fn enumerate(&self) -> Option<Vec<Outcome>> {
        Some((0..self.rewards.len()).map(Outcome::Arm).collect())
    }
}

/// K-armed bandit with direct parameterization: θ lives on the probability
/// simplex and π_θ(k) = θ_k.
///
/// Intended to run against [`crate::prox::FlooredSimplexConstraint`], whose
/// floor δ keeps every density ≥ δ. On that feasible set the declared
/// bounds are honest: ‖∇ log π‖ ≤ 1/δ, ‖∇² log π‖ ≤ 1/δ², and the
/// importance-weight variance satisfies E[(π_θ/π_θ' − 1)²] ≤ 1/δ − 1.
#[derive(Clone, Debug)]
pub struct DirectBandit {
    rewards: Vec<f64>,
    floor: f64,
}

impl DirectBandit {
    pub fn new(rewards: Vec<f64>, floor: f64) -> Self {
        assert!(!rewards.is_empty(), "bandit needs at least one arm");
        assert!(rewards.iter().all(|r| r.is_finite() && *r >= 0.0));
        assert!(floor > 0.0 && floor * rewards.len() as f64 <= 1.0, "floor must satisfy δ·K ≤ 1");
        DirectBandit { rewards, floor }
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }
}

impl Environment for DirectBandit {
    fn dim(&self) -> usize {
        self.rewards.len()
    }

    fn constants(&self) -> TheoryConstants {
        TheoryConstants {
            reward_bound: self.rewards.iter().cloned().fold(0.0, f64::max),
            score_grad_bound: 1.0 / self.floor,
            score_hess_bound: 1.0 / (self.floor * self.floor),
            reward_grad_bound: 0.0,
            reward_hess_bound: 0.0,
            weight_var_bound: Some((1.0 / self.floor - 1.0).sqrt()),
        }
    }

    fn sample(&self, theta: &ParamVector, rng: &mut CounterRng) -> Outcome {
        Outcome::Arm(rng.categorical(theta))
    }

    fn log_prob(&self, theta: &ParamVector, x: &Outcome) -> f64 {
        let p = theta[x.arm()];
        if p > 0.0 {
            p.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn grad_log_prob(&self, theta: &ParamVector, x: &Outcome) -> ParamVector {
        let arm = x.arm();
        ParamVector::from_fn(self.dim(), |b| if b == arm { 1.0 / theta[arm] } else { 0.0 })
    }

    fn reward(&self, _theta: &ParamVector, x: &Outcome) -> f64 {
        self.rewards[x.arm()]
    }

    fn grad_reward(&self, _theta: &ParamVector, _x: &Outcome) -> ParamVector {
        ParamVector::zeros(self.dim())
    }

    fn enumerate(&self) -> Option<Vec<Outcome>> {
        Some((0..self.rewards.len()).map(Outcome::Arm).collect())
    }

    /// Uniform draw from the floored simplex (Dirichlet(1,…,1) on the
    /// shrunken simplex, shifted by the floor).
    fn probe_point(&self, rng: &mut CounterRng) -> ParamVector {
        let k = self.dim();
        let gaps: Vec<f64> = (0..k).map(|_| rng.exponential()).collect();
        let total: f64 = gaps.iter().sum();
        let slack = 1.0 - self.floor * k as f64;
        ParamVector::from_fn(k, |i| self.floor + slack * gaps[i] / total)
    }
}
