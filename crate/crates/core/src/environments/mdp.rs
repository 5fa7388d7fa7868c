//! Finite tabular MDP over trajectories of a fixed horizon, with a
//! per-state softmax policy.

use super::{log_softmax_at, softmax};
use crate::model::{Environment, Outcome, TheoryConstants, Trajectory};
use crate::rng::CounterRng;
use crate::vector::ParamVector;

/// Discounted tabular MDP {S, A, P, R, γ, ρ₀} run for a finite horizon H.
///
/// An outcome is a whole trajectory τ = (s_0, a_0, …, a_{H−1}, s_H) with
/// density ρ_θ(τ) = ρ₀(s₀)·Π_t P(s_{t+1}|s_t,a_t)·π̃_θ(a_t|s_t) and return
/// R(τ) = Σ_t γ^t R(s_t, a_t). The policy parameter θ ∈ R^{|S|·|A|} holds
/// one softmax logit block per state.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// P(s'|s,a), indexed (s·A + a)·S + s'.
    transition: Vec<f64>,
    /// R(s,a) ∈ [0, U], indexed s·A + a.
    rewards: Vec<f64>,
    gamma: f64,
    horizon: usize,
    initial: Vec<f64>,
    enumeration_cap: u64,
    weight_var_bound: Option<f64>,
}

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

impl TabularMdp {
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        gamma: f64,
        horizon: usize,
        initial: Vec<f64>,
    ) -> Self {
        let n_states = transition.len();
        assert!(n_states > 0, "need at least one state");
        let n_actions = transition[0].len();
        assert!(n_actions > 0, "need at least one action");
        assert!((0.0..1.0).contains(&gamma), "gamma must lie in [0, 1)");
        assert!(horizon >= 1, "horizon must be at least 1");
        assert_eq!(initial.len(), n_states);
        assert!((initial.iter().sum::<f64>() - 1.0).abs() <= 1e-9, "initial distribution must sum to 1");
        assert!(initial.iter().all(|&p| p >= 0.0));

        let mut flat_p = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, row_a) in transition.iter().enumerate() {
            assert_eq!(row_a.len(), n_actions, "ragged action axis at state {s}");
            for row in row_a {
                assert_eq!(row.len(), n_states, "ragged next-state axis");
                let total: f64 = row.iter().sum();
                assert!((total - 1.0).abs() <= 1e-9, "transition row must sum to 1");
                assert!(row.iter().all(|&p| p >= 0.0));
                flat_p.extend_from_slice(row);
            }
        }
        let mut flat_r = Vec::with_capacity(n_states * n_actions);
        for row in &rewards {
            assert_eq!(row.len(), n_actions);
            assert!(row.iter().all(|&r| r.is_finite() && r >= 0.0), "rewards must be in [0, U]");
            flat_r.extend_from_slice(row);
        }
        assert_eq!(flat_r.len(), n_states * n_actions);

        TabularMdp {
            n_states,
            n_actions,
            transition: flat_p,
            rewards: flat_r,
            gamma,
            horizon,
            initial,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            weight_var_bound: None,
        }
    }

    /// Cap on the number of trajectories `enumerate` is willing to expand;
    /// above it the exact oracles refuse rather than approximate.
    pub fn with_enumeration_cap(mut self, cap: u64) -> Self {
        self.enumeration_cap = cap;
        self
    }

    /// See [`super::SoftmaxBandit::with_weight_var_bound`].
    pub fn with_weight_var_bound(mut self, c_w: f64) -> Self {
        assert!(c_w >= 0.0 && c_w.is_finite());
        self.weight_var_bound = Some(c_w);
        self
    }

    /// A seeded random instance: Dirichlet-ish transition rows, uniform
    /// rewards in [0, 1], Dirichlet-ish initial distribution.
    pub fn random_instance(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        gamma: f64,
        rng: &mut CounterRng,
    ) -> Self {
        let dirichlet = |rng: &mut CounterRng, n: usize| -> Vec<f64> {
            let gaps: Vec<f64> = (0..n).map(|_| rng.exponential()).collect();
            let total: f64 = gaps.iter().sum();
            gaps.iter().map(|g| g / total).collect()
        };
        let transition: Vec<Vec<Vec<f64>>> = (0..n_states)
            .map(|_| (0..n_actions).map(|_| dirichlet(rng, n_states)).collect())
            .collect();
        let rewards: Vec<Vec<f64>> =
            (0..n_states).map(|_| (0..n_actions).map(|_| rng.uniform()).collect()).collect();
        let initial = dirichlet(rng, n_states);
        TabularMdp::new(transition, rewards, gamma, horizon, initial)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    fn p(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s_next]
    }

    #[inline]
    fn r(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    #[inline]
    fn logits<'a>(&self, theta: &'a ParamVector, s: usize) -> &'a [f64] {
        &theta.as_slice()[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Σ_t log π̃_θ(a_t|s_t) − log π̃_θ'(a_t|s_t); the θ-independent
    /// transition and initial factors cancel exactly.
    fn policy_log_ratio(&self, theta: &ParamVector, theta_ref: &ParamVector, tau: &Trajectory) -> f64 {
        let mut total = 0.0;
        for t in 0..tau.horizon() {
            let (s, a) = (tau.states[t], tau.actions[t]);
            total += log_softmax_at(self.logits(theta, s), a)
                - log_softmax_at(self.logits(theta_ref, s), a);
        }
        total
    }

    /// Trajectory importance weight Π_t π̃_θ(a_t|s_t)/π̃_θ'(a_t|s_t),
    /// computed in log space.
    pub fn importance_weight(
        &self,
        theta: &ParamVector,
        theta_ref: &ParamVector,
        tau: &Trajectory,
    ) -> f64 {
        self.policy_log_ratio(theta, theta_ref, tau).exp()
    }

    /// Number of support trajectories (zero-probability transitions and
    /// initial states excluded).
    fn count_trajectories(&self) -> u128 {
        // counts[s] = number of length-h continuations from s.
        let mut counts = vec![1u128; self.n_states];
        for _ in 0..self.horizon {
            let mut next = vec![0u128; self.n_states];
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    for s2 in 0..self.n_states {
                        if self.p(s, a, s2) > 0.0 {
                            next[s] += counts[s2];
                        }
                    }
                }
            }
            counts = next;
        }
        (0..self.n_states).filter(|&s| self.initial[s] > 0.0).map(|s| counts[s]).sum()
    }
}

impl Environment for TabularMdp {
    fn dim(&self) -> usize {
        self.n_states * self.n_actions
    }

    fn constants(&self) -> TheoryConstants {
        let u_r = self.rewards.iter().cloned().fold(0.0, f64::max);
        let h = self.horizon as f64;
        let discounted_span = if self.gamma == 0.0 {
            1.0
        } else {
            (1.0 - self.gamma.powi(self.horizon as i32)) / (1.0 - self.gamma)
        };
        TheoryConstants {
            reward_bound: u_r * discounted_span,
            // Per step the softmax score has norm ≤ √2 and Hessian norm
            // ≤ 2; trajectory sums scale both by H.
            score_grad_bound: std::f64::consts::SQRT_2 * h,
            score_hess_bound: 2.0 * h,
            reward_grad_bound: 0.0,
            reward_hess_bound: 0.0,
            weight_var_bound: self.weight_var_bound,
        }
    }

    fn sample(&self, theta: &ParamVector, rng: &mut CounterRng) -> Outcome {
        let mut states = Vec::with_capacity(self.horizon + 1);
        let mut actions = Vec::with_capacity(self.horizon);
        let mut s = rng.categorical(&self.initial);
        states.push(s);
        for _ in 0..self.horizon {
            let probs = softmax(self.logits(theta, s));
            let a = rng.categorical(&probs);
            actions.push(a);
            let row = &self.transition[(s * self.n_actions + a) * self.n_states..][..self.n_states];
            s = rng.categorical(row);
            states.push(s);
        }
        Outcome::Trajectory(Trajectory { states, actions })
    }

    fn log_prob(&self, theta: &ParamVector, x: &Outcome) -> f64 {
        let tau = x.trajectory();
        let rho0 = self.initial[tau.states[0]];
        if rho0 <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let mut total = rho0.ln();
        for t in 0..tau.horizon() {
            let (s, a, s2) = (tau.states[t], tau.actions[t], tau.states[t + 1]);
            let p = self.p(s, a, s2);
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            total += p.ln() + log_softmax_at(self.logits(theta, s), a);
        }
        total
    }

    fn grad_log_prob(&self, theta: &ParamVector, x: &Outcome) -> ParamVector {
        let tau = x.trajectory();
        let mut grad = vec![0.0; self.dim()];
        for t in 0..tau.horizon() {
            let (s, a) = (tau.states[t], tau.actions[t]);
            let probs = softmax(self.logits(theta, s));
            for b in 0..self.n_actions {
                grad[s * self.n_actions + b] += if b == a { 1.0 - probs[b] } else { -probs[b] };
            }
        }
        ParamVector::from(grad)
    }

    fn reward(&self, _theta: &ParamVector, x: &Outcome) -> f64 {
        let tau = x.trajectory();
        let mut total = 0.0;
        let mut discount = 1.0;
        for t in 0..tau.horizon() {
            total += discount * self.r(tau.states[t], tau.actions[t]);
            discount *= self.gamma;
        }
        total
    }

    fn grad_reward(&self, _theta: &ParamVector, _x: &Outcome) -> ParamVector {
        ParamVector::zeros(self.dim())
    }

    fn enumerate(&self) -> Option<Vec<Outcome>> {
        if self.count_trajectories() > self.enumeration_cap as u128 {
            return None;
        }
        let mut out = Vec::new();
        let mut states = Vec::with_capacity(self.horizon + 1);
        let mut actions = Vec::with_capacity(self.horizon);
        for s0 in 0..self.n_states {
            if self.initial[s0] > 0.0 {
                states.push(s0);
                self.expand(&mut states, &mut actions, &mut out);
                states.pop();
            }
        }
        Some(out)
    }

    /// Per-trajectory estimator in the per-step (reward-to-come) form:
    /// Σ_t γ^t R(s_t,a_t) Σ_{t'≤t} ∇ log π̃(a_{t'}|s_{t'}).
    ///
    /// Same expectation as the score-function form (the return is
    /// θ-independent) with lower variance; the reward at time t multiplies
    /// only scores of actions taken at or before t.
    fn score_gradient(&self, theta: &ParamVector, x: &Outcome) -> ParamVector {
        let tau = x.trajectory();
        let h = tau.horizon();
        let mut suffix = vec![0.0; h];
        let mut discount = 1.0;
        for t in 0..h {
            suffix[t] = discount * self.r(tau.states[t], tau.actions[t]);
            discount *= self.gamma;
        }
        for t in (0..h.saturating_sub(1)).rev() {
            suffix[t] += suffix[t + 1];
        }
        let mut grad = vec![0.0; self.dim()];
        for t in 0..h {
            let (s, a) = (tau.states[t], tau.actions[t]);
            let probs = softmax(self.logits(theta, s));
            for b in 0..self.n_actions {
                let score = if b == a { 1.0 - probs[b] } else { -probs[b] };
                grad[s * self.n_actions + b] += suffix[t] * score;
            }
        }
        ParamVector::from(grad)
    }

    fn log_weight(&self, theta: &ParamVector, theta_ref: &ParamVector, x: &Outcome) -> f64 {
        self.policy_log_ratio(theta, theta_ref, x.trajectory())
    }
}

impl TabularMdp {
    fn expand(&self, states: &mut Vec<usize>, actions: &mut Vec<usize>, out: &mut Vec<Outcome>) {
        if actions.len() == self.horizon {
            out.push(Outcome::Trajectory(Trajectory { states: states.clone(), actions: actions.clone() }));
            return;
        }
        let s = *states.last().expect("nonempty");
        for a in 0..self.n_actions {
            for s2 in 0..self.n_states {
                if self.p(s, a, s2) > 0.0 {
                    actions.push(a);
                    states.push(s2);
                    self.expand(states, actions, out);
                    states.pop();
                    actions.pop();
                }
            }
        }
    }
}
