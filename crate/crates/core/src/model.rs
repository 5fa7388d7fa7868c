//! Problem objects: outcomes, environments (policy + reward), declared
//! bound constants, and exact oracles for finite outcome spaces.

use crate::prox::Regularizer;
use crate::rng::CounterRng;
use crate::vector::ParamVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point of the outcome space S: an arm index, a finite-horizon
/// trajectory, or a raw vector, depending on the environment.
#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Arm(usize),
    Trajectory(Trajectory),
    Point(Vec<f64>),
}

impl Outcome {
    pub fn arm(&self) -> usize {
        match self {
            Outcome::Arm(a) => *a,
            other => panic!("expected arm outcome, got {other:?}"),
        }
    }

    pub fn trajectory(&self) -> &Trajectory {
        match self {
            Outcome::Trajectory(t) => t,
            other => panic!("expected trajectory outcome, got {other:?}"),
        }
    }
}

/// A finite-horizon trajectory: states s_0..s_H and actions a_0..a_{H-1}.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
}

/// Bound constants declared by an environment author.
///
/// These are assumptions, not measurements: diagnostics falsify them
/// empirically rather than infer them. `weight_var_bound` is present only
/// when the author claims a bound on the importance-weight variance
/// `E_{x∼π_θ'}[(π_θ(x)/π_θ'(x) − 1)²]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// U: sup |R_θ(x)|.
    pub reward_bound: f64,
    /// C_g: sup ‖∇_θ log π_θ(x)‖.
    pub score_grad_bound: f64,
    /// C_h: sup ‖∇²_θ log π_θ(x)‖₂.
    pub score_hess_bound: f64,
    /// C̃_g: sup ‖∇_θ R_θ(x)‖.
    pub reward_grad_bound: f64,
    /// C̃_h: sup ‖∇²_θ R_θ(x)‖₂.
    pub reward_hess_bound: f64,
    /// C_w: importance-weight variance bound, when claimed.
    pub weight_var_bound: Option<f64>,
}

impl TheoryConstants {
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut fields = vec![
            ("reward_bound", self.reward_bound),
            ("score_grad_bound", self.score_grad_bound),
            ("score_hess_bound", self.score_hess_bound),
            ("reward_grad_bound", self.reward_grad_bound),
            ("reward_hess_bound", self.reward_hess_bound),
        ];
        if let Some(cw) = self.weight_var_bound {
            fields.push(("weight_var_bound", cw));
        }
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::InvalidConstant { name, value: v });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    /// The operation needs a finite, enumerable outcome space.
    #[error("environment does not expose a finite outcome space")]
    NotEnumerable,
    #[error("declared constant {name} is invalid: {value}")]
    InvalidConstant { name: &'static str, value: f64 },
}

/// A sampler plus differentiable model of (π_θ, R_θ) over an outcome space.
///
/// All methods take their state as arguments together with an explicit RNG
/// stream, so an environment is reentrant and safe to share across threads
/// with independent streams. The outcome space is fixed: it must not
/// depend on θ.
pub trait Environment: Send + Sync {
    /// Dimension n of the parameter vector.
    fn dim(&self) -> usize;

    /// Declared bound constants.
    fn constants(&self) -> TheoryConstants;

    /// Draw x ~ π_θ.
    fn sample(&self, theta: &ParamVector, rng: &mut CounterRng) -> Outcome;

    /// log π_θ(x); −∞ when x has zero density.
    fn log_prob(&self, theta: &ParamVector, x: &Outcome) -> f64;

    /// ∇_θ log π_θ(x).
    fn grad_log_prob(&self, theta: &ParamVector, x: &Outcome) -> ParamVector;

    /// R_θ(x).
    fn reward(&self, theta: &ParamVector, x: &Outcome) -> f64;

    /// ∇_θ R_θ(x).
    fn grad_reward(&self, theta: &ParamVector, x: &Outcome) -> ParamVector;

    /// The full outcome space, when finite (and small enough to visit).
    fn enumerate(&self) -> Option<Vec<Outcome>> {
        None
    }

    /// Per-outcome gradient estimator g(x, θ).
    ///
    /// The default is the score-function form
    /// `R_θ(x)·∇ log π_θ(x) + ∇R_θ(x)`; environments may override it with
    /// any estimator of equal expectation (the tabular MDP substitutes the
    /// lower-variance per-step form).
    fn score_gradient(&self, theta: &ParamVector, x: &Outcome) -> ParamVector {
        let r = self.reward(theta, x);
        self.grad_log_prob(theta, x).scale(r).add(&self.grad_reward(theta, x))
    }

    /// log of the importance weight π_θ(x)/π_{θ_ref}(x).
    ///
    /// The default subtracts log-densities; environments whose densities
    /// share θ-independent factors may override to cancel them exactly.
    fn log_weight(&self, theta: &ParamVector, theta_ref: &ParamVector, x: &Outcome) -> f64 {
        self.log_prob(theta, x) - self.log_prob(theta_ref, x)
    }

    /// Draw a θ for randomized probes: uniform over the environment's
    /// natural parameter domain, by default the box [−3, 3]^n.
    fn probe_point(&self, rng: &mut CounterRng) -> ParamVector {
        ParamVector::from_fn(self.dim(), |_| rng.uniform_in(-3.0, 3.0))
    }
}

/// π_θ(x) via the log density.
pub fn prob(env: &dyn Environment, theta: &ParamVector, x: &Outcome) -> f64 {
    env.log_prob(theta, x).exp()
}

/// Exact expected reward J(θ) = Σ_x π_θ(x) R_θ(x) over a finite outcome space.
pub fn exact_objective(env: &dyn Environment, theta: &ParamVector) -> Result<f64, ModelError> {
    let outcomes = env.enumerate().ok_or(ModelError::NotEnumerable)?;
    let mut total = 0.0;
    for x in &outcomes {
        let p = prob(env, theta, x);
        if p > 0.0 {
            total += p * env.reward(theta, x);
        }
    }
    Ok(total)
}

/// Exact gradient ∇J(θ) = Σ_x π_θ(x)·[R_θ(x)∇ log π_θ(x) + ∇R_θ(x)].
pub fn exact_gradient(env: &dyn Environment, theta: &ParamVector) -> Result<ParamVector, ModelError> {
    let outcomes = env.enumerate().ok_or(ModelError::NotEnumerable)?;
    let mut total = ParamVector::zeros(env.dim());
    for x in &outcomes {
        let p = prob(env, theta, x);
        if p > 0.0 {
            let r = env.reward(theta, x);
            let term = env.grad_log_prob(theta, x).scale(r).add(&env.grad_reward(theta, x));
            total = total.add_scaled(p, &term);
        }
    }
    Ok(total)
}

/// Exact composite value F(θ) = J(θ) − G(θ); −∞ when θ is infeasible for
/// an indicator regularizer.
pub fn composite_value(
    env: &dyn Environment,
    reg: &dyn Regularizer,
    theta: &ParamVector,
) -> Result<f64, ModelError> {
    let objective = exact_objective(env, theta)?;
    let penalty = reg.value(theta);
    if penalty.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(objective - penalty)
}

/// Total probability mass Σ_x π_θ(x) over the enumerated space.
pub fn total_mass(env: &dyn Environment, theta: &ParamVector) -> Result<f64, ModelError> {
    let outcomes = env.enumerate().ok_or(ModelError::NotEnumerable)?;
    Ok(outcomes.iter().map(|x| prob(env, theta, x)).sum())
}
