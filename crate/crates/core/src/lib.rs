//! Stochastic proximal gradient methods for regularized expected-reward
//! optimization over parameterized distributions.
//!
//! The problem solved here is maximization of `F(θ) = J(θ) − G(θ)` where
//! `J(θ) = E_{x∼π_θ}[R_θ(x)]` is an expected reward under a θ-dependent
//! sampling distribution and `G` is a closed proper convex regularizer.
//! The crate provides:
//!
//! * problem objects ([`model`]): parameter vectors, environments
//!   (policy + reward oracles), and exact oracles for finite outcome spaces;
//! * convex regularizers with exact proximal operators and
//!   subdifferential-distance computations ([`prox`]);
//! * stochastic gradient estimators, including an importance-weighted
//!   probabilistic (PAGE-style) variance-reduced estimator ([`estimators`]);
//! * the optimization loops and stationarity measures ([`algorithms`]);
//! * calculators for every smoothness/variance constant and batch-size
//!   schedule used by the convergence analysis ([`theory`]);
//! * concrete desk-scale environments: softmax and direct-parameterized
//!   bandits and a finite tabular MDP ([`environments`]);
//! * statistical diagnostics that falsify declared bounds empirically
//!   ([`diagnostics`]);
//! * a config-driven experiment harness backing the `rewardopt` CLI
//!   ([`config`], [`harness`]).

pub mod algorithms;
pub mod config;
pub mod diagnostics;
pub mod environments;
pub mod estimators;
pub mod harness;
pub mod model;
pub mod prox;
pub mod rng;
pub mod theory;
pub mod vector;

pub use model::{Environment, ModelError, Outcome, TheoryConstants};
pub use prox::{gradient_mapping, ProxError, Regularizer};
pub use vector::ParamVector;
