//! Experiment configuration: TOML-backed specs for environments,
//! regularizers, runs and sweeps, and their materialization into live
//! objects.

use crate::environments::{DirectBandit, PointMass, SoftmaxBandit, TabularMdp, ThetaRewardBandit};
use crate::model::Environment;
use crate::prox::{
    BoxConstraint, FlooredSimplexConstraint, L1Norm, Regularizer, SimplexConstraint, SquaredNorm,
    ZeroReg,
};
use crate::vector::ParamVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Which environment to build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    SoftmaxBandit {
        rewards: Vec<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        weight_var_bound: Option<f64>,
    },
    ThetaRewardBandit {
        rewards: Vec<f64>,
        alpha: f64,
        directions: Vec<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        weight_var_bound: Option<f64>,
    },
    DirectBandit {
        rewards: Vec<f64>,
        floor: f64,
    },
    TabularMdp {
        transition: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        gamma: f64,
        horizon: usize,
        initial: Vec<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        enumeration_cap: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        weight_var_bound: Option<f64>,
    },
    PointMass {
        target: Vec<f64>,
        scale: f64,
    },
}

impl EnvSpec {
    pub fn build(&self) -> Result<Box<dyn Environment>, ConfigError> {
        match self {
            EnvSpec::SoftmaxBandit { rewards, weight_var_bound } => {
                check_rewards(rewards)?;
                let mut env = SoftmaxBandit::new(rewards.clone());
                if let Some(cw) = weight_var_bound {
                    check_nonneg("weight_var_bound", *cw)?;
                    env = env.with_weight_var_bound(*cw);
                }
                Ok(Box::new(env))
            }
            EnvSpec::ThetaRewardBandit { rewards, alpha, directions, weight_var_bound } => {
                check_rewards(rewards)?;
                if !(0.0..1.0).contains(alpha) {
                    return Err(invalid("environment.alpha must lie in [0, 1)"));
                }
                if directions.len() != rewards.len() {
                    return Err(invalid("environment.directions needs one row per arm"));
                }
                let dirs = directions
                    .iter()
                    .map(|d| {
                        if d.len() != rewards.len() {
                            return Err(invalid(
                                "environment.directions rows must have length equal to the arm count",
                            ));
                        }
                        ParamVector::new(d.clone())
                            .map_err(|e| invalid(format!("environment.directions: {e}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let mut env = ThetaRewardBandit::new(rewards.clone(), *alpha, dirs);
                if let Some(cw) = weight_var_bound {
                    check_nonneg("weight_var_bound", *cw)?;
                    env = env.with_weight_var_bound(*cw);
                }
                Ok(Box::new(env))
            }
            EnvSpec::DirectBandit { rewards, floor } => {
                check_rewards(rewards)?;
                if !(*floor > 0.0 && floor * rewards.len() as f64 <= 1.0) {
                    return Err(invalid("environment.floor must satisfy 0 < floor·K ≤ 1"));
                }
                Ok(Box::new(DirectBandit::new(rewards.clone(), *floor)))
            }
            EnvSpec::TabularMdp {
                transition,
                rewards,
                gamma,
                horizon,
                initial,
                enumeration_cap,
                weight_var_bound,
            } => {
                if !(0.0..1.0).contains(gamma) {
                    return Err(invalid("environment.gamma must lie in [0, 1)"));
                }
                if *horizon == 0 {
                    return Err(invalid("environment.horizon must be at least 1"));
                }
                let n_states = transition.len();
                if n_states == 0 || rewards.len() != n_states || initial.len() != n_states {
                    return Err(invalid("environment: state axes of transition/rewards/initial disagree"));
                }
                for (s, rows) in transition.iter().enumerate() {
                    for (a, row) in rows.iter().enumerate() {
                        if row.len() != n_states {
                            return Err(invalid(format!(
                                "environment.transition[{s}][{a}] must list {n_states} probabilities"
                            )));
                        }
                        if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                            return Err(invalid(format!(
                                "environment.transition[{s}][{a}] is not a distribution"
                            )));
                        }
                    }
                }
                if (initial.iter().sum::<f64>() - 1.0).abs() > 1e-9 || initial.iter().any(|&p| p < 0.0) {
                    return Err(invalid("environment.initial is not a distribution"));
                }
                for row in rewards {
                    if row.iter().any(|r| !r.is_finite() || *r < 0.0) {
                        return Err(invalid("environment.rewards must be finite and nonnegative"));
                    }
                }
                let mut env = TabularMdp::new(
                    transition.clone(),
                    rewards.clone(),
                    *gamma,
                    *horizon,
                    initial.clone(),
                );
                if let Some(cap) = enumeration_cap {
                    env = env.with_enumeration_cap(*cap);
                }
                if let Some(cw) = weight_var_bound {
                    check_nonneg("weight_var_bound", *cw)?;
                    env = env.with_weight_var_bound(*cw);
                }
                Ok(Box::new(env))
            }
            EnvSpec::PointMass { target, scale } => {
                if !(*scale > 0.0) {
                    return Err(invalid("environment.scale must be positive"));
                }
                let target = ParamVector::new(target.clone())
                    .map_err(|e| invalid(format!("environment.target: {e}")))?;
                Ok(Box::new(PointMass::new(target, *scale)))
            }
        }
    }
}

fn check_rewards(rewards: &[f64]) -> Result<(), ConfigError> {
    if rewards.is_empty() {
        return Err(invalid("environment.rewards must be nonempty"));
    }
    if rewards.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(invalid("environment.rewards must be finite and nonnegative"));
    }
    Ok(())
}

fn check_nonneg(field: &str, v: f64) -> Result<(), ConfigError> {
    if !v.is_finite() || v < 0.0 {
        return Err(invalid(format!("environment.{field} must be finite and nonnegative")));
    }
    Ok(())
}

/// Which regularizer to build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegSpec {
    Zero,
    SquaredNorm { lambda: f64 },
    L1 { lambda: f64 },
    Box { lower: f64, upper: f64 },
    Simplex,
    FlooredSimplex { floor: f64 },
}

impl RegSpec {
    pub fn build(&self) -> Result<Box<dyn Regularizer>, ConfigError> {
        match self {
            RegSpec::Zero => Ok(Box::new(ZeroReg)),
            RegSpec::SquaredNorm { lambda } => {
                check_lambda(*lambda)?;
                Ok(Box::new(SquaredNorm::new(*lambda)))
            }
            RegSpec::L1 { lambda } => {
                check_lambda(*lambda)?;
                Ok(Box::new(L1Norm::new(*lambda)))
            }
            RegSpec::Box { lower, upper } => BoxConstraint::new(*lower, *upper)
                .map(|b| Box::new(b) as Box<dyn Regularizer>)
                .map_err(|e| invalid(format!("regularizer: {e}"))),
            RegSpec::Simplex => Ok(Box::new(SimplexConstraint)),
            RegSpec::FlooredSimplex { floor } => {
                if !(*floor >= 0.0 && floor.is_finite()) {
                    return Err(invalid("regularizer.floor must be finite and nonnegative"));
                }
                Ok(Box::new(FlooredSimplexConstraint::new(*floor)))
            }
        }
    }

    /// Whether the prox is a projection (indicator regularizer).
    pub fn is_projection(&self) -> bool {
        matches!(self, RegSpec::Box { .. } | RegSpec::Simplex | RegSpec::FlooredSimplex { .. })
    }
}

fn check_lambda(lambda: f64) -> Result<(), ConfigError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("regularizer.lambda must be finite and nonnegative"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Spg,
    Page,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::Spg => write!(f, "spg"),
            Algorithm::Page => write!(f, "page"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// All run parameters given explicitly.
    Manual,
    /// (η, T, N) from the tolerance/gap formulas for the plain method.
    Theorem2,
    /// (η_max, N₁, N₂, p, T) from the variance-reduced formulas.
    Theorem3,
}

/// The `[run]` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub algorithm: Algorithm,
    pub schedule: ScheduleMode,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub large_batch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub small_batch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switch_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_n1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_t: Option<f64>,
    /// Opt-in measured variance for the theorem-2 batch size, replacing
    /// the σ² bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical_sigma_sq: Option<f64>,
}

/// The `[output]` table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

/// The `[sweep]` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub eps_list: Vec<f64>,
    #[serde(default = "default_sweep_algorithms")]
    pub algorithms: Vec<Algorithm>,
    /// Per-cell sample budget; a cell that hits it is recorded as
    /// exceeded, not fatal.
    pub sample_cap: u64,
}

fn default_sweep_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Spg, Algorithm::Page]
}

/// A full experiment configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: EnvSpec,
    pub regularizer: RegSpec,
    pub run: RunSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let env = self.environment.build()?;
        self.regularizer.build()?;
        let run = &self.run;
        if run.seeds.is_empty() {
            return Err(invalid("run.seeds must list at least one seed"));
        }
        if let Some(theta0) = &run.theta0 {
            if theta0.len() != env.dim() {
                return Err(invalid(format!(
                    "run.theta0 has dimension {} but the environment needs {}",
                    theta0.len(),
                    env.dim()
                )));
            }
            if theta0.iter().any(|v| !v.is_finite()) {
                return Err(invalid("run.theta0 must be finite"));
            }
        }
        if let Some(eta) = run.eta {
            if !(eta > 0.0) {
                return Err(invalid("run.eta must be positive"));
            }
        }
        match run.schedule {
            ScheduleMode::Manual => {
                let iters = run.iterations.ok_or_else(|| invalid("run.iterations is required for schedule = \"manual\""))?;
                if iters == 0 {
                    return Err(invalid("run.iterations must be at least 1"));
                }
                if run.eta.is_none() {
                    return Err(invalid("run.eta is required for schedule = \"manual\""));
                }
                match run.algorithm {
                    Algorithm::Spg => {
                        if run.batch_size.map_or(true, |n| n == 0) {
                            return Err(invalid("run.batch_size (≥ 1) is required for manual spg"));
                        }
                    }
                    Algorithm::Page => {
                        if run.large_batch.map_or(true, |n| n == 0)
                            || run.small_batch.map_or(true, |n| n == 0)
                        {
                            return Err(invalid(
                                "run.large_batch and run.small_batch (≥ 1) are required for manual page",
                            ));
                        }
                        match run.switch_prob {
                            Some(p) if p > 0.0 && p <= 1.0 => {}
                            _ => {
                                return Err(invalid(
                                    "run.switch_prob in (0, 1] is required for manual page",
                                ))
                            }
                        }
                    }
                }
            }
            ScheduleMode::Theorem2 => {
                if run.algorithm != Algorithm::Spg {
                    return Err(invalid("schedule = \"theorem2\" applies to algorithm = \"spg\""));
                }
                let eps = run.eps.ok_or_else(|| invalid("run.eps is required for schedule = \"theorem2\""))?;
                if !(eps > 0.0) {
                    return Err(invalid("run.eps must be positive"));
                }
                if run.delta_bound.is_none() && env.enumerate().is_none() {
                    return Err(invalid(
                        "run.delta_bound is required for theorem2 on a non-enumerable environment",
                    ));
                }
                if let Some(d) = run.delta_bound {
                    if !(d > 0.0) {
                        return Err(invalid("run.delta_bound must be positive"));
                    }
                }
            }
            ScheduleMode::Theorem3 => {
                if run.algorithm != Algorithm::Page {
                    return Err(invalid("schedule = \"theorem3\" applies to algorithm = \"page\""));
                }
                let eps = run.eps.ok_or_else(|| invalid("run.eps is required for schedule = \"theorem3\""))?;
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(invalid("run.eps must lie in (0, 1) for theorem3"));
                }
                if env.constants().weight_var_bound.is_none() {
                    return Err(invalid(
                        "schedule = \"theorem3\" needs an environment with a declared weight_var_bound",
                    ));
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.eps_list.is_empty() {
                return Err(invalid("sweep.eps_list must be nonempty"));
            }
            if sweep.eps_list.iter().any(|e| !(*e > 0.0)) {
                return Err(invalid("sweep.eps_list entries must be positive"));
            }
            if sweep.algorithms.is_empty() {
                return Err(invalid("sweep.algorithms must be nonempty"));
            }
            if sweep.sample_cap == 0 {
                return Err(invalid("sweep.sample_cap must be positive"));
            }
            if env.enumerate().is_none() {
                return Err(invalid("sweep needs an enumerable environment (exact stopping rule)"));
            }
            if sweep.algorithms.contains(&Algorithm::Page)
                && env.constants().weight_var_bound.is_none()
            {
                return Err(invalid("sweep over page needs a declared weight_var_bound"));
            }
        }
        Ok(())
    }

    /// Initial point: the configured θ⁰, or the prox of the origin (which
    /// is the origin itself for penalty regularizers and a feasible point
    /// for indicator regularizers).
    pub fn initial_point(&self) -> Result<ParamVector, ConfigError> {
        let env = self.environment.build()?;
        match &self.run.theta0 {
            Some(values) => ParamVector::new(values.clone())
                .map_err(|e| invalid(format!("run.theta0: {e}"))),
            None => {
                let reg = self.regularizer.build()?;
                reg.prox(&ParamVector::zeros(env.dim()), 1.0)
                    .map_err(|e| invalid(format!("cannot derive a feasible initial point: {e}")))
            }
        }
    }
}
