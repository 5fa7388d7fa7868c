//! Optimization loops: the stochastic proximal gradient method, its
//! variance-reduced probabilistic-estimator variant, and stationarity
//! measurement.

use crate::estimators::{batch_gradient, page_update, Branch, EstimatorError, EstimatorSample};
use crate::model::{composite_value, exact_gradient, Environment, ModelError};
use crate::prox::{gradient_mapping, ProxError, Regularizer};
use crate::rng::{StreamKey, StreamLabel};
use crate::vector::ParamVector;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Abort threshold for the iterate norm; declared bounds do not stop a
/// user-supplied environment from blowing up.
const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Debug, Error)]
pub enum RunError {
    /// Zero iterations requested: there is no sequence to select from.
    #[error("a run needs at least one iteration")]
    EmptyRun,
    #[error("initial point is infeasible for the regularizer")]
    InfeasibleStart,
    #[error("non-finite or exploding iterate at iteration {iteration}")]
    NumericalDivergence { iteration: usize },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Configuration of the plain stochastic proximal gradient run.
#[derive(Clone, Copy, Debug)]
pub struct SpgConfig {
    pub eta: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
}

/// Configuration of the variance-reduced run.
#[derive(Clone, Copy, Debug)]
pub struct PageConfig {
    pub eta: f64,
    pub large_batch: usize,
    pub small_batch: usize,
    /// Probability of the full-batch branch, in (0, 1].
    pub switch_prob: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// One row of a run trace.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    pub theta: ParamVector,
    /// The estimator computed at this iterate (absent on the final plain
    /// SPG row, which computes none).
    pub estimate: Option<ParamVector>,
    pub samples_used: u64,
    pub cumulative_samples: u64,
    /// Exact ‖G_η(θ)‖ when the environment is enumerable.
    pub grad_mapping_norm: Option<f64>,
    /// Exact F(θ) when the environment is enumerable.
    pub objective: Option<f64>,
    pub branch: Option<Branch>,
}

/// Complete record of a seeded run. Immutable once produced.
#[derive(Clone, Debug)]
pub struct RunTrace {
    /// Rows t = 0..=T.
    pub records: Vec<IterationRecord>,
    /// Selected output index t̂ ∈ {1, …, T}.
    pub output_index: usize,
    pub total_samples: u64,
    pub wall_time: Duration,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn output(&self) -> &IterationRecord {
        &self.records[self.output_index]
    }

    pub fn theta_hat(&self) -> &ParamVector {
        &self.output().theta
    }

    /// Samples consumed to *produce* the iterate of row `t` (excludes the
    /// estimator computed at that iterate).
    pub fn samples_to_reach(&self, t: usize) -> u64 {
        let rec = &self.records[t];
        rec.cumulative_samples - rec.samples_used
    }
}

/// Exact stationarity measures at a point.
#[derive(Clone, Copy, Debug)]
pub struct StationarityMeasure {
    /// dist(∇J(θ), ∂G(θ)), the distance form of the first-order condition.
    pub subdiff_dist: f64,
    /// ‖G_η(θ)‖, the gradient-mapping form; never exceeds the distance form.
    pub grad_mapping_norm: f64,
}

fn exact_measures(
    env: &dyn Environment,
    reg: &dyn Regularizer,
    theta: &ParamVector,
    eta: f64,
) -> Result<(Option<f64>, Option<f64>), RunError> {
    match exact_gradient(env, theta) {
        Ok(grad) => {
            let gm = gradient_mapping(reg, theta, &grad, eta)?;
            let objective = composite_value(env, reg, theta)?;
            Ok((Some(gm.norm()), Some(objective)))
        }
        Err(ModelError::NotEnumerable) => Ok((None, None)),
        Err(e) => Err(e.into()),
    }
}

fn guard_iterate(theta: &ParamVector, iteration: usize) -> Result<(), RunError> {
    if !theta.is_finite() || theta.norm() > DIVERGENCE_NORM {
        return Err(RunError::NumericalDivergence { iteration });
    }
    Ok(())
}

fn record(
    env: &dyn Environment,
    reg: &dyn Regularizer,
    eta: f64,
    iteration: usize,
    theta: &ParamVector,
    estimate: Option<&EstimatorSample>,
    cumulative_samples: u64,
) -> Result<IterationRecord, RunError> {
    let (grad_mapping_norm, objective) = exact_measures(env, reg, theta, eta)?;
    Ok(IterationRecord {
        iteration,
        theta: theta.clone(),
        estimate: estimate.map(|e| e.grad.clone()),
        samples_used: estimate.map_or(0, |e| e.samples_used),
        cumulative_samples,
        grad_mapping_norm,
        objective,
        branch: estimate.and_then(|e| e.branch),
    })
}

/// The stochastic proximal gradient method:
/// θ^{t+1} = prox_{ηG}(θ^t + η·g^t) with g^t a fresh mini-batch mean at θ^t.
/// The output iterate is drawn uniformly from {θ^1, …, θ^T} (θ⁰ excluded).
pub fn run_spg(
    env: &dyn Environment,
    reg: &dyn Regularizer,
    config: &SpgConfig,
    theta0: &ParamVector,
) -> Result<RunTrace, RunError> {
    assert!(config.eta > 0.0, "step size must be positive");
    assert!(config.batch_size >= 1, "batch size must be at least 1");
    if config.iterations == 0 {
        return Err(RunError::EmptyRun);
    }
    if !reg.value(theta0).is_finite() {
        return Err(RunError::InfeasibleStart);
    }
    let start = Instant::now();
    let key = StreamKey::new(config.seed);
    let mut records = Vec::with_capacity(config.iterations + 1);
    let mut theta = theta0.clone();
    let mut cumulative = 0u64;

    for t in 0..config.iterations {
        let est = batch_gradient(env, &theta, config.batch_size, &key, t as u64);
        if !est.grad.is_finite() {
            return Err(RunError::NumericalDivergence { iteration: t });
        }
        cumulative += est.samples_used;
        records.push(record(env, reg, config.eta, t, &theta, Some(&est), cumulative)?);

        let proposal = theta.add_scaled(config.eta, &est.grad);
        guard_iterate(&proposal, t)?;
        theta = reg.prox(&proposal, config.eta)?;
        guard_iterate(&theta, t)?;
    }
    records.push(record(env, reg, config.eta, config.iterations, &theta, None, cumulative)?);

    let output_index = 1 + key.stream(StreamLabel::OutputSelection, &[]).index(config.iterations);
    Ok(RunTrace { records, output_index, total_samples: cumulative, wall_time: start.elapsed() })
}

/// The variance-reduced probabilistic-estimator variant: a full batch of
/// `large_batch` draws seeds g⁰; each subsequent estimator is either a
/// fresh full batch (probability `switch_prob`) or the previous estimate
/// plus a `small_batch` importance-weighted correction.
pub fn run_page(
    env: &dyn Environment,
    reg: &dyn Regularizer,
    config: &PageConfig,
    theta0: &ParamVector,
) -> Result<RunTrace, RunError> {
    assert!(config.eta > 0.0, "step size must be positive");
    assert!(config.large_batch >= 1 && config.small_batch >= 1, "batch sizes must be at least 1");
    assert!(
        config.switch_prob > 0.0 && config.switch_prob <= 1.0,
        "switch probability must lie in (0, 1]"
    );
    if config.iterations == 0 {
        return Err(RunError::EmptyRun);
    }
    if !reg.value(theta0).is_finite() {
        return Err(RunError::InfeasibleStart);
    }
    let start = Instant::now();
    let key = StreamKey::new(config.seed);
    let mut records = Vec::with_capacity(config.iterations + 1);
    let mut theta = theta0.clone();

    let mut est = batch_gradient(env, &theta, config.large_batch, &key, 0);
    est.branch = Some(Branch::Full);
    let mut cumulative = est.samples_used;
    records.push(record(env, reg, config.eta, 0, &theta, Some(&est), cumulative)?);

    for t in 0..config.iterations {
        let proposal = theta.add_scaled(config.eta, &est.grad);
        guard_iterate(&proposal, t)?;
        let theta_next = reg.prox(&proposal, config.eta)?;
        guard_iterate(&theta_next, t)?;

        est = page_update(
            env,
            &theta_next,
            &theta,
            &est.grad,
            config.large_batch,
            config.small_batch,
            config.switch_prob,
            &key,
            (t + 1) as u64,
        )?;
        if !est.grad.is_finite() {
            return Err(RunError::NumericalDivergence { iteration: t });
        }
        cumulative += est.samples_used;
        theta = theta_next;
        records.push(record(env, reg, config.eta, t + 1, &theta, Some(&est), cumulative)?);
    }

    let output_index = 1 + key.stream(StreamLabel::OutputSelection, &[]).index(config.iterations);
    Ok(RunTrace { records, output_index, total_samples: cumulative, wall_time: start.elapsed() })
}

/// Deterministic reference loop: the proximal gradient method with the
/// exact gradient oracle in place of the estimator. Needs an enumerable
/// environment; consumes no samples.
pub fn run_prox_gradient_exact(
    env: &dyn Environment,
    reg: &dyn Regularizer,
    eta: f64,
    iterations: usize,
    theta0: &ParamVector,
) -> Result<RunTrace, RunError> {
    assert!(eta > 0.0, "step size must be positive");
    if iterations == 0 {
        return Err(RunError::EmptyRun);
    }
    if !reg.value(theta0).is_finite() {
        return Err(RunError::InfeasibleStart);
    }
    let start = Instant::now();
    let mut records = Vec::with_capacity(iterations + 1);
    let mut theta = theta0.clone();
    for t in 0..iterations {
        let grad = exact_gradient(env, &theta)?;
        let est = EstimatorSample { grad, samples_used: 0, branch: None };
        records.push(record(env, reg, eta, t, &theta, Some(&est), 0)?);
        let proposal = theta.add_scaled(eta, &est.grad);
        guard_iterate(&proposal, t)?;
        theta = reg.prox(&proposal, eta)?;
        guard_iterate(&theta, t)?;
    }
    records.push(record(env, reg, eta, iterations, &theta, None, 0)?);
    Ok(RunTrace {
        records,
        output_index: iterations,
        total_samples: 0,
        wall_time: start.elapsed(),
    })
}

/// Exact stationarity measures at θ: the subdifferential distance
/// dist(∇J(θ), ∂G(θ)) and the gradient-mapping norm ‖G_η(θ)‖, both from
/// the enumeration oracle.
pub fn measure_stationarity(
    env: &dyn Environment,
    reg: &dyn Regularizer,
    theta: &ParamVector,
    eta: f64,
) -> Result<StationarityMeasure, RunError> {
    let grad = exact_gradient(env, theta)?;
    stationarity_from_gradient(reg, theta, &grad, eta)
}

/// Monte Carlo fallback for non-enumerable environments: the same measures
/// with a `batch_size`-sample estimate in place of ∇J. Explicitly opt-in;
/// the result inherits the estimate's noise.
pub fn measure_stationarity_sampled(
    env: &dyn Environment,
    reg: &dyn Regularizer,
    theta: &ParamVector,
    eta: f64,
    batch_size: usize,
    seed: u64,
) -> Result<StationarityMeasure, RunError> {
    let key = StreamKey::new(seed);
    let est = batch_gradient(env, theta, batch_size, &key, 0);
    stationarity_from_gradient(reg, theta, &est.grad, eta)
}

fn stationarity_from_gradient(
    reg: &dyn Regularizer,
    theta: &ParamVector,
    grad: &ParamVector,
    eta: f64,
) -> Result<StationarityMeasure, RunError> {
    let subdiff_dist = reg.subdiff_dist(theta, grad)?;
    let gm = gradient_mapping(reg, theta, grad, eta)?;
    Ok(StationarityMeasure { subdiff_dist, grad_mapping_norm: gm.norm() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{PointMass, SoftmaxBandit};
    use crate::prox::{SquaredNorm, ZeroReg};
    use approx::assert_abs_diff_eq;

    #[test]
    fn empty_run_is_an_error() {
        let env = SoftmaxBandit::new(vec![1.0, 0.0]);
        let cfg = SpgConfig { eta: 0.1, batch_size: 1, iterations: 0, seed: 1 };
        assert!(matches!(
            run_spg(&env, &ZeroReg, &cfg, &ParamVector::zeros(2)),
            Err(RunError::EmptyRun)
        ));
    }

    #[test]
    fn infeasible_start_is_an_error() {
        let env = SoftmaxBandit::new(vec![1.0, 0.0]);
        let reg = crate::prox::SimplexConstraint;
        let cfg = SpgConfig { eta: 0.1, batch_size: 1, iterations: 5, seed: 1 };
        assert!(matches!(
            run_spg(&env, &reg, &cfg, &ParamVector::from(vec![3.0, 3.0])),
            Err(RunError::InfeasibleStart)
        ));
    }

    #[test]
    fn spg_two_arm_converges_with_large_batches() {
        // Near-exact gradients: F nondecreasing up to estimator noise and
        // the final gradient mapping small.
        let env = SoftmaxBandit::new(vec![1.0, 0.0]);
        let cfg = SpgConfig { eta: 0.1, batch_size: 10_000, iterations: 200, seed: 7 };
        let trace = run_spg(&env, &ZeroReg, &cfg, &ParamVector::zeros(2)).unwrap();
        assert_eq!(trace.records.len(), 201);
        let mut prev = f64::NEG_INFINITY;
        for rec in &trace.records {
            let f = rec.objective.expect("enumerable");
            assert!(f >= prev - 1e-3, "objective dipped: {f} after {prev}");
            prev = f;
        }
        let final_gm = trace.records.last().unwrap().grad_mapping_norm.unwrap();
        assert!(final_gm <= 0.05, "final ‖G_η‖ = {final_gm}");
    }

    #[test]
    fn point_mass_run_matches_hand_rolled_gradient_ascent_bitwise() {
        let env = PointMass::new(ParamVector::from(vec![1.0, -0.5]), 1.0);
        let eta = 0.3;
        let cfg = SpgConfig { eta, batch_size: 4, iterations: 50, seed: 3 };
        let trace = run_spg(&env, &ZeroReg, &cfg, &ParamVector::zeros(2)).unwrap();

        let mut theta = ParamVector::zeros(2);
        for rec in &trace.records {
            assert_eq!(rec.theta.as_slice(), theta.as_slice(), "iteration {}", rec.iteration);
            let grad = env.grad_reward(&theta, &crate::model::Outcome::Point(Vec::new()));
            theta = theta.add_scaled(eta, &grad);
        }
    }

    #[test]
    fn identical_seed_reproduces_trace_bitwise() {
        let env = SoftmaxBandit::new(vec![1.0, 0.5, 0.0]);
        let reg = SquaredNorm::new(0.1);
        let cfg = PageConfig {
            eta: 0.05,
            large_batch: 64,
            small_batch: 8,
            switch_prob: 0.2,
            iterations: 40,
            seed: 20_240_601,
        };
        let theta0 = ParamVector::zeros(3);
        let a = run_page(&env, &reg, &cfg, &theta0).unwrap();
        let b = run_page(&env, &reg, &cfg, &theta0).unwrap();
        assert_eq!(a.output_index, b.output_index);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.theta.as_slice(), rb.theta.as_slice());
            assert_eq!(ra.branch, rb.branch);
            assert_eq!(ra.cumulative_samples, rb.cumulative_samples);
        }
    }

    #[test]
    fn page_with_p_one_matches_spg_bitwise() {
        let env = SoftmaxBandit::new(vec![1.0, 0.5, 0.0]);
        let reg = SquaredNorm::new(0.1);
        let seed = 99;
        let page_cfg = PageConfig {
            eta: 0.05,
            large_batch: 32,
            small_batch: 4,
            switch_prob: 1.0,
            iterations: 30,
            seed,
        };
        let spg_cfg = SpgConfig { eta: 0.05, batch_size: 32, iterations: 30, seed };
        let theta0 = ParamVector::zeros(3);
        let page = run_page(&env, &reg, &page_cfg, &theta0).unwrap();
        let spg = run_spg(&env, &reg, &spg_cfg, &theta0).unwrap();
        assert_eq!(page.output_index, spg.output_index);
        for (rp, rs) in page.records.iter().zip(&spg.records) {
            assert_eq!(rp.theta.as_slice(), rs.theta.as_slice());
            assert_eq!(rp.branch.is_some(), true);
            assert_eq!(rp.branch, Some(crate::estimators::Branch::Full));
        }
    }

    #[test]
    fn page_expected_cost_matches_formula() {
        let env = SoftmaxBandit::new(vec![1.0, 0.5, 0.0]);
        let cfg = PageConfig {
            eta: 0.01,
            large_batch: 100,
            small_batch: 10,
            switch_prob: 10.0 / 110.0,
            iterations: 2_000,
            seed: 5,
        };
        let trace = run_page(&env, &ZeroReg, &cfg, &ParamVector::zeros(3)).unwrap();
        let update_samples: u64 =
            trace.records[1..].iter().map(|r| r.samples_used).sum();
        let mean = update_samples as f64 / cfg.iterations as f64;
        let expected = cfg.switch_prob * 100.0 + (1.0 - cfg.switch_prob) * 10.0;
        // 4σ band for the mean of T Bernoulli-mixture costs.
        let var = cfg.switch_prob * (100.0f64 - expected).powi(2)
            + (1.0 - cfg.switch_prob) * (10.0f64 - expected).powi(2);
        let band = 4.0 * (var / cfg.iterations as f64).sqrt();
        assert!((mean - expected).abs() <= band, "mean {mean} vs {expected} ± {band}");
    }

    #[test]
    fn stationarity_measures_for_zero_regularizer_equal_gradient_norm() {
        let env = SoftmaxBandit::new(vec![1.0, 0.5, 0.0]);
        let theta = ParamVector::from(vec![0.4, -0.2, 0.0]);
        let grad_norm = crate::model::exact_gradient(&env, &theta).unwrap().norm();
        let m = measure_stationarity(&env, &ZeroReg, &theta, 0.37).unwrap();
        assert_abs_diff_eq!(m.subdiff_dist, grad_norm, epsilon = 1e-12);
        assert_abs_diff_eq!(m.grad_mapping_norm, grad_norm, epsilon = 1e-12);
    }

    #[test]
    fn stationarity_vanishes_at_grid_searched_stationary_point() {
        // L2-regularized two-arm bandit: stationary points satisfy
        // λθ = ∇J(θ) and lie on the line θ = (a, −a) with
        // λa = σ(2a)(1 − σ(2a)). Locate a* by nested 1-D grid search.
        let env = SoftmaxBandit::new(vec![1.0, 0.0]);
        let lambda = 0.1;
        let reg = SquaredNorm::new(lambda);
        let residual = |a: f64| {
            let p = 1.0 / (1.0 + (-2.0 * a).exp());
            (p * (1.0 - p) - lambda * a).abs()
        };
        let mut lo = 0.0;
        let mut hi = 2.0;
        let mut best = 0.0;
        for _ in 0..6 {
            let step = (hi - lo) / 1000.0;
            best = (0..=1000)
                .map(|k| lo + k as f64 * step)
                .min_by(|x, y| residual(*x).partial_cmp(&residual(*y)).unwrap())
                .unwrap();
            lo = best - step;
            hi = best + step;
        }
        let theta = ParamVector::from(vec![best, -best]);
        let m = measure_stationarity(&env, &reg, &theta, 0.25).unwrap();
        assert!(m.subdiff_dist <= 1e-6, "subdiff dist {}", m.subdiff_dist);
        assert!(m.grad_mapping_norm <= 1e-6, "gradient mapping {}", m.grad_mapping_norm);
    }

    #[test]
    fn exact_reference_loop_is_monotone_below_critical_step() {
        // With exact gradients and η < 1/(2L) the composite objective is
        // nondecreasing, with per-step gain at least (1−2ηL)/(2η)·‖Δθ‖².
        let env = SoftmaxBandit::new(vec![1.0, 0.5, 0.0]);
        let reg = SquaredNorm::new(0.1);
        let l = crate::theory::lipschitz_constant(&env.constants());
        let eta = 1.0 / (4.0 * l);
        let trace = run_prox_gradient_exact(&env, &reg, eta, 300, &ParamVector::zeros(3)).unwrap();
        for pair in trace.records.windows(2) {
            let f0 = pair[0].objective.unwrap();
            let f1 = pair[1].objective.unwrap();
            let step_sq = pair[1].theta.sub(&pair[0].theta).norm_sq();
            let gain = (1.0 - 2.0 * eta * l) / (2.0 * eta) * step_sq;
            assert!(f1 - f0 >= gain - 1e-12, "iteration {}: Δf = {}", pair[0].iteration, f1 - f0);
        }
    }
}
