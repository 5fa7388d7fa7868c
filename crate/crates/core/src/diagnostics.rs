//! Statistical and analytical checkers for the declared assumptions and
//! the bound-level quantities the analysis relies on.
//!
//! Exact quantities are computed by enumeration; empirical quantities
//! carry their sample counts and confidence bands. Every checker takes an
//! explicit seed and owns its streams, so independent diagnostics can run
//! concurrently.

use crate::algorithms::{PageConfig, RunError, RunTrace};
use crate::estimators::{weighted_score_gradient, EstimatorError};
use crate::model::{exact_gradient, prob, Environment, ModelError};
use crate::prox::{ProxError, Regularizer};
use crate::rng::{StreamKey, StreamLabel};
use crate::theory::{page_error_factor, DerivedConstants, TheoryError};
use crate::vector::ParamVector;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

/// Default confidence multiplier: z = 4 keeps the two-sided failure rate
/// per check around 6e-5, so a battery of hundreds stays well under 1%
/// flaky overall.
pub const DEFAULT_CONFIDENCE_Z: f64 = 4.0;

/// Default Monte Carlo sample count for empirical moments.
pub const DEFAULT_SAMPLE_COUNT: usize = 100_000;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("probe needs at least one pair")]
    EmptyProbe,
    #[error("traces come from mismatched runs: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Uniform JSON shape for every diagnostic: name, inputs, values, bands,
/// pass (absent = inconclusive).
#[derive(Clone, Debug, Serialize)]
pub struct ReportRecord {
    pub name: String,
    pub inputs: serde_json::Value,
    pub values: serde_json::Value,
    pub bands: serde_json::Value,
    pub pass: Option<bool>,
}

/// Empirical mean of the per-outcome estimator against the exact gradient.
#[derive(Clone, Debug, Serialize)]
pub struct UnbiasednessReport {
    pub empirical_mean: Vec<f64>,
    pub exact: Vec<f64>,
    /// Componentwise z·σ̂/√M; infinite when M = 1 leaves σ̂ undefined.
    pub bands: Vec<f64>,
    pub sample_count: usize,
    pub confidence_z: f64,
    /// `None` marks an inconclusive check (undefined bands).
    pub pass: Option<bool>,
}

impl UnbiasednessReport {
    pub fn record(&self) -> ReportRecord {
        ReportRecord {
            name: "unbiasedness".into(),
            inputs: json!({"sample_count": self.sample_count, "confidence_z": self.confidence_z}),
            values: json!({"empirical_mean": self.empirical_mean, "exact": self.exact}),
            bands: json!(self.bands),
            pass: self.pass,
        }
    }
}

/// Draw M estimator samples at θ and compare their mean with ∇J(θ)
/// componentwise at z·σ̂/√M.
pub fn check_unbiasedness(
    env: &dyn Environment,
    theta: &ParamVector,
    sample_count: usize,
    confidence_z: f64,
    seed: u64,
) -> Result<UnbiasednessReport, DiagnosticsError> {
    assert!(sample_count >= 1);
    let exact = exact_gradient(env, theta)?;
    let key = StreamKey::new(seed);
    let draws: Vec<ParamVector> = (0..sample_count as u64)
        .map(|j| {
            let mut rng = key.stream(StreamLabel::Outcomes, &[0, j]);
            let x = env.sample(theta, &mut rng);
            env.score_gradient(theta, &x)
        })
        .collect();
    let mean = pairwise_mean(&draws);

    let dim = env.dim();
    let mut bands = vec![f64::INFINITY; dim];
    let mut pass = None;
    if sample_count > 1 {
        for i in 0..dim {
            let ss: f64 = draws.iter().map(|d| (d[i] - mean[i]).powi(2)).sum();
            let sd = (ss / (sample_count as f64 - 1.0)).sqrt();
            bands[i] = confidence_z * sd / (sample_count as f64).sqrt();
        }
        pass = Some((0..dim).all(|i| (mean[i] - exact[i]).abs() <= bands[i]));
    }
    Ok(UnbiasednessReport {
        empirical_mean: mean.into_vec(),
        exact: exact.into_vec(),
        bands,
        sample_count,
        confidence_z,
        pass,
    })
}

/// The importance-weight variance E_{x∼π_θ'}[(π_θ(x)/π_θ'(x) − 1)²],
/// exactly (when enumerable) and by Monte Carlo.
#[derive(Clone, Debug, Serialize)]
pub struct WeightVarianceReport {
    pub exact: Option<f64>,
    pub empirical: f64,
    /// z·σ̂/√M band for the empirical moment.
    pub band: f64,
    pub sample_count: usize,
    /// C_w² when the environment declares C_w.
    pub declared_bound_sq: Option<f64>,
    /// Whether the declared bound is violated; `None` when no bound is
    /// declared.
    pub violation: Option<bool>,
}

impl WeightVarianceReport {
    pub fn record(&self) -> ReportRecord {
        ReportRecord {
            name: "weight_variance".into(),
            inputs: json!({"sample_count": self.sample_count}),
            values: json!({
                "exact": self.exact,
                "empirical": self.empirical,
                "declared_bound_sq": self.declared_bound_sq,
            }),
            bands: json!(self.band),
            pass: self.violation.map(|v| !v),
        }
    }
}

pub fn weight_variance(
    env: &dyn Environment,
    theta: &ParamVector,
    theta_ref: &ParamVector,
    sample_count: usize,
    seed: u64,
) -> WeightVarianceReport {
    let exact = env.enumerate().map(|outcomes| {
        let mut total = 0.0;
        for x in &outcomes {
            let p_ref = prob(env, theta_ref, x);
            if p_ref > 0.0 {
                let w = env.log_weight(theta, theta_ref, x).exp();
                total += p_ref * (w - 1.0).powi(2);
            }
        }
        total
    });

    let key = StreamKey::new(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for j in 0..sample_count as u64 {
        let mut rng = key.stream(StreamLabel::Outcomes, &[0, j]);
        let x = env.sample(theta_ref, &mut rng);
        let v = (env.log_weight(theta, theta_ref, &x).exp() - 1.0).powi(2);
        sum += v;
        sum_sq += v * v;
    }
    let m = sample_count as f64;
    let empirical = sum / m;
    let band = if sample_count > 1 {
        let var = (sum_sq - m * empirical * empirical).max(0.0) / (m - 1.0);
        DEFAULT_CONFIDENCE_Z * (var / m).sqrt()
    } else {
        f64::INFINITY
    };

    let declared_bound_sq = env.constants().weight_var_bound.map(|cw| cw * cw);
    let violation = declared_bound_sq.map(|bound| match exact {
        Some(e) => e > bound + 1e-12,
        None => empirical - band > bound,
    });
    WeightVarianceReport { exact, empirical, band, sample_count, declared_bound_sq, violation }
}

/// Exact check of the drift bound
/// E_{x∼π_θ'}‖g(x,θ') − g_w(x,θ,θ')‖² ≤ C‖θ − θ'‖².
#[derive(Clone, Debug, Serialize)]
pub struct DriftGapReport {
    pub lhs: f64,
    pub rhs: f64,
    pub distance_sq: f64,
    /// lhs/rhs (0 when both sides vanish).
    pub ratio: f64,
    pub pass: bool,
}

impl DriftGapReport {
    pub fn record(&self) -> ReportRecord {
        ReportRecord {
            name: "weight_drift_gap".into(),
            inputs: json!({"distance_sq": self.distance_sq}),
            values: json!({"lhs": self.lhs, "rhs": self.rhs, "ratio": self.ratio}),
            bands: json!(null),
            pass: Some(self.pass),
        }
    }
}

pub fn drift_bound_gap(
    env: &dyn Environment,
    theta: &ParamVector,
    theta_ref: &ParamVector,
) -> Result<DriftGapReport, DiagnosticsError> {
    let drift = crate::theory::weight_drift_constant(&env.constants())?;
    let outcomes = env.enumerate().ok_or(ModelError::NotEnumerable)?;
    let mut lhs = 0.0;
    for x in &outcomes {
        let p_ref = prob(env, theta_ref, x);
        if p_ref > 0.0 {
            let fresh = env.score_gradient(theta_ref, x);
            let weighted = weighted_score_gradient(env, theta, theta_ref, x)?;
            lhs += p_ref * fresh.sub(&weighted).norm_sq();
        }
    }
    let distance_sq = theta.sub(theta_ref).norm_sq();
    let rhs = drift * distance_sq;
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(DriftGapReport { lhs, rhs, distance_sq, ratio, pass: lhs <= rhs + 1e-12 })
}

/// Largest observed gradient difference quotient against the declared
/// smoothness constant.
#[derive(Clone, Debug, Serialize)]
pub struct SmoothnessReport {
    pub max_ratio: f64,
    pub declared: f64,
    pub pairs: usize,
    pub pass: bool,
}

impl SmoothnessReport {
    pub fn record(&self) -> ReportRecord {
        ReportRecord {
            name: "smoothness_probe".into(),
            inputs: json!({"pairs": self.pairs}),
            values: json!({"max_ratio": self.max_ratio, "declared": self.declared}),
            bands: json!(null),
            pass: Some(self.pass),
        }
    }
}

/// Max over random pairs of ‖∇J(θ) − ∇J(θ')‖/‖θ − θ'‖, which must stay
/// below the declared L.
pub fn smoothness_probe(
    env: &dyn Environment,
    pairs: usize,
    seed: u64,
) -> Result<SmoothnessReport, DiagnosticsError> {
    if pairs == 0 {
        return Err(DiagnosticsError::EmptyProbe);
    }
    let declared = crate::theory::lipschitz_constant(&env.constants());
    let key = StreamKey::new(seed);
    let mut max_ratio = 0.0f64;
    for k in 0..pairs as u64 {
        let mut rng = key.stream(StreamLabel::Probes, &[k]);
        let a = env.probe_point(&mut rng);
        let b = env.probe_point(&mut rng);
        let dist = a.distance(&b);
        if dist < 1e-12 {
            continue;
        }
        let ga = exact_gradient(env, &a)?;
        let gb = exact_gradient(env, &b)?;
        max_ratio = max_ratio.max(ga.sub(&gb).norm() / dist);
    }
    Ok(SmoothnessReport { max_ratio, declared, pairs, pass: max_ratio <= declared + 1e-9 })
}

/// Per-iteration exact estimator errors of two traces on the same
/// instance, and their window means.
#[derive(Clone, Debug, Serialize)]
pub struct VarianceReductionReport {
    pub spg_errors: Vec<f64>,
    pub page_errors: Vec<f64>,
    pub window: (usize, usize),
    pub spg_window_mean: f64,
    pub page_window_mean: f64,
    /// page/spg window-mean ratio.
    pub ratio: f64,
}

impl VarianceReductionReport {
    pub fn record(&self) -> ReportRecord {
        ReportRecord {
            name: "variance_reduction".into(),
            inputs: json!({"window": self.window}),
            values: json!({
                "spg_window_mean": self.spg_window_mean,
                "page_window_mean": self.page_window_mean,
                "ratio": self.ratio,
            }),
            bands: json!(null),
            pass: None,
        }
    }
}

/// Exact ‖g^t − ∇J(θ^t)‖² series for a vanilla trace and a
/// variance-reduced trace started from the same θ⁰, plus window means.
pub fn variance_reduction_report(
    env: &dyn Environment,
    spg_trace: &RunTrace,
    page_trace: &RunTrace,
    window: (usize, usize),
) -> Result<VarianceReductionReport, DiagnosticsError> {
    let t0_spg = &spg_trace.records[0].theta;
    let t0_page = &page_trace.records[0].theta;
    if t0_spg.as_slice() != t0_page.as_slice() {
        return Err(DiagnosticsError::ConfigMismatch("different initial points".into()));
    }
    let spg_errors = estimator_error_series(env, spg_trace)?;
    let page_errors = estimator_error_series(env, page_trace)?;
    let (lo, hi) = window;
    if hi > spg_errors.len() || hi > page_errors.len() || lo >= hi {
        return Err(DiagnosticsError::ConfigMismatch(format!(
            "window {window:?} does not fit series of lengths {} and {}",
            spg_errors.len(),
            page_errors.len()
        )));
    }
    let mean = |s: &[f64]| s[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
    let spg_window_mean = mean(&spg_errors);
    let page_window_mean = mean(&page_errors);
    Ok(VarianceReductionReport {
        spg_errors,
        page_errors,
        window,
        spg_window_mean,
        page_window_mean,
        ratio: page_window_mean / spg_window_mean,
    })
}

/// Exact ‖g^t − ∇J(θ^t)‖² for every trace row carrying an estimate.
pub fn estimator_error_series(
    env: &dyn Environment,
    trace: &RunTrace,
) -> Result<Vec<f64>, DiagnosticsError> {
    let mut series = Vec::new();
    for rec in &trace.records {
        if let Some(est) = &rec.estimate {
            let exact = exact_gradient(env, &rec.theta)?;
            series.push(est.sub(&exact).norm_sq());
        }
    }
    Ok(series)
}

/// Seed-averaged check of the estimator-error budget
/// `factor·Σ_t e_t ≤ (pσ²T + σ²)/(pN₁) + 2η(1−p)CΔ/(pN₂(1−2ηL))`.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorBudgetReport {
    pub factor: f64,
    /// factor × seed-average of Σ_{t<T} e_t.
    pub lhs: f64,
    pub rhs: f64,
    pub seed_count: usize,
    /// Seed-average of the measured objective gain max_t F(θ^t) − F(θ⁰).
    pub measured_gap: f64,
    pub pass: bool,
}

impl ErrorBudgetReport {
    pub fn record(&self) -> ReportRecord {
        ReportRecord {
            name: "estimator_error_budget".into(),
            inputs: json!({"seed_count": self.seed_count}),
            values: json!({
                "factor": self.factor,
                "lhs": self.lhs,
                "rhs": self.rhs,
                "measured_gap": self.measured_gap,
            }),
            bands: json!(null),
            pass: Some(self.pass),
        }
    }
}

/// Evaluate the error budget across seeded variance-reduced traces (all
/// run with `config` on an enumerable instance). The objective gap Δ is
/// measured from each trace as max_t F(θ^t) − F(θ⁰); the inequality is a
/// statement in expectation, so it is asserted on the seed averages only.
pub fn page_error_budget(
    env: &dyn Environment,
    config: &PageConfig,
    dc: &DerivedConstants,
    traces: &[RunTrace],
) -> Result<ErrorBudgetReport, DiagnosticsError> {
    if traces.is_empty() {
        return Err(DiagnosticsError::EmptyProbe);
    }
    let c = dc.weight_drift()?;
    let l = dc.smoothness;
    let sigma_sq = dc.score_variance;
    let p = config.switch_prob;
    let n1 = config.large_batch as f64;
    let n2 = config.small_batch as f64;
    let t = config.iterations as f64;
    let slack = 1.0 - 2.0 * config.eta * l;
    let factor = page_error_factor(dc, p, config.small_batch as u64, config.eta)?;

    let mut sum_errors = 0.0;
    let mut sum_gap = 0.0;
    for trace in traces {
        if trace.iterations() != config.iterations {
            return Err(DiagnosticsError::ConfigMismatch(
                "trace length differs from config".into(),
            ));
        }
        let series = estimator_error_series(env, trace)?;
        // Σ over t = 0..T−1 (the budget does not cover the final,
        // never-consumed estimator).
        sum_errors += series[..config.iterations].iter().sum::<f64>();
        let f0 = trace.records[0].objective.ok_or(ModelError::NotEnumerable)?;
        let best = trace
            .records
            .iter()
            .filter_map(|r| r.objective)
            .fold(f64::NEG_INFINITY, f64::max);
        sum_gap += (best - f0).max(0.0);
    }
    let mean_errors = sum_errors / traces.len() as f64;
    let measured_gap = sum_gap / traces.len() as f64;
    let lhs = factor * mean_errors;
    let rhs = (p * sigma_sq * t + sigma_sq) / (p * n1)
        + 2.0 * config.eta * (1.0 - p) * c * measured_gap / (p * n2 * slack);
    Ok(ErrorBudgetReport {
        factor,
        lhs,
        rhs,
        seed_count: traces.len(),
        measured_gap,
        pass: lhs <= rhs,
    })
}

/// Randomized self-check of a regularizer: prox optimality inclusion,
/// nonexpansiveness, the subgradient inequality, and (for projections)
/// exact idempotence.
#[derive(Clone, Debug, Serialize)]
pub struct ProxCheckReport {
    pub trials: usize,
    /// max over trials of dist((v − prox(v,η))/η, ∂G(prox(v,η))).
    pub max_residual: f64,
    pub nonexpansive: bool,
    pub subgradient_inequality: bool,
    /// Exact prox∘prox = prox; only meaningful for indicator regularizers.
    pub idempotent: Option<bool>,
    pub pass: bool,
}

impl ProxCheckReport {
    pub fn record(&self) -> ReportRecord {
        ReportRecord {
            name: "prox_check".into(),
            inputs: json!({"trials": self.trials}),
            values: json!({
                "max_residual": self.max_residual,
                "nonexpansive": self.nonexpansive,
                "subgradient_inequality": self.subgradient_inequality,
                "idempotent": self.idempotent,
            }),
            bands: json!(1e-9),
            pass: Some(self.pass),
        }
    }
}

/// Residual tolerance for the prox optimality inclusion.
pub const PROX_RESIDUAL_TOL: f64 = 1e-9;

pub fn prox_operator_check(
    reg: &dyn Regularizer,
    dim: usize,
    trials: usize,
    projection: bool,
    seed: u64,
) -> Result<ProxCheckReport, DiagnosticsError> {
    assert!(trials >= 1);
    let key = StreamKey::new(seed);
    let mut max_residual = 0.0f64;
    let mut nonexpansive = true;
    let mut subgradient_inequality = true;
    let mut idempotent = projection.then_some(true);

    for k in 0..trials as u64 {
        let mut rng = key.stream(StreamLabel::Probes, &[k]);
        let v = ParamVector::from_fn(dim, |_| rng.uniform_in(-5.0, 5.0));
        let u = ParamVector::from_fn(dim, |_| rng.uniform_in(-5.0, 5.0));
        let eta = rng.uniform_in(0.01, 10.0);

        let pv = reg.prox(&v, eta)?;
        let residual = reg.subdiff_dist(&pv, &v.sub(&pv).scale(1.0 / eta))?;
        max_residual = max_residual.max(residual);

        let pu = reg.prox(&u, eta)?;
        if pu.sub(&pv).norm() > u.sub(&v).norm() + 1e-12 {
            nonexpansive = false;
        }

        // Subgradient inequality G(u') ≥ G(θ) + ⟨s, u' − θ⟩ at feasible
        // points θ = prox(v), u' = prox(u), with s the projection of a
        // random vector onto ∂G(θ).
        let g = ParamVector::from_fn(dim, |_| rng.uniform_in(-3.0, 3.0));
        let s = reg.subdiff_project(&pv, &g)?;
        let lhs = reg.value(&pu);
        let rhs = reg.value(&pv) + s.dot(&pu.sub(&pv));
        if lhs < rhs - 1e-9 {
            subgradient_inequality = false;
        }

        if projection {
            let eta2 = rng.uniform_in(0.01, 10.0);
            let twice = reg.prox(&pv, eta2)?;
            if twice.as_slice() != pv.as_slice() {
                idempotent = Some(false);
            }
        }
    }
    let pass = max_residual <= PROX_RESIDUAL_TOL
        && nonexpansive
        && subgradient_inequality
        && idempotent.unwrap_or(true);
    Ok(ProxCheckReport {
        trials,
        max_residual,
        nonexpansive,
        subgradient_inequality,
        idempotent,
        pass,
    })
}

/// Worst observed |reward|, score-gradient norm and reward-gradient norm
/// over random (θ, x) probes against the declared bounds.
#[derive(Clone, Debug, Serialize)]
pub struct BoundsProbeReport {
    pub probes: usize,
    pub max_abs_reward: f64,
    pub max_score_grad_norm: f64,
    pub max_reward_grad_norm: f64,
    pub reward_bound: f64,
    pub score_grad_bound: f64,
    pub reward_grad_bound: f64,
    pub pass: bool,
}

impl BoundsProbeReport {
    pub fn record(&self) -> ReportRecord {
        ReportRecord {
            name: "declared_bounds".into(),
            inputs: json!({"probes": self.probes}),
            values: json!({
                "max_abs_reward": self.max_abs_reward,
                "max_score_grad_norm": self.max_score_grad_norm,
                "max_reward_grad_norm": self.max_reward_grad_norm,
                "reward_bound": self.reward_bound,
                "score_grad_bound": self.score_grad_bound,
                "reward_grad_bound": self.reward_grad_bound,
            }),
            bands: json!(null),
            pass: Some(self.pass),
        }
    }
}

/// Attempt to falsify the declared per-outcome bounds empirically.
pub fn declared_bounds_probe(
    env: &dyn Environment,
    probes: usize,
    seed: u64,
) -> Result<BoundsProbeReport, DiagnosticsError> {
    if probes == 0 {
        return Err(DiagnosticsError::EmptyProbe);
    }
    let tc = env.constants();
    let key = StreamKey::new(seed);
    let mut max_abs_reward = 0.0f64;
    let mut max_score = 0.0f64;
    let mut max_reward_grad = 0.0f64;
    for k in 0..probes as u64 {
        let mut rng = key.stream(StreamLabel::Probes, &[k]);
        let theta = env.probe_point(&mut rng);
        let x = env.sample(&theta, &mut rng);
        max_abs_reward = max_abs_reward.max(env.reward(&theta, &x).abs());
        max_score = max_score.max(env.grad_log_prob(&theta, &x).norm());
        max_reward_grad = max_reward_grad.max(env.grad_reward(&theta, &x).norm());
    }
    let tol = 1e-9;
    Ok(BoundsProbeReport {
        probes,
        max_abs_reward,
        max_score_grad_norm: max_score,
        max_reward_grad_norm: max_reward_grad,
        reward_bound: tc.reward_bound,
        score_grad_bound: tc.score_grad_bound,
        reward_grad_bound: tc.reward_grad_bound,
        pass: max_abs_reward <= tc.reward_bound + tol
            && max_score <= tc.score_grad_bound + tol
            && max_reward_grad <= tc.reward_grad_bound + tol,
    })
}

/// Largest deviation of the enumerated total probability mass from one.
#[derive(Clone, Debug, Serialize)]
pub struct MassCheckReport {
    pub points: usize,
    pub max_deviation: f64,
    pub pass: bool,
}

impl MassCheckReport {
    pub fn record(&self) -> ReportRecord {
        ReportRecord {
            name: "probability_mass".into(),
            inputs: json!({"points": self.points}),
            values: json!({"max_deviation": self.max_deviation}),
            bands: json!(1e-10),
            pass: Some(self.pass),
        }
    }
}

pub fn probability_mass_check(
    env: &dyn Environment,
    points: usize,
    seed: u64,
) -> Result<MassCheckReport, DiagnosticsError> {
    if points == 0 {
        return Err(DiagnosticsError::EmptyProbe);
    }
    let key = StreamKey::new(seed);
    let mut max_deviation = 0.0f64;
    for k in 0..points as u64 {
        let mut rng = key.stream(StreamLabel::Probes, &[k]);
        let theta = env.probe_point(&mut rng);
        let mass = crate::model::total_mass(env, &theta)?;
        max_deviation = max_deviation.max((mass - 1.0).abs());
    }
    Ok(MassCheckReport { points, max_deviation, pass: max_deviation <= 1e-10 })
}

/// Worst componentwise mismatch between the exact gradient and central
/// finite differences of the exact objective.
#[derive(Clone, Debug, Serialize)]
pub struct FiniteDifferenceReport {
    pub points: usize,
    pub step: f64,
    /// max over points and components of |fd − ∇J| / max(1, |∇J|).
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl FiniteDifferenceReport {
    pub fn record(&self) -> ReportRecord {
        ReportRecord {
            name: "gradient_finite_difference".into(),
            inputs: json!({"points": self.points, "step": self.step}),
            values: json!({"max_relative_error": self.max_relative_error}),
            bands: json!(self.tolerance),
            pass: Some(self.pass),
        }
    }
}

/// Check ∇J against central differences of J at random probe points.
/// Relative error uses a unit floor so near-zero components are compared
/// absolutely.
pub fn finite_difference_check(
    env: &dyn Environment,
    points: usize,
    step: f64,
    tolerance: f64,
    seed: u64,
) -> Result<FiniteDifferenceReport, DiagnosticsError> {
    if points == 0 {
        return Err(DiagnosticsError::EmptyProbe);
    }
    let key = StreamKey::new(seed);
    let mut max_rel = 0.0f64;
    for k in 0..points as u64 {
        let mut rng = key.stream(StreamLabel::Probes, &[k]);
        let theta = env.probe_point(&mut rng);
        let grad = exact_gradient(env, &theta)?;
        for i in 0..env.dim() {
            let mut hi = theta.clone().into_vec();
            hi[i] += step;
            let mut lo = theta.clone().into_vec();
            lo[i] -= step;
            let j_hi = crate::model::exact_objective(env, &ParamVector::from(hi))?;
            let j_lo = crate::model::exact_objective(env, &ParamVector::from(lo))?;
            let fd = (j_hi - j_lo) / (2.0 * step);
            let rel = (fd - grad[i]).abs() / grad[i].abs().max(1.0);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(FiniteDifferenceReport {
        points,
        step,
        max_relative_error: max_rel,
        tolerance,
        pass: max_rel <= tolerance,
    })
}

fn pairwise_mean(draws: &[ParamVector]) -> ParamVector {
    fn sum(draws: &[ParamVector]) -> ParamVector {
        if draws.len() == 1 {
            return draws[0].clone();
        }
        let mid = draws.len() / 2;
        let mut left = sum(&draws[..mid]);
        left.accumulate(&sum(&draws[mid..]));
        left
    }
    sum(draws).scale(1.0 / draws.len() as f64)
}
