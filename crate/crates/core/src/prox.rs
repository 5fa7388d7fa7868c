//! Convex regularizers with exact proximal operators and exact
//! subdifferential projections.
//!
//! Every regularizer here knows three things in closed form: its value
//! (extended-real), its proximal map
//! `prox(v, η) = argmin_{θ} { G(θ) + ‖θ − v‖²/(2η) }`, and the Euclidean
//! projection onto its subdifferential ∂G(θ) at a feasible point. The
//! last one makes the stationarity measure `dist(g, ∂G(θ))` exact rather
//! than approximate.

use crate::vector::ParamVector;
use thiserror::Error;

/// Feasibility slack for indicator constraints, absorbing projection
/// round-off.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProxError {
    /// The regularizer's feasible set is empty (e.g. floor·n > 1).
    #[error("infeasible constraint set: {0}")]
    InfeasibleConstruction(String),
    /// A subdifferential was requested at a point outside the domain.
    #[error("point is infeasible for the regularizer")]
    InfeasiblePoint,
}

/// A closed proper convex function G with exact prox and subdifferential
/// projection. All operations are pure functions of their arguments.
pub trait Regularizer: Send + Sync {
    /// G(θ); +∞ outside the domain of an indicator.
    fn value(&self, theta: &ParamVector) -> f64;

    /// argmin_{θ} { G(θ) + ‖θ − v‖²/(2η) }; unique by strong convexity.
    fn prox(&self, v: &ParamVector, eta: f64) -> Result<ParamVector, ProxError>;

    /// Euclidean projection of `g` onto ∂G(θ).
    fn subdiff_project(&self, theta: &ParamVector, g: &ParamVector) -> Result<ParamVector, ProxError>;

    /// dist(g, ∂G(θ)).
    fn subdiff_dist(&self, theta: &ParamVector, g: &ParamVector) -> Result<f64, ProxError> {
        Ok(g.sub(&self.subdiff_project(theta, g)?).norm())
    }
}

/// Ascent-form gradient mapping `G_η(θ) = (prox(θ + ηg, η) − θ)/η`.
///
/// With g = ∇J(θ) its norm is the composite stationarity measure; it
/// vanishes exactly at fixed points of the prox-gradient update.
pub fn gradient_mapping(
    reg: &dyn Regularizer,
    theta: &ParamVector,
    g: &ParamVector,
    eta: f64,
) -> Result<ParamVector, ProxError> {
    assert!(eta > 0.0, "step size must be positive");
    let stepped = reg.prox(&theta.add_scaled(eta, g), eta)?;
    Ok(stepped.sub(theta).scale(1.0 / eta))
}

/// G ≡ 0.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroReg;

impl Regularizer for ZeroReg {
    fn value(&self, _theta: &ParamVector) -> f64 {
        0.0
    }

    fn prox(&self, v: &ParamVector, eta: f64) -> Result<ParamVector, ProxError> {
        assert!(eta > 0.0, "step size must be positive");
        Ok(v.clone())
    }

    fn subdiff_project(&self, theta: &ParamVector, _g: &ParamVector) -> Result<ParamVector, ProxError> {
        Ok(ParamVector::zeros(theta.dim()))
    }
}

/// G(θ) = (λ/2)‖θ‖².
#[derive(Clone, Copy, Debug)]
pub struct SquaredNorm {
    lambda: f64,
}

impl SquaredNorm {
    pub fn new(lambda: f64) -> Self {
        assert!(lambda >= 0.0 && lambda.is_finite(), "lambda must be nonnegative");
        SquaredNorm { lambda }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Regularizer for SquaredNorm {
    fn value(&self, theta: &ParamVector) -> f64 {
        0.5 * self.lambda * theta.norm_sq()
    }

    fn prox(&self, v: &ParamVector, eta: f64) -> Result<ParamVector, ProxError> {
        assert!(eta > 0.0, "step size must be positive");
        Ok(v.scale(1.0 / (1.0 + eta * self.lambda)))
    }

    fn subdiff_project(&self, theta: &ParamVector, _g: &ParamVector) -> Result<ParamVector, ProxError> {
        Ok(theta.scale(self.lambda))
    }
}

/// G(θ) = λ‖θ‖₁.
#[derive(Clone, Copy, Debug)]
pub struct L1Norm {
    lambda: f64,
}

impl L1Norm {
    pub fn new(lambda: f64) -> Self {
        assert!(lambda >= 0.0 && lambda.is_finite(), "lambda must be nonnegative");
        L1Norm { lambda }
    }
}

impl Regularizer for L1Norm {
    fn value(&self, theta: &ParamVector) -> f64 {
        self.lambda * theta.iter().map(|t| t.abs()).sum::<f64>()
    }

    fn prox(&self, v: &ParamVector, eta: f64) -> Result<ParamVector, ProxError> {
        assert!(eta > 0.0, "step size must be positive");
        let threshold = self.lambda * eta;
        Ok(ParamVector::from_fn(v.dim(), |i| {
            let x = v[i];
            if x > threshold {
                x - threshold
            } else if x < -threshold {
                x + threshold
            } else {
                0.0
            }
        }))
    }

    fn subdiff_project(&self, theta: &ParamVector, g: &ParamVector) -> Result<ParamVector, ProxError> {
        Ok(ParamVector::from_fn(theta.dim(), |i| {
            if theta[i] > 0.0 {
                self.lambda
            } else if theta[i] < 0.0 {
                -self.lambda
            } else {
                g[i].clamp(-self.lambda, self.lambda)
            }
        }))
    }
}

/// Indicator of the box [lower, upper]^n.
#[derive(Clone, Copy, Debug)]
pub struct BoxConstraint {
    lower: f64,
    upper: f64,
}

impl BoxConstraint {
    pub fn new(lower: f64, upper: f64) -> Result<Self, ProxError> {
        if !(lower <= upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(ProxError::InfeasibleConstruction(format!(
                "box bounds [{lower}, {upper}] are empty or non-finite"
            )));
        }
        Ok(BoxConstraint { lower, upper })
    }

    fn feasible(&self, theta: &ParamVector) -> bool {
        theta.iter().all(|&t| t >= self.lower - FEAS_TOL && t <= self.upper + FEAS_TOL)
    }
}

impl Regularizer for BoxConstraint {
    fn value(&self, theta: &ParamVector) -> f64 {
        if self.feasible(theta) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, v: &ParamVector, eta: f64) -> Result<ParamVector, ProxError> {
        assert!(eta > 0.0, "step size must be positive");
        Ok(ParamVector::from_fn(v.dim(), |i| v[i].clamp(self.lower, self.upper)))
    }

    fn subdiff_project(&self, theta: &ParamVector, g: &ParamVector) -> Result<ParamVector, ProxError> {
        if !self.feasible(theta) {
            return Err(ProxError::InfeasiblePoint);
        }
        // Normal cone per coordinate: {0} in the interior, a half-line at
        // a face, all of R when the box is a single point.
        Ok(ParamVector::from_fn(theta.dim(), |i| {
            let at_lower = theta[i] <= self.lower + FEAS_TOL;
            let at_upper = theta[i] >= self.upper - FEAS_TOL;
            match (at_lower, at_upper) {
                (true, true) => g[i],
                (true, false) => g[i].min(0.0),
                (false, true) => g[i].max(0.0),
                (false, false) => 0.0,
            }
        }))
    }
}

/// Indicator of the probability simplex {θ ≥ 0, Σθ = 1}.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimplexConstraint;

/// Indicator of the floored simplex {θ_k ≥ floor, Σθ = 1}, which keeps
/// direct-parameterized densities (and hence importance weights) bounded
/// away from zero.
#[derive(Clone, Copy, Debug)]
pub struct FlooredSimplexConstraint {
    floor: f64,
}

impl FlooredSimplexConstraint {
    /// Default floor used by the shipped configurations.
    pub const DEFAULT_FLOOR: f64 = 1e-3;

    pub fn new(floor: f64) -> Self {
        assert!(floor >= 0.0 && floor.is_finite(), "floor must be nonnegative");
        FlooredSimplexConstraint { floor }
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    fn check_dim(&self, dim: usize) -> Result<f64, ProxError> {
        let slack = 1.0 - self.floor * dim as f64;
        if slack < -FEAS_TOL {
            return Err(ProxError::InfeasibleConstruction(format!(
                "floor {} × dim {} exceeds total mass 1",
                self.floor, dim
            )));
        }
        Ok(slack.max(0.0))
    }
}

/// Euclidean projection of `v` onto {θ ≥ 0, Σθ = total}, by the sort-based
/// threshold rule; ties in the threshold index resolve to the largest
/// valid support.
fn project_scaled_simplex(v: &[f64], total: f64) -> Vec<f64> {
    debug_assert!(total >= 0.0);
    if total == 0.0 {
        return vec![0.0; v.len()];
    }
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - total) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Projection of `g` onto the normal cone of a simplex-type set:
/// {y : y_i = c on the support, y_i ≤ c off the support, c ∈ R}.
///
/// The optimal level c minimizes a piecewise-quadratic in one variable;
/// the active off-support set is a prefix of the descending-sorted
/// off-support entries, so all candidates can be scanned directly.
fn project_support_cone(on_support: &[bool], g: &ParamVector) -> ParamVector {
    let support_count = on_support.iter().filter(|&&s| s).count();
    if support_count == 0 {
        // Feasible set is a single point; the normal cone is all of R^n.
        return g.clone();
    }
    let support_sum: f64 = g.iter().zip(on_support).filter(|(_, &s)| s).map(|(v, _)| v).sum();
    let mut off: Vec<f64> =
        g.iter().zip(on_support).filter(|(_, &s)| !s).map(|(v, _)| *v).collect();
    off.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));

    let mut prefix = 0.0;
    let mut level = support_sum / support_count as f64;
    for m in 0..=off.len() {
        let candidate = (support_sum + prefix) / (support_count + m) as f64;
        let lower_ok = m == 0 || off[m - 1] > candidate;
        let upper_ok = m == off.len() || off[m] <= candidate;
        if lower_ok && upper_ok {
            level = candidate;
            break;
        }
        if m < off.len() {
            prefix += off[m];
        }
    }
    ParamVector::from_fn(g.dim(), |i| if on_support[i] { level } else { g[i].min(level) })
}

impl Regularizer for SimplexConstraint {
    fn value(&self, theta: &ParamVector) -> f64 {
        let sum: f64 = theta.iter().sum();
        let feasible = (sum - 1.0).abs() <= FEAS_TOL && theta.iter().all(|&t| t >= -FEAS_TOL);
        if feasible {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, v: &ParamVector, eta: f64) -> Result<ParamVector, ProxError> {
        assert!(eta > 0.0, "step size must be positive");
        // Projecting a feasible point is the identity; returning the input
        // unchanged makes repeated projection exact.
        if self.value(v).is_finite() {
            return Ok(v.clone());
        }
        Ok(ParamVector::from(project_scaled_simplex(v, 1.0)))
    }

    fn subdiff_project(&self, theta: &ParamVector, g: &ParamVector) -> Result<ParamVector, ProxError> {
        if self.value(theta).is_infinite() {
            return Err(ProxError::InfeasiblePoint);
        }
        let on_support: Vec<bool> = theta.iter().map(|&t| t > FEAS_TOL).collect();
        Ok(project_support_cone(&on_support, g))
    }
}

impl Regularizer for FlooredSimplexConstraint {
    fn value(&self, theta: &ParamVector) -> f64 {
        if self.check_dim(theta.dim()).is_err() {
            return f64::INFINITY;
        }
        let sum: f64 = theta.iter().sum();
        let feasible =
            (sum - 1.0).abs() <= FEAS_TOL && theta.iter().all(|&t| t >= self.floor - FEAS_TOL);
        if feasible {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, v: &ParamVector, eta: f64) -> Result<ParamVector, ProxError> {
        assert!(eta > 0.0, "step size must be positive");
        let slack = self.check_dim(v.dim())?;
        if self.value(v).is_finite() {
            return Ok(v.clone());
        }
        let shifted: Vec<f64> = v.iter().map(|x| x - self.floor).collect();
        let projected = project_scaled_simplex(&shifted, slack);
        Ok(ParamVector::from_fn(v.dim(), |i| projected[i] + self.floor))
    }

    fn subdiff_project(&self, theta: &ParamVector, g: &ParamVector) -> Result<ParamVector, ProxError> {
        self.check_dim(theta.dim())?;
        if self.value(theta).is_infinite() {
            return Err(ProxError::InfeasiblePoint);
        }
        let on_support: Vec<bool> = theta.iter().map(|&t| t > self.floor + FEAS_TOL).collect();
        Ok(project_support_cone(&on_support, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pv(values: &[f64]) -> ParamVector {
        ParamVector::from(values.to_vec())
    }

    #[test]
    fn l1_prox_soft_thresholds() {
        let reg = L1Norm::new(0.5);
        let out = reg.prox(&pv(&[1.0, -0.2, 0.6]), 1.0).unwrap();
        assert_eq!(out.as_slice(), &[0.5, 0.0, 0.09999999999999998]);
        assert_abs_diff_eq!(out[2], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn squared_norm_prox_closed_form() {
        let reg = SquaredNorm::new(1.0);
        let out = reg.prox(&pv(&[2.0, -4.0]), 1.0).unwrap();
        assert_eq!(out.as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn simplex_prox_matches_brute_force_grid() {
        let reg = SimplexConstraint;
        let out = reg.prox(&pv(&[0.9, 0.5]), 1.0).unwrap();
        assert_abs_diff_eq!(out[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 0.3, epsilon = 1e-12);

        // Independent oracle: brute-force minimization of ‖θ' − v‖² over a
        // fine grid of the 2-simplex.
        let mut best = (f64::INFINITY, 0.0);
        let steps = 2_000_000u64;
        for k in 0..=steps {
            let x = k as f64 / steps as f64;
            let obj = (x - 0.9f64).powi(2) + ((1.0 - x) - 0.5f64).powi(2);
            if obj < best.0 {
                best = (obj, x);
            }
        }
        assert_abs_diff_eq!(out[0], best.1, epsilon = 1e-6);
    }

    #[test]
    fn box_prox_clamps() {
        let reg = BoxConstraint::new(0.0, 1.0).unwrap();
        let out = reg.prox(&pv(&[1.5, -0.3, 0.4]), 1.0).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 0.0, 0.4]);
    }

    #[test]
    fn subdiff_dist_closed_forms() {
        let g = pv(&[0.3, -0.4]);
        assert_abs_diff_eq!(ZeroReg.subdiff_dist(&pv(&[5.0, 5.0]), &g).unwrap(), 0.5, epsilon = 1e-15);

        let l1 = L1Norm::new(1.0);
        assert_eq!(l1.subdiff_dist(&pv(&[0.0]), &pv(&[0.4])).unwrap(), 0.0);
        assert_abs_diff_eq!(
            l1.subdiff_dist(&pv(&[2.0]), &pv(&[0.4])).unwrap(),
            0.6,
            epsilon = 1e-15
        );

        let boxed = BoxConstraint::new(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            boxed.subdiff_dist(&pv(&[0.5]), &pv(&[0.3])).unwrap(),
            0.3,
            epsilon = 1e-15
        );
        // At the upper face the positive part lies in the cone.
        assert_eq!(boxed.subdiff_dist(&pv(&[1.0]), &pv(&[0.7])).unwrap(), 0.0);
        assert_abs_diff_eq!(
            boxed.subdiff_dist(&pv(&[1.0]), &pv(&[-0.7])).unwrap(),
            0.7,
            epsilon = 1e-15
        );
    }

    #[test]
    fn subdiff_dist_rejects_infeasible_point() {
        let reg = SimplexConstraint;
        let theta = pv(&[0.9, 0.9]);
        assert_eq!(
            reg.subdiff_dist(&theta, &pv(&[0.0, 0.0])).unwrap_err(),
            ProxError::InfeasiblePoint
        );
    }

    #[test]
    fn floored_simplex_infeasible_construction() {
        let reg = FlooredSimplexConstraint::new(0.6);
        let err = reg.prox(&pv(&[0.5, 0.5]), 1.0).unwrap_err();
        assert!(matches!(err, ProxError::InfeasibleConstruction(_)));
    }

    #[test]
    fn floored_simplex_tight_floor_collapses_to_point() {
        let reg = FlooredSimplexConstraint::new(0.5);
        let out = reg.prox(&pv(&[9.0, -4.0]), 0.1).unwrap();
        assert_eq!(out.as_slice(), &[0.5, 0.5]);
        // Normal cone at the unique feasible point is everything.
        assert_eq!(reg.subdiff_dist(&out, &pv(&[3.0, -8.0])).unwrap(), 0.0);
    }

    #[test]
    fn gradient_mapping_examples() {
        let theta = pv(&[0.5]);
        let g = pv(&[2.0]);
        let zero = ZeroReg;
        let gm = gradient_mapping(&zero, &theta, &g, 0.7).unwrap();
        assert_abs_diff_eq!(gm[0], 2.0, epsilon = 1e-12);

        let boxed = BoxConstraint::new(0.0, 1.0).unwrap();
        let gm = gradient_mapping(&boxed, &theta, &g, 1.0).unwrap();
        assert_abs_diff_eq!(gm[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn simplex_projection_threshold_ties() {
        // All mass already allocated to one coordinate.
        let out = project_scaled_simplex(&[2.0, 1.0], 1.0);
        assert_eq!(out, vec![1.0, 0.0]);
        // Symmetric input splits evenly.
        let out = project_scaled_simplex(&[0.0, 0.0, 0.0], 1.0);
        for v in out {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }
}
