//! A degenerate single-outcome environment with a smooth bounded reward,
//! used wherever a zero-variance / exactly-enumerable sanity case is
//! needed. With this environment the stochastic loops reduce to plain
//! gradient ascent on R_θ.

use crate::model::{Environment, Outcome, TheoryConstants};
use crate::rng::CounterRng;
use crate::vector::ParamVector;

/// Point mass at a fixed outcome with reward
/// `R_θ = scale · exp(−‖θ − target‖²/2)`, maximized at θ = target.
#[derive(Clone, Debug)]
pub struct PointMass {
    target: ParamVector,
    scale: f64,
}

impl PointMass {
    pub fn new(target: ParamVector, scale: f64) -> Self {
        assert!(scale > 0.0 && scale.is_finite());
        PointMass { target, scale }
    }

    pub fn target(&self) -> &ParamVector {
        &self.target
    }

    fn gauss(&self, theta: &ParamVector) -> f64 {
        self.scale * (-0.5 * theta.sub(&self.target).norm_sq()).exp()
    }
}

impl Environment for PointMass {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn constants(&self) -> TheoryConstants {
        TheoryConstants {
            reward_bound: self.scale,
            score_grad_bound: 0.0,
            score_hess_bound: 0.0,
            // sup ‖r e^{−r²/2}‖ = e^{−1/2}; sup ‖(I − rrᵀ)e^{−r²/2}‖ ≤ 1.
            reward_grad_bound: self.scale * (-0.5f64).exp(),
            reward_hess_bound: self.scale,
            weight_var_bound: Some(0.0),
        }
    }

    fn sample(&self, _theta: &ParamVector, _rng: &mut CounterRng) -> Outcome {
        Outcome::Point(Vec::new())
    }

    fn log_prob(&self, _theta: &ParamVector, _x: &Outcome) -> f64 {
        0.0
    }

    fn grad_log_prob(&self, _theta: &ParamVector, _x: &Outcome) -> ParamVector {
        ParamVector::zeros(self.dim())
    }

    fn reward(&self, theta: &ParamVector, _x: &Outcome) -> f64 {
        self.gauss(theta)
    }

    fn grad_reward(&self, theta: &ParamVector, _x: &Outcome) -> ParamVector {
        self.target.sub(theta).scale(self.gauss(theta))
    }

    fn enumerate(&self) -> Option<Vec<Outcome>> {
        Some(vec![Outcome::Point(Vec::new())])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exact_gradient, exact_objective};
    use approx::assert_abs_diff_eq;

    #[test]
    fn objective_is_the_reward_itself() {
        let env = PointMass::new(ParamVector::from(vec![1.0, -2.0]), 0.7);
        let theta = ParamVector::from(vec![0.5, 0.5]);
        let expected = env.reward(&theta, &Outcome::Point(Vec::new()));
        assert_abs_diff_eq!(exact_objective(&env, &theta).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn gradient_vanishes_at_target() {
        let env = PointMass::new(ParamVector::from(vec![1.0, -2.0]), 0.7);
        let grad = exact_gradient(&env, env.target()).unwrap();
        assert_abs_diff_eq!(grad.norm(), 0.0, epsilon = 1e-15);
    }
}
