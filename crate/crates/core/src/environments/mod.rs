//! Concrete desk-scale environments.

mod bandit;
mod mdp;
mod point_mass;

pub use bandit::{DirectBandit, SoftmaxBandit, ThetaRewardBandit};
pub use mdp::TabularMdp;
pub use point_mass::PointMass;

/// Numerically stable softmax of `logits`.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / total).collect()
}

/// log softmax(logits)[index].
pub(crate) fn log_softmax_at(logits: &[f64], index: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    logits[index] - lse
}
