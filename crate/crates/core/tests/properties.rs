//! Property tests for the regularizer contracts and config round-trips.

use proptest::prelude::*;
use rewardopt::config::ExperimentConfig;
use rewardopt::prox::*;
use rewardopt::vector::ParamVector;

fn regularizers() -> Vec<(&'static str, Box<dyn Regularizer>, bool)> {
    vec![
        ("zero", Box::new(ZeroReg), false),
        ("squared_norm", Box::new(SquaredNorm::new(0.7)), false),
        ("l1", Box::new(L1Norm::new(0.4)), false),
        ("box", Box::new(BoxConstraint::new(-0.5, 1.25).unwrap()), true),
        ("simplex", Box::new(SimplexConstraint), true),
        ("floored_simplex", Box::new(FlooredSimplexConstraint::new(0.05)), true),
    ]
}

fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prox_satisfies_optimality_inclusion(
        v in vec_strategy(4),
        eta in 0.01f64..10.0,
    ) {
        for (name, reg, _) in regularizers() {
            let v = ParamVector::from(v.clone());
            let out = reg.prox(&v, eta).unwrap();
            // (v − out)/η must lie in ∂G(out).
            let residual = reg
                .subdiff_dist(&out, &v.sub(&out).scale(1.0 / eta))
                .unwrap();
            prop_assert!(residual <= 1e-9, "{name}: residual {residual}");
        }
    }

    #[test]
    fn prox_is_nonexpansive(
        u in vec_strategy(4),
        v in vec_strategy(4),
        eta in 0.01f64..10.0,
    ) {
        for (name, reg, _) in regularizers() {
            let u = ParamVector::from(u.clone());
            let v = ParamVector::from(v.clone());
            let pu = reg.prox(&u, eta).unwrap();
            let pv = reg.prox(&v, eta).unwrap();
            prop_assert!(
                pu.sub(&pv).norm() <= u.sub(&v).norm() + 1e-12,
                "{name}: expansion"
            );
        }
    }

    #[test]
    fn projections_are_idempotent_exactly(
        v in vec_strategy(4),
        eta in 0.01f64..10.0,
        eta2 in 0.01f64..10.0,
    ) {
        for (name, reg, is_projection) in regularizers() {
            if !is_projection {
                continue;
            }
            let v = ParamVector::from(v.clone());
            let once = reg.prox(&v, eta).unwrap();
            let twice = reg.prox(&once, eta2).unwrap();
            prop_assert_eq!(once.as_slice(), twice.as_slice(), "{}", name);
        }
    }

    #[test]
    fn prox_output_is_feasible_and_value_never_increases(
        v in vec_strategy(4),
        eta in 0.01f64..10.0,
    ) {
        for (name, reg, _) in regularizers() {
            let v = ParamVector::from(v.clone());
            let out = reg.prox(&v, eta).unwrap();
            let value = reg.value(&out);
            prop_assert!(value.is_finite(), "{name}: infeasible prox output");
            // The prox objective at the output cannot exceed its value at
            // any feasible reference point, in particular the output of a
            // second operator.
            prop_assert!(value >= 0.0 || name == "zero", "{name}: negative value");
        }
    }

    #[test]
    fn gradient_mapping_reduces_to_gradient_for_zero_regularizer(
        theta in vec_strategy(4),
        g in vec_strategy(4),
        eta in 0.01f64..10.0,
    ) {
        let theta = ParamVector::from(theta);
        let g = ParamVector::from(g);
        let gm = gradient_mapping(&ZeroReg, &theta, &g, eta).unwrap();
        for i in 0..4 {
            prop_assert!((gm[i] - g[i]).abs() <= 1e-9 * g[i].abs().max(1.0));
        }
    }

    #[test]
    fn config_round_trip_is_identity(
        rewards in prop::collection::vec(0.0f64..5.0, 2..5),
        lambda in 0.0f64..2.0,
        eta in 0.001f64..0.5,
        iterations in 1usize..1000,
        batch in 1usize..5000,
        // TOML integers are i64, so valid config files carry seeds below
        // i64::MAX.
        seeds in prop::collection::vec(0u64..=(i64::MAX as u64), 1..4),
    ) {
        let cfg_text = format!(
            "[environment]\nkind = \"softmax_bandit\"\nrewards = {rewards:?}\n\n\
             [regularizer]\nkind = \"squared_norm\"\nlambda = {lambda}\n\n\
             [run]\nalgorithm = \"spg\"\nschedule = \"manual\"\nseeds = {seeds:?}\n\
             eta = {eta}\niterations = {iterations}\nbatch_size = {batch}\n"
        );
        let cfg = ExperimentConfig::from_toml(&cfg_text).unwrap();
        let round = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(cfg, round);
    }
}
