//! Scratch exploration for picking experiment constants. Not shipped.

use rewardopt::algorithms::*;
use rewardopt::diagnostics::*;
use rewardopt::environments::*;
use rewardopt::model::*;
use rewardopt::prox::*;
use rewardopt::rng::*;
use rewardopt::theory::*;
use rewardopt::vector::ParamVector;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("all");

    if which == "flow" || which == "all" {
        // Exact prox-gradient flow on the 3-arm ZeroReg bandit at page-eta.
        for (cw, label) in [(2.0, "cw2"), (1.0, "cw1")] {
            let env = SoftmaxBandit::new(vec![1.0, 0.5, 0.0]).with_weight_var_bound(cw);
            let dc = DerivedConstants::from_constants(&env.constants());
            let sched = page_schedule(0.2, &dc, 1.0, None).unwrap();
            println!(
                "{label}: L={} C={:?} eta_max={} N1={} N2={} p={} T={}",
                dc.smoothness, dc.weight_drift, sched.eta_max, sched.large_batch,
                sched.small_batch, sched.switch_prob, sched.iterations
            );
            for t_total in [500usize, 1000, 2000, 4000, 8000, 16000] {
                let trace = run_prox_gradient_exact(&env, &ZeroReg, sched.eta_max, t_total, &ParamVector::zeros(3)).unwrap();
                let sq: Vec<f64> = trace.records[1..].iter().map(|r| r.grad_mapping_norm.unwrap().powi(2)).collect();
                let mean = sq.iter().sum::<f64>() / sq.len() as f64;
                let last = *sq.last().unwrap();
                println!("  T={t_total}: mean |G|^2 over 1..T = {mean:.5}, final = {last:.5}");
            }
        }
    }

    if which == "c6" || which == "all" {
        // Criterion 6: SPG, r=(1,0.5,0), L2 0.1, eta=1/16, N=2000, T=500.
        let env = SoftmaxBandit::new(vec![1.0, 0.5, 0.0]);
        let reg = SquaredNorm::new(0.1);
        let mut ok = 0;
        let mut worst: f64 = 0.0;
        let mut worst_mean: f64 = 0.0;
        let mut first_hit_sum = 0usize;
        for seed in 0..20u64 {
            let cfg = SpgConfig { eta: 1.0 / 16.0, batch_size: 2000, iterations: 500, seed };
            let trace = run_spg(&env, &reg, &cfg, &ParamVector::zeros(3)).unwrap();
            let gm = trace.output().grad_mapping_norm.unwrap();
            let sq = gm * gm;
            worst = worst.max(sq);
            if sq <= 0.01 {
                ok += 1;
            }
            let sqs: Vec<f64> = trace.records[1..]
                .iter()
                .map(|r| r.grad_mapping_norm.unwrap().powi(2))
                .collect();
            let mean = sqs.iter().sum::<f64>() / sqs.len() as f64;
            worst_mean = worst_mean.max(mean);
            first_hit_sum += sqs.iter().position(|&v| v <= 0.01).unwrap_or(sqs.len());
        }
        println!(
            "c6: {ok}/20 seeds realized-draw <= 0.01, worst draw {worst:.5}, worst trace-mean {worst_mean:.5}, avg first-hit {}",
            first_hit_sum / 20
        );
    }

    if which == "page02" || which == "all" {
        // run_page example: theorem-3 schedule at eps=0.2 on ZeroReg 3-arm.
        let env = SoftmaxBandit::new(vec![1.0, 0.5, 0.0]).with_weight_var_bound(2.0);
        let dc = DerivedConstants::from_constants(&env.constants());
        for c_t in [1.0, 25.0, 50.0, 100.0, 200.0, 400.0] {
            let sched = page_schedule(0.2, &dc, 1.0, Some(c_t)).unwrap();
            let cfg = PageConfig {
                eta: sched.eta_max,
                large_batch: sched.large_batch as usize,
                small_batch: sched.small_batch as usize,
                switch_prob: sched.switch_prob,
                iterations: sched.iterations as usize,
                seed: 0,
            };
            let mut mean = 0.0;
            for seed in 0..20u64 {
                let cfg = PageConfig { seed, ..cfg };
                let trace = run_page(&env, &ZeroReg, &cfg, &ParamVector::zeros(3)).unwrap();
                let gm = trace.output().grad_mapping_norm.unwrap();
                mean += gm * gm / 20.0;
            }
            println!("page02 c_t={c_t}: T={} mean |G|^2 at output = {mean:.5}", sched.iterations);
        }
    }

    if which == "c7" || which == "all" {
        // Criterion 7: matched-cost variance reduction, window 10..200.
        let env = SoftmaxBandit::new(vec![1.0, 0.5, 0.0]).with_weight_var_bound(2.0);
        let reg = SquaredNorm::new(0.1);
        for (n1, eta) in [(400usize, 1.0 / 16.0), (400, 1.0 / 32.0), (400, 1.0 / 64.0), (800, 1.0 / 32.0)] {
            let n2 = (n1 as f64).sqrt() as usize;
            let p = n2 as f64 / (n1 + n2) as f64;
            let matched = (2.0 * n1 as f64 * n2 as f64 / (n1 + n2) as f64).round() as usize;
            let t = 220;
            let mut ratios: Vec<f64> = Vec::new();
            for seed in 0..20u64 {
                let page_cfg = PageConfig { eta, large_batch: n1, small_batch: n2, switch_prob: p, iterations: t, seed };
                let spg_cfg = SpgConfig { eta, batch_size: matched, iterations: t, seed: seed + 1000 };
                let page = run_page(&env, &reg, &page_cfg, &ParamVector::zeros(3)).unwrap();
                let spg = run_spg(&env, &reg, &spg_cfg, &ParamVector::zeros(3)).unwrap();
                let report = variance_reduction_report(&env, &spg, &page, (10, 201)).unwrap();
                ratios.push(report.ratio);
            }
            ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
            println!(
                "c7 n1={n1} eta={eta:.5} matched={matched}: median ratio {:.4}, max {:.4}",
                ratios[10], ratios[19]
            );
        }
    }

    if which == "lemma3" || which == "all" {
        // Worst lhs/dist^2 ratio for the softmax bandit over box pairs, vs C.
        for cw in [2.0f64] {
            let env = SoftmaxBandit::new(vec![1.0, 0.5, 0.0]).with_weight_var_bound(cw);
            let c = weight_drift_constant(&env.constants()).unwrap();
            let key = StreamKey::new(123);
            let mut rng = key.stream(StreamLabel::Probes, &[]);
            let mut worst = 0.0f64;
            for _ in 0..20000 {
                let a = env.probe_point(&mut rng);
                let b = env.probe_point(&mut rng);
                let d2 = a.sub(&b).norm_sq();
                if d2 < 1e-6 {
                    continue;
                }
                let mut lhs = 0.0;
                for x in env.enumerate().unwrap() {
                    let pb = prob(&env, &b, &x);
                    let w = env.log_weight(&a, &b, &x).exp();
                    let fresh = env.score_gradient(&b, &x);
                    let stale = env.score_gradient(&a, &x).scale(w);
                    lhs += pb * fresh.sub(&stale).norm_sq();
                }
                worst = worst.max(lhs / d2);
            }
            println!("lemma3 softmax cw={cw}: worst ratio {worst:.3} vs C = {c:.3}");
        }
    }

    if which == "spgsweep" || which == "all" {
        // Sweep scaling behavior for candidate instances.
        for (rewards, label) in [
            (vec![1.0, 0.5, 0.0], "r-1-05-0"),
            (vec![2.0, 1.0, 0.0], "r-2-1-0"),
        ] {
            let env = SoftmaxBandit::new(rewards.clone()).with_weight_var_bound(2.0);
            let dc = DerivedConstants::from_constants(&env.constants());
            let delta = env.constants().reward_bound
                - exact_objective(&env, &ParamVector::zeros(3)).unwrap();
            println!("{label}: L={} sigma^2={} delta={delta}", dc.smoothness, dc.score_variance);
            let mut spg_means = Vec::new();
            let mut page_means = Vec::new();
            for eps in [0.2f64, 0.1, 0.05] {
                // SPG theorem-2 cells.
                let sched = spg_schedule(eps, delta, &dc, None).unwrap();
                let mut mean = 0.0;
                let mut mean_iters = 0.0;
                for seed in 0..10u64 {
                    let key = StreamKey::new(seed);
                    let mut theta = ParamVector::zeros(3);
                    let mut consumed = 0u64;
                    let mut t = 0u64;
                    loop {
                        let g = exact_gradient(&env, &theta).unwrap();
                        if g.norm() <= eps {
                            break;
                        }
                        let est = rewardopt::estimators::batch_gradient(&env, &theta, sched.batch_size as usize, &key, t);
                        consumed += est.samples_used;
                        theta = theta.add_scaled(sched.eta, &est.grad);
                        t += 1;
                    }
                    mean += consumed as f64 / 10.0;
                    mean_iters += t as f64 / 10.0;
                }
                println!("  spg eps={eps}: N={} mean samples {mean:.1} iters {mean_iters:.1}", sched.batch_size);
                spg_means.push((eps.ln(), mean.max(1.0).ln()));

                // PAGE theorem-3 cells.
                let sched = page_schedule(eps, &dc, 1.0, None).unwrap();
                let mut mean = 0.0;
                let mut mean_iters = 0.0;
                for seed in 0..10u64 {
                    let key = StreamKey::new(seed);
                    let mut theta = ParamVector::zeros(3);
                    let mut consumed = 0u64;
                    let mut g = rewardopt::estimators::batch_gradient(&env, &theta, sched.large_batch as usize, &key, 0);
                    consumed += g.samples_used;
                    let mut t = 0u64;
                    loop {
                        let exact = exact_gradient(&env, &theta).unwrap();
                        if exact.norm() <= eps {
                            break;
                        }
                        let theta_next = theta.add_scaled(sched.eta_max, &g.grad);
                        g = rewardopt::estimators::page_update(
                            &env, &theta_next, &theta, &g.grad,
                            sched.large_batch as usize, sched.small_batch as usize,
                            sched.switch_prob, &key, t + 1,
                        ).unwrap();
                        consumed += g.samples_used;
                        theta = theta_next;
                        t += 1;
                    }
                    mean += consumed as f64 / 10.0;
                    mean_iters += t as f64 / 10.0;
                }
                println!("  page eps={eps}: N1={} mean samples {mean:.1} iters {mean_iters:.1}", sched.large_batch);
                page_means.push((eps.ln(), mean.max(1.0).ln()));
            }
            let slope = |pts: &[(f64, f64)]| {
                let n = pts.len() as f64;
                let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
                let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
                let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
                let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
                sxy / sxx
            };
            println!("  slopes: spg {:.2} page {:.2}", slope(&spg_means), slope(&page_means));
        }
    }
}
