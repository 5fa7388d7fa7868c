use clap::{Parser, Subcommand};
use rewardopt::harness::{self, HarnessError, ScheduleRequest};
use rewardopt::model::TheoryConstants;
use std::path::PathBuf;
use std::process::ExitCode;

/// Stochastic proximal gradient experiments for regularized
/// expected-reward optimization.
#[derive(Parser)]
#[command(name = "rewardopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the configured seeded runs; one CSV trace and one JSON
    /// summary per seed.
    Run {
        /// TOML experiment configuration.
        config: PathBuf,
    },
    /// Run the diagnostic battery for the configured environment and
    /// regularizer; nonzero exit if any assertion-grade check fails.
    Check {
        config: PathBuf,
    },
    /// Print the batch-size/step-size schedule for a tolerance.
    Schedule {
        /// Target stationarity tolerance ε.
        #[arg(long)]
        eps: f64,
        /// 2 = plain method (η, T, N); 3 = variance-reduced
        /// (η_max, N1, N2, p, T).
        #[arg(long, default_value_t = 2)]
        theorem: u8,
        /// U: bound on |R_θ(x)|.
        #[arg(long)]
        reward_bound: f64,
        /// C_g: bound on ‖∇ log π_θ‖.
        #[arg(long)]
        score_grad_bound: f64,
        /// C_h: bound on ‖∇² log π_θ‖.
        #[arg(long)]
        score_hess_bound: f64,
        /// C̃_g: bound on ‖∇R_θ‖.
        #[arg(long, default_value_t = 0.0)]
        reward_grad_bound: f64,
        /// C̃_h: bound on ‖∇²R_θ‖.
        #[arg(long, default_value_t = 0.0)]
        reward_hess_bound: f64,
        /// C_w: importance-weight variance bound (needed for theorem 3).
        #[arg(long)]
        weight_var_bound: Option<f64>,
        /// Δ: upper bound on F* − F(θ⁰) (needed for theorem 2).
        #[arg(long)]
        delta: Option<f64>,
        /// Step size; defaults to 1/(4L) or η_max.
        #[arg(long)]
        eta: Option<f64>,
        /// Leading constant of N₁ = ⌈c/ε²⌉ (theorem 3).
        #[arg(long, default_value_t = 1.0)]
        c_n1: f64,
        /// Leading constant of T = ⌈c/ε²⌉ (theorem 3); defaults to c_n1.
        #[arg(long)]
        c_t: Option<f64>,
        /// Opt-in measured variance replacing the σ² bound (theorem 2).
        #[arg(long)]
        empirical_sigma_sq: Option<f64>,
    },
    /// Samples-to-tolerance scaling sweep over (algorithm × ε × seed).
    Sweep {
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config } => {
            let artifacts = harness::cmd_run(&config)?;
            for a in &artifacts {
                println!("seed {}: wrote {} and {}", a.seed, a.csv_path.display(), a.summary_path.display());
                if let Some(fs) = &a.summary.final_stationarity {
                    println!(
                        "seed {}: output index {} with grad-mapping norm {}",
                        a.seed, a.summary.output_index, fs.grad_mapping_norm
                    );
                }
            }
            Ok(())
        }
        Command::Check { config } => {
            let (reports, all_pass) = harness::cmd_check(&config)?;
            for r in &reports {
                println!("{}", serde_json::to_string(r).expect("json"));
            }
            if all_pass {
                println!("check: all {} diagnostics passed", reports.len());
                Ok(())
            } else {
                let failed = reports.iter().filter(|r| r.pass == Some(false)).count();
                eprintln!("check: {failed} diagnostics FAILED");
                std::process::exit(1);
            }
        }
        Command::Schedule {
            eps,
            theorem,
            reward_bound,
            score_grad_bound,
            score_hess_bound,
            reward_grad_bound,
            reward_hess_bound,
            weight_var_bound,
            delta,
            eta,
            c_n1,
            c_t,
            empirical_sigma_sq,
        } => {
            let req = ScheduleRequest {
                theorem,
                eps,
                constants: TheoryConstants {
                    reward_bound,
                    score_grad_bound,
                    score_hess_bound,
                    reward_grad_bound,
                    reward_hess_bound,
                    weight_var_bound,
                },
                delta,
                eta,
                c_n1,
                c_t,
                empirical_sigma_sq,
            };
            print!("{}", harness::cmd_schedule(&req)?);
            Ok(())
        }
        Command::Sweep { config } => {
            let artifacts = harness::cmd_sweep(&config)?;
            println!("wrote {} and {}", artifacts.csv_path.display(), artifacts.summary_path.display());
            println!("{}", serde_json::to_string_pretty(&artifacts.summary).expect("json"));
            Ok(())
        }
    }
}
