use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use credible::error::{Error, Result};
use credible::estimators::EstimatorConfig;
use credible::experiments;
use credible::radius::{credible_radius, radius_bounds, RadiusMethod, RadiusQuery};
use credible::sequence_model::{make_sim_truth, sample_observation, TruthSequence};
use credible::stream::StreamTag;

#[derive(Parser)]
#[command(
    name = "credible",
    about = "Adaptive Bayesian credible balls for the Gaussian sequence model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RadiusMethodArg {
    MonteCarlo,
    Cumulant,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectorArg {
    Mle,
    Risk,
}

#[derive(Subcommand)]
enum Command {
    /// Print the credible radius and its analytic envelope.
    Radius {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        n: f64,
        #[arg(long, default_value_t = 0.05)]
        gamma: f64,
        #[arg(long, default_value_t = 4096)]
        trunc: usize,
        #[arg(long, value_enum, default_value_t = RadiusMethodArg::MonteCarlo)]
        method: RadiusMethodArg,
        #[arg(long, default_value_t = credible::radius::DEFAULT_MC_DRAWS)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Select the regularity on a sampled or supplied truth and dump the
    /// grid diagnostics.
    Estimate {
        /// Built-in name (`sim`, `zero`) or a path to a truth text file.
        #[arg(long, default_value = "sim")]
        truth: String,
        #[arg(long)]
        n: f64,
        #[arg(long, value_enum)]
        selector: SelectorArg,
        #[arg(long, default_value_t = 1.0)]
        d: f64,
        #[arg(long, default_value_t = 1.0 / 3.0)]
        c1: f64,
        #[arg(long, default_value_t = 0.05)]
        gamma: f64,
        #[arg(long)]
        c0: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the `alpha,value,threshold` CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a coverage experiment from a JSON config.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; defaults to `coverage.csv` in the config's
        /// output_dir, or stdout when neither is given.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce the simulation-study figure panels from a JSON config.
    Figures {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep the analytic tail-sum and rate-shift inequalities.
    CheckBounds,
}

fn load_truth(name: &str) -> Result<TruthSequence> {
    match name {
        "sim" => Ok(make_sim_truth()),
        "zero" => Ok(TruthSequence::zero("zero")),
        path => {
            let f = std::fs::File::open(path)?;
            TruthSequence::read_text(BufReader::new(f))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Radius {
            alpha,
            n,
            gamma,
            trunc,
            method,
            draws,
            seed,
        } => {
            let q = RadiusQuery {
                alpha,
                n,
                gamma,
                trunc,
                method: match method {
                    RadiusMethodArg::MonteCarlo => RadiusMethod::MonteCarlo,
                    RadiusMethodArg::Cumulant => RadiusMethod::CumulantApprox,
                },
                mc_draws: draws,
                tag: StreamTag::new(seed, "cli-radius").with_n(n),
            };
            let r = credible_radius(&q)?;
            let (lower, upper, n_min) = radius_bounds(alpha, alpha, n, gamma)?;
            println!("r={r} lower={lower} upper={upper} n_min={n_min}");
            Ok(())
        }
        Command::Estimate {
            truth,
            n,
            selector,
            d,
            c1,
            gamma,
            c0,
            seed,
            out,
        } => {
            let theta = load_truth(&truth)?;
            let mut cfg = EstimatorConfig::new(d, c1, gamma)?;
            cfg.c0_override = c0;
            let trunc = experiments::observation_truncation(n, d, theta.support())?;
            let x = sample_observation(
                &theta,
                n,
                trunc,
                &StreamTag::new(seed, "cli-estimate").with_n(n),
            )?;
            let sel = match selector {
                SelectorArg::Mle => credible::estimators::mle_alpha(&x, &cfg)?,
                SelectorArg::Risk => credible::estimators::risk_alpha(&x, &cfg)?,
            };
            println!("alpha={}", sel.alpha);
            if let Some(path) = out {
                let mut f = std::fs::File::create(&path)?;
                experiments::write_diagnostics_csv(&sel.diagnostics, &mut f)?;
                println!("diagnostics={}", path.display());
            }
            Ok(())
        }
        Command::Coverage { config, out } => {
            let cfg = experiments::load_experiment_config(&config)?;
            let report = experiments::coverage_experiment(&cfg)?;
            let dest = out.or_else(|| {
                cfg.output_dir
                    .as_ref()
                    .map(|dir| dir.join("coverage.csv"))
            });
            match dest {
                Some(path) => {
                    if let Some(parent) = path.parent() {
                        std::fs::create_dir_all(parent)?;
                    }
                    let mut f = std::fs::File::create(&path)?;
                    experiments::write_coverage_csv(&report, &mut f)?;
                }
                None => {
                    experiments::write_coverage_csv(&report, std::io::stdout().lock())?;
                }
            }
            for agg in &report.aggregates {
                eprintln!(
                    "n={} coverage={:.4} (se={:.4}) mean_radius={:.6} median_radius={:.6}",
                    agg.n, agg.coverage, agg.coverage_se, agg.mean_radius, agg.median_radius
                );
            }
            Ok(())
        }
        Command::Figures { config } => {
            let cfg = experiments::load_figure_config(&config)?;
            let written = experiments::reproduce_figures(&cfg)?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::CheckBounds => {
            let mut failures = 0usize;
            for k in [0.5f64, 1.0, 2.0, 4.0] {
                for m in [0.0f64, 1.0, 2.0] {
                    for n in [64usize, 256, 1024, 4096] {
                        if (n as f64) < (2.0 * m / k).exp() {
                            continue;
                        }
                        let (exact, bound) = credible::bounds::tail_sum_bound(n, k, m)?;
                        if exact > bound {
                            eprintln!("tail_sum_bound violated at k={k} m={m} N={n}");
                            failures += 1;
                        }
                    }
                }
            }
            for d in [0.5, 1.0, 1.5] {
                for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
                    let alpha = d + d * frac;
                    for big_k in [0.1, 0.5, 1.0, 2.0] {
                        for n in [1e4, 1e6, 1e8] {
                            if !credible::bounds::f_n_shift_bounds(alpha, n, big_k, d)? {
                                eprintln!(
                                    "f_n_shift_bounds violated at alpha={alpha} K={big_k} n={n} D={d}"
                                );
                                failures += 1;
                            }
                        }
                    }
                }
            }
            if failures > 0 {
                return Err(Error::Precision(format!("{failures} bound violations")));
            }
            println!("all bound sweeps passed");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    experiments::init_thread_pool();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
