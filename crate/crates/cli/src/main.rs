use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use safepriv::allocator::{allocate, f_of_a, r_of_a, verify_unimprovable, BudgetInputs};
use safepriv::geometry::{self, io::read_polytope, io::write_polytope};
use safepriv::harness::{
    reproduce_experiment, run_sweep, ExperimentConfig, Normalization, ReproduceOptions,
};

#[derive(Parser)]
#[command(name = "safepriv", version, about = "Safe multi-agent linear bandits with local privacy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every privacy vector and seed of a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the three-setup comparison of privacy orderings.
    Reproduce {
        #[arg(long)]
        out: PathBuf,
        /// Fixed exploration length.
        #[arg(long)]
        t_prime: Option<usize>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, default_value_t = 30_000)]
        horizon: usize,
        #[arg(long, value_enum, default_value_t = Norm::PerRound)]
        normalization: Norm,
    },
    /// Privacy levels meeting a budget on the regret constant.
    Allocate {
        #[arg(long)]
        input: PathBuf,
        /// Random perturbations used to check unimprovability.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Shrinkage queries on a polytope file.
    Geometry {
        #[arg(value_enum)]
        query: Query,
        #[arg(long)]
        polytope: PathBuf,
        #[arg(long)]
        delta: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Norm {
    PerRound,
    WorstFinal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Query {
    Sharpness,
    Shrink,
    MaxShrinkage,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = ExperimentConfig::read(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let (summaries, _) = run_sweep(&[cfg], Some(&out))?;
            for s in summaries {
                println!(
                    "{} {} seed {}: regret {:.6} violations {} coverage {:.4} bound {:.3}",
                    s.setup_id,
                    s.privacy_vector_id,
                    s.seed,
                    s.final_cum_regret,
                    s.violations_total,
                    s.coverage_fraction,
                    s.bound_value
                );
            }
        }
        Command::Reproduce {
            out,
            t_prime,
            seeds,
            horizon,
            normalization,
        } => {
            if seeds == 0 {
                bail!("--seeds must be positive");
            }
            let opts = ReproduceOptions {
                horizon,
                n_seeds: seeds,
                t_prime,
                normalization: match normalization {
                    Norm::PerRound => Normalization::PerRoundOptimum,
                    Norm::WorstFinal => Normalization::WorstFinal,
                },
            };
            let rep = reproduce_experiment(Some(&out), &opts)?;
            println!("final averaged normalized regret:");
            for c in &rep.curves {
                println!("  {:<12} {:.6} ± {:.6}", c.vector_id, c.final_mean, c.final_stderr);
            }
            println!("wrote {} runs to {}", rep.summaries.len(), out.display());
        }
        Command::Allocate {
            input,
            samples,
            seed,
        } => {
            let text = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let inputs: BudgetInputs = toml::from_str(&text).context("parsing budget inputs")?;
            inputs.validate()?;
            let a = allocate(&inputs)?;
            let r = r_of_a(&a, &inputs)?;
            let f = f_of_a(&a, &inputs.c, inputs.r, inputs.sigma)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rep = verify_unimprovable(&a, &inputs, samples, &mut rng)?;
            println!("alpha = {:?}", a.a);
            println!("r = {r}");
            println!("f = {f}");
            println!("equality_rel_err = {:e}", rep.equality_rel_err);
            println!("samples = {}", rep.samples);
            println!("counterexamples = {}", rep.counterexamples);
            println!("worst_margin = {:e}", rep.worst_margin);
            println!("verified = {}", rep.passed);
            if !rep.passed {
                bail!("unimprovability check failed");
            }
        }
        Command::Geometry {
            query,
            polytope,
            delta,
        } => {
            let poly = read_polytope(&polytope)
                .with_context(|| format!("reading {}", polytope.display()))?;
            let need_delta = || delta.context("--delta is required for this query");
            match query {
                Query::MaxShrinkage => println!("{}", geometry::max_shrinkage(&poly)?),
                Query::Sharpness => println!("{}", geometry::sharpness(&poly, need_delta()?)?),
                Query::Shrink => {
                    let shrunk = geometry::shrink(&poly, need_delta()?)?;
                    if shrunk.is_empty()? {
                        println!("# empty");
                    }
                    print!("{}", write_polytope(&shrunk)?);
                }
            }
        }
    }
    Ok(())
}
