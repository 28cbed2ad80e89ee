use std::path::PathBuf;
use std::process::ExitCode;

use ccyield::{compare, read_results, CliError, Run, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ccyield", version, about = "Chance-constrained yield-aware design optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    config: Option<PathBuf>,
    #[arg(long = "config", value_name = "PATH")]
    config_flag: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for simulation batches and solver starts.
    #[arg(long)]
    workers: Option<usize>,
    /// Replaces every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the design, noise and joint quadrature rules.
    Quadrature(Common),
    /// Simulate at the joint rule and fit the surrogate.
    Surrogate(Common),
    /// Full pipeline: surrogate, chance-constrained solve, Monte Carlo validation.
    Optimize(Common),
    /// Monte Carlo yield at a design (defaults to x* from results.json in the output directory).
    Yield {
        #[command(flatten)]
        common: Common,
        /// Comma-separated design point.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        design: Option<Vec<f64>>,
    },
    /// Kernel-density yield optimization baseline.
    Byo(Common),
    /// Tabulate two or more results.json files of the same problem.
    Compare {
        results: Vec<PathBuf>,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn prepare(common: &Common) -> Result<Run, CliError> {
    if let Some(n) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }
    let path = common
        .config_flag
        .as_ref()
        .or(common.config.as_ref())
        .ok_or_else(|| CliError::Config("no configuration file given".into()))?;
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = common.seed {
        config.override_seed(seed);
    }
    config.build_problem(true)?;
    Run::new(config, common.out.clone())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Quadrature(c) => {
            let rules = prepare(&c)?.quadrature()?;
            println!(
                "design {} points, noise {} points, joint {} points (residual {:e})",
                rules.design.len(),
                rules.noise.len(),
                rules.joint.len(),
                rules.joint.residual_l1
            );
        }
        Command::Surrogate(c) => {
            let (rules, _) = prepare(&c)?.surrogate()?;
            println!("surrogate fitted from {} simulations", rules.joint.len());
        }
        Command::Optimize(c) => {
            let r = prepare(&c)?.optimize()?;
            println!(
                "x* = {:?}\nobjective {:.6}, yield {:.4} ({} samples), {} simulations",
                r.x_star, r.objective, r.validation.yield_fraction, r.validation.samples, r.simulations.optimization
            );
        }
        Command::Yield { common, design } => {
            let run = prepare(&common)?;
            let x = match design {
                Some(x) => x,
                None => read_results(&run.out.join("results.json"))
                    .map_err(|e| CliError::Config(format!("no --design and no usable results.json: {e}")))?
                    .x_star,
            };
            let y = run.yield_at(&x)?;
            println!("yield {:.4} ± {:.4} over {} samples", y.yield_fraction, y.standard_error(), y.samples);
        }
        Command::Byo(c) => {
            let r = prepare(&c)?.byo()?;
            println!(
                "x = {:?}\nexpected objective {:.6}, yield {:.4}, {} simulations",
                r.x_star, r.objective, r.validation.yield_fraction, r.simulations.optimization
            );
        }
        Command::Compare { results, out } => {
            let loaded = results.iter().map(|p| read_results(p)).collect::<Result<Vec<_>, _>>()?;
            let table = compare(&loaded)?;
            if let Some(path) = out {
                std::fs::write(&path, &table).map_err(|source| CliError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            }
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
