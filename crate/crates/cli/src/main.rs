use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use disentangle::environments::{generate_scenario, Method, ScenarioSpec};
use disentangle::harness::{self, Execution, ExperimentConfig};
use disentangle::Mode;

/// Probabilistic object-disentangling benchmark.
#[derive(Parser)]
#[command(name = "disentangle", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid and write CSV results and dumps.
    Run(RunArgs),
    /// Render success charts and 2-D map snapshots from a results directory.
    Plot {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        /// Emit SVG files (the only supported format).
        #[arg(long, default_value_t = true)]
        svg: bool,
    },
    /// Print the text summary of a results directory.
    Report {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
    },
    /// Generate one random scenario and print it as JSON.
    Scenario {
        #[arg(long, default_value = "2d")]
        mode: Mode,
        #[arg(long, default_value_t = 10)]
        obstacles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// 2d, 3d or 3d-orient.
    #[arg(long, default_value = "2d")]
    mode: Mode,
    /// Obstacle counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,10,30,50")]
    obstacles: Vec<usize>,
    /// Trials per obstacle count.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Methods, comma separated: probabilistic[:C_FAIL], hard:TAU, epsilon:EPS.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "probabilistic,hard:0.01,hard:0.02,epsilon:0.2,epsilon:0.4"
    )]
    methods: Vec<Method>,
    /// Maximum executed paths per trial.
    #[arg(long, default_value_t = 20)]
    budget: usize,
    /// Base seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Run trials one after another instead of on the thread pool.
    #[arg(long)]
    sequential: bool,
    /// Skip scenario, map and trace dumps.
    #[arg(long)]
    no_dumps: bool,
    /// Use compliant failure detection.
    #[arg(long)]
    compliant: bool,
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::new(args.mode, args.obstacles, args.trials, args.methods);
    cfg.budget = args.budget;
    cfg.base_seed = args.seed;
    cfg.dumps = !args.no_dumps;
    cfg.compliant = args.compliant;
    let exec = if args.sequential { Execution::Sequential } else { Execution::Parallel };
    let out = harness::run_experiment(&cfg, exec).context("experiment failed")?;
    out.write_to(&args.out)
        .with_context(|| format!("writing results to {}", args.out.display()))?;
    let redraws: usize = out
        .trials
        .iter()
        .filter(|t| t.method == out.trials[0].method)
        .map(|t| t.redraws)
        .sum();
    eprintln!(
        "wrote {} trials ({} infeasible scenario redraws) to {}",
        out.trials.len(),
        redraws,
        args.out.display()
    );
    print!("{}", harness::summarize(&out.results));
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
        Command::Plot { input, svg } => {
            if !svg {
                bail!("only SVG output is supported");
            }
            for file in harness::plot_dir(&input).with_context(|| format!("plotting {}", input.display()))? {
                println!("{}", file.display());
            }
            Ok(())
        }
        Command::Report { input } => {
            let table = harness::load_results(&input).with_context(|| format!("reading {}", input.display()))?;
            print!("{}", harness::summarize(&table));
            Ok(())
        }
        Command::Scenario { mode, obstacles, seed } => {
            let env = generate_scenario(&ScenarioSpec::new(mode, obstacles), seed).context("generating scenario")?;
            println!("{}", env.to_json());
            Ok(())
        }
    }
}
