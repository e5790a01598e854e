use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use storm_reach::config::RunConfig;
use storm_reach::pipeline::{cmd_all, cmd_fit, cmd_plan, cmd_simulate};
use storm_reach::scenario::{generate_scenario, write_scenario, ScenarioKind};

/// Plan aircraft trajectories through probabilistic thunderstorm forecasts.
#[derive(Parser, Debug)]
#[command(name = "storm-reach", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Gap,
    FarStart,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit forecast error and growth models from the archive.
    Fit(RunArgs),
    /// Build the storm field and solve for the policy.
    Plan(RunArgs),
    /// Roll out the saved policy.
    Simulate(RunArgs),
    /// Fit, plan and simulate.
    All(RunArgs),
    /// Write a synthetic scenario with its config.
    GenScenario {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.paths.output = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Fit(args) => {
            let cfg = load(&args)?;
            cmd_fit(&cfg)?;
            println!("models written to {}", cfg.models_path().display());
        }
        Command::Plan(args) => {
            let cfg = load(&args)?;
            let plan = cmd_plan(&cfg)?;
            println!("start value {:.6}", plan.summary.start_value);
        }
        Command::Simulate(args) => {
            let cfg = load(&args)?;
            let r = cmd_simulate(&cfg)?;
            println!(
                "{} rollouts: reached {}, storm {}, lost {}, timed out {}",
                r.n_rollouts, r.reached, r.storm_hit, r.lost, r.timed_out
            );
        }
        Command::All(args) => {
            let cfg = load(&args)?;
            let (plan, r) = cmd_all(&cfg)?;
            println!(
                "start value {:.6}; success {:.4} ± {:.4} over {} rollouts",
                plan.start_value, r.success_fraction, r.success_std_error, r.n_rollouts
            );
        }
        Command::GenScenario { kind, out, seed } => {
            let kind = match kind {
                Kind::Gap => ScenarioKind::Gap,
                Kind::FarStart => ScenarioKind::FarStart,
            };
            let scenario = generate_scenario(kind, seed)?;
            let path = write_scenario(&scenario, &out)?;
            println!("config written to {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let internal = e
                .downcast_ref::<storm_reach::Error>()
                .is_some_and(storm_reach::Error::is_internal);
            ExitCode::from(if internal { 3 } else { 2 })
        }
    }
}
