use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use thzcov::{config, execute, read_config, resolve, write, CliError, Command, Overrides};

#[derive(Parser)]
#[command(name = "thzcov", version, about = "Coverage and beam-training analysis of indoor THz AP grids")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the closed forms of an experiment
    Analyze(Common),
    /// Estimate an experiment by Monte Carlo
    Simulate(Common),
    /// Compare closed forms with simulation row by row
    Validate(Common),
    /// Run the configured sweep (analytic, plus simulation if sim.enabled)
    Sweep(Common),
    /// Beam-training stage count across array sizes
    Beamtrain(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// CSV output path (default: standard output)
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials per point
    #[arg(long)]
    trials: Option<u64>,
    /// Topologies, comma separated (square, hexagonal, ppp, all)
    #[arg(long)]
    topology: Option<String>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// More log output (repeatable)
    #[arg(long, short, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn run(command: Command, c: Common) -> Result<(), CliError> {
    if let Some(n) = c.threads {
        // fails only if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let text = read_config(c.config.as_deref())?;
    let ov = Overrides {
        out: c.out,
        seed: c.seed,
        trials: c.trials,
        topology: c.topology,
    };
    let cfg = resolve(command, &text, &ov)?;
    let rendered = execute(command, &cfg)?;
    if let Some(csv) = write(&cfg, &rendered)? {
        let mut out = std::io::stdout().lock();
        out.write_all(csv.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|source| CliError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })?;
    }
    match rendered.report.failures() {
        0 => Ok(()),
        failed => Err(CliError::ValidationFailed {
            failed,
            total: rendered.report.rows.len(),
        }),
    }
}

fn main() -> ExitCode {
    let keys = config::keys_help();
    let mut cmd = Cli::command().after_long_help(keys.clone());
    for name in ["analyze", "simulate", "validate", "sweep", "beamtrain"] {
        let k = keys.clone();
        cmd = cmd.mut_subcommand(name, move |s| s.after_long_help(k));
    }
    let cli = match Cli::from_arg_matches(&cmd.get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let (command, common) = match cli.command {
        Cmd::Analyze(c) => (Command::Analyze, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Validate(c) => (Command::Validate, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Beamtrain(c) => (Command::Beamtrain, c),
    };
    let level = match common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(command, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
