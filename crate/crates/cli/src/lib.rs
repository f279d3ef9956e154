//! Command-line front end: configuration, experiment runners and result files.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};

use thiserror::Error;
use toml::Value;

use thzcov_core::analysis::AnalysisError;
use thzcov_core::beamtrain::TrainingError;
use thzcov_core::simulate::SimError;

pub use config::{ConfigError, ConfigValues, RunConfig};
pub use experiments::{Mode, Report, ResultRow};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{failed} of {total} rows differ by more than the tolerance")]
    ValidationFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Sim(SimError::TooFewTrials(_)) => 2,
            CliError::Analysis(_) | CliError::Training(_) | CliError::Sim(_) => 3,
            CliError::Io { .. } => 4,
            CliError::ValidationFailed { .. } => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Simulate,
    Validate,
    Sweep,
    Beamtrain,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Simulate => "simulate",
            Command::Validate => "validate",
            Command::Sweep => "sweep",
            Command::Beamtrain => "beamtrain",
        }
    }
}

/// Command-line settings that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub topology: Option<String>,
}

fn set(values: &mut ConfigValues, key: &str, v: Value) -> Result<(), ConfigError> {
    values.set(key, v)
}

/// Resolves the configuration for `command` from file text and overrides.
pub fn resolve(command: Command, text: &str, ov: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut values = ConfigValues::parse(text)?;
    let int = |n: u64| Value::Integer(i64::try_from(n).unwrap_or(i64::MAX));
    if let Some(p) = &ov.out {
        set(&mut values, "output.path", Value::String(p.to_string_lossy().into_owned()))?;
    }
    if let Some(s) = ov.seed {
        set(&mut values, "sim.seed", int(s))?;
    }
    if let Some(n) = ov.trials {
        set(&mut values, "sim.n_trials", int(n))?;
    }
    if let Some(t) = &ov.topology {
        let list = t.split(',').map(|s| Value::String(s.trim().to_string())).collect();
        set(&mut values, "topology", Value::Array(list))?;
    }
    let forced = match command {
        Command::Beamtrain => Some("training_vs_array"),
        Command::Validate => Some("validate"),
        _ => None,
    };
    if let Some(name) = forced {
        if !values.is_set("experiment.name") {
            set(&mut values, "experiment.name", Value::String(name.into()))?;
        } else if command == Command::Beamtrain
            && values.get("experiment.name").and_then(Value::as_str) != Some("training_vs_array")
        {
            return Err(ConfigError::Invalid {
                key: "experiment.name".into(),
                msg: "the beamtrain command runs training_vs_array".into(),
            });
        }
    }
    RunConfig::from_values(values)
}

pub fn mode_for(command: Command, cfg: &RunConfig) -> Mode {
    match command {
        Command::Analyze | Command::Beamtrain => Mode::ANALYZE,
        Command::Simulate => Mode::SIMULATE,
        Command::Validate => Mode::VALIDATE,
        Command::Sweep if cfg.sim.enabled => Mode::BOTH,
        Command::Sweep => Mode::ANALYZE,
    }
}

/// Output of one run, rendered.
pub struct Rendered {
    pub report: Report,
    pub csv: String,
    pub json: Option<String>,
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Rendered, CliError> {
    let report = experiments::run(cfg, mode_for(command, cfg))?;
    let meta = output::metadata(command.name(), &cfg.values.resolved_lines(), &report.notes);
    let csv = output::render_csv(&meta, &report);
    let json = cfg.json.then(|| output::render_json(&meta, &report));
    Ok(Rendered { report, csv, json })
}

/// Writes the rendered run to the configured path, or returns the CSV for stdout.
pub fn write(cfg: &RunConfig, r: &Rendered) -> Result<Option<String>, CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    match &cfg.output {
        Some(path) => {
            output::write_atomic(path, &r.csv).map_err(io(path))?;
            let jp = output::json_path(path);
            if let Some(j) = &r.json {
                output::write_atomic(&jp, j).map_err(io(&jp))?;
            }
            Ok(None)
        }
        None => Ok(Some(r.csv.clone())),
    }
}

pub fn read_config(path: Option<&Path>) -> Result<String, CliError> {
    match path {
        None => Ok(String::new()),
        Some(p) => std::fs::read_to_string(p).map_err(|source| CliError::Io {
            path: p.to_path_buf(),
            source,
        }),
    }
}
