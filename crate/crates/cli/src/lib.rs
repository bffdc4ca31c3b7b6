//! The `ringkit` command line: graph building, corpus statistics, training,
//! evaluation, prediction and gradient checks.
//!
//! Machine-readable results go to stdout (or `--out`); logs go to stderr.
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric-check failure.

mod args;
mod commands;

use std::ffi::OsString;

use clap::Parser;
use ringkit_core::hiergraph::HierGraphError;
use ringkit_core::model::ModelError;
use ringkit_core::tensor::TensorError;
use ringkit_core::train::TrainError;
use thiserror::Error;

pub use args::{Cli, Command};

#[derive(Debug, Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::MissingColumn(_) | TrainError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            TrainError::Model(ModelError::InvalidConfig(_)) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<HierGraphError> for Failure {
    fn from(e: HierGraphError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        TrainError::from(e).into()
    }
}

impl From<TensorError> for Failure {
    fn from(e: TensorError) -> Self {
        Failure::Data(e.to_string())
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::BuildGraphs(a) => commands::build_graphs(&a),
        Command::Stats(a) => commands::stats(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(Failure::from(TrainError::MissingColumn("y".into())).exit_code(), 1);
        assert_eq!(Failure::from(TrainError::EmptyDataset).exit_code(), 2);
        assert_eq!(Failure::from(ModelError::InvalidConfig("heads".into())).exit_code(), 1);
        assert_eq!(Failure::Numeric("x".into()).exit_code(), 3);
    }
}
