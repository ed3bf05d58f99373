//! Config-driven experiments over molecular relay chains, emitting CSV.

pub mod config;
pub mod csv;
pub mod experiments;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind};
pub use experiments::{run, Outcome, RunError};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 1;
    pub const NUMERICAL: u8 = 2;
}

/// Worker cap from `MOLRELAY_THREADS`, if set.
pub fn thread_cap(value: Option<&str>) -> Result<Option<usize>, ConfigError> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(ConfigError::field(
                "MOLRELAY_THREADS",
                format!("expected a positive integer, got `{v}`"),
            )),
        },
    }
}
