//! Error taxonomy of the pipeline, with a stable mapping to exit codes.
//!
//! Exit codes: `0` success, `2` a synthesis program was infeasible, `3` a
//! verification or guarantee check failed, `4` configuration or I/O
//! trouble. Every error prints a single machine-readable JSON line on
//! stderr before the process exits.

use etcsynth::dataset::DatasetError;
use etcsynth::lmi::LmiError;
use etcsynth::sim::SimError;
use etcsynth::synthesis::SynthesisError;
use etcsynth::triggers::TriggerError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// A synthesis program reported infeasibility: the data does not
    /// support the requested guarantee.
    #[error("{0}")]
    Infeasible(String),
    /// A certificate, guarantee, or re-verification check failed.
    #[error("{0}")]
    Verification(String),
    /// Bad configuration, malformed files, or filesystem trouble.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Verification(_) => EXIT_VERIFY,
            CliError::Io(_) => EXIT_IO,
        }
    }

    /// One-line JSON report for scripting: `{"error": ..., "exit": N}`.
    pub fn machine_line(&self) -> String {
        serde_json::json!({ "error": self.to_string(), "exit": self.exit_code() }).to_string()
    }
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::StabilizationInfeasible
            | SynthesisError::RobustInfeasible
            | SynthesisError::MixedTriggerInfeasible
            | SynthesisError::TriggerInfeasible => CliError::Infeasible(e.to_string()),
            SynthesisError::InvalidParameter(_)
            | SynthesisError::WrongRegime(_)
            | SynthesisError::MixedMietUndefined => CliError::Io(e.to_string()),
            SynthesisError::DataNotRich
            | SynthesisError::Unsolvable
            | SynthesisError::Numerical(_) => CliError::Verification(e.to_string()),
            SynthesisError::Lmi(inner) => match inner {
                LmiError::Malformed(_) => CliError::Io(inner.to_string()),
                _ => CliError::Verification(inner.to_string()),
            },
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Io(format!("experiment data: {e}"))
    }
}

impl From<TriggerError> for CliError {
    fn from(e: TriggerError) -> Self {
        CliError::Io(format!("trigger parameters: {e}"))
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) | SimError::Trigger(_) | SimError::Data(_) => {
                CliError::Io(format!("simulation setup: {e}"))
            }
            SimError::Io(msg) => CliError::Io(msg),
            SimError::Diverged | SimError::EventBudget | SimError::InsufficientEvents => {
                CliError::Verification(format!("simulation: {e}"))
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(format!("design report: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(CliError::from(SynthesisError::RobustInfeasible).exit_code(), 2);
        assert_eq!(CliError::from(SynthesisError::StabilizationInfeasible).exit_code(), 2);
        assert_eq!(CliError::from(SynthesisError::DataNotRich).exit_code(), 3);
        assert_eq!(CliError::from(SimError::Diverged).exit_code(), 3);
        assert_eq!(CliError::from(SimError::InvalidConfig("x")).exit_code(), 4);
        assert_eq!(CliError::from(SynthesisError::InvalidParameter("x")).exit_code(), 4);
    }

    #[test]
    fn machine_line_is_json_with_exit_code() {
        let line = CliError::Verification("closure residual too large".into()).machine_line();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["exit"], 3);
        assert!(v["error"].as_str().unwrap().contains("closure"));
    }
}
