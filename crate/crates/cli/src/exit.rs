use std::process::ExitCode;

use promst::feedback::FeedbackError;
use promst::generator::GenError;
use promst::llm::LlmError;
use promst::surrogate::SurrogateError;
use promst::trial::TrialError;
use promst::{ConfigError, LedgerError, OptimizeError};
use promst_envs::EnvError;

pub const USAGE: u8 = 2;
pub const BACKEND: u8 = 3;
pub const INTERNAL: u8 = 4;

/// Bad input named by the user: missing files, malformed options.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn llm(e: &LlmError) -> u8 {
    match e {
        LlmError::Config(_) | LlmError::Io(_) => USAGE,
        _ => BACKEND,
    }
}

fn ledger(e: &LedgerError) -> u8 {
    match e {
        LedgerError::Duplicate(_) | LedgerError::Invalid { .. } => INTERNAL,
        _ => USAGE,
    }
}

fn surrogate(e: &SurrogateError) -> u8 {
    match e {
        SurrogateError::Adapter(_) | SurrogateError::Timeout { .. } | SurrogateError::Io(_) => BACKEND,
        _ => INTERNAL,
    }
}

fn env(e: &EnvError) -> u8 {
    match e {
        EnvError::EpisodeDone => INTERNAL,
        _ => USAGE,
    }
}

fn trial(e: &TrialError) -> u8 {
    match e {
        TrialError::Llm(e) => llm(e),
        TrialError::Env(e) => env(e),
        TrialError::Io(_) => USAGE,
        TrialError::Feedback(_) | TrialError::Pool(_) => INTERNAL,
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<OptimizeError>() {
            return match e {
                OptimizeError::Config(_)
                | OptimizeError::EmptyPrompt
                | OptimizeError::NothingToResume
                | OptimizeError::Progress { .. } => USAGE,
                OptimizeError::Llm(e) => llm(e),
                OptimizeError::Trial(e) => trial(e),
                OptimizeError::Gen(GenError::Meta(_)) => USAGE,
                OptimizeError::Gen(GenError::Llm(e)) => llm(e),
                OptimizeError::Gen(_) => INTERNAL,
                OptimizeError::Ledger(e) => ledger(e),
                OptimizeError::Surrogate(e) => surrogate(e),
            };
        }
        if let Some(e) = cause.downcast_ref::<TrialError>() {
            return trial(e);
        }
        if let Some(e) = cause.downcast_ref::<LlmError>() {
            return llm(e);
        }
        if let Some(e) = cause.downcast_ref::<LedgerError>() {
            return ledger(e);
        }
        if let Some(e) = cause.downcast_ref::<EnvError>() {
            return env(e);
        }
        if cause.is::<UsageError>()
            || cause.is::<ConfigError>()
            || cause.is::<FeedbackError>()
            || cause.is::<GenError>()
            || cause.is::<std::io::Error>()
            || cause.is::<serde_json::Error>()
        {
            return USAGE;
        }
    }
    INTERNAL
}

pub fn report(err: &anyhow::Error) -> ExitCode {
    eprintln!("error: {err:#}");
    ExitCode::from(classify(err))
}
