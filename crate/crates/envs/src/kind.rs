use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Gridworld1,
    Gridworld2,
    Blocksworld,
    Logistics,
    Boxlift,
    Boxnet1,
    Boxnet2,
    Warehouse,
}

impl EnvKind {
    pub const ALL: [EnvKind; 8] = [
        EnvKind::Gridworld1,
        EnvKind::Gridworld2,
        EnvKind::Blocksworld,
        EnvKind::Logistics,
        EnvKind::Boxlift,
        EnvKind::Boxnet1,
        EnvKind::Boxnet2,
        EnvKind::Warehouse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Gridworld1 => "gridworld1",
            EnvKind::Gridworld2 => "gridworld2",
            EnvKind::Blocksworld => "blocksworld",
            EnvKind::Logistics => "logistics",
            EnvKind::Boxlift => "boxlift",
            EnvKind::Boxnet1 => "boxnet1",
            EnvKind::Boxnet2 => "boxnet2",
            EnvKind::Warehouse => "warehouse",
        }
    }

    /// The error types that can terminate a trial in this environment.
    ///
    /// `syntactic`, `stuck_in_loop` and `query_limit` are shared by every task;
    /// the rest are task specific.
    pub fn error_vocabulary(self) -> &'static [ErrorKind] {
        use ErrorKind::*;
        match self {
            EnvKind::Boxnet1 | EnvKind::Boxlift => &[Syntactic, StuckInLoop, QueryLimit],
            EnvKind::Boxnet2 | EnvKind::Warehouse => &[Syntactic, StuckInLoop, QueryLimit, Collision],
            EnvKind::Gridworld1 => &[Syntactic, StuckInLoop, QueryLimit, Collision, OutOfGrid],
            EnvKind::Gridworld2 => &[Syntactic, StuckInLoop, QueryLimit, Collision, OutOfGrid, WrongOrder],
            EnvKind::Blocksworld => &[Syntactic, StuckInLoop, QueryLimit, InvalidAction],
            EnvKind::Logistics => &[Syntactic, StuckInLoop, QueryLimit, InvalidAction, WrongObject],
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown environment `{s}`"))
    }
}

/// Classified failure of a step or a whole trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Syntactic,
    InvalidAction,
    Collision,
    OutOfGrid,
    WrongOrder,
    /// An action names an object of the wrong type (e.g. driving an airplane).
    WrongObject,
    StuckInLoop,
    QueryLimit,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 8] = [
        ErrorKind::Syntactic,
        ErrorKind::InvalidAction,
        ErrorKind::Collision,
        ErrorKind::OutOfGrid,
        ErrorKind::WrongOrder,
        ErrorKind::WrongObject,
        ErrorKind::StuckInLoop,
        ErrorKind::QueryLimit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Syntactic => "syntactic",
            ErrorKind::InvalidAction => "invalid_action",
            ErrorKind::Collision => "collision",
            ErrorKind::OutOfGrid => "out_of_grid",
            ErrorKind::WrongOrder => "wrong_order",
            ErrorKind::WrongObject => "wrong_object",
            ErrorKind::StuckInLoop => "stuck_in_loop",
            ErrorKind::QueryLimit => "query_limit",
        }
    }

    /// Errors raised by an environment step, as opposed to the trial runner.
    pub fn is_step_error(self) -> bool {
        !matches!(self, ErrorKind::StuckInLoop | ErrorKind::QueryLimit)
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| format!("unknown error type `{s}`"))
    }
}
