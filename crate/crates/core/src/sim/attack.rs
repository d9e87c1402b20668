use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Misbehavior injected at a node once the training epoch is over.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AttackKind {
    /// Answers requests with a forged reply whose destination sequence number
    /// is `delta` above the freshest one it has seen, raises relayed replies
    /// the same way, and swallows all data.
    BlackHole { delta: u64 },
    /// Adds `delta` to the destination sequence number of relayed replies.
    SeqInflation { delta: u64 },
    /// Drops each data packet with probability `p` and logs nothing for it.
    PassiveDrop { p: f64 },
    /// Forwards correctly but commits entries naming a fabricated previous
    /// hop, for a fraction `p` of data packets.
    LogForgery { p: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum AttackParseError {
    #[error("unknown attack kind `{0}`")]
    UnknownKind(String),
    #[error("bad attack parameter `{0}`")]
    BadParam(String),
    #[error("attack parameter out of range: {0}")]
    OutOfRange(String),
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::BlackHole { .. } => "black_hole",
            AttackKind::SeqInflation { .. } => "seq_inflation",
            AttackKind::PassiveDrop { .. } => "passive_drop",
            AttackKind::LogForgery { .. } => "log_forgery",
        }
    }

    /// Parses `<kind>:<param>`.
    pub fn parse(kind: &str, param: &str) -> Result<AttackKind, AttackParseError> {
        let bad = || AttackParseError::BadParam(param.to_string());
        let attack = match kind {
            "black_hole" | "blackhole" => AttackKind::BlackHole {
                delta: param.parse().map_err(|_| bad())?,
            },
            "seq_inflation" => AttackKind::SeqInflation {
                delta: param.parse().map_err(|_| bad())?,
            },
            "passive_drop" => AttackKind::PassiveDrop {
                p: param.parse().map_err(|_| bad())?,
            },
            "log_forgery" => AttackKind::LogForgery {
                p: param.parse().map_err(|_| bad())?,
            },
            other => return Err(AttackParseError::UnknownKind(other.to_string())),
        };
        attack.validate()?;
        Ok(attack)
    }

    pub fn validate(&self) -> Result<(), AttackParseError> {
        match *self {
            AttackKind::BlackHole { delta } | AttackKind::SeqInflation { delta } if delta == 0 => {
                Err(AttackParseError::OutOfRange(format!("{}: delta must be > 0", self.name())))
            }
            AttackKind::PassiveDrop { p } | AttackKind::LogForgery { p } if !(p > 0.0 && p <= 1.0) => {
                Err(AttackParseError::OutOfRange(format!("{}: p must be in (0, 1]", self.name())))
            }
            _ => Ok(()),
        }
    }

    fn param(&self) -> String {
        match *self {
            AttackKind::BlackHole { delta } | AttackKind::SeqInflation { delta } => delta.to_string(),
            AttackKind::PassiveDrop { p } | AttackKind::LogForgery { p } => p.to_string(),
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name(), self.param())
    }
}

impl FromStr for AttackKind {
    type Err = AttackParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, param) = s.split_once(':').ok_or_else(|| AttackParseError::BadParam(s.to_string()))?;
        AttackKind::parse(kind.trim(), param.trim())
    }
}
