//! Discrete-event simulation of a mobile ad hoc network.

pub mod attack;
pub mod config;
pub mod engine;
pub mod mobility;

pub use attack::{AttackKind, AttackParseError};
pub use config::{ConfigError, ScenarioConfig};
pub use engine::{run, CapturedHeader, FlowAccount, RunError, RunOptions, RunOutput, TRACE_HEADER};
