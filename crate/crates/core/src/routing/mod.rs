//! Per-node routing for TAP3 and the MPRF / S-MPRF baselines.

pub mod packet;
pub mod paths;
pub mod router;
mod source;

use std::fmt;
use std::str::FromStr;

pub use packet::{contains_node_id, Address, Packet, PacketKind, PacketMeta};
pub use paths::{select_paths, Path, RouteEntry, RouteError, Trust};
pub use router::{Action, Ctx, DropCause, Flow, Logbook, MonitorStats, Router, RouterConfig, SentRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolKind {
    Tap3,
    SMprf,
    Mprf,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [ProtocolKind::Tap3, ProtocolKind::SMprf, ProtocolKind::Mprf];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Tap3 => "tap3",
            ProtocolKind::SMprf => "smprf",
            ProtocolKind::Mprf => "mprf",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unknown protocol `{0}` (expected tap3, smprf or mprf)")]
pub struct UnknownProtocol(pub String);

impl FromStr for ProtocolKind {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "tap3" => Ok(ProtocolKind::Tap3),
            "smprf" => Ok(ProtocolKind::SMprf),
            "mprf" => Ok(ProtocolKind::Mprf),
            _ => Err(UnknownProtocol(s.to_string())),
        }
    }
}
