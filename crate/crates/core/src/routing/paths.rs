use std::collections::BTreeSet;

use thiserror::Error;

use super::packet::Address;
use super::ProtocolKind;
use crate::crypto::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trust {
    Normal,
    Suspect,
}

/// A next-hop entry, keyed elsewhere by the fellow's alias.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RouteEntry {
    pub fellow_alias: Address,
    pub next_hop: NodeId,
    pub path_id: u8,
    pub trust: Trust,
    pub established_at: f64,
}

/// One discovered source-to-destination path as the source sees it.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    /// Unique per flow, never reused.
    pub serial: u64,
    pub path_id: u8,
    /// Intermediaries in order, source and destination excluded.
    pub nodes: Vec<NodeId>,
    pub discovered_at: f64,
    pub dseq: u64,
    /// Aliases the data on this path carries (destination side, source side).
    pub forward: Address,
    pub reverse: Address,
    pub broken: bool,
}

impl Path {
    pub fn hop_count(&self) -> usize {
        self.nodes.len() + 1
    }

    pub fn contains_any(&self, nodes: &BTreeSet<NodeId>) -> bool {
        self.nodes.iter().any(|n| nodes.contains(n))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RouteError {
    #[error("no usable path")]
    NoUsablePath,
}

/// Usable paths, shortest first then earliest discovered. TAP3 drops every
/// path through a distrusted node; the baselines have no trust layer and use
/// only the best path.
pub fn select_paths(
    protocol: ProtocolKind,
    discovered: &[Path],
    distrusted: &BTreeSet<NodeId>,
) -> Result<Vec<Path>, RouteError> {
    let mut usable: Vec<Path> = discovered
        .iter()
        .filter(|p| !p.broken)
        .filter(|p| protocol != ProtocolKind::Tap3 || !p.contains_any(distrusted))
        .cloned()
        .collect();
    usable.sort_by(|a, b| {
        a.hop_count()
            .cmp(&b.hop_count())
            .then(a.discovered_at.total_cmp(&b.discovered_at))
            .then(a.serial.cmp(&b.serial))
    });
    if protocol != ProtocolKind::Tap3 {
        usable.truncate(1);
    }
    if usable.is_empty() {
        Err(RouteError::NoUsablePath)
    } else {
        Ok(usable)
    }
}

/// Applies the sequence-number rule to a freshly discovered path: a fresher
/// destination sequence number replaces everything older, a stale one is
/// ignored. Returns whether the path was kept.
pub fn admit_path(paths: &mut Vec<Path>, candidate: Path) -> bool {
    let best = paths.iter().filter(|p| !p.broken).map(|p| p.dseq).max();
    match best {
        Some(b) if candidate.dseq < b => false,
        Some(b) if candidate.dseq > b => {
            paths.clear();
            paths.push(candidate);
            true
        }
        _ => {
            paths.push(candidate);
            true
        }
    }
}

/// Round-robin cursor over a path set that may change between calls.
#[derive(Clone, Debug, Default)]
pub struct RoundRobin {
    next: usize,
}

impl RoundRobin {
    pub fn pick<'a>(&mut self, usable: &'a [Path]) -> Option<&'a Path> {
        if usable.is_empty() {
            return None;
        }
        let p = &usable[self.next % usable.len()];
        self.next = self.next.wrapping_add(1);
        Some(p)
    }
}
