use std::collections::HashSet;

use thiserror::Error;

use super::merkle::{leaf_hash, Digest, InclusionProof, MerkleCommitment};
use crate::crypto::Pseudonym;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Event {
    Received,
    Forwarded,
    Replied,
    Dropped,
}

impl Event {
    pub fn code(self) -> u8 {
        match self {
            Event::Received => 1,
            Event::Forwarded => 2,
            Event::Replied => 3,
            Event::Dropped => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Event> {
        Some(match code {
            1 => Event::Received,
            2 => Event::Forwarded,
            3 => Event::Replied,
            4 => Event::Dropped,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Event::Received => "received",
            Event::Forwarded => "forwarded",
            Event::Replied => "replied",
            Event::Dropped => "dropped",
        }
    }

    pub fn parse(s: &str) -> Option<Event> {
        Some(match s {
            "received" => Event::Received,
            "forwarded" => Event::Forwarded,
            "replied" => Event::Replied,
            "dropped" => Event::Dropped,
            _ => return None,
        })
    }
}

/// One line of forwarding evidence kept by a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEntry {
    pub node_alias: Pseudonym,
    pub packet_id: u64,
    pub event: Event,
    pub sseq: u64,
    pub oseq: u64,
    pub dseq: u64,
    pub prev_hop_alias: Pseudonym,
    pub timestamp: f64,
}

/// Serialized length of one entry.
pub const ENTRY_BYTES: usize = 32 + 8 + 1 + 8 + 8 + 8 + 32 + 8;

impl LogEntry {
    /// Canonical bytes: fixed field order, big-endian integers, raw aliases,
    /// one-byte event code, timestamp as IEEE-754 bits.
    pub fn to_bytes(&self) -> [u8; ENTRY_BYTES] {
        let mut out = [0u8; ENTRY_BYTES];
        let mut at = 0;
        let mut put = |bytes: &[u8]| {
            out[at..at + bytes.len()].copy_from_slice(bytes);
            at += bytes.len();
        };
        put(self.node_alias.as_bytes());
        put(&self.packet_id.to_be_bytes());
        put(&[self.event.code()]);
        put(&self.sseq.to_be_bytes());
        put(&self.oseq.to_be_bytes());
        put(&self.dseq.to_be_bytes());
        put(self.prev_hop_alias.as_bytes());
        put(&self.timestamp.to_bits().to_be_bytes());
        out
    }

    pub fn leaf(&self) -> Digest {
        leaf_hash(&self.to_bytes())
    }

    fn key(&self) -> (Pseudonym, u64, Event) {
        (self.node_alias, self.packet_id, self.event)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogError {
    #[error("timestamp {got} precedes last entry at {last}")]
    TimestampRegression { last: f64, got: f64 },
    #[error("duplicate entry for packet {packet_id} ({event:?})")]
    Duplicate { packet_id: u64, event: Event },
}

/// A node's append-only log and its running commitment.
#[derive(Clone, Debug)]
pub struct NodeLog {
    entries: Vec<LogEntry>,
    keys: HashSet<(Pseudonym, u64, Event)>,
    commitment: MerkleCommitment,
}

impl Default for NodeLog {
    fn default() -> Self {
        NodeLog::new()
    }
}

impl NodeLog {
    pub fn new() -> Self {
        NodeLog {
            entries: Vec::new(),
            keys: HashSet::new(),
            commitment: MerkleCommitment::from_leaves(Vec::new()),
        }
    }

    pub fn append(&mut self, entry: LogEntry) -> Result<(), LogError> {
        if let Some(last) = self.entries.last() {
            if entry.timestamp < last.timestamp {
                return Err(LogError::TimestampRegression {
                    last: last.timestamp,
                    got: entry.timestamp,
                });
            }
        }
        if !self.keys.insert(entry.key()) {
            return Err(LogError::Duplicate {
                packet_id: entry.packet_id,
                event: entry.event,
            });
        }
        self.commitment.push_leaf(entry.leaf());
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn root(&self) -> Digest {
        self.commitment.root()
    }

    pub fn commitment(&self) -> &MerkleCommitment {
        &self.commitment
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Root over an ordered list of entries.
pub fn build_root(entries: &[LogEntry]) -> Digest {
    super::merkle::root_from_leaves(&entries.iter().map(LogEntry::leaf).collect::<Vec<_>>())
}

/// An entry disclosed together with its inclusion proof.
#[derive(Clone, Debug, PartialEq)]
pub struct ProvenEntry {
    pub entry: LogEntry,
    pub proof: InclusionProof,
}

/// What an audited node hands over: its committed root and the disclosed
/// entries with proofs. The source never sees the node's real identity.
#[derive(Clone, Debug, PartialEq)]
pub struct PublishedLog {
    pub root: Digest,
    pub disclosed: Vec<ProvenEntry>,
}

impl PublishedLog {
    /// Commits to `entries` and discloses all of them.
    pub fn publish(entries: &[LogEntry]) -> PublishedLog {
        let commitment = MerkleCommitment::from_leaves(entries.iter().map(LogEntry::leaf).collect());
        let disclosed = entries
            .iter()
            .zip(commitment.prove_all())
            .map(|(e, proof)| ProvenEntry { entry: *e, proof })
            .collect();
        PublishedLog {
            root: commitment.root(),
            disclosed,
        }
    }

    /// Commits to all of `entries` but discloses only those `keep` selects.
    pub fn publish_subset(entries: &[LogEntry], keep: impl Fn(&LogEntry) -> bool) -> PublishedLog {
        let commitment = MerkleCommitment::from_leaves(entries.iter().map(LogEntry::leaf).collect());
        let disclosed = entries
            .iter()
            .zip(commitment.prove_all())
            .filter(|(e, _)| keep(e))
            .map(|(e, proof)| ProvenEntry { entry: *e, proof })
            .collect();
        PublishedLog {
            root: commitment.root(),
            disclosed,
        }
    }

    /// Disclosed entries whose proofs check out against the root.
    pub fn verified(&self) -> impl Iterator<Item = &LogEntry> {
        self.disclosed
            .iter()
            .filter(|p| p.proof.verify(&p.entry.leaf(), &self.root))
            .map(|p| &p.entry)
    }

    pub fn root_hex(&self) -> String {
        hex::encode(self.root)
    }
}
