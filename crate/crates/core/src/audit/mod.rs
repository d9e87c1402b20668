//! Forwarding logs, their Merkle commitments and route audits.

pub mod detect;
pub mod log;
pub mod merkle;
pub mod replay;
pub mod rules;
pub mod scenario;

pub use detect::{
    audit_route, check_destination, collect_evidence, detect_active_attacker, detect_passive_attackers, hash_verify,
    ActiveAttacker, ActiveFinding, AuditError, AuditReport, AuditedHop, Outcome, RouteAudit, AUDIT_TRACE_HEADER,
};
pub use log::{build_root, Event, LogEntry, LogError, NodeLog, ProvenEntry, PublishedLog};
pub use merkle::{Digest, InclusionProof, MerkleCommitment};
pub use replay::{parse_audits, write_audits, ReplayError};
pub use rules::{apply_rules, Pattern, RouteAliases, Rule, RuleBook, RuleError};
