use std::fmt;

use thiserror::Error;

use super::log::{LogEntry, PublishedLog};
use super::rules::{apply_rules, Pattern, RouteAliases, Rule, RuleBook};
use crate::crypto::Pseudonym;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Fellow,
    NotFellow,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Fellow => "FELLOW",
            Outcome::NotFellow => "NOT_FELLOW",
        }
    }

    pub fn parse(s: &str) -> Option<Outcome> {
        match s {
            "FELLOW" => Some(Outcome::Fellow),
            "NOT_FELLOW" => Some(Outcome::NotFellow),
            _ => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuditError {
    #[error("no intermediaries")]
    NoIntermediaries,
}

/// An intermediary as the source sees it: an alias and whatever it published.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditedHop {
    pub alias: Pseudonym,
    pub log: Option<PublishedLog>,
}

/// Checks that every expected pattern is matched by a disclosed entry whose
/// proof verifies. A missing log fails unless nothing is expected.
pub fn hash_verify(log: Option<&PublishedLog>, expected: &[Pattern]) -> Outcome {
    if expected.is_empty() {
        return Outcome::Fellow;
    }
    let Some(log) = log else {
        return Outcome::NotFellow;
    };
    let verified: Vec<&LogEntry> = log.verified().collect();
    let all = expected
        .iter()
        .all(|p| verified.iter().any(|e| p.matches(e)));
    if all {
        Outcome::Fellow
    } else {
        Outcome::NotFellow
    }
}

/// Source-side evidence: the source's own log plus every verified entry the
/// intermediaries disclosed.
pub fn collect_evidence(source_log: &[LogEntry], route: &[AuditedHop]) -> Vec<LogEntry> {
    let mut tau_c = source_log.to_vec();
    for hop in route {
        if let Some(log) = &hop.log {
            tau_c.extend(log.verified().filter(|e| e.node_alias == hop.alias).copied());
        }
    }
    tau_c
}

/// Verifies the destination's log against what the source-side evidence implies.
pub fn check_destination(tau_c: &[LogEntry], rules_to_dest: &[Rule], dest: Option<&PublishedLog>) -> Outcome {
    for record in apply_rules(rules_to_dest, tau_c) {
        if hash_verify(dest, &[record]) == Outcome::NotFellow {
            return Outcome::NotFellow;
        }
    }
    Outcome::Fellow
}

fn node_passes(hop: &AuditedHop, collection: &[Pattern]) -> bool {
    collection
        .iter()
        .filter(|r| r.node_alias == Some(hop.alias))
        .all(|r| hash_verify(hop.log.as_ref(), &[*r]) == Outcome::Fellow)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActiveFinding {
    /// Every intermediary verified, so the destination lied.
    Target,
    /// Positions are 1-based. `deepest_verified` is the last node that passed,
    /// `None` when even the first hop failed.
    Intermediary {
        attacker: usize,
        deepest_verified: Option<usize>,
    },
}

/// Reverse scan from the last intermediary. The first node (from the end) that
/// passes all of its checks bounds the attack: the forger sits right after it.
pub fn detect_active_attacker(
    route: &[AuditedHop],
    tau_c: &[LogEntry],
    rules_to_mid: &[Rule],
) -> Result<ActiveFinding, AuditError> {
    if route.is_empty() {
        return Err(AuditError::NoIntermediaries);
    }
    let collection = apply_rules(rules_to_mid, tau_c);
    let n = route.len();
    for m in (1..=n).rev() {
        if node_passes(&route[m - 1], &collection) {
            if m == n {
                return Ok(ActiveFinding::Target);
            }
            return Ok(ActiveFinding::Intermediary {
                attacker: m + 1,
                deepest_verified: Some(m),
            });
        }
    }
    Ok(ActiveFinding::Intermediary {
        attacker: 1,
        deepest_verified: None,
    })
}

/// Forward scan over every intermediary, continuing after each detection.
pub fn detect_passive_attackers(
    route: &[AuditedHop],
    tau_c: &[LogEntry],
    tau_d: Option<&PublishedLog>,
    rules_combined: &[Rule],
) -> Vec<usize> {
    let mut observed = tau_c.to_vec();
    if let Some(d) = tau_d {
        observed.extend(d.verified().copied());
    }
    let collection = apply_rules(rules_combined, &observed);
    route
        .iter()
        .enumerate()
        .filter(|(_, hop)| !node_passes(hop, &collection))
        .map(|(j, _)| j + 1)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActiveAttacker {
    Target,
    Position(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditReport {
    pub verdict: Outcome,
    pub active_attacker: Option<ActiveAttacker>,
    pub passive_attackers: Vec<usize>,
    /// Deepest intermediary that verified during an active scan.
    pub deepest_verified: Option<usize>,
}

impl AuditReport {
    /// 1-based positions of every intermediary this report accuses.
    pub fn accused_positions(&self) -> Vec<usize> {
        match self.active_attacker {
            Some(ActiveAttacker::Position(p)) => vec![p],
            _ => self.passive_attackers.clone(),
        }
    }

    pub fn trace_row(&self, flow_id: usize) -> String {
        let active = match self.active_attacker {
            None => String::new(),
            Some(ActiveAttacker::Target) => "target".to_string(),
            Some(ActiveAttacker::Position(p)) => p.to_string(),
        };
        let passive: Vec<String> = self.passive_attackers.iter().map(|p| p.to_string()).collect();
        format!("{flow_id},{},{active},{}", self.verdict, passive.join(";"))
    }
}

pub const AUDIT_TRACE_HEADER: &str = "flow_id,verdict,active_pos,passive_positions";

/// Destination check first, then the active scan on failure or the passive
/// scan on success. With no intermediaries a failed destination check is
/// blamed on the target.
pub fn audit_route(
    route: &[AuditedHop],
    tau_c: &[LogEntry],
    tau_d: Option<&PublishedLog>,
    rules: &RuleBook,
) -> Result<AuditReport, AuditError> {
    let verdict = check_destination(tau_c, &rules.to_destination, tau_d);
    let mut report = AuditReport {
        verdict,
        active_attacker: None,
        passive_attackers: Vec::new(),
        deepest_verified: None,
    };
    match verdict {
        Outcome::NotFellow if route.is_empty() => {
            report.active_attacker = Some(ActiveAttacker::Target);
        }
        Outcome::NotFellow => match detect_active_attacker(route, tau_c, &rules.to_intermediates)? {
            ActiveFinding::Target => {
                report.active_attacker = Some(ActiveAttacker::Target);
                report.deepest_verified = Some(route.len());
            }
            ActiveFinding::Intermediary {
                attacker,
                deepest_verified,
            } => {
                report.active_attacker = Some(ActiveAttacker::Position(attacker));
                report.deepest_verified = deepest_verified;
            }
        },
        Outcome::Fellow => {
            report.passive_attackers = detect_passive_attackers(route, tau_c, tau_d, &rules.combined);
        }
    }
    Ok(report)
}

/// Everything the source holds for one route audit.
#[derive(Clone, Debug, PartialEq)]
pub struct RouteAudit {
    pub aliases: RouteAliases,
    pub source_log: Vec<LogEntry>,
    pub hops: Vec<AuditedHop>,
    pub destination: Option<PublishedLog>,
}

impl RouteAudit {
    pub fn run(&self) -> Result<AuditReport, AuditError> {
        let tau_c = collect_evidence(&self.source_log, &self.hops);
        let rules = RuleBook::for_route(&self.aliases, &self.source_log);
        audit_route(&self.hops, &tau_c, self.destination.as_ref(), &rules)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::log::Event;

    fn entry(node: u8, packet_id: u64, event: Event) -> LogEntry {
        LogEntry {
            node_alias: Pseudonym([node; 32]),
            packet_id,
            event,
            sseq: 4,
            oseq: 5,
            dseq: 6,
            prev_hop_alias: Pseudonym([0; 32]),
            timestamp: packet_id as f64,
        }
    }

    #[test]
    fn verbatim_patterns_pass() {
        let entries: Vec<_> = (0..5).map(|i| entry(1, i, Event::Forwarded)).collect();
        let log = PublishedLog::publish(&entries);
        let expected: Vec<_> = entries.iter().map(Pattern::exact).collect();
        assert_eq!(hash_verify(Some(&log), &expected), Outcome::Fellow);
    }

    #[test]
    fn absent_pattern_fails() {
        let log = PublishedLog::publish(&[entry(1, 0, Event::Forwarded)]);
        let missing = Pattern::at(Pseudonym([1; 32]), 9, Event::Forwarded);
        assert_eq!(hash_verify(Some(&log), &[missing]), Outcome::NotFellow);
        assert_eq!(hash_verify(None, &[missing]), Outcome::NotFellow);
        assert_eq!(hash_verify(None, &[]), Outcome::Fellow);
    }

    #[test]
    fn stale_root_fails() {
        let e = entry(1, 0, Event::Forwarded);
        let mut log = PublishedLog::publish(&[e, entry(1, 1, Event::Forwarded)]);
        log.disclosed[0].entry.dseq = 99;
        let mut want = e;
        want.dseq = 99;
        assert_eq!(hash_verify(Some(&log), &[Pattern::exact(&want)]), Outcome::NotFellow);
    }

    #[test]
    fn malformed_proof_is_failure() {
        let e = entry(1, 0, Event::Forwarded);
        let mut log = PublishedLog::publish(&[e, entry(1, 1, Event::Forwarded)]);
        log.disclosed[0].proof.steps.clear();
        assert_eq!(hash_verify(Some(&log), &[Pattern::exact(&e)]), Outcome::NotFellow);
    }

    #[test]
    fn no_rules_is_vacuously_fellow() {
        assert_eq!(check_destination(&[], &[], None), Outcome::Fellow);
    }

    #[test]
    fn empty_route_errors() {
        assert_eq!(detect_active_attacker(&[], &[], &[]), Err(AuditError::NoIntermediaries));
        assert!(detect_passive_attackers(&[], &[], None, &[]).is_empty());
    }

    #[test]
    fn trace_rows() {
        let r = AuditReport {
            verdict: Outcome::Fellow,
            active_attacker: None,
            passive_attackers: vec![2, 4],
            deepest_verified: None,
        };
        assert_eq!(r.trace_row(3), "3,FELLOW,,2;4");
        let r = AuditReport {
            verdict: Outcome::NotFellow,
            active_attacker: Some(ActiveAttacker::Position(2)),
            passive_attackers: vec![],
            deepest_verified: Some(1),
        };
        assert_eq!(r.trace_row(0), "0,NOT_FELLOW,2,");
    }
}
