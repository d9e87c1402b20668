//! Inference rules over log entries.
//!
//! A rule says: if every pattern on the left is matched by some observed
//! entry, the entry described on the right must exist at the audited node.
//! Patterns are conjunctions of field equalities; `None` is a wildcard.

use thiserror::Error;

use super::log::{Event, LogEntry};
use crate::crypto::Pseudonym;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub node_alias: Option<Pseudonym>,
    pub packet_id: Option<u64>,
    pub event: Option<Event>,
    pub sseq: Option<u64>,
    pub oseq: Option<u64>,
    pub dseq: Option<u64>,
    pub prev_hop_alias: Option<Pseudonym>,
}

impl Pattern {
    pub fn at(node: Pseudonym, packet_id: u64, event: Event) -> Pattern {
        Pattern {
            node_alias: Some(node),
            packet_id: Some(packet_id),
            event: Some(event),
            ..Pattern::default()
        }
    }

    /// Pins the carried sequence fields to those of `entry`.
    pub fn with_fields_of(mut self, entry: &LogEntry) -> Pattern {
        self.sseq = Some(entry.sseq);
        self.oseq = Some(entry.oseq);
        self.dseq = Some(entry.dseq);
        self
    }

    pub fn with_prev_hop(mut self, prev: Pseudonym) -> Pattern {
        self.prev_hop_alias = Some(prev);
        self
    }

    /// The exact pattern of an existing entry (timestamp excluded).
    pub fn exact(entry: &LogEntry) -> Pattern {
        Pattern::at(entry.node_alias, entry.packet_id, entry.event)
            .with_fields_of(entry)
            .with_prev_hop(entry.prev_hop_alias)
    }

    pub fn matches(&self, e: &LogEntry) -> bool {
        fn ok<T: PartialEq>(want: &Option<T>, got: &T) -> bool {
            want.as_ref().is_none_or(|w| w == got)
        }
        ok(&self.node_alias, &e.node_alias)
            && ok(&self.packet_id, &e.packet_id)
            && ok(&self.event, &e.event)
            && ok(&self.sseq, &e.sseq)
            && ok(&self.oseq, &e.oseq)
            && ok(&self.dseq, &e.dseq)
            && ok(&self.prev_hop_alias, &e.prev_hop_alias)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("rule has an empty left-hand side")]
    EmptyLhs,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    lhs: Vec<Pattern>,
    rhs: Pattern,
}

impl Rule {
    pub fn new(lhs: Vec<Pattern>, rhs: Pattern) -> Result<Rule, RuleError> {
        if lhs.is_empty() {
            return Err(RuleError::EmptyLhs);
        }
        Ok(Rule { lhs, rhs })
    }

    pub fn lhs(&self) -> &[Pattern] {
        &self.lhs
    }

    pub fn rhs(&self) -> &Pattern {
        &self.rhs
    }

    pub fn fires_on(&self, observed: &[LogEntry]) -> bool {
        self.lhs.iter().all(|p| observed.iter().any(|e| p.matches(e)))
    }
}

/// Right-hand sides of every rule whose left side is satisfied, in rule order.
pub fn apply_rules(rules: &[Rule], observed: &[LogEntry]) -> Vec<Pattern> {
    rules
        .iter()
        .filter(|r| r.fires_on(observed))
        .map(|r| r.rhs)
        .collect()
}

/// Packet id of the reply that answers discovery `request_id`.
pub fn reply_id(request_id: u64) -> u64 {
    request_id + 1
}

/// Aliases along one route, source first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RouteAliases {
    pub source: Pseudonym,
    pub intermediates: Vec<Pseudonym>,
    pub destination: Pseudonym,
}

impl RouteAliases {
    fn last_hop(&self) -> Pseudonym {
        *self.intermediates.last().unwrap_or(&self.source)
    }

    fn prev_of(&self, j: usize) -> Pseudonym {
        if j == 0 {
            self.source
        } else {
            self.intermediates[j - 1]
        }
    }
}

/// The three rule sets used by a route audit.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleBook {
    /// Source to destination.
    pub to_destination: Vec<Rule>,
    /// Source to intermediaries, from the source's own records.
    pub to_intermediates: Vec<Rule>,
    /// Source plus destination to intermediaries.
    pub combined: Vec<Rule>,
}

impl RuleBook {
    /// Instantiates the shipped rule templates for every packet the source
    /// records having sent along `route`:
    ///
    /// * a packet that made it past the last hop must reach the destination
    ///   unchanged, and every intermediary must have received and forwarded it
    ///   unchanged;
    /// * a discovery the source saw answered must be logged as replied;
    /// * whatever a hop forwarded, the next hop must log as received from it,
    ///   and whatever the destination received, the last hop must have forwarded.
    pub fn for_route(route: &RouteAliases, source_log: &[LogEntry]) -> RuleBook {
        let mut book = RuleBook::default();
        let last = route.last_hop();
        let sent = source_log
            .iter()
            .filter(|e| e.node_alias == route.source && e.event == Event::Forwarded);
        for e in sent {
            let p = e.packet_id;
            let from_source = Pattern::at(route.source, p, Event::Forwarded).with_fields_of(e);
            let past_last = Pattern::at(last, p, Event::Forwarded);
            let through = vec![from_source, past_last];

            book.to_destination.push(rule(
                through.clone(),
                Pattern::at(route.destination, p, Event::Received).with_fields_of(e),
            ));
            let answered = source_log.iter().any(|r| {
                r.node_alias == route.source && r.packet_id == reply_id(p) && r.event == Event::Received
            });
            if answered {
                book.to_destination.push(rule(
                    vec![
                        Pattern::at(route.source, p, Event::Forwarded),
                        Pattern::at(route.source, reply_id(p), Event::Received),
                    ],
                    Pattern::at(route.destination, p, Event::Replied),
                ));
            }

            for &hop in &route.intermediates {
                book.to_intermediates.push(rule(
                    through.clone(),
                    Pattern::at(hop, p, Event::Received).with_fields_of(e),
                ));
                book.to_intermediates.push(rule(
                    through.clone(),
                    Pattern::at(hop, p, Event::Forwarded).with_fields_of(e),
                ));
            }

            for (j, &hop) in route.intermediates.iter().enumerate() {
                let prev = route.prev_of(j);
                book.combined.push(rule(
                    vec![Pattern::at(prev, p, Event::Forwarded)],
                    Pattern::at(hop, p, Event::Received).with_prev_hop(prev),
                ));
            }
            if !route.intermediates.is_empty() {
                book.combined.push(rule(
                    vec![Pattern::at(route.destination, p, Event::Received)],
                    Pattern::at(last, p, Event::Forwarded),
                ));
            }
        }
        book
    }
}

fn rule(lhs: Vec<Pattern>, rhs: Pattern) -> Rule {
    Rule::new(lhs, rhs).expect("templates always have a left-hand side")
}
