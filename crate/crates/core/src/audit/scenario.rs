//! Stand-alone route walk that produces the logs an audit consumes.
//!
//! Used by tests and by the guide. A discovery request (packet 0) and its
//! reply (packet 1) travel the route first, followed by `packets` data
//! packets with ids 2, 3, ...

use super::detect::{AuditedHop, RouteAudit};
use super::log::{Event, LogEntry, NodeLog, PublishedLog};
use super::rules::{reply_id, RouteAliases};
use crate::crypto::{hmac_sha256, Pseudonym};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HopBehavior {
    Honest,
    /// Rewrites the sequence fields of every data packet it forwards.
    ForgeFields,
    /// Silently drops data packets whose index `i` satisfies
    /// `i % modulus == residue`, logging nothing for them.
    DropSome { modulus: u64, residue: u64 },
    /// Logs received data packets under a fabricated previous hop.
    ForgePrevHop,
}

#[derive(Clone, Debug)]
pub struct RouteScenario {
    pub hops: Vec<HopBehavior>,
    pub packets: u64,
    /// `(position, data index)`: the link after this position breaks for that
    /// packet. Position 0 is the source.
    pub link_breaks: Vec<(usize, u64)>,
    pub dest_omits_reply: bool,
    pub dest_forges_fields: bool,
}

pub fn scenario_alias(position: usize) -> Pseudonym {
    Pseudonym(hmac_sha256(b"scenario-alias", &(position as u64).to_be_bytes()))
}

impl RouteScenario {
    pub fn honest(hops: usize, packets: u64) -> RouteScenario {
        RouteScenario {
            hops: vec![HopBehavior::Honest; hops],
            packets,
            link_breaks: Vec::new(),
            dest_omits_reply: false,
            dest_forges_fields: false,
        }
    }

    pub fn with(mut self, position: usize, behavior: HopBehavior) -> RouteScenario {
        self.hops[position - 1] = behavior;
        self
    }

    pub fn aliases(&self) -> RouteAliases {
        RouteAliases {
            source: scenario_alias(0),
            intermediates: (1..=self.hops.len()).map(scenario_alias).collect(),
            destination: scenario_alias(self.hops.len() + 1),
        }
    }

    pub fn build(&self) -> RouteAudit {
        let n = self.hops.len();
        let aliases = self.aliases();
        let chain: Vec<Pseudonym> = std::iter::once(aliases.source)
            .chain(aliases.intermediates.iter().copied())
            .chain(std::iter::once(aliases.destination))
            .collect();
        let mut logs: Vec<NodeLog> = (0..n + 2).map(|_| NodeLog::new()).collect();
        let mut clock = 0.0;
        let mut log = |logs: &mut Vec<NodeLog>, pos: usize, packet_id: u64, event: Event, f: (u64, u64, u64), prev: Pseudonym| {
            clock += 0.001;
            logs[pos]
                .append(LogEntry {
                    node_alias: chain[pos],
                    packet_id,
                    event,
                    sseq: f.0,
                    oseq: f.1,
                    dseq: f.2,
                    prev_hop_alias: prev,
                    timestamp: clock,
                })
                .expect("scenario logs are well formed");
        };

        // Discovery out and back.
        let rreq = (1, 1, 1);
        log(&mut logs, 0, 0, Event::Forwarded, rreq, chain[0]);
        for pos in 1..=n {
            log(&mut logs, pos, 0, Event::Received, rreq, chain[pos - 1]);
            log(&mut logs, pos, 0, Event::Forwarded, rreq, chain[pos - 1]);
        }
        log(&mut logs, n + 1, 0, Event::Received, rreq, chain[n]);
        if !self.dest_omits_reply {
            log(&mut logs, n + 1, 0, Event::Replied, rreq, chain[n]);
        }
        let rrep = (1, 1, 2);
        for pos in (1..=n).rev() {
            log(&mut logs, pos, reply_id(0), Event::Received, rrep, chain[pos + 1]);
            log(&mut logs, pos, reply_id(0), Event::Forwarded, rrep, chain[pos + 1]);
        }
        log(&mut logs, 0, reply_id(0), Event::Received, rrep, chain[1.min(n + 1)]);

        for i in 0..self.packets {
            let p = 2 + i;
            let mut f = (2 + i, 1, 2);
            let breaks = |pos: usize| self.link_breaks.contains(&(pos, i));
            if breaks(0) {
                log(&mut logs, 0, p, Event::Dropped, f, chain[0]);
                continue;
            }
            log(&mut logs, 0, p, Event::Forwarded, f, chain[0]);
            let mut delivered = true;
            for pos in 1..=n {
                let prev = chain[pos - 1];
                match self.hops[pos - 1] {
                    HopBehavior::DropSome { modulus, residue } if i % modulus == residue => {
                        delivered = false;
                        break;
                    }
                    HopBehavior::ForgePrevHop => {
                        let fake = scenario_alias(usize::MAX);
                        log(&mut logs, pos, p, Event::Received, f, fake);
                        log(&mut logs, pos, p, Event::Forwarded, f, fake);
                    }
                    HopBehavior::ForgeFields => {
                        log(&mut logs, pos, p, Event::Received, f, prev);
                        f.2 += 1000;
                        log(&mut logs, pos, p, Event::Forwarded, f, prev);
                    }
                    _ => {
                        log(&mut logs, pos, p, Event::Received, f, prev);
                        if breaks(pos) {
                            log(&mut logs, pos, p, Event::Dropped, f, prev);
                            delivered = false;
                            break;
                        }
                        log(&mut logs, pos, p, Event::Forwarded, f, prev);
                    }
                }
            }
            if delivered {
                if self.dest_forges_fields {
                    f.0 += 7;
                }
                log(&mut logs, n + 1, p, Event::Received, f, chain[n]);
            }
        }

        RouteAudit {
            aliases,
            source_log: logs[0].entries().to_vec(),
            hops: (1..=n)
                .map(|pos| AuditedHop {
                    alias: chain[pos],
                    log: Some(PublishedLog::publish(logs[pos].entries())),
                })
                .collect(),
            destination: Some(PublishedLog::publish(logs[n + 1].entries())),
        }
    }
}
