//! Text form of recorded route audits, so they can be checked again offline.
//!
//! ```text
//! route <flow> <source> <destination> <hop1>;<hop2>;...
//! source <entry>
//! log <holder> <root>
//! entry <holder> <entry> <proof>
//! end
//! ```
//!
//! `holder` is a 1-based hop position or `dest`. An entry is
//! `alias packet_id event sseq oseq dseq prev_alias timestamp`; a proof is
//! `index:` followed by `L<hex>`/`R<hex>` steps joined with `,`. A holder
//! without a `log` line published nothing.

use std::fmt::Write as _;

use thiserror::Error;

use super::detect::{AuditedHop, RouteAudit};
use super::log::{Event, LogEntry, ProvenEntry, PublishedLog};
use super::merkle::{Digest, InclusionProof, ProofStep, Side};
use super::rules::RouteAliases;
use crate::crypto::Pseudonym;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn entry_text(e: &LogEntry) -> String {
    format!(
        "{} {} {} {} {} {} {} {}",
        e.node_alias.to_hex(),
        e.packet_id,
        e.event.as_str(),
        e.sseq,
        e.oseq,
        e.dseq,
        e.prev_hop_alias.to_hex(),
        e.timestamp
    )
}

fn proof_text(p: &InclusionProof) -> String {
    let steps: Vec<String> = p
        .steps
        .iter()
        .map(|s| {
            let side = match s.side {
                Side::Left => 'L',
                Side::Right => 'R',
            };
            format!("{side}{}", hex::encode(s.sibling))
        })
        .collect();
    format!("{}:{}", p.leaf_index, steps.join(","))
}

fn write_log(out: &mut String, holder: &str, log: &PublishedLog) {
    let _ = writeln!(out, "log {holder} {}", log.root_hex());
    for p in &log.disclosed {
        let _ = writeln!(out, "entry {holder} {} {}", entry_text(&p.entry), proof_text(&p.proof));
    }
}

/// Serializes audits, each tagged with its flow id.
pub fn write_audits(audits: &[(usize, RouteAudit)]) -> String {
    let mut out = String::new();
    for (flow, a) in audits {
        let hops: Vec<String> = a.aliases.intermediates.iter().map(Pseudonym::to_hex).collect();
        let _ = writeln!(
            out,
            "route {flow} {} {} {}",
            a.aliases.source.to_hex(),
            a.aliases.destination.to_hex(),
            hops.join(";")
        );
        for e in &a.source_log {
            let _ = writeln!(out, "source {}", entry_text(e));
        }
        for (i, hop) in a.hops.iter().enumerate() {
            if let Some(log) = &hop.log {
                write_log(&mut out, &(i + 1).to_string(), log);
            }
        }
        if let Some(log) = &a.destination {
            write_log(&mut out, "dest", log);
        }
        out.push_str("end\n");
    }
    out
}

struct Parser {
    line: usize,
}

impl Parser {
    fn err(&self, msg: impl Into<String>) -> ReplayError {
        ReplayError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn digest(&self, s: &str) -> Result<Digest, ReplayError> {
        let bytes = hex::decode(s).map_err(|_| self.err(format!("bad hex `{s}`")))?;
        bytes.try_into().map_err(|_| self.err("digest must be 32 bytes"))
    }

    fn alias(&self, s: &str) -> Result<Pseudonym, ReplayError> {
        Ok(Pseudonym(self.digest(s)?))
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T, ReplayError> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }

    fn entry(&self, f: &[&str]) -> Result<LogEntry, ReplayError> {
        if f.len() != 8 {
            return Err(self.err("entry needs 8 fields"));
        }
        Ok(LogEntry {
            node_alias: self.alias(f[0])?,
            packet_id: self.num(f[1])?,
            event: Event::parse(f[2]).ok_or_else(|| self.err(format!("unknown event `{}`", f[2])))?,
            sseq: self.num(f[3])?,
            oseq: self.num(f[4])?,
            dseq: self.num(f[5])?,
            prev_hop_alias: self.alias(f[6])?,
            timestamp: self.num(f[7])?,
        })
    }

    fn holder<'a>(&self, audit: &'a mut RouteAudit, h: &str) -> Result<&'a mut Option<PublishedLog>, ReplayError> {
        if h == "dest" {
            return Ok(&mut audit.destination);
        }
        let k: usize = self.num(h)?;
        match audit.hops.get_mut(k.wrapping_sub(1)) {
            Some(hop) => Ok(&mut hop.log),
            None => Err(self.err(format!("no hop at position {k}"))),
        }
    }

    fn proof(&self, s: &str) -> Result<InclusionProof, ReplayError> {
        let (index, steps) = s.split_once(':').ok_or_else(|| self.err("proof needs `index:`"))?;
        let steps = steps
            .split(',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                let side = match &t[..1] {
                    "L" => Side::Left,
                    "R" => Side::Right,
                    _ => return Err(self.err(format!("bad proof step `{t}`"))),
                };
                Ok(ProofStep {
                    sibling: self.digest(&t[1..])?,
                    side,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(InclusionProof {
            leaf_index: self.num(index)?,
            steps,
        })
    }
}

/// Parses what [`write_audits`] produced. Blank lines and `#` comments are skipped.
pub fn parse_audits(text: &str) -> Result<Vec<(usize, RouteAudit)>, ReplayError> {
    let mut out = Vec::new();
    let mut current: Option<(usize, RouteAudit)> = None;
    let mut p = Parser { line: 0 };
    for (i, raw) in text.lines().enumerate() {
        p.line = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "route" => {
                if current.is_some() {
                    return Err(p.err("route before `end`"));
                }
                if !(4..=5).contains(&fields.len()) {
                    return Err(p.err("route needs flow, source, destination and hops"));
                }
                let intermediates = match fields.get(4) {
                    Some(h) => h.split(';').map(|a| p.alias(a)).collect::<Result<Vec<_>, _>>()?,
                    None => Vec::new(),
                };
                let hops = intermediates.iter().map(|&alias| AuditedHop { alias, log: None }).collect();
                current = Some((
                    p.num(fields[1])?,
                    RouteAudit {
                        aliases: RouteAliases {
                            source: p.alias(fields[2])?,
                            intermediates,
                            destination: p.alias(fields[3])?,
                        },
                        source_log: Vec::new(),
                        hops,
                        destination: None,
                    },
                ));
            }
            "end" => out.push(current.take().ok_or_else(|| p.err("`end` without route"))?),
            kind => {
                let (_, audit) = current.as_mut().ok_or_else(|| p.err(format!("`{kind}` outside a route")))?;
                match kind {
                    "source" => audit.source_log.push(p.entry(&fields[1..])?),
                    "log" if fields.len() == 3 => {
                        let root = p.digest(fields[2])?;
                        *p.holder(audit, fields[1])? = Some(PublishedLog {
                            root,
                            disclosed: Vec::new(),
                        });
                    }
                    "entry" if fields.len() == 11 => {
                        let entry = p.entry(&fields[2..10])?;
                        let proof = p.proof(fields[10])?;
                        let log = p
                            .holder(audit, fields[1])?
                            .as_mut()
                            .ok_or_else(|| p.err("entry before its `log` line"))?;
                        log.disclosed.push(ProvenEntry { entry, proof });
                    }
                    _ => return Err(p.err(format!("malformed `{kind}` line"))),
                }
            }
        }
    }
    if current.is_some() {
        return Err(p.err("missing final `end`"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::scenario::{HopBehavior, RouteScenario};

    #[test]
    fn roundtrip_preserves_audits_and_verdicts() {
        let audits: Vec<(usize, RouteAudit)> = vec![
            (0, RouteScenario::honest(4, 8).build()),
            (1, RouteScenario::honest(5, 8).with(2, HopBehavior::ForgeFields).build()),
            (2, RouteScenario::honest(3, 8).with(1, HopBehavior::DropSome { modulus: 4, residue: 1 }).build()),
        ];
        let text = write_audits(&audits);
        let back = parse_audits(&text).unwrap();
        assert_eq!(back, audits);
        for ((_, a), (_, b)) in audits.iter().zip(&back) {
            assert_eq!(a.run(), b.run());
        }
    }

    #[test]
    fn edited_entry_fails_its_proof() {
        let audits = vec![(0, RouteScenario::honest(3, 8).build())];
        let text = write_audits(&audits);
        // Bump the sseq of the first entry held by hop 2.
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let at = lines.iter().position(|l| l.starts_with("entry 2 ")).unwrap();
        let mut f: Vec<String> = lines[at].split(' ').map(String::from).collect();
        f[5] = (f[5].parse::<u64>().unwrap() + 1).to_string();
        lines[at] = f.join(" ");
        let back = parse_audits(&lines.join("\n")).unwrap();
        let log = back[0].1.hops[1].log.as_ref().unwrap();
        assert_eq!(log.verified().count(), log.disclosed.len() - 1);
    }

    #[test]
    fn reports_line_of_error() {
        let err = parse_audits("route 0 zz 00 \n").unwrap_err();
        assert!(matches!(err, ReplayError::Parse { line: 1, .. }));
        assert!(parse_audits("entry 1 x").is_err());
    }
}
