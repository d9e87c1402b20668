use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::packet::{sign, verify, Address, Packet, PacketKind};
use super::paths::{Path, RoundRobin, RouteEntry, Trust};
use super::ProtocolKind;
use crate::audit::{Event, LogEntry, NodeLog};
use crate::crypto::{ChainDirection, KeyRing, NodeId, Pseudonym, PseudonymChain, TrapdoorIndex, DEFAULT_TRAPDOOR_WINDOW};
use crate::monitor::{Label, SeqVector, TrainingWindow};
use crate::sim::AttackKind;

/// Path id used by forged replies, outside the range honest destinations use.
pub const FORGED_PATH_ID: u8 = 7;

#[derive(Clone, Debug)]
pub struct RouterConfig {
    pub protocol: ProtocolKind,
    /// Logs are partitioned by the epoch in which a packet was created.
    pub epoch_len: f64,
    pub buffer_cap: usize,
    pub initial_backoff: f64,
    pub max_backoff: f64,
    pub max_replies: usize,
    /// Seconds a discovered path stays usable. Not refreshed by traffic, so
    /// every flow rediscovers (and rotates its aliases) at least this often.
    pub route_lifetime: f64,
}

impl RouterConfig {
    pub fn new(protocol: ProtocolKind) -> RouterConfig {
        RouterConfig {
            protocol,
            epoch_len: 10.0,
            buffer_cap: 64,
            initial_backoff: 1.0,
            max_backoff: 8.0,
            max_replies: 3,
            route_lifetime: 10.0,
        }
    }
}

/// Everything a handler needs from the outside world at one instant.
pub struct Ctx<'a> {
    pub now: f64,
    pub keys: &'a KeyRing,
    /// Log alias of every node, indexed by id.
    pub aliases: &'a [Pseudonym],
    pub next_id: &'a mut u64,
    pub rng: &'a mut ChaCha8Rng,
    /// Whether a unicast from this node to the given neighbor would arrive.
    pub reachable: &'a dyn Fn(NodeId) -> bool,
    /// Inside the clean training epoch: monitors learn, attackers stay quiet.
    pub training: bool,
}

impl Ctx<'_> {
    fn alloc_ids(&mut self, n: u64) -> u64 {
        let id = *self.next_id;
        *self.next_id += n;
        id
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DropCause {
    /// Next hop out of range or no route left.
    Link,
    /// Source buffer overflow.
    Buffer,
    Attack,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    /// `None` broadcasts to every neighbor in range.
    Send { to: Option<NodeId>, packet: Packet },
    Deliver(Packet),
    Drop { packet: Packet, cause: DropCause },
    DiscoveryTimer { at: f64, flow: usize, request: u64 },
    DiscoveryDone { flow: usize, elapsed: f64 },
    Flagged { node: NodeId },
}

/// Detector bookkeeping, split by whether the reply had been tampered with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MonitorStats {
    pub forged_checked: u64,
    pub forged_flagged: u64,
    pub clean_checked: u64,
    pub clean_flagged: u64,
}

/// A node's forwarding log, one commitment per creation epoch.
#[derive(Clone, Debug, Default)]
pub struct Logbook {
    epoch_len: f64,
    parts: BTreeMap<u64, NodeLog>,
}

impl Logbook {
    pub fn new(epoch_len: f64) -> Logbook {
        Logbook {
            epoch_len,
            parts: BTreeMap::new(),
        }
    }

    pub fn epoch_of(&self, created_at: f64) -> u64 {
        (created_at / self.epoch_len).floor().max(0.0) as u64
    }

    /// Appends to the partition of `created_at`. A node records each
    /// (packet, event) once, so repeats (a second copy of a reply) are skipped.
    pub fn record(&mut self, entry: LogEntry, created_at: f64) {
        let epoch = self.epoch_of(created_at);
        let _ = self.parts.entry(epoch).or_default().append(entry);
    }

    pub fn partition(&self, epoch: u64) -> Option<&NodeLog> {
        self.parts.get(&epoch)
    }

    pub fn total_entries(&self) -> usize {
        self.parts.values().map(NodeLog::len).sum()
    }
}

#[derive(Clone, Debug)]
pub(crate) struct DestDiscovery {
    pub(crate) replied_routes: Vec<Vec<NodeId>>,
}

#[derive(Clone, Debug)]
pub(crate) struct ForwardEntry {
    pub(crate) entry: RouteEntry,
    /// Alias of the flow's source, to route errors back.
    pub(crate) back: Address,
}

/// One packet the source put on a path, kept for audits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SentRecord {
    pub packet_id: u64,
    pub serial: u64,
    pub created_at: f64,
    pub sent_at: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct SourceDiscovery {
    pub(crate) forward: Address,
    pub(crate) reverse: Address,
    pub(crate) started_at: f64,
    pub(crate) answered: bool,
}

#[derive(Clone, Debug)]
pub struct Flow {
    pub id: usize,
    pub dest: NodeId,
    pub(crate) ps: Option<PseudonymChain>,
    pub(crate) pd: Option<PseudonymChain>,
    pub(crate) pending: Option<u64>,
    pub(crate) backoff: f64,
    pub(crate) discoveries: HashMap<u64, SourceDiscovery>,
    pub(crate) paths: Vec<Path>,
    pub(crate) next_serial: u64,
    pub(crate) rr: RoundRobin,
    pub(crate) buffer: std::collections::VecDeque<Packet>,
    pub(crate) known_dseq: u64,
    pub(crate) data_seq: u64,
    pub sent: Vec<SentRecord>,
    /// Intermediaries of every path ever used, by serial.
    pub path_nodes: HashMap<u64, Vec<NodeId>>,
    pub discoveries_started: u64,
}

impl Flow {
    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub(crate) fn aliases(&self, me: NodeId, protocol: ProtocolKind) -> (Address, Address) {
        match protocol {
            ProtocolKind::Mprf => (Address::Plain(self.dest), Address::Plain(me)),
            _ => (
                Address::Alias(self.pd.as_ref().expect("pseudonymous flow").current()),
                Address::Alias(self.ps.as_ref().expect("pseudonymous flow").current()),
            ),
        }
    }
}

pub struct Router {
    pub id: NodeId,
    pub(crate) cfg: RouterConfig,
    pub(crate) attack: Option<AttackKind>,
    pub(crate) own_seq: u64,
    pub(crate) oseq_counter: u64,
    trapdoor: TrapdoorIndex,
    static_aliases: HashMap<Address, NodeId>,
    known_dest_aliases: HashMap<Address, NodeId>,
    dest_discoveries: HashMap<(u64, Address), DestDiscovery>,
    pub(crate) seen: HashSet<(u64, Address)>,
    pub(crate) rreq_fields: HashMap<u64, [u64; 3]>,
    pub(crate) reverse: HashMap<Address, RouteEntry>,
    pub(crate) forward: HashMap<(Address, u8), ForwardEntry>,
    pub(crate) monitor: TrainingWindow,
    pub(crate) suspects: BTreeSet<NodeId>,
    pub(crate) accused: BTreeSet<NodeId>,
    pub(crate) flows: BTreeMap<usize, Flow>,
    pub logs: Logbook,
    max_dseq_seen: u64,
    pub stats: MonitorStats,
}

impl Router {
    pub fn new(id: NodeId, cfg: RouterConfig, attack: Option<AttackKind>, keys: &KeyRing) -> Router {
        let mut trapdoor = TrapdoorIndex::new(DEFAULT_TRAPDOOR_WINDOW);
        let mut static_aliases = HashMap::new();
        for peer in (0..keys.len() as u64).map(NodeId).filter(|&p| p != id) {
            let chain = PseudonymChain::new(keys.pairwise(peer, id), id, ChainDirection::ForwardOfDestination);
            match cfg.protocol {
                ProtocolKind::Tap3 => trapdoor.track(peer, chain),
                ProtocolKind::SMprf => {
                    static_aliases.insert(Address::Alias(chain.current()), peer);
                }
                ProtocolKind::Mprf => {}
            }
        }
        Router {
            id,
            logs: Logbook::new(cfg.epoch_len),
            cfg,
            attack,
            own_seq: 1,
            oseq_counter: 0,
            trapdoor,
            static_aliases,
            known_dest_aliases: HashMap::new(),
            dest_discoveries: HashMap::new(),
            seen: HashSet::new(),
            rreq_fields: HashMap::new(),
            reverse: HashMap::new(),
            forward: HashMap::new(),
            monitor: TrainingWindow::new(),
            suspects: BTreeSet::new(),
            accused: BTreeSet::new(),
            flows: BTreeMap::new(),
            max_dseq_seen: 1,
            stats: MonitorStats::default(),
        }
    }

    pub fn protocol(&self) -> ProtocolKind {
        self.cfg.protocol
    }

    pub fn monitor(&self) -> &TrainingWindow {
        &self.monitor
    }

    pub fn suspects(&self) -> &BTreeSet<NodeId> {
        &self.suspects
    }

    pub fn accused(&self) -> &BTreeSet<NodeId> {
        &self.accused
    }

    pub fn flows(&self) -> impl Iterator<Item = &Flow> {
        self.flows.values()
    }

    pub fn flow(&self, id: usize) -> Option<&Flow> {
        self.flows.get(&id)
    }

    /// Nodes this router will not route through: monitor flags plus audit findings.
    pub fn distrusted(&self) -> BTreeSet<NodeId> {
        self.suspects.union(&self.accused).copied().collect()
    }

    /// Records an audit finding against `node`.
    pub fn distrust(&mut self, node: NodeId) {
        self.accused.insert(node);
    }

    /// Closes the training epoch. A node that saw no replies stays untrained
    /// and forwards without classifying.
    pub fn finish_training(&mut self) {
        if !self.monitor.is_empty() {
            let _ = self.monitor.train();
        }
    }

    fn attack_live(&self, ctx: &Ctx) -> Option<AttackKind> {
        if ctx.training {
            None
        } else {
            self.attack
        }
    }

    /// Only TAP3 nodes keep audit logs.
    pub(crate) fn log(&mut self, ctx: &mut Ctx, packet: &Packet, event: Event, prev: NodeId) {
        if self.cfg.protocol != ProtocolKind::Tap3 {
            return;
        }
        let mut prev_alias = ctx.aliases[prev.0 as usize];
        if let Some(AttackKind::LogForgery { p }) = self.attack_live(ctx) {
            if packet.kind == PacketKind::Data && ctx.rng.gen::<f64>() < p {
                prev_alias = Pseudonym(crate::crypto::hmac_sha256(b"fabricated", &packet.packet_id.to_be_bytes()));
            }
        }
        let entry = LogEntry {
            node_alias: ctx.aliases[self.id.0 as usize],
            packet_id: packet.packet_id,
            event,
            sseq: packet.sseq,
            oseq: packet.oseq,
            dseq: packet.dseq,
            prev_hop_alias: prev_alias,
            timestamp: ctx.now,
        };
        self.logs.record(entry, packet.meta.created_at);
    }

    /// Whether `forward` names this node as a flow's destination, and if so
    /// which source it belongs to. The first sighting of a pseudonym runs the
    /// trapdoor check; later ones hit the cache.
    fn destination_peer(&mut self, forward: Address, reverse: Address) -> Option<NodeId> {
        match self.cfg.protocol {
            ProtocolKind::Mprf => match (forward, reverse) {
                (Address::Plain(d), Address::Plain(s)) if d == self.id => Some(s),
                _ => None,
            },
            ProtocolKind::SMprf => self.static_aliases.get(&forward).copied(),
            ProtocolKind::Tap3 => {
                if let Some(&peer) = self.known_dest_aliases.get(&forward) {
                    return Some(peer);
                }
                let Address::Alias(alias) = forward else {
                    return None;
                };
                let hit = self.trapdoor.check(&alias)?;
                self.trapdoor.consume(&hit);
                self.known_dest_aliases.insert(forward, hit.peer);
                Some(hit.peer)
            }
        }
    }

    fn send_to(&self, ctx: &Ctx, to: NodeId, packet: Packet) -> Action {
        if (ctx.reachable)(to) {
            Action::Send { to: Some(to), packet }
        } else {
            Action::Drop {
                packet,
                cause: DropCause::Link,
            }
        }
    }

    pub fn handle(&mut self, ctx: &mut Ctx, packet: Packet, from: NodeId) -> Vec<Action> {
        match packet.kind {
            PacketKind::Rreq => self.handle_rreq(ctx, packet, from),
            PacketKind::Rrep => self.handle_rrep(ctx, packet, from),
            PacketKind::Data => self.handle_data(ctx, packet, from),
            PacketKind::Rerr => self.handle_rerr(ctx, packet, from),
            PacketKind::RrepAck => Vec::new(),
        }
    }

    pub fn handle_rreq(&mut self, ctx: &mut Ctx, packet: Packet, from: NodeId) -> Vec<Action> {
        let tap3 = self.cfg.protocol == ProtocolKind::Tap3;
        if tap3 && self.suspects.contains(&from) {
            return Vec::new();
        }
        self.rreq_fields
            .insert(packet.packet_id, [packet.sseq, packet.oseq, packet.dseq]);
        self.max_dseq_seen = self.max_dseq_seen.max(packet.dseq);

        if let Some(peer) = self.destination_peer(packet.forward, packet.reverse) {
            return self.reply(ctx, packet, from, peer);
        }

        // A black hole relays first so it also competes in the honest reply
        // race, then answers with its own forged reply.
        let mut actions = Vec::new();
        let key = (packet.oseq, packet.reverse);
        if self.seen.insert(key) {
            self.reverse.insert(
                packet.reverse,
                RouteEntry {
                    fellow_alias: packet.reverse,
                    next_hop: from,
                    path_id: 0,
                    trust: Trust::Normal,
                    established_at: ctx.now,
                },
            );
            self.log(ctx, &packet, Event::Received, from);
            let mut relayed = packet.clone();
            relayed.route.push(self.id);
            relayed.hop_count = relayed.hop_count.saturating_add(1);
            self.log(ctx, &relayed, Event::Forwarded, from);
            actions.push(Action::Send {
                to: None,
                packet: relayed,
            });
        }
        if let Some(AttackKind::BlackHole { delta }) = self.attack_live(ctx) {
            let mut forged = Packet::new(PacketKind::Rrep, packet.packet_id + 1, packet.reverse, packet.forward);
            forged.sseq = packet.sseq;
            forged.oseq = packet.oseq;
            forged.dseq = self.max_dseq_seen.max(packet.dseq) + delta;
            forged.route = packet.route.clone();
            forged.route.push(self.id);
            forged.hop_count = 1;
            forged.path_id = FORGED_PATH_ID;
            forged.tag = crate::crypto::hmac_sha256(b"forged", &packet.packet_id.to_be_bytes());
            forged.meta = packet.meta;
            forged.meta.tampered = true;
            actions.push(self.send_to(ctx, from, forged));
        }
        actions
    }

    fn reply(&mut self, ctx: &mut Ctx, packet: Packet, from: NodeId, peer: NodeId) -> Vec<Action> {
        let key = ctx.keys.pairwise(peer, self.id);
        if self.cfg.protocol != ProtocolKind::Mprf && !verify(&packet, &key) {
            return Vec::new();
        }
        let disc_key = (packet.oseq, packet.reverse);
        let first = !self.dest_discoveries.contains_key(&disc_key);
        let disc = self.dest_discoveries.entry(disc_key).or_insert(DestDiscovery {
            replied_routes: Vec::new(),
        });
        if disc.replied_routes.len() >= self.cfg.max_replies
            || disc
                .replied_routes
                .iter()
                .any(|r| r.iter().any(|n| packet.route.contains(n)))
        {
            return Vec::new();
        }
        let path_id = disc.replied_routes.len() as u8;
        disc.replied_routes.push(packet.route.clone());
        if first {
            self.log(ctx, &packet, Event::Received, from);
            self.log(ctx, &packet, Event::Replied, from);
        }
        self.own_seq = self.own_seq.max(packet.dseq);
        let mut rrep = Packet::new(PacketKind::Rrep, packet.packet_id + 1, packet.reverse, packet.forward);
        rrep.sseq = packet.sseq;
        rrep.oseq = packet.oseq;
        rrep.dseq = self.own_seq;
        rrep.route = packet.route;
        rrep.path_id = path_id;
        rrep.meta = packet.meta;
        rrep.meta.tampered = false;
        if self.cfg.protocol != ProtocolKind::Mprf {
            sign(&mut rrep, &key);
        }
        vec![self.send_to(ctx, from, rrep)]
    }

    fn features(&self, rrep: &Packet) -> Option<SeqVector> {
        let f = self.rreq_fields.get(&(rrep.packet_id.checked_sub(1)?))?;
        let d = |a: u64, b: u64| a as f64 - b as f64;
        Some(SeqVector::new(d(rrep.sseq, f[0]), d(rrep.oseq, f[1]), d(rrep.dseq, f[2])))
    }

    /// A reply heard in passing. Only used to widen the training sample.
    pub fn overhear_rrep(&mut self, ctx: &Ctx, packet: &Packet) {
        if self.cfg.protocol == ProtocolKind::Tap3 && ctx.training && self.attack.is_none() {
            if let Some(x) = self.features(packet) {
                self.monitor.push_untrained(x);
            }
        }
    }

    pub fn handle_rrep(&mut self, ctx: &mut Ctx, mut packet: Packet, from: NodeId) -> Vec<Action> {
        if self.cfg.protocol == ProtocolKind::Tap3 && self.attack.is_none() {
            if self.suspects.contains(&from) {
                return Vec::new();
            }
            if let Some(x) = self.features(&packet) {
                if ctx.training {
                    self.monitor.push_untrained(x);
                } else if let Ok(v) = self.monitor.classify(&x) {
                    let bad = v.label == Label::Malicious;
                    if packet.meta.tampered {
                        self.stats.forged_checked += 1;
                        self.stats.forged_flagged += bad as u64;
                    } else {
                        self.stats.clean_checked += 1;
                        self.stats.clean_flagged += bad as u64;
                    }
                    if bad {
                        self.suspects.insert(from);
                        return vec![Action::Flagged { node: from }];
                    }
                }
            }
        }

        if let Some(flow_id) = self.flow_for_reply(&packet) {
            return self.accept_reply(ctx, flow_id, packet, from);
        }

        let Some(rev) = self.reverse.get(&packet.forward).copied() else {
            return Vec::new();
        };
        match self.attack_live(ctx) {
            Some(AttackKind::SeqInflation { delta }) => {
                packet.dseq += delta;
                packet.meta.tampered = true;
            }
            Some(AttackKind::BlackHole { delta }) => {
                packet.dseq = self.max_dseq_seen.max(packet.dseq) + delta;
                packet.meta.tampered = true;
            }
            _ => {}
        }
        self.forward.insert(
            (packet.reverse, packet.path_id),
            ForwardEntry {
                entry: RouteEntry {
                    fellow_alias: packet.reverse,
                    next_hop: from,
                    path_id: packet.path_id,
                    trust: Trust::Normal,
                    established_at: ctx.now,
                },
                back: packet.forward,
            },
        );
        self.log(ctx, &packet, Event::Received, from);
        packet.hop_count = packet.hop_count.saturating_add(1);
        self.log(ctx, &packet, Event::Forwarded, from);
        vec![self.send_to(ctx, rev.next_hop, packet)]
    }

    pub fn handle_data(&mut self, ctx: &mut Ctx, mut packet: Packet, from: NodeId) -> Vec<Action> {
        let is_dest = match self.cfg.protocol {
            ProtocolKind::Mprf => packet.forward == Address::Plain(self.id),
            ProtocolKind::SMprf => self.static_aliases.contains_key(&packet.forward),
            ProtocolKind::Tap3 => self.known_dest_aliases.contains_key(&packet.forward),
        };
        if is_dest {
            self.log(ctx, &packet, Event::Received, from);
            return vec![Action::Deliver(packet)];
        }
        match self.attack_live(ctx) {
            Some(AttackKind::BlackHole { .. }) => {
                return vec![Action::Drop {
                    packet,
                    cause: DropCause::Attack,
                }];
            }
            Some(AttackKind::PassiveDrop { p }) if ctx.rng.gen::<f64>() < p => {
                return vec![Action::Drop {
                    packet,
                    cause: DropCause::Attack,
                }];
            }
            _ => {}
        }
        self.log(ctx, &packet, Event::Received, from);
        let entry = self.forward.get(&(packet.forward, packet.path_id)).cloned().or_else(|| {
            if self.cfg.protocol != ProtocolKind::Mprf {
                return None;
            }
            self.forward
                .iter()
                .filter(|((alias, _), _)| *alias == packet.forward)
                .min_by_key(|((_, path), _)| *path)
                .map(|(_, e)| e.clone())
        });
        let Some(fe) = entry else {
            self.log(ctx, &packet, Event::Dropped, from);
            return vec![Action::Drop {
                packet,
                cause: DropCause::Link,
            }];
        };
        let next = fe.entry.next_hop;
        if !(ctx.reachable)(next) {
            self.log(ctx, &packet, Event::Dropped, from);
            let mut actions = self.route_error(ctx, packet.forward, packet.path_id, fe.back);
            actions.push(Action::Drop {
                packet,
                cause: DropCause::Link,
            });
            return actions;
        }
        packet.hop_count = packet.hop_count.saturating_add(1);
        self.log(ctx, &packet, Event::Forwarded, from);
        vec![Action::Send {
            to: Some(next),
            packet,
        }]
    }

    /// Drops the broken forward entry and tells the source.
    fn route_error(&mut self, ctx: &mut Ctx, dest_alias: Address, path_id: u8, source_alias: Address) -> Vec<Action> {
        self.forward.remove(&(dest_alias, path_id));
        let Some(rev) = self.reverse.get(&source_alias).copied() else {
            return Vec::new();
        };
        let id = ctx.alloc_ids(1);
        let mut rerr = Packet::new(PacketKind::Rerr, id, source_alias, dest_alias);
        rerr.path_id = path_id;
        rerr.meta.created_at = ctx.now;
        match self.send_to(ctx, rev.next_hop, rerr) {
            a @ Action::Send { .. } => vec![a],
            _ => Vec::new(),
        }
    }

    pub fn handle_rerr(&mut self, ctx: &mut Ctx, packet: Packet, _from: NodeId) -> Vec<Action> {
        let mut hit_source = false;
        for flow in self.flows.values_mut() {
            for p in flow.paths.iter_mut() {
                if p.reverse == packet.forward && p.forward == packet.reverse && p.path_id == packet.path_id {
                    p.broken = true;
                    hit_source = true;
                }
            }
        }
        if hit_source {
            return Vec::new();
        }
        if self.forward.remove(&(packet.reverse, packet.path_id)).is_none() {
            return Vec::new();
        }
        let Some(rev) = self.reverse.get(&packet.forward).copied() else {
            return Vec::new();
        };
        match self.send_to(ctx, rev.next_hop, packet) {
            a @ Action::Send { .. } => vec![a],
            _ => Vec::new(),
        }
    }
}
