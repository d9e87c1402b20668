use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::config::{ConfigError, ScenarioConfig};
use super::mobility::{distance, random_waypoint_step, MobilityParams, MobilityState, Point};
use crate::audit::{ActiveAttacker, AuditedHop, LogEntry, ProvenEntry, PublishedLog, RouteAliases, RouteAudit};
use crate::crypto::{KeyRing, NodeId, Pseudonym};
use crate::metrics::{compute_avg_delay, compute_overhead, compute_pdr, MetricsError, MetricsReport};
use crate::routing::{Action, Ctx, DropCause, MonitorStats, Packet, PacketKind, ProtocolKind, Router, RouterConfig};

pub const TRACE_HEADER: &str = "time,kind,from,to,packet_id,path_id,bytes";

const SIGNAL_SPEED: f64 = 3.0e8;
/// Audits for epoch k start this long after the epoch closes.
const AUDIT_GRACE: f64 = 1.0;
/// Packets sent this close to the audit are left for the next round of evidence.
const AUDIT_CUTOFF: f64 = 0.5;
const AUDIT_MESSAGE_BYTES: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub trace: bool,
    /// Keep a copy of every RREQ/RREP header put on the air.
    pub capture_headers: bool,
    /// Keep every route audit for offline replay.
    pub record_audits: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CapturedHeader {
    pub kind: PacketKind,
    pub flow: Option<usize>,
    pub bytes: Vec<u8>,
}

/// Where every data packet of one flow ended up.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlowAccount {
    pub source: NodeId,
    pub dest: NodeId,
    pub sent: u64,
    pub delivered: u64,
    pub dropped_link: u64,
    pub dropped_buffer: u64,
    pub dropped_attack: u64,
    /// On the air, queued or buffered at the source when the run ended.
    pub in_flight: u64,
}

impl FlowAccount {
    pub fn accounted(&self) -> u64 {
        self.delivered + self.dropped_link + self.dropped_buffer + self.dropped_attack + self.in_flight
    }

    pub fn balanced(&self) -> bool {
        self.sent == self.accounted()
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub flows: Vec<FlowAccount>,
    pub control_tx: u64,
    pub audit_tx: u64,
    pub data_tx: u64,
    pub discoveries: u64,
    pub monitor: MonitorStats,
    /// Largest threshold any honest monitor trained.
    pub max_threshold: Option<f64>,
    /// Nodes some honest monitor flagged.
    pub flagged: BTreeSet<NodeId>,
    pub accused_active: BTreeSet<NodeId>,
    pub accused_passive: BTreeSet<NodeId>,
    pub trace: Vec<String>,
    pub audit_trace: Vec<String>,
    pub headers: Vec<CapturedHeader>,
    pub audits: Vec<(usize, RouteAudit)>,
    /// (created, delivered) for every delivered data packet.
    pub delays: Vec<(f64, f64)>,
    pub final_positions: Vec<Point>,
    /// Every sampled position stayed inside the area.
    pub positions_in_area: bool,
}

impl RunOutput {
    pub fn delivered(&self) -> u64 {
        self.flows.iter().map(|f| f.delivered).sum()
    }

    pub fn sent(&self) -> u64 {
        self.flows.iter().map(|f| f.sent).sum()
    }

    pub fn trace_text(&self) -> String {
        let mut s = String::from(TRACE_HEADER);
        s.push('\n');
        for row in &self.trace {
            s.push_str(row);
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("flow {flow}: {sent} sent but {accounted} accounted for")]
    Conservation { flow: usize, sent: u64, accounted: u64 },
}

enum SimEvent {
    Arrival {
        to: NodeId,
        from: NodeId,
        packet: Packet,
        overheard: bool,
    },
    AppSend {
        flow: usize,
    },
    Discovery {
        source: NodeId,
        flow: usize,
        request: u64,
    },
    TrainingEnd,
    Audit {
        epoch: u64,
    },
}

struct Scheduled {
    time: f64,
    seq: u64,
    event: SimEvent,
}

impl Ord for Scheduled {
    // Reversed so the heap pops the earliest event, ties in insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

struct Sim<'c> {
    cfg: &'c ScenarioConfig,
    opts: RunOptions,
    now: f64,
    seq: u64,
    queue: BinaryHeap<Scheduled>,
    routers: Vec<Router>,
    params: MobilityParams,
    mobility: Vec<MobilityState>,
    mob_rngs: Vec<ChaCha8Rng>,
    positions: Vec<Point>,
    busy_until: Vec<f64>,
    keys: KeyRing,
    aliases: Vec<Pseudonym>,
    next_id: u64,
    attack_rng: ChaCha8Rng,
    endpoints: Vec<(NodeId, NodeId)>,
    accounts: Vec<FlowAccount>,
    delays: Vec<(f64, f64)>,
    control_tx: u64,
    audit_tx: u64,
    data_tx: u64,
    discoveries: u64,
    flagged: BTreeSet<NodeId>,
    accused_active: BTreeSet<NodeId>,
    accused_passive: BTreeSet<NodeId>,
    trace: Vec<String>,
    audit_trace: Vec<String>,
    headers: Vec<CapturedHeader>,
    audits: Vec<(usize, RouteAudit)>,
    in_area: bool,
}

/// Runs one scenario to completion.
pub fn run(cfg: &ScenarioConfig, opts: RunOptions) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let n = cfg.node_count;
    let seed = cfg.rng_seed;
    let keys = KeyRing::generate(n, &mut stream(seed, 1));
    let aliases = (0..n as u64).map(|i| keys.log_alias(NodeId(i))).collect();
    let params = MobilityParams {
        area: cfg.area,
        max_speed: cfg.max_speed,
        pause_time: cfg.pause_time,
    };
    let mut mob_rngs: Vec<_> = (0..n as u64).map(|i| stream(seed, 100 + i)).collect();
    let mobility: Vec<_> = mob_rngs
        .iter_mut()
        .map(|r| MobilityState::initial(r, &params))
        .collect();
    let positions = mobility.iter().map(|m| m.position).collect();

    let mut flow_rng = stream(seed, 2);
    let mut honest: Vec<NodeId> = (0..n as u64)
        .map(NodeId)
        .filter(|&id| cfg.attack_of(id).is_none())
        .collect();
    honest.shuffle(&mut flow_rng);
    let endpoints: Vec<(NodeId, NodeId)> = (0..cfg.flows).map(|f| (honest[2 * f], honest[2 * f + 1])).collect();
    let starts: Vec<f64> = endpoints
        .iter()
        .map(|_| flow_rng.gen_range(0.0..0.5 * cfg.training_end()))
        .collect();

    let router_cfg = RouterConfig {
        epoch_len: cfg.audit_epoch,
        ..RouterConfig::new(cfg.protocol)
    };
    let routers = (0..n as u64)
        .map(|i| Router::new(NodeId(i), router_cfg.clone(), cfg.attack_of(NodeId(i)), &keys))
        .collect();

    let mut sim = Sim {
        cfg,
        opts,
        now: 0.0,
        seq: 0,
        queue: BinaryHeap::new(),
        routers,
        params,
        mobility,
        mob_rngs,
        positions,
        busy_until: vec![0.0; n],
        keys,
        aliases,
        next_id: 1,
        attack_rng: stream(seed, 3),
        accounts: endpoints
            .iter()
            .map(|&(source, dest)| FlowAccount {
                source,
                dest,
                ..FlowAccount::default()
            })
            .collect(),
        endpoints,
        delays: Vec::new(),
        control_tx: 0,
        audit_tx: 0,
        data_tx: 0,
        discoveries: 0,
        flagged: BTreeSet::new(),
        accused_active: BTreeSet::new(),
        accused_passive: BTreeSet::new(),
        trace: Vec::new(),
        audit_trace: Vec::new(),
        headers: Vec::new(),
        audits: Vec::new(),
        in_area: true,
    };

    for (f, &start) in starts.iter().enumerate() {
        let (src, dst) = sim.endpoints[f];
        sim.with_ctx(src, |r, ctx| r.add_flow(ctx, f, dst));
        sim.schedule(start, SimEvent::AppSend { flow: f });
    }
    sim.schedule(cfg.training_end(), SimEvent::TrainingEnd);
    if cfg.protocol == ProtocolKind::Tap3 {
        sim.schedule(cfg.audit_epoch + AUDIT_GRACE, SimEvent::Audit { epoch: 0 });
    }
    sim.run_loop();
    sim.finish()
}

impl Sim<'_> {
    fn schedule(&mut self, time: f64, event: SimEvent) {
        self.seq += 1;
        self.queue.push(Scheduled {
            time,
            seq: self.seq,
            event,
        });
    }

    fn advance_to(&mut self, t: f64) {
        if t <= self.now {
            return;
        }
        let (w, h) = self.cfg.area;
        for i in 0..self.mobility.len() {
            self.mobility[i] = random_waypoint_step(self.mobility[i], t, &mut self.mob_rngs[i], &self.params);
            let p = self.mobility[i].position;
            self.in_area &= (0.0..=w).contains(&p.0) && (0.0..=h).contains(&p.1);
            self.positions[i] = p;
        }
        self.now = t;
    }

    fn with_ctx<R>(&mut self, node: NodeId, f: impl FnOnce(&mut Router, &mut Ctx) -> R) -> R {
        let i = node.0 as usize;
        let here = self.positions[i];
        let positions = &self.positions;
        let range = self.cfg.radio_range;
        let reachable = |to: NodeId| to != node && distance(here, positions[to.0 as usize]) <= range;
        let mut ctx = Ctx {
            now: self.now,
            keys: &self.keys,
            aliases: &self.aliases,
            next_id: &mut self.next_id,
            rng: &mut self.attack_rng,
            reachable: &reachable,
            training: self.now < self.cfg.training_end(),
        };
        f(&mut self.routers[i], &mut ctx)
    }

    fn run_loop(&mut self) {
        while let Some(s) = self.queue.pop() {
            if s.time > self.cfg.sim_duration {
                self.queue.push(s);
                break;
            }
            self.advance_to(s.time);
            match s.event {
                SimEvent::Arrival {
                    to,
                    from,
                    packet,
                    overheard,
                } => {
                    if overheard {
                        self.with_ctx(to, |r, ctx| r.overhear_rrep(ctx, &packet));
                    } else {
                        let actions = self.with_ctx(to, |r, ctx| r.handle(ctx, packet, from));
                        self.apply(to, actions);
                    }
                }
                SimEvent::AppSend { flow } => {
                    let src = self.endpoints[flow].0;
                    self.accounts[flow].sent += 1;
                    let actions = self.with_ctx(src, |r, ctx| r.app_send(ctx, flow));
                    self.apply(src, actions);
                    let next = self.now + 1.0 / self.cfg.pkt_rate;
                    if next <= self.cfg.sim_duration {
                        self.schedule(next, SimEvent::AppSend { flow });
                    }
                }
                SimEvent::Discovery { source, flow, request } => {
                    let actions = self.with_ctx(source, |r, ctx| r.discovery_timeout(ctx, flow, request));
                    self.apply(source, actions);
                }
                SimEvent::TrainingEnd => {
                    for r in &mut self.routers {
                        r.finish_training();
                    }
                }
                SimEvent::Audit { epoch } => {
                    self.audit(epoch);
                    let next = (epoch + 2) as f64 * self.cfg.audit_epoch + AUDIT_GRACE;
                    if next <= self.cfg.sim_duration {
                        self.schedule(next, SimEvent::Audit { epoch: epoch + 1 });
                    }
                }
            }
        }
    }

    fn apply(&mut self, node: NodeId, actions: Vec<Action>) {
        for action in actions {
            match action {
                Action::Send { to, packet } => self.transmit(node, to, packet),
                Action::Deliver(p) => {
                    if let Some(f) = p.meta.flow {
                        self.accounts[f].delivered += 1;
                        self.delays.push((p.meta.created_at, self.now));
                    }
                }
                Action::Drop { packet, cause } => {
                    if packet.kind != PacketKind::Data {
                        continue;
                    }
                    if let Some(f) = packet.meta.flow {
                        let acc = &mut self.accounts[f];
                        match cause {
                            DropCause::Link => acc.dropped_link += 1,
                            DropCause::Buffer => acc.dropped_buffer += 1,
                            DropCause::Attack => acc.dropped_attack += 1,
                        }
                    }
                }
                Action::DiscoveryTimer { at, flow, request } => {
                    self.schedule(
                        at,
                        SimEvent::Discovery {
                            source: node,
                            flow,
                            request,
                        },
                    );
                }
                Action::DiscoveryDone { .. } => self.discoveries += 1,
                Action::Flagged { node: suspect } => {
                    if self.cfg.attack_of(node).is_none() {
                        self.flagged.insert(suspect);
                    }
                }
            }
        }
    }

    fn trace_row(&mut self, kind: &str, from: NodeId, to: Option<NodeId>, packet_id: u64, path_id: u64, bytes: usize) {
        if self.opts.trace {
            let to = to.map_or_else(|| "*".to_string(), |t| t.to_string());
            self.trace
                .push(format!("{:.9},{kind},{from},{to},{packet_id},{path_id},{bytes}", self.now));
        }
    }

    fn in_range(&self, of: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let here = self.positions[of.0 as usize];
        let range = self.cfg.radio_range;
        self.positions
            .iter()
            .enumerate()
            .filter(move |(i, p)| *i as u64 != of.0 && distance(here, **p) <= range)
            .map(|(i, _)| NodeId(i as u64))
    }

    /// Serializes on the sender's link, then delivers after propagation.
    fn transmit(&mut self, from: NodeId, to: Option<NodeId>, packet: Packet) {
        let header = packet.header_bytes();
        let bytes = header.len() + packet.payload_size as usize;
        if packet.kind.is_control() {
            self.control_tx += 1;
        } else {
            self.data_tx += 1;
        }
        self.trace_row(packet.kind.as_str(), from, to, packet.packet_id, packet.path_id as u64, bytes);
        if self.opts.capture_headers && matches!(packet.kind, PacketKind::Rreq | PacketKind::Rrep) {
            self.headers.push(CapturedHeader {
                kind: packet.kind,
                flow: packet.meta.flow,
                bytes: header,
            });
        }
        let i = from.0 as usize;
        let start = self.now.max(self.busy_until[i]);
        let done = start + bytes as f64 * 8.0 / self.cfg.link_rate;
        self.busy_until[i] = done;
        let here = self.positions[i];
        let arrival = |p: Point| done + distance(here, p) / SIGNAL_SPEED;

        let listeners: Vec<NodeId> = match to {
            Some(_) if self.cfg.protocol == ProtocolKind::Tap3 && packet.kind == PacketKind::Rrep => {
                self.in_range(from).collect()
            }
            Some(t) => vec![t],
            None => self.in_range(from).collect(),
        };
        for n in listeners {
            let at = arrival(self.positions[n.0 as usize]);
            let overheard = to.is_some_and(|t| t != n);
            self.schedule(
                at,
                SimEvent::Arrival {
                    to: n,
                    from,
                    packet: packet.clone(),
                    overheard,
                },
            );
        }
    }

    /// Audits every multi-hop path that carried traffic created in `epoch`.
    fn audit(&mut self, epoch: u64) {
        let cutoff = self.now - AUDIT_CUTOFF;
        let mut jobs = Vec::new();
        for (f, &(src, dst)) in self.endpoints.iter().enumerate() {
            let router = &self.routers[src.0 as usize];
            let Some(flow) = router.flow(f) else { continue };
            let mut by_path: BTreeMap<u64, HashSet<u64>> = BTreeMap::new();
            for rec in &flow.sent {
                if router.logs.epoch_of(rec.created_at) == epoch && rec.sent_at <= cutoff {
                    by_path.entry(rec.serial).or_default().insert(rec.packet_id);
                }
            }
            for (serial, pids) in by_path {
                let nodes = flow.path_nodes.get(&serial).cloned().unwrap_or_default();
                if !nodes.is_empty() {
                    jobs.push((f, src, dst, serial, nodes, pids));
                }
            }
        }

        let mut published: HashMap<NodeId, PublishedLog> = HashMap::new();
        for (f, src, dst, serial, nodes, pids) in jobs {
            let alias = |n: NodeId| self.aliases[n.0 as usize];
            let source_log: Vec<LogEntry> = self.routers[src.0 as usize]
                .logs
                .partition(epoch)
                .map(|l| l.entries())
                .unwrap_or(&[])
                .iter()
                .filter(|e| e.node_alias == alias(src) && pids.contains(&e.packet_id))
                .copied()
                .collect();
            let mut disclose = |n: NodeId| {
                let full = published.entry(n).or_insert_with(|| {
                    let entries = self.routers[n.0 as usize]
                        .logs
                        .partition(epoch)
                        .map(|l| l.entries())
                        .unwrap_or(&[]);
                    PublishedLog::publish(entries)
                });
                PublishedLog {
                    root: full.root,
                    disclosed: full
                        .disclosed
                        .iter()
                        .filter(|p: &&ProvenEntry| pids.contains(&p.entry.packet_id))
                        .cloned()
                        .collect(),
                }
            };
            let hops = nodes
                .iter()
                .map(|&n| AuditedHop {
                    alias: alias(n),
                    log: Some(disclose(n)),
                })
                .collect();
            let destination = Some(disclose(dst));
            let audit = RouteAudit {
                aliases: RouteAliases {
                    source: alias(src),
                    intermediates: nodes.iter().map(|&n| alias(n)).collect(),
                    destination: alias(dst),
                },
                source_log,
                hops,
                destination,
            };
            let Ok(report) = audit.run() else { continue };

            for &n in nodes.iter().chain(std::iter::once(&dst)) {
                self.control_tx += 1;
                self.audit_tx += 1;
                self.trace_row("AUDIT", src, Some(n), 0, serial, AUDIT_MESSAGE_BYTES);
            }
            self.audit_trace.push(report.trace_row(f));
            let source = &mut self.routers[src.0 as usize];
            match report.active_attacker {
                Some(ActiveAttacker::Target) => {
                    source.distrust(dst);
                    self.accused_active.insert(dst);
                }
                Some(ActiveAttacker::Position(p)) => {
                    source.distrust(nodes[p - 1]);
                    self.accused_active.insert(nodes[p - 1]);
                }
                None => {}
            }
            for &p in &report.passive_attackers {
                source.distrust(nodes[p - 1]);
                self.accused_passive.insert(nodes[p - 1]);
            }
            if self.opts.record_audits {
                self.audits.push((f, audit));
            }
        }
    }

    fn finish(mut self) -> Result<RunOutput, RunError> {
        for s in self.queue.drain() {
            if let SimEvent::Arrival {
                packet, overheard: false, ..
            } = s.event
            {
                if packet.kind == PacketKind::Data {
                    if let Some(f) = packet.meta.flow {
                        self.accounts[f].in_flight += 1;
                    }
                }
            }
        }
        for (f, &(src, _)) in self.endpoints.iter().enumerate() {
            let buffered = self.routers[src.0 as usize].flow(f).map_or(0, |fl| fl.buffered());
            self.accounts[f].in_flight += buffered as u64;
        }
        for (f, acc) in self.accounts.iter().enumerate() {
            if !acc.balanced() {
                return Err(RunError::Conservation {
                    flow: f,
                    sent: acc.sent,
                    accounted: acc.accounted(),
                });
            }
        }

        let attackers: BTreeSet<NodeId> = self.cfg.attackers.iter().map(|(n, _)| *n).collect();
        let active: BTreeSet<NodeId> = self.flagged.union(&self.accused_active).copied().collect();
        let named: BTreeSet<NodeId> = active.union(&self.accused_passive).copied().collect();
        let sent: u64 = self.accounts.iter().map(|a| a.sent).sum();
        let delivered: u64 = self.accounts.iter().map(|a| a.delivered).sum();
        let mut monitor = MonitorStats::default();
        for r in &self.routers {
            monitor.forged_checked += r.stats.forged_checked;
            monitor.forged_flagged += r.stats.forged_flagged;
            monitor.clean_checked += r.stats.clean_checked;
            monitor.clean_flagged += r.stats.clean_flagged;
        }
        let max_threshold = self
            .routers
            .iter()
            .filter(|r| self.cfg.attack_of(r.id).is_none())
            .filter_map(|r| r.monitor().threshold())
            .reduce(f64::max);
        let report = MetricsReport {
            protocol: self.cfg.protocol,
            pause_time: self.cfg.pause_time,
            seed: self.cfg.rng_seed,
            pdr: compute_pdr(delivered, sent)?,
            avg_delay: compute_avg_delay(&self.delays),
            overhead: compute_overhead(self.control_tx, delivered),
            detected_active: active.intersection(&attackers).count() as u64,
            detected_passive: self.accused_passive.intersection(&attackers).count() as u64,
            false_positives: named.difference(&attackers).count() as u64,
        };
        Ok(RunOutput {
            report,
            flows: self.accounts,
            control_tx: self.control_tx,
            audit_tx: self.audit_tx,
            data_tx: self.data_tx,
            discoveries: self.discoveries,
            monitor,
            max_threshold,
            flagged: self.flagged,
            accused_active: self.accused_active,
            accused_passive: self.accused_passive,
            trace: self.trace,
            audit_trace: self.audit_trace,
            headers: self.headers,
            audits: self.audits,
            delays: self.delays,
            final_positions: self.positions,
            positions_in_area: self.in_area,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::contains_node_id;

    fn small(protocol: ProtocolKind) -> ScenarioConfig {
        let mut c = ScenarioConfig::desk_with_attackers(protocol);
        c.sim_duration = 60.0;
        c.rng_seed = 11;
        c
    }

    fn traced() -> RunOptions {
        RunOptions {
            trace: true,
            ..RunOptions::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        for p in ProtocolKind::ALL {
            let a = run(&small(p), traced()).unwrap();
            let b = run(&small(p), traced()).unwrap();
            assert_eq!(a.report.csv_row(), b.report.csv_row());
            assert_eq!(a.trace_text(), b.trace_text());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let mut c = small(ProtocolKind::Tap3);
        let a = run(&c, traced()).unwrap();
        c.rng_seed = 12;
        let b = run(&c, traced()).unwrap();
        assert_ne!(a.trace_text(), b.trace_text());
    }

    #[test]
    fn every_packet_accounted_for() {
        for p in ProtocolKind::ALL {
            let out = run(&small(p), RunOptions::default()).unwrap();
            assert!(out.sent() > 0);
            for f in &out.flows {
                assert!(f.balanced(), "{p}: {f:?}");
            }
            assert!(out.positions_in_area);
        }
    }

    #[test]
    fn overhead_ties_out_against_trace() {
        for p in ProtocolKind::ALL {
            let out = run(&small(p), traced()).unwrap();
            let control = out
                .trace
                .iter()
                .filter(|r| {
                    let kind = r.split(',').nth(1).unwrap();
                    kind == "AUDIT" || PacketKind::parse(kind).is_some_and(PacketKind::is_control)
                })
                .count() as u64;
            assert_eq!(control, out.control_tx);
            let data = out.trace.iter().filter(|r| r.split(',').nth(1) == Some("DATA")).count() as u64;
            assert_eq!(data, out.data_tx);
            assert_eq!(out.report.overhead, compute_overhead(control, out.delivered()));
        }
    }

    #[test]
    fn single_hop_delay_is_transmission_plus_propagation() {
        let mut c = ScenarioConfig::desk(ProtocolKind::SMprf);
        c.node_count = 2;
        c.flows = 1;
        c.area = (100.0, 100.0);
        c.sim_duration = 30.0;
        c.pause_time = 30.0;
        let out = run(&c, traced()).unwrap();
        let bytes: f64 = out
            .trace
            .iter()
            .find(|r| r.split(',').nth(1) == Some("DATA"))
            .and_then(|r| r.rsplit(',').next())
            .unwrap()
            .parse()
            .unwrap();
        let d = distance(out.final_positions[0], out.final_positions[1]);
        let expected = bytes * 8.0 / c.link_rate + d / SIGNAL_SPEED;
        let exact = out
            .delays
            .iter()
            .filter(|(s, r)| ((r - s) - expected).abs() < 1e-12)
            .count();
        // Only packets that waited for a route discovery take longer.
        assert!(exact as f64 >= 0.9 * out.delays.len() as f64, "{exact} of {}", out.delays.len());
        assert!(out.delays.iter().all(|(s, r)| r - s >= expected - 1e-12));
    }

    #[test]
    fn tap3_headers_hide_end_points_but_mprf_does_not() {
        let opts = RunOptions {
            capture_headers: true,
            ..RunOptions::default()
        };
        let leaks = |p| {
            let out = run(&small(p), opts).unwrap();
            assert!(!out.headers.is_empty());
            out.headers
                .iter()
                .filter(|h| {
                    let f = &out.flows[h.flow.unwrap()];
                    contains_node_id(&h.bytes, f.source) || contains_node_id(&h.bytes, f.dest)
                })
                .count()
        };
        assert_eq!(leaks(ProtocolKind::Tap3), 0);
        assert!(leaks(ProtocolKind::Mprf) > 0);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut c = small(ProtocolKind::Tap3);
        c.pause_time = -1.0;
        assert!(matches!(run(&c, RunOptions::default()), Err(RunError::Config(_))));
    }

    #[test]
    fn recorded_audits_replay_to_the_same_verdicts() {
        let opts = RunOptions {
            record_audits: true,
            ..RunOptions::default()
        };
        let out = run(&small(ProtocolKind::Tap3), opts).unwrap();
        assert!(!out.audits.is_empty());
        let rows: Vec<String> = out
            .audits
            .iter()
            .map(|(f, a)| a.run().unwrap().trace_row(*f))
            .collect();
        assert_eq!(rows, out.audit_trace);
    }
}
