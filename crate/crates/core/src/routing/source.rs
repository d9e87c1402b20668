use std::collections::{HashMap, VecDeque};

use super::packet::{sign, verify, Address, Packet, PacketKind, DATA_PAYLOAD_BYTES};
use super::paths::{admit_path, select_paths, Path, RoundRobin};
use super::router::{Action, Ctx, DropCause, Flow, Router, SentRecord, SourceDiscovery};
use super::ProtocolKind;
use crate::audit::Event;
use crate::crypto::{ChainDirection, NodeId, PseudonymChain};

impl Router {
    /// Registers a flow originating here.
    pub fn add_flow(&mut self, ctx: &Ctx, id: usize, dest: NodeId) {
        let (ps, pd) = match self.cfg.protocol {
            ProtocolKind::Mprf => (None, None),
            _ => {
                let key = ctx.keys.pairwise(self.id, dest);
                (
                    Some(PseudonymChain::new(key.clone(), self.id, ChainDirection::ForwardOfSource)),
                    Some(PseudonymChain::new(key, dest, ChainDirection::ForwardOfDestination)),
                )
            }
        };
        self.flows.insert(
            id,
            Flow {
                id,
                dest,
                ps,
                pd,
                pending: None,
                backoff: self.cfg.initial_backoff,
                discoveries: HashMap::new(),
                paths: Vec::new(),
                next_serial: 0,
                rr: RoundRobin::default(),
                buffer: VecDeque::new(),
                known_dseq: 1,
                data_seq: 0,
                sent: Vec::new(),
                path_nodes: HashMap::new(),
                discoveries_started: 0,
            },
        );
    }

    /// Broadcasts a route request for `flow` and arms its timeout.
    pub fn originate_route_request(&mut self, ctx: &mut Ctx, flow_id: usize) -> Vec<Action> {
        let protocol = self.cfg.protocol;
        let me = self.id;
        let q = {
            let id = *ctx.next_id;
            *ctx.next_id += 2;
            id
        };
        self.own_seq += 1;
        self.oseq_counter += 1;
        let flow = self.flows.get_mut(&flow_id).expect("known flow");
        let (forward, reverse) = flow.aliases(me, protocol);
        let mut rreq = Packet::new(PacketKind::Rreq, q, forward, reverse);
        rreq.sseq = self.own_seq;
        rreq.oseq = self.oseq_counter;
        rreq.dseq = flow.known_dseq;
        rreq.meta.created_at = ctx.now;
        rreq.meta.flow = Some(flow_id);
        if protocol != ProtocolKind::Mprf {
            sign(&mut rreq, &ctx.keys.pairwise(me, flow.dest));
        }
        flow.pending = Some(q);
        flow.discoveries_started += 1;
        flow.discoveries.insert(
            q,
            SourceDiscovery {
                forward,
                reverse,
                started_at: ctx.now,
                answered: false,
            },
        );
        let at = ctx.now + flow.backoff;
        self.seen.insert((rreq.oseq, reverse));
        self.rreq_fields.insert(q, [rreq.sseq, rreq.oseq, rreq.dseq]);
        self.log(ctx, &rreq, Event::Forwarded, me);
        vec![
            Action::Send { to: None, packet: rreq },
            Action::DiscoveryTimer {
                at,
                flow: flow_id,
                request: q,
            },
        ]
    }

    /// Retries an unanswered discovery with doubled backoff.
    pub fn discovery_timeout(&mut self, ctx: &mut Ctx, flow_id: usize, request: u64) -> Vec<Action> {
        let max = self.cfg.max_backoff;
        let Some(flow) = self.flows.get_mut(&flow_id) else {
            return Vec::new();
        };
        if flow.pending != Some(request) {
            return Vec::new();
        }
        flow.pending = None;
        flow.backoff = (flow.backoff * 2.0).min(max);
        if self.usable_paths(flow_id, ctx.now).is_empty() {
            return self.originate_route_request(ctx, flow_id);
        }
        Vec::new()
    }

    pub(crate) fn flow_for_reply(&self, rrep: &Packet) -> Option<usize> {
        let q = rrep.packet_id.checked_sub(1)?;
        self.flows
            .values()
            .find(|f| f.discoveries.get(&q).is_some_and(|d| d.reverse == rrep.forward && d.forward == rrep.reverse))
            .map(|f| f.id)
    }

    pub(crate) fn accept_reply(&mut self, ctx: &mut Ctx, flow_id: usize, rrep: Packet, from: NodeId) -> Vec<Action> {
        let protocol = self.cfg.protocol;
        let me = self.id;
        let distrusted = self.distrusted();
        let flow = self.flows.get(&flow_id).expect("known flow");
        if protocol != ProtocolKind::Mprf && !verify(&rrep, &ctx.keys.pairwise(me, flow.dest)) {
            return Vec::new();
        }
        let nodes = rrep.route.clone();
        if protocol == ProtocolKind::Tap3 && nodes.iter().any(|n| distrusted.contains(n)) {
            return Vec::new();
        }
        self.log(ctx, &rrep, Event::Received, from);

        let q = rrep.packet_id - 1;
        let flow = self.flows.get_mut(&flow_id).expect("known flow");
        let disc = flow.discoveries.get_mut(&q).expect("matched discovery");
        let first = !disc.answered;
        disc.answered = true;
        let started_at = disc.started_at;
        let serial = flow.next_serial;
        flow.next_serial += 1;
        flow.path_nodes.insert(serial, nodes.clone());
        let path = Path {
            serial,
            path_id: rrep.path_id,
            nodes,
            discovered_at: ctx.now,
            dseq: rrep.dseq,
            forward: rrep.reverse,
            reverse: rrep.forward,
            broken: false,
        };
        let lifetime = self.cfg.route_lifetime;
        flow.paths.retain(|p| !p.broken && ctx.now - p.discovered_at < lifetime);
        admit_path(&mut flow.paths, path);
        flow.known_dseq = flow.known_dseq.max(rrep.dseq);

        let mut actions = Vec::new();
        if first {
            if flow.pending == Some(q) {
                flow.pending = None;
            }
            flow.backoff = self.cfg.initial_backoff;
            if let (Some(ps), Some(pd)) = (flow.ps.as_mut(), flow.pd.as_mut()) {
                if protocol == ProtocolKind::Tap3 {
                    ps.advance_in_place();
                    pd.advance_in_place();
                }
            }
            let mut ack = Packet::new(PacketKind::RrepAck, rrep.packet_id, rrep.reverse, rrep.forward);
            ack.meta.created_at = ctx.now;
            ack.meta.flow = Some(flow_id);
            if protocol != ProtocolKind::Mprf {
                sign(&mut ack, &ctx.keys.pairwise(me, flow.dest));
            }
            if (ctx.reachable)(from) {
                actions.push(Action::Send {
                    to: Some(from),
                    packet: ack,
                });
            }
            actions.push(Action::DiscoveryDone {
                flow: flow_id,
                elapsed: ctx.now - started_at,
            });
        }
        actions.extend(self.flush(ctx, flow_id));
        actions
    }

    /// Unexpired paths `select_paths` allows, in use order.
    pub fn usable_paths(&self, flow_id: usize, now: f64) -> Vec<Path> {
        let Some(flow) = self.flows.get(&flow_id) else {
            return Vec::new();
        };
        let live: Vec<Path> = flow
            .paths
            .iter()
            .filter(|p| now - p.discovered_at < self.cfg.route_lifetime)
            .cloned()
            .collect();
        select_paths(self.cfg.protocol, &live, &self.distrusted()).unwrap_or_default()
    }

    /// Generates one CBR data packet for `flow`.
    pub fn app_send(&mut self, ctx: &mut Ctx, flow_id: usize) -> Vec<Action> {
        let id = {
            let id = *ctx.next_id;
            *ctx.next_id += 1;
            id
        };
        let flow = self.flows.get_mut(&flow_id).expect("known flow");
        flow.data_seq += 1;
        let mut packet = Packet::new(PacketKind::Data, id, Address::Plain(flow.dest), Address::Plain(self.id));
        packet.payload_size = DATA_PAYLOAD_BYTES;
        packet.sseq = flow.data_seq;
        packet.meta.created_at = ctx.now;
        packet.meta.flow = Some(flow_id);
        let mut actions = Vec::new();
        if !self.try_send(ctx, flow_id, &mut packet, &mut actions) {
            self.buffer(flow_id, packet, &mut actions);
            let flow = &self.flows[&flow_id];
            if flow.pending.is_none() {
                actions.extend(self.originate_route_request(ctx, flow_id));
            }
        }
        actions
    }

    fn buffer(&mut self, flow_id: usize, packet: Packet, actions: &mut Vec<Action>) {
        let cap = self.cfg.buffer_cap;
        let flow = self.flows.get_mut(&flow_id).expect("known flow");
        flow.buffer.push_back(packet);
        while flow.buffer.len() > cap {
            let oldest = flow.buffer.pop_front().expect("non-empty");
            actions.push(Action::Drop {
                packet: oldest,
                cause: DropCause::Buffer,
            });
        }
    }

    /// Puts `packet` on the next usable path. Paths whose first hop has moved
    /// away are marked broken and skipped.
    fn try_send(&mut self, ctx: &mut Ctx, flow_id: usize, packet: &mut Packet, actions: &mut Vec<Action>) -> bool {
        loop {
            let usable = self.usable_paths(flow_id, ctx.now);
            if usable.is_empty() {
                return false;
            }
            let flow = self.flows.get_mut(&flow_id).expect("known flow");
            let path = flow.rr.pick(&usable).expect("non-empty").clone();
            let next = path.nodes.first().copied().unwrap_or(flow.dest);
            if !(ctx.reachable)(next) {
                if let Some(p) = flow.paths.iter_mut().find(|p| p.serial == path.serial) {
                    p.broken = true;
                }
                continue;
            }
            packet.forward = path.forward;
            packet.reverse = path.reverse;
            packet.path_id = path.path_id;
            packet.oseq = path.serial;
            packet.dseq = path.dseq;
            flow.sent.push(SentRecord {
                packet_id: packet.packet_id,
                serial: path.serial,
                created_at: packet.meta.created_at,
                sent_at: ctx.now,
            });
            let me = self.id;
            self.log(ctx, packet, Event::Forwarded, me);
            actions.push(Action::Send {
                to: Some(next),
                packet: packet.clone(),
            });
            return true;
        }
    }

    /// Sends whatever is buffered while paths last.
    pub fn flush(&mut self, ctx: &mut Ctx, flow_id: usize) -> Vec<Action> {
        let mut actions = Vec::new();
        while let Some(mut packet) = self.flows.get_mut(&flow_id).and_then(|f| f.buffer.pop_front()) {
            if !self.try_send(ctx, flow_id, &mut packet, &mut actions) {
                self.flows.get_mut(&flow_id).expect("known flow").buffer.push_front(packet);
                break;
            }
        }
        actions
    }
}
