//! One simulation run: the event loop, packet forwarding and the behaviour
//! of fixed nodes (home agent, MAPs, correspondents, access points and
//! multicast listeners).

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::addr::{Addr, AddressRole};
use crate::binding::{BindingCache, CacheChange, INFINITE};
use crate::config::Variant;
use crate::engine::EventQueue;
use crate::mcast::{GroupRouting, RouteOutcome};
use crate::metrics::FlowLog;
use crate::mobile::{Anchor, Mobile};
use crate::packet::{Body, DataKind, Packet};
use crate::report::{Counters, GroupReception, Signal, SignalRecord, TrialResult};
use crate::scenario::Scenario;
use crate::time::{Micros, SimTime};
use crate::topology::{NodeId, Topology, TopologyError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("scenario has moves but no mobile node")]
    NoMobile,
}

#[derive(Debug, Clone)]
pub(crate) enum Action {
    /// Packet reaches a fixed node. `egress` carries the on-link address of
    /// the mobile when the node acts as its outbound anchor.
    Arrive {
        node: NodeId,
        pkt: Packet,
        from: NodeId,
        egress: Option<Addr>,
    },
    /// Last hop over the air from `ap` to the mobile.
    Radio { ap: NodeId, pkt: Packet, via: NodeId },
    /// Group packet handed to a member by the routing layer.
    GroupDeliver { node: NodeId, pkt: Packet },
    Move { ap: NodeId },
    LinkUp { epoch: u64 },
    AddressReady { epoch: u64 },
    Retransmit { seq: u16 },
    RrRetry { cn: NodeId, epoch: u64, attempt: u32 },
    ProbeTick { flow: usize },
    GroupTick { flow: usize },
    EmptyProbe { epoch: u64 },
    BicastExpire { epoch: u64 },
    Cut { a: NodeId, b: NodeId },
}

impl Action {
    fn tag(&self) -> (u8, u64) {
        match self {
            Action::Arrive { node, pkt, .. } => (1, node.0 as u64 ^ pkt.seq << 20),
            Action::Radio { ap, pkt, .. } => (2, ap.0 as u64 ^ pkt.seq << 20),
            Action::GroupDeliver { node, pkt } => (3, node.0 as u64 ^ pkt.seq << 20),
            Action::Move { ap } => (4, ap.0 as u64),
            Action::LinkUp { epoch } => (5, *epoch),
            Action::AddressReady { epoch } => (6, *epoch),
            Action::Retransmit { seq } => (7, *seq as u64),
            Action::RrRetry { cn, attempt, .. } => (8, cn.0 as u64 ^ (*attempt as u64) << 32),
            Action::ProbeTick { flow } => (9, *flow as u64),
            Action::GroupTick { flow } => (10, *flow as u64),
            Action::EmptyProbe { epoch } => (11, *epoch),
            Action::BicastExpire { epoch } => (12, *epoch),
            Action::Cut { a, b } => (13, (a.0 as u64) << 32 | b.0 as u64),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NodeState {
    pub cache: BindingCache,
    /// Group subscriptions held on behalf of a mobile, keyed by the address
    /// the subscription arrived from.
    pub subs: BTreeMap<Addr, BTreeSet<Addr>>,
}

impl NodeState {
    fn wants(&self, group: Addr) -> bool {
        self.subs.values().any(|g| g.contains(&group))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ProbeState {
    pub next_seq: u64,
    pub log: FlowLog,
}

#[derive(Debug, Clone)]
pub(crate) struct GroupState {
    pub next_seq: u64,
    pub logs: BTreeMap<NodeId, FlowLog>,
    pub receptions: Vec<GroupReception>,
}

struct Fnv(u64);

impl Fnv {
    fn feed(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

pub struct World<'s> {
    pub(crate) sc: &'s Scenario,
    pub(crate) topo: Topology,
    pub(crate) queue: EventQueue<Action>,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) nodes: Vec<NodeState>,
    pub(crate) routing: GroupRouting,
    pub(crate) mn: Option<Mobile>,
    pub(crate) probes: Vec<ProbeState>,
    pub(crate) groups: Vec<GroupState>,
    pub(crate) counters: Counters,
    pub(crate) signals: Vec<SignalRecord>,
    digest: Fnv,
    events: usize,
    pub(crate) next_seq: u64,
}

/// Interface identifier used by the mobile in every prefix.
pub(crate) fn mobile_iid(mn: NodeId) -> u64 {
    0x0200_0000_0000_0000 | mn.0 as u64
}

/// Interface identifier of the regional care-of address.
pub(crate) fn regional_iid(mn: NodeId) -> u64 {
    mobile_iid(mn) | 0x0001_0000_0000_0000
}

/// Runs one trial of `sc` with the given seed.
pub fn simulate(sc: &Scenario, trial: u32, seed: u64) -> Result<TrialResult, SimError> {
    let mut w = World::new(sc, seed)?;
    w.run();
    Ok(w.finish(trial, seed))
}

impl<'s> World<'s> {
    pub fn new(sc: &'s Scenario, seed: u64) -> Result<Self, SimError> {
        let t = &sc.timers;
        let dual = sc.variant == Variant::Shuffling;
        let nodes = sc
            .topology
            .nodes()
            .iter()
            .map(|_| NodeState {
                cache: BindingCache::new(dual, t.dual_lifetime),
                subs: BTreeMap::new(),
            })
            .collect();
        let mut w = World {
            sc,
            topo: sc.topology.clone(),
            queue: EventQueue::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            nodes,
            routing: GroupRouting::new(t.join_delay, t.tree_delay),
            mn: None,
            probes: sc
                .probes
                .iter()
                .map(|p| ProbeState {
                    next_seq: 0,
                    log: FlowLog::new(p.interval),
                })
                .collect(),
            groups: sc
                .groups
                .iter()
                .map(|g| GroupState {
                    next_seq: 0,
                    logs: g
                        .listeners
                        .iter()
                        .map(|l| (*l, FlowLog::new(g.interval)))
                        .collect(),
                    receptions: Vec::new(),
                })
                .collect(),
            counters: Counters::default(),
            signals: Vec::new(),
            digest: Fnv(0xcbf2_9ce4_8422_2325),
            events: 0,
            next_seq: 1 << 40,
        };
        if !sc.moves.is_empty() && sc.mobile.is_none() {
            return Err(SimError::NoMobile);
        }
        for g in &sc.groups {
            for &l in &g.listeners {
                if Some(l) != sc.mobile.as_ref().map(|m| m.node) {
                    w.routing.warm_member(g.group, l);
                }
            }
            if Some(g.sender) != sc.mobile.as_ref().map(|m| m.node) {
                let src = w.addr_of(g.sender);
                w.routing.warm_tree(g.group, g.sender, src);
            }
        }
        if let Some(spec) = &sc.mobile {
            w.topo.attach(spec.node, spec.start)?;
            w.warm_start_mobile();
        }
        for (i, (at, ap)) in sc.moves.iter().enumerate() {
            let _ = i;
            w.queue
                .schedule(*at, Action::Move { ap: *ap })
                .expect("scheduled before the run starts");
        }
        for (at, a, b) in &sc.cuts {
            w.queue
                .schedule(*at, Action::Cut { a: *a, b: *b })
                .expect("scheduled before the run starts");
        }
        for (flow, p) in sc.probes.iter().enumerate() {
            w.queue
                .schedule(p.start, Action::ProbeTick { flow })
                .expect("scheduled before the run starts");
        }
        for (flow, g) in sc.groups.iter().enumerate() {
            w.queue
                .schedule(g.start, Action::GroupTick { flow })
                .expect("scheduled before the run starts");
        }
        Ok(w)
    }

    pub fn run(&mut self) {
        let end = SimTime(self.sc.duration);
        while let Some((now, _, action)) = self.queue.pop_until(end) {
            self.events += 1;
            let (tag, extra) = action.tag();
            self.digest.feed(now.as_micros());
            self.digest.feed(tag as u64);
            self.digest.feed(extra);
            self.handle(now, action);
        }
        self.queue.run_until(end, |_, _, _| {});
    }

    pub fn finish(mut self, trial: u32, seed: u64) -> TrialResult {
        let c = self.counters;
        for v in [
            c.dropped_detached,
            c.dropped_unroutable,
            c.rejected_by_anchor,
            c.rejected_by_correspondent,
            c.dropped_tree_pending,
        ] {
            self.digest.feed(v);
        }
        let handovers = self.mn.take().map(|m| m.handovers).unwrap_or_default();
        TrialResult {
            trial,
            seed,
            handovers,
            probes: self.probes.into_iter().map(|p| p.log).collect(),
            groups: self.groups.iter().map(|g| g.logs.clone()).collect(),
            group_receptions: self.groups.into_iter().map(|g| g.receptions).collect(),
            counters: c,
            signals: self.signals,
            events: self.events,
            digest: self.digest.0,
        }
    }

    fn handle(&mut self, now: SimTime, action: Action) {
        match action {
            Action::Arrive {
                node,
                pkt,
                from,
                egress,
            } => self.arrive(now, node, pkt, from, egress),
            Action::Radio { ap, pkt, via } => {
                let mn = self.mn.as_ref().map(|m| m.ids.node);
                match mn {
                    Some(mn) if self.topo.attachment(mn) == Some(ap) => {
                        self.mn_receive(now, pkt, via)
                    }
                    _ => self.counters.dropped_detached += 1,
                }
            }
            Action::GroupDeliver { node, pkt } => self.group_deliver(now, node, pkt),
            Action::Move { ap } => self.on_move(now, ap),
            Action::LinkUp { epoch } => self.on_link_up(now, epoch),
            Action::AddressReady { epoch } => self.on_address_ready(now, epoch),
            Action::Retransmit { seq } => self.on_retransmit(now, seq),
            Action::RrRetry { cn, epoch, attempt } => self.on_rr_retry(now, cn, epoch, attempt),
            Action::ProbeTick { flow } => self.probe_tick(now, flow),
            Action::GroupTick { flow } => self.group_tick(now, flow),
            Action::EmptyProbe { epoch } => self.on_empty_probe(now, epoch),
            Action::BicastExpire { epoch } => self.on_bicast_expire(now, epoch),
            Action::Cut { a, b } => {
                self.topo.cut_link(a, b);
            }
        }
    }

    pub(crate) fn addr_of(&self, n: NodeId) -> Addr {
        self.topo
            .node(n)
            .map(|x| x.addr())
            .expect("node ids come from the topology")
    }

    pub(crate) fn after(&mut self, delay: Micros, action: Action) {
        self.queue.schedule_in(delay, action);
    }

    pub(crate) fn packet_seq(&mut self) -> u64 {
        self.next_seq += 1;
        self.next_seq
    }

    /// Sends `pkt` from fixed node `from` toward the owner of its routing
    /// destination.
    pub(crate) fn forward(&mut self, from: NodeId, pkt: Packet) {
        let Some(target) = self.topo.owner_of(pkt.routing_dst()) else {
            self.counters.dropped_unroutable += 1;
            return;
        };
        match self.topo.sample_static(from, target, &mut self.rng) {
            Ok(d) => self.after(
                d,
                Action::Arrive {
                    node: target,
                    pkt,
                    from,
                    egress: None,
                },
            ),
            Err(_) => self.counters.dropped_unroutable += 1,
        }
    }

    /// Hands `pkt` to the radio of `ap` if the mobile is attached there.
    fn radio_send(&mut self, ap: NodeId, pkt: Packet, via: NodeId) {
        let Some(mn) = self.mn.as_ref().map(|m| m.ids.node) else {
            return;
        };
        if self.topo.attachment(mn) != Some(ap) {
            self.counters.dropped_detached += 1;
            return;
        }
        let radio = self.topo.radio(ap).expect("attachment points have a radio");
        let d = radio.sample(&mut self.rng);
        self.after(d, Action::Radio { ap, pkt, via });
    }

    fn arrive(&mut self, now: SimTime, node: NodeId, pkt: Packet, from: NodeId, egress: Option<Addr>) {
        if let Some(lcoa) = egress {
            self.anchor_egress(now, node, pkt, from, lcoa);
            return;
        }
        let me = self.addr_of(node);
        let dst = pkt.routing_dst();
        if dst == me {
            if pkt.is_tunnelled() {
                let inner = pkt.decapsulate().expect("checked tunnelled");
                if inner.dst.is_multicast() {
                    self.root_group(now, node, inner);
                } else if self.topo.owner_of(inner.routing_dst()) == Some(node) {
                    self.arrive(now, node, inner, from, None);
                } else {
                    self.forward(node, inner);
                }
            } else {
                self.local(now, node, pkt);
            }
            return;
        }
        if dst.is_multicast() {
            self.root_group(now, node, pkt);
            return;
        }
        if let Some(coa) = self.nodes[node.index()].cache.lookup(now, dst).map(|e| e.coa) {
            let out = if pkt.is_tunnelled() {
                pkt.decapsulate()
                    .and_then(|p| p.encapsulate(me, coa))
                    .expect("depth stays at one")
            } else if pkt.rh2.is_some() {
                pkt.rewrite_dest(coa).expect("routing header present")
            } else {
                pkt.encapsulate(me, coa).expect("not tunnelled")
            };
            if out.is_tunnelled() {
                self.counters.tunnelled_deliveries += 1;
            }
            self.forward(node, out);
            return;
        }
        if let Some(m) = &self.mn {
            let on_link = self.topo.radio(node).is_ok()
                && (dst == self.topo.node(node).expect("exists").prefix.address(
                    mobile_iid(m.ids.node),
                    AddressRole::LinkCareOf,
                ) || dst == m.ids.hoa);
            if on_link {
                self.radio_send(node, pkt, from);
                return;
            }
        }
        self.counters.dropped_no_binding += 1;
    }

    /// Outbound traffic relayed by an anchor on behalf of the mobile.
    fn anchor_egress(&mut self, now: SimTime, node: NodeId, pkt: Packet, from: NodeId, lcoa: Addr) {
        let cache = &self.nodes[node.index()].cache;
        let pkt = if pkt.hao.is_some() && !pkt.is_tunnelled() && pkt.src == lcoa {
            match cache.key_for_coa(now, lcoa) {
                Some(key) => pkt.rewrite_src(key).expect("home address option present"),
                None => {
                    self.counters.rejected_by_anchor += 1;
                    return;
                }
            }
        } else if cache.lookup(now, pkt.routing_src()).map(|e| e.coa) == Some(lcoa) {
            pkt
        } else {
            self.counters.rejected_by_anchor += 1;
            return;
        };
        if !pkt.is_tunnelled() && pkt.dst.is_multicast() {
            self.root_group(now, node, pkt);
        } else if pkt.routing_dst() == self.addr_of(node) {
            self.arrive(now, node, pkt, from, None);
        } else {
            self.forward(node, pkt);
        }
    }

    fn signal(&mut self, at: SimTime, node: NodeId, signal: Signal) {
        self.signals.push(SignalRecord { at, node, signal });
    }

    /// A packet addressed to the node itself.
    fn local(&mut self, now: SimTime, node: NodeId, pkt: Packet) {
        let me = self.addr_of(node);
        match pkt.body.clone() {
            Body::BindingUpdate {
                key,
                coa,
                lifetime,
                seq,
                ack,
            } => {
                self.signal(now, node, Signal::BindingUpdate);
                let change = self.nodes[node.index()].cache.update(now, key, coa, lifetime);
                match change {
                    CacheChange::Removed { .. } => {
                        let state = &mut self.nodes[node.index()];
                        let groups = state.subs.remove(&key).unwrap_or_default();
                        for g in groups {
                            if !self.nodes[node.index()].wants(g) {
                                self.routing.leave(g, node);
                            }
                        }
                        self.routing.prune_source(node, key);
                    }
                    CacheChange::Absent => {}
                    _ => {
                        let groups: Vec<Addr> = self.nodes[node.index()]
                            .subs
                            .get(&key)
                            .map(|s| s.iter().copied().collect())
                            .unwrap_or_default();
                        for g in groups {
                            self.nodes[node.index()].cache.record_group(now, key, g);
                        }
                    }
                }
                let is_correspondent = self
                    .mn
                    .as_ref()
                    .is_some_and(|m| m.ids.hoa == key && node != m.ids.ha);
                if is_correspondent && !ack {
                    self.mn_correspondent_bound(now, node, seq);
                }
                if ack {
                    let rh2 = (pkt.src != key).then_some(key);
                    let s = self.packet_seq();
                    let ba = Packet::new(me, pkt.src, rh2, None, Body::BindingAck { key, seq }, s, now);
                    self.forward(node, ba);
                }
            }
            Body::HomeTestInit { cookie } => {
                self.signal(now, node, Signal::HomeTestInit);
                let s = self.packet_seq();
                let reply = Packet::new(me, pkt.src, None, None, Body::HomeTest { cookie }, s, now);
                self.forward(node, reply);
            }
            Body::CareOfTestInit { cookie } => {
                self.signal(now, node, Signal::CareOfTestInit);
                let s = self.packet_seq();
                let reply = Packet::new(me, pkt.src, None, None, Body::CareOfTest { cookie }, s, now);
                self.forward(node, reply);
            }
            Body::ListenerReport { group } => {
                self.signal(now, node, Signal::ListenerReport);
                let key = pkt.hao.unwrap_or(pkt.src);
                let state = &mut self.nodes[node.index()];
                state.subs.entry(key).or_default().insert(group);
                state.cache.record_group(now, key, group);
                self.routing.join(now, group, node);
            }
            Body::ListenerDone { group } => {
                self.signal(now, node, Signal::ListenerDone);
                let key = pkt.hao.unwrap_or(pkt.src);
                let state = &mut self.nodes[node.index()];
                if let Some(s) = state.subs.get_mut(&key) {
                    s.remove(&group);
                }
                state.cache.forget_group(key, group);
                if !state.wants(group) {
                    self.routing.leave(group, node);
                }
            }
            Body::Data { flow, kind, .. } => self.data_at_fixed(now, node, pkt, flow as usize, kind),
            Body::BindingAck { .. } | Body::HomeTest { .. } | Body::CareOfTest { .. } => {}
        }
    }

    fn data_at_fixed(&mut self, now: SimTime, node: NodeId, pkt: Packet, flow: usize, kind: DataKind) {
        match kind {
            DataKind::Probe => {
                if let Some(h) = pkt.hao {
                    let cache = &mut self.nodes[node.index()].cache;
                    if !cache.accepts_source(now, h, pkt.src) {
                        self.counters.rejected_by_correspondent += 1;
                        return;
                    }
                    cache.observe_source(now, h, pkt.src);
                }
                let Some(spec) = self.sc.probes.get(flow) else {
                    return;
                };
                if spec.to != node {
                    return;
                }
                self.probes[flow].log.record_arrival(pkt.seq, pkt.sent_at, now);
                let body = Body::Data {
                    flow: flow as u32,
                    kind: DataKind::Echo,
                    size: spec.size,
                };
                let origin = spec.from;
                if self.mn.as_ref().is_some_and(|m| m.ids.node == origin) {
                    self.send_to_mobile(node, body, pkt.seq, pkt.sent_at);
                } else {
                    let echo = Packet::new(self.addr_of(node), pkt.src, None, None, body, pkt.seq, pkt.sent_at);
                    self.forward(node, echo);
                }
            }
            DataKind::Echo => {
                if self.sc.probes.get(flow).is_some_and(|p| p.from == node) {
                    self.probes[flow]
                        .log
                        .record_rtt(pkt.seq, pkt.sent_at, now - pkt.sent_at);
                }
            }
            DataKind::Group | DataKind::EmptyProbe => {}
        }
    }

    /// Correspondent-side send toward the mobile: route-optimised when a
    /// binding exists, otherwise via the home address.
    pub(crate) fn send_to_mobile(&mut self, node: NodeId, body: Body, seq: u64, sent_at: SimTime) {
        let now = self.queue.now();
        let hoa = self.mn.as_ref().expect("mobile present").ids.hoa;
        let me = self.addr_of(node);
        let pkt = match self.nodes[node.index()].cache.lookup(now, hoa) {
            Some(e) => Packet::new(me, e.coa, Some(hoa), None, body, seq, sent_at),
            None => Packet::new(me, hoa, None, None, body, seq, sent_at),
        };
        self.forward(node, pkt);
    }

    pub(crate) fn root_group(&mut self, now: SimTime, root: NodeId, pkt: Packet) {
        let group = pkt.dst;
        match self.routing.route(now, group, root, pkt.src) {
            RouteOutcome::Pending { .. } => {
                if matches!(pkt.body, Body::Data { kind: DataKind::Group, .. }) {
                    self.counters.dropped_tree_pending += 1;
                }
            }
            RouteOutcome::Ready => {
                for m in self.routing.operational_members(now, group) {
                    let d = if m == root {
                        Ok(0)
                    } else {
                        self.topo.sample_static(root, m, &mut self.rng)
                    };
                    match d {
                        Ok(d) => self.after(
                            d,
                            Action::GroupDeliver {
                                node: m,
                                pkt: pkt.clone(),
                            },
                        ),
                        Err(_) => self.counters.dropped_unroutable += 1,
                    }
                }
            }
        }
    }

    fn group_deliver(&mut self, now: SimTime, node: NodeId, pkt: Packet) {
        let group = pkt.dst;
        let Body::Data { flow, kind, .. } = pkt.body else {
            return;
        };
        let flow = flow as usize;
        if kind == DataKind::Group {
            if let Some(g) = self.groups.get_mut(flow) {
                if let Some(log) = g.logs.get_mut(&node) {
                    if self.mn.as_ref().map(|m| m.ids.node) != Some(node) {
                        log.record_arrival(pkt.seq, pkt.sent_at, now);
                        g.receptions.push(GroupReception {
                            receiver: node,
                            seq: pkt.seq,
                            at: now,
                            via: node,
                            identity: pkt.pseudo_src(),
                        });
                    }
                }
            }
        }
        let Some(mn) = self.mn.as_ref().map(|m| m.ids.node) else {
            return;
        };
        let me = self.addr_of(node);
        let keys: Vec<Addr> = self.nodes[node.index()]
            .subs
            .iter()
            .filter(|(_, g)| g.contains(&group))
            .map(|(k, _)| *k)
            .collect();
        for key in keys {
            match self.nodes[node.index()].cache.lookup(now, key).map(|e| e.coa) {
                Some(coa) => {
                    let t = pkt.clone().encapsulate(me, coa).expect("native group packet");
                    self.counters.tunnelled_deliveries += 1;
                    self.forward(node, t);
                }
                None if self.topo.attachment(mn) == Some(node) => {
                    self.radio_send(node, pkt.clone(), node);
                }
                None => {}
            }
        }
    }

    fn probe_tick(&mut self, now: SimTime, flow: usize) {
        let spec = &self.sc.probes[flow];
        if now >= spec.stop {
            return;
        }
        let (from, to, size, interval, stop) = (spec.from, spec.to, spec.size, spec.interval, spec.stop);
        let seq = self.probes[flow].next_seq;
        self.probes[flow].next_seq += 1;
        self.probes[flow].log.record_sent(seq, now);
        let body = Body::Data {
            flow: flow as u32,
            kind: DataKind::Probe,
            size,
        };
        let mn = self.mn.as_ref().map(|m| m.ids.node);
        if Some(from) == mn {
            self.mn_send_unicast(now, to, body, seq, now);
        } else if Some(to) == mn {
            self.send_to_mobile(from, body, seq, now);
        } else {
            let pkt = Packet::new(self.addr_of(from), self.addr_of(to), None, None, body, seq, now);
            self.forward(from, pkt);
        }
        if now + interval < stop {
            self.after(interval, Action::ProbeTick { flow });
        }
    }

    fn group_tick(&mut self, now: SimTime, flow: usize) {
        let spec = &self.sc.groups[flow];
        if now >= spec.stop {
            return;
        }
        let (sender, group, size, interval, stop) =
            (spec.sender, spec.group, spec.size, spec.interval, spec.stop);
        let seq = self.groups[flow].next_seq;
        self.groups[flow].next_seq += 1;
        for log in self.groups[flow].logs.values_mut() {
            log.record_sent(seq, now);
        }
        let body = Body::Data {
            flow: flow as u32,
            kind: DataKind::Group,
            size,
        };
        if self.mn.as_ref().map(|m| m.ids.node) == Some(sender) {
            self.mn_send_group(now, flow, body, seq);
        } else {
            let pkt = Packet::new(self.addr_of(sender), group, None, None, body, seq, now);
            self.root_group(now, sender, pkt);
        }
        if now + interval < stop {
            self.after(interval, Action::GroupTick { flow });
        }
    }

    /// Installs the mobile's state at its starting point as if it had been
    /// there since long before the run.
    fn warm_start_mobile(&mut self) {
        let sc = self.sc;
        let spec = sc.mobile.as_ref().expect("caller checked");
        let mut m = Mobile::new(sc, &self.topo, spec);
        let coa = m.anchor_coa(&self.topo, m.current);
        if m.current != Anchor::Ha {
            if let Anchor::Map(map) = m.current {
                let rcoa = m.rcoa(&self.topo, map);
                let lcoa = m.lcoa.expect("attached away from home");
                self.nodes[map.index()].cache.update(SimTime::ZERO, rcoa, lcoa, INFINITE);
            }
            self.nodes[m.ids.ha.index()]
                .cache
                .update(SimTime::ZERO, m.ids.hoa, coa, INFINITE);
            if sc.timers.route_optimization {
                for &cn in &m.correspondents {
                    self.nodes[cn.index()]
                        .cache
                        .update(SimTime::ZERO, m.ids.hoa, coa, INFINITE);
                    m.cn_coa.insert(cn, coa);
                }
            }
        }
        let rx_node = m.anchor_node(m.rx_anchor);
        let rx_key = m.anchor_coa(&self.topo, m.rx_anchor);
        for g in m.rx_groups.clone() {
            let state = &mut self.nodes[rx_node.index()];
            state.subs.entry(rx_key).or_default().insert(g);
            state.cache.record_group(SimTime::ZERO, rx_key, g);
            self.routing.warm_member(g, rx_node);
        }
        let tx_node = m.anchor_node(m.tx_anchor);
        let tx_src = m.anchor_coa(&self.topo, m.tx_anchor);
        for &f in &m.tx_flows {
            self.routing.warm_tree(sc.groups[f].group, tx_node, tx_src);
        }
        self.mn = Some(m);
    }
}
