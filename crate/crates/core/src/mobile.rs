//! The mobile node: attachment, address configuration, binding updates,
//! return routability and the multicast handover roles.

use std::collections::{BTreeMap, BTreeSet};

use crate::addr::{Addr, AddressRole};
use crate::binding::INFINITE;
use crate::config::{BicastMode, MulticastMode, Variant};
use crate::engine::EventId;
use crate::packet::{Body, DataKind, Packet};
use crate::report::{HandoverKind, HandoverReport};
use crate::scenario::{MobileSpec, Scenario};
use crate::time::SimTime;
use crate::topology::{NodeId, NodeKind, Topology};
use crate::world::{mobile_iid, regional_iid, Action, World};

/// Where the mobile's reachability is anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Anchor {
    /// At home, directly on the home agent's link.
    Ha,
    Map(NodeId),
    /// Bound straight to the on-link address at an access point.
    Link(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Ids {
    pub node: NodeId,
    pub ha: NodeId,
    pub hoa: Addr,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct Roles {
    pub unicast: bool,
    pub rx: bool,
    pub tx: bool,
}

impl Roles {
    fn any(self) -> bool {
        self.unicast || self.rx || self.tx
    }
}

/// A MAP from an earlier domain, rebound to the new on-link address while
/// the distant updates complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Prev {
    pub map: NodeId,
    pub roles: Roles,
    pub acked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Purpose {
    Register(NodeId),
    Home,
    Previous(NodeId),
    Correspondent(NodeId),
}

#[derive(Debug, Clone)]
pub(crate) struct PendingBu {
    purpose: Purpose,
    pkt: Packet,
    egress: Option<NodeId>,
    tries: u32,
    backoff: u64,
    timer: EventId,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct RrState {
    home: bool,
    care_of: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Mobile {
    pub ids: Ids,
    pub epoch: u64,
    pub target: Option<NodeId>,
    pub lcoa: Option<Addr>,
    pub current: Anchor,
    /// The current MAP binding points at the current on-link address.
    pub registered: bool,
    /// Anchor whose care-of address the home agent and correspondents use.
    pub cn_anchor: Anchor,
    pub rx_anchor: Anchor,
    pub tx_anchor: Anchor,
    pub prev: Vec<Prev>,
    pub cn_coa: BTreeMap<NodeId, Addr>,
    pub cn_bu_seq: BTreeMap<NodeId, u16>,
    pub cn_bound: BTreeSet<NodeId>,
    pub rr: BTreeMap<NodeId, RrState>,
    pending: BTreeMap<u16, PendingBu>,
    seq: u16,
    pub handovers: Vec<HandoverReport>,
    /// Fixed peers of the mobile's probe flows.
    pub correspondents: Vec<NodeId>,
    pub rx_groups: Vec<Addr>,
    pub tx_flows: Vec<usize>,
    cookie: u64,
}

impl Mobile {
    pub fn new(sc: &Scenario, topo: &Topology, spec: &MobileSpec) -> Mobile {
        let ha_prefix = topo.node(spec.home).expect("validated").prefix;
        let ids = Ids {
            node: spec.node,
            ha: spec.home,
            hoa: ha_prefix.address(mobile_iid(spec.node), AddressRole::Home),
        };
        let mut correspondents: Vec<NodeId> = sc
            .probes
            .iter()
            .filter_map(|p| {
                if p.from == spec.node {
                    Some(p.to)
                } else if p.to == spec.node {
                    Some(p.from)
                } else {
                    None
                }
            })
            .filter(|n| topo.kind(*n) != Some(NodeKind::MobileNode))
            .collect();
        correspondents.sort();
        correspondents.dedup();
        let rx_groups: Vec<Addr> = sc
            .groups
            .iter()
            .filter(|g| g.listeners.contains(&spec.node))
            .map(|g| g.group)
            .collect();
        let tx_flows = sc
            .groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.sender == spec.node)
            .map(|(i, _)| i)
            .collect();
        let mut m = Mobile {
            ids,
            epoch: 0,
            target: Some(spec.start),
            lcoa: None,
            current: Anchor::Ha,
            registered: true,
            cn_anchor: Anchor::Ha,
            rx_anchor: Anchor::Ha,
            tx_anchor: Anchor::Ha,
            prev: Vec::new(),
            cn_coa: BTreeMap::new(),
            cn_bu_seq: BTreeMap::new(),
            cn_bound: BTreeSet::new(),
            rr: BTreeMap::new(),
            pending: BTreeMap::new(),
            seq: 0,
            handovers: Vec::new(),
            correspondents,
            rx_groups,
            tx_flows,
            cookie: 0,
        };
        m.lcoa = Some(m.link_address(topo, spec.start));
        m.current = m.anchor_at(sc.variant, topo, spec.start);
        m.cn_anchor = m.current;
        m.rx_anchor = m.group_anchor(sc.multicast, spec.start, m.current);
        m.tx_anchor = m.rx_anchor;
        m
    }

    fn link_address(&self, topo: &Topology, ap: NodeId) -> Addr {
        if ap == self.ids.ha {
            self.ids.hoa
        } else {
            topo.node(ap)
                .expect("attachment point exists")
                .prefix
                .address(mobile_iid(self.ids.node), AddressRole::LinkCareOf)
        }
    }

    fn anchor_at(&self, variant: Variant, topo: &Topology, ap: NodeId) -> Anchor {
        if ap == self.ids.ha {
            return Anchor::Ha;
        }
        match topo.node(ap).expect("attachment point exists").map_domain {
            Some(m) if variant.uses_maps() => Anchor::Map(m),
            _ => Anchor::Link(ap),
        }
    }

    fn group_anchor(&self, mode: MulticastMode, ap: NodeId, current: Anchor) -> Anchor {
        match mode {
            _ if current == Anchor::Ha => Anchor::Ha,
            MulticastMode::MHmipv6 => current,
            MulticastMode::BidirectionalTunnelling => Anchor::Ha,
            MulticastMode::RemoteSubscription => Anchor::Link(ap),
        }
    }

    pub fn rcoa(&self, topo: &Topology, map: NodeId) -> Addr {
        topo.node(map)
            .expect("MAP exists")
            .prefix
            .address(regional_iid(self.ids.node), AddressRole::RegionalCareOf)
    }

    /// Care-of address an anchor stands for.
    pub fn anchor_coa(&self, topo: &Topology, a: Anchor) -> Addr {
        match a {
            Anchor::Ha => self.ids.hoa,
            Anchor::Map(m) => self.rcoa(topo, m),
            Anchor::Link(ap) => self.link_address(topo, ap),
        }
    }

    pub fn anchor_node(&self, a: Anchor) -> NodeId {
        match a {
            Anchor::Ha => self.ids.ha,
            Anchor::Map(m) | Anchor::Link(m) => m,
        }
    }

    fn next_seq(&mut self) -> u16 {
        self.seq = self.seq.wrapping_add(1);
        self.seq
    }

    fn next_cookie(&mut self) -> u64 {
        self.cookie += 1;
        self.cookie
    }

    fn report(&mut self) -> Option<&mut HandoverReport> {
        self.handovers.last_mut()
    }

    fn at_home(&self) -> bool {
        self.current == Anchor::Ha
    }
}

/// How a packet leaves the mobile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Path {
    Direct,
    /// Relayed by an anchor that checks and rewrites the source.
    Via(NodeId),
}

impl World<'_> {
    fn m(&self) -> &Mobile {
        self.mn.as_ref().expect("mobile present")
    }

    fn mm(&mut self) -> &mut Mobile {
        self.mn.as_mut().expect("mobile present")
    }

    fn set_report(&mut self, f: impl FnOnce(&mut HandoverReport)) {
        if let Some(r) = self.mm().report() {
            f(r);
        }
    }

    /// Puts a packet on the air from the mobile's current link.
    fn mn_transmit(&mut self, pkt: Packet, path: Path) -> bool {
        let (node, lcoa) = {
            let m = self.m();
            (m.ids.node, m.lcoa)
        };
        let (Some(ap), Some(lcoa)) = (self.topo.attachment(node), lcoa) else {
            self.counters.dropped_unattached_send += 1;
            return false;
        };
        let target = match path {
            Path::Via(a) => Some(a),
            Path::Direct if pkt.routing_dst().is_multicast() => Some(ap),
            Path::Direct => self.topo.owner_of(pkt.routing_dst()),
        };
        let Some(target) = target else {
            self.counters.dropped_unroutable += 1;
            return false;
        };
        let radio = self.topo.radio(ap).expect("attached to an attachment point");
        let mut d = radio.sample(&mut self.rng);
        if target != ap {
            match self.topo.sample_static(ap, target, &mut self.rng) {
                Ok(x) => d += x,
                Err(_) => {
                    self.counters.dropped_unroutable += 1;
                    return false;
                }
            }
        }
        let egress = matches!(path, Path::Via(_)).then_some(lcoa);
        self.after(
            d,
            Action::Arrive {
                node: target,
                pkt,
                from: ap,
                egress,
            },
        );
        true
    }

    #[allow(clippy::too_many_arguments)]
    fn send_bu(
        &mut self,
        now: SimTime,
        purpose: Option<Purpose>,
        to: NodeId,
        key: Addr,
        coa: Addr,
        lifetime: u64,
        src: Addr,
        hao: Option<Addr>,
        path: Path,
    ) -> u16 {
        let seq = self.mm().next_seq();
        let ack = match purpose {
            None => false,
            Some(Purpose::Correspondent(_)) => self.sc.timers.cn_ack,
            Some(_) => true,
        };
        let body = Body::BindingUpdate {
            key,
            coa,
            lifetime,
            seq,
            ack,
        };
        let pseq = self.packet_seq();
        let pkt = Packet::new(src, self.addr_of(to), None, hao, body, pseq, now);
        self.mn_transmit(pkt.clone(), path);
        if let (true, Some(purpose)) = (ack, purpose) {
            let backoff = self.sc.timers.bu_retransmit;
            let timer = self.queue.schedule_in(backoff, Action::Retransmit { seq });
            self.mm().pending.insert(
                seq,
                PendingBu {
                    purpose,
                    pkt,
                    egress: match path {
                        Path::Via(a) => Some(a),
                        Path::Direct => None,
                    },
                    tries: 1,
                    backoff,
                    timer,
                },
            );
        }
        seq
    }

    pub(crate) fn on_retransmit(&mut self, _now: SimTime, seq: u16) {
        let tries = self.sc.timers.bu_tries;
        let Some(mut p) = self.mm().pending.remove(&seq) else {
            return;
        };
        if p.tries >= tries {
            self.counters.abandoned_updates += 1;
            return;
        }
        p.tries += 1;
        p.backoff *= 2;
        self.counters.retransmissions += 1;
        let path = p.egress.map_or(Path::Direct, Path::Via);
        self.mn_transmit(p.pkt.clone(), path);
        p.timer = self.queue.schedule_in(p.backoff, Action::Retransmit { seq });
        self.mm().pending.insert(seq, p);
    }

    pub(crate) fn on_move(&mut self, now: SimTime, ap: NodeId) {
        let node = self.m().ids.node;
        let from = self.topo.detach(node);
        let timers: Vec<EventId> = {
            let m = self.mm();
            m.epoch += 1;
            m.lcoa = None;
            m.registered = false;
            m.target = Some(ap);
            m.rr.clear();
            m.cn_bu_seq.clear();
            let ids = m.pending.values().map(|p| p.timer).collect();
            m.pending.clear();
            let index = m.handovers.len() + 1;
            m.handovers.push(HandoverReport::new(index, now, from, ap));
            ids
        };
        for t in timers {
            self.queue.cancel(t);
        }
        let epoch = self.m().epoch;
        let d = self.sc.timers.l2_delay.sample(&mut self.rng);
        self.after(d, Action::LinkUp { epoch });
    }

    pub(crate) fn on_link_up(&mut self, now: SimTime, epoch: u64) {
        let m = self.m();
        if m.epoch != epoch {
            return;
        }
        let (node, ap) = (m.ids.node, m.target.expect("moving"));
        self.topo
            .attach(node, ap)
            .expect("move targets are attachment points");
        self.set_report(|r| r.link_up = Some(now));
        let d = self.sc.timers.sample_readdressing(&mut self.rng);
        self.after(d, Action::AddressReady { epoch });
    }

    pub(crate) fn on_address_ready(&mut self, now: SimTime, epoch: u64) {
        if self.m().epoch != epoch {
            return;
        }
        let sc = self.sc;
        let ap = self.m().target.expect("moving");
        let lcoa = self.m().link_address(&self.topo, ap);
        let new = self.m().anchor_at(sc.variant, &self.topo, ap);
        let old = self.m().current;
        let kind = if new == Anchor::Ha {
            HandoverKind::ReturnHome
        } else if new == old && matches!(new, Anchor::Map(_)) {
            HandoverKind::IntraDomain
        } else {
            HandoverKind::InterDomain
        };
        let needs_group = !self.m().rx_groups.is_empty();
        {
            let m = self.mm();
            m.lcoa = Some(lcoa);
            m.current = new;
            if let Some(r) = m.report() {
                r.address_ready = Some(now);
                r.kind = Some(kind);
                r.needs_group = needs_group;
            }
        }
        match kind {
            HandoverKind::IntraDomain => self.intra_domain(now, ap, lcoa),
            HandoverKind::ReturnHome => self.return_home(now, old),
            HandoverKind::InterDomain => self.inter_domain(now, ap, lcoa, old),
        }
    }

    fn intra_domain(&mut self, now: SimTime, ap: NodeId, lcoa: Addr) {
        let Anchor::Map(map) = self.m().current else {
            unreachable!("intra-domain moves stay under a MAP");
        };
        let rcoa = self.m().rcoa(&self.topo, map);
        self.send_bu(
            now,
            Some(Purpose::Register(map)),
            map,
            rcoa,
            lcoa,
            INFINITE,
            lcoa,
            None,
            Path::Direct,
        );
        let prevs: Vec<Prev> = self.m().prev.clone();
        for p in &prevs {
            self.send_previous_bu(now, p.map, p.roles, lcoa);
        }
        for p in self.mm().prev.iter_mut() {
            p.acked = false;
        }
        if self.sc.multicast == MulticastMode::RemoteSubscription {
            self.subscribe_at_link(now, ap, lcoa);
        }
    }

    fn return_home(&mut self, now: SimTime, old: Anchor) {
        let (ha, hoa) = (self.m().ids.ha, self.m().ids.hoa);
        let prevs: Vec<Prev> = self.m().prev.clone();
        for p in prevs {
            if p.map != ha {
                self.release_map(now, p.map, hoa);
            }
        }
        self.mm().prev.clear();
        if let Anchor::Map(map) = old {
            self.release_map(now, map, hoa);
        }
        self.send_bu(
            now,
            Some(Purpose::Home),
            ha,
            hoa,
            hoa,
            0,
            hoa,
            None,
            Path::Direct,
        );
        let groups = self.m().rx_groups.clone();
        let subscribed_home = self.m().rx_anchor == Anchor::Ha;
        if !subscribed_home {
            for g in groups {
                let s = self.packet_seq();
                let pkt = Packet::new(hoa, self.addr_of(ha), None, None, Body::ListenerReport { group: g }, s, now);
                self.mn_transmit(pkt, Path::Direct);
            }
        }
        let m = self.mm();
        m.rx_anchor = Anchor::Ha;
        m.tx_anchor = Anchor::Ha;
    }

    fn inter_domain(&mut self, now: SimTime, ap: NodeId, lcoa: Addr, old: Anchor) {
        let sc = self.sc;
        let t = &sc.timers;
        let new = self.m().current;
        let ha = self.m().ids.ha;
        let as_prev = |a: Anchor| match a {
            Anchor::Map(x) if a != new => Some(x),
            Anchor::Ha => Some(ha),
            _ => None,
        };
        let held = |f: fn(&Roles) -> bool| self.m().prev.iter().find(|p| f(&p.roles)).map(|p| p.map);
        let mut roles: BTreeMap<NodeId, Roles> = BTreeMap::new();
        if sc.variant == Variant::Shuffling {
            if let Anchor::Map(x) = self.m().cn_anchor {
                if Anchor::Map(x) != new {
                    roles.entry(x).or_default().unicast = true;
                }
            }
        }
        if sc.multicast == MulticastMode::MHmipv6 {
            if !self.m().rx_groups.is_empty() {
                let keep = held(|r| r.rx).or_else(|| as_prev(self.m().rx_anchor));
                if let Some(x) = keep.filter(|x| Anchor::Map(*x) != new) {
                    roles.entry(x).or_default().rx = true;
                }
            }
            if !self.m().tx_flows.is_empty() && t.t_bicast() > 0 {
                let keep = held(|r| r.tx).or_else(|| as_prev(self.m().tx_anchor));
                if let Some(x) = keep.filter(|x| Anchor::Map(*x) != new) {
                    roles.entry(x).or_default().tx = true;
                }
            }
        }
        let mut stale: BTreeMap<NodeId, Roles> = BTreeMap::new();
        for p in &self.m().prev {
            stale.insert(p.map, p.roles);
        }
        if let Anchor::Map(x) = old {
            stale.entry(x).or_default();
        }
        for (x, r) in stale {
            if !roles.contains_key(&x) && Anchor::Map(x) != new {
                self.release_prev(now, x, r, lcoa);
            }
        }
        self.mm().prev = roles
            .iter()
            .map(|(&map, &roles)| Prev {
                map,
                roles,
                acked: false,
            })
            .collect();
        for (&map, &r) in &roles {
            if map != ha {
                self.send_previous_bu(now, map, r, lcoa);
            }
        }

        match new {
            Anchor::Map(map) => {
                let rcoa = self.m().rcoa(&self.topo, map);
                self.send_bu(
                    now,
                    Some(Purpose::Register(map)),
                    map,
                    rcoa,
                    lcoa,
                    INFINITE,
                    lcoa,
                    None,
                    Path::Direct,
                );
            }
            Anchor::Link(_) => {
                self.registered_locally(now);
            }
            Anchor::Ha => unreachable!("returning home is handled separately"),
        }
        match sc.multicast {
            MulticastMode::RemoteSubscription => self.subscribe_at_link(now, ap, lcoa),
            MulticastMode::BidirectionalTunnelling => {
                let m = self.mm();
                m.rx_anchor = Anchor::Ha;
                m.tx_anchor = Anchor::Ha;
            }
            MulticastMode::MHmipv6 => {
                if let Anchor::Link(_) = new {
                    self.subscribe_at_link(now, ap, lcoa);
                }
                self.mm().tx_anchor = new;
            }
        }
    }

    fn send_previous_bu(&mut self, now: SimTime, map: NodeId, roles: Roles, lcoa: Addr) {
        let t = &self.sc.timers;
        let mut lifetime = t.dual_lifetime;
        if roles.rx {
            lifetime = lifetime.max(t.dual_lifetime + t.join_delay + t.tree_delay);
        }
        if roles.tx {
            lifetime = lifetime.max(t.dual_lifetime + t.t_bicast());
        }
        let rcoa = self.m().rcoa(&self.topo, map);
        self.send_bu(
            now,
            Some(Purpose::Previous(map)),
            map,
            rcoa,
            lcoa,
            lifetime,
            lcoa,
            None,
            Path::Direct,
        );
    }

    /// Ends the forwarding duties of a previous anchor.
    fn release_prev(&mut self, now: SimTime, node: NodeId, roles: Roles, src: Addr) {
        if node != self.m().ids.ha {
            self.release_map(now, node, src);
            return;
        }
        if !roles.rx {
            return;
        }
        let hoa = self.m().ids.hoa;
        let ha_addr = self.addr_of(node);
        for g in self.m().rx_groups.clone() {
            let s = self.packet_seq();
            let inner = Packet::new(hoa, ha_addr, None, None, Body::ListenerDone { group: g }, s, now);
            let (pkt, path) = self.reverse_tunnel(inner);
            self.mn_transmit(pkt, path);
        }
    }

    /// Wraps `inner` for the home agent, through the current MAP when
    /// registered there.
    fn reverse_tunnel(&self, inner: Packet) -> (Packet, Path) {
        let m = self.m();
        let lcoa = m.lcoa.expect("address ready");
        let (outer, path) = match m.current {
            Anchor::Map(x) if m.registered => (m.rcoa(&self.topo, x), Path::Via(x)),
            _ => (lcoa, Path::Direct),
        };
        let ha_addr = self.addr_of(m.ids.ha);
        (inner.encapsulate(outer, ha_addr).expect("fresh packet"), path)
    }

    fn release_map(&mut self, now: SimTime, map: NodeId, src: Addr) {
        let rcoa = self.m().rcoa(&self.topo, map);
        self.send_bu(now, None, map, rcoa, src, 0, src, None, Path::Direct);
    }

    fn subscribe_at_link(&mut self, now: SimTime, ap: NodeId, lcoa: Addr) {
        for g in self.m().rx_groups.clone() {
            let s = self.packet_seq();
            let pkt = Packet::new(lcoa, self.addr_of(ap), None, None, Body::ListenerReport { group: g }, s, now);
            self.mn_transmit(pkt, Path::Direct);
        }
        let m = self.mm();
        m.rx_anchor = Anchor::Link(ap);
        if m.ids.ha != ap {
            m.tx_anchor = Anchor::Link(ap);
        }
    }

    /// The current anchor forwards to the new on-link address: continue
    /// with the home registration and start bicasting on the new path.
    fn registered_locally(&mut self, now: SimTime) {
        self.mm().registered = true;
        let (current, ha, hoa, lcoa) = {
            let m = self.m();
            (m.current, m.ids.ha, m.ids.hoa, m.lcoa.expect("address ready"))
        };
        let coa = self.m().anchor_coa(&self.topo, current);
        let path = match current {
            Anchor::Map(map) => Path::Via(map),
            _ => Path::Direct,
        };
        self.send_bu(now, Some(Purpose::Home), ha, hoa, coa, INFINITE, lcoa, Some(hoa), path);

        if self.sc.multicast == MulticastMode::MHmipv6 {
            if let Anchor::Map(map) = current {
                if self.m().rx_anchor != current {
                    for g in self.m().rx_groups.clone() {
                        let s = self.packet_seq();
                        let pkt = Packet::new(coa, self.addr_of(map), None, None, Body::ListenerReport { group: g }, s, now);
                        self.mn_transmit(pkt, Path::Via(map));
                    }
                    self.mm().rx_anchor = current;
                }
            }
        }
        if self.m().prev.iter().any(|p| p.roles.tx) {
            let epoch = self.m().epoch;
            self.after(self.sc.timers.t_bicast(), Action::BicastExpire { epoch });
            if self.sc.timers.bicast_mode == BicastMode::Probe {
                self.after(0, Action::EmptyProbe { epoch });
            }
        }
    }

    pub(crate) fn mn_receive(&mut self, now: SimTime, pkt: Packet, via: NodeId) {
        let pkt = if pkt.is_tunnelled() {
            pkt.decapsulate().expect("checked tunnelled")
        } else {
            pkt
        };
        if !pkt.verify_checksum() {
            self.counters.checksum_failures += 1;
            return;
        }
        match pkt.body {
            Body::BindingAck { seq, .. } => self.on_binding_ack(now, seq),
            Body::HomeTest { .. } | Body::CareOfTest { .. } => {
                let Some(cn) = self.topo.owner_of(pkt.src) else {
                    return;
                };
                let home = matches!(pkt.body, Body::HomeTest { .. });
                let done = match self.mm().rr.get_mut(&cn) {
                    Some(s) => {
                        if home {
                            s.home = true;
                        } else {
                            s.care_of = true;
                        }
                        s.home && s.care_of
                    }
                    None => false,
                };
                if done {
                    self.rr_complete(now, cn);
                }
            }
            Body::Data { flow, kind, size } => {
                let flow = flow as usize;
                let me = self.m().ids.node;
                match kind {
                    DataKind::Probe => {
                        let Some(spec) = self.sc.probes.get(flow) else {
                            return;
                        };
                        if spec.to != me {
                            return;
                        }
                        let from = spec.from;
                        self.probes[flow].log.record_arrival(pkt.seq, pkt.sent_at, now);
                        self.unicast_arrived(now, via);
                        let body = Body::Data {
                            flow: flow as u32,
                            kind: DataKind::Echo,
                            size,
                        };
                        self.mn_send_unicast(now, from, body, pkt.seq, pkt.sent_at);
                    }
                    DataKind::Echo => {
                        if self.sc.probes.get(flow).is_some_and(|p| p.from == me) {
                            self.probes[flow]
                                .log
                                .record_rtt(pkt.seq, pkt.sent_at, now - pkt.sent_at);
                            self.unicast_arrived(now, via);
                        }
                    }
                    DataKind::Group => self.mn_group_arrival(now, flow, pkt, via),
                    DataKind::EmptyProbe => {}
                }
            }
            _ => {}
        }
    }

    fn mn_group_arrival(&mut self, now: SimTime, flow: usize, pkt: Packet, via: NodeId) {
        let me = self.m().ids.node;
        let Some(spec) = self.sc.groups.get(flow) else {
            return;
        };
        if spec.sender == me {
            return;
        }
        let Some(log) = self.groups[flow].logs.get_mut(&me) else {
            return;
        };
        log.record_arrival(pkt.seq, pkt.sent_at, now);
        self.groups[flow].receptions.push(crate::report::GroupReception {
            receiver: me,
            seq: pkt.seq,
            at: now,
            via,
            identity: pkt.pseudo_src(),
        });
        let ready = self.m().lcoa.is_some();
        self.set_report(|r| {
            if ready && r.address_ready.is_some() && r.group_restored.is_none() {
                r.group_restored = Some(now);
            }
        });
        let m = self.m();
        let current_rx = m.anchor_node(m.rx_anchor);
        if via == current_rx && m.prev.iter().any(|p| p.roles.rx) {
            self.release_roles(now, |r| r.rx = false);
        }
    }

    fn unicast_arrived(&mut self, now: SimTime, via: NodeId) {
        let m = self.m();
        if m.cn_anchor != m.current || !m.prev.iter().any(|p| p.roles.unicast) {
            return;
        }
        let through_current = match m.current {
            Anchor::Map(x) => via == x,
            _ => true,
        };
        if through_current {
            self.release_roles(now, |r| r.unicast = false);
        }
    }

    /// Clears roles on every previous MAP and releases those left idle.
    fn release_roles(&mut self, now: SimTime, clear: impl Fn(&mut Roles)) {
        let mut idle = Vec::new();
        for p in self.mm().prev.iter_mut() {
            let before = p.roles;
            clear(&mut p.roles);
            if !p.roles.any() {
                idle.push((p.map, before));
            }
        }
        self.mm().prev.retain(|p| p.roles.any());
        if idle.is_empty() {
            return;
        }
        let Some(lcoa) = self.m().lcoa else {
            return;
        };
        for (map, roles) in idle {
            self.release_prev(now, map, roles, lcoa);
        }
        self.set_report(|r| r.previous_released = Some(now));
    }

    fn on_binding_ack(&mut self, now: SimTime, seq: u16) {
        let Some(p) = self.mm().pending.remove(&seq) else {
            return;
        };
        self.queue.cancel(p.timer);
        match p.purpose {
            Purpose::Register(map) => {
                if self.m().current != Anchor::Map(map) {
                    return;
                }
                let intra = self
                    .m()
                    .handovers
                    .last()
                    .is_some_and(|r| r.kind == Some(HandoverKind::IntraDomain));
                self.set_report(|r| r.map_ack = Some(now));
                if intra {
                    self.mm().registered = true;
                    self.set_report(|r| {
                        r.unicast_restored.get_or_insert(now);
                    });
                } else {
                    self.registered_locally(now);
                }
            }
            Purpose::Previous(map) => self.previous_acked(now, map),
            Purpose::Home => {
                self.set_report(|r| r.home_ack = Some(now));
                let ha = self.m().ids.ha;
                self.previous_acked(now, ha);
                self.home_registered(now);
            }
            Purpose::Correspondent(cn) => self.correspondent_bound(now, cn),
        }
    }

    fn previous_acked(&mut self, now: SimTime, map: NodeId) {
        let mut found = None;
        for prev in self.mm().prev.iter_mut().filter(|x| x.map == map) {
            prev.acked = true;
            found = Some(prev.roles);
        }
        let Some(roles) = found else {
            return;
        };
        self.set_report(|r| {
            r.previous_anchor = Some(map);
            r.previous_ack = Some(now);
            if roles.unicast {
                r.unicast_restored.get_or_insert(now);
            }
            if roles.rx {
                r.group_restored.get_or_insert(now);
            }
        });
    }

    fn home_registered(&mut self, now: SimTime) {
        let ro = self.sc.timers.route_optimization && !self.m().correspondents.is_empty();
        if self.m().at_home() {
            if ro {
                let hoa = self.m().ids.hoa;
                for cn in self.m().correspondents.clone() {
                    self.mm().cn_coa.remove(&cn);
                    let seq = self.send_bu(
                        now,
                        Some(Purpose::Correspondent(cn)),
                        cn,
                        hoa,
                        hoa,
                        0,
                        hoa,
                        None,
                        Path::Direct,
                    );
                    self.mm().cn_bu_seq.insert(cn, seq);
                }
            } else {
                self.switch_complete(now);
            }
            return;
        }
        if !ro {
            self.switch_complete(now);
            return;
        }
        let epoch = self.m().epoch;
        for cn in self.m().correspondents.clone() {
            self.mm().rr.insert(cn, RrState::default());
            self.send_rr(now, cn);
            self.after(
                self.sc.timers.bu_retransmit,
                Action::RrRetry {
                    cn,
                    epoch,
                    attempt: 1,
                },
            );
        }
    }

    fn send_rr(&mut self, now: SimTime, cn: NodeId) {
        let (ha, hoa, lcoa, current, registered) = {
            let m = self.m();
            (m.ids.ha, m.ids.hoa, m.lcoa, m.current, m.registered)
        };
        let Some(lcoa) = lcoa else {
            return;
        };
        let cn_addr = self.addr_of(cn);
        let ha_addr = self.addr_of(ha);
        let coa = self.m().anchor_coa(&self.topo, current);
        let path = match current {
            Anchor::Map(map) if registered => Path::Via(map),
            _ => Path::Direct,
        };
        let (outer, cookie) = {
            let m = self.mm();
            (if path == Path::Direct { lcoa } else { coa }, m.next_cookie())
        };
        let s = self.packet_seq();
        let hoti = Packet::new(hoa, cn_addr, None, None, Body::HomeTestInit { cookie }, s, now)
            .encapsulate(outer, ha_addr)
            .expect("fresh packet");
        self.mn_transmit(hoti, path);
        let s = self.packet_seq();
        let coti = Packet::new(outer, cn_addr, None, None, Body::CareOfTestInit { cookie }, s, now);
        self.mn_transmit(coti, path);
    }

    pub(crate) fn on_rr_retry(&mut self, now: SimTime, cn: NodeId, epoch: u64, attempt: u32) {
        if self.m().epoch != epoch {
            return;
        }
        let Some(state) = self.m().rr.get(&cn).copied() else {
            return;
        };
        if state.home && state.care_of {
            return;
        }
        if attempt >= self.sc.timers.bu_tries {
            self.counters.abandoned_updates += 1;
            self.mm().rr.remove(&cn);
            return;
        }
        self.counters.retransmissions += 1;
        self.send_rr(now, cn);
        let backoff = self.sc.timers.bu_retransmit << attempt;
        self.after(
            backoff,
            Action::RrRetry {
                cn,
                epoch,
                attempt: attempt + 1,
            },
        );
    }

    fn rr_complete(&mut self, now: SimTime, cn: NodeId) {
        self.mm().rr.remove(&cn);
        let (hoa, lcoa, current, registered) = {
            let m = self.m();
            (m.ids.hoa, m.lcoa, m.current, m.registered)
        };
        let Some(lcoa) = lcoa else {
            return;
        };
        let coa = self.m().anchor_coa(&self.topo, current);
        let path = match current {
            Anchor::Map(map) if registered => Path::Via(map),
            _ => Path::Direct,
        };
        if self.m().rr.is_empty() {
            self.set_report(|r| r.rr_done = Some(now));
        }
        let seq = self.send_bu(
            now,
            Some(Purpose::Correspondent(cn)),
            cn,
            hoa,
            coa,
            INFINITE,
            lcoa,
            Some(hoa),
            path,
        );
        let m = self.mm();
        m.cn_bu_seq.insert(cn, seq);
        m.cn_coa.insert(cn, coa);
    }

    /// Called by a correspondent that processed a binding update.
    pub(crate) fn mn_correspondent_bound(&mut self, now: SimTime, cn: NodeId, seq: u16) {
        if self.m().cn_bu_seq.get(&cn) == Some(&seq) {
            self.correspondent_bound(now, cn);
        }
    }

    fn correspondent_bound(&mut self, now: SimTime, cn: NodeId) {
        let m = self.mm();
        m.cn_bu_seq.remove(&cn);
        m.cn_bound.insert(cn);
        let all = m.correspondents.iter().all(|c| m.cn_bound.contains(c));
        if all {
            self.set_report(|r| r.cn_bound = Some(now));
            self.switch_complete(now);
        }
    }

    /// Every distant binding now names the current anchor.
    fn switch_complete(&mut self, now: SimTime) {
        let m = self.mm();
        m.cn_anchor = m.current;
        m.cn_bound.clear();
        let silent = m.correspondents.is_empty();
        self.set_report(|r| {
            r.unicast_restored.get_or_insert(now);
        });
        if silent {
            self.release_roles(now, |r| r.unicast = false);
        }
    }

    /// Whether the mobile can currently send from care-of address `coa`,
    /// and through which anchor.
    fn usable(&self, coa: Addr) -> Option<Path> {
        let m = self.m();
        if let Anchor::Link(_) = m.current {
            if m.lcoa == Some(coa) {
                return Some(Path::Direct);
            }
        }
        if let Anchor::Map(x) = m.current {
            if m.registered && m.rcoa(&self.topo, x) == coa {
                return Some(Path::Via(x));
            }
        }
        m.prev
            .iter()
            .find(|p| p.map != m.ids.ha && m.rcoa(&self.topo, p.map) == coa)
            .map(|p| Path::Via(p.map))
    }

    pub(crate) fn mn_send_unicast(&mut self, now: SimTime, to: NodeId, body: Body, seq: u64, sent_at: SimTime) {
        let _ = now;
        let (hoa, lcoa) = {
            let m = self.m();
            (m.ids.hoa, m.lcoa)
        };
        let Some(lcoa) = lcoa else {
            self.counters.dropped_unattached_send += 1;
            return;
        };
        let dst = self.addr_of(to);
        if self.m().at_home() {
            let pkt = Packet::new(hoa, dst, None, None, body, seq, sent_at);
            self.mn_transmit(pkt, Path::Direct);
            return;
        }
        let bound = self.m().cn_coa.get(&to).copied();
        if let Some(path) = bound
            .filter(|_| self.sc.timers.route_optimization)
            .and_then(|c| self.usable(c))
        {
            let pkt = Packet::new(lcoa, dst, None, Some(hoa), body, seq, sent_at);
            self.mn_transmit(pkt, path);
            return;
        }
        let inner = Packet::new(hoa, dst, None, None, body, seq, sent_at);
        let (pkt, path) = self.reverse_tunnel(inner);
        self.mn_transmit(pkt, path);
    }

    fn prev_anchor(&self, node: NodeId) -> Anchor {
        if node == self.m().ids.ha {
            Anchor::Ha
        } else {
            Anchor::Map(node)
        }
    }

    /// Builds a group packet leaving through `anchor`, if that path is usable.
    fn group_packet(&self, anchor: Anchor, group: Addr, body: Body, seq: u64, sent_at: SimTime) -> Option<(Packet, Path)> {
        let m = self.m();
        let hoa = m.ids.hoa;
        let hao = (self.sc.multicast == MulticastMode::MHmipv6).then_some(hoa);
        match anchor {
            Anchor::Ha if m.at_home() => Some((Packet::new(hoa, group, None, None, body, seq, sent_at), Path::Direct)),
            Anchor::Ha => m
                .prev
                .iter()
                .any(|p| p.map == m.ids.ha)
                .then(|| self.reverse_tunnel(Packet::new(hoa, group, None, None, body, seq, sent_at))),
            Anchor::Link(ap) => {
                let here = m.link_address(&self.topo, ap);
                (m.lcoa == Some(here)).then(|| (Packet::new(here, group, None, hao, body, seq, sent_at), Path::Direct))
            }
            Anchor::Map(x) => {
                let ok = (m.current == anchor && m.registered) || m.prev.iter().any(|p| p.map == x);
                let rcoa = m.rcoa(&self.topo, x);
                ok.then(|| (Packet::new(rcoa, group, None, hao, body, seq, sent_at), Path::Via(x)))
            }
        }
    }

    fn send_group_on(&mut self, anchor: Anchor, group: Addr, body: Body, seq: u64, sent_at: SimTime) -> bool {
        match self.group_packet(anchor, group, body, seq, sent_at) {
            Some((pkt, path)) => self.mn_transmit(pkt, path),
            None => false,
        }
    }

    pub(crate) fn mn_send_group(&mut self, now: SimTime, flow: usize, body: Body, seq: u64) {
        let group = self.sc.groups[flow].group;
        if self.m().lcoa.is_none() {
            self.counters.dropped_unattached_send += 1;
            return;
        }
        match self.sc.multicast {
            MulticastMode::BidirectionalTunnelling if !self.m().at_home() => {
                let hoa = self.m().ids.hoa;
                let inner = Packet::new(hoa, group, None, None, body, seq, now);
                let (pkt, path) = self.reverse_tunnel(inner);
                if self.mn_transmit(pkt, path) {
                    self.counters.sent_current_path += 1;
                }
            }
            MulticastMode::MHmipv6 => {
                let prev: Option<Anchor> = self
                    .m()
                    .prev
                    .iter()
                    .find(|p| p.roles.tx)
                    .map(|p| self.prev_anchor(p.map));
                let probing = self.sc.timers.bicast_mode == BicastMode::Probe;
                let mut sent = false;
                if let Some(x) = prev {
                    if self.send_group_on(x, group, body.clone(), seq, now) {
                        self.counters.sent_previous_path += 1;
                        sent = true;
                    }
                }
                if prev.is_none() || !probing {
                    let tx = self.m().tx_anchor;
                    if self.send_group_on(tx, group, body, seq, now) {
                        self.counters.sent_current_path += 1;
                        sent = true;
                    }
                }
                if !sent {
                    self.counters.dropped_unattached_send += 1;
                }
            }
            _ => {
                let tx = self.m().tx_anchor;
                if self.send_group_on(tx, group, body, seq, now) {
                    self.counters.sent_current_path += 1;
                } else {
                    self.counters.dropped_unattached_send += 1;
                }
            }
        }
    }

    pub(crate) fn on_empty_probe(&mut self, now: SimTime, epoch: u64) {
        if self.m().epoch != epoch || !self.m().prev.iter().any(|p| p.roles.tx) {
            return;
        }
        let tx = self.m().tx_anchor;
        for flow in self.m().tx_flows.clone() {
            let group = self.sc.groups[flow].group;
            let body = Body::Data {
                flow: flow as u32,
                kind: DataKind::EmptyProbe,
                size: 0,
            };
            let s = self.packet_seq();
            self.send_group_on(tx, group, body, s, now);
        }
        self.after(self.sc.timers.empty_probe_interval, Action::EmptyProbe { epoch });
    }

    pub(crate) fn on_bicast_expire(&mut self, now: SimTime, epoch: u64) {
        if self.m().epoch != epoch {
            return;
        }
        self.release_roles(now, |r| r.tx = false);
    }
}
