//! Network graph, static routing and mobile attachment.
//!
//! Fixed nodes are joined by wired links. Mobile nodes never appear in the
//! wired graph: they reach the network through the radio hop of the access
//! point they are currently attached to.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{Addr, AddressRole, Prefix};
use crate::time::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Router,
    HomeAgent,
    Map,
    AccessPoint,
    MobileNode,
    CorrespondentNode,
    MulticastRouter,
}

impl NodeKind {
    pub fn parse(s: &str) -> Option<NodeKind> {
        Some(match s {
            "router" => NodeKind::Router,
            "home-agent" => NodeKind::HomeAgent,
            "map" => NodeKind::Map,
            "access-point" => NodeKind::AccessPoint,
            "mobile-node" => NodeKind::MobileNode,
            "correspondent-node" => NodeKind::CorrespondentNode,
            "multicast-router" => NodeKind::MulticastRouter,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no route from {from} to {to}")]
    Unreachable { from: NodeId, to: NodeId },
    #[error("link latency must be strictly positive")]
    NonPositiveLatency,
    #[error("jitter coefficient {0} outside [0, 1)")]
    InvalidEpsilon(f64),
    #[error("{0} cannot be attached to")]
    NotAttachmentPoint(NodeId),
    #[error("{0} is not a mobile node")]
    NotMobile(NodeId),
    #[error("mobile nodes cannot have wired links ({0})")]
    WiredMobile(NodeId),
    #[error("fixed nodes {0} and {1} are not connected")]
    Disconnected(NodeId, NodeId),
}

/// Latency and proportional jitter of a single hop.
///
/// Each traversal adds noise drawn uniformly from
/// `[-epsilon * latency, +epsilon * latency]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub latency: Micros,
    pub epsilon: f64,
}

impl LinkParams {
    pub fn new(latency: Micros, epsilon: f64) -> Result<Self, TopologyError> {
        if latency == 0 {
            return Err(TopologyError::NonPositiveLatency);
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(TopologyError::InvalidEpsilon(epsilon));
        }
        Ok(LinkParams { latency, epsilon })
    }

    pub fn exact(latency: Micros) -> Self {
        LinkParams {
            latency,
            epsilon: 0.0,
        }
    }

    /// One traversal of this hop.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Micros {
        if self.epsilon == 0.0 {
            return self.latency;
        }
        let span = self.epsilon * self.latency as f64;
        let noise = rng.gen_range(-span..=span);
        (self.latency as f64 + noise).round().max(0.0) as Micros
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub kind: NodeKind,
    pub prefix: Prefix,
    /// Radio hop offered to attached mobiles, if this node is an attachment point.
    pub radio: Option<LinkParams>,
    /// MAP whose domain this access point belongs to.
    pub map_domain: Option<NodeId>,
}

impl Node {
    /// The node's own address (interface id 1 in its prefix).
    pub fn addr(&self) -> Addr {
        self.prefix.address(1, AddressRole::Plain)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub params: LinkParams,
    pub up: bool,
}

#[derive(Debug, Clone, Default)]
struct Route {
    delay: Micros,
    links: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    routes: Vec<Vec<Option<Route>>>,
    attachment: HashMap<NodeId, NodeId>,
    prefix_owner: HashMap<Prefix, NodeId>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: impl Into<String>, kind: NodeKind) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let prefix = Prefix::for_index(self.nodes.len() as u16 + 1);
        self.prefix_owner.insert(prefix, id);
        self.nodes.push(Node {
            id,
            name: name.into(),
            kind,
            prefix,
            radio: None,
            map_domain: None,
        });
        id
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, TopologyError> {
        self.nodes.get(id.index()).ok_or(TopologyError::UnknownNode(id))
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    pub fn name(&self, id: NodeId) -> &str {
        self.nodes
            .get(id.index())
            .map(|n| n.name.as_str())
            .unwrap_or("?")
    }

    pub fn kind(&self, id: NodeId) -> Option<NodeKind> {
        self.nodes.get(id.index()).map(|n| n.kind)
    }

    pub fn set_radio(&mut self, id: NodeId, radio: LinkParams) -> Result<(), TopologyError> {
        let node = self
            .nodes
            .get_mut(id.index())
            .ok_or(TopologyError::UnknownNode(id))?;
        if matches!(node.kind, NodeKind::MobileNode) {
            return Err(TopologyError::NotAttachmentPoint(id));
        }
        node.radio = Some(radio);
        Ok(())
    }

    pub fn set_domain(&mut self, ap: NodeId, map: NodeId) -> Result<(), TopologyError> {
        self.node(map)?;
        let node = self
            .nodes
            .get_mut(ap.index())
            .ok_or(TopologyError::UnknownNode(ap))?;
        node.map_domain = Some(map);
        Ok(())
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId, params: LinkParams) -> Result<usize, TopologyError> {
        for id in [a, b] {
            if self.node(id)?.kind == NodeKind::MobileNode {
                return Err(TopologyError::WiredMobile(id));
            }
        }
        LinkParams::new(params.latency, params.epsilon)?;
        self.links.push(Link {
            a,
            b,
            params,
            up: true,
        });
        Ok(self.links.len() - 1)
    }

    /// Takes the link between `a` and `b` down and reroutes.
    pub fn cut_link(&mut self, a: NodeId, b: NodeId) -> bool {
        let mut any = false;
        for l in &mut self.links {
            if l.up && ((l.a == a && l.b == b) || (l.a == b && l.b == a)) {
                l.up = false;
                any = true;
            }
        }
        if any {
            self.compute_routes();
        }
        any
    }

    fn is_fixed(&self, id: NodeId) -> bool {
        self.nodes[id.index()].kind != NodeKind::MobileNode
    }

    /// Precomputes static shortest-latency routes between all fixed nodes.
    pub fn compute_routes(&mut self) {
        let n = self.nodes.len();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (i, l) in self.links.iter().enumerate().filter(|(_, l)| l.up) {
            adj[l.a.index()].push((l.b.index(), i));
            adj[l.b.index()].push((l.a.index(), i));
        }
        self.routes = (0..n)
            .map(|s| {
                if self.is_fixed(NodeId(s as u32)) {
                    self.dijkstra(s, &adj)
                } else {
                    vec![None; n]
                }
            })
            .collect();
    }

    fn dijkstra(&self, src: usize, adj: &[Vec<(usize, usize)>]) -> Vec<Option<Route>> {
        let n = self.nodes.len();
        let mut dist = vec![u64::MAX; n];
        let mut via: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[src] = 0;
        heap.push(Reverse((0u64, src)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, li) in &adj[u] {
                let nd = d + self.links[li].params.latency;
                if nd < dist[v] {
                    dist[v] = nd;
                    via[v] = Some((u, li));
                    heap.push(Reverse((nd, v)));
                }
            }
        }
        (0..n)
            .map(|t| {
                if dist[t] == u64::MAX {
                    return None;
                }
                let mut links = Vec::new();
                let mut cur = t;
                while let Some((p, li)) = via[cur] {
                    links.push(li);
                    cur = p;
                }
                links.reverse();
                Some(Route {
                    delay: dist[t],
                    links,
                })
            })
            .collect()
    }

    /// Checks that every pair of fixed nodes is connected.
    pub fn check_connected(&self) -> Result<(), TopologyError> {
        let fixed: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| n.kind != NodeKind::MobileNode)
            .map(|n| n.id)
            .collect();
        if let Some(&first) = fixed.first() {
            for &other in &fixed[1..] {
                if self.route(first, other).is_none() {
                    return Err(TopologyError::Disconnected(first, other));
                }
            }
        }
        Ok(())
    }

    fn route(&self, a: NodeId, b: NodeId) -> Option<&Route> {
        self.routes.get(a.index())?.get(b.index())?.as_ref()
    }

    /// One-way latency between two fixed nodes along the static route.
    pub fn static_delay(&self, src: NodeId, dst: NodeId) -> Result<Micros, TopologyError> {
        self.node(src)?;
        self.node(dst)?;
        if src == dst {
            return Ok(0);
        }
        self.route(src, dst)
            .map(|r| r.delay)
            .ok_or(TopologyError::Unreachable { from: src, to: dst })
    }

    /// Sampled traversal time between two fixed nodes, drawing per-link noise.
    pub fn sample_static<R: Rng + ?Sized>(
        &self,
        src: NodeId,
        dst: NodeId,
        rng: &mut R,
    ) -> Result<Micros, TopologyError> {
        if src == dst {
            self.node(src)?;
            return Ok(0);
        }
        let route = self
            .route(src, dst)
            .ok_or(TopologyError::Unreachable { from: src, to: dst })?;
        Ok(route
            .links
            .iter()
            .map(|&li| self.links[li].params.sample(rng))
            .sum())
    }

    pub fn radio(&self, ap: NodeId) -> Result<LinkParams, TopologyError> {
        self.node(ap)?
            .radio
            .ok_or(TopologyError::NotAttachmentPoint(ap))
    }

    pub fn attach(&mut self, mn: NodeId, ap: NodeId) -> Result<(), TopologyError> {
        if self.node(mn)?.kind != NodeKind::MobileNode {
            return Err(TopologyError::NotMobile(mn));
        }
        self.radio(ap)?;
        self.attachment.insert(mn, ap);
        Ok(())
    }

    pub fn detach(&mut self, mn: NodeId) -> Option<NodeId> {
        self.attachment.remove(&mn)
    }

    pub fn attachment(&self, mn: NodeId) -> Option<NodeId> {
        self.attachment.get(&mn).copied()
    }

    /// Resolves a mobile endpoint to (attachment point, radio latency).
    fn edge(&self, id: NodeId) -> Result<(NodeId, Micros), TopologyError> {
        let node = self.node(id)?;
        if node.kind == NodeKind::MobileNode {
            let ap = self.attachment(id).ok_or(TopologyError::Unreachable {
                from: id,
                to: id,
            })?;
            Ok((ap, self.radio(ap)?.latency))
        } else {
            Ok((id, 0))
        }
    }

    /// One-way latency between any two nodes. Mobile endpoints contribute the
    /// radio hop of their current attachment and fail when detached.
    pub fn unicast_path_delay(&self, src: NodeId, dst: NodeId) -> Result<Micros, TopologyError> {
        if src == dst {
            self.node(src)?;
            return Ok(0);
        }
        let (a, ra) = self.edge(src).map_err(|_| TopologyError::Unreachable { from: src, to: dst })?;
        let (b, rb) = self.edge(dst).map_err(|_| TopologyError::Unreachable { from: src, to: dst })?;
        Ok(ra + self.static_delay(a, b)? + rb)
    }

    /// Roundtrip between a mobile node attached at `ap` and fixed node `peer`.
    pub fn roundtrip_from_ap(&self, ap: NodeId, peer: NodeId) -> Result<Micros, TopologyError> {
        Ok(2 * (self.radio(ap)?.latency + self.static_delay(ap, peer)?))
    }

    /// The node owning the /64 that contains `addr`.
    pub fn owner_of(&self, addr: Addr) -> Option<NodeId> {
        if addr.is_multicast() {
            return None;
        }
        self.prefix_owner.get(&addr.prefix()).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Enumerates every simple path between two nodes and returns the
    /// cheapest total latency.
    fn brute_force_delay(t: &Topology, src: NodeId, dst: NodeId) -> Option<Micros> {
        fn walk(
            t: &Topology,
            at: NodeId,
            dst: NodeId,
            seen: &mut Vec<NodeId>,
            acc: Micros,
            best: &mut Option<Micros>,
        ) {
            if at == dst {
                *best = Some(best.map_or(acc, |b| b.min(acc)));
                return;
            }
            for l in t.links().iter().filter(|l| l.up) {
                let next = if l.a == at {
                    l.b
                } else if l.b == at {
                    l.a
                } else {
                    continue;
                };
                if seen.contains(&next) {
                    continue;
                }
                seen.push(next);
                walk(t, next, dst, seen, acc + l.params.latency, best);
                seen.pop();
            }
        }
        let mut best = None;
        walk(t, src, dst, &mut vec![src], 0, &mut best);
        best
    }

    fn chain() -> (Topology, [NodeId; 4]) {
        let mut t = Topology::new();
        let a = t.add_node("a", NodeKind::Router);
        let b = t.add_node("b", NodeKind::Router);
        let c = t.add_node("c", NodeKind::Router);
        let d = t.add_node("d", NodeKind::Router);
        t.add_link(a, b, LinkParams::exact(5_000)).unwrap();
        t.add_link(b, c, LinkParams::exact(10_000)).unwrap();
        t.add_link(c, d, LinkParams::exact(5_000)).unwrap();
        // a slower detour that must lose
        t.add_link(a, d, LinkParams::exact(25_000)).unwrap();
        t.compute_routes();
        (t, [a, b, c, d])
    }

    #[test]
    fn adjacent_and_identity() {
        let (t, [a, b, ..]) = chain();
        assert_eq!(t.unicast_path_delay(a, b).unwrap(), 5_000);
        assert_eq!(t.unicast_path_delay(a, a).unwrap(), 0);
    }

    #[test]
    fn three_hop_chain_matches_enumeration() {
        let (t, [a, _, _, d]) = chain();
        let expected = brute_force_delay(&t, a, d).unwrap();
        assert_eq!(expected, 20_000);
        assert_eq!(t.unicast_path_delay(a, d).unwrap(), expected);
    }

    #[test]
    fn random_graphs_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let mut t = Topology::new();
            let n = rng.gen_range(2..7);
            let ids: Vec<NodeId> = (0..n)
                .map(|i| t.add_node(format!("r{i}"), NodeKind::Router))
                .collect();
            for i in 1..n {
                let j = rng.gen_range(0..i);
                t.add_link(ids[i], ids[j], LinkParams::exact(rng.gen_range(1..50_000)))
                    .unwrap();
            }
            for _ in 0..rng.gen_range(0..4) {
                let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
                if i != j {
                    t.add_link(ids[i], ids[j], LinkParams::exact(rng.gen_range(1..50_000)))
                        .unwrap();
                }
            }
            t.compute_routes();
            for &s in &ids {
                for &d in &ids {
                    let bf = if s == d { Some(0) } else { brute_force_delay(&t, s, d) };
                    assert_eq!(t.static_delay(s, d).ok(), bf);
                }
            }
        }
    }

    #[test]
    fn detached_mobile_is_unreachable() {
        let mut t = Topology::new();
        let ap = t.add_node("ap", NodeKind::AccessPoint);
        let r = t.add_node("r", NodeKind::Router);
        let mn = t.add_node("mn", NodeKind::MobileNode);
        t.set_radio(ap, LinkParams::exact(1_000)).unwrap();
        t.add_link(ap, r, LinkParams::exact(2_000)).unwrap();
        t.compute_routes();
        assert!(matches!(
            t.unicast_path_delay(r, mn),
            Err(TopologyError::Unreachable { .. })
        ));
        t.attach(mn, ap).unwrap();
        assert_eq!(t.unicast_path_delay(r, mn).unwrap(), 3_000);
        assert_eq!(t.unicast_path_delay(mn, r).unwrap(), 3_000);
        assert_eq!(t.attach(mn, r), Err(TopologyError::NotAttachmentPoint(r)));
    }

    #[test]
    fn zero_epsilon_is_exact_and_noise_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let exact = LinkParams::exact(10_000);
        assert!((0..100).all(|_| exact.sample(&mut rng) == 10_000));
        let noisy = LinkParams::new(10_000, 0.1).unwrap();
        for _ in 0..1000 {
            let s = noisy.sample(&mut rng);
            assert!((9_000..=11_000).contains(&s));
        }
    }

    #[test]
    fn invalid_link_parameters() {
        assert_eq!(LinkParams::new(0, 0.0), Err(TopologyError::NonPositiveLatency));
        assert!(matches!(
            LinkParams::new(5, 1.5),
            Err(TopologyError::InvalidEpsilon(_))
        ));
    }

    #[test]
    fn cut_link_reroutes() {
        let (mut t, [a, b, _, d]) = chain();
        assert!(t.cut_link(b, a));
        assert_eq!(t.static_delay(a, d).unwrap(), 25_000);
    }
}
