//! Abstract multicast routing: membership branches and per-source trees,
//! each usable only after its own convergence delay.

use std::collections::BTreeMap;

use crate::addr::Addr;
use crate::time::{Micros, SimTime};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteOutcome {
    /// The tree is still converging; the packet is dropped.
    Pending { ready_at: SimTime },
    Ready,
}

#[derive(Debug, Clone)]
pub struct GroupRouting {
    join_delay: Micros,
    tree_delay: Micros,
    members: BTreeMap<(Addr, NodeId), SimTime>,
    trees: BTreeMap<(Addr, NodeId, Addr), SimTime>,
}

impl GroupRouting {
    pub fn new(join_delay: Micros, tree_delay: Micros) -> Self {
        GroupRouting {
            join_delay,
            tree_delay,
            members: BTreeMap::new(),
            trees: BTreeMap::new(),
        }
    }

    /// Membership established before the run starts.
    pub fn warm_member(&mut self, group: Addr, node: NodeId) {
        self.members.insert((group, node), SimTime::ZERO);
    }

    pub fn warm_tree(&mut self, group: Addr, root: NodeId, source: Addr) {
        self.trees.insert((group, root, source), SimTime::ZERO);
    }

    /// Subscribes `node`; returns when its branch becomes operational.
    pub fn join(&mut self, now: SimTime, group: Addr, node: NodeId) -> SimTime {
        let join_delay = self.join_delay;
        *self
            .members
            .entry((group, node))
            .or_insert(now + join_delay)
    }

    pub fn leave(&mut self, group: Addr, node: NodeId) -> bool {
        self.members.remove(&(group, node)).is_some()
    }

    pub fn is_member(&self, group: Addr, node: NodeId) -> bool {
        self.members.contains_key(&(group, node))
    }

    pub fn member_ready_at(&self, group: Addr, node: NodeId) -> Option<SimTime> {
        self.members.get(&(group, node)).copied()
    }

    pub fn tree_ready_at(&self, group: Addr, root: NodeId, source: Addr) -> Option<SimTime> {
        self.trees.get(&(group, root, source)).copied()
    }

    /// Forgets every tree rooted at `root` for `source`.
    pub fn prune_source(&mut self, root: NodeId, source: Addr) {
        self.trees.retain(|(_, r, s), _| !(*r == root && *s == source));
    }

    /// Injects a packet from `source` at `root`. The first packet requests
    /// the tree; deliveries start once it has converged.
    pub fn route(&mut self, now: SimTime, group: Addr, root: NodeId, source: Addr) -> RouteOutcome {
        let tree_delay = self.tree_delay;
        let ready_at = *self
            .trees
            .entry((group, root, source))
            .or_insert(now + tree_delay);
        if ready_at <= now {
            RouteOutcome::Ready
        } else {
            RouteOutcome::Pending { ready_at }
        }
    }

    /// Members whose branch is operational at `now`.
    pub fn operational_members(&self, now: SimTime, group: Addr) -> Vec<NodeId> {
        self.members
            .range((group, NodeId(0))..=(group, NodeId(u32::MAX)))
            .filter(|(_, ready)| **ready <= now)
            .map(|((_, n), _)| *n)
            .collect()
    }
}
