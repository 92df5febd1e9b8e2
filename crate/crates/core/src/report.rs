//! Per-handover timelines and per-trial results.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::addr::Addr;
use crate::metrics::FlowLog;
use crate::time::{Micros, SimTime};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HandoverKind {
    /// New access point in the same MAP domain.
    IntraDomain,
    /// New MAP domain, or any move without MAPs.
    InterDomain,
    ReturnHome,
}

/// Timeline of one handover, measured from the move instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoverReport {
    /// 1-based position in the mobility script.
    pub index: usize,
    pub at: SimTime,
    pub from_ap: Option<NodeId>,
    pub to_ap: NodeId,
    pub kind: Option<HandoverKind>,
    pub link_up: Option<SimTime>,
    pub address_ready: Option<SimTime>,
    /// Anchor that kept forwarding while distant updates were pending.
    pub previous_anchor: Option<NodeId>,
    pub previous_ack: Option<SimTime>,
    pub map_ack: Option<SimTime>,
    pub home_ack: Option<SimTime>,
    pub rr_done: Option<SimTime>,
    pub cn_bound: Option<SimTime>,
    pub unicast_restored: Option<SimTime>,
    pub group_restored: Option<SimTime>,
    pub needs_group: bool,
    pub previous_released: Option<SimTime>,
}

impl HandoverReport {
    pub fn new(index: usize, at: SimTime, from_ap: Option<NodeId>, to_ap: NodeId) -> Self {
        HandoverReport {
            index,
            at,
            from_ap,
            to_ap,
            kind: None,
            link_up: None,
            address_ready: None,
            previous_anchor: None,
            previous_ack: None,
            map_ack: None,
            home_ack: None,
            rr_done: None,
            cn_bound: None,
            unicast_restored: None,
            group_restored: None,
            needs_group: false,
            previous_released: None,
        }
    }

    /// Move instant to usable on-link address, layer-2 gap included.
    pub fn local(&self) -> Option<Micros> {
        self.address_ready.map(|t| t - self.at)
    }

    /// Link-up to usable on-link address.
    pub fn readdressing(&self) -> Option<Micros> {
        Some(self.address_ready? - self.link_up?)
    }

    pub fn restored(&self) -> Option<SimTime> {
        let u = self.unicast_restored?;
        if self.needs_group {
            Some(u.max(self.group_restored?))
        } else {
            Some(u)
        }
    }

    pub fn disruption(&self) -> Option<Micros> {
        self.restored().map(|t| t - self.at)
    }

    pub fn unicast_disruption(&self) -> Option<Micros> {
        self.unicast_restored.map(|t| t - self.at)
    }

    pub fn group_disruption(&self) -> Option<Micros> {
        self.group_restored.map(|t| t - self.at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Signal {
    BindingUpdate,
    HomeTestInit,
    CareOfTestInit,
    ListenerReport,
    ListenerDone,
}

/// A signalling message processed by a fixed node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub at: SimTime,
    pub node: NodeId,
    pub signal: Signal,
}

/// One group packet handed to a receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupReception {
    pub receiver: NodeId,
    pub seq: u64,
    pub at: SimTime,
    /// Node that relayed the packet last.
    pub via: NodeId,
    /// Source identity as seen by the receiver.
    pub identity: Addr,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Packets that reached an access point or radio hop after the mobile left.
    pub dropped_detached: u64,
    /// Packets the mobile could not send for lack of a link or address.
    pub dropped_unattached_send: u64,
    pub dropped_unroutable: u64,
    pub dropped_no_binding: u64,
    pub rejected_by_anchor: u64,
    pub rejected_by_correspondent: u64,
    pub dropped_tree_pending: u64,
    pub checksum_failures: u64,
    pub tunnelled_deliveries: u64,
    pub retransmissions: u64,
    pub abandoned_updates: u64,
    pub sent_previous_path: u64,
    pub sent_current_path: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: u32,
    pub seed: u64,
    pub handovers: Vec<HandoverReport>,
    /// Forward-stream log of each probe flow at its reflector, with
    /// roundtrips recorded at the sender.
    pub probes: Vec<FlowLog>,
    /// Per group flow, the log at every receiver.
    pub groups: Vec<BTreeMap<NodeId, FlowLog>>,
    pub group_receptions: Vec<Vec<GroupReception>>,
    pub counters: Counters,
    pub signals: Vec<SignalRecord>,
    pub events: usize,
    /// FNV-1a digest of the executed event trace.
    pub digest: u64,
}
