//! Simulated datagrams with the MIPv6 extension headers that matter for
//! forwarding: the type-2 routing header and the home address option.
//!
//! The upper-layer checksum is a real ones'-complement sum over the
//! pseudo-header and the encoded body. The pseudo-header takes its source
//! from the home address option and its destination from the routing header
//! when those are present, so an anchor may swap the visible source or
//! destination without touching the checksum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::Addr;
use crate::checksum;
use crate::time::{Micros, SimTime};

pub const NH_UDP: u8 = 17;
pub const NH_ICMPV6: u8 = 58;
pub const NH_MOBILITY: u8 = 135;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PacketError {
    #[error("packet has no type-2 routing header; it must be tunnelled")]
    NoRoutingHeader,
    #[error("packet has no home address option")]
    NoHomeAddressOption,
    #[error("packet is already tunnelled")]
    AlreadyTunnelled,
    #[error("packet is not tunnelled")]
    NotTunnelled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataKind {
    /// Numbered probe packet travelling to the reflector.
    Probe,
    /// Probe reflected back to its sender.
    Echo,
    /// Multicast group payload.
    Group,
    /// Zero-payload packet that only exists to trigger tree construction.
    EmptyProbe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Body {
    Data {
        flow: u32,
        kind: DataKind,
        size: u16,
    },
    BindingUpdate {
        key: Addr,
        coa: Addr,
        lifetime: Micros,
        seq: u16,
        ack: bool,
    },
    BindingAck {
        key: Addr,
        seq: u16,
    },
    HomeTestInit {
        cookie: u64,
    },
    CareOfTestInit {
        cookie: u64,
    },
    HomeTest {
        cookie: u64,
    },
    CareOfTest {
        cookie: u64,
    },
    ListenerReport {
        group: Addr,
    },
    ListenerDone {
        group: Addr,
    },
}

impl Body {
    pub fn next_header(&self) -> u8 {
        match self {
            Body::Data { .. } => NH_UDP,
            Body::ListenerReport { .. } | Body::ListenerDone { .. } => NH_ICMPV6,
            _ => NH_MOBILITY,
        }
    }

    pub fn is_signaling(&self) -> bool {
        !matches!(self, Body::Data { .. })
    }

    /// Deterministic byte encoding used as checksummed payload.
    pub fn encode(&self, seq: u64, sent_at: SimTime) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        out.extend_from_slice(&seq.to_be_bytes());
        out.extend_from_slice(&sent_at.as_micros().to_be_bytes());
        match self {
            Body::Data { flow, kind, size } => {
                out.push(1);
                out.extend_from_slice(&flow.to_be_bytes());
                out.push(*kind as u8);
                out.resize(out.len() + *size as usize, 0);
            }
            Body::BindingUpdate {
                key,
                coa,
                lifetime,
                seq,
                ack,
            } => {
                out.push(5);
                out.extend_from_slice(&key.octets());
                out.extend_from_slice(&coa.octets());
                out.extend_from_slice(&lifetime.to_be_bytes());
                out.extend_from_slice(&seq.to_be_bytes());
                out.push(*ack as u8);
            }
            Body::BindingAck { key, seq } => {
                out.push(6);
                out.extend_from_slice(&key.octets());
                out.extend_from_slice(&seq.to_be_bytes());
            }
            Body::HomeTestInit { cookie } => {
                out.push(1);
                out.extend_from_slice(&cookie.to_be_bytes());
            }
            Body::CareOfTestInit { cookie } => {
                out.push(2);
                out.extend_from_slice(&cookie.to_be_bytes());
            }
            Body::HomeTest { cookie } => {
                out.push(3);
                out.extend_from_slice(&cookie.to_be_bytes());
            }
            Body::CareOfTest { cookie } => {
                out.push(4);
                out.extend_from_slice(&cookie.to_be_bytes());
            }
            Body::ListenerReport { group } => {
                out.push(131);
                out.extend_from_slice(&group.octets());
            }
            Body::ListenerDone { group } => {
                out.push(132);
                out.extend_from_slice(&group.octets());
            }
        }
        out
    }
}

/// Outer header added by IPv6-in-IPv6 encapsulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tunnel {
    pub src: Addr,
    pub dst: Addr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub src: Addr,
    pub dst: Addr,
    /// Final destination carried in a type-2 routing header.
    pub rh2: Option<Addr>,
    /// Home address destination option (applicative source).
    pub hao: Option<Addr>,
    pub tunnel: Option<Tunnel>,
    pub seq: u64,
    pub sent_at: SimTime,
    pub body: Body,
    pub upper_checksum: u16,
}

impl Packet {
    /// Builds a packet and computes its checksum over the final headers.
    pub fn new(
        src: Addr,
        dst: Addr,
        rh2: Option<Addr>,
        hao: Option<Addr>,
        body: Body,
        seq: u64,
        sent_at: SimTime,
    ) -> Packet {
        let mut p = Packet {
            src,
            dst,
            rh2,
            hao,
            tunnel: None,
            seq,
            sent_at,
            body,
            upper_checksum: 0,
        };
        p.upper_checksum = p.compute_checksum();
        p
    }

    pub fn pseudo_src(&self) -> Addr {
        self.hao.unwrap_or(self.src)
    }

    pub fn pseudo_dst(&self) -> Addr {
        self.rh2.unwrap_or(self.dst)
    }

    /// Destination used for routing: the outer header when tunnelled.
    pub fn routing_dst(&self) -> Addr {
        self.tunnel.map(|t| t.dst).unwrap_or(self.dst)
    }

    pub fn routing_src(&self) -> Addr {
        self.tunnel.map(|t| t.src).unwrap_or(self.src)
    }

    pub fn compute_checksum(&self) -> u16 {
        let payload = self.body.encode(self.seq, self.sent_at);
        checksum::upper_layer(
            self.pseudo_src(),
            self.pseudo_dst(),
            self.body.next_header(),
            &payload,
        )
    }

    pub fn verify_checksum(&self) -> bool {
        self.compute_checksum() == self.upper_checksum
    }

    /// Forwards toward `new_dst` by replacing the visible destination.
    /// Valid only when a routing header pins the pseudo-header destination.
    pub fn rewrite_dest(mut self, new_dst: Addr) -> Result<Packet, PacketError> {
        if self.rh2.is_none() {
            return Err(PacketError::NoRoutingHeader);
        }
        self.dst = new_dst;
        Ok(self)
    }

    /// Replaces the visible source. Valid only with a home address option.
    pub fn rewrite_src(mut self, new_src: Addr) -> Result<Packet, PacketError> {
        if self.hao.is_none() {
            return Err(PacketError::NoHomeAddressOption);
        }
        self.src = new_src;
        Ok(self)
    }

    pub fn encapsulate(mut self, outer_src: Addr, outer_dst: Addr) -> Result<Packet, PacketError> {
        if self.tunnel.is_some() {
            return Err(PacketError::AlreadyTunnelled);
        }
        self.tunnel = Some(Tunnel {
            src: outer_src,
            dst: outer_dst,
        });
        Ok(self)
    }

    pub fn decapsulate(mut self) -> Result<Packet, PacketError> {
        if self.tunnel.take().is_none() {
            return Err(PacketError::NotTunnelled);
        }
        Ok(self)
    }

    /// Rewrites the outer source of a tunnelled packet. The inner packet and
    /// its checksum are untouched.
    pub fn rewrite_tunnel_src(mut self, new_src: Addr) -> Result<Packet, PacketError> {
        match self.tunnel.as_mut() {
            Some(t) => {
                t.src = new_src;
                Ok(self)
            }
            None => Err(PacketError::NotTunnelled),
        }
    }

    pub fn is_tunnelled(&self) -> bool {
        self.tunnel.is_some()
    }
}
