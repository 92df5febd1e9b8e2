//! Protocol variants and timer parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::time::{Micros, MS, SEC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Mipv6,
    Hmipv6,
    /// HMIPv6 with the reactive handover that first rebinds the previous MAP.
    Shuffling,
}

impl Variant {
    pub fn parse(s: &str) -> Option<Variant> {
        Some(match s {
            "mipv6" => Variant::Mipv6,
            "hmipv6" => Variant::Hmipv6,
            "hmipv6-shuffling" => Variant::Shuffling,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Mipv6 => "mipv6",
            Variant::Hmipv6 => "hmipv6",
            Variant::Shuffling => "hmipv6-shuffling",
        }
    }

    pub fn uses_maps(self) -> bool {
        self != Variant::Mipv6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MulticastMode {
    /// Subscriptions and transmissions anchored at the MAP.
    MHmipv6,
    /// Everything relayed through the home agent.
    BidirectionalTunnelling,
    /// Native rejoin in every visited network.
    RemoteSubscription,
}

impl MulticastMode {
    pub fn parse(s: &str) -> Option<MulticastMode> {
        Some(match s {
            "m-hmipv6" => MulticastMode::MHmipv6,
            "bidirectional-tunnelling" => MulticastMode::BidirectionalTunnelling,
            "remote-subscription" => MulticastMode::RemoteSubscription,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            MulticastMode::MHmipv6 => "m-hmipv6",
            MulticastMode::BidirectionalTunnelling => "bidirectional-tunnelling",
            MulticastMode::RemoteSubscription => "remote-subscription",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Detection {
    /// Wait for the next unsolicited router advertisement.
    RouterAdvert,
    /// Link-up indication triggers an immediate solicitation.
    L2Trigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BicastMode {
    Bicast,
    /// Data stays on the previous path; the new tree is built by empty probes.
    Probe,
}

/// A duration drawn uniformly from `[lo, hi]`; constant when `lo == hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub lo: Micros,
    pub hi: Micros,
}

impl Span {
    pub const fn fixed(v: Micros) -> Span {
        Span { lo: v, hi: v }
    }

    pub const fn new(lo: Micros, hi: Micros) -> Span {
        Span { lo, hi }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Micros {
        if self.lo >= self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }

    pub fn mean(&self) -> f64 {
        (self.lo as f64 + self.hi as f64) / 2.0
    }
}

/// Uniform draw from `[0, max)`, zero when `max` is zero.
pub fn below<R: Rng + ?Sized>(rng: &mut R, max: Micros) -> Micros {
    if max == 0 {
        0
    } else {
        rng.gen_range(0..max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timers {
    pub detection: Detection,
    /// Period between unsolicited router advertisements.
    pub ra_interval: Span,
    /// MAX_RTR_SOLICITATION_DELAY.
    pub rs_delay: Micros,
    /// MAX_RA_DELAY_TIME.
    pub ra_delay: Micros,
    /// Flight time of the solicited advertisement.
    pub handshake: Micros,
    /// Address configuration time once a new prefix is known.
    pub readdress: Span,
    pub l2_delay: Span,
    pub bu_retransmit: Micros,
    pub bu_tries: u32,
    /// Lifetime of a previous binding kept while a handover completes.
    pub dual_lifetime: Micros,
    pub cn_ack: bool,
    pub route_optimization: bool,
    /// Membership join latency of a new branch.
    pub join_delay: Micros,
    /// Convergence latency of a new source tree.
    pub tree_delay: Micros,
    pub t_bicast: Option<Micros>,
    pub bicast_mode: BicastMode,
    pub empty_probe_interval: Micros,
}

impl Default for Timers {
    fn default() -> Self {
        Timers {
            detection: Detection::RouterAdvert,
            ra_interval: Span::new(37 * MS, 50 * MS),
            rs_delay: MS,
            ra_delay: MS,
            handshake: MS,
            readdress: Span::fixed(25 * MS),
            l2_delay: Span::new(40 * MS, 50 * MS),
            bu_retransmit: SEC,
            bu_tries: 3,
            dual_lifetime: 3 * SEC,
            cn_ack: false,
            route_optimization: true,
            join_delay: 30 * SEC,
            tree_delay: 30 * SEC,
            t_bicast: None,
            bicast_mode: BicastMode::Bicast,
            empty_probe_interval: SEC,
        }
    }
}

impl Timers {
    /// Bicast period; defaults to the tree convergence delay plus ten percent.
    pub fn t_bicast(&self) -> Micros {
        self.t_bicast
            .unwrap_or(self.tree_delay + self.tree_delay / 10)
    }

    /// Time from link-up until a new on-link address is usable.
    pub fn sample_readdressing<R: Rng + ?Sized>(&self, rng: &mut R) -> Micros {
        let wait = match self.detection {
            Detection::RouterAdvert => {
                let interval = self.ra_interval.sample(rng);
                below(rng, interval)
            }
            Detection::L2Trigger => {
                below(rng, self.rs_delay) + below(rng, self.ra_delay) + self.handshake
            }
        };
        wait + self.readdress.sample(rng)
    }
}
