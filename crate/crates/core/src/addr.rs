//! Role-tagged IPv6 addresses.

use std::fmt;
use std::net::Ipv6Addr;

use serde::{Deserialize, Serialize};

/// What an address stands for in the mobility protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AddressRole {
    /// Home address: stable identity of a mobile node.
    Home,
    /// On-link care-of address in the current access network.
    LinkCareOf,
    /// Regional care-of address allocated from a MAP prefix.
    RegionalCareOf,
    Plain,
    MulticastGroup,
}

/// A 128-bit address with its prefix length and role.
///
/// Equality and hashing consider only the 128-bit value, so the same address
/// seen with different role tags still compares equal.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Addr {
    bits: u128,
    prefix_len: u8,
    role: AddressRole,
}

impl PartialEq for Addr {
    fn eq(&self, other: &Self) -> bool {
        self.bits == other.bits
    }
}

impl Eq for Addr {}

impl std::hash::Hash for Addr {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.bits.hash(state);
    }
}

impl PartialOrd for Addr {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Addr {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.bits.cmp(&other.bits)
    }
}

/// A /64 network prefix, stored as the upper 64 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Prefix(pub u64);

impl Prefix {
    /// Documentation-range prefix `2001:db8:0:<index>::/64`.
    pub fn for_index(index: u16) -> Prefix {
        Prefix((0x2001_0db8_u64 << 32) | index as u64)
    }

    pub fn address(self, interface_id: u64, role: AddressRole) -> Addr {
        Addr::new(((self.0 as u128) << 64) | interface_id as u128, 64, role)
    }

    pub fn contains(self, addr: Addr) -> bool {
        !addr.is_multicast() && addr.prefix() == self
    }
}

impl Addr {
    /// Builds an address. A value whose high octet is `0xff` is always tagged
    /// as a multicast group, and a multicast role is never attached to a
    /// unicast value.
    pub fn new(bits: u128, prefix_len: u8, role: AddressRole) -> Addr {
        let multicast = (bits >> 120) as u8 == 0xff;
        let role = match (multicast, role) {
            (true, _) => AddressRole::MulticastGroup,
            (false, AddressRole::MulticastGroup) => AddressRole::Plain,
            (false, r) => r,
        };
        Addr {
            bits,
            prefix_len: prefix_len.min(128),
            role,
        }
    }

    pub fn group(bits: u128) -> Addr {
        Addr::new(bits, 128, AddressRole::MulticastGroup)
    }

    pub fn bits(self) -> u128 {
        self.bits
    }

    pub fn prefix_len(self) -> u8 {
        self.prefix_len
    }

    pub fn role(self) -> AddressRole {
        self.role
    }

    pub fn with_role(self, role: AddressRole) -> Addr {
        Addr::new(self.bits, self.prefix_len, role)
    }

    pub fn is_multicast(self) -> bool {
        (self.bits >> 120) as u8 == 0xff
    }

    pub fn prefix(self) -> Prefix {
        Prefix((self.bits >> 64) as u64)
    }

    pub fn interface_id(self) -> u64 {
        self.bits as u64
    }

    pub fn octets(self) -> [u8; 16] {
        self.bits.to_be_bytes()
    }
}

impl From<Ipv6Addr> for Addr {
    fn from(ip: Ipv6Addr) -> Addr {
        Addr::new(u128::from(ip), 128, AddressRole::Plain)
    }
}

impl From<Addr> for Ipv6Addr {
    fn from(a: Addr) -> Ipv6Addr {
        Ipv6Addr::from(a.bits)
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Ipv6Addr::from(self.bits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multicast_role_follows_high_octet() {
        let g = Addr::new(0xff0e << 112 | 1, 128, AddressRole::Plain);
        assert_eq!(g.role(), AddressRole::MulticastGroup);
        let u = Addr::new(1, 128, AddressRole::MulticastGroup);
        assert_eq!(u.role(), AddressRole::Plain);
        assert!(!u.is_multicast());
    }

    #[test]
    fn care_of_addresses_carry_network_prefix() {
        let p = Prefix::for_index(7);
        let lcoa = p.address(42, AddressRole::LinkCareOf);
        assert_eq!(lcoa.prefix(), p);
        assert!(p.contains(lcoa));
        assert_eq!(lcoa.to_string(), "2001:db8:0:7::2a");
    }
}
