//! Internet ones'-complement checksum over the IPv6 pseudo-header.

use crate::addr::Addr;

/// Adds `data` as big-endian 16-bit words into a 32-bit accumulator.
/// An odd trailing byte is padded with zero.
pub fn accumulate(mut sum: u32, data: &[u8]) -> u32 {
    let mut chunks = data.chunks_exact(2);
    for c in &mut chunks {
        sum = sum.wrapping_add(u16::from_be_bytes([c[0], c[1]]) as u32);
        sum = (sum & 0xffff) + (sum >> 16);
    }
    if let [b] = chunks.remainder() {
        sum = sum.wrapping_add((*b as u32) << 8);
        sum = (sum & 0xffff) + (sum >> 16);
    }
    sum
}

pub fn fold(mut sum: u32) -> u16 {
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    sum as u16
}

/// Checksum of an upper-layer payload with the IPv6 pseudo-header built from
/// `src`, `dst`, the payload length and `next_header`.
pub fn upper_layer(src: Addr, dst: Addr, next_header: u8, payload: &[u8]) -> u16 {
    let mut sum = accumulate(0, &src.octets());
    sum = accumulate(sum, &dst.octets());
    sum = accumulate(sum, &(payload.len() as u32).to_be_bytes());
    sum = accumulate(sum, &[0, 0, 0, next_header]);
    sum = accumulate(sum, payload);
    let c = !fold(sum);
    // UDP transmits an all-zero result as 0xffff
    if c == 0 {
        0xffff
    } else {
        c
    }
}
