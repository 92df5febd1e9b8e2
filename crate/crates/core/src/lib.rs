//! Packet-level discrete-event simulation of IPv6 mobility handovers:
//! Mobile IPv6, Hierarchical Mobile IPv6 with the reactive "shuffling"
//! handover, and multicast receiver and source mobility over MAPs.

pub mod addr;
pub mod analytic;
pub mod binding;
pub mod checksum;
pub mod config;
pub mod engine;
pub mod mcast;
pub mod metrics;
mod mobile;
pub mod packet;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod time;
pub mod topology;
pub mod world;
