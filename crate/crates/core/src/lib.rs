//! Software model of a service-cloaking network interface card.
//!
//! - [`frames`]: byte-exact Ethernet/ARP/IPv4/ICMP codecs.
//! - [`knock`]: sealing and opening single-packet authentication knocks.
//! - [`nic`]: the cloaking NIC state machine.
//! - [`demos`]: built-in scenarios.
//! - [`netsim`]: a deterministic broadcast Ethernet segment with baseline
//!   hosts and attackers.

pub mod demos;
pub mod frames;
pub mod knock;
pub mod netsim;
pub mod nic;
