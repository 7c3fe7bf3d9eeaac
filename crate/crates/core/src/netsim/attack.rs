//! Attacker programs: ARP poisoning, MAC spoofing, knock replay, port
//! scanning, and (only when a key has been granted) knock forgery.

use std::net::Ipv4Addr;

use crate::frames::{
    serialize_frame, ArpOperation, ArpPacket, EthernetFrame, IcmpMessage, Ipv4Packet, Ipv4Payload,
    MacAddress, TransportView,
};
use crate::knock::{seal_knock, KnockFields, SharedKey};

/// Source port used for scan probes.
pub const SCAN_SOURCE_PORT: u16 = 61000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Station {
    pub mac: MacAddress,
    pub ip: Ipv4Addr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttackKind {
    /// Forged ARP replies claiming `victim_ip` is at `claimed_mac`; broadcast
    /// unless aimed at a single `target`.
    ArpPoison {
        victim_ip: Ipv4Addr,
        claimed_mac: MacAddress,
        target: Option<Station>,
    },
    /// TCP SYNs to `target` sent under someone else's link address and,
    /// optionally, their IP and port.
    MacSpoof {
        victim_mac: MacAddress,
        src_ip: Ipv4Addr,
        src_port: u16,
        target: Station,
        dst_port: u16,
    },
    /// Re-sends the most recently captured knock frame byte for byte.
    KnockReplay,
    /// One SYN per port in `ports`, then an ICMP echo if `echo`.
    PortScan {
        target: Station,
        ports: (u16, u16),
        echo: bool,
    },
    /// A freshly sealed knock under a key the scenario granted the attacker.
    ForgeKnock {
        key: SharedKey,
        target: Station,
        src_port: u16,
    },
}

impl AttackKind {
    pub fn label(&self) -> &'static str {
        match self {
            AttackKind::ArpPoison { .. } => "arp-poison",
            AttackKind::MacSpoof { .. } => "mac-spoof",
            AttackKind::KnockReplay => "knock-replay",
            AttackKind::PortScan { .. } => "port-scan",
            AttackKind::ForgeKnock { .. } => "forge-knock",
        }
    }
}

/// First firing at `start`, then every `period` seconds, `count` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub start: u64,
    pub count: u32,
    pub period: u64,
}

impl Schedule {
    pub fn once(start: u64) -> Self {
        Schedule {
            start,
            count: 1,
            period: 1,
        }
    }

    pub fn firings(&self) -> impl Iterator<Item = u64> + '_ {
        (0..u64::from(self.count)).map(move |i| self.start + i * self.period)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackProgram {
    pub kind: AttackKind,
    pub schedule: Schedule,
}

/// Builds the frames one firing of `kind` puts on the wire. `iteration`
/// varies sequence numbers and nonces between firings.
pub(crate) fn frames_for(
    kind: &AttackKind,
    me: Station,
    captured: &[Vec<u8>],
    iteration: u32,
    now: u64,
) -> Vec<Vec<u8>> {
    let ser = |f: EthernetFrame| serialize_frame(&f).expect("attack frames fit");
    match kind {
        AttackKind::ArpPoison {
            victim_ip,
            claimed_mac,
            target,
        } => {
            let (dst, target_mac, target_ip) = match target {
                Some(t) => (t.mac, t.mac, t.ip),
                None => (MacAddress::BROADCAST, MacAddress::BROADCAST, *victim_ip),
            };
            vec![ser(EthernetFrame::arp(
                dst,
                *claimed_mac,
                ArpPacket {
                    operation: ArpOperation::Reply,
                    sender_mac: *claimed_mac,
                    sender_ip: *victim_ip,
                    target_mac,
                    target_ip,
                },
            ))]
        }
        AttackKind::MacSpoof {
            victim_mac,
            src_ip,
            src_port,
            target,
            dst_port,
        } => {
            let syn = TransportView::tcp_syn(*src_port, *dst_port, 7 + iteration);
            vec![ser(EthernetFrame::ipv4(
                target.mac,
                *victim_mac,
                Ipv4Packet::new(
                    *src_ip,
                    target.ip,
                    iteration as u16,
                    Ipv4Payload::Transport(syn),
                ),
            ))]
        }
        AttackKind::KnockReplay => captured.last().cloned().into_iter().collect(),
        AttackKind::PortScan {
            target,
            ports: (lo, hi),
            echo,
        } => {
            let mut out: Vec<Vec<u8>> = (*lo..=*hi)
                .map(|port| {
                    let syn = TransportView::tcp_syn(SCAN_SOURCE_PORT, port, u32::from(port));
                    ser(EthernetFrame::ipv4(
                        target.mac,
                        me.mac,
                        Ipv4Packet::new(me.ip, target.ip, port, Ipv4Payload::Transport(syn)),
                    ))
                })
                .collect();
            if *echo {
                let ping =
                    IcmpMessage::echo_request(0x5ca9, iteration as u16, b"are you there?".to_vec());
                out.push(ser(EthernetFrame::ipv4(
                    target.mac,
                    me.mac,
                    Ipv4Packet::new(me.ip, target.ip, 0, Ipv4Payload::Icmp(ping)),
                )));
            }
            out
        }
        AttackKind::ForgeKnock {
            key,
            target,
            src_port,
        } => {
            let fields = KnockFields {
                client_ip: me.ip,
                client_port: *src_port,
                timestamp: now,
            };
            let nonce = (0xa77a_0000_0000_0000u64 | u64::from(iteration)).to_be_bytes();
            let sealed = seal_knock(key, nonce, &fields).to_bytes().to_vec();
            vec![ser(EthernetFrame::ipv4(
                target.mac,
                me.mac,
                Ipv4Packet::new(
                    me.ip,
                    target.ip,
                    iteration as u16,
                    Ipv4Payload::Icmp(IcmpMessage::echo_request(*src_port, 0, sealed)),
                ),
            ))]
        }
    }
}
