//! The cloaking NIC: a per-host state machine sitting between the wire and
//! the host stack.
//!
//! Inbound, every frame takes exactly one fate. ARP requests for the NIC's
//! own address are answered statelessly; knocks are opened and, on success,
//! admit the knocking ⟨IP, port⟩ into the filter table and inform the host
//! of the peer's MAC; transport traffic passes only on a filter hit.
//! Everything else is dropped without a response.
//!
//! Outbound, the NIC prepends a knock to the first transport frame of each
//! flow towards a protected peer.

mod fifo;
mod filter;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::frames::{
    parse_frame, serialize_frame, ArpOperation, ArpPacket, EthernetFrame, FramePayload,
    IcmpMessage, Ipv4Packet, Ipv4Payload, MacAddress, ETH_HEADER_LEN, ICMP_ECHO_REQUEST,
};
use crate::knock::{
    open_knock, seal_knock, KnockFields, RejectReason, ReplayCache, SharedKey,
    DEFAULT_FRESHNESS_SECONDS, DEFAULT_REPLAY_WINDOW_SECONDS, KNOCK_MAGIC,
};

pub use fifo::{ByteFifo, PushOutcome, FIFO_CAPACITY, MAX_FRAME_ON_WIRE};
pub use filter::{
    FilterEntry, FilterTable, TableFull, DEFAULT_FILTER_CAPACITY, DEFAULT_FILTER_TTL_SECONDS,
};

/// Seconds an outstanding ARP request stays eligible for a reply.
pub const ARP_RESOLVE_TIMEOUT_SECONDS: u64 = 10;

/// Processing-stage counts along the code execution path. The packet
/// filter (FIFO, parser and table) is the first stage; the ARP processor,
/// authentication processor, data path processor and host interface each
/// add one.
pub mod stages {
    /// Discarded by the link address check before any processing.
    pub const LINK_ADDRESS: u32 = 0;
    pub const FILTER: u32 = 1;
    pub const ARP: u32 = 2;
    pub const SOLICITED_ARP_TO_HOST: u32 = 3;
    pub const AUTHENTICATION: u32 = 2;
    pub const KNOCK_APPLIED: u32 = 3;
    pub const DELIVERED: u32 = 2;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NicError {
    #[error("NIC has no IP address; the host must provide one before use")]
    MissingIp,
    #[error("{0} is a protected peer but no shared key is configured for it")]
    UnknownPeerKey(Ipv4Addr),
    #[error("host frame source {got} does not match NIC address {expected}")]
    SourceMismatch {
        expected: MacAddress,
        got: MacAddress,
    },
}

#[derive(Debug, Clone)]
pub struct NicConfig {
    pub mac: MacAddress,
    pub ip: Option<Ipv4Addr>,
    /// Keys by peer address, used both to open inbound knocks (looked up by
    /// IPv4 source) and to seal outbound ones.
    pub role_keys: BTreeMap<Ipv4Addr, SharedKey>,
    /// Peers that require a knock before transport traffic.
    pub protected_peers: BTreeSet<Ipv4Addr>,
    pub freshness_seconds: u64,
    pub filter_ttl_seconds: u64,
    pub replay_window_seconds: u64,
    pub filter_capacity: usize,
    /// First value of the outbound knock nonce counter.
    pub nonce_seed: u64,
}

impl NicConfig {
    pub fn new(mac: MacAddress, ip: Ipv4Addr) -> Self {
        NicConfig {
            mac,
            ip: Some(ip),
            role_keys: BTreeMap::new(),
            protected_peers: BTreeSet::new(),
            freshness_seconds: DEFAULT_FRESHNESS_SECONDS,
            filter_ttl_seconds: DEFAULT_FILTER_TTL_SECONDS,
            replay_window_seconds: DEFAULT_REPLAY_WINDOW_SECONDS,
            filter_capacity: DEFAULT_FILTER_CAPACITY,
            nonce_seed: 0,
        }
    }

    pub fn with_key(mut self, peer: Ipv4Addr, key: SharedKey) -> Self {
        self.role_keys.insert(peer, key);
        self
    }

    pub fn protect(mut self, peer: Ipv4Addr) -> Self {
        self.protected_peers.insert(peer);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropReason {
    NoFilterMatch,
    BadKnock(RejectReason),
    UnsolicitedArpReply,
    /// ARP request for some other address.
    ArpNotForUs,
    FifoOverflow,
    Malformed,
    /// Link destination is neither this NIC nor broadcast.
    NotForUs,
    /// A valid knock could not be applied because the table is full.
    FilterFull,
}

impl DropReason {
    pub fn label(&self) -> String {
        match self {
            DropReason::NoFilterMatch => "no_filter_match".into(),
            DropReason::BadKnock(r) => format!("bad_knock:{r}"),
            DropReason::UnsolicitedArpReply => "unsolicited_arp_reply".into(),
            DropReason::ArpNotForUs => "arp_not_for_us".into(),
            DropReason::FifoOverflow => "fifo_overflow".into(),
            DropReason::Malformed => "malformed".into(),
            DropReason::NotForUs => "not_for_us".into(),
            DropReason::FilterFull => "filter_full".into(),
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropRecord {
    pub reason: DropReason,
    pub stage_count: u32,
}

/// What became of one inbound frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    ArpReplied,
    Delivered,
    /// Carries the admitted ⟨client IP, client port⟩ and the knock timestamp.
    KnockAccepted(KnockFields),
    Dropped(DropReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Disposition {
    pub fate: Fate,
    pub stage_count: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counters {
    pub rx_frames: u64,
    pub tx_frames: u64,
    pub drops: BTreeMap<String, u64>,
    pub fifo_overflows: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HostEvent {
    ArpCacheUpdate { ip: Ipv4Addr, mac: MacAddress },
    Delivered { frame: EthernetFrame },
    LinkStats { counters: Counters },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Actions {
    pub tx_frames: Vec<EthernetFrame>,
    pub host_events: Vec<HostEvent>,
    pub drops: Vec<DropRecord>,
    /// One entry per inbound frame handled.
    pub dispositions: Vec<Disposition>,
}

impl Actions {
    pub fn is_empty(&self) -> bool {
        self.tx_frames.is_empty()
            && self.host_events.is_empty()
            && self.drops.is_empty()
            && self.dispositions.is_empty()
    }

    fn drop_frame(&mut self, reason: DropReason, stage_count: u32) {
        self.drops.push(DropRecord {
            reason,
            stage_count,
        });
        self.dispositions.push(Disposition {
            fate: Fate::Dropped(reason),
            stage_count,
        });
    }

    fn settle(&mut self, fate: Fate, stage_count: u32) {
        self.dispositions.push(Disposition { fate, stage_count });
    }
}

#[derive(Debug, Clone)]
pub struct CloakingNic {
    config: NicConfig,
    ip: Ipv4Addr,
    filter: FilterTable,
    replay: ReplayCache,
    rx_fifo: ByteFifo,
    tx_fifo: ByteFifo,
    counters: Counters,
    /// ⟨local port, peer⟩ → expiry of the knock we last sent for it.
    client_knocks: BTreeMap<(u16, Ipv4Addr), u64>,
    /// Outstanding ARP requests: target IP → give-up time.
    pending_arp: BTreeMap<Ipv4Addr, u64>,
    nonce_counter: u64,
    ip_ident: u16,
}

impl CloakingNic {
    pub fn new(config: NicConfig) -> Result<Self, NicError> {
        let ip = config.ip.ok_or(NicError::MissingIp)?;
        Ok(CloakingNic {
            ip,
            filter: FilterTable::new(config.filter_capacity, config.filter_ttl_seconds),
            replay: ReplayCache::new(config.replay_window_seconds),
            rx_fifo: ByteFifo::default(),
            tx_fifo: ByteFifo::default(),
            counters: Counters::default(),
            client_knocks: BTreeMap::new(),
            pending_arp: BTreeMap::new(),
            nonce_counter: config.nonce_seed,
            ip_ident: 0,
            config,
        })
    }

    pub fn mac(&self) -> MacAddress {
        self.config.mac
    }

    pub fn ip(&self) -> Ipv4Addr {
        self.ip
    }

    pub fn config(&self) -> &NicConfig {
        &self.config
    }

    pub fn filter(&self) -> &FilterTable {
        &self.filter
    }

    pub fn filter_mut(&mut self) -> &mut FilterTable {
        &mut self.filter
    }

    pub fn replay_cache(&self) -> &ReplayCache {
        &self.replay
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn rx_fifo_mut(&mut self) -> &mut ByteFifo {
        &mut self.rx_fifo
    }

    pub fn tx_fifo_mut(&mut self) -> &mut ByteFifo {
        &mut self.tx_fifo
    }

    pub fn link_stats(&self) -> HostEvent {
        HostEvent::LinkStats {
            counters: self.counters.clone(),
        }
    }

    /// Stateless ARP responder: only a request for our own address yields a
    /// reply.
    pub fn arp_process(&self, arp: &ArpPacket) -> Option<ArpPacket> {
        match arp.operation {
            ArpOperation::Request if arp.target_ip == self.ip => Some(ArpPacket {
                operation: ArpOperation::Reply,
                sender_mac: self.config.mac,
                sender_ip: self.ip,
                target_mac: arp.sender_mac,
                target_ip: arp.sender_ip,
            }),
            _ => None,
        }
    }

    pub fn on_wire_receive(&mut self, wire: &[u8], now: u64) -> Actions {
        let mut actions = Actions::default();
        self.counters.rx_frames += 1;

        if wire.len() >= ETH_HEADER_LEN {
            let dst = MacAddress(wire[0..6].try_into().expect("6 bytes"));
            if dst != self.config.mac && !dst.is_broadcast() {
                self.record_drop(&mut actions, DropReason::NotForUs, stages::LINK_ADDRESS);
                return actions;
            }
        }

        if self.rx_fifo.push(wire) == PushOutcome::Overflow {
            self.counters.fifo_overflows += 1;
            self.record_drop(&mut actions, DropReason::FifoOverflow, stages::FILTER);
            return actions;
        }
        let wire = self.rx_fifo.pop().expect("frame just pushed");

        let frame = match parse_frame(&wire) {
            Ok(f) => f,
            Err(_) => {
                self.record_drop(&mut actions, DropReason::Malformed, stages::FILTER);
                return actions;
            }
        };

        match &frame.payload {
            FramePayload::Arp(arp) => self.receive_arp(&frame, *arp, now, &mut actions),
            FramePayload::Ipv4(pkt) if pkt.dst == self.ip => {
                if let Some(knock) = knock_payload(pkt) {
                    self.receive_knock(&frame, pkt, knock, now, &mut actions);
                } else if let Some(t) = pkt.transport() {
                    if self.filter.lookup(pkt.src, t.src_port, now) {
                        actions.host_events.push(HostEvent::Delivered {
                            frame: frame.clone(),
                        });
                        actions.settle(Fate::Delivered, stages::DELIVERED);
                    } else {
                        self.record_drop(&mut actions, DropReason::NoFilterMatch, stages::FILTER);
                    }
                } else {
                    self.record_drop(&mut actions, DropReason::NoFilterMatch, stages::FILTER);
                }
            }
            _ => self.record_drop(&mut actions, DropReason::NoFilterMatch, stages::FILTER),
        }
        actions
    }

    fn receive_arp(
        &mut self,
        frame: &EthernetFrame,
        arp: ArpPacket,
        now: u64,
        actions: &mut Actions,
    ) {
        if let Some(reply) = self.arp_process(&arp) {
            let out = EthernetFrame::arp(reply.target_mac, self.config.mac, reply);
            self.transmit(out, actions);
            actions.settle(Fate::ArpReplied, stages::ARP);
            return;
        }
        match arp.operation {
            ArpOperation::Reply if self.is_solicited(&arp, now) => {
                self.pending_arp.remove(&arp.sender_ip);
                actions.host_events.push(HostEvent::Delivered {
                    frame: frame.clone(),
                });
                actions.settle(Fate::Delivered, stages::SOLICITED_ARP_TO_HOST);
            }
            ArpOperation::Reply => {
                self.record_drop(actions, DropReason::UnsolicitedArpReply, stages::ARP)
            }
            ArpOperation::Request => {
                self.record_drop(actions, DropReason::ArpNotForUs, stages::ARP)
            }
        }
    }

    /// A reply answers our own outstanding request: its sender is the IP we
    /// asked about and it is addressed to us.
    fn is_solicited(&self, arp: &ArpPacket, now: u64) -> bool {
        arp.target_ip == self.ip
            && arp.target_mac == self.config.mac
            && self
                .pending_arp
                .get(&arp.sender_ip)
                .is_some_and(|&deadline| now <= deadline)
    }

    fn receive_knock(
        &mut self,
        frame: &EthernetFrame,
        pkt: &Ipv4Packet,
        knock: &[u8],
        now: u64,
        actions: &mut Actions,
    ) {
        let Some(key) = self.config.role_keys.get(&pkt.src) else {
            self.record_drop(
                actions,
                DropReason::BadKnock(RejectReason::UnknownPeer),
                stages::AUTHENTICATION,
            );
            return;
        };
        let fields = match open_knock(
            key,
            knock,
            now,
            &mut self.replay,
            self.config.freshness_seconds,
        ) {
            Ok(f) => f,
            Err(reason) => {
                self.record_drop(
                    actions,
                    DropReason::BadKnock(reason),
                    stages::AUTHENTICATION,
                );
                return;
            }
        };
        let ttl = self.config.filter_ttl_seconds;
        if self
            .filter
            .insert(fields.client_ip, fields.client_port, now, ttl)
            .is_err()
        {
            self.record_drop(actions, DropReason::FilterFull, stages::KNOCK_APPLIED);
            return;
        }
        actions.host_events.push(HostEvent::ArpCacheUpdate {
            ip: fields.client_ip,
            mac: frame.src,
        });
        actions.settle(Fate::KnockAccepted(fields), stages::KNOCK_APPLIED);
    }

    /// Sends a host frame, prefixed by a knock when it opens a flow to a
    /// protected peer. Every outbound transport frame also admits replies
    /// from its destination ⟨IP, port⟩.
    pub fn on_host_transmit(
        &mut self,
        frame: EthernetFrame,
        now: u64,
    ) -> Result<Actions, NicError> {
        if frame.src != self.config.mac {
            return Err(NicError::SourceMismatch {
                expected: self.config.mac,
                got: frame.src,
            });
        }
        let mut actions = Actions::default();
        let mut knock = None;

        match &frame.payload {
            FramePayload::Arp(arp) if arp.operation == ArpOperation::Request => {
                self.pending_arp
                    .insert(arp.target_ip, now + ARP_RESOLVE_TIMEOUT_SECONDS);
            }
            FramePayload::Ipv4(pkt) => {
                if let Some(t) = pkt.transport() {
                    let (peer, local_port, peer_port) = (pkt.dst, t.src_port, t.dst_port);
                    let ttl = self.config.filter_ttl_seconds;
                    if self.config.protected_peers.contains(&peer) {
                        let key = self
                            .config
                            .role_keys
                            .get(&peer)
                            .ok_or(NicError::UnknownPeerKey(peer))?
                            .clone();
                        let flow = (local_port, peer);
                        let live = self.client_knocks.get(&flow).is_some_and(|&exp| now <= exp);
                        if !live {
                            knock = Some(self.build_knock(&key, frame.dst, peer, local_port, now));
                        }
                        self.client_knocks.insert(flow, now + ttl);
                    }
                    // Return path; a full table only means replies get dropped.
                    let _ = self.filter.insert(peer, peer_port, now, ttl);
                }
            }
            _ => {}
        }

        if let Some(k) = knock {
            self.transmit(k, &mut actions);
        }
        self.transmit(frame, &mut actions);
        Ok(actions)
    }

    fn build_knock(
        &mut self,
        key: &SharedKey,
        peer_mac: MacAddress,
        peer: Ipv4Addr,
        local_port: u16,
        now: u64,
    ) -> EthernetFrame {
        let nonce = self.nonce_counter;
        self.nonce_counter = self.nonce_counter.wrapping_add(1);
        let fields = KnockFields {
            client_ip: self.ip,
            client_port: local_port,
            timestamp: now,
        };
        let sealed = seal_knock(key, nonce.to_be_bytes(), &fields);
        let icmp = IcmpMessage::echo_request(local_port, nonce as u16, sealed.to_bytes().to_vec());
        let ident = self.next_ident();
        EthernetFrame::ipv4(
            peer_mac,
            self.config.mac,
            Ipv4Packet::new(self.ip, peer, ident, Ipv4Payload::Icmp(icmp)),
        )
    }

    pub fn next_ident(&mut self) -> u16 {
        self.ip_ident = self.ip_ident.wrapping_add(1);
        self.ip_ident
    }

    fn transmit(&mut self, frame: EthernetFrame, actions: &mut Actions) {
        let bytes = match serialize_frame(&frame) {
            Ok(b) => b,
            Err(_) => {
                self.counters.bump_drop(DropReason::Malformed);
                actions.drops.push(DropRecord {
                    reason: DropReason::Malformed,
                    stage_count: stages::FILTER,
                });
                return;
            }
        };
        if self.tx_fifo.push(&bytes) == PushOutcome::Overflow {
            self.counters.fifo_overflows += 1;
            self.counters.bump_drop(DropReason::FifoOverflow);
            actions.drops.push(DropRecord {
                reason: DropReason::FifoOverflow,
                stage_count: stages::FILTER,
            });
            return;
        }
        self.tx_fifo.pop();
        self.counters.tx_frames += 1;
        actions.tx_frames.push(frame);
    }

    fn record_drop(&mut self, actions: &mut Actions, reason: DropReason, stage_count: u32) {
        self.counters.bump_drop(reason);
        actions.drop_frame(reason, stage_count);
    }

    /// Expiry sweep for the filter table, replay cache, client knock records
    /// and outstanding ARP requests. Never emits anything.
    pub fn tick(&mut self, now: u64) -> Actions {
        self.filter.sweep(now);
        self.replay.evict(now);
        self.client_knocks.retain(|_, exp| now <= *exp);
        self.pending_arp.retain(|_, deadline| now <= *deadline);
        Actions::default()
    }
}

impl Counters {
    fn bump_drop(&mut self, reason: DropReason) {
        *self.drops.entry(reason.label()).or_insert(0) += 1;
    }
}

/// The knock bytes of an ICMP echo request whose payload starts with the
/// knock magic.
pub fn knock_payload(pkt: &Ipv4Packet) -> Option<&[u8]> {
    match &pkt.payload {
        Ipv4Payload::Icmp(m)
            if m.icmp_type == ICMP_ECHO_REQUEST && m.payload.starts_with(&KNOCK_MAGIC) =>
        {
            Some(&m.payload)
        }
        _ => None,
    }
}

pub fn is_knock_frame(frame: &EthernetFrame) -> bool {
    frame.as_ipv4().and_then(knock_payload).is_some()
}
