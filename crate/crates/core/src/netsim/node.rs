use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::Serialize;

use crate::frames::{
    make_arp, parse_frame, serialize_frame, ArpOperation, EthernetFrame, FramePayload, IcmpMessage,
    Ipv4Packet, Ipv4Payload, MacAddress, TransportKind, TransportView, ICMP_ECHO_REPLY,
    ICMP_ECHO_REQUEST, TCP_ACK, TCP_PSH, TCP_RST, TCP_SYN,
};
use crate::nic::{is_knock_frame, CloakingNic, Fate, HostEvent};

use super::attack::AttackProgram;
use super::{Direction, TraceRecord};

/// Stage counts for the software-stack baseline: link, network, transport,
/// application.
pub mod baseline_stages {
    pub const LINK_ADDRESS: u32 = 0;
    pub const LINK: u32 = 1;
    pub const ARP: u32 = 2;
    pub const IP: u32 = 2;
    pub const TRANSPORT: u32 = 3;
    pub const APPLICATION: u32 = 4;
}

/// Something a host's software asks its stack to send.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HostIntent {
    Arp {
        peer: Ipv4Addr,
    },
    Connect {
        peer: Ipv4Addr,
        dst_port: u16,
        src_port: u16,
    },
    Send {
        peer: Ipv4Addr,
        dst_port: u16,
        src_port: u16,
        data: Vec<u8>,
    },
    Udp {
        peer: Ipv4Addr,
        dst_port: u16,
        src_port: u16,
        data: Vec<u8>,
    },
}

impl HostIntent {
    fn peer(&self) -> Ipv4Addr {
        match self {
            HostIntent::Arp { peer }
            | HostIntent::Connect { peer, .. }
            | HostIntent::Send { peer, .. }
            | HostIntent::Udp { peer, .. } => *peer,
        }
    }
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    /// Host behind a cloaking NIC, offering `services`.
    CloakedServer {
        nic: CloakingNic,
        services: BTreeSet<u16>,
    },
    /// Host behind a cloaking NIC that runs a script of outbound requests.
    Client {
        nic: CloakingNic,
        services: BTreeSet<u16>,
    },
    /// Conventional software stack with no link-layer protection.
    PlainHost { services: BTreeSet<u16> },
    Attacker {
        captured: Vec<Vec<u8>>,
        programs: Vec<AttackProgram>,
    },
}

impl NodeKind {
    pub fn label(&self) -> &'static str {
        match self {
            NodeKind::CloakedServer { .. } => "cloaked",
            NodeKind::Client { .. } => "client",
            NodeKind::PlainHost { .. } => "plain",
            NodeKind::Attacker { .. } => "attacker",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct NodeMetrics {
    pub kind: String,
    pub frames_processed: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub dropped_by_reason: BTreeMap<String, u64>,
    pub tx: u64,
    pub arp_cache_writes: u64,
    pub knocks_accepted: u64,
    pub expired_at_horizon: u64,
    pub cep_histogram: BTreeMap<u32, u64>,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub mac: MacAddress,
    pub ip: Ipv4Addr,
    pub kind: NodeKind,
    /// Host ARP cache. For NIC-backed hosts it is written only by knock
    /// validation or by replies to the host's own requests.
    pub arp_cache: BTreeMap<Ipv4Addr, MacAddress>,
    pub metrics: NodeMetrics,
    parked: Vec<HostIntent>,
    tcp_seq: u32,
    ip_ident: u16,
}

/// Frames a node put on the wire plus the trace records it produced.
#[derive(Debug, Default)]
pub(crate) struct NodeOutput {
    pub tx: Vec<Vec<u8>>,
    pub records: Vec<TraceRecord>,
}

impl Node {
    pub fn new(name: impl Into<String>, mac: MacAddress, ip: Ipv4Addr, kind: NodeKind) -> Self {
        let metrics = NodeMetrics {
            kind: kind.label().to_string(),
            ..NodeMetrics::default()
        };
        Node {
            name: name.into(),
            mac,
            ip,
            kind,
            arp_cache: BTreeMap::new(),
            metrics,
            parked: Vec::new(),
            tcp_seq: 1000,
            ip_ident: 0,
        }
    }

    pub fn nic(&self) -> Option<&CloakingNic> {
        match &self.kind {
            NodeKind::CloakedServer { nic, .. } | NodeKind::Client { nic, .. } => Some(nic),
            _ => None,
        }
    }

    pub fn nic_mut(&mut self) -> Option<&mut CloakingNic> {
        match &mut self.kind {
            NodeKind::CloakedServer { nic, .. } | NodeKind::Client { nic, .. } => Some(nic),
            _ => None,
        }
    }

    pub fn captured(&self) -> &[Vec<u8>] {
        match &self.kind {
            NodeKind::Attacker { captured, .. } => captured,
            _ => &[],
        }
    }

    pub(crate) fn tick(&mut self, now: u64) {
        if let Some(nic) = self.nic_mut() {
            nic.tick(now);
        }
    }

    fn record(&self, time: u64, direction: Direction, summary: String) -> TraceRecord {
        TraceRecord {
            time,
            node: self.name.clone(),
            direction,
            summary,
            verdict: None,
            stage: 0,
            detail: None,
            hex: None,
        }
    }

    fn account(&mut self, verdict: &str, dropped: bool, stage: u32) {
        self.metrics.frames_processed += 1;
        *self.metrics.cep_histogram.entry(stage).or_insert(0) += 1;
        if dropped {
            self.metrics.dropped += 1;
            *self
                .metrics
                .dropped_by_reason
                .entry(verdict.to_string())
                .or_insert(0) += 1;
        }
    }

    fn fate_record(
        &mut self,
        now: u64,
        summary: String,
        verdict: String,
        dropped: bool,
        stage: u32,
        hex: Option<String>,
    ) -> TraceRecord {
        self.account(&verdict, dropped, stage);
        TraceRecord {
            verdict: Some(verdict),
            stage,
            hex,
            ..self.record(
                now,
                if dropped {
                    Direction::Drop
                } else {
                    Direction::Rx
                },
                summary,
            )
        }
    }

    fn emit(&mut self, now: u64, frame: &EthernetFrame, out: &mut NodeOutput, hex: bool) {
        let bytes = serialize_frame(frame).expect("simulated hosts build frames within limits");
        self.metrics.tx += 1;
        out.records.push(TraceRecord {
            hex: hex.then(|| hex::encode(&bytes)),
            ..self.record(now, Direction::Tx, frame.summary())
        });
        out.tx.push(bytes);
    }

    /// Offers one wire frame to this node.
    pub(crate) fn receive(&mut self, wire: &[u8], now: u64, hex: bool) -> NodeOutput {
        let mut out = NodeOutput::default();
        let summary = match parse_frame(wire) {
            Ok(f) => f.summary(),
            Err(e) => format!("unparsed {} bytes ({e})", wire.len()),
        };
        match self.kind {
            NodeKind::CloakedServer { .. } | NodeKind::Client { .. } => {
                self.receive_via_nic(wire, now, summary, hex, &mut out)
            }
            NodeKind::PlainHost { .. } => self.receive_plain(wire, now, summary, hex, &mut out),
            NodeKind::Attacker { .. } => {
                if let NodeKind::Attacker { captured, .. } = &mut self.kind {
                    if parse_frame(wire).is_ok_and(|f| is_knock_frame(&f)) {
                        captured.push(wire.to_vec());
                    }
                }
                let rec = self.fate_record(
                    now,
                    summary,
                    "observed".into(),
                    false,
                    1,
                    hex.then(|| hex::encode(wire)),
                );
                out.records.push(rec);
            }
        }
        out
    }

    fn receive_via_nic(
        &mut self,
        wire: &[u8],
        now: u64,
        summary: String,
        hex: bool,
        out: &mut NodeOutput,
    ) {
        let nic = self.nic_mut().expect("NIC-backed node");
        let actions = nic.on_wire_receive(wire, now);
        for d in &actions.dispositions {
            let (verdict, dropped) = match d.fate {
                Fate::ArpReplied => ("arp_replied".to_string(), false),
                Fate::Delivered => ("delivered".to_string(), false),
                Fate::KnockAccepted(_) => ("knock_accepted".to_string(), false),
                Fate::Dropped(r) => (r.label(), true),
            };
            let mut rec = self.fate_record(
                now,
                summary.clone(),
                verdict,
                dropped,
                d.stage_count,
                hex.then(|| hex::encode(wire)),
            );
            if let Fate::KnockAccepted(f) = d.fate {
                let ttl = self.nic().map_or(0, |n| n.config().filter_ttl_seconds);
                rec.detail = Some(format!(
                    "admit {}:{} until {}",
                    f.client_ip,
                    f.client_port,
                    now + ttl
                ));
            }
            out.records.push(rec);
        }
        for f in &actions.tx_frames {
            self.emit(now, f, out, hex);
        }
        for ev in actions.host_events {
            self.host_event(ev, now, hex, out);
        }
    }

    fn host_event(&mut self, ev: HostEvent, now: u64, hex: bool, out: &mut NodeOutput) {
        match ev {
            HostEvent::ArpCacheUpdate { ip, mac } => {
                self.arp_cache.insert(ip, mac);
                self.metrics.arp_cache_writes += 1;
                self.metrics.knocks_accepted += 1;
                out.records.push(self.record(
                    now,
                    Direction::HostEvent,
                    format!("arp-cache {ip} is-at {mac}"),
                ));
                self.flush_parked(ip, now, hex, out);
            }
            HostEvent::Delivered { frame } => {
                self.metrics.delivered += 1;
                out.records.push(self.record(
                    now,
                    Direction::HostEvent,
                    format!("delivered {}", frame.summary()),
                ));
                self.host_stack(&frame, now, hex, out);
            }
            HostEvent::LinkStats { .. } => {}
        }
    }

    /// Host stack behind a cloaking NIC.
    fn host_stack(&mut self, frame: &EthernetFrame, now: u64, hex: bool, out: &mut NodeOutput) {
        match &frame.payload {
            FramePayload::Arp(arp) if arp.operation == ArpOperation::Reply => {
                self.arp_cache.insert(arp.sender_ip, arp.sender_mac);
                self.metrics.arp_cache_writes += 1;
                self.flush_parked(arp.sender_ip, now, hex, out);
            }
            FramePayload::Ipv4(pkt) => {
                let Some(t) = pkt.transport() else { return };
                if t.kind != TransportKind::Tcp
                    || t.tcp_flags() & (TCP_SYN | TCP_ACK | TCP_RST) != TCP_SYN
                {
                    return;
                }
                // replies go to the cached MAC; no entry, no reply
                let Some(&peer_mac) = self.arp_cache.get(&pkt.src) else {
                    return;
                };
                let reply = self.tcp_answer(peer_mac, pkt.src, t);
                self.send_via_nic(reply, now, hex, out);
            }
            _ => {}
        }
    }

    fn services(&self) -> Option<&BTreeSet<u16>> {
        match &self.kind {
            NodeKind::CloakedServer { services, .. }
            | NodeKind::Client { services, .. }
            | NodeKind::PlainHost { services } => Some(services),
            NodeKind::Attacker { .. } => None,
        }
    }

    /// SYN-ACK for a listening port, RST otherwise.
    fn tcp_answer(
        &mut self,
        peer_mac: MacAddress,
        peer: Ipv4Addr,
        t: &TransportView,
    ) -> EthernetFrame {
        let open = self.services().is_some_and(|s| s.contains(&t.dst_port));
        let seq = self.next_seq();
        let (flags, seq) = if open {
            (TCP_SYN | TCP_ACK, seq)
        } else {
            (TCP_RST | TCP_ACK, 0)
        };
        let seg = TransportView::tcp(
            t.dst_port,
            t.src_port,
            seq,
            t.tcp_seq().wrapping_add(1),
            flags,
            &[],
        );
        self.ip_frame(peer_mac, peer, Ipv4Payload::Transport(seg))
    }

    fn next_seq(&mut self) -> u32 {
        self.tcp_seq = self.tcp_seq.wrapping_add(1000);
        self.tcp_seq
    }

    fn ip_frame(
        &mut self,
        peer_mac: MacAddress,
        peer: Ipv4Addr,
        payload: Ipv4Payload,
    ) -> EthernetFrame {
        let ident = match self.nic_mut() {
            Some(nic) => nic.next_ident(),
            None => {
                self.ip_ident = self.ip_ident.wrapping_add(1);
                self.ip_ident
            }
        };
        EthernetFrame::ipv4(
            peer_mac,
            self.mac,
            Ipv4Packet::new(self.ip, peer, ident, payload),
        )
    }

    fn send_via_nic(&mut self, frame: EthernetFrame, now: u64, hex: bool, out: &mut NodeOutput) {
        let result = match self.nic_mut() {
            Some(nic) => nic.on_host_transmit(frame, now).map(|a| a.tx_frames),
            None => Ok(vec![frame]),
        };
        match result {
            Ok(frames) => {
                for f in &frames {
                    self.emit(now, f, out, hex);
                }
            }
            Err(e) => out.records.push(self.record(
                now,
                Direction::Note,
                format!("transmit refused: {e}"),
            )),
        }
    }

    /// Runs a scripted host request. Unknown peers are resolved by ARP
    /// first and the request is parked until the reply arrives.
    pub(crate) fn host_send(&mut self, intent: HostIntent, now: u64, hex: bool) -> NodeOutput {
        let mut out = NodeOutput::default();
        self.dispatch(intent, now, hex, &mut out);
        out
    }

    fn dispatch(&mut self, intent: HostIntent, now: u64, hex: bool, out: &mut NodeOutput) {
        let peer = intent.peer();
        if let HostIntent::Arp { .. } = intent {
            let req = make_arp(
                ArpOperation::Request,
                self.mac,
                self.ip,
                MacAddress::ZERO,
                peer,
            );
            self.send_via_nic(req, now, hex, out);
            return;
        }
        let Some(&peer_mac) = self.arp_cache.get(&peer) else {
            let already_resolving = self.parked.iter().any(|p| p.peer() == peer);
            self.parked.push(intent);
            if !already_resolving {
                self.dispatch(HostIntent::Arp { peer }, now, hex, out);
            }
            return;
        };
        let payload = match intent {
            HostIntent::Connect {
                dst_port, src_port, ..
            } => {
                let seq = self.next_seq();
                Ipv4Payload::Transport(TransportView::tcp_syn(src_port, dst_port, seq))
            }
            HostIntent::Send {
                dst_port,
                src_port,
                data,
                ..
            } => {
                let seq = self.next_seq();
                Ipv4Payload::Transport(TransportView::tcp(
                    src_port,
                    dst_port,
                    seq,
                    1,
                    TCP_ACK | TCP_PSH,
                    &data,
                ))
            }
            HostIntent::Udp {
                dst_port,
                src_port,
                data,
                ..
            } => Ipv4Payload::Transport(TransportView::udp(src_port, dst_port, &data)),
            HostIntent::Arp { .. } => unreachable!("handled above"),
        };
        let frame = self.ip_frame(peer_mac, peer, payload);
        self.send_via_nic(frame, now, hex, out);
    }

    fn flush_parked(&mut self, resolved: Ipv4Addr, now: u64, hex: bool, out: &mut NodeOutput) {
        let (ready, waiting): (Vec<_>, Vec<_>) = std::mem::take(&mut self.parked)
            .into_iter()
            .partition(|p| p.peer() == resolved);
        self.parked = waiting;
        for intent in ready {
            self.dispatch(intent, now, hex, out);
        }
    }

    /// Conventional stack: answers ARP for itself, believes every ARP
    /// reply, echoes pings, and answers every TCP SYN with SYN-ACK or RST.
    /// Replies go straight to the frame's link source.
    fn receive_plain(
        &mut self,
        wire: &[u8],
        now: u64,
        summary: String,
        hex: bool,
        out: &mut NodeOutput,
    ) {
        use baseline_stages as st;
        let frame = match parse_frame(wire) {
            Ok(f) => f,
            Err(_) => {
                let rec = self.fate_record(
                    now,
                    summary,
                    "malformed".into(),
                    true,
                    st::LINK,
                    hex.then(|| hex::encode(wire)),
                );
                out.records.push(rec);
                return;
            }
        };
        if frame.dst != self.mac && !frame.dst.is_broadcast() {
            let rec = self.fate_record(
                now,
                summary,
                "not_for_us".into(),
                true,
                st::LINK_ADDRESS,
                hex.then(|| hex::encode(wire)),
            );
            out.records.push(rec);
            return;
        }
        let mut reply = None;
        let (verdict, dropped, stage): (&str, bool, u32) = match &frame.payload {
            FramePayload::Arp(arp) => match arp.operation {
                ArpOperation::Request if arp.target_ip == self.ip => {
                    self.arp_cache.insert(arp.sender_ip, arp.sender_mac);
                    self.metrics.arp_cache_writes += 1;
                    reply = Some(make_arp(
                        ArpOperation::Reply,
                        self.mac,
                        self.ip,
                        arp.sender_mac,
                        arp.sender_ip,
                    ));
                    ("arp_replied", false, st::ARP)
                }
                ArpOperation::Request => ("arp_not_for_us", true, st::ARP),
                ArpOperation::Reply => {
                    self.arp_cache.insert(arp.sender_ip, arp.sender_mac);
                    self.metrics.arp_cache_writes += 1;
                    ("arp_cached", false, st::ARP)
                }
            },
            FramePayload::Ipv4(pkt) if pkt.dst == self.ip => match &pkt.payload {
                Ipv4Payload::Icmp(m) if m.icmp_type == ICMP_ECHO_REQUEST => {
                    let echo = IcmpMessage::new(
                        ICMP_ECHO_REPLY,
                        0,
                        m.identifier,
                        m.sequence,
                        m.payload.clone(),
                    );
                    reply = Some(self.ip_frame(frame.src, pkt.src, Ipv4Payload::Icmp(echo)));
                    ("echo_replied", false, st::TRANSPORT)
                }
                Ipv4Payload::Icmp(_) => ("icmp_ignored", true, st::TRANSPORT),
                Ipv4Payload::Transport(t) => {
                    let open = self.services().is_some_and(|s| s.contains(&t.dst_port));
                    match t.kind {
                        TransportKind::Tcp if t.tcp_flags() & TCP_RST != 0 => {
                            ("rst_ignored", true, st::TRANSPORT)
                        }
                        TransportKind::Tcp if open => {
                            if t.is_syn && t.tcp_flags() & TCP_ACK == 0 {
                                reply = Some(self.tcp_answer(frame.src, pkt.src, t));
                            }
                            self.metrics.delivered += 1;
                            ("delivered", false, st::APPLICATION)
                        }
                        TransportKind::Tcp => {
                            reply = Some(self.tcp_answer(frame.src, pkt.src, t));
                            ("closed_port_rst", true, st::TRANSPORT)
                        }
                        TransportKind::Udp if open => {
                            self.metrics.delivered += 1;
                            ("delivered", false, st::APPLICATION)
                        }
                        TransportKind::Udp => ("closed_port", true, st::TRANSPORT),
                    }
                }
                Ipv4Payload::Opaque(_) => ("unknown_protocol", true, st::IP),
            },
            FramePayload::Ipv4(_) => ("ip_not_for_us", true, st::IP),
            FramePayload::Opaque(_) => ("unknown_ethertype", true, st::LINK),
        };
        let rec = self.fate_record(
            now,
            summary,
            verdict.to_string(),
            dropped,
            stage,
            hex.then(|| hex::encode(wire)),
        );
        out.records.push(rec);
        if let Some(r) = reply {
            self.emit(now, &r, out, hex);
        }
    }

    /// Transmits raw attacker frames.
    pub(crate) fn emit_raw(&mut self, now: u64, frames: Vec<Vec<u8>>, hex: bool) -> NodeOutput {
        let mut out = NodeOutput::default();
        for bytes in frames {
            let summary = match parse_frame(&bytes) {
                Ok(f) => f.summary(),
                Err(e) => format!("unparsed {} bytes ({e})", bytes.len()),
            };
            self.metrics.tx += 1;
            out.records.push(TraceRecord {
                hex: hex.then(|| hex::encode(&bytes)),
                ..self.record(now, Direction::Tx, summary)
            });
            out.tx.push(bytes);
        }
        out
    }
}
