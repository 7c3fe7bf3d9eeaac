//! Byte-exact codecs for everything the NIC inspects: Ethernet II, ARP,
//! IPv4 (no options), ICMP, and a port-level view of TCP/UDP headers.
//!
//! All multi-byte fields are big-endian on the wire. The frame check
//! sequence is not modeled, and payloads are never padded to the 46-byte
//! Ethernet minimum.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use thiserror::Error;

pub const ETH_HEADER_LEN: usize = 14;
pub const ETH_MAX_PAYLOAD: usize = 1500;
pub const ETH_MAX_FRAME: usize = ETH_HEADER_LEN + ETH_MAX_PAYLOAD;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_ARP: u16 = 0x0806;

pub const ARP_BODY_LEN: usize = 28;
pub const IPV4_HEADER_LEN: usize = 20;
pub const ICMP_HEADER_LEN: usize = 8;
pub const TCP_HEADER_LEN: usize = 20;
pub const UDP_HEADER_LEN: usize = 8;

pub const IP_PROTO_ICMP: u8 = 1;
pub const IP_PROTO_TCP: u8 = 6;
pub const IP_PROTO_UDP: u8 = 17;

pub const ICMP_ECHO_REPLY: u8 = 0;
pub const ICMP_ECHO_REQUEST: u8 = 8;

pub const TCP_FIN: u8 = 0x01;
pub const TCP_SYN: u8 = 0x02;
pub const TCP_RST: u8 = 0x04;
pub const TCP_PSH: u8 = 0x08;
pub const TCP_ACK: u8 = 0x10;

const ARP_HTYPE_ETHERNET: u16 = 1;
const ARP_PTYPE_IPV4: u16 = 0x0800;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("buffer too short for {0}")]
    TooShort(&'static str),
    #[error("{0} checksum mismatch")]
    BadChecksum(&'static str),
    #[error("malformed {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SerializeError {
    #[error("payload of {0} bytes exceeds the 1500-byte Ethernet limit")]
    Oversize(usize),
}

/// 48-bit Ethernet address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MacAddress(pub [u8; 6]);

impl MacAddress {
    pub const BROADCAST: MacAddress = MacAddress([0xff; 6]);
    pub const ZERO: MacAddress = MacAddress([0; 6]);

    pub fn octets(&self) -> [u8; 6] {
        self.0
    }

    pub fn is_broadcast(&self) -> bool {
        *self == Self::BROADCAST
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid MAC address {0:?}")]
pub struct MacParseError(String);

impl FromStr for MacAddress {
    type Err = MacParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let mut parts = s.split([':', '-']);
        for slot in out.iter_mut() {
            let part = parts.next().ok_or_else(|| MacParseError(s.to_string()))?;
            if part.len() != 2 {
                return Err(MacParseError(s.to_string()));
            }
            *slot = u8::from_str_radix(part, 16).map_err(|_| MacParseError(s.to_string()))?;
        }
        if parts.next().is_some() {
            return Err(MacParseError(s.to_string()));
        }
        Ok(MacAddress(out))
    }
}

impl From<[u8; 6]> for MacAddress {
    fn from(octets: [u8; 6]) -> Self {
        MacAddress(octets)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArpOperation {
    Request = 1,
    Reply = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArpPacket {
    pub operation: ArpOperation,
    pub sender_mac: MacAddress,
    pub sender_ip: Ipv4Addr,
    pub target_mac: MacAddress,
    pub target_ip: Ipv4Addr,
}

impl ArpPacket {
    pub fn to_bytes(&self) -> [u8; ARP_BODY_LEN] {
        let mut out = [0u8; ARP_BODY_LEN];
        out[0..2].copy_from_slice(&ARP_HTYPE_ETHERNET.to_be_bytes());
        out[2..4].copy_from_slice(&ARP_PTYPE_IPV4.to_be_bytes());
        out[4] = 6;
        out[5] = 4;
        out[6..8].copy_from_slice(&(self.operation as u16).to_be_bytes());
        out[8..14].copy_from_slice(&self.sender_mac.0);
        out[14..18].copy_from_slice(&self.sender_ip.octets());
        out[18..24].copy_from_slice(&self.target_mac.0);
        out[24..28].copy_from_slice(&self.target_ip.octets());
        out
    }

    /// Trailing bytes past the 28-byte body (link padding) are ignored.
    pub fn parse(data: &[u8]) -> Result<Self, ParseError> {
        if data.len() < ARP_BODY_LEN {
            return Err(ParseError::TooShort("ARP body"));
        }
        if be16(data, 0) != ARP_HTYPE_ETHERNET
            || be16(data, 2) != ARP_PTYPE_IPV4
            || data[4] != 6
            || data[5] != 4
        {
            return Err(ParseError::Malformed("ARP address spaces"));
        }
        let operation = match be16(data, 6) {
            1 => ArpOperation::Request,
            2 => ArpOperation::Reply,
            _ => return Err(ParseError::Malformed("ARP operation")),
        };
        Ok(ArpPacket {
            operation,
            sender_mac: mac_at(data, 8),
            sender_ip: ip_at(data, 14),
            target_mac: mac_at(data, 18),
            target_ip: ip_at(data, 24),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IcmpMessage {
    pub icmp_type: u8,
    pub code: u8,
    pub checksum: u16,
    pub identifier: u16,
    pub sequence: u16,
    pub payload: Vec<u8>,
}

impl IcmpMessage {
    /// Builds a message with a valid checksum.
    pub fn new(icmp_type: u8, code: u8, identifier: u16, sequence: u16, payload: Vec<u8>) -> Self {
        let mut msg = IcmpMessage {
            icmp_type,
            code,
            checksum: 0,
            identifier,
            sequence,
            payload,
        };
        msg.checksum = internet_checksum(&msg.encode_with_checksum(0));
        msg
    }

    pub fn echo_request(identifier: u16, sequence: u16, payload: Vec<u8>) -> Self {
        Self::new(ICMP_ECHO_REQUEST, 0, identifier, sequence, payload)
    }

    pub fn encoded_len(&self) -> usize {
        ICMP_HEADER_LEN + self.payload.len()
    }

    fn encode_with_checksum(&self, checksum: u16) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.icmp_type);
        out.push(self.code);
        out.extend_from_slice(&checksum.to_be_bytes());
        out.extend_from_slice(&self.identifier.to_be_bytes());
        out.extend_from_slice(&self.sequence.to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Canonical encoding; the checksum is recomputed, not copied.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.encode_with_checksum(0);
        let sum = internet_checksum(&out);
        out[2..4].copy_from_slice(&sum.to_be_bytes());
        out
    }

    pub fn parse(data: &[u8]) -> Result<Self, ParseError> {
        if data.len() < ICMP_HEADER_LEN {
            return Err(ParseError::TooShort("ICMP header"));
        }
        if ones_complement_sum(data) != 0xffff {
            return Err(ParseError::BadChecksum("ICMP"));
        }
        Ok(IcmpMessage {
            icmp_type: data[0],
            code: data[1],
            checksum: be16(data, 2),
            identifier: be16(data, 4),
            sequence: be16(data, 6),
            payload: data[ICMP_HEADER_LEN..].to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransportKind {
    Tcp,
    Udp,
}

/// Port-level view of a TCP or UDP segment. `raw` holds the whole segment
/// (header and data) exactly as carried in the IPv4 payload; the other
/// fields are decoded from it.
///
/// Transport checksums are neither computed nor verified.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransportView {
    pub src_port: u16,
    pub dst_port: u16,
    pub kind: TransportKind,
    pub is_syn: bool,
    pub raw: Vec<u8>,
}

impl TransportView {
    pub fn tcp(src_port: u16, dst_port: u16, seq: u32, ack: u32, flags: u8, data: &[u8]) -> Self {
        let mut raw = vec![0u8; TCP_HEADER_LEN];
        raw[0..2].copy_from_slice(&src_port.to_be_bytes());
        raw[2..4].copy_from_slice(&dst_port.to_be_bytes());
        raw[4..8].copy_from_slice(&seq.to_be_bytes());
        raw[8..12].copy_from_slice(&ack.to_be_bytes());
        raw[12] = 5 << 4;
        raw[13] = flags;
        raw[14..16].copy_from_slice(&65535u16.to_be_bytes());
        raw.extend_from_slice(data);
        TransportView {
            src_port,
            dst_port,
            kind: TransportKind::Tcp,
            is_syn: flags & TCP_SYN != 0,
            raw,
        }
    }

    pub fn tcp_syn(src_port: u16, dst_port: u16, seq: u32) -> Self {
        Self::tcp(src_port, dst_port, seq, 0, TCP_SYN, &[])
    }

    pub fn udp(src_port: u16, dst_port: u16, data: &[u8]) -> Self {
        let mut raw = vec![0u8; UDP_HEADER_LEN];
        raw[0..2].copy_from_slice(&src_port.to_be_bytes());
        raw[2..4].copy_from_slice(&dst_port.to_be_bytes());
        raw[4..6].copy_from_slice(&((UDP_HEADER_LEN + data.len()) as u16).to_be_bytes());
        raw.extend_from_slice(data);
        TransportView {
            src_port,
            dst_port,
            kind: TransportKind::Udp,
            is_syn: false,
            raw,
        }
    }

    pub fn parse(kind: TransportKind, data: &[u8]) -> Result<Self, ParseError> {
        let min = match kind {
            TransportKind::Tcp => TCP_HEADER_LEN,
            TransportKind::Udp => UDP_HEADER_LEN,
        };
        if data.len() < min {
            return Err(ParseError::TooShort("transport header"));
        }
        Ok(TransportView {
            src_port: be16(data, 0),
            dst_port: be16(data, 2),
            kind,
            is_syn: kind == TransportKind::Tcp && data[13] & TCP_SYN != 0,
            raw: data.to_vec(),
        })
    }

    /// TCP flag byte; zero for UDP.
    pub fn tcp_flags(&self) -> u8 {
        match self.kind {
            TransportKind::Tcp => self.raw[13],
            TransportKind::Udp => 0,
        }
    }

    pub fn tcp_seq(&self) -> u32 {
        match self.kind {
            TransportKind::Tcp => {
                u32::from_be_bytes([self.raw[4], self.raw[5], self.raw[6], self.raw[7]])
            }
            TransportKind::Udp => 0,
        }
    }

    pub fn data(&self) -> &[u8] {
        match self.kind {
            TransportKind::Tcp => &self.raw[TCP_HEADER_LEN..],
            TransportKind::Udp => &self.raw[UDP_HEADER_LEN..],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Ipv4Payload {
    Icmp(IcmpMessage),
    Transport(TransportView),
    Opaque(Vec<u8>),
}

impl Ipv4Payload {
    fn to_bytes(&self) -> Vec<u8> {
        match self {
            Ipv4Payload::Icmp(m) => m.to_bytes(),
            Ipv4Payload::Transport(t) => t.raw.clone(),
            Ipv4Payload::Opaque(b) => b.clone(),
        }
    }

    fn encoded_len(&self) -> usize {
        match self {
            Ipv4Payload::Icmp(m) => m.encoded_len(),
            Ipv4Payload::Transport(t) => t.raw.len(),
            Ipv4Payload::Opaque(b) => b.len(),
        }
    }
}

/// IPv4 datagram with a fixed 20-byte header. TOS, flags and fragment
/// offset are emitted as zero and ignored on parse.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ipv4Packet {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub protocol: u8,
    pub ttl: u8,
    pub identification: u16,
    pub header_checksum: u16,
    pub payload: Ipv4Payload,
}

impl Ipv4Packet {
    /// Builds a packet whose stored header checksum matches its encoding.
    /// `protocol` is derived from the payload unless it is opaque.
    pub fn new(src: Ipv4Addr, dst: Ipv4Addr, identification: u16, payload: Ipv4Payload) -> Self {
        let protocol = match &payload {
            Ipv4Payload::Icmp(_) => IP_PROTO_ICMP,
            Ipv4Payload::Transport(t) => match t.kind {
                TransportKind::Tcp => IP_PROTO_TCP,
                TransportKind::Udp => IP_PROTO_UDP,
            },
            Ipv4Payload::Opaque(_) => 0xfd,
        };
        Self::with_protocol(src, dst, protocol, 64, identification, payload)
    }

    pub fn with_protocol(
        src: Ipv4Addr,
        dst: Ipv4Addr,
        protocol: u8,
        ttl: u8,
        identification: u16,
        payload: Ipv4Payload,
    ) -> Self {
        let mut pkt = Ipv4Packet {
            src,
            dst,
            protocol,
            ttl,
            identification,
            header_checksum: 0,
            payload,
        };
        pkt.header_checksum = internet_checksum(&pkt.header_bytes(0));
        pkt
    }

    pub fn total_len(&self) -> usize {
        IPV4_HEADER_LEN + self.payload.encoded_len()
    }

    fn header_bytes(&self, checksum: u16) -> [u8; IPV4_HEADER_LEN] {
        let mut h = [0u8; IPV4_HEADER_LEN];
        h[0] = 0x45;
        h[2..4].copy_from_slice(&(self.total_len() as u16).to_be_bytes());
        h[4..6].copy_from_slice(&self.identification.to_be_bytes());
        h[8] = self.ttl;
        h[9] = self.protocol;
        h[10..12].copy_from_slice(&checksum.to_be_bytes());
        h[12..16].copy_from_slice(&self.src.octets());
        h[16..20].copy_from_slice(&self.dst.octets());
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = self.header_bytes(0);
        let sum = internet_checksum(&header);
        header[10..12].copy_from_slice(&sum.to_be_bytes());
        let mut out = header.to_vec();
        out.extend_from_slice(&self.payload.to_bytes());
        out
    }

    /// Bytes past `total_length` are treated as link padding and discarded.
    pub fn parse(data: &[u8]) -> Result<Self, ParseError> {
        if data.len() < IPV4_HEADER_LEN {
            return Err(ParseError::TooShort("IPv4 header"));
        }
        if data[0] != 0x45 {
            return Err(ParseError::Malformed("IPv4 version/IHL"));
        }
        let total = be16(data, 2) as usize;
        if total < IPV4_HEADER_LEN {
            return Err(ParseError::Malformed("IPv4 total length"));
        }
        if data.len() < total {
            return Err(ParseError::TooShort("IPv4 total length"));
        }
        if ones_complement_sum(&data[..IPV4_HEADER_LEN]) != 0xffff {
            return Err(ParseError::BadChecksum("IPv4 header"));
        }
        let protocol = data[9];
        let body = &data[IPV4_HEADER_LEN..total];
        let payload = match protocol {
            IP_PROTO_ICMP => Ipv4Payload::Icmp(IcmpMessage::parse(body)?),
            IP_PROTO_TCP => Ipv4Payload::Transport(TransportView::parse(TransportKind::Tcp, body)?),
            IP_PROTO_UDP => Ipv4Payload::Transport(TransportView::parse(TransportKind::Udp, body)?),
            _ => Ipv4Payload::Opaque(body.to_vec()),
        };
        Ok(Ipv4Packet {
            src: ip_at(data, 12),
            dst: ip_at(data, 16),
            protocol,
            ttl: data[8],
            identification: be16(data, 4),
            header_checksum: be16(data, 10),
            payload,
        })
    }

    pub fn transport(&self) -> Option<&TransportView> {
        match &self.payload {
            Ipv4Payload::Transport(t) => Some(t),
            _ => None,
        }
    }

    pub fn icmp(&self) -> Option<&IcmpMessage> {
        match &self.payload {
            Ipv4Payload::Icmp(m) => Some(m),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FramePayload {
    Arp(ArpPacket),
    Ipv4(Ipv4Packet),
    Opaque(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EthernetFrame {
    pub dst: MacAddress,
    pub src: MacAddress,
    pub ethertype: u16,
    pub payload: FramePayload,
}

impl EthernetFrame {
    pub fn arp(dst: MacAddress, src: MacAddress, arp: ArpPacket) -> Self {
        EthernetFrame {
            dst,
            src,
            ethertype: ETHERTYPE_ARP,
            payload: FramePayload::Arp(arp),
        }
    }

    pub fn ipv4(dst: MacAddress, src: MacAddress, packet: Ipv4Packet) -> Self {
        EthernetFrame {
            dst,
            src,
            ethertype: ETHERTYPE_IPV4,
            payload: FramePayload::Ipv4(packet),
        }
    }

    pub fn as_arp(&self) -> Option<&ArpPacket> {
        match &self.payload {
            FramePayload::Arp(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_ipv4(&self) -> Option<&Ipv4Packet> {
        match &self.payload {
            FramePayload::Ipv4(p) => Some(p),
            _ => None,
        }
    }

    pub fn payload_len(&self) -> usize {
        match &self.payload {
            FramePayload::Arp(_) => ARP_BODY_LEN,
            FramePayload::Ipv4(p) => p.total_len(),
            FramePayload::Opaque(b) => b.len(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, SerializeError> {
        serialize_frame(self)
    }

    /// One-line human summary used in traces.
    pub fn summary(&self) -> String {
        match &self.payload {
            FramePayload::Arp(a) => match a.operation {
                ArpOperation::Request => format!(
                    "arp who-has {} tell {} ({})",
                    a.target_ip, a.sender_ip, a.sender_mac
                ),
                ArpOperation::Reply => format!(
                    "arp reply {} is-at {} to {}",
                    a.sender_ip, a.sender_mac, self.dst
                ),
            },
            FramePayload::Ipv4(p) => match &p.payload {
                Ipv4Payload::Icmp(m) => {
                    let knock = m.payload.starts_with(&crate::knock::KNOCK_MAGIC);
                    format!(
                        "icmp {} > {} type {} code {} len {}{}",
                        p.src,
                        p.dst,
                        m.icmp_type,
                        m.code,
                        m.payload.len(),
                        if knock { " knock" } else { "" }
                    )
                }
                Ipv4Payload::Transport(t) => match t.kind {
                    TransportKind::Tcp => format!(
                        "tcp {}:{} > {}:{} flags {} len {}",
                        p.src,
                        t.src_port,
                        p.dst,
                        t.dst_port,
                        tcp_flag_string(t.tcp_flags()),
                        t.data().len()
                    ),
                    TransportKind::Udp => format!(
                        "udp {}:{} > {}:{} len {}",
                        p.src,
                        t.src_port,
                        p.dst,
                        t.dst_port,
                        t.data().len()
                    ),
                },
                Ipv4Payload::Opaque(b) => {
                    format!(
                        "ipv4 {} > {} proto {} len {}",
                        p.src,
                        p.dst,
                        p.protocol,
                        b.len()
                    )
                }
            },
            FramePayload::Opaque(b) => {
                format!(
                    "ether {} > {} type {:#06x} len {}",
                    self.src,
                    self.dst,
                    self.ethertype,
                    b.len()
                )
            }
        }
    }
}

fn tcp_flag_string(flags: u8) -> String {
    let names = [
        (TCP_SYN, 'S'),
        (TCP_ACK, 'A'),
        (TCP_FIN, 'F'),
        (TCP_RST, 'R'),
        (TCP_PSH, 'P'),
    ];
    let s: String = names
        .iter()
        .filter(|(bit, _)| flags & bit != 0)
        .map(|(_, c)| *c)
        .collect();
    if s.is_empty() {
        ".".to_string()
    } else {
        s
    }
}

/// RFC 1071 Internet checksum. Odd-length input is padded with a zero byte.
pub fn internet_checksum(data: &[u8]) -> u16 {
    !ones_complement_sum(data)
}

/// One's-complement sum of 16-bit big-endian words with end-around carry.
/// A buffer carrying a correct checksum sums to 0xFFFF.
pub fn ones_complement_sum(data: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    let mut chunks = data.chunks_exact(2);
    for w in &mut chunks {
        sum += u32::from(u16::from_be_bytes([w[0], w[1]]));
    }
    if let [last] = chunks.remainder() {
        sum += u32::from(*last) << 8;
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    sum as u16
}

/// Decodes a wire frame. Unknown ethertypes and IP protocols decode to
/// opaque payloads; only truncation, checksum failure, and structurally
/// invalid ARP/IPv4 headers are errors.
pub fn parse_frame(wire: &[u8]) -> Result<EthernetFrame, ParseError> {
    if wire.len() < ETH_HEADER_LEN {
        return Err(ParseError::TooShort("Ethernet header"));
    }
    let dst = mac_at(wire, 0);
    let src = mac_at(wire, 6);
    let ethertype = be16(wire, 12);
    let body = &wire[ETH_HEADER_LEN..];
    let payload = match ethertype {
        ETHERTYPE_ARP => FramePayload::Arp(ArpPacket::parse(body)?),
        ETHERTYPE_IPV4 => FramePayload::Ipv4(Ipv4Packet::parse(body)?),
        _ => FramePayload::Opaque(body.to_vec()),
    };
    Ok(EthernetFrame {
        dst,
        src,
        ethertype,
        payload,
    })
}

/// Canonical encoding. IPv4 and ICMP checksums are recomputed.
pub fn serialize_frame(frame: &EthernetFrame) -> Result<Vec<u8>, SerializeError> {
    let len = frame.payload_len();
    if len > ETH_MAX_PAYLOAD {
        return Err(SerializeError::Oversize(len));
    }
    let mut out = Vec::with_capacity(ETH_HEADER_LEN + len);
    out.extend_from_slice(&frame.dst.0);
    out.extend_from_slice(&frame.src.0);
    out.extend_from_slice(&frame.ethertype.to_be_bytes());
    match &frame.payload {
        FramePayload::Arp(a) => out.extend_from_slice(&a.to_bytes()),
        FramePayload::Ipv4(p) => out.extend_from_slice(&p.to_bytes()),
        FramePayload::Opaque(b) => out.extend_from_slice(b),
    }
    Ok(out)
}

/// Builds an ARP frame. Requests are broadcast with a zeroed target MAC;
/// replies are unicast to `target_mac`.
pub fn make_arp(
    operation: ArpOperation,
    sender_mac: MacAddress,
    sender_ip: Ipv4Addr,
    target_mac: MacAddress,
    target_ip: Ipv4Addr,
) -> EthernetFrame {
    let (dst, target_mac) = match operation {
        ArpOperation::Request => (MacAddress::BROADCAST, MacAddress::ZERO),
        ArpOperation::Reply => (target_mac, target_mac),
    };
    EthernetFrame::arp(
        dst,
        sender_mac,
        ArpPacket {
            operation,
            sender_mac,
            sender_ip,
            target_mac,
            target_ip,
        },
    )
}

/// Lowercase hex pairs separated by spaces, 16 bytes per line.
pub fn hex_dump(bytes: &[u8]) -> String {
    bytes
        .chunks(16)
        .map(|line| {
            line.iter()
                .map(|b| format!("{b:02x}"))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn be16(data: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([data[at], data[at + 1]])
}

fn mac_at(data: &[u8], at: usize) -> MacAddress {
    let mut m = [0u8; 6];
    m.copy_from_slice(&data[at..at + 6]);
    MacAddress(m)
}

fn ip_at(data: &[u8], at: usize) -> Ipv4Addr {
    Ipv4Addr::new(data[at], data[at + 1], data[at + 2], data[at + 3])
}

#[cfg(test)]
mod tests {
    use super::*;

    const A1: MacAddress = MacAddress([0xaa, 0, 0, 0, 0, 0x01]);
    const B2: MacAddress = MacAddress([0xbb, 0, 0, 0, 0, 0x02]);

    /// Word-by-word reference sum, kept separate from `ones_complement_sum`.
    fn oracle_checksum(data: &[u8]) -> u16 {
        let mut padded = data.to_vec();
        if padded.len() % 2 == 1 {
            padded.push(0);
        }
        let mut acc: u64 = 0;
        for i in (0..padded.len()).step_by(2) {
            acc += (padded[i] as u64) * 256 + padded[i + 1] as u64;
        }
        while acc >> 16 != 0 {
            acc = (acc & 0xffff) + (acc >> 16);
        }
        0xffff - acc as u16
    }

    #[test]
    fn checksum_of_empty_is_ffff() {
        assert_eq!(internet_checksum(&[]), 0xffff);
    }

    #[test]
    fn checksum_of_reference_ipv4_header() {
        let hdr = [
            0x45, 0x00, 0x00, 0x1c, 0x00, 0x01, 0x00, 0x00, 0x40, 0x01, 0x00, 0x00, 0xc0, 0xa8,
            0x00, 0x01, 0xc0, 0xa8, 0x00, 0x02,
        ];
        assert_eq!(oracle_checksum(&hdr), 0xf98c);
        assert_eq!(internet_checksum(&hdr), 0xf98c);
        let mut with = hdr;
        with[10..12].copy_from_slice(&0xf98cu16.to_be_bytes());
        assert_eq!(ones_complement_sum(&with), 0xffff);
    }

    #[test]
    fn checksum_odd_length_pads_with_zero() {
        assert_eq!(
            internet_checksum(&[0x12, 0x34, 0x56]),
            internet_checksum(&[0x12, 0x34, 0x56, 0x00])
        );
        assert_eq!(
            internet_checksum(&[0x12, 0x34, 0x56]),
            oracle_checksum(&[0x12, 0x34, 0x56])
        );
    }

    #[test]
    fn short_input_is_too_short() {
        assert!(matches!(
            parse_frame(&[0u8; 13]),
            Err(ParseError::TooShort(_))
        ));
    }

    #[test]
    fn arp_request_golden_bytes() {
        // who-has 192.168.0.2 tell 192.168.0.1, laid out by hand
        let golden: [u8; 42] = [
            0xff, 0xff, 0xff, 0xff, 0xff, 0xff, // dst
            0xaa, 0x00, 0x00, 0x00, 0x00, 0x01, // src
            0x08, 0x06, // ethertype
            0x00, 0x01, 0x08, 0x00, 0x06, 0x04, 0x00, 0x01, // htype ptype hlen plen op
            0xaa, 0x00, 0x00, 0x00, 0x00, 0x01, 0xc0, 0xa8, 0x00, 0x01, // sender
            0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xc0, 0xa8, 0x00, 0x02, // target
        ];
        let frame = make_arp(
            ArpOperation::Request,
            A1,
            Ipv4Addr::new(192, 168, 0, 1),
            B2,
            Ipv4Addr::new(192, 168, 0, 2),
        );
        assert_eq!(frame.dst, MacAddress::BROADCAST);
        assert_eq!(serialize_frame(&frame).unwrap(), golden.to_vec());
        let parsed = parse_frame(&golden).unwrap();
        assert_eq!(parsed, frame);
        let arp = parsed.as_arp().unwrap();
        assert_eq!(arp.operation, ArpOperation::Request);
        assert_eq!(arp.target_mac, MacAddress::ZERO);
    }

    #[test]
    fn arp_reply_is_unicast_42_bytes() {
        let frame = make_arp(
            ArpOperation::Reply,
            B2,
            Ipv4Addr::new(192, 168, 0, 2),
            A1,
            Ipv4Addr::new(192, 168, 0, 1),
        );
        assert_eq!(frame.dst, A1);
        let bytes = serialize_frame(&frame).unwrap();
        assert_eq!(bytes.len(), 42);
        assert_eq!(parse_frame(&bytes).unwrap().as_arp(), frame.as_arp());
    }

    #[test]
    fn icmp_knock_frame_is_88_bytes() {
        let icmp = IcmpMessage::echo_request(1, 1, vec![0x5a; 46]);
        let pkt = Ipv4Packet::new(
            Ipv4Addr::new(10, 0, 0, 5),
            Ipv4Addr::new(10, 0, 0, 9),
            7,
            Ipv4Payload::Icmp(icmp),
        );
        let frame = EthernetFrame::ipv4(B2, A1, pkt);
        let bytes = serialize_frame(&frame).unwrap();
        assert_eq!(bytes.len(), 14 + 20 + 8 + 46);
        assert_eq!(parse_frame(&bytes).unwrap(), frame);
        assert_eq!(ones_complement_sum(&bytes[14..34]), 0xffff);
        assert_eq!(ones_complement_sum(&bytes[34..]), 0xffff);
    }

    #[test]
    fn oversize_payload_rejected() {
        let frame = EthernetFrame {
            dst: B2,
            src: A1,
            ethertype: 0x88b5,
            payload: FramePayload::Opaque(vec![0; 1501]),
        };
        assert_eq!(serialize_frame(&frame), Err(SerializeError::Oversize(1501)));
        let ok = EthernetFrame {
            payload: FramePayload::Opaque(vec![0; 1500]),
            ..frame
        };
        assert_eq!(serialize_frame(&ok).unwrap().len(), ETH_MAX_FRAME);
    }

    #[test]
    fn corrupted_checksums_are_reported() {
        let pkt = Ipv4Packet::new(
            Ipv4Addr::new(10, 0, 0, 5),
            Ipv4Addr::new(10, 0, 0, 9),
            1,
            Ipv4Payload::Icmp(IcmpMessage::echo_request(1, 2, vec![1, 2, 3])),
        );
        let bytes = serialize_frame(&EthernetFrame::ipv4(B2, A1, pkt)).unwrap();
        let mut bad_ip = bytes.clone();
        bad_ip[14 + 8] ^= 0x01; // ttl
        assert_eq!(
            parse_frame(&bad_ip),
            Err(ParseError::BadChecksum("IPv4 header"))
        );
        let mut bad_icmp = bytes;
        let last = bad_icmp.len() - 1;
        bad_icmp[last] ^= 0x80;
        assert_eq!(parse_frame(&bad_icmp), Err(ParseError::BadChecksum("ICMP")));
    }

    #[test]
    fn unknown_protocols_are_opaque() {
        let wire = [&B2.0[..], &A1.0[..], &[0x86, 0xdd], &[1, 2, 3, 4]].concat();
        let f = parse_frame(&wire).unwrap();
        assert_eq!(f.payload, FramePayload::Opaque(vec![1, 2, 3, 4]));

        let pkt = Ipv4Packet::with_protocol(
            Ipv4Addr::new(1, 1, 1, 1),
            Ipv4Addr::new(2, 2, 2, 2),
            47,
            64,
            0,
            Ipv4Payload::Opaque(vec![9; 5]),
        );
        let frame = EthernetFrame::ipv4(B2, A1, pkt);
        assert_eq!(
            parse_frame(&serialize_frame(&frame).unwrap()).unwrap(),
            frame
        );
    }

    #[test]
    fn truncated_transport_is_too_short() {
        let pkt = Ipv4Packet::with_protocol(
            Ipv4Addr::new(1, 1, 1, 1),
            Ipv4Addr::new(2, 2, 2, 2),
            IP_PROTO_TCP,
            64,
            0,
            Ipv4Payload::Opaque(vec![0; 19]),
        );
        let bytes = serialize_frame(&EthernetFrame::ipv4(B2, A1, pkt)).unwrap();
        assert_eq!(
            parse_frame(&bytes),
            Err(ParseError::TooShort("transport header"))
        );
    }

    #[test]
    fn tcp_view_decodes_ports_and_syn() {
        let t = TransportView::tcp_syn(40000, 22, 7);
        let parsed = TransportView::parse(TransportKind::Tcp, &t.raw).unwrap();
        assert_eq!(parsed, t);
        assert!(parsed.is_syn);
        assert_eq!((parsed.src_port, parsed.dst_port), (40000, 22));
        let u = TransportView::udp(53, 5353, b"hi");
        assert!(!u.is_syn);
        assert_eq!(u.data(), b"hi");
    }

    #[test]
    fn mac_parse_and_display() {
        let m: MacAddress = "aa:00:00:00:00:01".parse().unwrap();
        assert_eq!(m, A1);
        assert_eq!(m.to_string(), "aa:00:00:00:00:01");
        assert!("aa:00:00:00:00".parse::<MacAddress>().is_err());
        assert!("aa:00:00:00:00:01:02".parse::<MacAddress>().is_err());
    }

    #[test]
    fn hex_dump_layout() {
        let bytes: Vec<u8> = (0u8..18).collect();
        assert_eq!(
            hex_dump(&bytes),
            "00 01 02 03 04 05 06 07 08 09 0a 0b 0c 0d 0e 0f\n10 11"
        );
        assert_eq!(hex_dump(&[]), "");
    }
}
