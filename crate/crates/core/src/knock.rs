//! Knock sealing and validation.
//!
//! A knock is a 46-byte record carried as the payload of an ICMP echo
//! request:
//!
//! ```text
//!  0      4   5   6          14                  30                  46
//!  +------+---+---+----------+-------------------+-------------------+
//!  | KNCK |ver|flg|  nonce   |    ciphertext     |        tag        |
//!  +------+---+---+----------+-------------------+-------------------+
//! ```
//!
//! The plaintext is `client_ip(4) | client_port(2) | 0x0000 | timestamp(8)`,
//! encrypted by XOR with the first 16 bytes of `HMAC-SHA-256(key, nonce | 0x01)`.
//! The tag is the first 16 bytes of
//! `HMAC-SHA-256(key, magic | version | flags | nonce | ciphertext)` and is
//! checked before any plaintext byte is looked at.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use hmac::{Hmac, Mac};
use sha2::Sha256;
use thiserror::Error;

type HmacSha256 = Hmac<Sha256>;

pub const KNOCK_MAGIC: [u8; 4] = *b"KNCK";
pub const KNOCK_VERSION: u8 = 0x01;
pub const KNOCK_LEN: usize = 46;
pub const NONCE_LEN: usize = 8;
pub const BLOCK_LEN: usize = 16;
pub const TAG_LEN: usize = 16;

const NONCE_AT: usize = 6;
const CIPHERTEXT_AT: usize = NONCE_AT + NONCE_LEN;
const TAG_AT: usize = CIPHERTEXT_AT + BLOCK_LEN;

pub const DEFAULT_FRESHNESS_SECONDS: u64 = 30;
pub const DEFAULT_REPLAY_WINDOW_SECONDS: u64 = 60;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("key must be 32 bytes, got {0}")]
    BadKeyLength(usize),
    #[error("key is not valid hex: {0}")]
    BadHex(String),
}

/// 32-byte pre-shared key for one client/server pair.
#[derive(Clone, PartialEq, Eq)]
pub struct SharedKey([u8; 32]);

impl SharedKey {
    pub fn new(bytes: [u8; 32]) -> Self {
        SharedKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, KeyError> {
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| KeyError::BadKeyLength(bytes.len()))?;
        Ok(SharedKey(arr))
    }

    pub fn from_hex(s: &str) -> Result<Self, KeyError> {
        let bytes = hex::decode(s.trim()).map_err(|e| KeyError::BadHex(e.to_string()))?;
        Self::from_slice(&bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Usable, but validation tooling warns about it.
    pub fn is_all_zero(&self) -> bool {
        self.0.iter().all(|b| *b == 0)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for SharedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SharedKey(..)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KnockFields {
    pub client_ip: Ipv4Addr,
    pub client_port: u16,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("client port must be in 1..=65535")]
pub struct ZeroPort;

impl KnockFields {
    pub fn new(client_ip: Ipv4Addr, client_port: u16, timestamp: u64) -> Result<Self, ZeroPort> {
        if client_port == 0 {
            return Err(ZeroPort);
        }
        Ok(KnockFields {
            client_ip,
            client_port,
            timestamp,
        })
    }

    fn plaintext(&self) -> [u8; BLOCK_LEN] {
        let mut p = [0u8; BLOCK_LEN];
        p[0..4].copy_from_slice(&self.client_ip.octets());
        p[4..6].copy_from_slice(&self.client_port.to_be_bytes());
        p[8..16].copy_from_slice(&self.timestamp.to_be_bytes());
        p
    }

    fn from_plaintext(p: &[u8; BLOCK_LEN]) -> Self {
        let ts: [u8; 8] = p[8..16].try_into().expect("8-byte slice");
        KnockFields {
            client_ip: Ipv4Addr::new(p[0], p[1], p[2], p[3]),
            client_port: u16::from_be_bytes([p[4], p[5]]),
            timestamp: u64::from_be_bytes(ts),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KnockPayload {
    pub flags: u8,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: [u8; BLOCK_LEN],
    pub tag: [u8; TAG_LEN],
}

impl KnockPayload {
    pub fn to_bytes(&self) -> [u8; KNOCK_LEN] {
        let mut out = [0u8; KNOCK_LEN];
        out[0..4].copy_from_slice(&KNOCK_MAGIC);
        out[4] = KNOCK_VERSION;
        out[5] = self.flags;
        out[NONCE_AT..CIPHERTEXT_AT].copy_from_slice(&self.nonce);
        out[CIPHERTEXT_AT..TAG_AT].copy_from_slice(&self.ciphertext);
        out[TAG_AT..].copy_from_slice(&self.tag);
        out
    }
}

/// Why a knock was refused. None of these is ever signalled on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RejectReason {
    BadLength,
    BadMagic,
    BadVersion,
    BadTag,
    Stale,
    Replayed,
    /// No key is configured for the knock's source address. Raised by the
    /// NIC before the payload is opened.
    UnknownPeer,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::BadLength => "bad_length",
            RejectReason::BadMagic => "bad_magic",
            RejectReason::BadVersion => "bad_version",
            RejectReason::BadTag => "bad_tag",
            RejectReason::Stale => "stale",
            RejectReason::Replayed => "replayed",
            RejectReason::UnknownPeer => "unknown_peer",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Nonces accepted within the last `window_seconds`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayCache {
    seen: BTreeMap<[u8; NONCE_LEN], u64>,
    window_seconds: u64,
}

impl ReplayCache {
    pub fn new(window_seconds: u64) -> Self {
        ReplayCache {
            seen: BTreeMap::new(),
            window_seconds,
        }
    }

    pub fn window_seconds(&self) -> u64 {
        self.window_seconds
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    pub fn contains(&self, nonce: &[u8; NONCE_LEN]) -> bool {
        self.seen.contains_key(nonce)
    }

    /// Records `nonce` as seen at `now`.
    pub fn insert(&mut self, nonce: [u8; NONCE_LEN], now: u64) {
        self.seen.insert(nonce, now);
    }

    /// Drops entries with `now - inserted > window`. An entry exactly
    /// `window` seconds old survives.
    pub fn evict(&mut self, now: u64) {
        let window = self.window_seconds;
        self.seen
            .retain(|_, inserted| now.saturating_sub(*inserted) <= window);
    }
}

/// HMAC-SHA-256 keyed with the shared key.
pub fn prf(key: &SharedKey, message: &[u8]) -> [u8; 32] {
    hmac_sha256(key.as_bytes(), message)
}

/// HMAC-SHA-256 under a key of any length.
pub fn hmac_sha256(key: &[u8], message: &[u8]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(message);
    mac.finalize().into_bytes().into()
}

fn keystream(key: &SharedKey, nonce: &[u8; NONCE_LEN]) -> [u8; BLOCK_LEN] {
    let mut msg = [0u8; NONCE_LEN + 1];
    msg[..NONCE_LEN].copy_from_slice(nonce);
    msg[NONCE_LEN] = 0x01;
    let full = prf(key, &msg);
    full[..BLOCK_LEN].try_into().expect("16-byte prefix")
}

fn tag_mac(key: &SharedKey, authenticated: &[u8]) -> HmacSha256 {
    let mut mac = HmacSha256::new_from_slice(key.as_bytes()).expect("HMAC accepts any key length");
    mac.update(authenticated);
    mac
}

pub fn seal_knock(key: &SharedKey, nonce: [u8; NONCE_LEN], fields: &KnockFields) -> KnockPayload {
    debug_assert!(fields.client_port != 0, "client port must be nonzero");
    let ks = keystream(key, &nonce);
    let mut ciphertext = fields.plaintext();
    for (c, k) in ciphertext.iter_mut().zip(ks) {
        *c ^= k;
    }
    let mut payload = KnockPayload {
        flags: 0,
        nonce,
        ciphertext,
        tag: [0; TAG_LEN],
    };
    let bytes = payload.to_bytes();
    let tag = tag_mac(key, &bytes[..TAG_AT]).finalize().into_bytes();
    payload.tag.copy_from_slice(&tag[..TAG_LEN]);
    payload
}

/// Authenticates and decodes a knock, recording its nonce on success.
///
/// Checks run in order: length, magic, version, tag, freshness
/// (`|now - timestamp| <= freshness_seconds`), replay. The cache is
/// evicted at `now` first, so nonces older than its window no longer count.
pub fn open_knock(
    key: &SharedKey,
    payload: &[u8],
    now: u64,
    cache: &mut ReplayCache,
    freshness_seconds: u64,
) -> Result<KnockFields, RejectReason> {
    if payload.len() != KNOCK_LEN {
        return Err(RejectReason::BadLength);
    }
    if payload[0..4] != KNOCK_MAGIC {
        return Err(RejectReason::BadMagic);
    }
    if payload[4] != KNOCK_VERSION {
        return Err(RejectReason::BadVersion);
    }
    tag_mac(key, &payload[..TAG_AT])
        .verify_truncated_left(&payload[TAG_AT..])
        .map_err(|_| RejectReason::BadTag)?;

    let nonce: [u8; NONCE_LEN] = payload[NONCE_AT..CIPHERTEXT_AT]
        .try_into()
        .expect("8-byte nonce");
    let ks = keystream(key, &nonce);
    let mut plain = [0u8; BLOCK_LEN];
    for (i, p) in plain.iter_mut().enumerate() {
        *p = payload[CIPHERTEXT_AT + i] ^ ks[i];
    }
    let fields = KnockFields::from_plaintext(&plain);

    if now.abs_diff(fields.timestamp) > freshness_seconds {
        return Err(RejectReason::Stale);
    }
    cache.evict(now);
    if cache.contains(&nonce) {
        return Err(RejectReason::Replayed);
    }
    cache.insert(nonce, now);
    Ok(fields)
}

/// One line of the golden-vector file:
/// `<key-hex> <nonce-hex> <ip> <port> <timestamp> <payload-hex>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorLine {
    pub key: SharedKey,
    pub nonce: [u8; NONCE_LEN],
    pub fields: KnockFields,
    pub payload: [u8; KNOCK_LEN],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("vector line {line}: {msg}")]
pub struct VectorParseError {
    pub line: usize,
    pub msg: String,
}

impl VectorLine {
    pub fn generate(key: &SharedKey, nonce: [u8; NONCE_LEN], fields: KnockFields) -> Self {
        VectorLine {
            key: key.clone(),
            nonce,
            fields,
            payload: seal_knock(key, nonce, &fields).to_bytes(),
        }
    }

    pub fn parse(line_no: usize, line: &str) -> Result<Self, VectorParseError> {
        let err = |msg: &str| VectorParseError {
            line: line_no,
            msg: msg.to_string(),
        };
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(err("expected 6 columns"));
        }
        let key = SharedKey::from_hex(cols[0]).map_err(|e| err(&e.to_string()))?;
        let nonce: [u8; NONCE_LEN] = hex::decode(cols[1])
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| err("nonce must be 8 hex bytes"))?;
        let ip: Ipv4Addr = cols[2].parse().map_err(|_| err("bad ip"))?;
        let port: u16 = cols[3].parse().map_err(|_| err("bad port"))?;
        let timestamp: u64 = cols[4].parse().map_err(|_| err("bad timestamp"))?;
        let fields = KnockFields::new(ip, port, timestamp).map_err(|e| err(&e.to_string()))?;
        let payload: [u8; KNOCK_LEN] = hex::decode(cols[5])
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| err("payload must be 46 hex bytes"))?;
        Ok(VectorLine {
            key,
            nonce,
            fields,
            payload,
        })
    }
}

impl fmt::Display for VectorLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {}",
            self.key.to_hex(),
            hex::encode(self.nonce),
            self.fields.client_ip,
            self.fields.client_port,
            self.fields.timestamp,
            hex::encode(self.payload)
        )
    }
}
