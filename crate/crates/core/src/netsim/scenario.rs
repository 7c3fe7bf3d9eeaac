//! Line-oriented scenario files.
//!
//! ```text
//! # comments run to end of line
//! horizon 100            # settings: horizon, seed, freshness, filter-ttl,
//! seed 7                 #   replay-window, filter-capacity
//!
//! [nodes]
//! server  cloaked  mac=02:00:00:00:00:09 ip=10.0.0.9 services=22,80
//! alice   client   mac=02:00:00:00:00:05 ip=10.0.0.5
//! web     plain    mac=02:00:00:00:00:10 ip=10.0.0.10 services=80
//! mallory attacker mac=02:00:00:00:00:66 ip=10.0.0.66
//!
//! [keys]
//! alice server 000102...1f       # 32-byte hex key shared by the pair
//!
//! [protect]
//! alice server                   # alice knocks before talking to server
//!
//! [attacks]
//! mallory port-scan target=server ports=1-1024 echo=yes start=2
//! mallory arp-poison victim=10.0.0.1 claimed=mallory start=5 count=10 period=1
//! mallory knock-replay start=20
//!
//! [steps]
//! 1 alice connect server 22 from 40000
//! 8 alice send server 22 from 40000 hello
//! ```
//!
//! Attack kinds and their keys:
//! - `arp-poison victim=<ip|node> claimed=<mac|node> [target=<node>]`
//! - `mac-spoof victim=<mac|node> target=<node> [port=<p>] [sport=<p>] [src-ip=<ip|node>]`
//! - `knock-replay`
//! - `port-scan target=<node> ports=<lo>-<hi> [echo=yes|no]`
//! - `forge-knock target=<node> sport=<p>` (needs a key shared with the target)
//!
//! Every attack takes `start=<t> [count=<n>] [period=<s>]`.
//!
//! Step verbs: `arp <peer>`, `connect <peer> <port> from <port>`,
//! `send <peer> <port> from <port> [text]`, `udp <peer> <port> from <port> [text]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::frames::MacAddress;
use crate::knock::{SharedKey, DEFAULT_FRESHNESS_SECONDS, DEFAULT_REPLAY_WINDOW_SECONDS};
use crate::nic::{CloakingNic, NicConfig, DEFAULT_FILTER_CAPACITY, DEFAULT_FILTER_TTL_SECONDS};

use super::{
    AttackKind, AttackProgram, HostIntent, Metrics, Node, NodeKind, Schedule, Segment, Station,
    TraceRecord,
};

pub const DEFAULT_HORIZON: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioErrorKind {
    Parse(String),
    UnknownNodeReference(String),
    MissingKey { node: String, peer: String },
    DuplicateNode(String),
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ScenarioError {
    pub line: usize,
    pub kind: ScenarioErrorKind,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: ", self.line)?;
        match &self.kind {
            ScenarioErrorKind::Parse(m) => write!(f, "parse error: {m}"),
            ScenarioErrorKind::UnknownNodeReference(n) => write!(f, "unknown node reference {n:?}"),
            ScenarioErrorKind::MissingKey { node, peer } => {
                write!(
                    f,
                    "missing key: {node:?} protects {peer:?} but they share no key"
                )
            }
            ScenarioErrorKind::DuplicateNode(n) => write!(f, "duplicate node name {n:?}"),
            ScenarioErrorKind::Invalid(m) => write!(f, "invalid: {m}"),
        }
    }
}

fn err(line: usize, kind: ScenarioErrorKind) -> ScenarioError {
    ScenarioError { line, kind }
}

fn parse_err(line: usize, msg: impl Into<String>) -> ScenarioError {
    err(line, ScenarioErrorKind::Parse(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclKind {
    Cloaked,
    Client,
    Plain,
    Attacker,
}

impl DeclKind {
    fn has_nic(self) -> bool {
        matches!(self, DeclKind::Cloaked | DeclKind::Client)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeDecl {
    pub line: usize,
    pub name: String,
    pub kind: DeclKind,
    pub mac: MacAddress,
    pub ip: Ipv4Addr,
    pub services: BTreeSet<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyDecl {
    pub line: usize,
    pub a: String,
    pub b: String,
    pub key: SharedKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtectDecl {
    pub line: usize,
    pub node: String,
    pub peer: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackDecl {
    pub line: usize,
    pub attacker: String,
    pub kind: String,
    pub args: BTreeMap<String, String>,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepVerb {
    Arp,
    Connect,
    Send,
    Udp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepDecl {
    pub line: usize,
    pub time: u64,
    pub node: String,
    pub verb: StepVerb,
    pub peer: String,
    pub dst_port: u16,
    pub src_port: u16,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub horizon: u64,
    pub seed: u64,
    pub freshness_seconds: u64,
    pub filter_ttl_seconds: u64,
    pub replay_window_seconds: u64,
    pub filter_capacity: usize,
    pub nodes: Vec<NodeDecl>,
    pub keys: Vec<KeyDecl>,
    pub protect: Vec<ProtectDecl>,
    pub attacks: Vec<AttackDecl>,
    pub steps: Vec<StepDecl>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            horizon: DEFAULT_HORIZON,
            seed: 0,
            freshness_seconds: DEFAULT_FRESHNESS_SECONDS,
            filter_ttl_seconds: DEFAULT_FILTER_TTL_SECONDS,
            replay_window_seconds: DEFAULT_REPLAY_WINDOW_SECONDS,
            filter_capacity: DEFAULT_FILTER_CAPACITY,
            nodes: Vec::new(),
            keys: Vec::new(),
            protect: Vec::new(),
            attacks: Vec::new(),
            steps: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Settings,
    Nodes,
    Keys,
    Protect,
    Attacks,
    Steps,
}

fn num<T: std::str::FromStr>(line: usize, what: &str, s: &str) -> Result<T, ScenarioError> {
    s.parse()
        .map_err(|_| parse_err(line, format!("{what}: expected a number, got {s:?}")))
}

fn port(line: usize, what: &str, s: &str) -> Result<u16, ScenarioError> {
    let p: u16 = num(line, what, s)?;
    if p == 0 {
        return Err(parse_err(line, format!("{what}: port 0 is not usable")));
    }
    Ok(p)
}

fn key_values<'a>(
    line: usize,
    tokens: impl Iterator<Item = &'a str>,
) -> Result<BTreeMap<String, String>, ScenarioError> {
    let mut out = BTreeMap::new();
    for t in tokens {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected key=value, got {t:?}")))?;
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(parse_err(line, format!("{k} given twice")));
        }
    }
    Ok(out)
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut sc = Scenario::default();
        let mut section = Section::Settings;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = match name.trim() {
                    "nodes" => Section::Nodes,
                    "keys" => Section::Keys,
                    "protect" => Section::Protect,
                    "attacks" => Section::Attacks,
                    "steps" => Section::Steps,
                    other => return Err(parse_err(line, format!("unknown section [{other}]"))),
                };
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            match section {
                Section::Settings => sc.parse_setting(line, &toks)?,
                Section::Nodes => sc.nodes.push(parse_node(line, &toks)?),
                Section::Keys => {
                    let [a, b, hex] = toks[..] else {
                        return Err(parse_err(line, "expected: <node> <node> <key-hex>"));
                    };
                    let key =
                        SharedKey::from_hex(hex).map_err(|e| parse_err(line, e.to_string()))?;
                    sc.keys.push(KeyDecl {
                        line,
                        a: a.into(),
                        b: b.into(),
                        key,
                    });
                }
                Section::Protect => {
                    let [node, peer] = toks[..] else {
                        return Err(parse_err(line, "expected: <node> <peer>"));
                    };
                    sc.protect.push(ProtectDecl {
                        line,
                        node: node.into(),
                        peer: peer.into(),
                    });
                }
                Section::Attacks => sc.attacks.push(parse_attack(line, &toks)?),
                Section::Steps => sc.steps.push(parse_step(line, &toks)?),
            }
        }
        sc.validate()?;
        Ok(sc)
    }

    fn parse_setting(&mut self, line: usize, toks: &[&str]) -> Result<(), ScenarioError> {
        let [name, value] = toks[..] else {
            return Err(parse_err(line, "expected: <setting> <value>"));
        };
        match name {
            "horizon" => self.horizon = num(line, name, value)?,
            "seed" => self.seed = num(line, name, value)?,
            "freshness" => self.freshness_seconds = num(line, name, value)?,
            "filter-ttl" => self.filter_ttl_seconds = num(line, name, value)?,
            "replay-window" => self.replay_window_seconds = num(line, name, value)?,
            "filter-capacity" => self.filter_capacity = num(line, name, value)?,
            other => return Err(parse_err(line, format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    fn decl(&self, name: &str) -> Option<&NodeDecl> {
        self.nodes.iter().find(|n| n.name == name)
    }

    fn need(&self, line: usize, name: &str) -> Result<&NodeDecl, ScenarioError> {
        self.decl(name).ok_or_else(|| {
            err(
                line,
                ScenarioErrorKind::UnknownNodeReference(name.to_string()),
            )
        })
    }

    fn key_between(&self, a: &str, b: &str) -> Option<&SharedKey> {
        self.keys
            .iter()
            .rev()
            .find(|k| (k.a == a && k.b == b) || (k.a == b && k.b == a))
            .map(|k| &k.key)
    }

    fn resolve_ip(&self, line: usize, s: &str) -> Result<Ipv4Addr, ScenarioError> {
        match s.parse() {
            Ok(ip) => Ok(ip),
            Err(_) => Ok(self.need(line, s)?.ip),
        }
    }

    fn resolve_mac(&self, line: usize, s: &str) -> Result<MacAddress, ScenarioError> {
        match s.parse() {
            Ok(mac) => Ok(mac),
            Err(_) => Ok(self.need(line, s)?.mac),
        }
    }

    fn station(&self, line: usize, name: &str) -> Result<Station, ScenarioError> {
        let d = self.need(line, name)?;
        Ok(Station {
            mac: d.mac,
            ip: d.ip,
        })
    }

    /// Referential and coherence checks. `parse` runs this, so a parsed
    /// scenario always builds.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.name.as_str()) {
                return Err(err(
                    n.line,
                    ScenarioErrorKind::DuplicateNode(n.name.clone()),
                ));
            }
            if !n.services.is_empty() && n.kind == DeclKind::Attacker {
                return Err(err(
                    n.line,
                    ScenarioErrorKind::Invalid("attackers offer no services".into()),
                ));
            }
        }
        for k in &self.keys {
            let a = self.need(k.line, &k.a)?;
            let b = self.need(k.line, &k.b)?;
            if a.name == b.name {
                return Err(err(
                    k.line,
                    ScenarioErrorKind::Invalid("a key needs two distinct nodes".into()),
                ));
            }
            if !a.kind.has_nic() && !b.kind.has_nic() {
                return Err(err(
                    k.line,
                    ScenarioErrorKind::Invalid(
                        "at least one side of a key must have a cloaking NIC".into(),
                    ),
                ));
            }
        }
        for p in &self.protect {
            let node = self.need(p.line, &p.node)?;
            self.need(p.line, &p.peer)?;
            if !node.kind.has_nic() {
                return Err(err(
                    p.line,
                    ScenarioErrorKind::Invalid(format!(
                        "{:?} has no cloaking NIC to knock with",
                        p.node
                    )),
                ));
            }
            if self.key_between(&p.node, &p.peer).is_none() {
                return Err(err(
                    p.line,
                    ScenarioErrorKind::MissingKey {
                        node: p.node.clone(),
                        peer: p.peer.clone(),
                    },
                ));
            }
        }
        for a in &self.attacks {
            self.attack_program(a)?;
        }
        for s in &self.steps {
            let node = self.need(s.line, &s.node)?;
            if node.kind == DeclKind::Attacker {
                return Err(err(
                    s.line,
                    ScenarioErrorKind::Invalid(
                        "attackers act through [attacks], not [steps]".into(),
                    ),
                ));
            }
            self.resolve_ip(s.line, &s.peer)?;
        }
        Ok(())
    }

    fn attack_program(&self, a: &AttackDecl) -> Result<AttackProgram, ScenarioError> {
        let line = a.line;
        let me = self.need(line, &a.attacker)?;
        if me.kind != DeclKind::Attacker {
            return Err(err(
                line,
                ScenarioErrorKind::Invalid(format!("{:?} is not an attacker", a.attacker)),
            ));
        }
        let get = |k: &str| -> Result<&str, ScenarioError> {
            a.args
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| parse_err(line, format!("{} needs {k}=", a.kind)))
        };
        let allowed: &[&str] = match a.kind.as_str() {
            "arp-poison" => &["victim", "claimed", "target"],
            "mac-spoof" => &["victim", "target", "port", "sport", "src-ip"],
            "knock-replay" => &[],
            "port-scan" => &["target", "ports", "echo"],
            "forge-knock" => &["target", "sport"],
            other => return Err(parse_err(line, format!("unknown attack kind {other:?}"))),
        };
        if let Some(extra) = a.args.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(parse_err(
                line,
                format!("{} does not take {extra}=", a.kind),
            ));
        }
        let kind = match a.kind.as_str() {
            "arp-poison" => AttackKind::ArpPoison {
                victim_ip: self.resolve_ip(line, get("victim")?)?,
                claimed_mac: self.resolve_mac(line, get("claimed")?)?,
                target: a
                    .args
                    .get("target")
                    .map(|t| self.station(line, t))
                    .transpose()?,
            },
            "mac-spoof" => {
                let victim = get("victim")?;
                let src_ip = match a.args.get("src-ip") {
                    Some(s) => self.resolve_ip(line, s)?,
                    None => self.decl(victim).map_or(me.ip, |d| d.ip),
                };
                AttackKind::MacSpoof {
                    victim_mac: self.resolve_mac(line, victim)?,
                    src_ip,
                    src_port: a
                        .args
                        .get("sport")
                        .map(|s| port(line, "sport", s))
                        .transpose()?
                        .unwrap_or(40000),
                    target: self.station(line, get("target")?)?,
                    dst_port: a
                        .args
                        .get("port")
                        .map(|s| port(line, "port", s))
                        .transpose()?
                        .unwrap_or(22),
                }
            }
            "knock-replay" => AttackKind::KnockReplay,
            "port-scan" => {
                let range = get("ports")?;
                let (lo, hi) = range
                    .split_once('-')
                    .ok_or_else(|| parse_err(line, "ports= expects <lo>-<hi>"))?;
                let (lo, hi) = (port(line, "ports", lo)?, port(line, "ports", hi)?);
                if lo > hi {
                    return Err(parse_err(line, "ports= range is empty"));
                }
                let echo = match a.args.get("echo").map(String::as_str) {
                    None | Some("no") => false,
                    Some("yes") => true,
                    Some(other) => {
                        return Err(parse_err(
                            line,
                            format!("echo= expects yes|no, got {other:?}"),
                        ))
                    }
                };
                AttackKind::PortScan {
                    target: self.station(line, get("target")?)?,
                    ports: (lo, hi),
                    echo,
                }
            }
            "forge-knock" => {
                let target = get("target")?;
                let station = self.station(line, target)?;
                let key = self.key_between(&a.attacker, target).ok_or_else(|| {
                    err(
                        line,
                        ScenarioErrorKind::MissingKey {
                            node: a.attacker.clone(),
                            peer: target.to_string(),
                        },
                    )
                })?;
                AttackKind::ForgeKnock {
                    key: key.clone(),
                    target: station,
                    src_port: port(line, "sport", get("sport")?)?,
                }
            }
            _ => unreachable!("kind checked above"),
        };
        Ok(AttackProgram {
            kind,
            schedule: a.schedule,
        })
    }

    /// Non-fatal findings, such as all-zero keys.
    pub fn warnings(&self) -> Vec<String> {
        self.keys
            .iter()
            .filter(|k| k.key.is_all_zero())
            .map(|k| {
                format!(
                    "line {}: key between {:?} and {:?} is all zeros",
                    k.line, k.a, k.b
                )
            })
            .collect()
    }

    /// Attaches every node and schedules every step and attack. `seed`
    /// overrides the scenario's own nonce seed.
    pub fn build(&self, seed: Option<u64>, hex: bool) -> Result<Segment, ScenarioError> {
        self.validate()?;
        let seed = seed.unwrap_or(self.seed);
        let mut seg = Segment::new().with_hex(hex);
        for (idx, d) in self.nodes.iter().enumerate() {
            let kind = match d.kind {
                DeclKind::Cloaked | DeclKind::Client => {
                    let mut cfg = NicConfig::new(d.mac, d.ip);
                    cfg.freshness_seconds = self.freshness_seconds;
                    cfg.filter_ttl_seconds = self.filter_ttl_seconds;
                    cfg.replay_window_seconds = self.replay_window_seconds;
                    cfg.filter_capacity = self.filter_capacity;
                    cfg.nonce_seed = seed.wrapping_add((idx as u64) << 32);
                    for k in &self.keys {
                        let other = if k.a == d.name {
                            &k.b
                        } else if k.b == d.name {
                            &k.a
                        } else {
                            continue;
                        };
                        let peer = self.need(k.line, other)?;
                        cfg.role_keys.insert(peer.ip, k.key.clone());
                    }
                    for p in self.protect.iter().filter(|p| p.node == d.name) {
                        cfg.protected_peers.insert(self.need(p.line, &p.peer)?.ip);
                    }
                    let nic = CloakingNic::new(cfg)
                        .map_err(|e| err(d.line, ScenarioErrorKind::Invalid(e.to_string())))?;
                    let services = d.services.clone();
                    if d.kind == DeclKind::Cloaked {
                        NodeKind::CloakedServer { nic, services }
                    } else {
                        NodeKind::Client { nic, services }
                    }
                }
                DeclKind::Plain => NodeKind::PlainHost {
                    services: d.services.clone(),
                },
                DeclKind::Attacker => NodeKind::Attacker {
                    captured: Vec::new(),
                    programs: Vec::new(),
                },
            };
            seg.attach(Node::new(d.name.clone(), d.mac, d.ip, kind))
                .map_err(|_| err(d.line, ScenarioErrorKind::DuplicateNode(d.name.clone())))?;
        }

        // steps and attacks are interleaved by time, then by file order
        let mut scheduled: Vec<(u64, usize, Scheduled)> = Vec::new();
        for s in &self.steps {
            let peer = self.resolve_ip(s.line, &s.peer)?;
            let intent = match s.verb {
                StepVerb::Arp => HostIntent::Arp { peer },
                StepVerb::Connect => HostIntent::Connect {
                    peer,
                    dst_port: s.dst_port,
                    src_port: s.src_port,
                },
                StepVerb::Send => HostIntent::Send {
                    peer,
                    dst_port: s.dst_port,
                    src_port: s.src_port,
                    data: s.data.clone(),
                },
                StepVerb::Udp => HostIntent::Udp {
                    peer,
                    dst_port: s.dst_port,
                    src_port: s.src_port,
                    data: s.data.clone(),
                },
            };
            scheduled.push((s.time, s.line, Scheduled::Step(s.node.clone(), intent)));
        }
        for a in &self.attacks {
            let program = self.attack_program(a)?;
            scheduled.push((
                a.schedule.start,
                a.line,
                Scheduled::Attack(a.attacker.clone(), program),
            ));
        }
        scheduled.sort_by_key(|(t, line, _)| (*t, *line));
        for (time, line, item) in scheduled {
            let res = match item {
                Scheduled::Step(node, intent) => {
                    let h = seg
                        .handle(&node)
                        .ok_or_else(|| err(line, ScenarioErrorKind::UnknownNodeReference(node)))?;
                    seg.schedule_host(h, time, intent)
                }
                Scheduled::Attack(node, program) => {
                    let h = seg
                        .handle(&node)
                        .ok_or_else(|| err(line, ScenarioErrorKind::UnknownNodeReference(node)))?;
                    seg.schedule_attack(h, program)
                }
            };
            res.map_err(|e| err(line, ScenarioErrorKind::Invalid(e.to_string())))?;
        }
        Ok(seg)
    }
}

enum Scheduled {
    Step(String, HostIntent),
    Attack(String, AttackProgram),
}

fn parse_node(line: usize, toks: &[&str]) -> Result<NodeDecl, ScenarioError> {
    let [name, kind, rest @ ..] = toks else {
        return Err(parse_err(
            line,
            "expected: <name> <kind> mac=<mac> ip=<ip> [services=<ports>]",
        ));
    };
    let kind = match *kind {
        "cloaked" => DeclKind::Cloaked,
        "client" => DeclKind::Client,
        "plain" => DeclKind::Plain,
        "attacker" => DeclKind::Attacker,
        other => return Err(parse_err(line, format!("unknown node kind {other:?}"))),
    };
    let kv = key_values(line, rest.iter().copied())?;
    if let Some(extra) = kv
        .keys()
        .find(|k| !["mac", "ip", "services"].contains(&k.as_str()))
    {
        return Err(parse_err(line, format!("nodes do not take {extra}=")));
    }
    let mac = kv
        .get("mac")
        .ok_or_else(|| parse_err(line, "node needs mac="))?
        .parse()
        .map_err(|e: crate::frames::MacParseError| parse_err(line, e.to_string()))?;
    let ip = kv
        .get("ip")
        .ok_or_else(|| parse_err(line, "node needs ip="))?
        .parse()
        .map_err(|_| parse_err(line, "ip= is not an IPv4 address"))?;
    let services = match kv.get("services") {
        None => BTreeSet::new(),
        Some(list) => list
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|p| port(line, "services", p))
            .collect::<Result<_, _>>()?,
    };
    Ok(NodeDecl {
        line,
        name: name.to_string(),
        kind,
        mac,
        ip,
        services,
    })
}

fn parse_attack(line: usize, toks: &[&str]) -> Result<AttackDecl, ScenarioError> {
    let [attacker, kind, rest @ ..] = toks else {
        return Err(parse_err(
            line,
            "expected: <attacker> <kind> key=value... start=<t>",
        ));
    };
    let mut args = key_values(line, rest.iter().copied())?;
    let start = args
        .remove("start")
        .ok_or_else(|| parse_err(line, "attack needs start="))?;
    let count = args.remove("count");
    let period = args.remove("period");
    let schedule = Schedule {
        start: num(line, "start", &start)?,
        count: count
            .map(|c| num(line, "count", &c))
            .transpose()?
            .unwrap_or(1),
        period: period
            .map(|p| num(line, "period", &p))
            .transpose()?
            .unwrap_or(1),
    };
    if schedule.count == 0 {
        return Err(parse_err(line, "count= must be at least 1"));
    }
    if schedule.period == 0 {
        return Err(parse_err(line, "period= must be at least 1"));
    }
    Ok(AttackDecl {
        line,
        attacker: attacker.to_string(),
        kind: kind.to_string(),
        args,
        schedule,
    })
}

fn parse_step(line: usize, toks: &[&str]) -> Result<StepDecl, ScenarioError> {
    let [time, node, verb, peer, rest @ ..] = toks else {
        return Err(parse_err(line, "expected: <time> <node> <verb> <peer> ..."));
    };
    let time = num(line, "time", time)?;
    let verb = match *verb {
        "arp" => StepVerb::Arp,
        "connect" => StepVerb::Connect,
        "send" => StepVerb::Send,
        "udp" => StepVerb::Udp,
        other => return Err(parse_err(line, format!("unknown step verb {other:?}"))),
    };
    let (dst_port, src_port, data) = match (&verb, rest) {
        (StepVerb::Arp, []) => (0, 0, Vec::new()),
        (StepVerb::Arp, _) => return Err(parse_err(line, "arp takes only a peer")),
        (StepVerb::Connect, [dp, "from", sp]) => {
            (port(line, "port", dp)?, port(line, "from", sp)?, Vec::new())
        }
        (StepVerb::Send | StepVerb::Udp, [dp, "from", sp, text @ ..]) => (
            port(line, "port", dp)?,
            port(line, "from", sp)?,
            text.join(" ").into_bytes(),
        ),
        _ => {
            return Err(parse_err(
                line,
                "expected: <peer> <port> from <port> [text]",
            ))
        }
    };
    Ok(StepDecl {
        line,
        time,
        node: node.to_string(),
        verb,
        peer: peer.to_string(),
        dst_port,
        src_port,
        data,
    })
}

/// Builds and runs a scenario to its horizon.
pub fn run_scenario(
    scenario: &Scenario,
    seed: Option<u64>,
    hex: bool,
) -> Result<(Vec<TraceRecord>, Metrics), ScenarioError> {
    let mut seg = scenario.build(seed, hex)?;
    let trace = seg.run(scenario.horizon);
    Ok((trace, seg.metrics()))
}
