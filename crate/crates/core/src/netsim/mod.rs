//! Deterministic discrete-event model of a shared Ethernet segment.
//!
//! The segment is a hub: every frame is offered to every attached node
//! except the one that sent it. Time is integer seconds and each hop costs
//! one unit. Events at the same instant run in the order they were
//! scheduled, so a scenario always produces the same trace.

mod attack;
mod node;
pub mod scenario;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

pub use attack::{AttackKind, AttackProgram, Schedule, Station, SCAN_SOURCE_PORT};
pub use node::{baseline_stages, HostIntent, Node, NodeKind, NodeMetrics};
pub use scenario::{run_scenario, Scenario, ScenarioError, ScenarioErrorKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("a node named {0:?} is already attached")]
    DuplicateHandle(String),
    #[error("no node with handle {0}")]
    UnknownHandle(usize),
    #[error("node {0:?} is not an attacker")]
    NotAnAttacker(String),
    #[error("attacker {0:?} has not captured any knock to replay")]
    NothingCaptured(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeHandle(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Rx,
    Tx,
    Drop,
    HostEvent,
    /// Still in flight when the horizon was reached.
    Expired,
    Note,
}

/// One line of the trace. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub time: u64,
    pub node: String,
    #[serde(rename = "dir")]
    pub direction: Direction,
    pub summary: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    pub stage: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hex: Option<String>,
}

impl TraceRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace records serialize")
    }

    /// True for records that settle the fate of one offered frame.
    pub fn is_terminal(&self) -> bool {
        matches!(
            self.direction,
            Direction::Rx | Direction::Drop | Direction::Expired
        )
    }
}

/// JSON lines, one record per line, newline-terminated.
pub fn trace_to_jsonl(records: &[TraceRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_json());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Metrics {
    pub final_clock: u64,
    pub nodes: BTreeMap<String, NodeMetrics>,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
enum Event {
    Wire {
        bytes: Vec<u8>,
        origin: usize,
    },
    Host {
        node: usize,
        intent: HostIntent,
    },
    AttackStart {
        node: usize,
        program: AttackProgram,
    },
    AttackFire {
        node: usize,
        kind: AttackKind,
        iteration: u32,
    },
}

#[derive(Debug, Clone, Default)]
pub struct Segment {
    nodes: Vec<Node>,
    clock: u64,
    pending: BTreeMap<(u64, u64), Event>,
    next_seq: u64,
    ticked: bool,
    hex: bool,
}

impl Segment {
    pub fn new() -> Self {
        Segment::default()
    }

    /// Include raw frame hex in trace records.
    pub fn with_hex(mut self, hex: bool) -> Self {
        self.hex = hex;
        self
    }

    /// Names must be unique; MAC and IP addresses need not be.
    pub fn attach(&mut self, node: Node) -> Result<NodeHandle, SimError> {
        if self.nodes.iter().any(|n| n.name == node.name) {
            return Err(SimError::DuplicateHandle(node.name));
        }
        self.nodes.push(node);
        Ok(NodeHandle(self.nodes.len() - 1))
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, h: NodeHandle) -> Option<&Node> {
        self.nodes.get(h.0)
    }

    pub fn node_mut(&mut self, h: NodeHandle) -> Option<&mut Node> {
        self.nodes.get_mut(h.0)
    }

    pub fn handle(&self, name: &str) -> Option<NodeHandle> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .map(NodeHandle)
    }

    pub fn pending_events(&self) -> usize {
        self.pending.len()
    }

    fn schedule(&mut self, at: u64, ev: Event) {
        let at = at.max(self.clock);
        self.pending.insert((at, self.next_seq), ev);
        self.next_seq += 1;
    }

    fn check(&self, h: NodeHandle) -> Result<(), SimError> {
        if h.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(SimError::UnknownHandle(h.0))
        }
    }

    /// Puts raw bytes on the wire from `origin`, delivered at `at`.
    pub fn inject_frame(
        &mut self,
        origin: NodeHandle,
        bytes: Vec<u8>,
        at: u64,
    ) -> Result<(), SimError> {
        self.check(origin)?;
        self.schedule(
            at,
            Event::Wire {
                bytes,
                origin: origin.0,
            },
        );
        Ok(())
    }

    pub fn schedule_host(
        &mut self,
        node: NodeHandle,
        at: u64,
        intent: HostIntent,
    ) -> Result<(), SimError> {
        self.check(node)?;
        self.schedule(
            at,
            Event::Host {
                node: node.0,
                intent,
            },
        );
        Ok(())
    }

    /// Schedules every firing of `program` from `attacker`; returns how many
    /// were scheduled. A knock replay needs a knock already captured.
    pub fn inject_attack(
        &mut self,
        attacker: NodeHandle,
        program: AttackProgram,
    ) -> Result<usize, SimError> {
        self.check(attacker)?;
        let node = &self.nodes[attacker.0];
        if !matches!(node.kind, NodeKind::Attacker { .. }) {
            return Err(SimError::NotAnAttacker(node.name.clone()));
        }
        if program.kind == AttackKind::KnockReplay && node.captured().is_empty() {
            return Err(SimError::NothingCaptured(node.name.clone()));
        }
        let firings: Vec<u64> = program.schedule.firings().collect();
        for (i, at) in firings.iter().enumerate() {
            self.schedule(
                *at,
                Event::AttackFire {
                    node: attacker.0,
                    kind: program.kind.clone(),
                    iteration: i as u32,
                },
            );
        }
        if let NodeKind::Attacker { programs, .. } = &mut self.nodes[attacker.0].kind {
            programs.push(program);
        }
        Ok(firings.len())
    }

    /// Defers [`Segment::inject_attack`] until `program.schedule.start`, so
    /// that a replay can use whatever has been captured by then.
    pub fn schedule_attack(
        &mut self,
        attacker: NodeHandle,
        program: AttackProgram,
    ) -> Result<(), SimError> {
        self.check(attacker)?;
        let at = program.schedule.start;
        self.schedule(
            at,
            Event::AttackStart {
                node: attacker.0,
                program,
            },
        );
        Ok(())
    }

    /// Runs the earliest pending event. Returns the records it produced;
    /// an idle segment yields none.
    pub fn step(&mut self) -> Vec<TraceRecord> {
        let Some((&key, _)) = self.pending.first_key_value() else {
            return Vec::new();
        };
        let ev = self.pending.remove(&key).expect("key just seen");
        let now = key.0;
        if now > self.clock || !self.ticked {
            self.clock = now;
            self.ticked = true;
            for n in &mut self.nodes {
                n.tick(now);
            }
        }
        let hex = self.hex;
        let mut records = Vec::new();
        match ev {
            Event::Wire { bytes, origin } => {
                for i in 0..self.nodes.len() {
                    if i == origin {
                        continue;
                    }
                    let out = self.nodes[i].receive(&bytes, now, hex);
                    records.extend(out.records);
                    for tx in out.tx {
                        self.schedule(
                            now + 1,
                            Event::Wire {
                                bytes: tx,
                                origin: i,
                            },
                        );
                    }
                }
            }
            Event::Host { node, intent } => {
                let out = self.nodes[node].host_send(intent, now, hex);
                records.extend(out.records);
                for tx in out.tx {
                    self.schedule(
                        now + 1,
                        Event::Wire {
                            bytes: tx,
                            origin: node,
                        },
                    );
                }
            }
            Event::AttackStart { node, program } => {
                let label = program.kind.label();
                let program = AttackProgram {
                    schedule: Schedule {
                        start: now,
                        ..program.schedule
                    },
                    ..program
                };
                if let Err(e) = self.inject_attack(NodeHandle(node), program) {
                    records.push(TraceRecord {
                        time: now,
                        node: self.nodes[node].name.clone(),
                        direction: Direction::Note,
                        summary: format!("{label} not started: {e}"),
                        verdict: None,
                        stage: 0,
                        detail: None,
                        hex: None,
                    });
                }
            }
            Event::AttackFire {
                node,
                kind,
                iteration,
            } => {
                let n = &self.nodes[node];
                let me = Station {
                    mac: n.mac,
                    ip: n.ip,
                };
                let frames = attack::frames_for(&kind, me, n.captured(), iteration, now);
                let out = self.nodes[node].emit_raw(now, frames, hex);
                records.extend(out.records);
                for tx in out.tx {
                    self.schedule(
                        now + 1,
                        Event::Wire {
                            bytes: tx,
                            origin: node,
                        },
                    );
                }
            }
        }
        records
    }

    /// Steps until nothing is pending or the next event lies beyond
    /// `horizon`. Frames still in flight then get one `expired` record per
    /// node that would have received them.
    pub fn run(&mut self, horizon: u64) -> Vec<TraceRecord> {
        let mut trace = Vec::new();
        while let Some((&(at, _), _)) = self.pending.first_key_value() {
            if at > horizon {
                break;
            }
            trace.extend(self.step());
        }
        for ((at, _), ev) in std::mem::take(&mut self.pending) {
            match ev {
                Event::Wire { bytes, origin } => {
                    let summary = match crate::frames::parse_frame(&bytes) {
                        Ok(f) => f.summary(),
                        Err(e) => format!("unparsed {} bytes ({e})", bytes.len()),
                    };
                    for (i, n) in self.nodes.iter_mut().enumerate() {
                        if i == origin {
                            continue;
                        }
                        n.metrics.expired_at_horizon += 1;
                        trace.push(TraceRecord {
                            time: at,
                            node: n.name.clone(),
                            direction: Direction::Expired,
                            summary: summary.clone(),
                            verdict: Some("horizon".into()),
                            stage: 0,
                            detail: None,
                            hex: None,
                        });
                    }
                }
                Event::Host { node, .. }
                | Event::AttackStart { node, .. }
                | Event::AttackFire { node, .. } => {
                    trace.push(TraceRecord {
                        time: at,
                        node: self.nodes[node].name.clone(),
                        direction: Direction::Note,
                        summary: "scheduled action beyond horizon".into(),
                        verdict: None,
                        stage: 0,
                        detail: None,
                        hex: None,
                    });
                }
            }
        }
        trace
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            final_clock: self.clock,
            nodes: self
                .nodes
                .iter()
                .map(|n| (n.name.clone(), n.metrics.clone()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests;
