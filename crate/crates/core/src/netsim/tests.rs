use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use super::*;
use crate::frames::{make_arp, parse_frame, serialize_frame, ArpOperation, MacAddress};

const KEY: &str = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f";

fn mac(last: u8) -> MacAddress {
    MacAddress([2, 0, 0, 0, 0, last])
}

fn plain(name: &str, last: u8) -> Node {
    Node::new(
        name,
        mac(last),
        Ipv4Addr::new(10, 0, 0, last),
        NodeKind::PlainHost {
            services: BTreeSet::new(),
        },
    )
}

fn world(extra: &str) -> String {
    format!(
        "horizon 200
[nodes]
server cloaked mac=02:00:00:00:00:09 ip=10.0.0.9 services=22
alice client mac=02:00:00:00:00:05 ip=10.0.0.5
gw plain mac=02:00:00:00:00:01 ip=10.0.0.1
mallory attacker mac=02:00:00:00:00:66 ip=10.0.0.66
[keys]
alice server {KEY}
[protect]
alice server
{extra}"
    )
}

fn run(text: &str) -> (Vec<TraceRecord>, Metrics) {
    run_scenario(&Scenario::parse(text).unwrap(), None, false).unwrap()
}

#[test]
fn broadcast_reaches_everyone_but_origin() {
    let mut seg = Segment::new();
    let a = seg.attach(plain("a", 1)).unwrap();
    seg.attach(plain("b", 2)).unwrap();
    seg.attach(plain("c", 3)).unwrap();
    let req = make_arp(
        ArpOperation::Request,
        mac(1),
        Ipv4Addr::new(10, 0, 0, 1),
        MacAddress::ZERO,
        Ipv4Addr::new(10, 0, 0, 99),
    );
    seg.inject_frame(a, serialize_frame(&req).unwrap(), 0)
        .unwrap();
    let trace = seg.step();
    let nodes: Vec<&str> = trace.iter().map(|r| r.node.as_str()).collect();
    assert_eq!(nodes, ["b", "c"]);
    assert!(trace
        .iter()
        .all(|r| r.time == 0 && r.direction == Direction::Drop));
}

#[test]
fn duplicate_names_rejected_duplicate_macs_accepted() {
    let mut seg = Segment::new();
    seg.attach(plain("a", 1)).unwrap();
    assert_eq!(
        seg.attach(plain("a", 2)),
        Err(SimError::DuplicateHandle("a".into()))
    );
    assert!(seg.attach(plain("twin", 1)).is_ok());
}

#[test]
fn unknown_handle_rejected() {
    let mut seg = Segment::new();
    assert_eq!(
        seg.inject_frame(NodeHandle(3), vec![], 0),
        Err(SimError::UnknownHandle(3))
    );
}

#[test]
fn empty_segment_steps_to_nothing() {
    let mut seg = Segment::new();
    seg.attach(plain("a", 1)).unwrap();
    assert!(seg.step().is_empty());
    assert!(seg.run(100).is_empty());
    assert_eq!(seg.clock(), 0);
}

#[test]
fn arp_request_gets_one_reply_one_hop_later() {
    let mut seg = Segment::new();
    let a = seg.attach(plain("a", 1)).unwrap();
    seg.attach(plain("b", 2)).unwrap();
    seg.schedule_host(
        a,
        5,
        HostIntent::Arp {
            peer: Ipv4Addr::new(10, 0, 0, 2),
        },
    )
    .unwrap();
    let trace = seg.run(100);
    let replies: Vec<_> = trace
        .iter()
        .filter(|r| r.direction == Direction::Tx && r.summary.contains("is-at"))
        .collect();
    assert_eq!(replies.len(), 1);
    assert_eq!(replies[0].node, "b");
    assert_eq!(replies[0].time, 6);
    assert_eq!(
        seg.node(a)
            .unwrap()
            .arp_cache
            .get(&Ipv4Addr::new(10, 0, 0, 2)),
        Some(&mac(2))
    );
    assert_eq!(seg.clock(), 7);
}

#[test]
fn frames_past_horizon_expire() {
    let mut seg = Segment::new();
    let a = seg.attach(plain("a", 1)).unwrap();
    seg.attach(plain("b", 2)).unwrap();
    seg.schedule_host(
        a,
        5,
        HostIntent::Arp {
            peer: Ipv4Addr::new(10, 0, 0, 2),
        },
    )
    .unwrap();
    let trace = seg.run(5);
    let expired: Vec<_> = trace
        .iter()
        .filter(|r| r.direction == Direction::Expired)
        .collect();
    assert_eq!(expired.len(), 1);
    assert_eq!(expired[0].node, "b");
    assert_eq!(seg.metrics().nodes["b"].expired_at_horizon, 1);
}

#[test]
fn same_scenario_same_trace() {
    let text = world("[attacks]\nmallory port-scan target=server ports=1-64 echo=yes start=3\n[steps]\n1 alice connect server 22 from 40000\n");
    let (t1, m1) = run(&text);
    let (t2, m2) = run(&text);
    assert_eq!(trace_to_jsonl(&t1), trace_to_jsonl(&t2));
    assert_eq!(m1.to_json(), m2.to_json());
}

#[test]
fn every_offered_frame_has_exactly_one_fate() {
    let text = world(
        "[attacks]
mallory port-scan target=server ports=1-100 start=2
mallory arp-poison victim=10.0.0.1 claimed=mallory start=4 count=3
mallory knock-replay start=30
[steps]
1 alice connect server 22 from 40000
40 gw arp server
",
    );
    let (trace, metrics) = run(&text);
    let txs = trace
        .iter()
        .filter(|r| r.direction == Direction::Tx)
        .count() as u64;
    let terminal = trace.iter().filter(|r| r.is_terminal()).count() as u64;
    // hub fan-out: every transmitted frame is offered to the other three nodes
    assert_eq!(terminal, txs * 3);
    let processed: u64 = metrics
        .nodes
        .values()
        .map(|n| n.frames_processed + n.expired_at_horizon)
        .sum();
    assert_eq!(processed, terminal);
}

#[test]
fn happy_path_knock_then_syn_ack() {
    let (trace, metrics) = run(&world("[steps]\n1 alice connect server 22 from 40000\n"));
    let server = &metrics.nodes["server"];
    assert_eq!(server.knocks_accepted, 1);
    assert!(trace
        .iter()
        .any(|r| r.node == "server" && r.verdict.as_deref() == Some("knock_accepted")));
    assert!(trace
        .iter()
        .any(|r| r.node == "server" && r.direction == Direction::Tx && r.summary.contains("SA")));
    assert!(trace.iter().any(|r| r.node == "alice"
        && r.direction == Direction::HostEvent
        && r.summary.contains("SA")));
}

#[test]
fn arp_poison_lands_on_plain_host_only() {
    let (trace, metrics) = run(&world(
        "[attacks]\nmallory arp-poison victim=10.0.0.9 claimed=mallory start=1\nmallory arp-poison victim=10.0.0.1 claimed=mallory start=2\n",
    ));
    assert_eq!(metrics.nodes["gw"].arp_cache_writes, 2);
    assert_eq!(metrics.nodes["server"].arp_cache_writes, 0);
    assert_eq!(metrics.nodes["alice"].arp_cache_writes, 0);
    assert!(trace
        .iter()
        .any(|r| r.node == "server" && r.verdict.as_deref() == Some("unsolicited_arp_reply")));
}

#[test]
fn replayed_knock_rejected() {
    let (trace, metrics) = run(&world(
        "[attacks]\nmallory knock-replay start=10\n[steps]\n1 alice connect server 22 from 40000\n",
    ));
    assert_eq!(metrics.nodes["server"].knocks_accepted, 1);
    assert_eq!(
        metrics.nodes["server"]
            .dropped_by_reason
            .get("bad_knock:replayed"),
        Some(&1)
    );
    assert!(!trace.iter().any(|r| r.direction == Direction::Note));
}

#[test]
fn replay_with_nothing_captured_is_noted() {
    let (trace, _) = run(&world("[attacks]\nmallory knock-replay start=1\n"));
    assert!(trace
        .iter()
        .any(|r| r.direction == Direction::Note && r.summary.contains("not started")));
}

#[test]
fn direct_replay_needs_capture() {
    let mut seg = Scenario::parse(&world(""))
        .unwrap()
        .build(None, false)
        .unwrap();
    let m = seg.handle("mallory").unwrap();
    let program = AttackProgram {
        kind: AttackKind::KnockReplay,
        schedule: Schedule::once(1),
    };
    assert_eq!(
        seg.inject_attack(m, program.clone()),
        Err(SimError::NothingCaptured("mallory".into()))
    );
    let gw = seg.handle("gw").unwrap();
    assert_eq!(
        seg.inject_attack(gw, program),
        Err(SimError::NotAnAttacker("gw".into()))
    );
}

#[test]
fn scan_of_cloaked_server_sees_nothing() {
    let (trace, metrics) = run(&world(
        "[attacks]\nmallory port-scan target=server ports=1-1024 echo=yes start=1\n",
    ));
    assert!(!trace
        .iter()
        .any(|r| r.node == "server" && r.direction == Direction::Tx));
    assert_eq!(
        metrics.nodes["server"]
            .dropped_by_reason
            .get("no_filter_match"),
        Some(&1025)
    );
    assert_eq!(metrics.nodes["mallory"].frames_processed, 0);
}

#[test]
fn trace_json_shape() {
    let (trace, _) = run(&world("[steps]\n1 gw arp server\n"));
    let line = trace[0].to_json();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    for key in ["time", "node", "dir", "summary", "stage"] {
        assert!(v.get(key).is_some(), "{key} missing from {line}");
    }
    assert!(parse_frame(&[]).is_err());
}
