//! Built-in scenarios with a short reading of each outcome.

use thiserror::Error;

use crate::netsim::{
    run_scenario, Direction, Metrics, NodeMetrics, Scenario, ScenarioError, TraceRecord,
};

pub const NAMES: [&str; 5] = [
    "happy-path",
    "port-scan",
    "arp-poison",
    "replay",
    "baseline-comparison",
];

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("unknown demo {name:?}; valid names: {}", NAMES.join(", "))]
    UnknownDemo { name: String },
    #[error("built-in scenario is invalid: {0}")]
    Scenario(#[from] ScenarioError),
}

pub fn source(name: &str) -> Option<&'static str> {
    Some(match name {
        "happy-path" => include_str!("../scenarios/happy-path.scn"),
        "port-scan" => include_str!("../scenarios/port-scan.scn"),
        "arp-poison" => include_str!("../scenarios/arp-poison.scn"),
        "replay" => include_str!("../scenarios/replay.scn"),
        "baseline-comparison" => include_str!("../scenarios/baseline-comparison.scn"),
        _ => return None,
    })
}

pub fn scenario(name: &str) -> Result<Scenario, DemoError> {
    let text = source(name).ok_or_else(|| DemoError::UnknownDemo {
        name: name.to_string(),
    })?;
    Ok(Scenario::parse(text)?)
}

#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub trace: Vec<TraceRecord>,
    pub metrics: Metrics,
    pub summary: String,
}

pub fn run_demo(name: &str, seed: Option<u64>, hex: bool) -> Result<DemoOutcome, DemoError> {
    let sc = scenario(name)?;
    let (trace, metrics) = run_scenario(&sc, seed, hex)?;
    let summary = interpret(name, &trace, &metrics);
    Ok(DemoOutcome {
        trace,
        metrics,
        summary,
    })
}

fn node(m: &Metrics, name: &str) -> NodeMetrics {
    m.nodes.get(name).cloned().unwrap_or_default()
}

fn drops(n: &NodeMetrics, reason: &str) -> u64 {
    n.dropped_by_reason.get(reason).copied().unwrap_or(0)
}

fn non_arp_tx(trace: &[TraceRecord], name: &str) -> usize {
    trace
        .iter()
        .filter(|r| r.node == name && r.direction == Direction::Tx && !r.summary.starts_with("arp"))
        .count()
}

/// Mean stage count over rejected frames that were addressed to `name`,
/// or 0 if none.
fn mean_reject_stage(trace: &[TraceRecord], name: &str) -> f64 {
    let (sum, n) = trace
        .iter()
        .filter(|r| {
            r.node == name
                && r.direction == Direction::Drop
                && r.verdict.as_deref() != Some("not_for_us")
        })
        .fold((0u64, 0u64), |(s, n), r| (s + u64::from(r.stage), n + 1));
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

/// One paragraph describing what the run shows. Unknown names get a
/// generic per-node tally.
pub fn interpret(name: &str, trace: &[TraceRecord], m: &Metrics) -> String {
    let server = node(m, "server");
    match name {
        "happy-path" => format!(
            "alice knocked before her first SYN. The server accepted {} knock(s), wrote {} ARP cache \
             entry from it, delivered {} frame(s) to its host and dropped {}. Its host answered with \
             {} non-ARP frame(s), so the service became reachable only after authentication.",
            server.knocks_accepted,
            server.arp_cache_writes,
            server.delivered,
            server.dropped,
            non_arp_tx(trace, "server"),
        ),
        "port-scan" => format!(
            "mallory probed the cloaked server with {} frames. The server sent {} frame(s) back and \
             dropped {} for lack of a filter entry, each after {:.1} processing stages on average. \
             To the scanner the host looks absent.",
            node(m, "mallory").tx,
            server.tx,
            drops(&server, "no_filter_match"),
            mean_reject_stage(trace, "server"),
        ),
        "arp-poison" => {
            let legacy = node(m, "legacy");
            format!(
                "mallory broadcast {} forged ARP replies claiming alice's address. The cloaked server \
                 made {} ARP cache write(s) and dropped {} as unsolicited; the plain host rewrote its \
                 cache {} time(s). Only the unprotected host was poisoned.",
                node(m, "mallory").tx,
                server.arp_cache_writes,
                drops(&server, "unsolicited_arp_reply"),
                legacy.arp_cache_writes,
            )
        }
        "replay" => format!(
            "The server accepted alice's knock {} time(s). mallory replayed the captured bytes; the \
             server dropped {} copy as replayed and {} as stale, and no replay added or refreshed a \
             filter entry.",
            server.knocks_accepted,
            drops(&server, "bad_knock:replayed"),
            drops(&server, "bad_knock:stale"),
        ),
        "baseline-comparison" => {
            let legacy = node(m, "legacy");
            format!(
                "The same scan and poison program hit both hosts. The cloaked server sent {} frame(s) \
                 and rejected probes after {:.1} stages on average, with {} ARP cache write(s). The \
                 plain host sent {} frame(s), rejected after {:.1} stages on average, and wrote its \
                 ARP cache {} time(s).",
                server.tx,
                mean_reject_stage(trace, "server"),
                server.arp_cache_writes,
                legacy.tx,
                mean_reject_stage(trace, "legacy"),
                legacy.arp_cache_writes,
            )
        }
        _ => m
            .nodes
            .iter()
            .map(|(n, x)| format!("{n}: {} delivered, {} dropped, {} sent.", x.delivered, x.dropped, x.tx))
            .collect::<Vec<_>>()
            .join(" "),
    }
}
