use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const KEY: &str = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f";
const GOLDEN: &str = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f 0000000000000000 10.0.0.5 40000 1000 4b4e434b010000000000000000002ae1f41280f0748090ad23413bc204edbaf376e2091d79e91f68bc87849291ff";
const DEMOS: [&str; 5] = [
    "happy-path",
    "port-scan",
    "arp-poison",
    "replay",
    "baseline-comparison",
];

fn cloaknic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cloaknic"))
        .args(args)
        .output()
        .unwrap()
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(format!("{name}.scn"))
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn metrics(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn field(m: &serde_json::Value, node: &str, key: &str) -> u64 {
    let n = &m["nodes"][node];
    n.get(key)
        .or_else(|| n["dropped_by_reason"].get(key))
        .and_then(|v| v.as_u64())
        .unwrap()
}

#[test]
fn check_accepts_every_demo() {
    for d in DEMOS {
        let o = cloaknic(&["check", "--scenario", scenario(d).to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{d}: {}", text(&o.stderr));
        assert_eq!(text(&o.stdout), "ok\n");
    }
}

#[test]
fn check_reports_unknown_node_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.scn");
    fs::write(
        &p,
        "[nodes]\nserver cloaked mac=02:00:00:00:00:09 ip=10.0.0.9\n[attacks]\nmallory port-scan target=server ports=1-2 start=1\n",
    )
    .unwrap();
    let o = cloaknic(&["check", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = text(&o.stderr);
    assert!(
        err.contains("line 4") && err.contains("unknown node reference \"mallory\""),
        "{err}"
    );
    assert!(o.stdout.is_empty());
}

#[test]
fn check_reports_missing_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("nokey.scn");
    fs::write(
        &p,
        "[nodes]\ns cloaked mac=02:00:00:00:00:09 ip=10.0.0.9\nc client mac=02:00:00:00:00:05 ip=10.0.0.5\n[protect]\nc s\n",
    )
    .unwrap();
    let o = cloaknic(&["check", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(
        text(&o.stderr).contains("missing key"),
        "{}",
        text(&o.stderr)
    );
}

#[test]
fn check_warns_on_zero_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("zero.scn");
    let src = fs::read_to_string(scenario("happy-path"))
        .unwrap()
        .replace(KEY, &"0".repeat(64));
    fs::write(&p, src).unwrap();
    let o = cloaknic(&["check", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(text(&o.stderr).contains("all zeros"));
    let q = cloaknic(&["check", "--quiet", "--scenario", p.to_str().unwrap()]);
    assert!(q.stderr.is_empty());
}

#[test]
fn run_happy_path_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let (t, m) = (dir.path().join("t.jsonl"), dir.path().join("m.json"));
    let o = cloaknic(&[
        "run",
        "--scenario",
        scenario("happy-path").to_str().unwrap(),
        "--trace",
        t.to_str().unwrap(),
        "--metrics",
        m.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    assert!(o.stdout.is_empty(), "data went to stdout alongside files");
    let mv = metrics(&m);
    assert_eq!(field(&mv, "server", "delivered"), 1);
    assert_eq!(field(&mv, "server", "dropped"), 0);
    assert_eq!(field(&mv, "server", "arp_cache_writes"), 1);
    let trace = fs::read_to_string(&t).unwrap();
    assert!(trace
        .lines()
        .all(|l| l.starts_with("{\"time\":") && l.ends_with('}')));
    assert!(trace.contains("\"verdict\":\"knock_accepted\""));
}

#[test]
fn run_port_scan_server_silent() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    let o = cloaknic(&[
        "run",
        "--quiet",
        "--scenario",
        scenario("port-scan").to_str().unwrap(),
        "--metrics",
        m.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(o.stderr.is_empty());
    let mv = metrics(&m);
    assert_eq!(field(&mv, "server", "tx"), 0);
    assert_eq!(field(&mv, "server", "no_filter_match"), 1025);
    // trace went to stdout since no --trace was given
    assert_eq!(
        text(&o.stdout)
            .lines()
            .filter(|l| l.contains("\"node\":\"mallory\""))
            .count(),
        1025
    );
}

#[test]
fn rerun_is_byte_identical_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("replay");
    let run = |file: &str, seed: &str| {
        let p = dir.path().join(file);
        let o = cloaknic(&[
            "run",
            "--quiet",
            "--hex",
            "--seed",
            seed,
            "--scenario",
            sc.to_str().unwrap(),
            "--trace",
            p.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        fs::read(p).unwrap()
    };
    let a = run("a.jsonl", "9");
    let b = run("b.jsonl", "9");
    let c = run("c.jsonl", "10");
    assert_eq!(a, b);
    assert_ne!(a, c, "nonce seed should change the knock bytes");
}

#[test]
fn vectors_match_golden() {
    let o = cloaknic(&["vectors", "--key", KEY, "--count", "1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(text(&o.stdout), format!("{GOLDEN}\n"));
    let o = cloaknic(&["vectors", "--key", KEY, "--count", "4"]);
    let lines: Vec<String> = text(&o.stdout).lines().map(String::from).collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[3].contains(" 0000000000000003 "));
}

#[test]
fn vectors_count_zero_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("v.txt");
    let o = cloaknic(&[
        "vectors",
        "--key",
        KEY,
        "--count",
        "0",
        "--out",
        p.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(&p).unwrap(), b"");
}

#[test]
fn vectors_reject_short_key() {
    let o = cloaknic(&["vectors", "--key", &KEY[..62]]);
    assert_eq!(code(&o), 1);
    assert!(
        text(&o.stderr).contains("32 bytes, got 31"),
        "{}",
        text(&o.stderr)
    );
    assert!(o.stdout.is_empty());
}

#[test]
fn demo_summaries() {
    let o = cloaknic(&["demo", "arp-poison", "--quiet"]);
    assert_eq!(code(&o), 0);
    let s = text(&o.stdout);
    assert!(
        s.contains("cloaked server made 0 ARP cache write(s)")
            && s.contains("rewrote its cache 10 time(s)"),
        "{s}"
    );
    let o = cloaknic(&["demo", "replay", "--quiet"]);
    assert!(text(&o.stdout).contains("dropped 1 copy as replayed"));
}

#[test]
fn demo_writes_requested_files() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    let o = cloaknic(&[
        "demo",
        "happy-path",
        "--quiet",
        "--metrics",
        m.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(field(&metrics(&m), "server", "delivered"), 1);
}

#[test]
fn unknown_demo_lists_names() {
    let o = cloaknic(&["demo", "nope"]);
    assert_eq!(code(&o), 1);
    let err = text(&o.stderr);
    for d in DEMOS {
        assert!(err.contains(d), "{err}");
    }
}

#[test]
fn exit_codes() {
    let o = cloaknic(&["run", "--scenario", "/definitely/not/here.scn"]);
    assert_eq!(code(&o), 3);
    let o = cloaknic(&[
        "run",
        "--scenario",
        scenario("happy-path").to_str().unwrap(),
        "--trace",
        "/definitely/not/here/t.jsonl",
    ]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&cloaknic(&["frobnicate"])), 1);
    assert_eq!(code(&cloaknic(&["run"])), 1);
    assert_eq!(code(&cloaknic(&["--help"])), 0);
}

/// Deterministic mutants of the demo scenarios: each line dropped, and
/// each line with its first or last token corrupted.
fn mutants() -> Vec<String> {
    let mut out = Vec::new();
    for d in DEMOS {
        let src = fs::read_to_string(scenario(d)).unwrap();
        out.push(src.clone());
        let lines: Vec<&str> = src.lines().collect();
        for i in 0..lines.len() {
            if lines[i].trim().is_empty() || lines[i].starts_with('#') {
                continue;
            }
            let mut dropped = lines.clone();
            dropped.remove(i);
            out.push(dropped.join("\n"));
            for corrupt in [0usize, 1] {
                let mut toks: Vec<String> = lines[i].split_whitespace().map(String::from).collect();
                let j = if corrupt == 0 { 0 } else { toks.len() - 1 };
                toks[j] = match toks[j].split_once('=') {
                    Some((k, _)) => format!("{k}=zz"),
                    None => format!("{}x", toks[j]),
                };
                let mut changed = lines.clone();
                let joined = toks.join(" ");
                changed[i] = &joined;
                out.push(changed.join("\n"));
            }
        }
    }
    out
}

#[test]
fn check_accepts_exactly_what_run_accepts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = mutants();
    let (mut ok, mut bad) = (0, 0);
    for (i, src) in corpus.iter().enumerate() {
        let p = dir.path().join(format!("m{i}.scn"));
        fs::write(&p, src).unwrap();
        let ps = p.to_str().unwrap();
        let c = cloaknic(&["check", "--quiet", "--scenario", ps]);
        let r = cloaknic(&[
            "run",
            "--quiet",
            "--scenario",
            ps,
            "--trace",
            dir.path().join("t").to_str().unwrap(),
        ]);
        assert_eq!(
            code(&c),
            code(&r),
            "mutant {i} diverges:\n{src}\ncheck: {}\nrun: {}",
            text(&c.stderr),
            text(&r.stderr)
        );
        assert!(code(&c) == 0 || code(&c) == 1);
        if code(&c) == 0 {
            ok += 1;
        } else {
            bad += 1;
        }
    }
    assert!(
        ok > 5 && bad > 50,
        "corpus too lopsided: {ok} valid, {bad} invalid"
    );
}
