use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cloaknic::demos::{self, DemoError};
use cloaknic::knock::{KnockFields, SharedKey, VectorLine};
use cloaknic::netsim::{run_scenario, trace_to_jsonl, Metrics, Scenario, TraceRecord};

/// Cloaking-NIC simulator: validate and run scenarios, generate knock
/// vectors, replay the built-in demos.
#[derive(Parser)]
#[command(name = "cloaknic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a scenario file; prints "ok" on success.
    Check {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Run a scenario to its horizon.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Print knock test vectors with sequential nonces starting at 0.
    Vectors {
        /// 32-byte key as 64 hex digits.
        #[arg(long)]
        key: String,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value = "10.0.0.5")]
        client_ip: Ipv4Addr,
        #[arg(long, default_value_t = 40000)]
        client_port: u16,
        #[arg(long, default_value_t = 1000)]
        timestamp: u64,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in scenario and print what it shows.
    Demo {
        /// happy-path, port-scan, arp-poison, replay or baseline-comparison.
        name: String,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args)]
struct OutputArgs {
    /// Trace file (JSON lines). `run` writes to standard output without it.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Metrics file (JSON).
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Knock nonce seed; overrides the scenario's own.
    #[arg(long)]
    seed: Option<u64>,
    /// Include raw frame hex in trace records.
    #[arg(long)]
    hex: bool,
    /// Suppress the summary on standard error.
    #[arg(long)]
    quiet: bool,
}

enum CliError {
    Validation(String),
    Runtime(String),
    Io(PathBuf, io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io(..) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn write(path: &Path, data: &str) -> Result<(), CliError> {
    fs::write(path, data).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn stdout(data: &str) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    out.write_all(data.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Io(PathBuf::from("<stdout>"), e))
}

fn load(path: &Path) -> Result<Scenario, CliError> {
    let text = read(path)?;
    Scenario::parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn warn(sc: &Scenario, path: &Path) {
    for w in sc.warnings() {
        eprintln!("warning: {}: {w}", path.display());
    }
}

fn write_outputs(
    trace: &[TraceRecord],
    metrics: &Metrics,
    out: &OutputArgs,
    trace_to_stdout: bool,
) -> Result<(), CliError> {
    let jsonl = trace_to_jsonl(trace);
    match &out.trace {
        Some(p) => write(p, &jsonl)?,
        None if trace_to_stdout => stdout(&jsonl)?,
        None => {}
    }
    if let Some(p) = &out.metrics {
        write(p, &metrics.to_json())?;
    }
    Ok(())
}

fn node_summary(metrics: &Metrics) -> String {
    let mut s = format!("finished at t={}\n", metrics.final_clock);
    for (name, n) in &metrics.nodes {
        s.push_str(&format!(
            "  {name:<12} {:<8} rx {:>5}  delivered {:>4}  dropped {:>5}  tx {:>5}  arp writes {:>3}\n",
            n.kind, n.frames_processed, n.delivered, n.dropped, n.tx, n.arp_cache_writes
        ));
    }
    s
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Check { scenario, quiet } => {
            let sc = load(&scenario)?;
            if !quiet {
                warn(&sc, &scenario);
            }
            stdout("ok\n")
        }
        Command::Run { scenario, out } => {
            let sc = load(&scenario)?;
            if !out.quiet {
                warn(&sc, &scenario);
            }
            let (trace, metrics) = run_scenario(&sc, out.seed, out.hex)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            write_outputs(&trace, &metrics, &out, true)?;
            if !out.quiet {
                eprint!("{}", node_summary(&metrics));
            }
            Ok(())
        }
        Command::Vectors {
            key,
            count,
            client_ip,
            client_port,
            timestamp,
            out,
        } => {
            let key = SharedKey::from_hex(&key).map_err(|e| CliError::Validation(e.to_string()))?;
            let fields = KnockFields::new(client_ip, client_port, timestamp)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let mut text = String::new();
            for n in 0..count {
                text.push_str(&VectorLine::generate(&key, n.to_be_bytes(), fields).to_string());
                text.push('\n');
            }
            match out {
                Some(p) => write(&p, &text),
                None => stdout(&text),
            }
        }
        Command::Demo { name, out } => {
            let outcome = demos::run_demo(&name, out.seed, out.hex).map_err(|e| match e {
                DemoError::UnknownDemo { .. } => CliError::Validation(e.to_string()),
                DemoError::Scenario(_) => CliError::Runtime(e.to_string()),
            })?;
            write_outputs(&outcome.trace, &outcome.metrics, &out, false)?;
            stdout(&format!("{}\n", outcome.summary))?;
            if !out.quiet {
                eprint!("{}", node_summary(&outcome.metrics));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let informational = !e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if informational { 0 } else { 1 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
