//! `cellx`: run the control API, chat with it, ingest manuals, validate cell
//! configs and replay scenario files.
//!
//! Exit status: 0 success, 1 invalid input or failed expectations,
//! 2 usage errors (bad flags, unreadable or unparsable files).

mod chat;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use cellx_core::agent::{AuditLog, Clock, Provider, Rig, SystemClock};
use cellx_core::calculus::{validate_config, CellConfig, ValidationReport};
use cellx_core::knowledge::{ingest_dir, Index};
use cellx_core::scenario::{ProviderKind, Scenario};
use cellx_core::station::Station;
use cellx_server::{provider_factory, Service, ServiceConfig};
use clap::{Parser, Subcommand};
use serde_json::json;

const AUTO_WARNING: &str =
    "warning: --auto disables the approval gate; config changes reach the station without operator review";

#[derive(Parser)]
#[command(name = "cellx", version, about = "LTE base-station operations agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the control API service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Override the station seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Disable the approval gate for every session.
        #[arg(long)]
        auto: bool,
    },
    /// Interactive chat against a running service.
    Chat {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        endpoint: String,
        /// Open the session with the approval gate disabled.
        #[arg(long)]
        auto: bool,
    },
    /// Chunk and index a directory of markdown / text documents.
    Ingest {
        dir: PathBuf,
        /// Where to write the index (default: <dir>/cellx-index.json).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Validate a cell config file (TOML or JSON).
    Validate {
        config: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Replay a scenario file and check its expectations.
    Scenario {
        path: PathBuf,
        /// Machine-readable result on stdout.
        #[arg(long)]
        json: bool,
        /// Override the scenario's station seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Disable the approval gate regardless of the scenario policy.
        #[arg(long)]
        auto: bool,
        /// Append the run's audit records to this JSON Lines file.
        #[arg(long)]
        audit: Option<PathBuf>,
        /// Service config supplying the provider for live scenarios.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Why a command did not succeed.
enum Failure {
    Usage(String),
    Failed(String),
    /// Already reported on stdout.
    Quiet,
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve { config, seed, auto } => serve(&config, seed, auto),
        Command::Chat { endpoint, auto } => chat::run(&endpoint, auto).map_err(Failure::Failed),
        Command::Ingest { dir, out, json } => ingest(&dir, out, json),
        Command::Validate { config, json } => validate(&config, json),
        Command::Scenario {
            path,
            json,
            seed,
            auto,
            audit,
            config,
        } => scenario(&path, json, seed, auto, audit, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Quiet) => ExitCode::from(1),
        Err(Failure::Failed(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn load_service_config(path: &Path) -> Result<ServiceConfig, Failure> {
    ServiceConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))
}

fn serve(config: &Path, seed: Option<u64>, auto: bool) -> Outcome {
    let mut cfg = load_service_config(config)?;
    if let Some(seed) = seed {
        cfg.station_seed = seed;
    }
    if auto {
        eprintln!("{AUTO_WARNING}");
        cfg.policy.require_approval = Some(false);
    }
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .init();
    let service = Service::from_config(&cfg).map_err(|e| Failure::Failed(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Failed(e.to_string()))?;
    rt.block_on(cellx_server::serve(Arc::new(service), &cfg, |addr| {
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
    }))
    .map_err(|e| Failure::Failed(format!("serving on {}: {e}", cfg.listen)))
}

fn ingest(dir: &Path, out: Option<PathBuf>, json: bool) -> Outcome {
    if !dir.is_dir() {
        return Err(Failure::Usage(format!("{} is not a readable directory", dir.display())));
    }
    let chunks = ingest_dir(dir).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut per_doc: Vec<(String, usize)> = Vec::new();
    for c in &chunks {
        match per_doc.last_mut() {
            Some((doc, n)) if *doc == c.doc_id => *n += 1,
            _ => per_doc.push((c.doc_id.clone(), 1)),
        }
    }
    let index = Index::build(chunks).map_err(|e| Failure::Failed(e.to_string()))?;
    let out = out.unwrap_or_else(|| dir.join("cellx-index.json"));
    index.save(&out).map_err(|e| Failure::Failed(e.to_string()))?;
    if json {
        let docs: Vec<_> = per_doc.iter().map(|(d, n)| json!({"doc_id": d, "chunks": n})).collect();
        let v = json!({"documents": docs, "chunks": index.len(), "index": out});
        println!("{}", serde_json::to_string_pretty(&v).unwrap());
    } else {
        let w = per_doc.iter().map(|(d, _)| d.len()).max().unwrap_or(0);
        for (doc, n) in &per_doc {
            println!("{doc:<w$}  {n:>4} chunks");
        }
        println!("{} documents, {} chunks -> {}", per_doc.len(), index.len(), out.display());
    }
    Ok(())
}

fn read_config(path: &Path) -> Result<CellConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("reading {}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.message().to_string())
    };
    parsed.map_err(|e| Failure::Usage(format!("parsing {}: {e}", path.display())))
}

fn print_report(report: &ValidationReport) {
    println!("{}", if report.valid { "valid" } else { "invalid" });
    for i in &report.issues {
        let sev = serde_json::to_value(i.severity).unwrap();
        print!("  {:<7}  {:<14}  {}", sev.as_str().unwrap_or(""), i.field, i.message);
        if let Some(fix) = &i.suggested_fix {
            print!(" (suggested: {fix})");
        }
        println!();
    }
}

fn validate(path: &Path, json: bool) -> Outcome {
    let config = read_config(path)?;
    let report = validate_config(&config);
    if json {
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
    } else {
        print_report(&report);
    }
    if report.valid {
        Ok(())
    } else {
        Err(Failure::Quiet)
    }
}

fn scenario(
    path: &Path,
    json: bool,
    seed: Option<u64>,
    auto: bool,
    audit: Option<PathBuf>,
    config: Option<PathBuf>,
) -> Outcome {
    let mut scenario = Scenario::load(path).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(seed) = seed {
        scenario.file.station_seed = seed;
    }
    let mut policy = scenario.policy();
    if auto {
        eprintln!("{AUTO_WARNING}");
        policy.require_approval = false;
    }
    let mut provider: Box<dyn Provider> = match scenario.provider_kind() {
        ProviderKind::Scripted => Box::new(scenario.scripted_provider()),
        ProviderKind::Live => {
            let cfg_path = config.ok_or_else(|| {
                Failure::Usage("a live scenario needs --config with a [provider] section".into())
            })?;
            let cfg = load_service_config(&cfg_path)?;
            let factory = provider_factory(&cfg.provider).map_err(|e| Failure::Failed(e.to_string()))?;
            factory().map_err(|e| Failure::Failed(e.to_string()))?
        }
    };
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let log = match &audit {
        Some(p) => AuditLog::with_file(clock, p).map_err(|e| Failure::Usage(format!("audit file {}: {e}", p.display())))?,
        None => AuditLog::in_memory(clock),
    };
    let index = scenario.index().map_err(|e| Failure::Usage(e.to_string()))?;
    let rig = Rig::new(Station::new(scenario.file.station_seed), index, log);
    let run = scenario.run_on(&rig, policy, provider.as_mut());
    if let Some(e) = rig.audit.sink_error() {
        return Err(Failure::Failed(format!("writing audit log: {e}")));
    }
    if json {
        let mut v = serde_json::to_value(&run).unwrap();
        v["passed"] = json!(run.passed());
        println!("{}", serde_json::to_string_pretty(&v).unwrap());
    } else {
        print!("{}", run.table());
        eprintln!("ran in {} ms", run.elapsed.as_millis());
    }
    if run.passed() {
        Ok(())
    } else {
        Err(Failure::Quiet)
    }
}
