use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use crisis::dump::{audit, diff_orders, dump_graph, parse_dump, parse_order};
use crisis_sim::{SimConfig, SimReport};

/// Run crisis simulations and check their artifacts.
#[derive(Parser)]
#[command(name = "crisis", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics and per-process dumps.
    ///
    /// Exits nonzero if a runtime safety assertion fired, finalized prefixes
    /// disagree, a finalized position changed, or an order breaks causality.
    Run {
        /// Scenario file (TOML with schema_version).
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, created if missing.
        #[arg(long, default_value = "crisis-out")]
        out: PathBuf,
        /// Overrides the scenario's cap on processed events.
        #[arg(long)]
        events: Option<u64>,
    },
    /// Check past-closure, acyclicity, round monotonicity, last-vertex
    /// separation and svp nesting on a graph dump.
    Audit {
        /// Graph dump, one vertex per line.
        dump: PathBuf,
    },
    /// Compare two order dumps: common prefix and first divergence.
    ///
    /// Exits nonzero if the orders diverge within their common length.
    DiffOrder { left: PathBuf, right: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command.execute() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

impl Command {
    fn execute(self) -> Result<bool> {
        match self {
            Command::Run {
                scenario,
                seed,
                out,
                events,
            } => run(&scenario, seed, &out, events),
            Command::Audit { dump } => audit_dump(&dump),
            Command::DiffOrder { left, right } => diff(&left, &right),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn run(scenario: &Path, seed: Option<u64>, out: &Path, events: Option<u64>) -> Result<bool> {
    let mut config = SimConfig::from_toml(&read(scenario)?)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(events) = events {
        config.duration.max_events = events;
    }
    let report = crisis_sim::run(config)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_artifacts(&report, out)?;
    let s = &report.summary;
    println!("{}", serde_json::to_string(s)?);
    let violations = s.quorum_intersection_violations + s.graded_agreement_violations + s.agreement_stability_violations;
    let ok = violations == 0 && s.agreement_ratio == 1.0 && s.finalized_rewrites == 0 && s.consistency_failures == 0;
    if !ok {
        eprintln!(
            "checks failed: {violations} assertion violations, agreement {}, {} finalized rewrites, {} inconsistent orders",
            s.agreement_ratio, s.finalized_rewrites, s.consistency_failures
        );
    }
    Ok(ok)
}

fn write_artifacts(report: &SimReport, out: &Path) -> Result<()> {
    write(out.join("metrics.jsonl"), &report.metrics_jsonl())?;
    write(out.join("scenario.toml"), &report.config.to_toml())?;
    for p in &report.processes {
        let r = &p.replica;
        write(out.join(format!("process-{}.graph", p.index)), &dump_graph(r.graph()))?;
        write(out.join(format!("process-{}.stream", p.index)), &r.stream().dump())?;
        write(out.join(format!("process-{}.order", p.index)), &r.order().dump())?;
    }
    Ok(())
}

fn audit_dump(path: &Path) -> Result<bool> {
    let records = parse_dump(&read(path)?).with_context(|| format!("cannot parse {}", path.display()))?;
    let report = audit(&records);
    for check in &report.checks {
        let status = if check.passed() { "ok" } else { "FAILED" };
        println!("{}: {status}", check.name);
        for failure in &check.failures {
            println!("  {failure}");
        }
    }
    Ok(report.passed())
}

fn diff(left: &Path, right: &Path) -> Result<bool> {
    let a = parse_order(&read(left)?).with_context(|| format!("cannot parse {}", left.display()))?;
    let b = parse_order(&read(right)?).with_context(|| format!("cannot parse {}", right.display()))?;
    let d = diff_orders(&a, &b);
    println!("lengths: {} {}", a.len(), b.len());
    println!("common prefix: {}", d.common_prefix);
    match d.first_divergence {
        Some(p) => println!("first divergence: {p}"),
        None => println!("first divergence: none"),
    }
    println!("agreement: {}", d.agreement);
    Ok(d.first_divergence.is_none())
}
