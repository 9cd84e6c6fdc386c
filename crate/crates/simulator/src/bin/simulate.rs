use std::path::PathBuf;
use std::process::ExitCode;

use calmrelay_core::scenario::ScenarioConfig;
use calmrelay_sim::run_scenario;
use clap::Parser;

/// Run a synthetic-audience scenario against a calmrelay server.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Scenario file (TOML or JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// WebSocket URL, e.g. ws://127.0.0.1:8080/ws.
    #[arg(long)]
    server: String,
    /// Write the full report as JSON.
    #[arg(long)]
    json_report: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let scenario = match ScenarioConfig::load(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let report = match run_scenario(&scenario, &args.server).await {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    println!(
        "{}: {} frames, {:.2} Hz, latency median {:.1} ms p95 {:.1} ms, {} samples sent",
        report.name,
        report.frames_received,
        report.frame_rate_observed,
        report.latency.median_ms,
        report.latency.p95_ms,
        report.samples_sent
    );
    for a in &report.assertions {
        let verdict = if a.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {}: {}", serde_json::to_string(&a.assertion).unwrap_or_default(), a.detail);
    }
    if let Some(path) = &args.json_report {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        if let Err(e) = std::fs::write(path, json) {
            eprintln!("writing {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
