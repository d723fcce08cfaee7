use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use omega_pension_cli::pipeline::error_exit_code;
use omega_pension_cli::{compare_modes, run_scenario, run_sweep, RunOptions, ScenarioConfig};
use serde_json::json;

/// Omega-ratio pension optimizer with a VaR constraint.
///
/// Exit codes: 0 solved, 1 config or I/O error, 2 infeasible, 3 numerical
/// failure. A one-line JSON summary goes to stdout.
#[derive(Parser)]
#[command(name = "omega-pension", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write its artifacts.
    Solve(Common),
    /// Run every point of the config's sweep axis.
    Sweep(Common),
    /// Compare the pure ratio problem (ε = 1) with the fixed-ν problem.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario config (JSON) or a run manifest.
    config: PathBuf,
    /// Output directory (default: the config's `output`, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quadrature_nodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluate the config's probes instead of solving.
    #[arg(long)]
    diagnostic: bool,
}

fn load(c: &Common) -> Result<(ScenarioConfig, PathBuf)> {
    let mut cfg = ScenarioConfig::load(&c.config)?;
    if let Some(n) = c.quadrature_nodes {
        cfg.quadrature.nodes = n;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let out = c.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<i32> {
    let (name, common) = match &cli.command {
        Command::Solve(c) => ("solve", c),
        Command::Sweep(c) => ("sweep", c),
        Command::Compare(c) => ("compare", c),
    };
    let (cfg, out) = load(common)?;
    let opts = RunOptions { diagnostic: common.diagnostic, command: name.to_string() };
    let summary = match &cli.command {
        Command::Solve(_) => {
            let o = run_scenario(&cfg, &out, &opts)?;
            let r = o.result.as_ref();
            json!({
                "status": o.status,
                "exit_code": o.status.exit_code(),
                "out": out,
                "label": r.map(|r| r.label),
                "nu": r.map(|r| r.nu),
                "lambda": r.map(|r| r.lambda),
                "beta": r.map(|r| r.beta),
                "message": o.message,
            })
        }
        Command::Sweep(_) => {
            let s = run_sweep(&cfg, &out, &opts)?;
            json!({
                "status": s.status,
                "exit_code": s.status.exit_code(),
                "out": out,
                "parameter": s.parameter,
                "labels": s.points.iter().map(|p| p.label).collect::<Vec<_>>(),
            })
        }
        Command::Compare(_) => {
            let c = compare_modes(&cfg, &out, &opts)?;
            json!({
                "status": c.status,
                "exit_code": c.status.exit_code(),
                "out": out,
                "floor_interval_weakly_larger": c.floor_interval_weakly_larger,
            })
        }
    };
    println!("{summary}");
    Ok(summary["exit_code"].as_i64().unwrap_or(1) as i32)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let code = error_exit_code(&e);
            eprintln!("error: {e:#}");
            println!("{}", json!({ "status": "error", "exit_code": code, "message": format!("{e:#}") }));
            ExitCode::from(code as u8)
        }
    }
}
