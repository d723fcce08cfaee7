//! Feasibility → (diagnostic or full solve) → artifacts, plus sweeps and the
//! two-mode comparison.

use std::path::{Path, PathBuf};

use anyhow::Result;
use omega_pension::envelope::classify_and_solve;
use omega_pension::market::{self, FeasibilityReport, KernelLaw};
use omega_pension::multipliers::{self, evaluate_point, solve_lambda, solve_nu, PointEvaluation};
use omega_pension::replicate::{self, PathStats, SimConfig};
use omega_pension::{CaseLabel, Error, ExistenceVerdict, LinearizedObjective, MarketParams, SolverResult};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{self, emit_curve, write_json, write_text, CURVE_POINTS};
use crate::config::{ScenarioConfig, MANIFEST_KIND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Solved,
    Infeasible,
    NumericalFailure,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Solved => 0,
            Status::Infeasible => 2,
            Status::NumericalFailure => 3,
        }
    }
}

/// Exit code for an error that escaped the pipeline: numerical failures map
/// to 3, everything else (parse, validation, I/O) to 1.
pub fn error_exit_code(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<Error>() {
        Some(err) if is_numerical(err) => 3,
        _ => 1,
    }
}

fn is_numerical(e: &Error) -> bool {
    matches!(e, Error::Numerical(_) | Error::BracketNotFound { .. } | Error::Invariant(_) | Error::SingularTransform(_))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rescale {
    pub fraction: f64,
    pub scale: f64,
    pub aux_initial_before: f64,
    pub aux_initial: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub diagnostic: bool,
    /// Recorded in the manifest.
    pub command: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: Status,
    pub out: PathBuf,
    pub feasibility: Option<FeasibilityReport>,
    pub result: Option<SolverResult>,
    pub message: Option<String>,
}

#[derive(Serialize)]
struct Tolerances {
    budget_root: f64,
    accept_budget: f64,
    accept_value: f64,
    accept_slack: f64,
    nu_max: f64,
    maturity_guard: f64,
    quadrature_nodes: usize,
}

fn tolerances(cfg: &ScenarioConfig) -> Tolerances {
    Tolerances {
        budget_root: multipliers::TOL_BUDGET,
        accept_budget: multipliers::ACCEPT_BUDGET,
        accept_value: multipliers::ACCEPT_VALUE,
        accept_slack: multipliers::ACCEPT_SLACK,
        nu_max: multipliers::NU_MAX,
        maturity_guard: replicate::MATURITY_GUARD,
        quadrature_nodes: cfg.quadrature.nodes,
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    kind: &'static str,
    version: &'static str,
    command: &'a str,
    status: Status,
    seed: u64,
    config: ScenarioConfig,
    rescale: Option<Rescale>,
    tolerances: Tolerances,
    artifacts: Vec<&'static str>,
}

fn write_manifest(
    out: &Path,
    cfg: &ScenarioConfig,
    opts: &RunOptions,
    status: Status,
    rescale: Option<Rescale>,
    artifacts: Vec<&'static str>,
) -> Result<()> {
    let mut config = cfg.clone();
    config.output = None;
    let m = Manifest {
        kind: MANIFEST_KIND,
        version: env!("CARGO_PKG_VERSION"),
        command: &opts.command,
        status,
        seed: cfg.seed,
        config,
        rescale,
        tolerances: tolerances(cfg),
        artifacts,
    };
    write_json(out, "manifest.json", &m)
}

/// The config's market, rescaled when asked. A sweep uses the window common
/// to all its points, so every point starts from the same x̃₀.
pub fn prepare_market(cfg: &ScenarioConfig) -> Result<(MarketParams, Option<Rescale>), Error> {
    let Some(fraction) = cfg.rescale else {
        return Ok((cfg.market.clone(), None));
    };
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    let mut before = 0.0;
    for (_, p) in cfg.points() {
        let r = market::feasibility(&cfg.market, p.theta, p.floor, p.epsilon)?;
        lower = lower.max(r.lower);
        upper = upper.min(r.upper);
        before = r.aux_initial;
    }
    if !(lower < upper) {
        return Err(Error::InvalidParams(format!(
            "no common feasible window across the sweep (lower {lower:.6} >= upper {upper:.6})"
        )));
    }
    let target = lower + fraction * (upper - lower);
    let (m, scale) = market::rescale_to(&cfg.market, target)?;
    Ok((m, Some(Rescale { fraction, scale, aux_initial_before: before, aux_initial: target, lower, upper })))
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    feasibility: &'a FeasibilityReport,
    rescale: Option<Rescale>,
    optimality_claimed: bool,
    points: Vec<PointEvaluation>,
}

#[derive(Serialize)]
struct Failure<'a> {
    status: Status,
    error: &'a str,
    feasibility: Option<&'a FeasibilityReport>,
}

/// Single scenario: feasibility, then diagnostic evaluation or the full
/// solve, then artifacts under `out`.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    if cfg.sweep.is_some() {
        anyhow::bail!("config defines a sweep; run it with `sweep`");
    }
    let (market, rescale) = prepare_market(cfg)?;
    run_point(cfg, &market, rescale, out, opts)
}

fn run_point(
    cfg: &ScenarioConfig,
    market: &MarketParams,
    rescale: Option<Rescale>,
    out: &Path,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    let report = market::feasibility(market, cfg.theta, cfg.floor, cfg.epsilon)?;
    let law = market::kernel_law(market)?;
    let pair = cfg.pair();
    let q = cfg.quadrature;
    let mut outcome =
        RunOutcome { status: Status::Solved, out: out.to_path_buf(), feasibility: Some(report), result: None, message: None };

    if opts.diagnostic || !report.is_feasible() {
        let points = cfg
            .probes
            .iter()
            .map(|p| evaluate_point(&law, &pair, p.nu, p.lambda, p.beta, cfg.theta, cfg.floor, &q))
            .collect::<Result<Vec<_>, _>>()?;
        write_json(out, "diagnostic.json", &Diagnostic { feasibility: &report, rescale, optimality_claimed: false, points })?;
        if !report.is_feasible() {
            outcome.status = Status::Infeasible;
            outcome.message = Some(format!(
                "x̃₀ = {} outside the feasible window ({}, {}): {:?}",
                report.aux_initial, report.lower, report.upper, report.verdict
            ));
        }
        write_manifest(out, cfg, opts, outcome.status, rescale, vec!["diagnostic.json"])?;
        return Ok(outcome);
    }

    let mut result = match solve_nu(&law, &pair, report.aux_initial, cfg.theta, cfg.floor, cfg.epsilon, &q) {
        Ok(r) => r,
        Err(e) if is_numerical(&e) => {
            let msg = e.to_string();
            write_json(
                out,
                "failure.json",
                &Failure { status: Status::NumericalFailure, error: &msg, feasibility: Some(&report) },
            )?;
            write_manifest(out, cfg, opts, Status::NumericalFailure, rescale, vec!["failure.json"])?;
            outcome.status = Status::NumericalFailure;
            outcome.message = Some(msg);
            return Ok(outcome);
        }
        Err(e) => return Err(e.into()),
    };
    result.feasibility = Some(report);
    write_json(out, "solver.json", &result)?;
    if !result.is_solved() {
        outcome.status = Status::Infeasible;
        outcome.message = Some(format!("{:?}", result.verdict));
        write_manifest(out, cfg, opts, outcome.status, rescale, vec!["solver.json"])?;
        outcome.result = Some(result);
        return Ok(outcome);
    }

    let mut files = vec!["solver.json"];
    files.extend(write_solution_artifacts(cfg, market, &law, &result, out)?);
    write_manifest(out, cfg, opts, Status::Solved, rescale, files)?;
    outcome.result = Some(result);
    Ok(outcome)
}

fn write_solution_artifacts(
    cfg: &ScenarioConfig,
    market: &MarketParams,
    law: &KernelLaw,
    result: &SolverResult,
    out: &Path,
) -> Result<Vec<&'static str>> {
    let curve = emit_curve(law, &result.solution, result.beta, CURVE_POINTS);
    write_text(out, "curve.csv", &curve.csv())?;
    write_json(out, "curve_regions.json", &curve.regions)?;
    let payoff = replicate::atoms(&result.solution, result.beta)?;
    let rows = replicate::strategy_path(&payoff, market, cfg.strategy.formula, cfg.strategy.steps, cfg.strategy.every, cfg.seed)?;
    write_text(out, "strategy.csv", &artifacts::strategy_csv(&rows))?;
    let mut files = vec!["curve.csv", "curve_regions.json", "strategy.csv"];
    if let Some(sim) = &cfg.simulation {
        let stats: PathStats = replicate::simulate_paths(
            &payoff,
            &result.solution,
            market,
            &SimConfig {
                paths: sim.paths,
                steps: sim.steps,
                seed: cfg.seed,
                formula: cfg.strategy.formula,
                scheme: sim.scheme,
                check_times: sim.check_fractions.iter().map(|f| f * market.horizon).collect(),
            },
        )?;
        write_json(out, "replication.json", &stats)?;
        files.push("replication.json");
    }
    Ok(files)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub dir: String,
    pub status: Status,
    pub label: Option<CaseLabel>,
    pub nu: Option<f64>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub parameter: &'static str,
    pub status: Status,
    pub rescale: Option<Rescale>,
    pub points: Vec<SweepPoint>,
}

/// Runs every sweep point concurrently, each into its own subdirectory.
pub fn run_sweep(cfg: &ScenarioConfig, out: &Path, opts: &RunOptions) -> Result<SweepSummary> {
    let Some(sweep) = &cfg.sweep else {
        anyhow::bail!("config has no sweep");
    };
    let (market, rescale) = prepare_market(cfg)?;
    let jobs: Vec<(f64, String, ScenarioConfig)> = cfg
        .points()
        .into_iter()
        .enumerate()
        .map(|(i, (v, mut c))| {
            // each point carries the already rescaled market so its manifest
            // reproduces the point alone
            c.market = market.clone();
            c.rescale = None;
            let v = v.expect("sweep point has a value");
            (v, format!("{i:02}-{}-{v}", sweep.parameter.name()), c)
        })
        .collect();
    let outcomes: Vec<Result<RunOutcome>> =
        jobs.par_iter().map(|(_, dir, c)| run_point(c, &c.market, rescale, &out.join(dir), opts)).collect();
    let mut points = Vec::with_capacity(jobs.len());
    let mut status = Status::Solved;
    for ((value, dir, _), o) in jobs.iter().zip(outcomes) {
        let o = o?;
        status = status.max(o.status);
        let r = o.result.as_ref();
        points.push(SweepPoint {
            value: *value,
            dir: dir.clone(),
            status: o.status,
            label: r.map(|r| r.label),
            nu: r.map(|r| r.nu),
            lambda: r.map(|r| r.lambda),
            beta: r.map(|r| r.beta),
            message: o.message,
        });
    }
    let summary = SweepSummary { parameter: sweep.parameter.name(), status, rescale, points };
    write_json(out, "sweep.json", &summary)?;
    write_manifest(out, cfg, opts, status, rescale, vec!["sweep.json"])?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeSummary {
    pub nu: f64,
    pub lambda: f64,
    pub beta: f64,
    pub label: CaseLabel,
    pub verdict: ExistenceVerdict,
    /// sup{y : Z*(y) ≥ L}; `None` when Z* ≥ L for every y.
    pub floor_sup: Option<f64>,
}

impl ModeSummary {
    fn of(r: &SolverResult) -> Self {
        Self {
            nu: r.nu,
            lambda: r.lambda,
            beta: r.beta,
            label: r.label,
            verdict: r.verdict,
            floor_sup: finite(r.solution.floor_sup()),
        }
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub status: Status,
    pub no_var: Option<ModeSummary>,
    pub fixed_nu: Option<ModeSummary>,
    /// Floor interval of the fixed-ν problem without the indicator (λ = 0).
    pub fixed_nu_unconstrained_floor_sup: Option<f64>,
    /// The fixed-ν interval where Z* ≥ L contains the λ = 0 one.
    pub floor_interval_weakly_larger: Option<bool>,
}

pub const FIXED_NU: f64 = 1.0;

/// (i) the pure ratio problem (ε = 1) and (ii) the piecewise-utility problem
/// with ν pinned to 1 and the VaR constraint kept.
pub fn compare_modes(cfg: &ScenarioConfig, out: &Path, opts: &RunOptions) -> Result<Comparison> {
    if cfg.sweep.is_some() {
        anyhow::bail!("config defines a sweep; `compare` takes a single scenario");
    }
    let (market, rescale) = prepare_market(cfg)?;
    let mut free = cfg.clone();
    free.epsilon = 1.0;
    free.rescale = None;
    free.market = market.clone();
    let first = run_point(&free, &market, rescale, &out.join("no_var"), opts)?;

    let report = market::feasibility(&market, cfg.theta, cfg.floor, cfg.epsilon)?;
    let law = market::kernel_law(&market)?;
    let pair = cfg.pair();
    let mut status = first.status;
    let mut fixed = None;
    let mut unconstrained = None;
    if report.is_feasible() {
        let inner = solve_lambda(&law, &pair, FIXED_NU, cfg.theta, cfg.floor, report.aux_initial, cfg.epsilon, &cfg.quadrature)?;
        let mut r = SolverResult::from_inner(inner, &law, report.aux_initial, cfg.epsilon, &cfg.quadrature)?;
        r.feasibility = Some(report);
        let dir = out.join("fixed_nu");
        write_json(&dir, "solver.json", &r)?;
        if r.is_solved() {
            let curve = emit_curve(&law, &r.solution, r.beta, CURVE_POINTS);
            write_text(&dir, "curve.csv", &curve.csv())?;
            write_json(&dir, "curve_regions.json", &curve.regions)?;
        } else {
            status = status.max(Status::Infeasible);
        }
        let base = classify_and_solve(&LinearizedObjective::new(FIXED_NU, 0.0, cfg.theta, cfg.floor), &pair)?;
        unconstrained = Some(base.floor_sup());
        fixed = Some(r);
    } else {
        status = status.max(Status::Infeasible);
    }
    let cmp = Comparison {
        status,
        no_var: first.result.as_ref().map(ModeSummary::of),
        fixed_nu: fixed.as_ref().map(ModeSummary::of),
        fixed_nu_unconstrained_floor_sup: unconstrained.and_then(finite),
        floor_interval_weakly_larger: match (&fixed, unconstrained) {
            (Some(r), Some(u)) => Some(r.solution.floor_sup() >= u),
            _ => None,
        },
    };
    write_json(out, "compare.json", &cmp)?;
    write_manifest(out, cfg, opts, status, rescale, vec!["compare.json"])?;
    Ok(cmp)
}
