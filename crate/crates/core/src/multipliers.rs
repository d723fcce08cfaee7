//! Expectation functionals under the lognormal kernel and the nested
//! (ν, λ, β) solve.
//!
//! For fixed (ν, λ) the pointwise solution is a branch table in y. With
//! y = βH(T) the budget, VaR probability and linearized value become
//! one-dimensional Gaussian integrals, evaluated on Gauss–Legendre panels
//! split at the mapped breakpoints.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::envelope::{classify_and_solve, BranchTableDump, CaseLabel, PiecewiseSolution};
use crate::error::{Error, Result};
use crate::market::{self, FeasibilityReport, KernelLaw, MarketParams};
use crate::normal;
use crate::preferences::{LinearizedObjective, PreferencePair};
use crate::quadrature::{self, QuadratureSpec};
use crate::roots;

/// Relative budget tolerance used by [`solve_beta`].
pub const TOL_BUDGET: f64 = 1e-12;
/// Reported-residual acceptance levels.
pub const ACCEPT_BUDGET: f64 = 1e-9;
pub const ACCEPT_VALUE: f64 = 1e-8;
pub const ACCEPT_SLACK: f64 = 1e-8;
pub const NU_MAX: f64 = 1e6;
const LAMBDA_GRID: usize = 60;
const LAMBDA_MIN: f64 = 1e-6;
const LAMBDA_MAX: f64 = 1e6;

/// E[H·Z], E[U((Z−θ)₊)], E[D((θ−Z)₊)] at Z = x*(βH(T)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub budget: f64,
    pub reward: f64,
    pub penalty: f64,
}

impl Moments {
    /// E[U] − νE[D].
    pub fn value(&self, nu: f64) -> f64 {
        if nu == 0.0 {
            self.reward
        } else {
            self.reward - nu * self.penalty
        }
    }
}

/// Standard-normal scores of the branch breakpoints at multiplier β.
pub fn breakpoint_scores(law: &KernelLaw, sol: &PiecewiseSolution, beta: f64) -> Vec<f64> {
    let mut z: Vec<f64> = sol.breakpoints().into_iter().map(|y| law.score_of(y / beta)).collect();
    z.sort_by(f64::total_cmp);
    z
}

/// Integration window in the score variable. The gain branch grows like
/// exp(σγ₁/(1−γ₁)·z) for power rewards, so the upper end moves out with it.
fn window(law: &KernelLaw, sol: &PiecewiseSolution) -> (f64, f64) {
    let hi = match sol.pair.as_power() {
        Some(p) if p.reward_exponent < 1.0 => {
            let tilt = law.std_dev() * p.reward_exponent / (1.0 - p.reward_exponent);
            quadrature::WINDOW.max(tilt + 12.0)
        }
        _ => quadrature::WINDOW,
    };
    (-quadrature::WINDOW, hi)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { name: "beta", value: beta, constraint: "finite and > 0" })
    }
}

pub fn moments(law: &KernelLaw, sol: &PiecewiseSolution, beta: f64, q: &QuadratureSpec) -> Result<Moments> {
    check_beta(beta)?;
    let cuts = breakpoint_scores(law, sol, beta);
    let (lo, hi) = window(law, sol);
    let o = sol.objective;
    let pair = &sol.pair;
    let mut m = [0.0f64; 3];
    for (i, slot) in m.iter_mut().enumerate() {
        *slot = quadrature::normal_expectation_on(q, lo, hi, &cuts, |z| {
            let h = law.kernel_at(z);
            let x = sol.x_at(beta * h);
            match i {
                0 => h * x,
                1 if x > o.theta => pair.reward(x - o.theta),
                2 if x < o.theta => pair.penalty(o.theta - x),
                _ => 0.0,
            }
        });
    }
    let out = Moments { budget: m[0], reward: m[1], penalty: m[2] };
    if !(out.budget.is_finite() && out.reward.is_finite() && out.penalty.is_finite()) {
        return Err(Error::Numerical(format!("non-finite moments at β={beta:e}: {out:?}")));
    }
    Ok(out)
}

/// R(β) = E[H(T)·x*(βH(T))].
pub fn budget_r(law: &KernelLaw, sol: &PiecewiseSolution, beta: f64, q: &QuadratureSpec) -> Result<f64> {
    check_beta(beta)?;
    let cuts = breakpoint_scores(law, sol, beta);
    let (lo, hi) = window(law, sol);
    let r = quadrature::normal_expectation_on(q, lo, hi, &cuts, |z| {
        let h = law.kernel_at(z);
        h * sol.x_at(beta * h)
    });
    if r.is_finite() {
        Ok(r)
    } else {
        Err(Error::Numerical(format!("non-finite budget at β={beta:e}")))
    }
}

/// S(β) = P(x*(βH(T)) ≥ L), closed form through the floor threshold in y.
pub fn var_s(law: &KernelLaw, sol: &PiecewiseSolution, beta: f64) -> f64 {
    if sol.objective.floor <= 0.0 {
        return 1.0;
    }
    let y_l = sol.floor_sup();
    if y_l == f64::INFINITY {
        return 1.0;
    }
    if y_l <= 0.0 {
        return 0.0;
    }
    normal::cdf((law.location + (y_l / beta).ln()) / law.std_dev())
}

/// E[U] − νE[D] at a given β.
pub fn value_v(law: &KernelLaw, sol: &PiecewiseSolution, beta: f64, q: &QuadratureSpec) -> Result<f64> {
    Ok(moments(law, sol, beta, q)?.value(sol.objective.nu))
}

/// The β at which the budget binds, R(β) = x̃₀.
pub fn solve_beta(law: &KernelLaw, sol: &PiecewiseSolution, x0: f64, q: &QuadratureSpec) -> Result<f64> {
    crate::error::ensure_positive("x0", x0)?;
    // residual in log space: ln R(e^t) − ln x̃₀, decreasing in t
    let resid = |t: f64| -> Result<f64> {
        let r = budget_r(law, sol, t.exp(), q)?;
        Ok(if r > 0.0 { (r / x0).ln() } else { f64::NEG_INFINITY })
    };
    let (lo_cap, hi_cap) = (-690.0f64, 690.0f64);
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 0.0;
    let r0 = resid(0.0)?;
    if r0 > 0.0 {
        let mut step = 1.0;
        loop {
            hi = (lo + step).min(hi_cap);
            if resid(hi)? < 0.0 {
                break;
            }
            if hi >= hi_cap {
                return Err(Error::BracketNotFound { what: "budget multiplier", lo: lo.exp(), hi: hi.exp() });
            }
            lo = hi;
            step *= 2.0;
        }
    } else if r0 < 0.0 {
        let mut step = 1.0;
        loop {
            lo = (hi - step).max(lo_cap);
            if resid(lo)? > 0.0 {
                break;
            }
            if lo <= lo_cap {
                return Err(Error::BracketNotFound { what: "budget multiplier", lo: lo.exp(), hi: hi.exp() });
            }
            hi = lo;
            step *= 2.0;
        }
    } else {
        return Ok(1.0);
    }
    // f(lo) > 0 > f(hi); negate so the bracket runs negative → positive
    let t = roots::illinois("budget multiplier", lo, hi, false, |t| Ok(-resid(t)?), |_, v| v.abs() <= TOL_BUDGET)?;
    Ok(t.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ExistenceVerdict {
    Solved,
    /// The VaR level cannot be reached; `p` estimates sup over λ of S.
    VarInfeasible {
        p: f64,
    },
    BudgetInfeasible,
}

/// Solution of the λ/β levels at a fixed ν.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub nu: f64,
    pub lambda: f64,
    pub beta: f64,
    pub solution: PiecewiseSolution,
    pub moments: Moments,
    pub var_probability: f64,
    pub verdict: ExistenceVerdict,
}

impl InnerSolution {
    pub fn value(&self) -> f64 {
        self.moments.value(self.nu)
    }
}

/// The linearized problem at fixed (ν, λ): branch table, β and S.
#[allow(clippy::too_many_arguments)]
pub fn solve_fixed_lambda(
    law: &KernelLaw,
    pair: &PreferencePair,
    nu: f64,
    lambda: f64,
    theta: f64,
    floor: f64,
    x0: f64,
    q: &QuadratureSpec,
) -> Result<(PiecewiseSolution, f64, f64)> {
    let sol = classify_and_solve(&LinearizedObjective::new(nu, lambda, theta, floor), pair)?;
    let beta = solve_beta(law, &sol, x0, q)?;
    let s = var_s(law, &sol, beta);
    Ok((sol, beta, s))
}

/// λ* and β* at fixed ν.
#[allow(clippy::too_many_arguments)]
pub fn solve_lambda(
    law: &KernelLaw,
    pair: &PreferencePair,
    nu: f64,
    theta: f64,
    floor: f64,
    x0: f64,
    eps: f64,
    q: &QuadratureSpec,
) -> Result<InnerSolution> {
    let target = 1.0 - eps;
    let eval = |lambda: f64| solve_fixed_lambda(law, pair, nu, lambda, theta, floor, x0, q);
    let finish = |lambda: f64, (sol, beta, s): (PiecewiseSolution, f64, f64), verdict| -> Result<InnerSolution> {
        let moments = moments(law, &sol, beta, q)?;
        Ok(InnerSolution { nu, lambda, beta, solution: sol, moments, var_probability: s, verdict })
    };
    let budget_fail = |e: Error| -> Result<()> {
        match e {
            Error::BracketNotFound { what: "budget multiplier", .. } => Ok(()),
            e => Err(e),
        }
    };

    let at0 = match eval(0.0) {
        Ok(v) => v,
        Err(e) => {
            budget_fail(e)?;
            return Err(Error::Numerical("budget cannot bind at λ = 0".into()));
        }
    };
    if eps >= 1.0 || floor <= 0.0 || at0.2 >= target {
        return finish(0.0, at0, ExistenceVerdict::Solved);
    }

    // scan the geometric grid until the level is crossed
    let grid: Vec<f64> =
        (0..LAMBDA_GRID).map(|i| LAMBDA_MIN * (LAMBDA_MAX / LAMBDA_MIN).powf(i as f64 / (LAMBDA_GRID - 1) as f64)).collect();
    let mut prev = 0.0;
    let mut best = (0.0, at0.2);
    let mut bracket = None;
    for &lam in &grid {
        let s = eval(lam)?.2;
        if s > best.1 {
            best = (lam, s);
        }
        if s >= target {
            bracket = Some((prev, lam));
            break;
        }
        prev = lam;
    }
    if bracket.is_none() {
        // refine the supremum around the best grid point
        let i = grid.iter().position(|&g| g == best.0).unwrap_or(0);
        let a = if i == 0 { LAMBDA_MIN * 0.5 } else { grid[i - 1] };
        let b = if i + 1 < grid.len() { grid[i + 1] } else { LAMBDA_MAX };
        let (lam, s) = golden_max_log(|l| eval(l).map(|r| r.2), a, b)?;
        if s > best.1 {
            best = (lam, s);
        }
        if best.1 >= target {
            bracket = Some((a, best.0));
        } else {
            let r = eval(best.0)?;
            return finish(best.0, r, ExistenceVerdict::VarInfeasible { p: best.1 });
        }
    }
    let (lo, hi) = bracket.expect("bracket set above");
    // S(λ) − (1−ε) changes sign on (lo, hi]; keep the feasible end
    let resid = |l: f64| -> Result<f64> { Ok(eval(l)?.2 - target) };
    let lo = if lo == 0.0 { hi * 1e-12 } else { lo };
    let lam = if resid(lo)? >= 0.0 {
        lo
    } else {
        roots::illinois(
            "VaR multiplier",
            lo.ln(),
            hi.ln(),
            true,
            |t| resid(t.exp()),
            |t, v| v >= 0.0 && v * t.exp().max(1.0) <= 1e-12,
        )?
        .exp()
    };
    let r = eval(lam)?;
    if r.2 < target {
        return Err(Error::Numerical(format!("VaR search ended infeasible at λ={lam:e}")));
    }
    finish(lam, r, ExistenceVerdict::Solved)
}

fn golden_max_log<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (a.ln(), b.ln());
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c.exp())?;
    let mut fd = f(d.exp())?;
    for _ in 0..60 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d.exp())?;
        }
    }
    Ok(if fc >= fd { (c.exp(), fc) } else { (d.exp(), fd) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// v(ν*, x̃₀)
    pub value: f64,
    /// |R − x̃₀| / x̃₀
    pub budget: f64,
    /// S − (1−ε)
    pub var_margin: f64,
    /// λ*·(S − (1−ε))
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverResult {
    pub nu: f64,
    pub lambda: f64,
    pub beta: f64,
    pub label: CaseLabel,
    pub aux_initial: f64,
    pub epsilon: f64,
    pub moments: Moments,
    pub var_probability: f64,
    /// E[U]/E[D] at the solution.
    pub ratio: f64,
    pub residuals: Residuals,
    pub verdict: ExistenceVerdict,
    pub feasibility: Option<FeasibilityReport>,
    pub branch_table: BranchTableDump,
    #[serde(skip)]
    pub solution: PiecewiseSolution,
}

impl SolverResult {
    pub fn from_inner(inner: InnerSolution, law: &KernelLaw, x0: f64, eps: f64, q: &QuadratureSpec) -> Result<Self> {
        let r = budget_r(law, &inner.solution, inner.beta, q)?;
        let margin = inner.var_probability - (1.0 - eps);
        Ok(Self {
            nu: inner.nu,
            lambda: inner.lambda,
            beta: inner.beta,
            label: inner.solution.label,
            aux_initial: x0,
            epsilon: eps,
            moments: inner.moments,
            var_probability: inner.var_probability,
            ratio: inner.moments.reward / inner.moments.penalty,
            residuals: Residuals {
                value: inner.value(),
                budget: (r - x0).abs() / x0,
                var_margin: margin,
                slack: inner.lambda * margin,
            },
            verdict: inner.verdict,
            feasibility: None,
            branch_table: inner.solution.dump(),
            solution: inner.solution,
        })
    }

    pub fn is_solved(&self) -> bool {
        self.verdict == ExistenceVerdict::Solved
    }
}

/// ν* with v(ν*, x̃₀) = 0, running the λ/β levels at every trial ν.
#[allow(clippy::too_many_arguments)]
pub fn solve_nu(
    law: &KernelLaw,
    pair: &PreferencePair,
    x0: f64,
    theta: f64,
    floor: f64,
    eps: f64,
    q: &QuadratureSpec,
) -> Result<SolverResult> {
    let inner = |nu: f64| solve_lambda(law, pair, nu, theta, floor, x0, eps, q);
    let wrap = |s: InnerSolution| SolverResult::from_inner(s, law, x0, eps, q);

    let at0 = inner(0.0)?;
    if at0.verdict != ExistenceVerdict::Solved {
        return wrap(at0);
    }
    if !(at0.value() > 0.0) {
        return Err(Error::Numerical(format!("v(0) = {} is not positive", at0.value())));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        let s = inner(hi)?;
        if s.verdict != ExistenceVerdict::Solved {
            return wrap(s);
        }
        if s.value() < 0.0 {
            break;
        }
        if hi >= NU_MAX {
            return Err(Error::Numerical(format!("v(ν) stays non-negative up to ν = {NU_MAX:e} (v = {})", s.value())));
        }
        lo = hi;
        hi *= 2.0;
    }
    // v is decreasing; run on −v so the bracket goes negative → positive
    let reward = std::cell::Cell::new(at0.moments.reward);
    let mut infeasible: Option<InnerSolution> = None;
    let nu = roots::illinois(
        "fractional parameter",
        lo,
        hi,
        false,
        |nu| {
            let s = inner(nu)?;
            if s.verdict != ExistenceVerdict::Solved {
                let v = s.value();
                infeasible = Some(s);
                return Err(Error::Numerical(format!("inner solve failed at ν={nu} (v={v})")));
            }
            reward.set(s.moments.reward);
            Ok(-s.value())
        },
        |_, v| v.abs() <= ACCEPT_VALUE * 1e-2 * reward.get().min(1.0),
    );
    let nu = match nu {
        Ok(nu) => nu,
        Err(e) => {
            return match infeasible {
                Some(s) => wrap(s),
                None => Err(e),
            }
        }
    };
    wrap(inner(nu)?)
}

/// Feasibility check followed by the full nested solve.
pub fn solve(
    market: &MarketParams,
    pair: &PreferencePair,
    theta: f64,
    floor: f64,
    eps: f64,
    q: &QuadratureSpec,
) -> Result<SolverResult> {
    let report = market::feasibility(market, theta, floor, eps)?;
    if !report.is_feasible() {
        return Err(Error::InvalidParams(format!(
            "initial wealth {:.6} outside the feasible window ({:.6}, {:.6})",
            report.aux_initial, report.lower, report.upper
        )));
    }
    let law = market::kernel_law(market)?;
    let mut out = solve_nu(&law, pair, report.aux_initial, theta, floor, eps, q)?;
    out.feasibility = Some(report);
    Ok(out)
}

/// R, S and v at a user-supplied (ν, λ, β), with no optimality claim.
#[derive(Debug, Clone, Serialize)]
pub struct PointEvaluation {
    pub nu: f64,
    pub lambda: f64,
    pub beta: f64,
    pub label: CaseLabel,
    pub budget: f64,
    pub var_probability: f64,
    pub value: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_point(
    law: &KernelLaw,
    pair: &PreferencePair,
    nu: f64,
    lambda: f64,
    beta: f64,
    theta: f64,
    floor: f64,
    q: &QuadratureSpec,
) -> Result<PointEvaluation> {
    let sol = classify_and_solve(&LinearizedObjective::new(nu, lambda, theta, floor), pair)?;
    let m = moments(law, &sol, beta, q)?;
    Ok(PointEvaluation {
        nu,
        lambda,
        beta,
        label: sol.label,
        budget: m.budget,
        var_probability: var_s(law, &sol, beta),
        value: m.value(nu),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloMoments {
    pub samples: usize,
    pub budget: Estimate,
    pub var_probability: Estimate,
    pub reward: Estimate,
    pub penalty: Estimate,
    /// U − νD per sample, so the error of v is estimated directly.
    pub value: Estimate,
}

const MC_CHUNK: usize = 1 << 16;

/// Monte Carlo estimates of the same functionals from samples of H(T).
/// Chunks use independent ChaCha streams and are reduced in order, so the
/// result does not depend on the thread count.
pub fn monte_carlo(law: &KernelLaw, sol: &PiecewiseSolution, beta: f64, samples: usize, seed: u64) -> MonteCarloMoments {
    let chunks = samples.div_ceil(MC_CHUNK);
    let o = sol.objective;
    let pair = &sol.pair;
    let partial: Vec<[f64; 10]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut acc = [0.0f64; 10];
            for _ in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                let h = law.kernel_at(z);
                let x = sol.x_at(beta * h);
                let u = if x > o.theta { pair.reward(x - o.theta) } else { 0.0 };
                let d = if x < o.theta { pair.penalty(o.theta - x) } else { 0.0 };
                let vals = [h * x, if x >= o.floor { 1.0 } else { 0.0 }, u, d, u - o.nu * d];
                for (k, v) in vals.iter().enumerate() {
                    acc[2 * k] += v;
                    acc[2 * k + 1] += v * v;
                }
            }
            acc
        })
        .collect();
    let mut tot = [0.0f64; 10];
    for p in &partial {
        for k in 0..10 {
            tot[k] += p[k];
        }
    }
    let n = samples as f64;
    let est = |k: usize| {
        let mean = tot[2 * k] / n;
        let var = (tot[2 * k + 1] / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
        Estimate { mean, std_err: (var / n).sqrt() }
    };
    MonteCarloMoments { samples, budget: est(0), var_probability: est(1), reward: est(2), penalty: est(3), value: est(4) }
}

#[cfg(test)]
mod tests;
