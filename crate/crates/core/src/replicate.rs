//! Closed-form optimal wealth process and hedging strategy for the power
//! family, plus a path simulator for the hedged auxiliary wealth.
//!
//! The optimal payoff is written as a sum of atoms
//! Z* = Σ [g H(T)^α + b]·1{β*H(T) ∈ [h₁, h₂)}, with the interval held in the
//! y = β*H variable. Conditional expectations of each atom are lognormal
//! integrals with Φ/φ closed forms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelope::{BranchKind, PiecewiseSolution};
use crate::error::{Error, Result};
use crate::market::{self, MarketParams};
use crate::multipliers::Estimate;
use crate::normal;

/// Below this time to maturity the payoff is used directly.
pub const MATURITY_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffAtom {
    pub kind: BranchKind,
    pub g: f64,
    pub alpha: f64,
    pub b: f64,
    /// Interval for β*H(T).
    pub h1: f64,
    pub h2: f64,
}

impl PayoffAtom {
    fn is_null(&self) -> bool {
        self.g == 0.0 && self.b == 0.0
    }

    fn value(&self, h: f64) -> f64 {
        if self.g == 0.0 {
            self.b
        } else {
            self.g * h.powf(self.alpha) + self.b
        }
    }
}

/// Which π_P formula to use. `Printed` divides the bond leg by σ_S1;
/// `SigmaI` divides by σ_I, which is what matching the diffusion of the
/// auxiliary wealth gives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiFormula {
    Printed,
    #[default]
    SigmaI,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Payoff {
    pub beta: f64,
    pub atoms: Vec<PayoffAtom>,
}

/// Atoms of the branch table at multiplier β*. Requires a power pair.
pub fn atoms(sol: &PiecewiseSolution, beta: f64) -> Result<Payoff> {
    let p = sol
        .pair
        .as_power()
        .ok_or_else(|| Error::InvalidParams("closed-form replication needs power reward and penalty".into()))?;
    crate::error::ensure_positive("beta", beta)?;
    let o = sol.objective;
    let atoms = sol
        .branches
        .iter()
        .map(|br| {
            let (g, alpha, b) = match br.kind {
                BranchKind::Gain => {
                    let a = 1.0 / (p.reward_exponent - 1.0);
                    ((beta / p.reward_exponent).powf(a), a, o.theta)
                }
                BranchKind::Loss => {
                    let a = 1.0 / (p.penalty_exponent - 1.0);
                    (-(beta / (o.nu * p.penalty_scale * p.penalty_exponent)).powf(a), a, o.theta)
                }
                BranchKind::Floor => (0.0, 0.0, o.floor),
                BranchKind::Zero => (0.0, 0.0, 0.0),
            };
            PayoffAtom { kind: br.kind, g, alpha, b, h1: br.y_lo, h2: br.y_hi }
        })
        .collect();
    Ok(Payoff { beta, atoms })
}

impl Payoff {
    /// Z* at a terminal kernel value.
    pub fn terminal(&self, h: f64) -> f64 {
        let y = self.beta * h;
        let i = self.atoms.partition_point(|a| a.h1 <= y).saturating_sub(1);
        self.atoms[i].value(h)
    }

    /// Time-t constants for [`TimeSlice::wealth`] and [`TimeSlice::psi`].
    pub fn slice(&self, p: &MarketParams, t: f64) -> Result<TimeSlice<'_>> {
        if !(t.is_finite() && (0.0..=p.horizon).contains(&t)) {
            return Err(Error::Domain { name: "t", value: t, constraint: "0 <= t <= T" });
        }
        let tau = p.horizon - t;
        let sigma_sq = p.kernel_vol_sq() * tau;
        let r = -p.real_rate.integral(t, p.horizon);
        let sd = sigma_sq.sqrt();
        let ln_k = self.atoms.iter().map(|a| (a.alpha + 1.0) * r + 0.5 * a.alpha * (a.alpha + 1.0) * sigma_sq).collect();
        Ok(TimeSlice { payoff: self, t, at_maturity: tau < MATURITY_GUARD || !(sd > 0.0), r, sigma_sq, sd, ln_k })
    }
}

/// The closed forms at a fixed time.
#[derive(Debug, Clone)]
pub struct TimeSlice<'a> {
    payoff: &'a Payoff,
    pub t: f64,
    at_maturity: bool,
    /// R(t) = −∫_t^T r_r.
    pub r: f64,
    /// Σ(t)
    pub sigma_sq: f64,
    sd: f64,
    ln_k: Vec<f64>,
}

impl TimeSlice<'_> {
    /// (X̃*(t), ΣΨ) at kernel value H(t) = h.
    pub fn wealth_and_psi(&self, h: f64) -> (f64, f64) {
        let (x, ps, _) = self.derivatives(h);
        (x, ps)
    }

    /// (X̃*, ΣΨ, −H ∂ΣΨ/∂H) at kernel value h.
    pub fn derivatives(&self, h: f64) -> (f64, f64, f64) {
        if self.at_maturity {
            return (self.payoff.terminal(h), 0.0, 0.0);
        }
        let sd = self.sd;
        let base = 0.5 * self.sigma_sq - self.r;
        let ln_bh = (self.payoff.beta * h).ln();
        let ln_h = h.ln();
        let score = |edge: f64| {
            if edge <= 0.0 {
                f64::NEG_INFINITY
            } else if edge == f64::INFINITY {
                f64::INFINITY
            } else {
                (edge.ln() - ln_bh + base) / sd
            }
        };
        // u·φ(u), zero at ±∞
        let uphi = |u: f64| if u.is_finite() { u * normal::pdf(u) } else { 0.0 };
        let e_r = self.r.exp();
        let (mut x, mut psi, mut gamma) = (0.0, 0.0, 0.0);
        for (a, ln_k) in self.payoff.atoms.iter().zip(&self.ln_k) {
            if a.is_null() {
                continue;
            }
            let (s1, s2) = (score(a.h1), score(a.h2));
            if a.b != 0.0 {
                let (u1, u2) = (s1 - sd, s2 - sd);
                let c = a.b * e_r;
                x += c * (normal::cdf(u2) - normal::cdf(u1));
                psi += c * (normal::pdf(u2) - normal::pdf(u1)) / sd;
                gamma -= c * (uphi(u2) - uphi(u1)) / self.sigma_sq;
            }
            if a.g != 0.0 {
                let c = (a.alpha + 1.0) * sd;
                let (u1, u2) = (s1 - c, s2 - c);
                let coef = a.g * (a.alpha * ln_h + ln_k).exp();
                let (p1, p2) = (normal::cdf(u1), normal::cdf(u2));
                let dphi = normal::pdf(u2) - normal::pdf(u1);
                let ps = coef * (a.alpha * (p1 - p2) + dphi / sd);
                x += coef * (p2 - p1);
                psi += ps;
                gamma += -a.alpha * ps - coef * (a.alpha * dphi / sd + (uphi(u2) - uphi(u1)) / self.sigma_sq);
            }
        }
        (x, psi, gamma)
    }

    pub fn wealth(&self, h: f64) -> f64 {
        self.wealth_and_psi(h).0
    }

    /// ΣΨ = −H ∂X̃*/∂H.
    pub fn psi(&self, h: f64) -> f64 {
        self.wealth_and_psi(h).1
    }
}

/// X̃*(t) at kernel value `h`.
pub fn wealth_t(payoff: &Payoff, p: &MarketParams, t: f64, h: f64) -> Result<f64> {
    crate::error::ensure_positive("H(t)", h)?;
    Ok(payoff.slice(p, t)?.wealth(h))
}

/// ΣΨ at time t and kernel value `h`.
pub fn psi(payoff: &Payoff, p: &MarketParams, t: f64, h: f64) -> Result<f64> {
    crate::error::ensure_positive("H(t)", h)?;
    Ok(payoff.slice(p, t)?.psi(h))
}

/// Nominal holdings (π_P, π_S) given ΣΨ, X̃*, I(t) and F(t).
pub fn strategy_from_psi(p: &MarketParams, formula: PiFormula, psi: f64, x_aux: f64, i_t: f64, f_t: f64) -> Result<(f64, f64)> {
    if p.sigma_s2 == 0.0 {
        return Err(Error::SingularTransform("sigma_s2 = 0"));
    }
    let pi_s = (p.lambda_s * i_t * psi - p.sigma_c2 * f_t) / p.sigma_s2;
    let num = (p.lambda_i - p.sigma_i) * i_t * psi + p.sigma_i * i_t * x_aux - p.sigma_s1 * pi_s - p.sigma_c1 * f_t;
    let den = match formula {
        PiFormula::Printed => p.sigma_s1,
        PiFormula::SigmaI => p.sigma_i,
    };
    if den == 0.0 {
        return Err(Error::SingularTransform("zero volatility in the bond leg"));
    }
    Ok((num / den, pi_s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WealthSnapshot {
    pub t: f64,
    pub h: f64,
    pub wealth: f64,
    pub psi: f64,
    pub pi_p: f64,
    pub pi_s: f64,
    pub inflation: f64,
    pub contributions: f64,
}

pub fn strategy(
    payoff: &Payoff,
    p: &MarketParams,
    formula: PiFormula,
    t: f64,
    h: f64,
    i_t: f64,
    f_t: f64,
) -> Result<WealthSnapshot> {
    crate::error::ensure_positive("H(t)", h)?;
    let (wealth, psi) = payoff.slice(p, t)?.wealth_and_psi(h);
    let (pi_p, pi_s) = strategy_from_psi(p, formula, psi, wealth, i_t, f_t)?;
    Ok(WealthSnapshot { t, h, wealth, psi, pi_p, pi_s, inflation: i_t, contributions: f_t })
}

/// Time stepping for the hedged wealth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    /// Euler plus ½Ψ₂[(c·ΔW)² − |c|²Δt], where c = (λ_I − σ_I, λ_S) and
    /// Ψ₂ = −H ∂ΣΨ/∂H. The noise enters only through c·W, so this is the
    /// full Milstein term for a strategy whose diffusion depends on H alone.
    #[default]
    Milstein,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub formula: PiFormula,
    #[serde(default)]
    pub scheme: Scheme,
    /// Times at which H(t)X̃*(t) is averaged.
    pub check_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingalePoint {
    pub t: f64,
    /// H(t)·X̃*(t) from the closed form at the simulated H(t).
    pub closed_form: Estimate,
    /// H(t)·X̃(t) from the Euler-hedged wealth.
    pub hedged: Estimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathStats {
    pub paths: usize,
    pub steps: usize,
    pub formula: PiFormula,
    pub scheme: Scheme,
    pub aux_initial: f64,
    /// sqrt(Σ(X̃(T) − Z*)² / ΣZ*²) over paths.
    pub rms_relative_error: f64,
    pub martingale: Vec<MartingalePoint>,
    /// P(Z* ≥ L) from the simulated terminal kernel.
    pub var_probability: Estimate,
    pub reward: Estimate,
    pub penalty: Estimate,
    /// E[U]/E[D] with a delta-method standard error.
    pub ratio: Estimate,
    pub hedged_terminal_mean: f64,
}

const SIM_CHUNK: usize = 64;

fn normal_draw(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

struct StepPlan {
    dt: f64,
    t: f64,
    real: f64,
    nominal: f64,
    annuity: f64,
}

struct ChunkAcc {
    sq_err: f64,
    sq_ref: f64,
    mart: Vec<[f64; 4]>,
    sums: [f64; 7],
    hedged_sum: f64,
}

/// Simulates (I, c, H) exactly on the step grid and the hedged X̃ by Euler.
/// Paths are split into fixed chunks with their own ChaCha stream, so the
/// result does not depend on the thread count.
pub fn simulate_paths(payoff: &Payoff, sol: &PiecewiseSolution, p: &MarketParams, cfg: &SimConfig) -> Result<PathStats> {
    if cfg.paths < 2 || cfg.steps < 1 {
        return Err(Error::InvalidParams("need at least 2 paths and 1 step".into()));
    }
    let x0 = market::auxiliary_initial(p)?;
    let n = cfg.steps;
    let dt = p.horizon / n as f64;
    let plan: Vec<StepPlan> = (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            let t1 = if k + 1 == n { p.horizon } else { (k + 1) as f64 * dt };
            Ok(StepPlan {
                dt: t1 - t,
                t,
                real: p.real_rate.integral(t, t1),
                nominal: p.nominal_rate.integral(t, t1),
                annuity: market::annuity_factor(p, t)?,
            })
        })
        .collect::<Result<_>>()?;
    let slices: Vec<TimeSlice> = plan.iter().map(|s| payoff.slice(p, s.t)).collect::<Result<_>>()?;
    let checks: Vec<(usize, f64)> = cfg
        .check_times
        .iter()
        .map(|&t| {
            let k = ((t / dt).round() as usize).min(n);
            (k, k as f64 * dt)
        })
        .collect();
    let check_slices: Vec<TimeSlice> = checks.iter().map(|&(_, t)| payoff.slice(p, t.min(p.horizon))).collect::<Result<_>>()?;

    let kv = p.kernel_vol_sq();
    let (li, ls, si) = (p.lambda_i - p.sigma_i, p.lambda_s, p.sigma_i);
    let c_var = p.sigma_c1 * p.sigma_c1 + p.sigma_c2 * p.sigma_c2;
    let o = sol.objective;
    let pair = &sol.pair;

    let chunks = cfg.paths.div_ceil(SIM_CHUNK);
    let parts: Vec<Result<ChunkAcc>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(c as u64);
            let m = SIM_CHUNK.min(cfg.paths - c * SIM_CHUNK);
            let mut acc =
                ChunkAcc { sq_err: 0.0, sq_ref: 0.0, mart: vec![[0.0; 4]; checks.len()], sums: [0.0; 7], hedged_sum: 0.0 };
            for _ in 0..m {
                let (mut ln_h, mut ln_i, mut ln_c) = (0.0f64, p.i0.ln(), p.c0.ln());
                let mut x = x0;
                let record = |k: usize, ln_h: f64, x: f64, acc: &mut ChunkAcc| {
                    for (j, &(kc, _)) in checks.iter().enumerate() {
                        if kc == k {
                            let h = ln_h.exp();
                            let a = h * check_slices[j].wealth(h);
                            let b = h * x;
                            let e = &mut acc.mart[j];
                            e[0] += a;
                            e[1] += a * a;
                            e[2] += b;
                            e[3] += b * b;
                        }
                    }
                };
                record(0, ln_h, x, &mut acc);
                for (k, (s, sl)) in plan.iter().zip(&slices).enumerate() {
                    let sq = s.dt.sqrt();
                    let dwi = sq * normal_draw(&mut rng);
                    let dws = sq * normal_draw(&mut rng);
                    let h = ln_h.exp();
                    let i_t = ln_i.exp();
                    let f_t = ln_c.exp() * s.annuity;
                    let (_, ps, gamma) = sl.derivatives(h);
                    // the strategy is evaluated at the hedged wealth, not the closed form
                    let (pi_p, pi_s) = strategy_from_psi(p, cfg.formula, ps, x, i_t, f_t)?;
                    let (pt_p, pt_s) = market::forward_transform(p, i_t, f_t, i_t * x - f_t, pi_p, pi_s)?;
                    let a = pt_p * p.sigma_i + pt_s * p.sigma_s1;
                    let b = pt_s * p.sigma_s2;
                    x = x * s.real.exp() + a * (li * s.dt + dwi) + b * (ls * s.dt + dws);
                    if cfg.scheme == Scheme::Milstein {
                        let db = li * dwi + ls * dws;
                        x += 0.5 * gamma * (db * db - kv * s.dt);
                    }
                    ln_h += -s.real - 0.5 * kv * s.dt - li * dwi - ls * dws;
                    ln_i += s.nominal - s.real + (si * p.lambda_i - 0.5 * si * si) * s.dt + si * dwi;
                    ln_c += (p.mu - 0.5 * c_var) * s.dt + p.sigma_c1 * dwi + p.sigma_c2 * dws;
                    record(k + 1, ln_h, x, &mut acc);
                }
                let z = payoff.terminal(ln_h.exp());
                acc.sq_err += (x - z) * (x - z);
                acc.sq_ref += z * z;
                acc.hedged_sum += x;
                let ind = if z >= o.floor { 1.0 } else { 0.0 };
                let u = if z > o.theta { pair.reward(z - o.theta) } else { 0.0 };
                let d = if z < o.theta { pair.penalty(o.theta - z) } else { 0.0 };
                let s = &mut acc.sums;
                s[0] += ind;
                s[1] += ind * ind;
                s[2] += u;
                s[3] += u * u;
                s[4] += d;
                s[5] += d * d;
                s[6] += u * d;
            }
            Ok(acc)
        })
        .collect();

    let mut tot = ChunkAcc { sq_err: 0.0, sq_ref: 0.0, mart: vec![[0.0; 4]; checks.len()], sums: [0.0; 7], hedged_sum: 0.0 };
    for part in parts {
        let part = part?;
        tot.sq_err += part.sq_err;
        tot.sq_ref += part.sq_ref;
        tot.hedged_sum += part.hedged_sum;
        for (a, b) in tot.mart.iter_mut().zip(&part.mart) {
            for k in 0..4 {
                a[k] += b[k];
            }
        }
        for k in 0..7 {
            tot.sums[k] += part.sums[k];
        }
    }
    let np = cfg.paths as f64;
    let est = |s: f64, s2: f64| {
        let mean = s / np;
        let var = (s2 / np - mean * mean).max(0.0) * np / (np - 1.0);
        Estimate { mean, std_err: (var / np).sqrt() }
    };
    let s = &tot.sums;
    let (mu_u, mu_d) = (s[2] / np, s[4] / np);
    let var_u = (s[3] / np - mu_u * mu_u) * np / (np - 1.0);
    let var_d = (s[5] / np - mu_d * mu_d) * np / (np - 1.0);
    let cov = (s[6] / np - mu_u * mu_d) * np / (np - 1.0);
    let ratio = mu_u / mu_d;
    let ratio_var = (var_u / (mu_d * mu_d) + mu_u * mu_u * var_d / mu_d.powi(4) - 2.0 * mu_u * cov / mu_d.powi(3)) / np;
    Ok(PathStats {
        paths: cfg.paths,
        steps: cfg.steps,
        formula: cfg.formula,
        scheme: cfg.scheme,
        aux_initial: x0,
        rms_relative_error: (tot.sq_err / tot.sq_ref).sqrt(),
        martingale: checks
            .iter()
            .zip(&tot.mart)
            .map(|(&(_, t), e)| MartingalePoint { t, closed_form: est(e[0], e[1]), hedged: est(e[2], e[3]) })
            .collect(),
        var_probability: est(s[0], s[1]),
        reward: est(s[2], s[3]),
        penalty: est(s[4], s[5]),
        ratio: Estimate { mean: ratio, std_err: ratio_var.max(0.0).sqrt() },
        hedged_terminal_mean: tot.hedged_sum / np,
    })
}

/// One simulated path of the optimal strategy, sampled every `every` steps.
pub fn strategy_path(
    payoff: &Payoff,
    p: &MarketParams,
    formula: PiFormula,
    steps: usize,
    every: usize,
    seed: u64,
) -> Result<Vec<WealthSnapshot>> {
    if steps < 1 || every < 1 {
        return Err(Error::InvalidParams("steps and sampling interval must be >= 1".into()));
    }
    let dt = p.horizon / steps as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kv = p.kernel_vol_sq();
    let li = p.lambda_i - p.sigma_i;
    let si = p.sigma_i;
    let c_var = p.sigma_c1 * p.sigma_c1 + p.sigma_c2 * p.sigma_c2;
    let (mut ln_h, mut ln_i, mut ln_c) = (0.0f64, p.i0.ln(), p.c0.ln());
    let mut out = Vec::with_capacity(steps / every + 2);
    for k in 0..=steps {
        let t = if k == steps { p.horizon } else { k as f64 * dt };
        if k % every == 0 || k == steps {
            let f_t = ln_c.exp() * market::annuity_factor(p, t)?;
            out.push(strategy(payoff, p, formula, t, ln_h.exp(), ln_i.exp(), f_t)?);
        }
        if k == steps {
            break;
        }
        let t1 = if k + 1 == steps { p.horizon } else { (k + 1) as f64 * dt };
        let h = t1 - t;
        let dwi = h.sqrt() * normal_draw(&mut rng);
        let dws = h.sqrt() * normal_draw(&mut rng);
        let real = p.real_rate.integral(t, t1);
        ln_h += -real - 0.5 * kv * h - li * dwi - p.lambda_s * dws;
        ln_i += p.nominal_rate.integral(t, t1) - real + (si * p.lambda_i - 0.5 * si * si) * h + si * dwi;
        ln_c += (p.mu - 0.5 * c_var) * h + p.sigma_c1 * dwi + p.sigma_c2 * dws;
    }
    Ok(out)
}
