//! Exhaustive grid maximization of f_{ν,λ}(x) − yx. Slow; meant for tests
//! and acceptance checks only.

use crate::preferences::{LinearizedObjective, PreferencePair};

/// Span covered by the uniform part of the grid; beyond it the grid is
/// geometric with ratio 1 + grid_step.
const UNIFORM_SPAN: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub x: f64,
    pub value: f64,
}

/// Upper end of the search interval, I₁(y) + θ + 10 (at least L + 10).
pub fn search_limit(obj: &LinearizedObjective, pair: &PreferencePair, y: f64) -> f64 {
    let xm = pair.inv_reward_marginal(y) + obj.theta + 10.0;
    xm.max(obj.floor + 10.0)
}

pub fn brute_force_oracle(obj: &LinearizedObjective, pair: &PreferencePair, y: f64, grid_step: f64) -> OracleResult {
    assert!(grid_step > 0.0);
    let g = |x: f64| obj.f(pair, x) - y * x;
    let x_max = search_limit(obj, pair, y);
    let mut best = OracleResult { x: 0.0, value: g(0.0) };
    let consider = |x: f64, best: &mut OracleResult| {
        let v = g(x);
        if v > best.value {
            *best = OracleResult { x, value: v };
        }
    };
    for x in [obj.theta, obj.floor] {
        if x >= 0.0 {
            consider(x, &mut best);
        }
    }
    let uniform_end = x_max.min(UNIFORM_SPAN);
    let n = (uniform_end / grid_step).ceil() as usize;
    for i in 0..=n {
        consider((i as f64 * grid_step).min(uniform_end), &mut best);
    }
    let mut x = uniform_end;
    while x < x_max {
        x = (x * (1.0 + grid_step)).min(x_max);
        consider(x, &mut best);
    }

    // polish inside the cell around the best grid point, piece by piece
    let width = if best.x <= uniform_end { grid_step } else { best.x * grid_step };
    let lo = (best.x - width).max(0.0);
    let hi = best.x + width;
    let mut cuts = vec![lo, hi];
    for k in [obj.theta, obj.floor] {
        if k > lo && k < hi {
            cuts.push(k);
        }
    }
    cuts.sort_by(f64::total_cmp);
    for w in cuts.windows(2) {
        let (x, _) = golden_max(&g, w[0], w[1]);
        consider(x, &mut best);
    }
    best
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    // stay off the endpoints, where the indicator may jump
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..100 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// A random pointwise problem: preference pair, objective and price y.
#[derive(Debug, Clone)]
pub struct Instance {
    pub pair: PreferencePair,
    pub objective: LinearizedObjective,
}

/// Draws a power-family instance. Strata spread the floor relative to θ and
/// switch the indicator off now and then so that every envelope
/// configuration is visited.
pub fn random_instance<R: rand::Rng + ?Sized>(rng: &mut R) -> Instance {
    let log_uniform = |rng: &mut R, lo: f64, hi: f64| (rng.random_range(lo.ln()..hi.ln())).exp();
    let g1 = rng.random_range(0.1..0.9);
    let convex = rng.random_bool(0.6);
    let g2 = if convex { rng.random_range(1.1..4.0) } else { rng.random_range(0.15..1.0) };
    let a = log_uniform(rng, 0.1, 10.0);
    let nu = if rng.random_bool(0.03) { 0.0 } else { log_uniform(rng, 1e-2, 1e2) };
    let lambda = if rng.random_bool(0.1) { 0.0 } else { log_uniform(rng, 1e-3, 30.0) };
    let theta = rng.random_range(0.5..10.0);
    let floor = match rng.random_range(0..10) {
        0 => theta,
        1..=4 => theta * rng.random_range(0.02..1.0),
        _ => theta * rng.random_range(1.0..3.0),
    };
    Instance { pair: PreferencePair::power(g1, g2, a), objective: LinearizedObjective::new(nu, lambda, theta, floor) }
}

/// Indifference residuals at the interior breakpoints: both neighbouring
/// branches must attain the same value of f(x) − yx there. Each residual is
/// scaled by 1 + |value| + y·x.
pub fn tangency_residuals(sol: &crate::envelope::PiecewiseSolution) -> Vec<f64> {
    let o = sol.objective;
    // the Loss branch meets the floor at x = L up to rounding
    let g = |x: f64| {
        let x = if (x - o.floor).abs() <= 1e-9 * (1.0 + o.floor) { o.floor } else { x };
        o.f(&sol.pair, x)
    };
    sol.branches
        .windows(2)
        .map(|w| {
            let y = w[0].y_hi;
            let xl = sol.branch_value(w[0].kind, y);
            let xr = sol.branch_value(w[1].kind, y);
            let vl = g(xl) - y * xl;
            let vr = g(xr) - y * xr;
            (vl - vr).abs() / (1.0 + vl.abs() + y * xl.abs())
        })
        .collect()
}
