//! Golden feasible scenarios used by the test suites and the acceptance
//! harness. Each one starts from a base market and rescales (x₀, c₀) into
//! the feasibility window at a fixed fraction.

use serde::Serialize;

use crate::error::Result;
use crate::market::{self, MarketParams, RateCurve};
use crate::preferences::PreferencePair;

#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub name: String,
    pub market: MarketParams,
    pub reward_exponent: f64,
    pub penalty_exponent: f64,
    pub penalty_scale: f64,
    pub theta: f64,
    pub floor: f64,
    pub epsilon: f64,
    /// Position of x̃₀ inside (lower, upper).
    pub fraction: f64,
    /// Factor applied to (x₀, c₀) of the base market.
    pub scale: f64,
}

impl Scenario {
    pub fn pair(&self) -> PreferencePair {
        PreferencePair::power(self.reward_exponent, self.penalty_exponent, self.penalty_scale)
    }
}

/// A market with yearly real rates rising from 1.5% by 5bp a year.
pub fn yearly_market() -> MarketParams {
    let mut m = MarketParams::baseline();
    m.real_rate = RateCurve::Yearly((0..40).map(|i| 0.015 + 0.0005 * i as f64).collect());
    m
}

pub fn short_market() -> MarketParams {
    let mut m = MarketParams::baseline();
    m.horizon = 20.0;
    m
}

#[allow(clippy::too_many_arguments)]
pub fn build(
    name: &str,
    base: &MarketParams,
    gammas: (f64, f64, f64),
    theta: f64,
    floor: f64,
    epsilon: f64,
    fraction: f64,
) -> Result<Scenario> {
    let (market, scale) = market::rescale_into_window(base, theta, floor, epsilon, fraction)?;
    Ok(Scenario {
        name: name.to_string(),
        market,
        reward_exponent: gammas.0,
        penalty_exponent: gammas.1,
        penalty_scale: gammas.2,
        theta,
        floor,
        epsilon,
        fraction,
        scale,
    })
}

/// name, market, (γ₁, γ₂, A), θ, L, ε, fraction
type Row<'a> = (&'a str, &'a MarketParams, (f64, f64, f64), f64, f64, f64, f64);

pub fn golden() -> Vec<Scenario> {
    let base = MarketParams::baseline();
    let yearly = yearly_market();
    let short = short_market();
    let rows: [Row; 20] = [
        ("base-a", &base, (0.3, 2.2, 1.0), 6.0, 6.5, 0.01, 0.5),
        ("base-b", &base, (0.3, 2.2, 1.0), 7.0, 5.0, 0.05, 0.3),
        ("base-c", &base, (0.3, 2.2, 1.0), 6.0, 6.0, 0.02, 0.6),
        ("base-d", &base, (0.3, 2.2, 1.0), 5.0, 3.0, 0.01, 0.8),
        ("base-e", &base, (0.7, 3.0, 0.5), 7.0, 5.0, 0.05, 0.3),
        ("base-f", &base, (0.7, 3.0, 0.5), 6.0, 6.0, 0.02, 0.6),
        ("base-g", &base, (0.5, 1.5, 2.0), 6.0, 6.5, 0.01, 0.5),
        ("base-h", &base, (0.3, 0.5, 1.0), 6.0, 6.5, 0.01, 0.5),
        ("base-i", &base, (0.3, 0.5, 1.0), 7.0, 5.0, 0.05, 0.3),
        ("base-j", &base, (0.3, 0.5, 1.0), 6.0, 6.0, 0.02, 0.6),
        ("base-k", &base, (0.5, 0.8, 1.5), 6.0, 6.5, 0.01, 0.5),
        ("base-free", &base, (0.3, 2.2, 1.0), 6.0, 6.5, 1.0, 0.5),
        ("yearly-a", &yearly, (0.3, 2.2, 1.0), 6.0, 6.5, 0.01, 0.5),
        ("yearly-b", &yearly, (0.5, 0.8, 1.5), 7.0, 5.0, 0.05, 0.3),
        ("short-a", &short, (0.3, 2.2, 1.0), 7.0, 5.0, 0.05, 0.3),
        ("short-b", &short, (0.5, 1.5, 2.0), 6.0, 6.0, 0.02, 0.6),
        ("short-c", &short, (0.7, 3.0, 0.5), 6.0, 6.5, 0.01, 0.5),
        ("short-d", &short, (0.3, 0.5, 1.0), 7.0, 5.0, 0.05, 0.3),
        ("short-e", &short, (0.5, 0.8, 1.5), 7.0, 5.0, 0.05, 0.3),
        ("short-f", &short, (0.3, 0.5, 1.0), 6.0, 6.5, 0.01, 0.5),
    ];
    rows.iter().map(|(n, m, g, th, l, e, f)| build(n, m, *g, *th, *l, *e, *f).expect("golden scenario is valid")).collect()
}
