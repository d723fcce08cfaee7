//! Reward/penalty pairs and the linearized pointwise objective.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::roots;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PenaltyShape {
    Convex,
    Concave,
}

/// U(x) = x^γ₁, D(x) = A·x^γ₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerPair {
    pub reward_exponent: f64,
    pub penalty_exponent: f64,
    pub penalty_scale: f64,
}

impl PowerPair {
    pub fn new(reward_exponent: f64, penalty_exponent: f64, penalty_scale: f64) -> Self {
        Self { reward_exponent, penalty_exponent, penalty_scale }
    }
}

/// A pair given by closures. Missing derivatives fall back to central
/// differences.
#[derive(Clone)]
pub struct GeneralPair {
    pub reward: ScalarFn,
    pub reward_prime: Option<ScalarFn>,
    pub penalty: ScalarFn,
    pub penalty_prime: Option<ScalarFn>,
    pub shape: PenaltyShape,
}

impl fmt::Debug for GeneralPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralPair")
            .field("shape", &self.shape)
            .field("reward_prime", &self.reward_prime.is_some())
            .field("penalty_prime", &self.penalty_prime.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum PreferencePair {
    Power(PowerPair),
    General(GeneralPair),
}

fn central_diff(f: &ScalarFn, x: f64) -> f64 {
    let h = x * 1e-6 + 1e-9;
    let lo = (x - h).max(0.0);
    (f(x + h) - f(lo)) / (x + h - lo)
}

impl From<PowerPair> for PreferencePair {
    fn from(p: PowerPair) -> Self {
        PreferencePair::Power(p)
    }
}

impl PreferencePair {
    pub fn power(reward_exponent: f64, penalty_exponent: f64, penalty_scale: f64) -> Self {
        PreferencePair::Power(PowerPair::new(reward_exponent, penalty_exponent, penalty_scale))
    }

    pub fn as_power(&self) -> Option<&PowerPair> {
        match self {
            PreferencePair::Power(p) => Some(p),
            PreferencePair::General(_) => None,
        }
    }

    pub fn shape(&self) -> PenaltyShape {
        match self {
            PreferencePair::Power(p) if p.penalty_exponent > 1.0 => PenaltyShape::Convex,
            PreferencePair::Power(_) => PenaltyShape::Concave,
            PreferencePair::General(g) => g.shape,
        }
    }

    #[inline]
    pub fn reward(&self, x: f64) -> f64 {
        match self {
            PreferencePair::Power(p) => x.powf(p.reward_exponent),
            PreferencePair::General(g) => (g.reward)(x),
        }
    }

    #[inline]
    pub fn reward_prime(&self, x: f64) -> f64 {
        match self {
            PreferencePair::Power(p) => p.reward_exponent * x.powf(p.reward_exponent - 1.0),
            PreferencePair::General(g) => match &g.reward_prime {
                Some(d) => d(x),
                None => central_diff(&g.reward, x),
            },
        }
    }

    #[inline]
    pub fn penalty(&self, x: f64) -> f64 {
        match self {
            PreferencePair::Power(p) => p.penalty_scale * x.powf(p.penalty_exponent),
            PreferencePair::General(g) => (g.penalty)(x),
        }
    }

    #[inline]
    pub fn penalty_prime(&self, x: f64) -> f64 {
        match self {
            PreferencePair::Power(p) => p.penalty_scale * p.penalty_exponent * x.powf(p.penalty_exponent - 1.0),
            PreferencePair::General(g) => match &g.penalty_prime {
                Some(d) => d(x),
                None => central_diff(&g.penalty, x),
            },
        }
    }

    /// I₁ = (U′)⁻¹.
    #[inline]
    pub fn inv_reward_marginal(&self, y: f64) -> f64 {
        match self {
            PreferencePair::Power(p) => (y / p.reward_exponent).powf(1.0 / (p.reward_exponent - 1.0)),
            PreferencePair::General(_) => self.invert_marginal(y, true).unwrap_or(f64::NAN),
        }
    }

    /// I₂ = (D′)⁻¹. Only meaningful when D′ is strictly monotone.
    #[inline]
    pub fn inv_penalty_marginal(&self, y: f64) -> f64 {
        match self {
            PreferencePair::Power(p) => (y / (p.penalty_scale * p.penalty_exponent)).powf(1.0 / (p.penalty_exponent - 1.0)),
            PreferencePair::General(_) => self.invert_marginal(y, false).unwrap_or(f64::NAN),
        }
    }

    fn invert_marginal(&self, y: f64, reward: bool) -> Result<f64> {
        let d = |x: f64| {
            if reward {
                self.reward_prime(x)
            } else {
                self.penalty_prime(x)
            }
        };
        // sign of the slope of the marginal
        let decreasing = reward || self.shape() == PenaltyShape::Concave;
        let resid = |x: f64| if decreasing { d(x) - y } else { y - d(x) };
        let hi = roots::expand_up("inverse marginal", 1.0, 1e300, false, resid)?;
        let lo = roots::expand_down("inverse marginal", 1.0, 1e-300, true, resid)?;
        roots::bisect_log("inverse marginal", lo, hi.max(lo), resid)
    }
}

pub fn inverse_marginals(pair: &PreferencePair, y: f64) -> Result<(f64, f64)> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::Domain { name: "y", value: y, constraint: "finite and > 0" });
    }
    Ok((pair.inv_reward_marginal(y), pair.inv_penalty_marginal(y)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    /// Smooth, strictly increasing, zero at zero.
    H1,
    /// Inada conditions on U′.
    H2,
    /// Strict concavity of U.
    H3,
    /// Asymptotic relative risk aversion / elasticity.
    H4,
    /// The declared penalty shape disagrees with the sign of D″.
    Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub assumption: Assumption,
    pub detail: String,
}

fn violation(assumption: Assumption, detail: impl Into<String>) -> Violation {
    Violation { assumption, detail: detail.into() }
}

/// Checks H1–H4. Power pairs are checked analytically, general pairs on a
/// log-spaced grid of 10³ points (a heuristic).
pub fn validate(pair: &PreferencePair) -> Vec<Violation> {
    match pair {
        PreferencePair::Power(p) => validate_power(p),
        PreferencePair::General(_) => validate_sampled(pair),
    }
}

fn validate_power(p: &PowerPair) -> Vec<Violation> {
    let mut out = Vec::new();
    let g1 = p.reward_exponent;
    let g2 = p.penalty_exponent;
    if !(g1 > 0.0 && g1.is_finite()) {
        out.push(violation(Assumption::H1, format!("reward exponent {g1} must be > 0")));
    }
    if !(g2 > 0.0 && g2.is_finite() && p.penalty_scale > 0.0 && p.penalty_scale.is_finite()) {
        out.push(violation(Assumption::H1, format!("penalty A·x^γ₂ needs A > 0, γ₂ > 0 (got A={}, γ₂={g2})", p.penalty_scale)));
    }
    if g1 >= 1.0 {
        out.push(violation(Assumption::H2, format!("U′(0+) is finite for γ₁={g1}")));
        out.push(violation(Assumption::H3, format!("U is not strictly concave for γ₁={g1}")));
    }
    // −xU″/U′ = 1 − γ₁ is constant: H4 holds exactly when 0 < γ₁ < 1.
    if g1 >= 1.0 {
        out.push(violation(Assumption::H4, format!("relative risk aversion 1−γ₁ = {} ≤ 0", 1.0 - g1)));
    }
    out
}

fn validate_sampled(pair: &PreferencePair) -> Vec<Violation> {
    let mut out = Vec::new();
    let grid: Vec<f64> = (0..1000).map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / 999.0)).collect();
    if pair.reward(0.0).abs() > 1e-12 || pair.penalty(0.0).abs() > 1e-12 {
        out.push(violation(Assumption::H1, "U(0) or D(0) is not zero"));
    }
    if grid.windows(2).any(|w| pair.reward(w[1]) <= pair.reward(w[0]) || pair.penalty(w[1]) <= pair.penalty(w[0])) {
        out.push(violation(Assumption::H1, "U or D not strictly increasing on the sample grid"));
    }
    let u0 = pair.reward_prime(1e-12);
    let uinf = pair.reward_prime(1e12);
    if !(u0 > 1e3 * pair.reward_prime(1.0)) || !(uinf < 1e-3 * pair.reward_prime(1.0)) {
        out.push(violation(Assumption::H2, format!("U′ tails look bounded: U′(1e-12)={u0:e}, U′(1e12)={uinf:e}")));
    }
    let concave = grid.windows(3).all(|w| {
        let (a, b, c) = (w[0], w[1], w[2]);
        let s1 = (pair.reward(b) - pair.reward(a)) / (b - a);
        let s2 = (pair.reward(c) - pair.reward(b)) / (c - b);
        s2 < s1
    });
    if !concave {
        out.push(violation(Assumption::H3, "U has a non-negative second difference on the sample grid"));
    }
    let rra: Vec<f64> = [1e3, 1e4, 1e5, 1e6]
        .iter()
        .map(|&x| {
            let h = x * 1e-4;
            let d2 = (pair.reward_prime(x + h) - pair.reward_prime(x - h)) / (2.0 * h);
            -x * d2 / pair.reward_prime(x)
        })
        .collect();
    if rra.iter().any(|r| !(*r > 0.0) || !(-*r < 1.0)) {
        out.push(violation(Assumption::H4, format!("sampled relative risk aversion {rra:?}")));
    }
    let convex_d = grid.windows(3).all(|w| {
        let (a, b, c) = (w[0], w[1], w[2]);
        (pair.penalty(c) - pair.penalty(b)) / (c - b) >= (pair.penalty(b) - pair.penalty(a)) / (b - a) - 1e-12
    });
    let concave_d = grid.windows(3).all(|w| {
        let (a, b, c) = (w[0], w[1], w[2]);
        (pair.penalty(c) - pair.penalty(b)) / (c - b) <= (pair.penalty(b) - pair.penalty(a)) / (b - a) + 1e-12
    });
    let ok = match pair.shape() {
        PenaltyShape::Convex => convex_d,
        PenaltyShape::Concave => concave_d,
    };
    if !ok {
        out.push(violation(Assumption::Shape, format!("declared {:?} penalty disagrees with sampled D″", pair.shape())));
    }
    out
}

/// f_{ν,λ}(x) = U((x−θ)₊) − νD((θ−x)₊) + λ·1{x ≥ L}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizedObjective {
    pub nu: f64,
    pub lambda: f64,
    pub theta: f64,
    pub floor: f64,
}

impl LinearizedObjective {
    pub fn new(nu: f64, lambda: f64, theta: f64, floor: f64) -> Self {
        Self { nu, lambda, theta, floor }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("nu", self.nu), ("lambda", self.lambda)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain { name, value: v, constraint: "finite and >= 0" });
            }
        }
        crate::error::ensure_positive("theta", self.theta)?;
        crate::error::ensure_finite("floor", self.floor)?;
        Ok(())
    }

    /// f_ν (no indicator).
    #[inline]
    pub fn f_nu(&self, pair: &PreferencePair, x: f64) -> f64 {
        if x >= self.theta {
            pair.reward(x - self.theta)
        } else if self.nu == 0.0 {
            0.0
        } else {
            -self.nu * pair.penalty(self.theta - x)
        }
    }

    #[inline]
    pub fn f(&self, pair: &PreferencePair, x: f64) -> f64 {
        let bonus = if x >= self.floor { self.lambda } else { 0.0 };
        self.f_nu(pair, x) + bonus
    }

    pub fn eval_f(&self, pair: &PreferencePair, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain { name: "x", value: x, constraint: ">= 0" });
        }
        Ok(self.f(pair, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base() -> PreferencePair {
        PreferencePair::power(0.3, 2.2, 1.0)
    }

    #[test]
    fn baseline_pair_is_valid() {
        assert!(validate(&base()).is_empty());
        assert_eq!(base().shape(), PenaltyShape::Convex);
        assert_eq!(PreferencePair::power(0.3, 0.5, 1.0).shape(), PenaltyShape::Concave);
    }

    #[test]
    fn convex_reward_rejected() {
        let v = validate(&PreferencePair::power(1.5, 2.2, 1.0));
        assert!(v.iter().any(|v| v.assumption == Assumption::H3));
        let v = validate(&PreferencePair::power(1.0, 2.2, 1.0));
        assert!(v.iter().any(|v| v.assumption == Assumption::H2));
    }

    #[test]
    fn objective_examples() {
        let pair = base();
        let o = LinearizedObjective::new(1.0, 0.0, 6.0, 6.5);
        assert_eq!(o.eval_f(&pair, 6.0).unwrap(), 0.0);
        assert!((o.eval_f(&pair, 7.0).unwrap() - 1.0).abs() < 1e-15);
        let o = LinearizedObjective::new(1.0, 0.5, 6.0, 6.5);
        let v = o.eval_f(&pair, 6.2).unwrap();
        // 0.2^0.3 from 30-digit arithmetic
        assert!((v - 0.617_033_862_720_009_6).abs() < 1e-15, "{v}");
        assert!(o.eval_f(&pair, -1.0).is_err());
        let o = LinearizedObjective::new(1.0, 0.5, 6.0, 5.0);
        assert_eq!(o.eval_f(&pair, 6.0).unwrap(), 0.5);
    }

    #[test]
    fn inverse_marginal_examples() {
        let pair = base();
        let (i1, i2) = inverse_marginals(&pair, 0.3).unwrap();
        assert!((i1 - 1.0).abs() < 1e-15);
        assert!(i2 > 0.0);
        let (_, i2) = inverse_marginals(&pair, 2.2).unwrap();
        assert!((i2 - 1.0).abs() < 1e-15);
        let (i1, _) = inverse_marginals(&pair, 0.6).unwrap();
        assert!((i1 - 2f64.powf(-10.0 / 7.0)).abs() < 1e-15);
        assert!((i1 - 0.3715).abs() < 1e-4);
        assert!(inverse_marginals(&pair, 0.0).is_err());
    }

    fn general_from_power(g1: f64, g2: f64, a: f64, analytic: bool) -> PreferencePair {
        let shape = if g2 > 1.0 { PenaltyShape::Convex } else { PenaltyShape::Concave };
        PreferencePair::General(GeneralPair {
            reward: Arc::new(move |x: f64| x.powf(g1)),
            reward_prime: analytic.then(|| Arc::new(move |x: f64| g1 * x.powf(g1 - 1.0)) as ScalarFn),
            penalty: Arc::new(move |x: f64| a * x.powf(g2)),
            penalty_prime: analytic.then(|| Arc::new(move |x: f64| a * g2 * x.powf(g2 - 1.0)) as ScalarFn),
            shape,
        })
    }

    #[test]
    fn general_pair_inverse_by_bisection() {
        let g = general_from_power(0.3, 2.2, 1.0, true);
        let p = base();
        for y in [1e-4, 0.6, 3.0, 1e3] {
            let (a1, a2) = inverse_marginals(&g, y).unwrap();
            let (b1, b2) = inverse_marginals(&p, y).unwrap();
            assert!(((a1 - b1) / b1).abs() < 1e-12, "y={y}");
            assert!(((a2 - b2) / b2).abs() < 1e-12, "y={y}");
        }
        let g = general_from_power(0.4, 0.6, 2.0, true);
        let p = PreferencePair::power(0.4, 0.6, 2.0);
        let (_, a2) = inverse_marginals(&g, 0.8).unwrap();
        let (_, b2) = inverse_marginals(&p, 0.8).unwrap();
        assert!(((a2 - b2) / b2).abs() < 1e-12);
    }

    #[test]
    fn general_pair_validation() {
        assert!(validate(&general_from_power(0.3, 2.2, 1.0, true)).is_empty());
        assert!(validate(&general_from_power(0.3, 2.2, 1.0, false)).is_empty());
        let wrong_shape = match general_from_power(0.3, 2.2, 1.0, true) {
            PreferencePair::General(mut g) => {
                g.shape = PenaltyShape::Concave;
                PreferencePair::General(g)
            }
            _ => unreachable!(),
        };
        let v = validate(&wrong_shape);
        assert!(v.iter().any(|v| v.assumption == Assumption::Shape));
        let linear = general_from_power(1.0, 2.0, 1.0, true);
        let v = validate(&linear);
        assert!(v.iter().any(|v| v.assumption == Assumption::H2));
    }

    #[test]
    fn round_trip_on_log_grid() {
        for pair in [base(), PreferencePair::power(0.7, 1.3, 0.5), PreferencePair::power(0.2, 0.5, 3.0)] {
            for i in 0..=240 {
                let x = 10f64.powf(-6.0 + 12.0 * i as f64 / 240.0);
                let r1 = pair.inv_reward_marginal(pair.reward_prime(x));
                let r2 = pair.inv_penalty_marginal(pair.penalty_prime(x));
                assert!(((r1 - x) / x).abs() < 1e-10, "I1 at {x}");
                assert!(((r2 - x) / x).abs() < 1e-10, "I2 at {x}");
            }
        }
    }

    #[test]
    fn penalty_side_curvature_follows_shape() {
        let theta = 6.0;
        for (pair, sign) in [(base(), -1.0), (PreferencePair::power(0.3, 0.6, 1.0), 1.0)] {
            let o = LinearizedObjective::new(2.0, 0.0, theta, 0.0);
            let h = 0.01;
            for i in 1..599 {
                let x = i as f64 * h;
                let d2 = o.f_nu(&pair, x + h) - 2.0 * o.f_nu(&pair, x) + o.f_nu(&pair, x - h);
                assert!(sign * d2 >= -1e-12, "x={x} d2={d2}");
            }
        }
    }

    proptest! {
        #[test]
        fn indicator_structure(nu in 0.0f64..10.0, lam in 0.0f64..5.0, theta in 0.5f64..10.0, floor in 0.0f64..15.0, x in 0.0f64..30.0) {
            let pair = base();
            let o = LinearizedObjective::new(nu, lam, theta, floor);
            let o0 = LinearizedObjective::new(nu, 0.0, theta, floor);
            let d = o.f(&pair, x) - o.f_nu(&pair, x);
            let tol = 1e-12 * (1.0 + o.f_nu(&pair, x).abs());
            prop_assert!(d.abs() <= tol || (d - lam).abs() <= tol);
            prop_assert_eq!(o0.f(&pair, x), o0.f_nu(&pair, x));
        }

        #[test]
        fn monotone_above_reference(nu in 0.0f64..10.0, lam in 0.0f64..5.0, theta in 0.5f64..10.0, floor in 0.0f64..15.0, a in 0.0f64..20.0, b in 0.0f64..20.0, dl in 0.0f64..3.0) {
            let pair = base();
            let o = LinearizedObjective::new(nu, lam, theta, floor);
            let (lo, hi) = (theta + a.min(b), theta + a.max(b));
            prop_assert!(o.f(&pair, hi) >= o.f(&pair, lo));
            let o2 = LinearizedObjective::new(nu, lam + dl, theta, floor);
            prop_assert!(o2.f(&pair, lo) >= o.f(&pair, lo));
        }
    }
}
