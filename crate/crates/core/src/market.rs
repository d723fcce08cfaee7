//! Market model: rates, the pricing kernel law, the contribution annuity and
//! the auxiliary-wealth transform.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::normal;

/// A deterministic short rate: constant, or piecewise constant on unit
/// intervals `[k, k+1)` with the last entry extended to the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateCurve {
    Constant(f64),
    Yearly(Vec<f64>),
}

impl RateCurve {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            RateCurve::Constant(r) => *r,
            RateCurve::Yearly(v) => {
                let k = (t.max(0.0).floor() as usize).min(v.len() - 1);
                v[k]
            }
        }
    }

    /// ∫_{t0}^{t1} r(s) ds, exact.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        match self {
            RateCurve::Constant(r) => r * (t1 - t0),
            RateCurve::Yearly(_) => pieces(self, t0, t1).map(|(a, b, r)| r * (b - a)).sum(),
        }
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        match self {
            RateCurve::Constant(r) => ensure_finite(name, *r).map(|_| ()),
            RateCurve::Yearly(v) => {
                if v.is_empty() {
                    return Err(Error::InvalidParams(format!("{name}: empty rate table")));
                }
                for r in v {
                    ensure_finite(name, *r)?;
                }
                Ok(())
            }
        }
    }
}

/// Sub-intervals of [t0, t1] on which the curve is constant.
fn pieces(curve: &RateCurve, t0: f64, t1: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
    let mut a = t0;
    std::iter::from_fn(move || {
        if a >= t1 {
            return None;
        }
        let b = match curve {
            RateCurve::Constant(_) => t1,
            RateCurve::Yearly(v) => {
                let k = a.floor();
                if (k as usize) + 1 >= v.len() {
                    t1
                } else {
                    (k + 1.0).min(t1)
                }
            }
        };
        let r = curve.at(a);
        let out = (a, b, r);
        a = b;
        Some(out)
    })
}

/// Coefficients of the inflation-linked market with stochastic contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub horizon: f64,
    pub nominal_rate: RateCurve,
    pub real_rate: RateCurve,
    pub sigma_i: f64,
    pub sigma_s1: f64,
    pub sigma_s2: f64,
    pub mu: f64,
    pub sigma_c1: f64,
    pub sigma_c2: f64,
    pub lambda_i: f64,
    pub lambda_s: f64,
    pub i0: f64,
    pub c0: f64,
    pub x0: f64,
}

impl MarketParams {
    /// The reference parameter set (40-year horizon).
    pub fn baseline() -> Self {
        Self {
            horizon: 40.0,
            nominal_rate: RateCurve::Constant(0.04),
            real_rate: RateCurve::Constant(0.02),
            sigma_i: 0.4,
            sigma_s1: 0.3,
            sigma_s2: 0.4,
            mu: 0.1,
            sigma_c1: 0.2,
            sigma_c2: 0.3,
            lambda_i: 0.2,
            lambda_s: 0.3,
            i0: 1.0,
            c0: 0.8,
            x0: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("horizon", self.horizon)?;
        self.nominal_rate.validate("nominal_rate")?;
        self.real_rate.validate("real_rate")?;
        ensure_positive("sigma_i", self.sigma_i)?;
        ensure_positive("sigma_s2", self.sigma_s2)?;
        ensure_positive("i0", self.i0)?;
        for (name, v) in [("sigma_s1", self.sigma_s1), ("mu", self.mu), ("lambda_i", self.lambda_i), ("lambda_s", self.lambda_s)]
        {
            ensure_finite(name, v)?;
        }
        for (name, v) in [("sigma_c1", self.sigma_c1), ("sigma_c2", self.sigma_c2), ("c0", self.c0), ("x0", self.x0)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain { name, value: v, constraint: "finite and >= 0" });
            }
        }
        Ok(())
    }

    /// Risk-neutral drift of the contribution rate, μ − σ_C1 λ_I − σ_C2 λ_S.
    pub fn contribution_drift(&self) -> f64 {
        self.mu - self.sigma_c1 * self.lambda_i - self.sigma_c2 * self.lambda_s
    }

    /// Squared market price of risk carried by the kernel, (λ_I − σ_I)² + λ_S².
    pub fn kernel_vol_sq(&self) -> f64 {
        let d = self.lambda_i - self.sigma_i;
        d * d + self.lambda_s * self.lambda_s
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t.is_finite() && (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::Domain { name: "t", value: t, constraint: "0 <= t <= T" })
        }
    }
}

/// ∫_0^len e^{k u} du.
fn exp_integral(k: f64, len: f64) -> f64 {
    let x = k * len;
    if x.abs() < 1e-300 {
        len
    } else {
        x.exp_m1() / k
    }
}

/// F(t)/c(t) = ∫_t^T exp[κ(s−t) − ∫_t^s r_n] ds with κ the contribution drift.
pub fn annuity_factor(p: &MarketParams, t: f64) -> Result<f64> {
    p.check_time(t)?;
    let kappa = p.contribution_drift();
    let mut acc = 0.0;
    let mut log_disc = 0.0f64;
    for (a, b, r) in pieces(&p.nominal_rate, t, p.horizon) {
        let k = kappa - r;
        acc += log_disc.exp() * exp_integral(k, b - a);
        log_disc += k * (b - a);
    }
    Ok(acc)
}

/// Present value at `t` of future contributions given the current rate `c_t`.
pub fn annuity_f(p: &MarketParams, t: f64, c_t: f64) -> Result<f64> {
    Ok(c_t * annuity_factor(p, t)?)
}

/// x̃₀ = (x₀ + F(0)) / i₀.
pub fn auxiliary_initial(p: &MarketParams) -> Result<f64> {
    p.validate()?;
    Ok((p.x0 + annuity_f(p, 0.0, p.c0)?) / p.i0)
}

/// H(T) ~ exp(−a − x) with x ~ N(0, Σ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelLaw {
    pub location: f64,
    pub variance: f64,
    /// ∫₀ᵀ r_r ds.
    pub real_integral: f64,
}

impl KernelLaw {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// E[H(T)] = exp(−∫ r_r).
    pub fn real_discount(&self) -> f64 {
        (-self.real_integral).exp()
    }

    /// H(T) at standard-normal score `z` (x = √Σ z).
    pub fn kernel_at(&self, z: f64) -> f64 {
        (-self.location - self.std_dev() * z).exp()
    }

    /// The score `z` with kernel value `h`.
    pub fn score_of(&self, h: f64) -> f64 {
        (-self.location - h.ln()) / self.std_dev()
    }
}

pub fn kernel_law(p: &MarketParams) -> Result<KernelLaw> {
    p.validate()?;
    let variance = p.kernel_vol_sq() * p.horizon;
    if !(variance > 0.0) {
        return Err(Error::InvalidParams("degenerate market: λ_I = σ_I and λ_S = 0 give a deterministic kernel".into()));
    }
    let real_integral = p.real_rate.integral(0.0, p.horizon);
    Ok(KernelLaw { location: real_integral + 0.5 * variance, variance, real_integral })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeasibilityVerdict {
    Feasible,
    ViolatesLower,
    ViolatesUpper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub lower: f64,
    pub upper: f64,
    pub aux_initial: f64,
    /// ε-quantile of N(0, Σ).
    pub quantile: f64,
    pub verdict: FeasibilityVerdict,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.verdict == FeasibilityVerdict::Feasible
    }
}

/// L·E[H 1{x ≥ q(ε)}] in closed form.
pub fn lower_bound(law: &KernelLaw, floor: f64, eps: f64) -> f64 {
    if floor <= 0.0 || eps >= 1.0 {
        return 0.0;
    }
    let s = law.std_dev();
    let q = s * normal::quantile(eps);
    floor * (-law.location + 0.5 * law.variance).exp() * normal::cdf(-q / s - s)
}

/// Same quantity by direct quadrature; used to cross-check [`lower_bound`].
pub fn lower_bound_by_quadrature(law: &KernelLaw, floor: f64, eps: f64) -> f64 {
    if floor <= 0.0 || eps >= 1.0 {
        return 0.0;
    }
    let zq = normal::quantile(eps);
    let spec = crate::quadrature::QuadratureSpec { nodes: 4000, split_at_breakpoints: true };
    floor * crate::quadrature::normal_expectation(&spec, &[zq], |z| if z >= zq { law.kernel_at(z) } else { 0.0 })
}

pub fn feasibility(p: &MarketParams, theta: f64, floor: f64, eps: f64) -> Result<FeasibilityReport> {
    ensure_positive("theta", theta)?;
    if !(floor.is_finite() && floor >= 0.0) {
        return Err(Error::Domain { name: "floor", value: floor, constraint: "finite and >= 0" });
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Domain { name: "epsilon", value: eps, constraint: "0 <= epsilon <= 1" });
    }
    let law = kernel_law(p)?;
    let x = auxiliary_initial(p)?;
    let lower = lower_bound(&law, floor, eps);
    let upper = law.real_discount() * theta;
    let verdict = if x <= lower {
        FeasibilityVerdict::ViolatesLower
    } else if x >= upper {
        FeasibilityVerdict::ViolatesUpper
    } else {
        FeasibilityVerdict::Feasible
    };
    Ok(FeasibilityReport { lower, upper, aux_initial: x, quantile: law.std_dev() * normal::quantile(eps), verdict })
}

/// Scales x₀ and c₀ by a common factor so that x̃₀ sits at `fraction` of
/// the way from the lower to the upper feasibility bound. x̃₀ is linear in
/// (x₀, c₀), so the scale is exact. Returns the rescaled market and the
/// factor.
pub fn rescale_into_window(p: &MarketParams, theta: f64, floor: f64, eps: f64, fraction: f64) -> Result<(MarketParams, f64)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Domain { name: "fraction", value: fraction, constraint: "0 < fraction < 1" });
    }
    let r = feasibility(p, theta, floor, eps)?;
    rescale_to(p, r.lower + fraction * (r.upper - r.lower))
}

/// Scales x₀ and c₀ jointly so that x̃₀ equals `target`.
pub fn rescale_to(p: &MarketParams, target: f64) -> Result<(MarketParams, f64)> {
    ensure_positive("target", target)?;
    let scale = target / auxiliary_initial(p)?;
    let mut out = p.clone();
    out.x0 *= scale;
    out.c0 *= scale;
    Ok((out, scale))
}

/// Maps nominal holdings (π_P, π_S) to the auxiliary holdings (π̃_P, π̃_S).
pub fn forward_transform(p: &MarketParams, i_t: f64, f_t: f64, x_t: f64, pi_p: f64, pi_s: f64) -> Result<(f64, f64)> {
    check_transform(p, i_t)?;
    let pt_s = (pi_s * p.sigma_s2 + p.sigma_c2 * f_t) / (i_t * p.sigma_s2);
    let rhs = (pi_p * p.sigma_i + pi_s * p.sigma_s1 + p.sigma_c1 * f_t - p.sigma_i * (x_t + f_t)) / i_t;
    let pt_p = (rhs - pt_s * p.sigma_s1) / p.sigma_i;
    Ok((pt_p, pt_s))
}

/// Inverse of [`forward_transform`].
pub fn back_transform(p: &MarketParams, i_t: f64, f_t: f64, x_t: f64, pt_p: f64, pt_s: f64) -> Result<(f64, f64)> {
    check_transform(p, i_t)?;
    let pi_s = (i_t * pt_s * p.sigma_s2 - p.sigma_c2 * f_t) / p.sigma_s2;
    let lhs = i_t * (pt_p * p.sigma_i + pt_s * p.sigma_s1);
    let pi_p = (lhs - pi_s * p.sigma_s1 - p.sigma_c1 * f_t + p.sigma_i * (x_t + f_t)) / p.sigma_i;
    Ok((pi_p, pi_s))
}

fn check_transform(p: &MarketParams, i_t: f64) -> Result<()> {
    if p.sigma_s2 == 0.0 {
        return Err(Error::SingularTransform("sigma_s2 = 0"));
    }
    if p.sigma_i == 0.0 {
        return Err(Error::SingularTransform("sigma_i = 0"));
    }
    ensure_positive("I(t)", i_t)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn riemann_factor(p: &MarketParams, t: f64, n: usize) -> f64 {
        // midpoint rule on the defining integral
        let h = (p.horizon - t) / n as f64;
        let kappa = p.contribution_drift();
        (0..n)
            .map(|i| {
                let s = t + (i as f64 + 0.5) * h;
                (kappa * (s - t) - p.nominal_rate.integral(t, s)).exp()
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn baseline_annuity() {
        let p = MarketParams::baseline();
        let f0 = annuity_f(&p, 0.0, 0.8).unwrap();
        let closed = 0.8 * (1.0 - (-2.8f64).exp()) / 0.07;
        assert!((f0 - closed).abs() < 1e-12);
        assert!((f0 - 10.7335).abs() < 1e-4);
        let r = 0.8 * riemann_factor(&p, 0.0, 1_000_000);
        assert!((f0 - r).abs() < 1e-8);
        assert_eq!(annuity_f(&p, 40.0, 0.8).unwrap(), 0.0);
    }

    #[test]
    fn zero_net_rate_gives_horizon() {
        let mut p = MarketParams::baseline();
        p.mu = 0.04 + 0.2 * 0.2 + 0.3 * 0.3;
        assert!((annuity_factor(&p, 0.0).unwrap() - 40.0).abs() < 1e-12);
    }

    #[test]
    fn annuity_domain() {
        let p = MarketParams::baseline();
        assert!(annuity_factor(&p, -0.1).is_err());
        assert!(annuity_factor(&p, 40.5).is_err());
    }

    #[test]
    fn annuity_decreasing() {
        let p = MarketParams::baseline();
        let mut prev = f64::INFINITY;
        for i in 0..=80 {
            let v = annuity_factor(&p, i as f64 * 0.5).unwrap();
            assert!(v < prev || v == 0.0);
            prev = v;
        }
    }

    #[test]
    fn yearly_rates_match_riemann() {
        let mut p = MarketParams::baseline();
        p.horizon = 5.5;
        p.nominal_rate = RateCurve::Yearly(vec![0.01, 0.03, 0.05, 0.02]);
        for t in [0.0, 0.3, 2.0, 4.7] {
            let a = annuity_factor(&p, t).unwrap();
            let r = riemann_factor(&p, t, 200_000);
            assert!((a - r).abs() < 1e-9, "t={t}: {a} vs {r}");
        }
        assert!((p.nominal_rate.integral(0.5, 5.5) - (0.005 + 0.03 + 0.05 + 0.02 * 2.5)).abs() < 1e-15);
    }

    #[test]
    fn auxiliary_examples() {
        let mut p = MarketParams::baseline();
        assert!((auxiliary_initial(&p).unwrap() - 11.7335).abs() < 1e-4);
        p.c0 = 0.0;
        p.x0 = 3.0;
        p.i0 = 2.0;
        assert_eq!(auxiliary_initial(&p).unwrap(), 1.5);
        p.x0 = 0.0;
        assert_eq!(auxiliary_initial(&p).unwrap(), 0.0);
    }

    #[test]
    fn baseline_kernel_law() {
        let law = kernel_law(&MarketParams::baseline()).unwrap();
        assert!((law.variance - 5.2).abs() < 1e-12);
        assert!((law.location - 3.4).abs() < 1e-12);
        let mut p = MarketParams::baseline();
        p.lambda_i = p.sigma_i;
        p.lambda_s = 0.0;
        assert!(kernel_law(&p).is_err());
    }

    #[test]
    fn kernel_mean_by_quadrature() {
        let law = kernel_law(&MarketParams::baseline()).unwrap();
        let spec = crate::quadrature::QuadratureSpec::default();
        let m = crate::quadrature::normal_expectation(&spec, &[], |z| law.kernel_at(z));
        assert!(((m - law.real_discount()) / law.real_discount()).abs() < 1e-10);
    }

    #[test]
    fn baseline_violates_upper() {
        let p = MarketParams::baseline();
        let r = feasibility(&p, 6.0, 6.5, 0.01).unwrap();
        assert!((r.upper - 6.0 * (-0.8f64).exp()).abs() < 1e-12);
        assert!((r.upper - 2.695_974).abs() < 1e-6);
        assert_eq!(r.verdict, FeasibilityVerdict::ViolatesUpper);
    }

    #[test]
    fn lower_bound_trivial_cases() {
        let law = kernel_law(&MarketParams::baseline()).unwrap();
        assert_eq!(lower_bound(&law, 0.0, 0.01), 0.0);
        assert_eq!(lower_bound(&law, 6.5, 1.0), 0.0);
    }

    #[test]
    fn lower_bound_closed_form_matches_quadrature() {
        let law = kernel_law(&MarketParams::baseline()).unwrap();
        for (l, e) in [(6.5, 0.01), (2.0, 0.2), (10.0, 0.5), (1.0, 1e-4)] {
            let c = lower_bound(&law, l, e);
            let q = lower_bound_by_quadrature(&law, l, e);
            assert!(((c - q) / c).abs() < 1e-10, "{c} vs {q}");
        }
    }

    #[test]
    fn transform_identity_scaling() {
        let mut p = MarketParams::baseline();
        p.sigma_c1 = 0.0;
        p.sigma_c2 = 0.0;
        let (a, b) = back_transform(&p, 1.7, 0.0, 0.0, 0.3, -0.2).unwrap();
        assert!((a - 1.7 * 0.3).abs() < 1e-15 && (b + 1.7 * 0.2).abs() < 1e-15);
        p.sigma_s2 = 0.0;
        assert!(matches!(back_transform(&p, 1.0, 0.0, 0.0, 0.0, 0.0), Err(Error::SingularTransform(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn transform_round_trip(
            i_t in 0.05f64..20.0, f_t in 0.0f64..50.0, x_t in -20.0f64..50.0,
            pp in -100.0f64..100.0, ps in -100.0f64..100.0,
        ) {
            let p = MarketParams::baseline();
            let (tp, ts) = forward_transform(&p, i_t, f_t, x_t, pp, ps).unwrap();
            let (bp, bs) = back_transform(&p, i_t, f_t, x_t, tp, ts).unwrap();
            prop_assert!((bp - pp).abs() <= 1e-10 * (1.0 + pp.abs()));
            prop_assert!((bs - ps).abs() <= 1e-10 * (1.0 + ps.abs()));
            // residuals of both defining relations
            let r1 = ts * p.sigma_s2 - (ps * p.sigma_s2 + p.sigma_c2 * f_t) / i_t;
            let r2 = tp * p.sigma_i + ts * p.sigma_s1
                - (pp * p.sigma_i + ps * p.sigma_s1 + p.sigma_c1 * f_t - p.sigma_i * (x_t + f_t)) / i_t;
            prop_assert!(r1.abs() < 1e-10 && r2.abs() < 1e-10);
        }

        #[test]
        fn feasibility_monotone_in_floor_and_eps(l1 in 0.0f64..20.0, dl in 0.0f64..5.0, e1 in 0.001f64..0.999, de in 0.0f64..0.5) {
            let mut p = MarketParams::baseline();
            p.c0 = 0.0;
            p.x0 = 1.0;
            let e2 = (e1 - de).max(0.0);
            let a = feasibility(&p, 6.0, l1, e1).unwrap();
            let b = feasibility(&p, 6.0, l1 + dl, e2).unwrap();
            prop_assert!(b.lower >= a.lower);
            if a.verdict == FeasibilityVerdict::ViolatesLower {
                prop_assert_ne!(b.verdict, FeasibilityVerdict::Feasible);
            }
        }
    }
}
