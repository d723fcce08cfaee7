use super::*;
use crate::envelope::{Branch, BranchKind, ThresholdSet};
use crate::scenarios::{self, Scenario};

fn q() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn golden(name: &str) -> Scenario {
    scenarios::golden().into_iter().find(|s| s.name == name).unwrap()
}

fn law_of(s: &Scenario) -> KernelLaw {
    market::kernel_law(&s.market).unwrap()
}

fn x0_of(s: &Scenario) -> f64 {
    market::auxiliary_initial(&s.market).unwrap()
}

fn constant_solution(c: f64) -> PiecewiseSolution {
    PiecewiseSolution {
        label: CaseLabel::convex(1),
        branches: vec![Branch { kind: BranchKind::Floor, y_lo: 0.0, y_hi: f64::INFINITY }],
        thresholds: ThresholdSet::default(),
        objective: LinearizedObjective::new(1.0, 0.0, 6.0, c),
        pair: PreferencePair::power(0.3, 2.2, 1.0),
    }
}

fn fixed(s: &Scenario, nu: f64, lambda: f64) -> PiecewiseSolution {
    classify_and_solve(&LinearizedObjective::new(nu, lambda, s.theta, s.floor), &s.pair()).unwrap()
}

#[test]
fn constant_payoff_prices_at_real_discount() {
    let s = golden("base-a");
    let law = law_of(&s);
    let sol = constant_solution(3.0);
    for beta in [1e-3, 1.0, 50.0] {
        let r = budget_r(&law, &sol, beta, &q()).unwrap();
        let want = 3.0 * (-0.8f64).exp();
        assert!((r - want).abs() <= 1e-12 * want, "β={beta}: {r} vs {want}");
    }
}

#[test]
fn budget_vanishes_for_large_beta() {
    let s = golden("base-b");
    let law = law_of(&s);
    let sol = fixed(&s, 2.0, 0.0);
    assert!(budget_r(&law, &sol, 1e8, &q()).unwrap() < 1e-6);
    // and blows up towards zero
    assert!(budget_r(&law, &sol, 1e-6, &q()).unwrap() > 1e3);
}

#[test]
fn budget_is_nonincreasing_in_beta() {
    let s = golden("base-c");
    let law = law_of(&s);
    let sol = fixed(&s, 10.0, 3.0);
    let mut prev = f64::INFINITY;
    for i in 0..60 {
        let beta = 10f64.powf(-3.0 + i as f64 * 0.1);
        let r = budget_r(&law, &sol, beta, &q()).unwrap();
        assert!(r > 0.0 && r <= prev * (1.0 + 1e-12), "β={beta}");
        prev = r;
    }
}

#[test]
fn beta_binds_the_budget_and_brackets() {
    for name in ["base-a", "base-h", "short-b"] {
        let s = golden(name);
        let law = law_of(&s);
        let x0 = x0_of(&s);
        let sol = fixed(&s, 5.0, 1.0);
        let beta = solve_beta(&law, &sol, x0, &q()).unwrap();
        let r = budget_r(&law, &sol, beta, &q()).unwrap();
        assert!((r - x0).abs() <= ACCEPT_BUDGET * x0, "{name}");
        assert!(budget_r(&law, &sol, beta / 2.0, &q()).unwrap() >= x0);
        assert!(budget_r(&law, &sol, beta * 2.0, &q()).unwrap() <= x0);
    }
}

#[test]
fn beta_is_continuous_in_lambda() {
    let s = golden("base-a");
    let law = law_of(&s);
    let x0 = x0_of(&s);
    let b = |l: f64| solve_beta(&law, &fixed(&s, 20.0, l), x0, &q()).unwrap();
    let b0 = b(10.0);
    let gaps: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|d| (b(10.0 + d) - b0).abs()).collect();
    assert!(gaps[0] >= gaps[1] && gaps[1] >= gaps[2], "{gaps:?}");
    assert!(gaps[2] < 1e-4 * b0);
}

#[test]
fn var_probability_closed_form_matches_indicator_quadrature() {
    let s = golden("base-a");
    let law = law_of(&s);
    for (nu, lambda, beta) in [(20.0, 0.0, 5.0), (20.0, 40.0, 7.0), (3.0, 2.0, 0.5)] {
        let sol = fixed(&s, nu, lambda);
        let closed = var_s(&law, &sol, beta);
        // the indicator can jump inside a gain branch, so split there as well
        let mut cuts = breakpoint_scores(&law, &sol, beta);
        cuts.push(law.score_of(sol.floor_sup() / beta));
        let quad = quadrature::normal_expectation(&q(), &cuts, |z| {
            if sol.x_at(beta * law.kernel_at(z)) >= s.floor - 1e-12 {
                1.0
            } else {
                0.0
            }
        });
        assert!((closed - quad).abs() < 1e-10, "{closed} vs {quad}");
    }
}

#[test]
fn var_probability_is_one_without_floor() {
    let s = golden("base-a");
    let law = law_of(&s);
    let sol = classify_and_solve(&LinearizedObjective::new(5.0, 0.0, 6.0, 0.0), &s.pair()).unwrap();
    assert_eq!(var_s(&law, &sol, 3.0), 1.0);
}

#[test]
fn var_probability_nondecreasing_in_lambda() {
    for name in ["base-a", "base-h", "short-a"] {
        let s = golden(name);
        let law = law_of(&s);
        let x0 = x0_of(&s);
        let mut prev = 0.0;
        for i in 0..25 {
            let lambda = if i == 0 { 0.0 } else { 10f64.powf(-3.0 + 0.25 * i as f64) };
            let (_, _, sv) = solve_fixed_lambda(&law, &s.pair(), 10.0, lambda, s.theta, s.floor, x0, &q()).unwrap();
            assert!(sv >= prev - 1e-12, "{name} λ={lambda}: {sv} < {prev}");
            prev = sv;
        }
    }
}

#[test]
fn value_at_zero_is_positive_and_finite() {
    for s in scenarios::golden() {
        let law = law_of(&s);
        let inner = solve_lambda(&law, &s.pair(), 0.0, s.theta, s.floor, x0_of(&s), s.epsilon, &q()).unwrap();
        let v = inner.value();
        assert!(v > 0.0 && v.is_finite(), "{}", s.name);
    }
}

fn v_of(s: &Scenario, nu: f64) -> f64 {
    let law = law_of(s);
    solve_lambda(&law, &s.pair(), nu, s.theta, s.floor, x0_of(s), s.epsilon, &q()).unwrap().value()
}

#[test]
fn value_nonincreasing_and_midpoint_convex_in_nu() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for name in ["base-b", "base-i"] {
        let s = golden(name);
        let law = law_of(&s);
        let x0 = x0_of(&s);
        let nu_star = solve_nu(&law, &s.pair(), x0, s.theta, s.floor, s.epsilon, &q()).unwrap().nu;
        let grid: Vec<f64> = (0..10).map(|i| 2.0 * nu_star * i as f64 / 9.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&n| v_of(&s, n)).collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "{name}: {vals:?}");
        }
        for _ in 0..4 {
            let a = rng.random_range(0.0..2.0 * nu_star);
            let b = rng.random_range(0.0..2.0 * nu_star);
            let mid = v_of(&s, 0.5 * (a + b));
            let avg = 0.5 * (v_of(&s, a) + v_of(&s, b));
            assert!(mid <= avg + 1e-9 * avg.abs().max(1.0), "{name}: a={a} b={b}");
        }
    }
}

#[test]
fn vacuous_var_gives_zero_lambda() {
    let s = golden("base-a");
    let law = law_of(&s);
    for nu in [0.0, 5.0, 50.0] {
        let r = solve_lambda(&law, &s.pair(), nu, s.theta, s.floor, x0_of(&s), 1.0, &q()).unwrap();
        assert_eq!(r.lambda, 0.0);
    }
}

#[test]
fn binding_var_holds_with_equality() {
    for name in ["base-a", "base-c", "base-h", "short-a"] {
        let s = golden(name);
        let law = law_of(&s);
        let r = solve_nu(&law, &s.pair(), x0_of(&s), s.theta, s.floor, s.epsilon, &q()).unwrap();
        assert!(r.lambda > 0.0, "{name}");
        assert!((r.var_probability - (1.0 - s.epsilon)).abs() <= 1e-8, "{name}");
    }
}

#[test]
fn non_binding_floors_give_identical_solutions() {
    let base = MarketParams::baseline();
    let (m, _) = market::rescale_into_window(&base, 6.0, 5.5, 0.01, 0.8).unwrap();
    let pair = PreferencePair::power(0.3, 2.2, 1.0);
    let a = solve(&m, &pair, 6.0, 5.0, 0.01, &q()).unwrap();
    let b = solve(&m, &pair, 6.0, 5.5, 0.01, &q()).unwrap();
    assert_eq!(a.lambda, 0.0);
    assert_eq!(b.lambda, 0.0);
    assert_eq!(a.nu, b.nu);
    assert_eq!(a.beta, b.beta);
    assert_eq!(a.solution.branches, b.solution.branches);
}

#[test]
fn solved_results_meet_residual_bounds() {
    for name in ["base-a", "base-d", "base-free", "short-e"] {
        let s = golden(name);
        let r = solve(&s.market, &s.pair(), s.theta, s.floor, s.epsilon, &q()).unwrap();
        assert!(r.is_solved());
        assert!(r.residuals.budget <= ACCEPT_BUDGET, "{name}");
        assert!(r.residuals.value.abs() <= ACCEPT_VALUE, "{name}");
        assert!(r.residuals.slack.abs() <= ACCEPT_SLACK, "{name}");
        assert!((r.ratio - r.nu).abs() <= 1e-6 * r.nu, "{name}");
    }
}

#[test]
fn value_brackets_over_nu_range() {
    let s = golden("base-a");
    assert!(v_of(&s, 0.0) > 0.0);
    assert!(v_of(&s, NU_MAX) < 0.0);
}

/// Three-level payoffs: `hi` on z ≥ z1, L on z0 ≤ z < z1, 0 below z0, with
/// `hi` set by the budget. Their ratio has a closed form.
fn digital_ratio(s: &Scenario, law: &KernelLaw, x0: f64, z0: f64, z1: f64) -> Option<f64> {
    let sd = law.std_dev();
    let eh_above = |c: f64| (-law.location + 0.5 * law.variance).exp() * normal::cdf(-c - sd);
    let mid_cost = s.floor * (eh_above(z0) - eh_above(z1));
    let hi = (x0 - mid_cost) / eh_above(z1);
    if !(hi >= s.floor && hi > s.theta) || normal::cdf(z0) > s.epsilon {
        return None;
    }
    let pair = s.pair();
    let p_hi = normal::cdf(-z1);
    let p_mid = normal::cdf(z1) - normal::cdf(z0);
    let p_lo = normal::cdf(z0);
    let mut up = pair.reward(hi - s.theta) * p_hi;
    let mut down = pair.penalty(s.theta) * p_lo;
    if s.floor > s.theta {
        up += pair.reward(s.floor - s.theta) * p_mid;
    } else {
        down += pair.penalty(s.theta - s.floor) * p_mid;
    }
    Some(up / down)
}

#[test]
fn hand_built_competitors_do_not_beat_the_optimum() {
    for name in ["base-a", "base-c", "short-a"] {
        let s = golden(name);
        let law = law_of(&s);
        let x0 = x0_of(&s);
        let r = solve_nu(&law, &s.pair(), x0, s.theta, s.floor, s.epsilon, &q()).unwrap();
        let mut tried = 0;
        for e in [0.25, 0.5, 1.0] {
            let z0 = normal::quantile(s.epsilon * e);
            for dz in [0.5, 1.0, 2.0, 3.0] {
                if let Some(ratio) = digital_ratio(&s, &law, x0, z0, z0 + dz) {
                    tried += 1;
                    assert!(ratio <= r.nu * (1.0 + 1e-9), "{name}: {ratio} > {}", r.nu);
                }
            }
        }
        assert!(tried >= 3, "{name}: only {tried} feasible competitors");
        // the constant payoff at budget sits below θ and earns nothing
        assert!(x0 / law.real_discount() < s.theta);
    }
}

#[test]
fn monte_carlo_agrees_with_quadrature() {
    for name in ["base-a", "base-h", "short-e"] {
        let s = golden(name);
        let law = law_of(&s);
        let r = solve_nu(&law, &s.pair(), x0_of(&s), s.theta, s.floor, s.epsilon, &q()).unwrap();
        let mc = monte_carlo(&law, &r.solution, r.beta, 400_000, 7);
        let check = |what: &str, e: Estimate, v: f64| {
            assert!((e.mean - v).abs() <= 3.0 * e.std_err + 1e-12, "{name} {what}: {} ± {} vs {v}", e.mean, e.std_err);
        };
        check("R", mc.budget, r.moments.budget);
        check("S", mc.var_probability, r.var_probability);
        check("E[U]", mc.reward, r.moments.reward);
        check("E[D]", mc.penalty, r.moments.penalty);
        check("v", mc.value, r.moments.value(r.nu));
    }
}

#[test]
fn monte_carlo_is_independent_of_thread_count() {
    let s = golden("base-a");
    let law = law_of(&s);
    let sol = fixed(&s, 20.0, 10.0);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| monte_carlo(&law, &sol, 6.0, 200_000, 3))
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn diagnostic_point_evaluation_runs_on_infeasible_markets() {
    let base = MarketParams::baseline();
    let law = market::kernel_law(&base).unwrap();
    assert!(!market::feasibility(&base, 6.0, 6.5, 0.01).unwrap().is_feasible());
    let p = evaluate_point(&law, &PreferencePair::power(0.3, 2.2, 1.0), 20.0, 5.0, 1.0, 6.0, 6.5, &q()).unwrap();
    assert!(p.budget > 0.0 && (0.0..=1.0).contains(&p.var_probability));
    assert!(solve(&base, &PreferencePair::power(0.3, 2.2, 1.0), 6.0, 6.5, 0.01, &q()).is_err());
}
