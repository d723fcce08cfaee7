//! Gauss–Legendre panels for expectations against the standard normal.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::normal;

/// Points per Gauss–Legendre panel.
pub const PANEL_ORDER: usize = 16;
/// Half-width of the truncated standard-normal window.
pub const WINDOW: f64 = 40.0;
pub const MIN_NODES: usize = 64;
pub const DEFAULT_NODES: usize = 400;

/// Node budget for moment integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    pub nodes: usize,
    pub split_at_breakpoints: bool,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { nodes: DEFAULT_NODES, split_at_breakpoints: true }
    }
}

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes and weights on [-1, 1] by Newton iteration on P_n.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn panel() -> &'static GaussLegendre {
    static PANEL: OnceLock<GaussLegendre> = OnceLock::new();
    PANEL.get_or_init(|| GaussLegendre::new(PANEL_ORDER))
}

/// Panel edges on `[lo, hi]`: a uniform grid sized by the node budget,
/// refined at `breakpoints` when requested.
pub fn panel_edges(spec: &QuadratureSpec, lo: f64, hi: f64, breakpoints: &[f64]) -> Vec<f64> {
    let panels = (spec.nodes.max(MIN_NODES)).div_ceil(PANEL_ORDER);
    let mut edges: Vec<f64> = (0..=panels).map(|i| lo + (hi - lo) * i as f64 / panels as f64).collect();
    if spec.split_at_breakpoints {
        edges.extend(breakpoints.iter().copied().filter(|z| z.is_finite() && *z > lo && *z < hi));
        edges.sort_by(f64::total_cmp);
        edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
    edges
}

/// E[f(Z)] for Z ~ N(0, 1), truncated to [-WINDOW, WINDOW].
pub fn normal_expectation<F: FnMut(f64) -> f64>(spec: &QuadratureSpec, breakpoints: &[f64], f: F) -> f64 {
    normal_expectation_on(spec, -WINDOW, WINDOW, breakpoints, f)
}

/// E[f(Z) 1{lo ≤ Z ≤ hi}] for Z ~ N(0, 1).
pub fn normal_expectation_on<F: FnMut(f64) -> f64>(
    spec: &QuadratureSpec,
    lo: f64,
    hi: f64,
    breakpoints: &[f64],
    mut f: F,
) -> f64 {
    let gl = panel();
    let edges = panel_edges(spec, lo, hi, breakpoints);
    let mut acc = 0.0;
    for w in edges.windows(2) {
        acc += gl.integrate(w[0], w[1], |z| f(z) * normal::pdf(z));
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(PANEL_ORDER);
        // degree 2n-1 = 31 is exact
        let exact = |k: i32| if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
        for k in [0, 1, 2, 7, 10, 30, 31] {
            let v = gl.integrate(-1.0, 1.0, |x| x.powi(k));
            assert!((v - exact(k)).abs() < 1e-14, "k={k}: {v}");
        }
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn lognormal_moment() {
        // E[exp(c Z)] = exp(c^2/2)
        let spec = QuadratureSpec::default();
        for c in [-3.0, 0.5, 2.28, 10.0] {
            let v = normal_expectation(&spec, &[], |z| (c * z).exp());
            let e = (0.5 * c * c).exp();
            assert!(((v - e) / e).abs() < 1e-12, "c={c}");
        }
    }

    #[test]
    fn discontinuous_integrand_with_split() {
        let spec = QuadratureSpec::default();
        let k = 0.37;
        let v = normal_expectation(&spec, &[k], |z| if z >= k { 1.0 } else { 0.0 });
        assert!((v - normal::cdf(-k)).abs() < 1e-14);
    }
}
