//! Plot data: the Z*-vs-H(T) curve, its region sidecar and the strategy
//! time series. Floats use Rust's shortest round-trip formatting, so equal
//! inputs give byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use omega_pension::replicate::WealthSnapshot;
use omega_pension::{BranchKind, CaseLabel, KernelLaw, PiecewiseSolution};
use serde::Serialize;

pub const CURVE_POINTS: usize = 1000;
/// Half-width of the default H grid in kernel standard deviations.
const CURVE_SPREAD: f64 = 4.5;

/// Log-spaced H(T) grid, ascending. It spans ±4.5 standard deviations of
/// ln H(T), widened so that every breakpoint h = y/β has room on both sides.
pub fn curve_grid(law: &KernelLaw, sol: &PiecewiseSolution, beta: f64, points: usize) -> Vec<f64> {
    let s = law.std_dev();
    let mut lo = -law.location - CURVE_SPREAD * s;
    let mut hi = -law.location + CURVE_SPREAD * s;
    for y in sol.breakpoints() {
        let ln_h = (y / beta).ln();
        lo = lo.min(ln_h - 0.5);
        hi = hi.max(ln_h + 0.5);
    }
    let n = points.max(2);
    (0..n).map(|i| if i == n - 1 { hi.exp() } else { (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp() }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub kind: BranchKind,
    /// Branch interval in H(T); `None` stands for 0 or +∞.
    pub h_lo: Option<f64>,
    pub h_hi: Option<f64>,
    pub first_row: usize,
    pub last_row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRegions {
    pub label: CaseLabel,
    pub beta: f64,
    pub rows: usize,
    pub branch_count: usize,
    pub regions: Vec<Region>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub h: Vec<f64>,
    pub z: Vec<f64>,
    pub regions: CurveRegions,
}

fn finite(x: f64) -> Option<f64> {
    (x.is_finite() && x > 0.0).then_some(x)
}

pub fn emit_curve(law: &KernelLaw, sol: &PiecewiseSolution, beta: f64, points: usize) -> Curve {
    let h = curve_grid(law, sol, beta, points);
    let mut z = Vec::with_capacity(h.len());
    let mut regions: Vec<Region> = Vec::new();
    let mut current = usize::MAX;
    for (row, &hh) in h.iter().enumerate() {
        let y = beta * hh;
        let idx = sol.branches.partition_point(|b| b.y_lo <= y).saturating_sub(1);
        let b = sol.branches[idx];
        z.push(sol.branch_value(b.kind, y));
        if idx != current {
            current = idx;
            regions.push(Region {
                kind: b.kind,
                h_lo: finite(b.y_lo / beta),
                h_hi: finite(b.y_hi / beta),
                first_row: row,
                last_row: row,
            });
        } else if let Some(r) = regions.last_mut() {
            r.last_row = row;
        }
    }
    Curve { regions: CurveRegions { label: sol.label, beta, rows: h.len(), branch_count: sol.branches.len(), regions }, h, z }
}

impl Curve {
    pub fn csv(&self) -> String {
        let mut s = String::from("H,Z\n");
        for (h, z) in self.h.iter().zip(&self.z) {
            writeln!(s, "{h},{z}").unwrap();
        }
        s
    }
}

pub fn strategy_csv(rows: &[WealthSnapshot]) -> String {
    let mut s = String::from("t,H,X,psi,pi_P,pi_S,I,F\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{},{},{},{}", r.t, r.h, r.wealth, r.psi, r.pi_p, r.pi_s, r.inflation, r.contributions).unwrap();
    }
    s
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}
