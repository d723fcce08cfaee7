//! Pointwise maximization of f_{ν,λ}(x) − yx over x ≥ 0 via the concave
//! envelope of f_{ν,λ}.
//!
//! The maximizer is a nonincreasing step-and-arc function of y. It is stored
//! as a table of branches on half-open y-intervals `[y_lo, y_hi)` together
//! with the label of the envelope configuration that produced it.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::preferences::{LinearizedObjective, PenaltyShape, PreferencePair};
use crate::roots;

pub mod oracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchKind {
    /// x = θ + I₁(y)
    Gain,
    /// x = θ − I₂(y/ν)
    Loss,
    /// x = L
    Floor,
    /// x = 0
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub kind: BranchKind,
    pub y_lo: f64,
    pub y_hi: f64,
}

const ROMAN: [&str; 14] = ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII", "XIII", "XIV"];

/// Envelope configuration: convex penalty cases 1–14, concave penalty cases 1–6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct CaseLabel {
    pub shape: PenaltyShape,
    pub case: u8,
}

impl CaseLabel {
    pub const fn convex(case: u8) -> Self {
        Self { shape: PenaltyShape::Convex, case }
    }

    pub const fn concave(case: u8) -> Self {
        Self { shape: PenaltyShape::Concave, case }
    }

    pub fn all() -> Vec<CaseLabel> {
        (1..=14).map(Self::convex).chain((1..=6).map(Self::concave)).collect()
    }

    pub fn roman(&self) -> &'static str {
        ROMAN[(self.case - 1) as usize]
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.shape {
            PenaltyShape::Convex => "convex",
            PenaltyShape::Concave => "concave",
        };
        write!(f, "{s}-{}", self.roman())
    }
}

impl From<CaseLabel> for String {
    fn from(c: CaseLabel) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for CaseLabel {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        let (shape, r) = s.split_once('-').ok_or_else(|| format!("bad case label {s:?}"))?;
        let shape = match shape {
            "convex" => PenaltyShape::Convex,
            "concave" => PenaltyShape::Concave,
            _ => return Err(format!("bad case label {s:?}")),
        };
        let case = ROMAN.iter().position(|x| *x == r).ok_or_else(|| format!("bad case label {s:?}"))? as u8 + 1;
        let max = if shape == PenaltyShape::Convex { 14 } else { 6 };
        if case > max {
            return Err(format!("bad case label {s:?}"));
        }
        Ok(Self { shape, case })
    }
}

/// Thresholds reached by the classifier. Names follow the usual z-indexing;
/// `_p` marks the primed pair used when L = θ.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub k: Option<f64>,
    pub z1: Option<f64>,
    pub z2: Option<f64>,
    pub z_prime: Option<f64>,
    pub z3: Option<f64>,
    pub z4: Option<f64>,
    pub z5: Option<f64>,
    pub z6: Option<f64>,
    pub z7: Option<f64>,
    pub z6_p: Option<f64>,
    pub z7_p: Option<f64>,
    pub z8: Option<f64>,
    pub z9: Option<f64>,
    pub z10: Option<f64>,
    pub z11: Option<f64>,
    pub z12: Option<f64>,
    pub z13: Option<f64>,
    /// concave penalty: tangent from (0, f(0)) to the gain arc
    pub z: Option<f64>,
    pub l0: Option<f64>,
    pub z_tilde0: Option<f64>,
    pub z_hat: Option<f64>,
    pub z_hat0: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PiecewiseSolution {
    pub label: CaseLabel,
    pub branches: Vec<Branch>,
    pub thresholds: ThresholdSet,
    pub objective: LinearizedObjective,
    pub pair: PreferencePair,
}

/// JSON-friendly view of a branch table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchTableDump {
    pub label: CaseLabel,
    pub objective: LinearizedObjective,
    pub breakpoints: Vec<f64>,
    pub kinds: Vec<BranchKind>,
    pub thresholds: ThresholdSet,
}

impl PiecewiseSolution {
    /// x*(y) without domain checks; y must be > 0.
    #[inline]
    pub fn x_at(&self, y: f64) -> f64 {
        let kind = self.kind_at(y);
        self.branch_value(kind, y)
    }

    #[inline]
    pub fn kind_at(&self, y: f64) -> BranchKind {
        let i = self.branches.partition_point(|b| b.y_lo <= y);
        self.branches[i.saturating_sub(1)].kind
    }

    #[inline]
    pub fn branch_value(&self, kind: BranchKind, y: f64) -> f64 {
        let o = &self.objective;
        match kind {
            BranchKind::Gain => o.theta + self.pair.inv_reward_marginal(y),
            BranchKind::Loss => o.theta - self.pair.inv_penalty_marginal(y / o.nu),
            BranchKind::Floor => o.floor,
            BranchKind::Zero => 0.0,
        }
    }

    /// Interior breakpoints (strictly increasing, finite).
    pub fn breakpoints(&self) -> Vec<f64> {
        self.branches.iter().skip(1).map(|b| b.y_lo).collect()
    }

    /// sup{y : x*(y) ≥ L}; `f64::INFINITY` when x* ≥ L everywhere.
    pub fn floor_sup(&self) -> f64 {
        let o = &self.objective;
        let l = o.floor;
        for b in &self.branches {
            let sup = match b.kind {
                BranchKind::Floor => b.y_hi,
                BranchKind::Zero => {
                    if l <= 0.0 {
                        b.y_hi
                    } else {
                        b.y_lo
                    }
                }
                BranchKind::Gain => {
                    if l <= o.theta {
                        b.y_hi
                    } else {
                        self.pair.reward_prime(l - o.theta).clamp(b.y_lo, b.y_hi)
                    }
                }
                BranchKind::Loss => {
                    if l >= o.theta {
                        b.y_lo
                    } else if l <= 0.0 {
                        b.y_hi
                    } else {
                        (o.nu * self.pair.penalty_prime(o.theta - l)).clamp(b.y_lo, b.y_hi)
                    }
                }
            };
            if sup < b.y_hi {
                return sup;
            }
        }
        f64::INFINITY
    }

    pub fn dump(&self) -> BranchTableDump {
        BranchTableDump {
            label: self.label,
            objective: self.objective,
            breakpoints: self.breakpoints(),
            kinds: self.branches.iter().map(|b| b.kind).collect(),
            thresholds: self.thresholds.clone(),
        }
    }
}

/// x*(y) with a domain check on y.
pub fn pointwise_opt(sol: &PiecewiseSolution, y: f64) -> Result<f64> {
    if !(y > 0.0) || y.is_nan() {
        return Err(Error::Domain { name: "y", value: y, constraint: "> 0" });
    }
    Ok(sol.x_at(y))
}

/// Thresholds reached on the classifier path for `obj`.
pub fn thresholds(obj: &LinearizedObjective, pair: &PreferencePair) -> Result<ThresholdSet> {
    Ok(classify_and_solve(obj, pair)?.thresholds)
}

pub fn classify_and_solve(obj: &LinearizedObjective, pair: &PreferencePair) -> Result<PiecewiseSolution> {
    obj.validate()?;
    if pair.shape() == PenaltyShape::Convex && obj.nu > 0.0 {
        if let Some(p) = pair.as_power() {
            if p.penalty_exponent <= 1.0 {
                return Err(Error::InvalidParams("convex penalty needs γ₂ > 1".into()));
            }
        }
    }
    let mut w = Walker::new(obj, pair);
    let (label, table) = match pair.shape() {
        PenaltyShape::Convex => w.convex()?,
        PenaltyShape::Concave => w.concave()?,
    };
    let branches = table.finish()?;
    Ok(PiecewiseSolution { label, branches, thresholds: w.t, objective: *obj, pair: pair.clone() })
}

struct Table {
    branches: Vec<Branch>,
    last: f64,
}

impl Table {
    fn new() -> Self {
        Self { branches: Vec::new(), last: 0.0 }
    }

    /// Appends `kind` on `[last, y_hi)`; empty intervals are dropped and
    /// adjacent branches of one kind are merged.
    fn then(mut self, kind: BranchKind, y_hi: f64) -> Result<Self> {
        if y_hi.is_nan() {
            return Err(Error::Numerical(format!("NaN breakpoint after {kind:?}")));
        }
        if y_hi < self.last * (1.0 - 1e-9) {
            return Err(Error::Invariant(format!("breakpoints out of order: {kind:?} ends at {y_hi:e} before {:e}", self.last)));
        }
        if y_hi <= self.last {
            return Ok(self);
        }
        match self.branches.last_mut() {
            Some(b) if b.kind == kind => b.y_hi = y_hi,
            _ => self.branches.push(Branch { kind, y_lo: self.last, y_hi }),
        }
        self.last = y_hi;
        Ok(self)
    }

    fn finish(self) -> Result<Vec<Branch>> {
        Ok(self.then(BranchKind::Zero, f64::INFINITY)?.branches)
    }
}

use BranchKind::{Floor, Gain, Loss};

struct Walker<'a> {
    pair: &'a PreferencePair,
    nu: f64,
    lambda: f64,
    theta: f64,
    floor: f64,
    t: ThresholdSet,
}

impl<'a> Walker<'a> {
    fn new(obj: &LinearizedObjective, pair: &'a PreferencePair) -> Self {
        // A non-positive floor makes the indicator constant.
        let lambda = if obj.floor <= 0.0 { 0.0 } else { obj.lambda };
        Self { pair, nu: obj.nu, lambda, theta: obj.theta, floor: obj.floor, t: ThresholdSet::default() }
    }

    fn up(&self, g: f64) -> f64 {
        self.pair.reward_prime(g)
    }

    /// νD′(w)
    fn dp(&self, w: f64) -> f64 {
        if self.nu == 0.0 {
            0.0
        } else {
            self.nu * self.pair.penalty_prime(w)
        }
    }

    /// νD(w)
    fn d(&self, w: f64) -> f64 {
        if self.nu == 0.0 {
            0.0
        } else {
            self.nu * self.pair.penalty(w)
        }
    }

    fn f_nu(&self, x: f64) -> f64 {
        if x >= self.theta {
            self.pair.reward(x - self.theta)
        } else {
            -self.d(self.theta - x)
        }
    }

    fn k(&mut self) -> f64 {
        let l = self.floor;
        let k = (self.f_nu(l) + self.lambda + self.d(self.theta)) / l;
        self.t.k = Some(k);
        k
    }

    /// Common tangent to the loss arc and the gain arc lifted by `extra`.
    /// Returns (slope, loss point, gain point).
    fn common_tangent(&self, extra: f64) -> Result<(f64, f64, f64)> {
        let nu = self.nu;
        let pair = self.pair;
        let delta = |s: f64| {
            let w = pair.inv_penalty_marginal(s / nu);
            let u = pair.inv_reward_marginal(s);
            s * (w + u) - nu * pair.penalty(w) - pair.reward(u) - extra
        };
        let hi = roots::expand_up("common tangent slope", 1.0, 1e300, true, delta)?;
        let lo = roots::expand_down("common tangent slope", 1.0, 1e-300, false, delta)?;
        let s = roots::bisect_log("common tangent slope", lo, hi, delta)?;
        let z_loss = self.theta - pair.inv_penalty_marginal(s / nu);
        let z_gain = self.theta + pair.inv_reward_marginal(s);
        Ok((s, z_loss, z_gain))
    }

    /// Offset u of the gain point θ+u where the line from (p, v) touches the
    /// gain arc lifted by `extra`; requires p < θ + u.
    fn tangent_gain_from(&self, p: f64, v: f64, extra: f64) -> Result<f64> {
        let theta = self.theta;
        let pair = self.pair;
        let psi = |u: f64| pair.reward_prime(u) * (theta + u - p) - pair.reward(u) - extra + v;
        let hi = roots::expand_up("gain tangent", 1.0, 1e300, false, psi)?;
        let lo = roots::expand_down("gain tangent", hi.min(1.0), 1e-300, true, psi)?;
        roots::bisect_log("gain tangent", lo, hi, psi)
    }

    /// Offset in (0, L−θ) of the point where the line through the lifted
    /// point (L, U(L−θ)+λ) touches the unlifted gain arc.
    fn tangent_gain_back(&self) -> Result<f64> {
        let span = self.floor - self.theta;
        if self.lambda == 0.0 {
            return Ok(span);
        }
        let top = self.pair.reward(span) + self.lambda;
        let pair = self.pair;
        let phi = |u: f64| pair.reward_prime(u) * (span - u) - (top - pair.reward(u));
        roots::bisect("backward gain tangent", 0.0, span, phi)
    }

    /// Depth w = θ − z of the loss point z in [0, min(p, θ)) where the line
    /// from (p, v) touches the loss arc. Returns θ (z = 0) when the line
    /// passes above the arc at zero.
    fn tangent_loss_from(&self, p: f64, v: f64) -> Result<f64> {
        let theta = self.theta;
        let rho = |w: f64| self.dp(w) * (p - theta + w) - v - self.d(w);
        if rho(theta) <= 0.0 {
            return Ok(theta);
        }
        roots::bisect("loss tangent", (theta - p).max(0.0), theta, rho)
    }

    fn global_tangent(&mut self) -> Result<Option<(f64, f64, f64)>> {
        if self.nu == 0.0 {
            return Ok(None);
        }
        let (s, z1, z2) = self.common_tangent(0.0)?;
        self.t.z1 = Some(z1);
        self.t.z2 = Some(z2);
        Ok(Some((s, z1, z2)))
    }

    /// Gain-only form: a single tangent from (0, f(0)) with lift `extra`.
    /// Returns the tangent point.
    fn gain_only(&self, extra: f64) -> Result<(f64, Table)> {
        let u = self.tangent_gain_from(0.0, self.f_nu(0.0), extra)?;
        Ok((self.theta + u, Table::new().then(Gain, self.up(u))?))
    }

    fn convex(&mut self) -> Result<(CaseLabel, Table)> {
        let c = CaseLabel::convex;
        let theta = self.theta;
        let l = self.floor;
        let lambda = self.lambda;
        let tangent = self.global_tangent()?;

        if lambda == 0.0 {
            return match tangent {
                Some((s12, z1, _)) if z1 >= 0.0 => {
                    let sd0 = self.dp(theta);
                    Ok((c(1), Table::new().then(Gain, s12)?.then(Loss, sd0)?))
                }
                _ => {
                    let (z, t) = self.gain_only(0.0)?;
                    self.t.z_prime = Some(z);
                    Ok((c(2), t))
                }
            };
        }

        let z1 = tangent.map_or(f64::NEG_INFINITY, |t| t.1);
        let s12 = tangent.map_or(f64::NAN, |t| t.0);
        let k = self.k();
        let sd0 = self.dp(theta);
        let fl = self.f_nu(l);

        if l < theta {
            if l < z1 {
                let sdl = self.dp(theta - l);
                let t = Table::new().then(Gain, s12)?.then(Loss, sdl)?;
                if k > sd0 {
                    return Ok((c(3), t.then(Floor, k)?));
                }
                let w3 = self.tangent_loss_from(l, fl + lambda)?;
                self.t.z3 = Some(theta - w3);
                let s3 = self.dp(w3);
                return Ok((c(4), t.then(Floor, s3)?.then(Loss, sd0)?));
            }
            let u4 = self.tangent_gain_from(l, fl, 0.0)?;
            self.t.z4 = Some(theta + u4);
            let s4 = self.up(u4);
            if k > sd0 {
                if k > s4 {
                    return Ok((c(5), Table::new().then(Gain, s4)?.then(Floor, k)?));
                }
                let (z5, t) = self.gain_only(lambda)?;
                self.t.z5 = Some(z5);
                return Ok((c(6), t));
            }
            let w3 = self.tangent_loss_from(l, fl + lambda)?;
            self.t.z3 = Some(theta - w3);
            let s3 = self.dp(w3);
            if s3 > s4 {
                return Ok((c(7), Table::new().then(Gain, s4)?.then(Floor, s3)?.then(Loss, sd0)?));
            }
            let (s67, z6, z7) = self.common_tangent(lambda)?;
            self.t.z6 = Some(z6);
            self.t.z7 = Some(z7);
            if z6 <= 0.0 {
                let (z5, t) = self.gain_only(lambda)?;
                self.t.z5 = Some(z5);
                return Ok((c(6), t));
            }
            return Ok((c(8), Table::new().then(Gain, s67)?.then(Loss, sd0)?));
        }

        if l == theta {
            if self.nu > 0.0 {
                let (s, z6p, z7p) = self.common_tangent(lambda)?;
                self.t.z6_p = Some(z6p);
                self.t.z7_p = Some(z7p);
                if z6p > 0.0 {
                    return Ok((c(8), Table::new().then(Gain, s)?.then(Loss, sd0)?));
                }
            }
            let (z5, t) = self.gain_only(lambda)?;
            self.t.z5 = Some(z5);
            return Ok((c(6), t));
        }

        // L > θ
        let u8 = self.tangent_gain_back()?;
        self.t.z8 = Some(theta + u8);
        let s8 = self.up(u8);
        let sl = self.up(l - theta);
        if k > sd0 {
            if k < sl {
                let (z9, t) = self.gain_only(lambda)?;
                self.t.z9 = Some(z9);
                return Ok((c(10), t));
            }
            if k < s8 {
                return Ok((c(9), Table::new().then(Gain, sl)?.then(Floor, k)?));
            }
            return self.case_eleven(s8);
        }
        let w11 = self.tangent_loss_from(l, fl + lambda)?;
        self.t.z11 = Some(theta - w11);
        let s11 = self.dp(w11);
        if s11 < sl {
            let (s, z12, z13) = self.common_tangent(lambda)?;
            self.t.z12 = Some(z12);
            self.t.z13 = Some(z13);
            if z12 <= 0.0 {
                let (z9, t) = self.gain_only(lambda)?;
                self.t.z9 = Some(z9);
                return Ok((c(10), t));
            }
            return Ok((c(14), Table::new().then(Gain, s)?.then(Loss, sd0)?));
        }
        if s8 >= s11 {
            return Ok((c(12), Table::new().then(Gain, sl)?.then(Floor, s11)?.then(Loss, sd0)?));
        }
        // s8 < s11: the unlifted gain arc reappears between the floor and
        // the loss arc.
        match tangent {
            Some((s12, z1, z2)) if z1 >= 0.0 => {
                if s12 < s8 {
                    return Err(Error::Invariant(format!("convex L>θ: z₂={z2} ≥ z₈={} with νD′(θ−z₁₁) > U′(z₈−θ)", theta + u8)));
                }
                Ok((c(13), Table::new().then(Gain, sl)?.then(Floor, s8)?.then(Gain, s12)?.then(Loss, sd0)?))
            }
            _ => self.case_eleven(s8),
        }
    }

    fn case_eleven(&mut self, s8: f64) -> Result<(CaseLabel, Table)> {
        let theta = self.theta;
        let u10 = self.tangent_gain_from(0.0, self.f_nu(0.0), 0.0)?;
        self.t.z10 = Some(theta + u10);
        let sl = self.up(self.floor - theta);
        let s10 = self.up(u10);
        Ok((CaseLabel::convex(11), Table::new().then(Gain, sl)?.then(Floor, s8)?.then(Gain, s10)?))
    }

    fn concave(&mut self) -> Result<(CaseLabel, Table)> {
        let c = CaseLabel::concave;
        let theta = self.theta;
        let f0 = self.f_nu(0.0);
        let u = self.tangent_gain_from(0.0, f0, 0.0)?;
        let z = theta + u;
        self.t.z = Some(z);
        let sz = self.up(u);
        let lambda = self.lambda;
        let l = self.floor;
        // z may round to θ when the tangent offset is tiny
        let beyond_tangent = l > theta && l - theta >= u;
        if lambda == 0.0 {
            // the floor never binds: a single gain tangent
            let case = if beyond_tangent {
                2
            } else if l >= theta {
                4
            } else {
                6
            };
            return Ok((c(case), Table::new().then(Gain, sz)?));
        }
        let k = self.k();
        if beyond_tangent {
            let sl = self.up(l - theta);
            if k > sz {
                return Ok((c(1), Table::new().then(Gain, sl)?.then(Floor, k)?));
            }
            let u0 = self.tangent_gain_back()?;
            self.t.l0 = Some(theta + u0);
            let s0 = self.up(u0);
            return Ok((c(2), Table::new().then(Gain, sl)?.then(Floor, s0)?.then(Gain, sz)?));
        }
        if l >= theta {
            let sl = self.up(l - theta);
            if k >= sl {
                return Ok((c(3), Table::new().then(Gain, sl)?.then(Floor, k)?));
            }
            let (zt, t) = self.gain_only(lambda)?;
            self.t.z_tilde0 = Some(zt);
            return Ok((c(4), t));
        }
        let uh = self.tangent_gain_from(l, self.f_nu(l), 0.0)?;
        self.t.z_hat = Some(theta + uh);
        let sh = self.up(uh);
        if k > sh {
            return Ok((c(5), Table::new().then(Gain, sh)?.then(Floor, k)?));
        }
        let (zh0, t) = self.gain_only(lambda)?;
        self.t.z_hat0 = Some(zh0);
        Ok((c(6), t))
    }
}
