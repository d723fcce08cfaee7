//! Bracketed scalar root finding.

use crate::error::{Error, Result};

pub(crate) const MAX_ITER: usize = 200;

/// Root of a monotone function on `[lo, hi]` whose endpoint values have
/// opposite signs. Plain bisection; stops when the bracket collapses to
/// adjacent floats or `MAX_ITER` halvings have been done.
pub(crate) fn bisect<F>(what: &'static str, mut lo: f64, mut hi: f64, mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || (f_lo > 0.0) == (f_hi > 0.0) {
        return Err(Error::BracketNotFound { what, lo, hi });
    }
    let lo_positive = f_lo > 0.0;
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if v.is_nan() {
            return Err(Error::Numerical(format!("{what}: NaN residual at {mid:e}")));
        }
        if (v > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection in log space for a positive variable on `[lo, hi]`.
pub(crate) fn bisect_log<F>(what: &'static str, lo: f64, hi: f64, mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let t = bisect(what, lo.ln(), hi.ln(), |t| f(t.exp()))?;
    Ok(t.exp())
}

/// Grows `hi` geometrically from `start` until `f(hi)` has the sign
/// `want_positive`, never beyond `cap`.
pub(crate) fn expand_up<F>(what: &'static str, start: f64, cap: f64, want_positive: bool, mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut x = start;
    loop {
        let v = f(x);
        if !v.is_nan() && (v > 0.0) == want_positive && v != 0.0 {
            return Ok(x);
        }
        if v == 0.0 {
            return Ok(x);
        }
        if x >= cap {
            return Err(Error::BracketNotFound { what, lo: start, hi: cap });
        }
        x = (x * 2.0).min(cap);
    }
}

/// Shrinks `lo` geometrically from `start` until `f(lo)` has the sign
/// `want_positive`, never below `floor`.
pub(crate) fn expand_down<F>(what: &'static str, start: f64, floor: f64, want_positive: bool, mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut x = start;
    loop {
        let v = f(x);
        if v == 0.0 || (!v.is_nan() && (v > 0.0) == want_positive) {
            return Ok(x);
        }
        if x <= floor {
            return Err(Error::BracketNotFound { what, lo: floor, hi: start });
        }
        x = (x * 0.5).max(floor);
    }
}

/// Illinois false position on a sign-changing bracket. A bisection step is
/// forced when three steps in a row leave the bracket wider than half of
/// its last reference width.
/// Returns the evaluated point whose residual satisfies `done`, or the point
/// on the `keep_positive` side once the bracket collapses.
pub(crate) fn illinois<F, D>(
    what: &'static str,
    mut a: f64,
    mut b: f64,
    keep_positive: bool,
    mut f: F,
    mut done: D,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
    D: FnMut(f64, f64) -> bool,
{
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if done(a, fa) {
        return Ok(a);
    }
    if done(b, fb) {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || (fa > 0.0) == (fb > 0.0) {
        return Err(Error::BracketNotFound { what, lo: a, hi: b });
    }
    // orient so that f(a) < 0 < f(b)
    if fa > 0.0 {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let (mut wa, mut wb) = (fa, fb);
    let mut last = 0i8;
    let mut width = (b - a).abs();
    let mut slow = 0;
    for _ in 0..MAX_ITER {
        let mut c = (a * wb - b * wa) / (wb - wa);
        let (lo, hi) = (a.min(b), a.max(b));
        if !(c > lo && c < hi) {
            c = 0.5 * (a + b);
        }
        if !(c > lo && c < hi) {
            break;
        }
        let fc = f(c)?;
        if fc.is_nan() {
            return Err(Error::Numerical(format!("{what}: NaN residual at {c:e}")));
        }
        if done(c, fc) {
            return Ok(c);
        }
        if fc < 0.0 {
            a = c;
            fa = fc;
            wa = fc;
            if last == -1 {
                wb *= 0.5;
            }
            last = -1;
        } else {
            b = c;
            fb = fc;
            wb = fc;
            if last == 1 {
                wa *= 0.5;
            }
            last = 1;
        }
        if (b - a).abs() > 0.5 * width {
            slow += 1;
        } else {
            slow = 0;
            width = (b - a).abs();
        }
        if slow >= 3 {
            slow = 0;
            let m = 0.5 * (a + b);
            if m == a || m == b {
                break;
            }
            let fm = f(m)?;
            if done(m, fm) {
                return Ok(m);
            }
            if fm < 0.0 {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
            wa = fa;
            wb = fb;
            last = 0;
            width = (b - a).abs();
        }
    }
    Ok(if keep_positive { b } else { a })
}
