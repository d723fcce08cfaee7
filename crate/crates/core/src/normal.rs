//! Standard normal helpers.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal cdf, accurate in both tails.
pub fn cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        INV_SQRT_2PI * (-0.5 * x * x).exp()
    }
}

/// Inverse of [`cdf`]; one Newton step is applied on top of the erfc inverse.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    let d = pdf(x);
    if d > 0.0 {
        x - (cdf(x) - p) / d
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-14);
        assert!((cdf(-8.0) - 6.220_960_574_271_785e-16).abs() < 1e-28);
        assert!((quantile(0.01) + 2.326_347_874_040_841).abs() < 1e-12);
        assert_eq!(cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(quantile(1.0), f64::INFINITY);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.2, 0.5, 0.77, 1.0 - 1e-9] {
            assert!((cdf(quantile(p)) - p).abs() <= 1e-14 * p.max(1e-3));
        }
    }
}
