//! Deterministic numeric formatting for reports and CLI output.
//!
//! Floats print with 9 significant digits, rationals as `p/q`. Fixing the
//! format makes goldens byte-stable across runs and platforms.

use crate::Rational;
use num_traits::{Signed, ToPrimitive, Zero};

/// Formats `x` with 9 significant digits, positional where reasonable.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..9).contains(&mag) {
        let decimals = (8 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        trim_zeros(&s)
    } else {
        format!("{x:.8e}")
    }
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0');
    t.strip_suffix('.').unwrap_or(t).to_string()
}

/// Formats a rational as `p/q` (or `p` when integral).
pub fn rational(q: &Rational) -> String {
    if q.denom().is_zero() || q.denom() == &num_bigint::BigInt::from(1) {
        format!("{}", q.numer())
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Best-effort f64 value of a rational (exact for desk-scale numbers).
pub fn to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or_else(|| {
        if q.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_examples() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(0.5), "0.5");
        assert_eq!(sig9(3.0_f64.sqrt() / 2.0), "0.866025404");
        assert_eq!(sig9(-0.25), "-0.25");
        assert_eq!(sig9(1.0e12), "1.00000000e12");
    }

    #[test]
    fn rational_fmt() {
        let q = Rational::new(3.into(), 8.into());
        assert_eq!(rational(&q), "3/8");
        assert_eq!(rational(&Rational::from(num_bigint::BigInt::from(7))), "7");
    }
}
