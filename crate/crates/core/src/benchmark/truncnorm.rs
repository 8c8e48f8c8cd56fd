//! Exact draws from a univariate truncated normal by inverse CDF.
//!
//! Intervals entirely in one tail are handled in survival-function space so
//! that `P(X > a)` keeps full relative precision; beyond the range of `erfc`
//! the log survival function is inverted with Newton's method.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

/// Below this, `erfc` loses relative precision to subnormals.
const DIRECT_MIN: f64 = 1e-300;

/// `P(Z > x)` for standard normal `Z`.
fn survival(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// `ln P(Z > x)` for `x ≥ 0`, accurate far into the tail.
fn log_survival(x: f64) -> f64 {
    if x == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    let s = survival(x);
    if s > DIRECT_MIN {
        return s.ln();
    }
    // Mills-ratio asymptotic expansion; x > 37 here so four terms are plenty.
    let x2 = x * x;
    let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
    -0.5 * x2 - (x * (2.0 * PI).sqrt()).ln() + series.ln()
}

/// The `x ≥ 0` with `ln P(Z > x) = log_s`.
fn inverse_log_survival(log_s: f64) -> f64 {
    let s = log_s.exp();
    if s > DIRECT_MIN {
        return SQRT_2 * erfc_inv(2.0 * s);
    }
    let mut x = (-2.0 * log_s).sqrt();
    for _ in 0..100 {
        let f = log_survival(x) - log_s;
        // d/dx ln S(x) = −φ(x)/S(x) ≈ −(x + 1/x) in the far tail.
        let step = f / (x + 1.0 / x);
        x += step;
        if step.abs() <= 1e-15 * x {
            break;
        }
    }
    x
}

/// Standard normal truncated to `[a, b]`, `a ≥ 0`.
fn upper_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let la = log_survival(a);
    let lb = log_survival(b);
    let u: f64 = rng.random();
    // ln(S(a) − u·(S(a) − S(b))) without forming the tiny differences.
    let log_s = la + (-u * -(lb - la).exp_m1()).ln_1p();
    inverse_log_survival(log_s).clamp(a, b)
}

/// Draws `Z ~ N(0, 1)` conditioned on `a ≤ Z ≤ b`.
pub fn standard_truncnorm<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    if !(a < b) || a.is_nan() || b.is_nan() {
        return Err(Error::InvalidParameter(format!("empty truncation interval [{a}, {b}]")));
    }
    if a >= 0.0 {
        return Ok(upper_tail(a, b, rng));
    }
    if b <= 0.0 {
        return Ok(-upper_tail(-b, -a, rng));
    }
    // The interval straddles zero, so its mass is at least min(Φ(b), 1 − Φ(a))
    // times something of order one: plain CDF inversion is accurate.
    let fa = survival(-a);
    let fb = survival(-b);
    let u: f64 = rng.random();
    let p = fa + u * (fb - fa);
    Ok((-SQRT_2 * erfc_inv(2.0 * p)).clamp(a, b))
}

/// Draws `X ~ N(mean, sd²)` conditioned on `lower ≤ X ≤ upper`.
pub fn truncnorm<R: Rng + ?Sized>(mean: f64, sd: f64, lower: f64, upper: f64, rng: &mut R) -> Result<f64> {
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::InvalidParameter(format!("standard deviation must be positive, got {sd}")));
    }
    let z = standard_truncnorm((lower - mean) / sd, (upper - mean) / sd, rng)?;
    Ok((mean + sd * z).clamp(lower, upper))
}
