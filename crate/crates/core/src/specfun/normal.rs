use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::Probability;
use crate::error::{ensure_finite, Error, Result};

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Below this magnitude erf is summed as a series, above it erfc comes from a
/// continued fraction.
const SERIES_CUTOFF: f64 = 2.5;

/// erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n x (2x^2)^n / (2n+1)!!
///
/// Every term is positive, so there is no cancellation for |x| < SERIES_CUTOFF.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term.abs() <= sum.abs() * 1e-17 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

/// erfc(x) for x >= SERIES_CUTOFF by modified Lentz on
/// x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...))).
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = f;
    let mut d = 0.0;
    for j in 1..500 {
        let a = j as f64 * 0.5;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (f * PI.sqrt())
}

fn erf_unchecked(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_CUTOFF {
        erf_series(x)
    } else {
        (1.0 - erfc_continued_fraction(ax)).copysign(x)
    }
}

fn erfc_unchecked(x: f64) -> f64 {
    if x >= SERIES_CUTOFF {
        erfc_continued_fraction(x)
    } else if x <= -SERIES_CUTOFF {
        2.0 - erfc_continued_fraction(-x)
    } else {
        1.0 - erf_series(x)
    }
}

/// The error function.
pub fn erf(x: f64) -> Result<f64> {
    ensure_finite(x, "erf argument")?;
    Ok(erf_unchecked(x))
}

/// The complementary error function, accurate in relative terms for large x.
pub fn erfc(x: f64) -> Result<f64> {
    ensure_finite(x, "erfc argument")?;
    Ok(erfc_unchecked(x))
}

pub fn gaussian_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

#[inline]
fn cdf_unchecked(z: f64) -> f64 {
    0.5 * erfc_unchecked(-z * FRAC_1_SQRT_2)
}

/// Standard Gaussian CDF.
pub fn gaussian_cdf(z: f64) -> Result<Probability> {
    ensure_finite(z, "gaussian_cdf argument")?;
    Ok(Probability::saturating(cdf_unchecked(z)))
}

// Acklam's rational approximation, relative error below 1.15e-9.
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.38357751867269e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549671010229528e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

fn initial_quantile(p: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Quantile for p in (0, 0.5]: rational start, then Halley steps against the CDF.
fn lower_quantile(p: f64) -> f64 {
    let mut x = initial_quantile(p);
    for _ in 0..3 {
        let e = cdf_unchecked(x) - p;
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Inverse of the standard Gaussian CDF.
///
/// `p` of exactly 0 or 1 yields [`Error::InfiniteQuantile`]; callers decide how
/// to clamp.
pub fn gaussian_quantile(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!(
            "quantile argument must lie in [0, 1], got {p}"
        )));
    }
    if p == 0.0 || p == 1.0 {
        return Err(Error::InfiniteQuantile(p));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // 1 - p is exact for p in [0.5, 1], which makes the symmetry exact too.
    Ok(if p < 0.5 {
        lower_quantile(p)
    } else {
        -lower_quantile(1.0 - p)
    })
}
