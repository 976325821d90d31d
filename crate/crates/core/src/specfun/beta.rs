use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut a = LANCZOS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::domain(format!(
            "beta shape parameters must be positive, got ({a}, {b})"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!(
            "incomplete beta argument must lie in [0, 1], got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    let value = if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Quantile of Beta(a, b) by bisection on the regularized incomplete beta.
pub fn beta_quantile(q: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::domain(format!(
            "beta quantile level must lie in [0, 1], got {q}"
        )));
    }
    // validates shapes
    regularized_incomplete_beta(0.5, a, b)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    if q == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if regularized_incomplete_beta(mid, a, b)? < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// For integer shapes I_x(a, b) equals a binomial tail:
    /// sum_{j=a}^{a+b-1} C(a+b-1, j) x^j (1-x)^(a+b-1-j).
    fn binomial_tail(x: f64, a: u32, b: u32) -> f64 {
        let n = a + b - 1;
        (a..=n)
            .map(|j| {
                let c = factorial(n) / (factorial(j) * factorial(n - j));
                c * x.powi(j as i32) * (1.0 - x).powi((n - j) as i32)
            })
            .sum()
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        for n in 1..20u32 {
            assert_abs_diff_eq!(ln_gamma(n as f64), factorial(n - 1).ln(), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(ln_gamma(0.5), PI.sqrt().ln(), epsilon = 1e-13);
    }

    #[test]
    fn incomplete_beta_matches_binomial_tail() {
        for &(a, b) in &[(1, 1), (2, 5), (5, 2), (7, 9), (12, 3)] {
            for i in 1..20 {
                let x = i as f64 / 20.0;
                let got = regularized_incomplete_beta(x, a as f64, b as f64).unwrap();
                assert_abs_diff_eq!(got, binomial_tail(x, a, b), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn quantile_inverts() {
        for &(a, b) in &[(0.5, 0.5), (2.0, 5.0), (50.0, 51.0), (100.0, 1.0)] {
            for &q in &[0.001, 0.025, 0.3, 0.5, 0.975] {
                let x = beta_quantile(q, a, b).unwrap();
                assert_abs_diff_eq!(
                    regularized_incomplete_beta(x, a, b).unwrap(),
                    q,
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn closed_form_quantile() {
        // Beta(a, 1) has CDF x^a
        let x = beta_quantile(0.025, 100.0, 1.0).unwrap();
        assert_abs_diff_eq!(x, 0.025f64.powf(0.01), epsilon = 1e-12);
    }

    #[test]
    fn invalid_shapes() {
        assert!(regularized_incomplete_beta(0.5, 0.0, 1.0).is_err());
        assert!(regularized_incomplete_beta(1.5, 1.0, 1.0).is_err());
        assert!(beta_quantile(-0.1, 1.0, 1.0).is_err());
    }
}
