//! Closed-form Lipschitz bounds for Gaussian-smoothed classifiers whose base
//! composition `s^r o f` is itself Lipschitz.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::radius::QUANTILE_CLAMP;
use crate::specfun::{erf, gaussian_quantile};

/// Points used to maximize over the probability interval in
/// [`local_lipschitz_quantile_map`], endpoints included.
pub const LOCAL_GRID_POINTS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Lipschitz constant of `s_k^r o f` (elementwise) or `s^r o f` (vector).
    pub base_lipschitz: f64,
    pub sigma: f64,
    pub mass: f64,
}

impl BoundInputs {
    pub fn new(base_lipschitz: f64, sigma: f64, mass: f64) -> Result<Self> {
        ensure_positive(base_lipschitz, "base lipschitz constant")?;
        ensure_positive(sigma, "sigma")?;
        ensure_positive(mass, "simplex mass")?;
        Ok(BoundInputs {
            base_lipschitz,
            sigma,
            mass,
        })
    }

    fn validate(&self) -> Result<()> {
        BoundInputs::new(self.base_lipschitz, self.sigma, self.mass).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundCase {
    /// Bound on each coordinate `f~_k`.
    Elementwise,
    /// Bound on the whole vector map `f~`.
    Vector,
}

impl BoundCase {
    /// Constant `c` in `L * erf(r / (c L sigma))`.
    fn erf_denominator(self) -> f64 {
        match self {
            BoundCase::Elementwise => 2f64.powf(1.5),
            BoundCase::Vector => 2.0,
        }
    }

    /// Constant `c` in the smoothing-only term `r / sqrt(c sigma^2)`.
    fn smoothing_factor(self) -> f64 {
        match self {
            BoundCase::Elementwise => 2.0 * PI,
            BoundCase::Vector => PI,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BoundCase::Elementwise => "elementwise",
            BoundCase::Vector => "vector",
        }
    }
}

impl fmt::Display for BoundCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "elementwise" | "element-wise" => Ok(BoundCase::Elementwise),
            "vector" => Ok(BoundCase::Vector),
            other => Err(Error::Config(format!("unknown bound case '{other}'"))),
        }
    }
}

/// `L * erf(r / (c L sigma))` for the given case.
pub fn smoothed_lipschitz(inp: &BoundInputs, case: BoundCase) -> Result<f64> {
    inp.validate()?;
    let l = inp.base_lipschitz;
    let arg = inp.mass / (case.erf_denominator() * l * inp.sigma);
    Ok(l * erf(arg)?)
}

/// `L(f~_k) <= L erf(r / (2^{3/2} L sigma))`.
pub fn smoothed_lipschitz_elementwise(inp: &BoundInputs) -> Result<f64> {
    smoothed_lipschitz(inp, BoundCase::Elementwise)
}

/// `L(f~) <= L erf(r / (2 L sigma))`.
pub fn smoothed_lipschitz_vector(inp: &BoundInputs) -> Result<f64> {
    smoothed_lipschitz(inp, BoundCase::Vector)
}

/// The two terms of the looser `min` form: smoothing alone
/// (`r / sqrt(2 pi sigma^2)` or `r / sqrt(pi sigma^2)`) and the base constant.
pub fn min_form_terms(inp: &BoundInputs, case: BoundCase) -> Result<(f64, f64)> {
    inp.validate()?;
    let smoothing = inp.mass / (case.smoothing_factor() * inp.sigma * inp.sigma).sqrt();
    Ok((smoothing, inp.base_lipschitz))
}

/// Lipschitz constant of a smoothed classifier when nothing is known about the
/// base classifier: the smoothing-only term.
pub fn smoothing_only_lipschitz(sigma: f64, mass: f64, case: BoundCase) -> Result<f64> {
    ensure_positive(sigma, "sigma")?;
    ensure_positive(mass, "simplex mass")?;
    Ok(mass / (case.smoothing_factor() * sigma * sigma).sqrt())
}

/// The noise level where the erf bound gains the most over the `min` form:
/// `r / (L sqrt(2 pi))` elementwise, `r / (L sqrt(pi))` for the vector case.
pub fn optimal_sigma(lipschitz: f64, mass: f64, case: BoundCase) -> Result<f64> {
    ensure_positive(lipschitz, "lipschitz constant")?;
    ensure_positive(mass, "simplex mass")?;
    Ok(mass / (lipschitz * case.smoothing_factor().sqrt()))
}

/// Local Lipschitz bound of `Phi^-1 o f~_k` on an `eps`-ball around `x`, given
/// `p = f~_k(x)`.
///
/// Maximizes `(r / sigma) exp(-(Phi^-1(q/r)^2 - Phi^-1(q)^2) / 2)` over
/// `q in [p - eps L, p + eps L]` intersected with `(0, min(1, r))`, using
/// [`LOCAL_GRID_POINTS`] points. For `r = 1` this is exactly `1 / sigma`.
pub fn local_lipschitz_quantile_map(
    p: f64,
    mass: f64,
    sigma: f64,
    eps: f64,
    smoothed_lipschitz: f64,
) -> Result<f64> {
    ensure_positive(mass, "simplex mass")?;
    ensure_positive(sigma, "sigma")?;
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::domain(format!(
            "eps must be finite and nonnegative, got {eps}"
        )));
    }
    if !(smoothed_lipschitz.is_finite() && smoothed_lipschitz >= 0.0) {
        return Err(Error::domain(format!(
            "smoothed lipschitz constant must be finite and nonnegative, got {smoothed_lipschitz}"
        )));
    }
    let upper_limit = mass.min(1.0);
    if !(p > 0.0 && p < upper_limit) {
        return Err(Error::domain(format!(
            "probability {p} outside the feasible interval (0, {upper_limit})"
        )));
    }
    if mass == 1.0 {
        return Ok(1.0 / sigma);
    }
    let radius = eps * smoothed_lipschitz;
    let lo = (p - radius).max(QUANTILE_CLAMP);
    let hi = (p + radius).min(upper_limit - QUANTILE_CLAMP);
    if lo > hi {
        return Err(Error::domain("empty feasible probability interval"));
    }
    let exponent = |q: f64| -> Result<f64> {
        let a = gaussian_quantile(q / mass)?;
        let b = gaussian_quantile(q)?;
        Ok(-0.5 * (a * a - b * b))
    };
    let mut best = f64::NEG_INFINITY;
    if hi == lo {
        best = exponent(lo)?;
    } else {
        let step = (hi - lo) / (LOCAL_GRID_POINTS - 1) as f64;
        for i in 0..LOCAL_GRID_POINTS {
            let q = if i + 1 == LOCAL_GRID_POINTS {
                hi
            } else {
                lo + step * i as f64
            };
            best = best.max(exponent(q)?);
        }
    }
    Ok(mass / sigma * best.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn inputs(l: f64, s: f64, r: f64) -> BoundInputs {
        BoundInputs::new(l, s, r).unwrap()
    }

    #[test]
    fn elementwise_examples() {
        let b = smoothed_lipschitz_elementwise(&inputs(5.0, 0.4, 3.0)).unwrap();
        assert_abs_diff_eq!(
            b,
            5.0 * erf(3.0 / (2f64.powf(1.5) * 2.0)).unwrap(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(b, 2.733, epsilon = 5e-3);
        assert!(smoothed_lipschitz_elementwise(&inputs(5.0, 1e6, 3.0)).unwrap() < 1e-5);
        let s = optimal_sigma(5.0, 3.0, BoundCase::Elementwise).unwrap();
        let b = smoothed_lipschitz_elementwise(&inputs(5.0, s, 3.0)).unwrap();
        assert!((b / 5.0 - 0.79).abs() < 0.005);
    }

    #[test]
    fn vector_examples() {
        let s = optimal_sigma(5.0, 3.0, BoundCase::Vector).unwrap();
        assert_abs_diff_eq!(s, 0.3385, epsilon = 1e-4);
        let b = smoothed_lipschitz_vector(&inputs(5.0, s, 3.0)).unwrap();
        assert_abs_diff_eq!(b, 3.95, epsilon = 0.02);
        assert!(smoothed_lipschitz_vector(&inputs(1.0, 1e6, 1.0)).unwrap() < 1e-5);
    }

    #[test]
    fn optimal_sigma_examples() {
        assert_abs_diff_eq!(
            optimal_sigma(5.0, 3.0, BoundCase::Elementwise).unwrap(),
            3.0 / (5.0 * (2.0 * PI).sqrt()),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            optimal_sigma(5.0, 3.0, BoundCase::Elementwise).unwrap(),
            0.23937,
            epsilon = 1e-5
        );
        assert_abs_diff_eq!(
            optimal_sigma(5.0, 3.0, BoundCase::Vector).unwrap(),
            0.33851,
            epsilon = 1e-5
        );
        assert_eq!(
            optimal_sigma(5.0, 6.0, BoundCase::Vector).unwrap(),
            2.0 * optimal_sigma(5.0, 3.0, BoundCase::Vector).unwrap()
        );
        assert!(optimal_sigma(0.0, 1.0, BoundCase::Vector).is_err());
        assert!(optimal_sigma(1.0, -1.0, BoundCase::Vector).is_err());
    }

    #[test]
    fn bounds_reject_bad_inputs() {
        assert!(BoundInputs::new(0.0, 1.0, 1.0).is_err());
        assert!(BoundInputs::new(1.0, -1.0, 1.0).is_err());
        assert!(BoundInputs::new(1.0, 1.0, f64::NAN).is_err());
        let bad = BoundInputs {
            base_lipschitz: 1.0,
            sigma: 0.0,
            mass: 1.0,
        };
        assert!(smoothed_lipschitz_vector(&bad).is_err());
    }

    #[test]
    fn min_form_on_grid() {
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..4 {
                    let inp = inputs(
                        0.1 * 3f64.powi(i),
                        0.05 * 2.5f64.powi(j),
                        0.5 * 2f64.powi(k),
                    );
                    let (a, b) = min_form_terms(&inp, BoundCase::Vector).unwrap();
                    assert!(smoothed_lipschitz_vector(&inp).unwrap() <= a.min(b) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn local_examples() {
        for &p in &[0.01, 0.3, 0.5, 0.99] {
            assert_eq!(
                local_lipschitz_quantile_map(p, 1.0, 0.7, 0.0, 0.0).unwrap(),
                1.0 / 0.7
            );
            assert_eq!(
                local_lipschitz_quantile_map(p, 1.0, 0.7, 0.5, 2.0).unwrap(),
                1.0 / 0.7
            );
        }
        assert_eq!(
            local_lipschitz_quantile_map(0.4, 1.0, 0.25, 0.0, 0.0).unwrap(),
            4.0
        );
        let q25 = gaussian_quantile(0.25).unwrap();
        let v = local_lipschitz_quantile_map(0.5, 2.0, 1.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(v, 2.0 * (-0.5 * q25 * q25).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 1.593, epsilon = 5e-3);
    }

    #[test]
    fn local_grid_finds_maximum() {
        // For r = 2 the exponent grows as q moves towards 0.5 from below
        // (Phi^-1(q/2)^2 shrinks faster), so widening the ball can only raise it.
        let narrow = local_lipschitz_quantile_map(0.3, 2.0, 1.0, 0.0, 1.0).unwrap();
        let wide = local_lipschitz_quantile_map(0.3, 2.0, 1.0, 0.1, 1.0).unwrap();
        assert!(wide >= narrow);
        // brute force over a much finer grid agrees to grid resolution
        let fine = (0..=100_000)
            .map(|i| 0.2 + 0.2 * i as f64 / 100_000.0)
            .map(|q| {
                let a = gaussian_quantile(q / 2.0).unwrap();
                let b = gaussian_quantile(q).unwrap();
                2.0 * (-0.5 * (a * a - b * b)).exp()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(wide, fine, epsilon = 1e-4);
    }

    #[test]
    fn local_small_mass_exceeds_r_over_sigma() {
        let v = local_lipschitz_quantile_map(0.2, 0.5, 1.0, 0.0, 0.0).unwrap();
        assert!(v > 0.5);
    }

    #[test]
    fn local_errors() {
        assert!(local_lipschitz_quantile_map(0.0, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(local_lipschitz_quantile_map(1.2, 2.0, 1.0, 0.0, 0.0).is_err());
        assert!(local_lipschitz_quantile_map(0.6, 0.5, 1.0, 0.0, 0.0).is_err());
        assert!(local_lipschitz_quantile_map(0.5, 1.0, 1.0, -1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn erf_bound_below_min_form(l in 0.01f64..100.0, s in 0.01f64..10.0, r in 0.1f64..10.0) {
            let inp = inputs(l, s, r);
            for case in [BoundCase::Elementwise, BoundCase::Vector] {
                let b = smoothed_lipschitz(&inp, case).unwrap();
                let (a, c) = min_form_terms(&inp, case).unwrap();
                prop_assert!(b <= a + 1e-12);
                prop_assert!(b <= c + 1e-12);
            }
        }

        #[test]
        fn bound_monotone(l in 0.01f64..100.0, s in 0.01f64..10.0, r in 0.1f64..10.0, d in 0.001f64..1.0) {
            for case in [BoundCase::Elementwise, BoundCase::Vector] {
                let b = smoothed_lipschitz(&inputs(l, s, r), case).unwrap();
                prop_assert!(smoothed_lipschitz(&inputs(l, s + d, r), case).unwrap() <= b);
                prop_assert!(smoothed_lipschitz(&inputs(l, s, r + d), case).unwrap() >= b);
            }
        }

        #[test]
        fn ratio_at_optimal_sigma(l in 0.01f64..100.0, r in 0.1f64..10.0) {
            for case in [BoundCase::Elementwise, BoundCase::Vector] {
                let s = optimal_sigma(l, r, case).unwrap();
                let ratio = smoothed_lipschitz(&inputs(l, s, r), case).unwrap() / l;
                prop_assert!((0.78..=0.80).contains(&ratio));
            }
        }
    }
}
