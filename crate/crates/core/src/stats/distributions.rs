//! Normal and Student-t distribution functions.
//!
//! `erfc` and `lgamma` come from `libm`, the regularized incomplete beta
//! from `statrs`; the quantiles are inverted here by safeguarded Newton iteration
//! inside a bracket that always contains the root.

use std::f64::consts::{PI, SQRT_2};

use libm::{erfc, lgamma as ln_gamma};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

const QUANTILE_TOL: f64 = 1e-13;
const MAX_ITER: usize = 300;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "probability must lie in (0, 1), got {p}"
        )))
    }
}

/// Standard normal quantile.
///
/// Acklam's rational approximation (relative error ~1e-9) followed by two
/// Halley steps against the erfc-based CDF.
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> Result<f64> {
    check_probability(p)?;
    if p == 0.5 {
        return Ok(0.0);
    }

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
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
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        let num = ((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5];
        let den = (((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0;
        num / den
    };

    let mut x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        let num = (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q;
        let den = ((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0;
        num / den
    };

    for _ in 0..2 {
        // Work in the tail that keeps the residual well conditioned.
        let err = if x < 0.0 {
            0.5 * erfc(-x / SQRT_2) - p
        } else {
            (1.0 - p) - 0.5 * erfc(x / SQRT_2)
        };
        let u = err / normal_pdf(x);
        if !u.is_finite() {
            break;
        }
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// Student-t density with `df` degrees of freedom.
pub fn t_pdf(x: f64, df: f64) -> f64 {
    if df.is_infinite() {
        return normal_pdf(x);
    }
    let ln = ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (df * PI).ln()
        - 0.5 * (df + 1.0) * (x * x / df).ln_1p();
    ln.exp()
}

/// Student-t cumulative distribution function.
pub fn t_cdf(x: f64, df: f64) -> f64 {
    if df.is_infinite() {
        return normal_cdf(x);
    }
    let tail = t_upper_tail(x.abs(), df);
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// `P(T > x)` for `x >= 0`, computed without cancellation.
fn t_upper_tail(x: f64, df: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let x2 = x * x;
    // Central part via I_{x²/(ν+x²)}(1/2, ν/2), tails via I_{ν/(ν+x²)}(ν/2, 1/2);
    // each keeps its incomplete-beta argument away from 1.
    if x2 < df {
        0.5 - 0.5 * beta_reg(0.5, 0.5 * df, x2 / (df + x2))
    } else {
        0.5 * beta_reg(0.5 * df, 0.5, df / (df + x2))
    }
}

/// Student-t quantile: the `x` with `t_cdf(x, df) == p`.
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    check_probability(p)?;
    if df.is_nan() || df <= 0.0 {
        return Err(Error::invalid(format!(
            "degrees of freedom must be positive, got {df}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if df.is_infinite() {
        return normal_quantile(p);
    }

    // Solve in the upper half and mirror.
    let upper = p > 0.5;
    let q = if upper { p } else { 1.0 - p };
    let target_tail = 1.0 - q;
    let upper_tail = |x: f64| t_upper_tail(x, df);

    let mut lo = 0.0_f64;
    let mut hi = normal_quantile(q)?.max(1.0);
    while upper_tail(hi) > target_tail {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::invalid(format!(
                "t quantile for p={p}, df={df} is not representable"
            )));
        }
    }

    let mut x = normal_quantile(q)?.clamp(lo, hi);
    for _ in 0..MAX_ITER {
        let residual = upper_tail(x) - target_tail;
        if residual > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let density = t_pdf(x, df);
        let newton = x + residual / density;
        let next = if density > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - x).abs();
        x = next;
        if step <= QUANTILE_TOL * (1.0 + x.abs()) || hi - lo <= QUANTILE_TOL * (1.0 + x.abs()) {
            break;
        }
    }
    Ok(if upper { x } else { -x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_quantile_reference_points() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(
            normal_quantile(0.975).unwrap(),
            1.959963984540054,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            normal_quantile(0.95).unwrap(),
            1.6448536269514722,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            normal_quantile(0.025).unwrap(),
            -1.959963984540054,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            normal_quantile(1e-10).unwrap(),
            -6.361340902404056,
            epsilon = 1e-9
        );
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn t_quantile_reference_points() {
        assert_eq!(t_quantile(0.5, 3.0).unwrap(), 0.0);
        // scipy.stats.t.ppf
        assert_abs_diff_eq!(
            t_quantile(0.95, 8.0).unwrap(),
            1.8595480375228424,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            t_quantile(0.99, 8.0).unwrap(),
            2.8964594477096215,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            t_quantile(0.975, 1.0).unwrap(),
            12.706204736174698,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            t_quantile(0.01, 8.0).unwrap(),
            -2.8964594477096215,
            epsilon = 1e-10
        );
        assert!((t_quantile(0.975, 1e6).unwrap() - 1.959964).abs() < 1e-4);
    }

    #[test]
    fn t_quantile_rejects_bad_arguments() {
        assert!(t_quantile(0.0, 5.0).is_err());
        assert!(t_quantile(1.0, 5.0).is_err());
        assert!(t_quantile(0.9, 0.0).is_err());
        assert!(t_quantile(0.9, -1.0).is_err());
        assert!(t_quantile(0.9, f64::NAN).is_err());
    }

    #[test]
    fn t_cdf_is_symmetric_and_monotone() {
        for &df in &[0.7, 1.0, 4.3, 30.0, 1e5] {
            let mut prev = 0.0;
            for i in -40..=40 {
                let x = i as f64 * 0.25;
                let c = t_cdf(x, df);
                assert!(c >= prev, "df={df} x={x}");
                assert_abs_diff_eq!(c + t_cdf(-x, df), 1.0, epsilon = 1e-14);
                prev = c;
            }
        }
    }
}
