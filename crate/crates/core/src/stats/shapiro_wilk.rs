//! Shapiro-Wilk W test with Royston's normalizing approximation, valid for
//! 3 ≤ n ≤ 5000. Coefficients and p-value polynomials follow algorithm
//! AS R94.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{check_finite, normal_cdf, normal_quantile, sorted_copy, ConfidenceLevel};
use crate::error::{Error, Result};

pub const MIN_SIZE: usize = 3;
pub const MAX_SIZE: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub w_statistic: f64,
    pub p_value: f64,
    /// `p_value >= 1 - alpha`.
    pub passed: bool,
    pub alpha: ConfidenceLevel,
    pub size: usize,
}

// Polynomial coefficients, constant term first.
const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

fn poly(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Upper-half weights: `half[i]` multiplies `x_(n-i) - x_(i+1)`.
fn half_coefficients(n: usize) -> Result<Vec<f64>> {
    let half = n / 2;
    if n == 3 {
        return Ok(vec![std::f64::consts::FRAC_1_SQRT_2]);
    }
    let an25 = n as f64 + 0.25;
    let m = (0..half)
        .map(|i| normal_quantile((i as f64 + 1.0 - 0.375) / an25))
        .collect::<Result<Vec<_>>>()?;
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / (n as f64).sqrt();

    let mut coef: Vec<f64> = m.iter().map(|v| -v).collect();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    if n > 5 {
        let a2 = poly(&C2, rsn) - m[1] / ssumm2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        coef.iter_mut().skip(2).for_each(|c| *c /= fac);
        coef[0] = a1;
        coef[1] = a2;
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        coef.iter_mut().skip(1).for_each(|c| *c /= fac);
        coef[0] = a1;
    }
    Ok(coef)
}

fn p_value(w: f64, n: usize) -> f64 {
    if w >= 1.0 {
        return 1.0;
    }
    if n == 3 {
        let p = 6.0 / PI * (w.sqrt().asin() - (0.75_f64).sqrt().asin());
        return p.clamp(0.0, 1.0);
    }
    let an = n as f64;
    let y = (1.0 - w).ln();
    let (z, mean, sd) = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return 0.0;
        }
        (-(gamma - y).ln(), poly(&C3, an), poly(&C4, an).exp())
    } else {
        let ln_n = an.ln();
        (y, poly(&C5, ln_n), poly(&C6, ln_n).exp())
    };
    normal_cdf(-(z - mean) / sd)
}

/// Computes `(W, p-value)` without a decision.
pub fn shapiro_wilk_statistic(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if !(MIN_SIZE..=MAX_SIZE).contains(&n) {
        return Err(Error::UnsupportedSampleSize {
            size: n,
            min: MIN_SIZE,
            max: MAX_SIZE,
        });
    }
    check_finite(values)?;
    let sorted = sorted_copy(values);
    let range = sorted[n - 1] - sorted[0];
    if range.is_nan() || range <= 0.0 {
        return Err(Error::ZeroVariance);
    }

    let half = half_coefficients(n)?;
    let mut weights = vec![0.0; n];
    for (i, c) in half.iter().enumerate() {
        weights[i] = -c;
        weights[n - 1 - i] = *c;
    }

    // Squared correlation between the scaled order statistics and the
    // weights, written as 1 - w1 so W close to 1 keeps its precision.
    let scaled: Vec<f64> = sorted.iter().map(|x| x / range).collect();
    let mean_x = scaled.iter().sum::<f64>() / n as f64;
    let mean_a = weights.iter().sum::<f64>() / n as f64;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (x, a) in scaled.iter().zip(&weights) {
        let dx = x - mean_x;
        let da = a - mean_a;
        ssa += da * da;
        ssx += dx * dx;
        sax += da * dx;
    }
    let root = (ssa * ssx).sqrt();
    let w1 = (root - sax) * (root + sax) / (ssa * ssx);
    let w = (1.0 - w1).clamp(f64::MIN_POSITIVE, 1.0);
    Ok((w, p_value(w, n)))
}

/// Shapiro-Wilk normality test at confidence level `level`.
pub fn shapiro_wilk(values: &[f64], level: ConfidenceLevel) -> Result<NormalityResult> {
    let (w, p) = shapiro_wilk_statistic(values)?;
    Ok(NormalityResult {
        w_statistic: w,
        p_value: p,
        passed: p >= level.risk(),
        alpha: level,
        size: values.len(),
    })
}
