use serde::{Deserialize, Serialize};

use super::{check_finite, mean, t_quantile, variance, ConfidenceLevel};
use crate::error::{Error, Result};

/// One-sided Welch interval `[lower_bound, +inf)` for `mean(a) - mean(b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub mean_difference: f64,
    pub lower_bound: f64,
    pub degrees_of_freedom: f64,
    pub t_statistic: f64,
    pub standard_error: f64,
    pub alpha: ConfidenceLevel,
}

impl WelchResult {
    /// True when zero lies strictly below the interval.
    pub fn excludes_zero(&self) -> bool {
        self.lower_bound > 0.0
    }
}

/// Tests `mean(a) > mean(b)` with unequal variances (Welch–Satterthwaite
/// degrees of freedom).
pub fn welch_one_sided(a: &[f64], b: &[f64], level: ConfidenceLevel) -> Result<WelchResult> {
    for (name, s) in [("first", a), ("second", b)] {
        if s.len() < 2 {
            return Err(Error::invalid(format!(
                "{name} sample needs at least 2 values, got {}",
                s.len()
            )));
        }
        check_finite(s)?;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = variance(a)? / na;
    let vb = variance(b)? / nb;
    let se2 = va + vb;
    if se2.is_nan() || se2 <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let se = se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let diff = mean(a)? - mean(b)?;
    let lower_bound = diff - t_quantile(level.value(), df)? * se;
    Ok(WelchResult {
        mean_difference: diff,
        lower_bound,
        degrees_of_freedom: df,
        t_statistic: diff / se,
        standard_error: se,
        alpha: level,
    })
}
