//! Deterministic statistical primitives.
//!
//! Functions here operate on plain `&[f64]` so they can be reused on
//! simulated data; [`Sample`] is the validated wrapper used for timings.

mod distributions;
mod shapiro_wilk;
mod welch;

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::distributions::{normal_cdf, normal_quantile, t_cdf, t_pdf, t_quantile};
pub use self::shapiro_wilk::{shapiro_wilk, shapiro_wilk_statistic, NormalityResult};
pub use self::welch::{welch_one_sided, WelchResult};

/// Execution times in seconds. Non-empty, every value strictly positive and
/// finite. Order of insertion is kept; order statistics sort a copy.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Sample(Vec<f64>);

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidTiming(format!(
                "value #{} ({v}) is not a strictly positive finite time",
                i + 1
            )));
        }
        Ok(Sample(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.len()
    }

    /// Multiplies every value by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Sample::new(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Sample {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Sample::new(values)
    }
}

impl<'de> Deserialize<'de> for Sample {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        Sample::new(values).map_err(serde::de::Error::custom)
    }
}

/// A confidence level strictly between 0 and 1 (0.95 means 95 %).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub const DEFAULT: ConfidenceLevel = ConfidenceLevel(0.95);

    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(ConfidenceLevel(alpha))
        } else {
            Err(Error::invalid(format!(
                "confidence level must lie in (0, 1), got {alpha}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Significance `1 - alpha`.
    pub fn risk(self) -> f64 {
        1.0 - self.0
    }
}

impl Default for ConfidenceLevel {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl fmt::Display for ConfidenceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl TryFrom<f64> for ConfidenceLevel {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        ConfidenceLevel::new(alpha)
    }
}

impl<'de> Deserialize<'de> for ConfidenceLevel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        ConfidenceLevel::new(f64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::invalid(format!("value #{} is not finite", i + 1))),
        None => Ok(()),
    }
}

pub(crate) fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Middle order statistic; the mean of the two middle ones for even sizes.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    check_finite(values)?;
    let sorted = sorted_copy(values);
    let mid = sorted.len() / 2;
    Ok(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}

/// Unbiased sample variance (divisor n - 1). Requires at least two values.
pub fn variance(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::UnsupportedSampleSize {
            size: values.len(),
            min: 2,
            max: usize::MAX,
        });
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Ok(ss / (values.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    const T1: [f64; 5] = [2.799, 2.046, 1.259, 1.877, 2.244];
    const T2: [f64; 5] = [1.046, 0.259, 0.877, 1.244, 1.799];

    #[test]
    fn median_examples() {
        assert_eq!(median(&T1).unwrap(), 2.046);
        assert_eq!(median(&T2).unwrap(), 1.046);
        assert_eq!(median(&[5.0]).unwrap(), 5.0);
        assert_eq!(median(&[1.0, 3.0]).unwrap(), 2.0);
        assert!(matches!(median(&[]), Err(Error::EmptySample)));
    }

    #[test]
    fn mean_examples() {
        approx::assert_abs_diff_eq!(mean(&T2).unwrap(), 1.045, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(mean(&T1).unwrap(), 2.045, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(mean(&[0.7, 0.7, 0.7]).unwrap(), 0.7, epsilon = 1e-15);
        assert!(matches!(mean(&[]), Err(Error::EmptySample)));
    }

    #[test]
    fn sample_rejects_bad_times() {
        assert!(matches!(Sample::new(vec![]), Err(Error::EmptySample)));
        assert!(Sample::new(vec![1.0, 0.0]).is_err());
        assert!(Sample::new(vec![1.0, -2.0]).is_err());
        assert!(Sample::new(vec![f64::NAN]).is_err());
        assert!(Sample::new(vec![f64::INFINITY]).is_err());
        assert_eq!(Sample::new(T1.to_vec()).unwrap().size(), 5);
    }

    #[test]
    fn confidence_level_bounds() {
        assert!(ConfidenceLevel::new(0.0).is_err());
        assert!(ConfidenceLevel::new(1.0).is_err());
        assert!(ConfidenceLevel::new(f64::NAN).is_err());
        assert_eq!(ConfidenceLevel::new(0.9).unwrap().value(), 0.9);
        let parsed: std::result::Result<ConfidenceLevel, _> = serde_json::from_str("1.5");
        assert!(parsed.is_err());
    }

    #[test]
    fn variance_needs_two_values() {
        assert!(variance(&[1.0]).is_err());
        approx::assert_abs_diff_eq!(variance(&[1.0, 3.0]).unwrap(), 2.0);
    }
}
