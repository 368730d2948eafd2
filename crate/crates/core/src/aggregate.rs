//! Suite-level summaries: the weighted overall performance gain and the
//! confidence interval on the share of accelerated benchmarks.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{Decision, SpeedupVerdict};
use crate::stats::{normal_quantile, ConfidenceLevel};

/// Minimum number of accelerated benchmarks for a proportion interval.
pub const PROPORTION_GUARD: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "weights")]
pub enum WeightScheme {
    /// Weight proportional to the baseline median time.
    MedianProportional,
    Uniform,
    /// Positive weights per benchmark id; normalized before use.
    UserSupplied(BTreeMap<String, f64>),
}

impl WeightScheme {
    pub fn name(&self) -> &'static str {
        match self {
            WeightScheme::MedianProportional => "MedianProportional",
            WeightScheme::Uniform => "Uniform",
            WeightScheme::UserSupplied(_) => "UserSupplied",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub benchmark_id: String,
    pub decision: Decision,
    /// Normalized weight.
    pub weight: f64,
    pub baseline_median: f64,
    pub optimized_median: f64,
    /// `weight * (baseline_median - optimized_median)`.
    pub weighted_gain: f64,
    pub alpha: ConfidenceLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub scheme: String,
    pub include_slowdowns: bool,
    pub included: Vec<GainRow>,
    /// Benchmarks left out because no speedup was confirmed.
    pub excluded: Vec<String>,
    pub overall_gain: f64,
    /// Smallest confidence level among the included tests.
    pub aggregate_alpha: ConfidenceLevel,
}

/// `1 - Σ W·ET' / Σ W·ET` over the given rows.
pub fn gain_from_rows(rows: &[GainRow]) -> f64 {
    let (num, den) = rows.iter().fold((0.0, 0.0), |(n, d), r| {
        (
            n + r.weight * r.optimized_median,
            d + r.weight * r.baseline_median,
        )
    });
    1.0 - num / den
}

fn check_median(id: &str, label: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTiming(format!(
            "{label} median of `{id}` must be positive, got {value}"
        )))
    }
}

/// Combines per-benchmark verdicts into the overall gain factor `G`.
///
/// Unless `include_slowdowns` is set, only confirmed speedups enter; the
/// rest are listed in `excluded`. With slowdowns included `G` may be
/// negative.
pub fn overall_gain(
    verdicts: &[SpeedupVerdict],
    scheme: &WeightScheme,
    include_slowdowns: bool,
) -> Result<GainReport> {
    let (included, excluded): (Vec<&SpeedupVerdict>, Vec<&SpeedupVerdict>) = verdicts
        .iter()
        .partition(|v| include_slowdowns || v.decision == Decision::SpeedupConfirmed);
    if included.is_empty() {
        return Err(Error::NothingToAggregate);
    }
    for v in &included {
        check_median(&v.benchmark_id, "baseline", v.baseline_median)?;
        check_median(&v.benchmark_id, "optimized", v.optimized_median)?;
    }

    let raw: Vec<f64> = match scheme {
        WeightScheme::MedianProportional => included.iter().map(|v| v.baseline_median).collect(),
        WeightScheme::Uniform => vec![1.0; included.len()],
        WeightScheme::UserSupplied(map) => included
            .iter()
            .map(|v| match map.get(&v.benchmark_id) {
                Some(&w) if w.is_finite() && w > 0.0 => Ok(w),
                Some(&w) => Err(Error::invalid(format!(
                    "weight of `{}` must be positive, got {w}",
                    v.benchmark_id
                ))),
                None => Err(Error::invalid(format!(
                    "no weight supplied for `{}`",
                    v.benchmark_id
                ))),
            })
            .collect::<Result<_>>()?,
    };
    let total: f64 = raw.iter().sum();

    let rows: Vec<GainRow> = included
        .iter()
        .zip(&raw)
        .map(|(v, w)| {
            let weight = w / total;
            GainRow {
                benchmark_id: v.benchmark_id.clone(),
                decision: v.decision,
                weight,
                baseline_median: v.baseline_median,
                optimized_median: v.optimized_median,
                weighted_gain: weight * (v.baseline_median - v.optimized_median),
                alpha: v.alpha,
            }
        })
        .collect();
    let aggregate_alpha = rows
        .iter()
        .map(|r| r.alpha)
        .min_by(|a, b| a.value().total_cmp(&b.value()))
        .expect("at least one row");

    Ok(GainReport {
        scheme: scheme.name().to_string(),
        include_slowdowns,
        overall_gain: gain_from_rows(&rows),
        included: rows,
        excluded: excluded.iter().map(|v| v.benchmark_id.clone()).collect(),
        aggregate_alpha,
    })
}

/// Classical means of speedups, computed only to show why they are not
/// reported as a suite summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BannedMeans {
    pub arithmetic: f64,
    pub geometric: f64,
    pub harmonic: f64,
    /// Always true.
    pub not_for_publication: bool,
}

pub fn banned_means(speedups: &[f64]) -> Result<BannedMeans> {
    if speedups.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(s) = speedups.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::invalid(format!(
            "speedups must be positive, got {s}"
        )));
    }
    let n = speedups.len() as f64;
    Ok(BannedMeans {
        arithmetic: speedups.iter().sum::<f64>() / n,
        geometric: (speedups.iter().map(|s| s.ln()).sum::<f64>() / n).exp(),
        harmonic: n / speedups.iter().map(|s| 1.0 / s).sum::<f64>(),
        not_for_publication: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ProportionMethod {
    /// `C ∓ z·sqrt(C(1-C)/n)`.
    #[default]
    Wald,
    /// Wilson score interval with continuity correction.
    WilsonContinuity,
}

impl fmt::Display for ProportionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProportionMethod::Wald => "Wald",
            ProportionMethod::WilsonContinuity => "WilsonContinuity",
        })
    }
}

impl std::str::FromStr for ProportionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wald" => Ok(ProportionMethod::Wald),
            "wilson" | "wilsoncontinuity" | "wilson-continuity" => {
                Ok(ProportionMethod::WilsonContinuity)
            }
            _ => Err(Error::invalid(format!(
                "unknown proportion method `{s}` (expected wald or wilson)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionEstimate {
    pub accelerated: u64,
    pub total: u64,
    pub proportion: f64,
    pub alpha: ConfidenceLevel,
    pub method: ProportionMethod,
    pub low: f64,
    pub high: f64,
    /// Wald only.
    pub half_width: Option<f64>,
}

fn two_sided_z(level: ConfidenceLevel) -> Result<f64> {
    normal_quantile((1.0 + level.value()) / 2.0)
}

/// Confidence interval for the proportion `accelerated / total`.
pub fn proportion_ci(
    accelerated: u64,
    total: u64,
    level: ConfidenceLevel,
    method: ProportionMethod,
) -> Result<ProportionEstimate> {
    if total == 0 || accelerated > total {
        return Err(Error::invalid(format!(
            "need 0 < accelerated <= total, got {accelerated} of {total}"
        )));
    }
    if accelerated < PROPORTION_GUARD {
        return Err(Error::GuardViolated {
            accelerated,
            required: PROPORTION_GUARD,
        });
    }
    let n = total as f64;
    let c = accelerated as f64 / n;
    let z = two_sided_z(level)?;
    let (low, high, half_width) = match method {
        ProportionMethod::Wald => {
            let r = z * (c * (1.0 - c) / n).sqrt();
            ((c - r).max(0.0), (c + r).min(1.0), Some(r))
        }
        ProportionMethod::WilsonContinuity => {
            // The correction shrinks to |x - n/2| when that is below 1/2,
            // matching the reference tool's behaviour at x = n/2.
            let correction = (accelerated as f64 - n / 2.0).abs().min(0.5) / n;
            let z22n = z * z / (2.0 * n);
            let bound = |pc: f64, sign: f64| {
                (pc + z22n + sign * z * (pc * (1.0 - pc) / n + z22n / (2.0 * n)).sqrt())
                    / (1.0 + 2.0 * z22n)
            };
            let upper = c + correction;
            let lower = c - correction;
            let high = if upper >= 1.0 { 1.0 } else { bound(upper, 1.0) };
            let low = if lower <= 0.0 {
                0.0
            } else {
                bound(lower, -1.0)
            };
            (low.max(0.0), high.min(1.0), None)
        }
    };
    Ok(ProportionEstimate {
        accelerated,
        total,
        proportion: c,
        alpha: level,
        method,
        low,
        high,
        half_width,
    })
}

/// Unrounded right-hand side `z² · C(1-C) / r²`.
pub fn min_sample_size_raw(proportion: f64, precision: f64, level: ConfidenceLevel) -> Result<f64> {
    if !(proportion > 0.0 && proportion < 1.0) {
        return Err(Error::invalid(format!(
            "proportion must lie in (0, 1), got {proportion}"
        )));
    }
    if !(precision > 0.0 && precision < 1.0) {
        return Err(Error::invalid(format!(
            "precision must lie in (0, 1), got {precision}"
        )));
    }
    let z = two_sided_z(level)?;
    Ok(z * z * proportion * (1.0 - proportion) / (precision * precision))
}

/// Smallest number of benchmarks giving a Wald interval of half-width
/// `precision` at `level`, assuming the observed proportion holds. At least 1.
pub fn min_sample_size(proportion: f64, precision: f64, level: ConfidenceLevel) -> Result<u64> {
    let raw = min_sample_size_raw(proportion, precision, level)?;
    Ok((raw.ceil() as u64).max(1))
}
