//! The speedup decision procedure.
//!
//! 1. Any sample with fewer than `min_runs` observations must pass a
//!    Shapiro-Wilk normality check, otherwise more runs are required.
//! 2. A one-sided Welch test on `baseline - optimized` decides whether the
//!    optimized variant is faster on average at the requested level.
//! 3. Only a confirmed speedup is measured, as a ratio of medians.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::EnvironmentRecord;
use crate::par::{map_slice, Strategy};
use crate::stats::{
    mean, median, shapiro_wilk, welch_one_sided, ConfidenceLevel, NormalityResult, Sample,
    WelchResult,
};

pub const DEFAULT_MIN_RUNS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    Optimized,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Optimized => "optimized",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "optimized" => Ok(Variant::Optimized),
            other => Err(Error::invalid(format!(
                "variant must be `baseline` or `optimized`, got `{other}`"
            ))),
        }
    }
}

/// Observed execution times of one program variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSample {
    pub benchmark_id: String,
    pub variant: Variant,
    pub times: Sample,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentRecord>,
}

impl TimingSample {
    pub fn new(benchmark_id: impl Into<String>, variant: Variant, times: Sample) -> Result<Self> {
        if times.size() < 2 {
            return Err(Error::invalid(format!(
                "a timing sample needs at least 2 runs, got {}",
                times.size()
            )));
        }
        Ok(TimingSample {
            benchmark_id: benchmark_id.into(),
            variant,
            times,
            environment: None,
        })
    }

    pub fn with_environment(mut self, env: EnvironmentRecord) -> Self {
        self.environment = Some(env);
        self
    }

    pub fn from_values(id: &str, variant: Variant, values: &[f64]) -> Result<Self> {
        TimingSample::new(id, variant, Sample::new(values.to_vec())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    SpeedupConfirmed,
    NoSpeedupAtConfidence,
    InsufficientRuns,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::SpeedupConfirmed => "SpeedupConfirmed",
            Decision::NoSpeedupAtConfidence => "NoSpeedupAtConfidence",
            Decision::InsufficientRuns => "InsufficientRuns",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Warning {
    /// A speedup was confirmed but the median ratio is below 1; happens at
    /// low confidence levels.
    IncoherentLowConfidence,
    /// Runs of a plan are executed back-to-back with no cooldown.
    BackToBackRuns,
    /// Fewer than 30 runs were requested.
    LowRunCount,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Warning::IncoherentLowConfidence => "IncoherentLowConfidence",
            Warning::BackToBackRuns => "BackToBackRuns",
            Warning::LowRunCount => "LowRunCount",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalityChecks {
    pub baseline: Option<NormalityResult>,
    pub optimized: Option<NormalityResult>,
}

impl NormalityChecks {
    pub fn is_empty(&self) -> bool {
        self.baseline.is_none() && self.optimized.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupVerdict {
    pub benchmark_id: String,
    pub decision: Decision,
    pub alpha: ConfidenceLevel,
    pub welch: Option<WelchResult>,
    /// `baseline_median / optimized_median`, only when confirmed.
    pub speedup: Option<f64>,
    pub baseline_median: f64,
    pub optimized_median: f64,
    pub baseline_runs: usize,
    pub optimized_runs: usize,
    pub normality: NormalityChecks,
    pub warnings: Vec<Warning>,
}

impl SpeedupVerdict {
    pub fn is_confirmed(&self) -> bool {
        self.decision == Decision::SpeedupConfirmed
    }
}

/// Knobs of the decision procedure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    /// Samples smaller than this must pass the normality check.
    pub min_runs: usize,
    /// Level of the Shapiro-Wilk check; independent of the Welch level.
    pub normality_level: ConfidenceLevel,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            min_runs: DEFAULT_MIN_RUNS,
            normality_level: ConfidenceLevel::DEFAULT,
        }
    }
}

fn check_pair(baseline: &TimingSample, optimized: &TimingSample) -> Result<()> {
    if baseline.benchmark_id != optimized.benchmark_id {
        return Err(Error::MismatchedInput(format!(
            "benchmark ids differ: `{}` vs `{}`",
            baseline.benchmark_id, optimized.benchmark_id
        )));
    }
    if baseline.variant == optimized.variant {
        return Err(Error::MismatchedInput(format!(
            "both samples of `{}` are {}",
            baseline.benchmark_id, baseline.variant
        )));
    }
    Ok(())
}

fn normality_if_needed(
    sample: &Sample,
    config: &ProtocolConfig,
) -> Result<Option<NormalityResult>> {
    if sample.size() >= config.min_runs {
        return Ok(None);
    }
    shapiro_wilk(sample, config.normality_level).map(Some)
}

/// Decides whether `optimized` is faster than `baseline` at `level`.
pub fn assess_speedup(
    baseline: &TimingSample,
    optimized: &TimingSample,
    level: ConfidenceLevel,
    config: &ProtocolConfig,
) -> Result<SpeedupVerdict> {
    check_pair(baseline, optimized)?;
    let baseline_median = median(&baseline.times)?;
    let optimized_median = median(&optimized.times)?;

    // Fewer than three runs cannot be checked for normality at all.
    let uncheckable = [&baseline.times, &optimized.times]
        .iter()
        .any(|s| s.size() < config.min_runs && s.size() < 3);
    let normality = if uncheckable {
        NormalityChecks::default()
    } else {
        NormalityChecks {
            baseline: normality_if_needed(&baseline.times, config)?,
            optimized: normality_if_needed(&optimized.times, config)?,
        }
    };
    let mut verdict = SpeedupVerdict {
        benchmark_id: baseline.benchmark_id.clone(),
        decision: Decision::InsufficientRuns,
        alpha: level,
        welch: None,
        speedup: None,
        baseline_median,
        optimized_median,
        baseline_runs: baseline.times.size(),
        optimized_runs: optimized.times.size(),
        normality,
        warnings: Vec::new(),
    };
    let normality_failed = [normality.baseline, normality.optimized]
        .iter()
        .flatten()
        .any(|r| !r.passed);
    if uncheckable || normality_failed {
        return Ok(verdict);
    }

    let welch = welch_one_sided(&baseline.times, &optimized.times, level)?;
    verdict.welch = Some(welch);
    if welch.excludes_zero() {
        let speedup = baseline_median / optimized_median;
        verdict.decision = Decision::SpeedupConfirmed;
        verdict.speedup = Some(speedup);
        if speedup < 1.0 {
            verdict.warnings.push(Warning::IncoherentLowConfidence);
        }
    } else {
        verdict.decision = Decision::NoSpeedupAtConfidence;
    }
    Ok(verdict)
}

/// Assesses many independent benchmark pairs; results keep input order.
pub fn assess_batch(
    pairs: &[(TimingSample, TimingSample)],
    level: ConfidenceLevel,
    config: &ProtocolConfig,
    strategy: Strategy,
) -> Vec<Result<SpeedupVerdict>> {
    map_slice(strategy, pairs, |(b, o)| {
        assess_speedup(b, o, level, config)
    })
}

/// The ratios people are tempted to publish. None of them carries a
/// confidence level and none is used for any decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiveSpeedups {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub median_ratio: f64,
}

pub fn naive_speedups(baseline: &TimingSample, optimized: &TimingSample) -> Result<NaiveSpeedups> {
    let (b, o) = (baseline.times.values(), optimized.times.values());
    if b.is_empty() || o.is_empty() {
        return Err(Error::EmptySample);
    }
    let min = |s: &[f64]| s.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |s: &[f64]| s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(NaiveSpeedups {
        min_ratio: min(b) / min(o),
        max_ratio: max(b) / max(o),
        mean_ratio: mean(b)? / mean(o)?,
        median_ratio: median(b)? / median(o)?,
    })
}
