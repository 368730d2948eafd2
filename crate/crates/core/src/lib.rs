//! Statistical validation of program speedups.
//!
//! The crate decides, at a declared confidence level, whether an optimized
//! program variant is faster than its baseline, measures the speedup with a
//! median ratio, and aggregates many benchmark verdicts into a weighted
//! performance gain and a confidence interval on the fraction of accelerated
//! programs.
//!
//! Module map:
//!
//! * [`stats`]: order statistics, normal and Student-t quantiles,
//!   Shapiro-Wilk, one-sided Welch test.
//! * [`protocol`]: the normality → Welch → median-ratio decision procedure.
//! * [`aggregate`]: overall gain factor, proportion intervals, sample sizes.
//! * [`harness`]: runs a command k times in fresh processes and times it.
//! * [`timing_file`] and [`report`]: on-disk formats and rendered output.
//! * [`simulate`]: Monte Carlo calibration of the tests.
//!
//! With the default `parallel` feature, batch analysis and the simulations
//! fan out over a rayon thread pool; without it they run sequentially and
//! produce identical results.

pub mod aggregate;
pub mod error;
pub mod harness;
mod par;
pub mod protocol;
pub mod report;
pub mod simulate;
pub mod stats;
pub mod timing_file;

pub use crate::aggregate::{
    banned_means, min_sample_size, min_sample_size_raw, overall_gain, proportion_ci, BannedMeans,
    GainReport, GainRow, ProportionEstimate, ProportionMethod, WeightScheme,
};
pub use crate::error::{Error, Result};
pub use crate::harness::{
    execute_plan, execute_plan_with, warn_independence, EnvironmentRecord, ExecOptions, Recording,
    RunPlan,
};
pub use crate::par::Strategy;
pub use crate::protocol::{
    assess_batch, assess_speedup, naive_speedups, Decision, NaiveSpeedups, ProtocolConfig,
    SpeedupVerdict, TimingSample, Variant, Warning,
};
pub use crate::report::{build_report, AnalysisRecord, Report, ReportOptions, VerdictFile};
pub use crate::stats::{
    mean, median, normal_quantile, shapiro_wilk, t_quantile, welch_one_sided, ConfidenceLevel,
    NormalityResult, Sample, WelchResult,
};
