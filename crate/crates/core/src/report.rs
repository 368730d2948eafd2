//! Machine-readable result files and their human rendering.
//!
//! Every rendered line carries an `α=` tag: the confidence level of the
//! statistic it shows, or `α=none` for figures that have no confidence
//! level attached (and are labelled as such).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::aggregate::{
    banned_means, overall_gain, proportion_ci, BannedMeans, GainReport, ProportionEstimate,
    ProportionMethod, WeightScheme,
};
use crate::error::{Error, Result};
use crate::protocol::{
    naive_speedups, Decision, NaiveSpeedups, SpeedupVerdict, TimingSample, Warning,
};
use crate::stats::{ConfidenceLevel, NormalityResult};
use crate::timing_file::Seconds;

pub const FORMAT_VERSION: u32 = 1;
pub const VERDICTS_KIND: &str = "speedup-verdicts";
pub const REPORT_KIND: &str = "speedup-report";

impl Serialize for Seconds {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Seconds {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One analyzed benchmark: the verdict plus what is needed to recheck it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub verdict: SpeedupVerdict,
    pub naive: Option<NaiveSpeedups>,
    #[serde(default)]
    pub baseline_times: Vec<f64>,
    #[serde(default)]
    pub optimized_times: Vec<f64>,
}

impl AnalysisRecord {
    pub fn new(verdict: SpeedupVerdict, baseline: &TimingSample, optimized: &TimingSample) -> Self {
        AnalysisRecord {
            naive: naive_speedups(baseline, optimized).ok(),
            baseline_times: baseline.times.values().to_vec(),
            optimized_times: optimized.times.values().to_vec(),
            verdict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictFile {
    pub format_version: u32,
    pub kind: String,
    pub records: Vec<AnalysisRecord>,
}

impl VerdictFile {
    pub fn new(records: Vec<AnalysisRecord>) -> Self {
        VerdictFile {
            format_version: FORMAT_VERSION,
            kind: VERDICTS_KIND.into(),
            records,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: VerdictFile = serde_json::from_str(text)?;
        check_header(f.format_version, &f.kind, VERDICTS_KIND)?;
        Ok(f)
    }
}

fn check_header(version: u32, kind: &str, expected: &str) -> Result<()> {
    if kind != expected {
        return Err(Error::invalid(format!(
            "expected a `{expected}` file, got `{kind}`"
        )));
    }
    if version != FORMAT_VERSION {
        return Err(Error::invalid(format!(
            "unsupported format version {version}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum ProportionSection {
    Estimate(ProportionEstimate),
    Refused {
        accelerated: u64,
        total: u64,
        alpha: ConfidenceLevel,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub kind: String,
    pub verdicts: Vec<SpeedupVerdict>,
    pub gain: Option<GainReport>,
    /// Why `gain` is missing, when it is.
    pub gain_note: Option<String>,
    pub proportion: ProportionSection,
    /// Classical means of the confirmed speedups; shown only as a caveat.
    pub banned_means: Option<BannedMeans>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Report = serde_json::from_str(text)?;
        check_header(r.format_version, &r.kind, REPORT_KIND)?;
        Ok(r)
    }

    /// True when part of the report was refused on statistical grounds.
    pub fn has_refusal(&self) -> bool {
        self.gain.is_none() || matches!(self.proportion, ProportionSection::Refused { .. })
    }
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub scheme: WeightScheme,
    pub include_slowdowns: bool,
    /// Level of the proportion interval; the smallest verdict level if unset.
    pub proportion_level: Option<ConfidenceLevel>,
    pub proportion_method: ProportionMethod,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            scheme: WeightScheme::MedianProportional,
            include_slowdowns: false,
            proportion_level: None,
            proportion_method: ProportionMethod::Wald,
        }
    }
}

/// Builds the suite report. Statistical refusals (nothing to aggregate,
/// too few accelerated benchmarks) are recorded in the report, other
/// errors are returned.
pub fn build_report(verdicts: Vec<SpeedupVerdict>, options: &ReportOptions) -> Result<Report> {
    if verdicts.is_empty() {
        return Err(Error::NothingToAggregate);
    }
    let (gain, gain_note) =
        match overall_gain(&verdicts, &options.scheme, options.include_slowdowns) {
            Ok(g) => (Some(g), None),
            Err(e @ Error::NothingToAggregate) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };

    let accelerated = verdicts.iter().filter(|v| v.is_confirmed()).count() as u64;
    let total = verdicts.len() as u64;
    let level = options.proportion_level.unwrap_or_else(|| {
        verdicts
            .iter()
            .map(|v| v.alpha)
            .min_by(|a, b| a.value().total_cmp(&b.value()))
            .expect("non-empty")
    });
    let proportion = match proportion_ci(accelerated, total, level, options.proportion_method) {
        Ok(est) => ProportionSection::Estimate(est),
        Err(e @ Error::GuardViolated { .. }) => ProportionSection::Refused {
            accelerated,
            total,
            alpha: level,
            reason: e.to_string(),
        },
        Err(e) => return Err(e),
    };

    let confirmed: Vec<f64> = verdicts.iter().filter_map(|v| v.speedup).collect();
    let banned = banned_means(&confirmed).ok();

    Ok(Report {
        format_version: FORMAT_VERSION,
        kind: REPORT_KIND.into(),
        verdicts,
        gain,
        gain_note,
        proportion,
        banned_means: banned,
    })
}

/// `x` with `digits` significant digits.
pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn alpha_tag(a: ConfidenceLevel) -> String {
    format!("[α={a}]")
}

fn normality_line(out: &mut String, label: &str, n: &NormalityResult) {
    let _ = writeln!(
        out,
        "  normality ({label}, {} runs): W = {}, p = {}, {}  {}",
        n.size,
        sig(n.w_statistic, 4),
        sig(n.p_value, 4),
        if n.passed { "passed" } else { "failed" },
        alpha_tag(n.alpha)
    );
}

/// The one-line summary of a verdict.
pub fn verdict_summary(v: &SpeedupVerdict) -> String {
    let lb = v
        .welch
        .map(|w| format!(", lower bound {}", sig(w.lower_bound, 7)))
        .unwrap_or_default();
    match v.decision {
        Decision::SpeedupConfirmed => format!(
            "SpeedupConfirmed, speedup {}{lb}, α={}",
            v.speedup.map_or_else(|| "n/a".into(), |s| sig(s, 4)),
            v.alpha
        ),
        Decision::NoSpeedupAtConfidence => format!("NoSpeedupAtConfidence{lb}, α={}", v.alpha),
        Decision::InsufficientRuns => format!(
            "InsufficientRuns (normality not established; collect at least 30 runs), α={}",
            v.alpha
        ),
    }
}

pub fn render_record(out: &mut String, rec: &AnalysisRecord) {
    let v = &rec.verdict;
    let tag = alpha_tag(v.alpha);
    let _ = writeln!(out, "benchmark {}  {tag}", v.benchmark_id);
    let _ = writeln!(out, "  verdict: {}", verdict_summary(v));
    if let Some(w) = &v.welch {
        let _ = writeln!(
            out,
            "  welch one-sided test: mean difference {} s, t = {}, df = {}, interval [{}, +inf)  {tag}",
            sig(w.mean_difference, 7),
            sig(w.t_statistic, 4),
            sig(w.degrees_of_freedom, 4),
            sig(w.lower_bound, 7),
        );
    }
    if let Some(n) = &v.normality.baseline {
        normality_line(out, "baseline", n);
    }
    if let Some(n) = &v.normality.optimized {
        normality_line(out, "optimized", n);
    }
    if v.normality.is_empty() && v.decision != Decision::InsufficientRuns {
        let _ = writeln!(
            out,
            "  normality: not required ({} and {} runs)  {tag}",
            v.baseline_runs, v.optimized_runs
        );
    }
    let _ = writeln!(
        out,
        "  medians: baseline {} s, optimized {} s  {tag}",
        sig(v.baseline_median, 7),
        sig(v.optimized_median, 7)
    );
    for w in &v.warnings {
        let text = match w {
            Warning::IncoherentLowConfidence => {
                "speedup confirmed but below 1; the confidence level is too low to be meaningful"
            }
            Warning::BackToBackRuns => "runs were executed back-to-back",
            Warning::LowRunCount => "fewer than 30 runs",
        };
        let _ = writeln!(out, "  warning {w}: {text}  {tag}");
    }
    if let Some(n) = &rec.naive {
        let _ = writeln!(
            out,
            "  naive ratios (statistically unsound, not used for any decision): min {}, max {}, mean {}, median {}  [α=none]",
            sig(n.min_ratio, 4),
            sig(n.max_ratio, 4),
            sig(n.mean_ratio, 4),
            sig(n.median_ratio, 4),
        );
    }
}

pub fn render_verdicts(file: &VerdictFile) -> String {
    let mut out = String::new();
    for (i, rec) in file.records.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        render_record(&mut out, rec);
    }
    out
}

fn percent(x: f64) -> String {
    format!("{}%", sig(100.0 * x, 4))
}

pub fn render_report(r: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "per-benchmark verdicts:");
    for v in &r.verdicts {
        let _ = writeln!(out, "  {}: {}", v.benchmark_id, verdict_summary(v));
    }
    out.push('\n');

    match &r.gain {
        Some(g) => {
            let tag = alpha_tag(g.aggregate_alpha);
            let _ =
                writeln!(
                out,
                "overall performance gain G = {} ({} weights, {} included, slowdowns {})  {tag}",
                percent(g.overall_gain),
                g.scheme,
                g.included.len(),
                if g.include_slowdowns { "included" } else { "excluded" },
            );
            for row in &g.included {
                let _ = writeln!(
                    out,
                    "  {}: weight {}, ET {} s, ET' {} s, weighted gain {}  {}",
                    row.benchmark_id,
                    sig(row.weight, 6),
                    sig(row.baseline_median, 7),
                    sig(row.optimized_median, 7),
                    sig(row.weighted_gain, 6),
                    alpha_tag(row.alpha)
                );
            }
            let excluded = if g.excluded.is_empty() {
                "none".to_string()
            } else {
                g.excluded.join(", ")
            };
            let _ = writeln!(out, "  excluded (no confirmed speedup): {excluded}  {tag}");
        }
        None => {
            let level = r
                .verdicts
                .iter()
                .map(|v| v.alpha)
                .min_by(|a, b| a.value().total_cmp(&b.value()));
            let _ = writeln!(
                out,
                "overall performance gain: not computed ({})  {}",
                r.gain_note.as_deref().unwrap_or("no data"),
                level.map_or_else(|| "[α=none]".into(), alpha_tag)
            );
        }
    }

    match &r.proportion {
        ProportionSection::Estimate(p) => {
            let width = p
                .half_width
                .map(|h| format!(", half-width {}", sig(h, 4)))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "accelerated benchmarks: {}/{} = {}, interval [{}, {}] ({}{width})  {}",
                p.accelerated,
                p.total,
                sig(p.proportion, 4),
                sig(p.low, 7),
                sig(p.high, 7),
                p.method,
                alpha_tag(p.alpha)
            );
        }
        ProportionSection::Refused {
            accelerated,
            total,
            alpha,
            reason,
        } => {
            let _ = writeln!(
                out,
                "accelerated benchmarks: {accelerated}/{total}; GuardViolated: {reason}  {}",
                alpha_tag(*alpha)
            );
        }
    }

    if let Some(m) = &r.banned_means {
        let _ = writeln!(
            out,
            "classical means of speedups (not for publication): arithmetic {}, geometric {}, harmonic {}  [α=none]",
            sig(m.arithmetic, 5),
            sig(m.geometric, 5),
            sig(m.harmonic, 5),
        );
    }
    out
}

pub mod lint {
    /// Non-empty lines containing a digit but no `α=` tag.
    pub fn undeclared_lines(text: &str) -> Vec<&str> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .filter(|l| l.chars().any(|c| c.is_ascii_digit()))
            .filter(|l| !l.contains("α="))
            .collect()
    }
}
