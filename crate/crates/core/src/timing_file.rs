//! Raw timing files.
//!
//! A timing file is UTF-8 text: `#` header lines carrying the format
//! version and the environment record, followed by CSV rows:
//!
//! ```text
//! # speedup-timing format_version=1
//! # environment={"host":"lab-3",...}
//! benchmark_id,variant,run,time_seconds,captured_at
//! bench1,baseline,1,0.203114512,2026-10-18T09:14:03.120581337Z
//! ```
//!
//! Times are decimal strings kept at the precision they were recorded with;
//! they never pass through a binary float on their way back to disk.
//! `captured_at` may be left empty in hand-written files.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{EnvironmentRecord, Recording};
use crate::protocol::{TimingSample, Variant};
use crate::stats::Sample;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "# speedup-timing format_version=";
const ENV_PREFIX: &str = "# environment=";
const COLUMNS: [&str; 5] = [
    "benchmark_id",
    "variant",
    "run",
    "time_seconds",
    "captured_at",
];

/// A non-negative decimal number of seconds with up to nine fractional
/// digits, remembering how many digits were recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seconds {
    nanos: u64,
    digits: u8,
}

impl Seconds {
    pub fn from_duration(d: Duration) -> Self {
        Seconds {
            nanos: d.as_nanos() as u64,
            digits: 9,
        }
    }

    pub fn as_f64(self) -> f64 {
        // Exact integer over exact power of ten: one correctly rounded division.
        self.nanos as f64 / 1e9
    }

    pub fn nanos(self) -> u64 {
        self.nanos
    }

    pub fn digits(self) -> u8 {
        self.digits
    }
}

impl fmt::Display for Seconds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.nanos / 1_000_000_000;
        if self.digits == 0 {
            return write!(f, "{whole}");
        }
        let frac = self.nanos % 1_000_000_000;
        let scaled = frac / 10u64.pow(9 - u32::from(self.digits));
        write!(
            f,
            "{whole}.{scaled:0width$}",
            width = usize::from(self.digits)
        )
    }
}

impl FromStr for Seconds {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
        let all_digits = |t: &str| t.bytes().all(|b| b.is_ascii_digit());
        if whole.is_empty() || !all_digits(whole) || !all_digits(frac) || (s.ends_with('.')) {
            return Err(format!("`{s}` is not a plain decimal number of seconds"));
        }
        if frac.len() > 9 {
            return Err(format!("`{s}` has more than nine fractional digits"));
        }
        let whole: u64 = whole
            .parse()
            .map_err(|_| format!("`{s}` is out of range"))?;
        let digits = frac.len() as u8;
        let frac_nanos = if frac.is_empty() {
            0
        } else {
            frac.parse::<u64>().unwrap() * 10u64.pow(9 - u32::from(digits))
        };
        let nanos = whole
            .checked_mul(1_000_000_000)
            .and_then(|n| n.checked_add(frac_nanos))
            .ok_or_else(|| format!("`{s}` is out of range"))?;
        Ok(Seconds { nanos, digits })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub benchmark_id: String,
    pub variant: Variant,
    /// 1-based.
    pub run: usize,
    pub time: Seconds,
    pub captured_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingFile {
    pub format_version: u32,
    pub environment: Option<EnvironmentRecord>,
    pub rows: Vec<TimingRow>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRow {
    benchmark_id: String,
    variant: String,
    run: String,
    time_seconds: String,
    #[serde(default)]
    captured_at: Option<String>,
}

impl TimingFile {
    pub fn from_recording(rec: &Recording) -> Self {
        TimingFile {
            format_version: FORMAT_VERSION,
            environment: Some(rec.environment.clone()),
            rows: rec
                .runs
                .iter()
                .map(|r| TimingRow {
                    benchmark_id: rec.plan.benchmark_id.clone(),
                    variant: rec.plan.variant,
                    run: r.index,
                    time: Seconds::from_duration(r.elapsed),
                    captured_at: Some(r.started_at),
                })
                .collect(),
        }
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = format!("{MAGIC}{}\n", self.format_version);
        if let Some(env) = &self.environment {
            out.push_str(ENV_PREFIX);
            out.push_str(&serde_json::to_string(env)?);
            out.push('\n');
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(COLUMNS).map_err(csv_io)?;
        for row in &self.rows {
            w.write_record([
                row.benchmark_id.as_str(),
                row.variant.as_str(),
                &row.run.to_string(),
                &row.time.to_string(),
                &row.captured_at
                    .map(|t| t.to_rfc3339_opts(SecondsFormat::Nanos, true))
                    .unwrap_or_default(),
            ])
            .map_err(csv_io)?;
        }
        let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        out.push_str(&String::from_utf8(body).expect("csv output of utf-8 input"));
        Ok(out)
    }

    /// Parses a timing file; `origin` names it in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().peekable();
        let mut format_version = None;
        let mut environment = None;
        let mut header_lines = 0;
        while let Some((i, line)) = lines.peek().copied() {
            if !line.starts_with('#') {
                break;
            }
            lines.next();
            header_lines += 1;
            if let Some(v) = line.strip_prefix(MAGIC) {
                let v: u32 = v
                    .trim()
                    .parse()
                    .map_err(|_| err(i + 1, format!("bad format version `{v}`")))?;
                if v != FORMAT_VERSION {
                    return Err(err(i + 1, format!("unsupported format version {v}")));
                }
                format_version = Some(v);
            } else if let Some(json) = line.strip_prefix(ENV_PREFIX) {
                environment = Some(
                    serde_json::from_str(json)
                        .map_err(|e| err(i + 1, format!("bad environment record: {e}")))?,
                );
            }
        }
        let format_version =
            format_version.ok_or_else(|| err(1, format!("missing `{MAGIC}N` header line")))?;

        let body_start = text
            .split_inclusive('\n')
            .take(header_lines)
            .map(str::len)
            .sum::<usize>();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(&text.as_bytes()[body_start..]);
        let headers = reader
            .headers()
            .map_err(|e| err(header_lines + 1, e.to_string()))?
            .clone();
        for required in &COLUMNS[..4] {
            if !headers.iter().any(|h| h == *required) {
                return Err(err(
                    header_lines + 1,
                    format!("missing column `{required}`"),
                ));
            }
        }

        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for record in reader.deserialize::<RawRow>() {
            let raw = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize) + header_lines;
                err(line, e.to_string())
            })?;
            let line = header_lines + 2 + rows.len();
            let variant: Variant = raw
                .variant
                .parse()
                .map_err(|e: Error| err(line, e.to_string()))?;
            let run: usize = raw.run.parse().ok().filter(|r| *r >= 1).ok_or_else(|| {
                err(
                    line,
                    format!("run index `{}` is not a positive integer", raw.run),
                )
            })?;
            let time: Seconds = raw.time_seconds.parse().map_err(|m| err(line, m))?;
            if time.nanos == 0 {
                return Err(err(
                    line,
                    format!("time `{}` must be strictly positive", raw.time_seconds),
                ));
            }
            let captured_at = match raw.captured_at.as_deref().map(str::trim) {
                None | Some("") => None,
                Some(t) => Some(
                    DateTime::parse_from_rfc3339(t)
                        .map_err(|e| err(line, format!("bad timestamp `{t}`: {e}")))?
                        .with_timezone(&Utc),
                ),
            };
            if raw.benchmark_id.is_empty() {
                return Err(err(line, "empty benchmark id".into()));
            }
            if !seen.insert((raw.benchmark_id.clone(), variant, run)) {
                return Err(err(
                    line,
                    format!(
                        "duplicate row for ({}, {variant}, run {run})",
                        raw.benchmark_id
                    ),
                ));
            }
            rows.push(TimingRow {
                benchmark_id: raw.benchmark_id,
                variant,
                run,
                time,
                captured_at,
            });
        }
        Ok(TimingFile {
            format_version,
            environment,
            rows,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Writes to `path`, failing if it already exists.
    pub fn write_new(&self, path: &Path) -> Result<()> {
        let text = self.to_text()?;
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => Error::AlreadyExists(path.to_path_buf()),
                _ => Error::Io(e),
            })?;
        f.write_all(text.as_bytes())?;
        Ok(())
    }

    /// One sample per `(benchmark_id, variant)`, times in run order.
    pub fn samples(&self) -> Result<BTreeMap<(String, Variant), TimingSample>> {
        let mut grouped: BTreeMap<(String, Variant), Vec<&TimingRow>> = BTreeMap::new();
        for row in &self.rows {
            grouped
                .entry((row.benchmark_id.clone(), row.variant))
                .or_default()
                .push(row);
        }
        grouped
            .into_iter()
            .map(|(key, mut rows)| {
                rows.sort_by_key(|r| r.run);
                let times = Sample::new(rows.iter().map(|r| r.time.as_f64()).collect())?;
                let mut sample = TimingSample::new(key.0.clone(), key.1, times)?;
                sample.environment = self.environment.clone();
                Ok((key, sample))
            })
            .collect()
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// File name used for a fresh recording: id, variant and capture instant.
pub fn default_file_name(rec: &Recording) -> PathBuf {
    let stamp = rec.environment.captured_at.format("%Y%m%dT%H%M%S%.9fZ");
    let safe: String = rec
        .plan
        .benchmark_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    PathBuf::from(format!("{safe}-{}-{stamp}.csv", rec.plan.variant))
}
