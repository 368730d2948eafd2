//! Process-level benchmark execution.
//!
//! Every run is a separate child process, launched only after the previous
//! one has exited. Wall-clock time is taken with a monotonic clock from just
//! before spawn to just after the child is reaped, so spawn overhead is part
//! of every measurement (uniformly for both variants).

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::protocol::{TimingSample, Variant, Warning};
use crate::stats::Sample;

pub const DEFAULT_RUNS: usize = 30;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(3600);

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

fn default_runs() -> usize {
    DEFAULT_RUNS
}

fn default_timeout() -> Duration {
    DEFAULT_TIMEOUT
}

/// What to run, how often, and under which limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub benchmark_id: String,
    pub variant: Variant,
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default, with = "secs", rename = "cooldown_secs")]
    pub cooldown: Duration,
    #[serde(default)]
    pub working_dir: Option<PathBuf>,
    #[serde(default = "default_timeout", with = "secs", rename = "timeout_secs")]
    pub timeout: Duration,
}

impl RunPlan {
    pub fn new(
        benchmark_id: impl Into<String>,
        variant: Variant,
        program: impl Into<String>,
        args: Vec<String>,
    ) -> Self {
        RunPlan {
            benchmark_id: benchmark_id.into(),
            variant,
            program: program.into(),
            args,
            runs: DEFAULT_RUNS,
            cooldown: Duration::ZERO,
            working_dir: None,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::invalid("a plan needs at least one run"));
        }
        if self.timeout.is_zero() {
            return Err(Error::invalid("the per-run timeout must be positive"));
        }
        if self.benchmark_id.is_empty() || self.benchmark_id.contains([',', '\n', '\r']) {
            return Err(Error::invalid(format!(
                "benchmark id `{}` must be non-empty and free of commas and newlines",
                self.benchmark_id
            )));
        }
        Ok(())
    }
}

/// Warnings about the independence of the runs a plan will produce.
pub fn warn_independence(plan: &RunPlan) -> Vec<Warning> {
    let mut out = Vec::new();
    if plan.cooldown.is_zero() {
        out.push(Warning::BackToBackRuns);
    }
    if plan.runs < DEFAULT_RUNS {
        out.push(Warning::LowRunCount);
    }
    out
}

/// Host facts recorded (not controlled) alongside every timing sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentRecord {
    pub host: String,
    pub os: String,
    pub os_version: String,
    pub cpu_model: String,
    pub captured_at: DateTime<Utc>,
    /// Total bytes of `KEY=VALUE\0` pairs in the process environment.
    pub env_bytes: u64,
    /// SHA-256 over the sorted environment, hex encoded.
    pub env_hash: String,
    pub load_average: Option<f64>,
    /// Wall-clock cost of spawning and reaping a no-op process.
    pub spawn_overhead_secs: Option<f64>,
}

fn read_trimmed(path: &str) -> Option<String> {
    fs::read_to_string(path)
        .ok()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
}

fn os_release() -> Option<String> {
    let text = fs::read_to_string("/etc/os-release").ok()?;
    text.lines()
        .find_map(|l| l.strip_prefix("PRETTY_NAME="))
        .map(|v| v.trim_matches('"').to_string())
}

fn cpu_model() -> Option<String> {
    let text = fs::read_to_string("/proc/cpuinfo").ok()?;
    text.lines()
        .find(|l| l.starts_with("model name") || l.starts_with("Processor"))
        .and_then(|l| l.split_once(':'))
        .map(|(_, v)| v.trim().to_string())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl EnvironmentRecord {
    /// Captures the current host state, without the spawn calibration.
    pub fn capture() -> Self {
        let mut vars: Vec<(String, String)> = std::env::vars_os()
            .map(|(k, v)| {
                (
                    k.to_string_lossy().into_owned(),
                    v.to_string_lossy().into_owned(),
                )
            })
            .collect();
        vars.sort();
        let mut hasher = Sha256::new();
        let mut env_bytes = 0u64;
        for (k, v) in &vars {
            let entry = format!("{k}={v}\0");
            env_bytes += entry.len() as u64;
            hasher.update(entry.as_bytes());
        }
        let load_average = read_trimmed("/proc/loadavg")
            .and_then(|s| s.split_whitespace().next().and_then(|v| v.parse().ok()));

        EnvironmentRecord {
            host: read_trimmed("/proc/sys/kernel/hostname")
                .or_else(|| std::env::var("HOSTNAME").ok())
                .unwrap_or_else(|| "unknown".into()),
            os: std::env::consts::OS.to_string(),
            os_version: [os_release(), read_trimmed("/proc/sys/kernel/osrelease")]
                .into_iter()
                .flatten()
                .collect::<Vec<_>>()
                .join(" / "),
            cpu_model: cpu_model().unwrap_or_else(|| std::env::consts::ARCH.to_string()),
            captured_at: Utc::now(),
            env_bytes,
            env_hash: hex(&hasher.finalize()),
            load_average,
            spawn_overhead_secs: None,
        }
    }

    /// Captures the host state and times one no-op process spawn.
    pub fn capture_with_calibration() -> Self {
        let mut rec = Self::capture();
        rec.spawn_overhead_secs = calibrate_spawn();
        rec
    }
}

fn calibrate_spawn() -> Option<f64> {
    let start = Instant::now();
    let status = Command::new("true")
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .ok()?;
    status.success().then(|| start.elapsed().as_secs_f64())
}

/// One timed run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    /// 1-based.
    pub index: usize,
    pub elapsed: Duration,
    pub started_at: DateTime<Utc>,
}

/// Everything a plan execution produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub plan: RunPlan,
    pub environment: EnvironmentRecord,
    pub runs: Vec<RunRecord>,
}

impl Recording {
    pub fn sample(&self) -> Result<TimingSample> {
        let times = Sample::new(self.runs.iter().map(|r| r.elapsed.as_secs_f64()).collect())?;
        Ok(
            TimingSample::new(&self.plan.benchmark_id, self.plan.variant, times)?
                .with_environment(self.environment.clone()),
        )
    }
}

/// Host-wide mutual exclusion between plans.
#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    /// Run even if another plan holds the host lock.
    pub force: bool,
    /// Lock file location; defaults to `speedup-harness.lock` in the temp dir.
    pub lock_path: Option<PathBuf>,
}

struct HostLock {
    path: PathBuf,
}

impl HostLock {
    fn acquire(path: &Path) -> Result<Self> {
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(path) {
                Ok(mut f) => {
                    writeln!(f, "{}", std::process::id())?;
                    return Ok(HostLock {
                        path: path.to_path_buf(),
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if holder_is_alive(path) {
                        return Err(Error::HostBusy {
                            lock: path.to_path_buf(),
                        });
                    }
                    // Stale lock left by a dead process.
                    let _ = fs::remove_file(path);
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(Error::HostBusy {
            lock: path.to_path_buf(),
        })
    }
}

impl Drop for HostLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn holder_is_alive(path: &Path) -> bool {
    let Some(pid) = fs::read_to_string(path)
        .ok()
        .and_then(|s| s.trim().parse::<i32>().ok())
    else {
        // Unreadable or half-written: assume a live holder.
        return true;
    };
    #[cfg(unix)]
    {
        // SAFETY: signal 0 only probes for existence.
        let rc = unsafe { libc::kill(pid, 0) };
        rc == 0 || std::io::Error::last_os_error().raw_os_error() == Some(libc::EPERM)
    }
    #[cfg(not(unix))]
    {
        let _ = pid;
        true
    }
}

fn describe(status: ExitStatus) -> String {
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        if let Some(sig) = status.signal() {
            return format!("signal {sig}");
        }
    }
    match status.code() {
        Some(code) => format!("exit status {code}"),
        None => status.to_string(),
    }
}

fn kill_child(pid: u32) {
    #[cfg(unix)]
    // SAFETY: plain kill(2) on a pid we spawned and have not reaped yet.
    unsafe {
        libc::kill(pid as i32, libc::SIGKILL);
    }
    #[cfg(not(unix))]
    let _ = pid;
}

fn time_one_run(plan: &RunPlan, index: usize) -> Result<RunRecord> {
    let mut cmd = Command::new(&plan.program);
    cmd.args(&plan.args)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null());
    if let Some(dir) = &plan.working_dir {
        cmd.current_dir(dir);
    }

    let started_at = Utc::now();
    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|source| Error::LaunchFailed {
        program: plan.program.clone(),
        source,
    })?;
    let pid = child.id();
    let (tx, rx) = mpsc::channel();
    let waiter = thread::spawn(move || {
        let status = child.wait();
        let _ = tx.send((status, Instant::now()));
    });

    let outcome = match rx.recv_timeout(plan.timeout) {
        Ok(done) => done,
        Err(_) => {
            kill_child(pid);
            let _ = waiter.join();
            return Err(Error::RunTimedOut {
                run: index,
                timeout_secs: plan.timeout.as_secs_f64(),
            });
        }
    };
    let _ = waiter.join();
    let (status, end) = outcome;
    let status = status?;
    if !status.success() {
        return Err(Error::BenchmarkFailed {
            run: index,
            status: describe(status),
        });
    }
    Ok(RunRecord {
        index,
        elapsed: end.duration_since(start),
        started_at,
    })
}

/// Runs `plan` with default options (host lock in the temp dir, no force).
pub fn execute_plan(plan: &RunPlan) -> Result<Recording> {
    execute_plan_with(plan, &ExecOptions::default())
}

pub fn execute_plan_with(plan: &RunPlan, options: &ExecOptions) -> Result<Recording> {
    plan.validate()?;
    let _lock = if options.force {
        None
    } else {
        let path = options
            .lock_path
            .clone()
            .unwrap_or_else(|| std::env::temp_dir().join("speedup-harness.lock"));
        Some(HostLock::acquire(&path)?)
    };

    let environment = EnvironmentRecord::capture_with_calibration();
    let mut runs = Vec::with_capacity(plan.runs);
    for index in 1..=plan.runs {
        if index > 1 && !plan.cooldown.is_zero() {
            thread::sleep(plan.cooldown);
        }
        runs.push(time_one_run(plan, index)?);
    }
    Ok(Recording {
        plan: plan.clone(),
        environment,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(program: &str, args: &[&str], runs: usize) -> RunPlan {
        let mut p = RunPlan::new(
            "t",
            Variant::Baseline,
            program,
            args.iter().map(|s| s.to_string()).collect(),
        );
        p.runs = runs;
        p
    }

    fn forced() -> ExecOptions {
        ExecOptions {
            force: true,
            lock_path: None,
        }
    }

    #[test]
    fn independence_warnings() {
        let mut p = plan("true", &[], 30);
        assert_eq!(warn_independence(&p), vec![Warning::BackToBackRuns]);
        p.cooldown = Duration::from_secs(1);
        p.runs = 10;
        assert_eq!(warn_independence(&p), vec![Warning::LowRunCount]);
        p.runs = 30;
        assert!(warn_independence(&p).is_empty());
    }

    #[test]
    fn plan_validation() {
        assert!(plan("true", &[], 0).validate().is_err());
        let mut p = plan("true", &[], 1);
        p.timeout = Duration::ZERO;
        assert!(p.validate().is_err());
        let mut p = plan("true", &[], 1);
        p.benchmark_id = "a,b".into();
        assert!(p.validate().is_err());
    }

    #[test]
    fn sleeps_are_timed_from_outside() {
        let rec = execute_plan_with(&plan("sleep", &["0.05"], 3), &forced()).unwrap();
        assert_eq!(rec.runs.len(), 3);
        for (i, r) in rec.runs.iter().enumerate() {
            assert_eq!(r.index, i + 1);
            assert!(r.elapsed >= Duration::from_millis(50), "{:?}", r.elapsed);
        }
        assert_eq!(rec.sample().unwrap().times.size(), 3);
    }

    #[test]
    fn failing_command_reports_run_index() {
        let err = execute_plan_with(&plan("false", &[], 4), &forced()).unwrap_err();
        assert!(
            matches!(err, Error::BenchmarkFailed { run: 1, .. }),
            "{err}"
        );
    }

    #[test]
    fn missing_program_is_a_launch_failure() {
        let err = execute_plan_with(&plan("/nonexistent/definitely-not-here", &[], 2), &forced())
            .unwrap_err();
        assert!(matches!(err, Error::LaunchFailed { .. }));
    }

    #[test]
    fn timeout_kills_the_child() {
        let mut p = plan("sleep", &["5"], 2);
        p.timeout = Duration::from_millis(100);
        let start = Instant::now();
        let err = execute_plan_with(&p, &forced()).unwrap_err();
        assert!(matches!(err, Error::RunTimedOut { run: 1, .. }));
        assert!(start.elapsed() < Duration::from_secs(4));
    }

    #[test]
    fn host_lock_blocks_second_plan() {
        let dir = tempfile::tempdir().unwrap();
        let lock = dir.path().join("lock");
        let held = HostLock::acquire(&lock).unwrap();
        let opts = ExecOptions {
            force: false,
            lock_path: Some(lock.clone()),
        };
        assert!(matches!(
            execute_plan_with(&plan("true", &[], 1), &opts),
            Err(Error::HostBusy { .. })
        ));
        drop(held);
        assert!(execute_plan_with(&plan("true", &[], 1), &opts).is_ok());
        assert!(!lock.exists());
    }

    #[test]
    fn stale_lock_is_reclaimed() {
        let dir = tempfile::tempdir().unwrap();
        let lock = dir.path().join("lock");
        // pid far above any default pid_max
        fs::write(&lock, "2147483000\n").unwrap();
        let opts = ExecOptions {
            force: false,
            lock_path: Some(lock),
        };
        assert!(execute_plan_with(&plan("true", &[], 1), &opts).is_ok());
    }

    #[test]
    fn environment_record_is_populated() {
        let env = EnvironmentRecord::capture_with_calibration();
        assert_eq!(env.env_hash.len(), 64);
        assert!(env.env_bytes > 0);
        assert!(!env.host.is_empty());
        assert!(env.spawn_overhead_secs.unwrap() > 0.0);
    }
}
