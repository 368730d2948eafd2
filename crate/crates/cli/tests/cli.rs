use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use speedup_core::report::{lint, sig, verdict_summary};
use speedup_core::timing_file::TimingFile;
use speedup_core::{
    aggregate::gain_from_rows, assess_speedup, ConfidenceLevel, ProtocolConfig, Report,
    TimingSample, Variant, VerdictFile,
};
use tempfile::TempDir;

const T1: [f64; 5] = [2.799, 2.046, 1.259, 1.877, 2.244];
const T2: [f64; 5] = [1.046, 0.259, 0.877, 1.244, 1.799];

fn speedup(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speedup"))
        .current_dir(dir)
        .env_remove("SPEEDUP_OUTPUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Writes a timing file with one row per (id, variant, value).
fn timing_file(dir: &Path, name: &str, rows: &[(&str, Variant, Vec<String>)]) -> PathBuf {
    let mut text = String::from("# speedup-timing format_version=1\n");
    text.push_str("benchmark_id,variant,run,time_seconds,captured_at\n");
    for (id, variant, times) in rows {
        for (i, t) in times.iter().enumerate() {
            text.push_str(&format!("{id},{variant},{},{t},\n", i + 1));
        }
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn strings(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| format!("{v}")).collect()
}

/// 30 times symmetric around `median`, spread `step` apart.
fn around(median: f64, step: f64) -> Vec<String> {
    let base = (median * 1000.0).round() as i64;
    let step = (step * 1000.0).round() as i64;
    (1..=15)
        .flat_map(|k| [base - k * step, base + k * step])
        .map(|ms| format!("{}.{:03}", ms / 1000, ms % 1000))
        .collect()
}

fn five_run_samples(dir: &Path) -> (PathBuf, PathBuf) {
    (
        timing_file(dir, "base.csv", &[("P", Variant::Baseline, strings(&T1))]),
        timing_file(dir, "opt.csv", &[("P", Variant::Optimized, strings(&T2))]),
    )
}

fn assert_all_declared(text: &str) {
    let bad = lint::undeclared_lines(text);
    assert!(bad.is_empty(), "lines without α: {bad:?}\n{text}");
}

#[test]
fn analyze_five_run_samples_at_two_levels() {
    let dir = TempDir::new().unwrap();
    let (b, o) = five_run_samples(dir.path());
    let (b, o) = (b.to_str().unwrap(), o.to_str().unwrap());

    let out = speedup(dir.path(), &["analyze", b, o, "--alpha", "0.95"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("SpeedupConfirmed, speedup 1.956, lower bound 0.3414632, α=0.95"));
    assert!(text.contains("W = 0.9862, p = 0.9647"));
    assert!(text.contains("naive ratios (statistically unsound"));
    assert_all_declared(&text);

    let out = speedup(dir.path(), &["analyze", b, o, "--alpha", "0.99"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("NoSpeedupAtConfidence, lower bound -0.02574667, α=0.99"));
    assert_all_declared(&text);
}

#[test]
fn analyze_prints_the_default_level() {
    let dir = TempDir::new().unwrap();
    let (b, o) = five_run_samples(dir.path());
    let out = speedup(
        dir.path(),
        &["analyze", b.to_str().unwrap(), o.to_str().unwrap()],
    );
    let text = stdout(&out);
    assert!(text.contains("using the default α=0.95"), "{text}");
    assert_all_declared(&text);
}

#[test]
fn analyze_json_recomputes_to_printed_precision() {
    let dir = TempDir::new().unwrap();
    let (b, o) = five_run_samples(dir.path());
    let args = [
        "analyze",
        b.to_str().unwrap(),
        o.to_str().unwrap(),
        "--alpha",
        "0.95",
    ];
    let text = stdout(&speedup(dir.path(), &args));
    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json"]);
    let file = VerdictFile::from_json(&stdout(&speedup(dir.path(), &json_args))).unwrap();

    for rec in &file.records {
        let v = &rec.verdict;
        assert!(text.contains(&verdict_summary(v)));
        let base =
            TimingSample::from_values(&v.benchmark_id, Variant::Baseline, &rec.baseline_times)
                .unwrap();
        let opt =
            TimingSample::from_values(&v.benchmark_id, Variant::Optimized, &rec.optimized_times)
                .unwrap();
        let again = assess_speedup(&base, &opt, v.alpha, &ProtocolConfig::default()).unwrap();
        assert_eq!(verdict_summary(&again), verdict_summary(v));
        let w = again.welch.unwrap();
        assert_eq!(sig(w.lower_bound, 7), sig(v.welch.unwrap().lower_bound, 7));
        assert_eq!(
            again.speedup.map(|s| sig(s, 4)),
            v.speedup.map(|s| sig(s, 4))
        );
    }
}

#[test]
fn zero_time_is_a_parse_error_naming_the_row() {
    let dir = TempDir::new().unwrap();
    let mut times = strings(&T1);
    times[2] = "0.000".into();
    let b = timing_file(dir.path(), "b.csv", &[("P", Variant::Baseline, times)]);
    let o = timing_file(
        dir.path(),
        "o.csv",
        &[("P", Variant::Optimized, strings(&T2))],
    );
    let out = speedup(
        dir.path(),
        &["analyze", b.to_str().unwrap(), o.to_str().unwrap()],
    );
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("b.csv:5"), "{err}");
    assert!(err.contains("strictly positive"), "{err}");
}

#[test]
fn unpaired_benchmark_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let b = timing_file(
        dir.path(),
        "b.csv",
        &[("P", Variant::Baseline, strings(&T1))],
    );
    let o = timing_file(
        dir.path(),
        "o.csv",
        &[("Q", Variant::Optimized, strings(&T2))],
    );
    let out = speedup(
        dir.path(),
        &["analyze", b.to_str().unwrap(), o.to_str().unwrap()],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn insufficient_runs_exit_with_refusal() {
    let dir = TempDir::new().unwrap();
    // Strongly skewed: fails the normality check at five runs.
    let skewed = strings(&[1.0, 1.001, 1.002, 1.003, 9.0]);
    let b = timing_file(dir.path(), "b.csv", &[("P", Variant::Baseline, skewed)]);
    let o = timing_file(
        dir.path(),
        "o.csv",
        &[("P", Variant::Optimized, strings(&T2))],
    );
    let out = speedup(
        dir.path(),
        &["analyze", b.to_str().unwrap(), o.to_str().unwrap()],
    );
    assert_eq!(code(&out), 3);
    assert!(stdout(&out).contains("InsufficientRuns"));
}

fn analyze_to(dir: &Path, b: &Path, o: &Path, alpha: &str, out: &str) -> PathBuf {
    let o = speedup(
        dir,
        &[
            "analyze",
            b.to_str().unwrap(),
            o.to_str().unwrap(),
            "--alpha",
            alpha,
            "-o",
            out,
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join(out)
}

#[test]
fn aggregate_two_programs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let b1 = timing_file(
        d,
        "b1.csv",
        &[("P1", Variant::Baseline, around(3.0, 0.001))],
    );
    let o1 = timing_file(
        d,
        "o1.csv",
        &[("P1", Variant::Optimized, around(1.0, 0.001))],
    );
    let b2 = timing_file(
        d,
        "b2.csv",
        &[("P2", Variant::Baseline, around(3600.0, 0.001))],
    );
    let o2 = timing_file(
        d,
        "o2.csv",
        &[("P2", Variant::Optimized, around(3428.0, 0.001))],
    );
    let v1 = analyze_to(d, &b1, &o1, "0.95", "v1.json");
    let v2 = analyze_to(d, &b2, &o2, "0.80", "v2.json");

    let out = speedup(
        d,
        &[
            "aggregate",
            v1.to_str().unwrap(),
            v2.to_str().unwrap(),
            "-o",
            "report.json",
        ],
    );
    // Two accelerated benchmarks are too few for a proportion interval.
    assert_eq!(code(&out), 3);
    let text = stdout(&out);
    assert_all_declared(&text);
    assert!(text.contains("G = 4.778%"), "{text}");
    assert!(text.contains("[α=0.8]"), "{text}");
    assert!(text.contains("GuardViolated"));

    let report =
        Report::from_json(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    let g = report.gain.as_ref().unwrap();
    assert!((g.overall_gain - 0.0477).abs() <= 2e-4);
    assert_eq!(g.aggregate_alpha, ConfidenceLevel::new(0.80).unwrap());
    assert!((gain_from_rows(&g.included) - g.overall_gain).abs() <= 1e-12);

    let out = speedup(
        d,
        &[
            "aggregate",
            v1.to_str().unwrap(),
            v2.to_str().unwrap(),
            "--weights",
            "uniform",
        ],
    );
    assert!(stdout(&out).contains("G = 4.82"), "{}", stdout(&out));

    let out = speedup(d, &["report", "report.json"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), text.split_once('\n').map(|x| x.1).unwrap());
}

#[test]
fn tampered_report_is_rejected() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let (b, o) = five_run_samples(d);
    let v = analyze_to(d, &b, &o, "0.95", "v.json");
    speedup(d, &["aggregate", v.to_str().unwrap(), "-o", "r.json"]);
    let text = std::fs::read_to_string(d.join("r.json")).unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&text).unwrap();
    json["gain"]["overall_gain"] = serde_json::json!(0.9);
    std::fs::write(d.join("r.json"), json.to_string()).unwrap();
    assert_eq!(code(&speedup(d, &["report", "r.json"])), 2);
}

/// Thirty benchmarks, the first `accelerated` of which get faster.
fn suite(d: &Path, accelerated: usize) -> PathBuf {
    let mut base = Vec::new();
    let mut opt = Vec::new();
    let ids: Vec<String> = (0..30).map(|i| format!("B{i:02}")).collect();
    for (i, id) in ids.iter().enumerate() {
        base.push((id.as_str(), Variant::Baseline, around(10.0, 0.01)));
        let m = if i < accelerated { 5.0 } else { 10.0 };
        opt.push((id.as_str(), Variant::Optimized, around(m, 0.01)));
    }
    let b = timing_file(d, "suite-b.csv", &base);
    let o = timing_file(d, "suite-o.csv", &opt);
    let out = speedup(
        d,
        &[
            "analyze",
            b.to_str().unwrap(),
            o.to_str().unwrap(),
            "--alpha",
            "0.90",
            "-o",
            "suite.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    d.join("suite.json")
}

#[test]
fn aggregate_proportion_interval() {
    let dir = TempDir::new().unwrap();
    let v = suite(dir.path(), 17);
    let out = speedup(
        dir.path(),
        &[
            "aggregate",
            v.to_str().unwrap(),
            "--alpha",
            "0.90",
            "--proportion-method",
            "wilson",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("17/30"), "{text}");
    assert!(
        text.contains("[0.4027157, 0.7184049] (WilsonContinuity"),
        "{text}"
    );
    assert_all_declared(&text);
}

#[test]
fn aggregate_guard_violation() {
    let dir = TempDir::new().unwrap();
    let v = suite(dir.path(), 5);
    let out = speedup(
        dir.path(),
        &["aggregate", v.to_str().unwrap(), "--alpha", "0.90"],
    );
    assert_eq!(code(&out), 3);
    let text = stdout(&out);
    assert!(text.contains("5/30; GuardViolated"), "{text}");
    assert!(text.contains("overall performance gain G ="));
}

#[test]
fn samplesize_counts() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = speedup(
        d,
        &[
            "samplesize",
            "--proportion",
            "0.5666",
            "--precision",
            "0.05",
            "--alpha",
            "0.95",
        ],
    );
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("n = 378"));
    let out = speedup(
        d,
        &["samplesize", "--proportion", "0.5", "--precision", "0.05"],
    );
    let text = stdout(&out);
    assert!(text.contains("n = 385"));
    assert!(text.contains("default α=0.95"));
    assert_all_declared(&text);
    let out = speedup(
        d,
        &["samplesize", "--proportion", "0.5", "--precision", "1"],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("invalid argument"));
}

#[test]
fn run_writes_a_timing_file() {
    let dir = TempDir::new().unwrap();
    let out = speedup(
        dir.path(),
        &[
            "run",
            "--id",
            "bench1",
            "--variant",
            "baseline",
            "--runs",
            "30",
            "--force",
            "-o",
            "t.csv",
            "--",
            "true",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let path = dir.path().join("t.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let file = TimingFile::parse(&text, "t.csv").unwrap();
    assert_eq!(file.rows.len(), 30);
    assert!(file.environment.is_some());
    assert_eq!(file.to_text().unwrap(), text);
    assert!(!stderr(&out).contains("LowRunCount"));

    // Raw timing files are never overwritten.
    let again = speedup(
        dir.path(),
        &[
            "run",
            "--id",
            "bench1",
            "--variant",
            "baseline",
            "--runs",
            "1",
            "--force",
            "-o",
            "t.csv",
            "--",
            "true",
        ],
    );
    assert_eq!(code(&again), 2);
}

#[test]
fn run_warns_about_few_runs() {
    let dir = TempDir::new().unwrap();
    let out = speedup(
        dir.path(),
        &[
            "run",
            "--id",
            "b",
            "--variant",
            "optimized",
            "--runs",
            "5",
            "--force",
            "--",
            "true",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("LowRunCount"));
    let written = PathBuf::from(stdout(&out).trim());
    let file = TimingFile::read(&dir.path().join(written)).unwrap();
    assert_eq!(file.rows.len(), 5);
}

#[test]
fn run_honours_the_output_directory_override() {
    let dir = TempDir::new().unwrap();
    let out_dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_speedup"))
        .current_dir(dir.path())
        .env("SPEEDUP_OUTPUT_DIR", out_dir.path())
        .args([
            "run",
            "--id",
            "b",
            "--variant",
            "baseline",
            "--runs",
            "2",
            "--force",
            "-o",
            "x.csv",
            "--",
            "true",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out_dir.path().join("x.csv").exists());
}

#[test]
fn run_failures_are_harness_errors() {
    let dir = TempDir::new().unwrap();
    let out = speedup(
        dir.path(),
        &[
            "run",
            "--id",
            "b",
            "--variant",
            "baseline",
            "--force",
            "--",
            "/nonexistent/program",
        ],
    );
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("failed to launch"));

    let out = speedup(
        dir.path(),
        &[
            "run",
            "--id",
            "b",
            "--variant",
            "baseline",
            "--runs",
            "3",
            "--force",
            "--",
            "false",
        ],
    );
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("run 1"));
}

#[test]
fn run_from_plan_file() {
    let dir = TempDir::new().unwrap();
    let plan = r#"{"benchmark_id": "planned", "variant": "optimized", "program": "true", "runs": 3, "cooldown_secs": 0.01}"#;
    std::fs::write(dir.path().join("plan.json"), plan).unwrap();
    let out = speedup(
        dir.path(),
        &["run", "--plan", "plan.json", "--force", "-o", "p.csv"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(!stderr(&out).contains("BackToBackRuns"));
    let file = TimingFile::read(&dir.path().join("p.csv")).unwrap();
    assert_eq!(file.rows.len(), 3);
    assert!(file.rows.iter().all(|r| r.benchmark_id == "planned"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&speedup(dir.path(), &["frobnicate"])), 1);
    assert_eq!(
        code(&speedup(dir.path(), &["samplesize", "--precision", "0.1"])),
        1
    );
    assert_eq!(
        code(&speedup(dir.path(), &["run", "--id", "x", "--", "true"])),
        1
    );
    assert_eq!(code(&speedup(dir.path(), &["--help"])), 0);
    let (b, o) = five_run_samples(dir.path());
    let out = speedup(
        dir.path(),
        &[
            "analyze",
            b.to_str().unwrap(),
            o.to_str().unwrap(),
            "--alpha",
            "1.5",
        ],
    );
    assert_eq!(code(&out), 1);
}
