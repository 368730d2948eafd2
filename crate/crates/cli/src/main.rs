//! `speedup`: record benchmark timings and judge speedups with stated
//! confidence levels.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use speedup_core::aggregate::min_sample_size_raw;
use speedup_core::protocol::DEFAULT_MIN_RUNS;
use speedup_core::report::{render_report, render_verdicts, sig, FORMAT_VERSION};
use speedup_core::timing_file::{default_file_name, TimingFile};
use speedup_core::{
    assess_batch, build_report, execute_plan_with, min_sample_size, warn_independence,
    AnalysisRecord, ConfidenceLevel, Error, ExecOptions, ProportionMethod, ProtocolConfig, Report,
    RunPlan, Strategy, TimingSample, Variant, VerdictFile, WeightScheme,
};

/// Directory for files written without an absolute path.
const OUTPUT_DIR_VAR: &str = "SPEEDUP_OUTPUT_DIR";

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_REFUSED: u8 = 3;
const EXIT_HARNESS: u8 = 4;

#[derive(Parser)]
#[command(name = "speedup", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark command repeatedly and record its execution times.
    Run(RunArgs),
    /// Decide per benchmark whether the optimized variant is faster.
    Analyze(AnalyzeArgs),
    /// Combine verdict files into an overall gain and a proportion estimate.
    Aggregate(AggregateArgs),
    /// Minimum number of benchmarks for a proportion estimate.
    Samplesize(SamplesizeArgs),
    /// Render a saved report or verdict file.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run plan; flags given alongside override its fields.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    runs: Option<usize>,
    /// Pause between runs, in seconds.
    #[arg(long)]
    cooldown: Option<f64>,
    /// Per-run limit, in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Run even if another plan holds the host lock.
    #[arg(long)]
    force: bool,
    /// Timing file to create; must not exist yet.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Program and arguments to time.
    #[arg(last = true)]
    command: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Timing file holding the baseline runs.
    baseline: PathBuf,
    /// Timing file holding the optimized runs.
    optimized: PathBuf,
    /// Confidence level of the one-sided test.
    #[arg(long)]
    alpha: Option<f64>,
    /// Samples smaller than this must pass a normality check.
    #[arg(long, default_value_t = DEFAULT_MIN_RUNS)]
    min_runs: usize,
    /// Confidence level of the normality check.
    #[arg(long)]
    normality_alpha: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Also write the verdict file here.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct AggregateArgs {
    /// Verdict files written by `analyze`.
    #[arg(required = true)]
    verdicts: Vec<PathBuf>,
    /// `median`, `uniform`, or a JSON file mapping benchmark ids to weights.
    #[arg(long, default_value = "median")]
    weights: String,
    #[arg(long)]
    include_slowdowns: bool,
    #[arg(long, default_value = "wald")]
    proportion_method: ProportionMethod,
    /// Level of the proportion interval; defaults to the smallest verdict level.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Also write the report here.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SamplesizeArgs {
    /// Expected proportion of accelerated benchmarks.
    #[arg(long)]
    proportion: f64,
    /// Wanted half-width of the interval.
    #[arg(long)]
    precision: f64,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report or verdict file.
    file: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

/// An error tagged with the exit status it maps to.
struct Failure {
    code: u8,
    error: Error,
}

impl Failure {
    fn usage(error: Error) -> Self {
        Failure {
            code: EXIT_USAGE,
            error,
        }
    }

    fn data(error: Error) -> Self {
        Failure {
            code: EXIT_DATA,
            error,
        }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match &error {
            Error::InvalidArgument(_) => EXIT_USAGE,
            Error::NothingToAggregate | Error::GuardViolated { .. } => EXIT_REFUSED,
            Error::LaunchFailed { .. }
            | Error::BenchmarkFailed { .. }
            | Error::RunTimedOut { .. }
            | Error::HostBusy { .. } => EXIT_HARNESS,
            _ => EXIT_DATA,
        };
        Failure { code, error }
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Samplesize(a) => cmd_samplesize(a),
        Command::Report(a) => cmd_report(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, error }) => {
            eprintln!("error: {error}");
            ExitCode::from(code)
        }
    }
}

fn level(alpha: Option<f64>, flag: &str) -> Result<ConfidenceLevel, Failure> {
    match alpha {
        Some(a) => ConfidenceLevel::new(a).map_err(Failure::usage),
        None => {
            println!(
                "{flag} not given; using the default α={}",
                ConfidenceLevel::DEFAULT
            );
            Ok(ConfidenceLevel::DEFAULT)
        }
    }
}

fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_VAR) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn write_json(path: &Path, mut text: String) -> Result<PathBuf, Failure> {
    let path = output_path(path);
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Failure::data(e.into()))?;
    Ok(path)
}

fn secs(value: f64, flag: &str) -> Result<Duration, Failure> {
    Duration::try_from_secs_f64(value).map_err(|_| {
        Failure::usage(Error::invalid(format!(
            "{flag} must be a non-negative number of seconds"
        )))
    })
}

fn cmd_run(a: RunArgs) -> CmdResult {
    let mut plan = match &a.plan {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::data(e.into()))?;
            serde_json::from_str::<RunPlan>(&text).map_err(|e| Failure::data(e.into()))?
        }
        None => {
            let (Some(id), Some(variant)) = (a.id.clone(), a.variant) else {
                return Err(Failure::usage(Error::invalid(
                    "either --plan or both --id and --variant are required",
                )));
            };
            let Some((program, args)) = a.command.split_first() else {
                return Err(Failure::usage(Error::invalid(
                    "no command given; put it after `--`",
                )));
            };
            RunPlan::new(id, variant, program.clone(), args.to_vec())
        }
    };
    if a.plan.is_some() {
        if let Some(id) = a.id {
            plan.benchmark_id = id;
        }
        if let Some(v) = a.variant {
            plan.variant = v;
        }
        if let Some((program, args)) = a.command.split_first() {
            plan.program = program.clone();
            plan.args = args.to_vec();
        }
    }
    if let Some(runs) = a.runs {
        plan.runs = runs;
    }
    if let Some(c) = a.cooldown {
        plan.cooldown = secs(c, "--cooldown")?;
    }
    if let Some(t) = a.timeout {
        plan.timeout = secs(t, "--timeout")?;
    }
    plan.validate().map_err(Failure::usage)?;

    for w in warn_independence(&plan) {
        match w {
            speedup_core::Warning::LowRunCount => eprintln!(
                "warning {w}: {} runs planned; fewer than {DEFAULT_MIN_RUNS} runs need a normality check to be analyzed",
                plan.runs
            ),
            _ => eprintln!("warning {w}: no cooldown between runs; consecutive runs may not be independent"),
        }
    }

    let options = ExecOptions {
        force: a.force,
        lock_path: None,
    };
    let recording = execute_plan_with(&plan, &options)?;
    let file = TimingFile::from_recording(&recording);
    let path = output_path(&a.output.unwrap_or_else(|| default_file_name(&recording)));
    file.write_new(&path)?;
    eprintln!(
        "recorded {} runs of {} ({})",
        recording.runs.len(),
        plan.benchmark_id,
        plan.variant
    );
    println!("{}", path.display());
    Ok(0)
}

fn load_side(
    path: &Path,
    variant: Variant,
) -> Result<(TimingFile, BTreeMap<String, TimingSample>), Failure> {
    let file = TimingFile::read(path).map_err(Failure::data)?;
    let samples = file
        .samples()
        .map_err(Failure::data)?
        .into_iter()
        .filter(|((_, v), _)| *v == variant)
        .map(|((id, _), s)| (id, s))
        .collect::<BTreeMap<_, _>>();
    if samples.is_empty() {
        return Err(Failure::data(Error::MismatchedInput(format!(
            "{} has no {variant} rows",
            path.display()
        ))));
    }
    Ok((file, samples))
}

fn cmd_analyze(a: AnalyzeArgs) -> CmdResult {
    let level = level(a.alpha, "--alpha")?;
    let normality_level = match a.normality_alpha {
        Some(n) => ConfidenceLevel::new(n).map_err(Failure::usage)?,
        None => ConfidenceLevel::DEFAULT,
    };
    let config = ProtocolConfig {
        min_runs: a.min_runs,
        normality_level,
    };

    let (bfile, mut base) = load_side(&a.baseline, Variant::Baseline)?;
    let (ofile, mut opt) = load_side(&a.optimized, Variant::Optimized)?;
    let ids: Vec<String> = base.keys().chain(opt.keys()).cloned().collect();
    let mut pairs = Vec::new();
    for id in ids {
        match (base.remove(&id), opt.remove(&id)) {
            (Some(b), Some(o)) => pairs.push((b, o)),
            (None, None) => {}
            _ => {
                return Err(Failure::data(Error::MismatchedInput(format!(
                    "benchmark `{id}` is present on one side only"
                ))))
            }
        }
    }
    if let (Some(be), Some(oe)) = (&bfile.environment, &ofile.environment) {
        if (&be.host, &be.os, &be.os_version, &be.cpu_model)
            != (&oe.host, &oe.os, &oe.os_version, &oe.cpu_model)
        {
            eprintln!(
                "warning: the two files were recorded on different hosts or systems ({} / {} vs {} / {})",
                be.host, be.cpu_model, oe.host, oe.cpu_model
            );
        }
    }

    let strategy = if a.sequential {
        Strategy::Sequential
    } else {
        Strategy::Parallel
    };
    let mut records = Vec::with_capacity(pairs.len());
    for ((b, o), verdict) in pairs
        .iter()
        .zip(assess_batch(&pairs, level, &config, strategy))
    {
        let verdict = verdict?;
        records.push(AnalysisRecord::new(verdict, b, o));
    }
    let refused = records
        .iter()
        .any(|r| r.verdict.decision == speedup_core::Decision::InsufficientRuns);
    let file = VerdictFile::new(records);

    match a.format {
        Format::Text => {
            println!(
                "confidence level α={level}; normality check at α={normality_level} below {} runs",
                config.min_runs
            );
            print!("{}", render_verdicts(&file));
        }
        Format::Json => println!("{}", file.to_json().map_err(Failure::from)?),
    }
    if let Some(out) = &a.output {
        let path = write_json(out, file.to_json().map_err(Failure::from)?)?;
        eprintln!("verdicts written to {}", path.display());
    }
    Ok(if refused { EXIT_REFUSED } else { 0 })
}

fn weight_scheme(choice: &str) -> Result<WeightScheme, Failure> {
    match choice {
        "median" | "median-proportional" => Ok(WeightScheme::MedianProportional),
        "uniform" => Ok(WeightScheme::Uniform),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Failure::usage(Error::invalid(format!(
                    "--weights must be `median`, `uniform` or a readable JSON file ({path}: {e})"
                )))
            })?;
            let map: BTreeMap<String, f64> =
                serde_json::from_str(&text).map_err(|e| Failure::data(e.into()))?;
            Ok(WeightScheme::UserSupplied(map))
        }
    }
}

fn cmd_aggregate(a: AggregateArgs) -> CmdResult {
    let scheme = weight_scheme(&a.weights)?;
    let proportion_level = a
        .alpha
        .map(|x| ConfidenceLevel::new(x).map_err(Failure::usage))
        .transpose()?;

    let mut verdicts = Vec::new();
    for path in &a.verdicts {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::data(e.into()))?;
        let file = VerdictFile::from_json(&text).map_err(|e| {
            Failure::data(Error::Parse {
                path: path.display().to_string(),
                line: 0,
                message: e.to_string(),
            })
        })?;
        verdicts.extend(file.records.into_iter().map(|r| r.verdict));
    }
    let mut seen = std::collections::BTreeSet::new();
    for v in &verdicts {
        if !seen.insert(v.benchmark_id.as_str()) {
            return Err(Failure::data(Error::MismatchedInput(format!(
                "benchmark `{}` appears in more than one verdict",
                v.benchmark_id
            ))));
        }
    }

    let options = speedup_core::ReportOptions {
        scheme,
        include_slowdowns: a.include_slowdowns,
        proportion_level,
        proportion_method: a.proportion_method,
    };
    let report = build_report(verdicts, &options)?;
    match a.format {
        Format::Text => {
            if proportion_level.is_none() {
                println!(
                    "--alpha not given; the proportion interval uses the smallest verdict level"
                );
            }
            print!("{}", render_report(&report));
        }
        Format::Json => println!("{}", report.to_json().map_err(Failure::from)?),
    }
    if let Some(out) = &a.output {
        let path = write_json(out, report.to_json().map_err(Failure::from)?)?;
        eprintln!("report written to {}", path.display());
    }
    Ok(if report.has_refusal() {
        EXIT_REFUSED
    } else {
        0
    })
}

fn cmd_samplesize(a: SamplesizeArgs) -> CmdResult {
    let level = level(a.alpha, "--alpha")?;
    let n = min_sample_size(a.proportion, a.precision, level)?;
    let raw = min_sample_size_raw(a.proportion, a.precision, level)?;
    println!(
        "minimum number of benchmarks n = {n} (raw {}, proportion {}, precision {})  [α={level}]",
        sig(raw, 7),
        a.proportion,
        a.precision
    );
    Ok(0)
}

fn cmd_report(a: ReportArgs) -> CmdResult {
    let text = std::fs::read_to_string(&a.file).map_err(|e| Failure::data(e.into()))?;
    let kind = serde_json::from_str::<serde_json::Value>(&text)
        .map_err(|e| Failure::data(e.into()))?
        .get("kind")
        .and_then(|k| k.as_str())
        .map(str::to_owned);
    let parse_err = |e: Error| {
        Failure::data(Error::Parse {
            path: a.file.display().to_string(),
            line: 0,
            message: e.to_string(),
        })
    };
    match kind.as_deref() {
        Some(speedup_core::report::VERDICTS_KIND) => {
            let file = VerdictFile::from_json(&text).map_err(parse_err)?;
            match a.format {
                Format::Text => print!("{}", render_verdicts(&file)),
                Format::Json => println!("{}", file.to_json().map_err(Failure::from)?),
            }
            Ok(0)
        }
        Some(speedup_core::report::REPORT_KIND) => {
            let report = Report::from_json(&text).map_err(parse_err)?;
            if let Some(g) = &report.gain {
                let recomputed = speedup_core::aggregate::gain_from_rows(&g.included);
                if (recomputed - g.overall_gain).abs() > 1e-12 {
                    return Err(Failure::data(Error::MismatchedInput(format!(
                        "stored gain {} does not match its rows ({recomputed})",
                        g.overall_gain
                    ))));
                }
            }
            match a.format {
                Format::Text => print!("{}", render_report(&report)),
                Format::Json => println!("{}", report.to_json().map_err(Failure::from)?),
            }
            Ok(0)
        }
        other => Err(Failure::data(Error::invalid(format!(
            "not a format {FORMAT_VERSION} report or verdict file (kind {other:?})"
        )))),
    }
}
