//! `ri-tracer`: capture a rendering process's system calls and report the
//! files it depends on.

pub mod dpkg;
pub mod meta;
pub mod tracer;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ritrace_core::analysis::FixtureProvider;
use ritrace_core::pipeline::{analyze, AnalyzeOptions, RunInput};
use ritrace_core::report::{emit, render_summary, RIReport, RunMode};
use ritrace_core::scenario::{generate, ScenarioConfig};
use ritrace_core::{AccessMode, Classifier, PackageProvider, TraceDialect};
use thiserror::Error;

use crate::dpkg::DpkgProvider;
use crate::meta::RunMeta;
use crate::tracer::{check_pid, native_dialect, probe, TracerError};

/// Problems with the host rather than with the trace.
#[derive(Debug, Error)]
pub enum EnvError {
    #[error("`--packages dpkg` needs dpkg-query on PATH; pass a package fixture file instead")]
    DpkgMissing,
}

/// 0 success, 1 analysis error, 2 tracer or environment error.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let env = err
        .chain()
        .any(|e| e.is::<TracerError>() || e.is::<EnvError>());
    if env {
        2
    } else {
        1
    }
}

#[derive(Debug, Parser)]
#[command(name = "ri-tracer", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a command under the tracer, keep the log and report on it.
    Trace(TraceArgs),
    /// Trace a command without and with its input files and report what
    /// the inputs added.
    TwoRun(TwoRunArgs),
    /// Trace an already running process for a fixed window.
    Attach(AttachArgs),
    /// Analyze previously captured logs.
    Analyze(AnalyzeArgs),
    /// Write a synthetic strace log and its ground-truth manifest.
    Scenario(ScenarioArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DialectArg {
    Auto,
    Strace,
    Dtruss,
}

impl DialectArg {
    fn dialect(self) -> Option<TraceDialect> {
        match self {
            DialectArg::Auto => None,
            DialectArg::Strace => Some(TraceDialect::LinuxStrace),
            DialectArg::Dtruss => Some(TraceDialect::MacDtruss),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TracerArg {
    Strace,
    Dtruss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskArg {
    /// Files opened for reading.
    Read,
    /// Files read, written or executed.
    Touched,
    /// Everything, including paths that were only probed.
    Any,
}

impl MaskArg {
    fn mode(self) -> AccessMode {
        match self {
            MaskArg::Read => AccessMode::READ,
            MaskArg::Touched => AccessMode::TOUCHED,
            MaskArg::Any => AccessMode::ANY,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Package source: `dpkg` or a fixture file of `package[=version]: /path` lines.
    #[arg(long)]
    pub packages: Option<String>,
    /// Classification rules that take precedence over the built-in ones.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Access modes compared between baseline and target.
    #[arg(long, value_enum, default_value = "read")]
    pub mask: MaskArg,
    /// Keep the input files themselves in the baseline comparison.
    #[arg(long)]
    pub keep_subjects: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TracerSel {
    /// Tracer to use; defaults to the platform's own.
    #[arg(long, value_enum)]
    pub tracer: Option<TracerArg>,
}

impl TracerSel {
    fn dialect(&self) -> Result<TraceDialect, TracerError> {
        match self.tracer {
            Some(TracerArg::Strace) => Ok(TraceDialect::LinuxStrace),
            Some(TracerArg::Dtruss) => Ok(TraceDialect::MacDtruss),
            None => native_dialect(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub tracer: TracerSel,
    /// Where the trace log goes.
    #[arg(long, default_value = "trace.log")]
    pub log: PathBuf,
    #[command(flatten)]
    pub report: ReportArgs,
    #[arg(last = true, required = true)]
    pub argv: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TwoRunArgs {
    #[command(flatten)]
    pub tracer: TracerSel,
    /// Arguments dropped for the baseline run; defaults to the last argument.
    #[arg(long = "subject")]
    pub subjects: Vec<String>,
    /// Analyze two existing logs instead of tracing.
    #[arg(long, num_args = 2, value_names = ["BASELINE", "TARGET"])]
    pub from_logs: Option<Vec<PathBuf>>,
    #[arg(long, default_value = "baseline.log")]
    pub baseline_log: PathBuf,
    #[arg(long, default_value = "target.log")]
    pub target_log: PathBuf,
    /// Working directory the logs were captured in, when no sidecar says.
    #[arg(long)]
    pub cwd: Option<String>,
    #[command(flatten)]
    pub report: ReportArgs,
    #[arg(last = true)]
    pub argv: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct AttachArgs {
    #[command(flatten)]
    pub tracer: TracerSel,
    #[arg(long)]
    pub pid: u32,
    /// Length of the trace window.
    #[arg(long)]
    pub seconds: f64,
    #[arg(long, default_value = "attach.log")]
    pub log: PathBuf,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    pub log: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub dialect: DialectArg,
    /// Working directory of the traced program, when no sidecar says.
    #[arg(long)]
    pub cwd: Option<String>,
    #[arg(long)]
    pub baseline_log: Option<PathBuf>,
    /// Input file names for the baseline comparison, when no sidecar says.
    #[arg(long = "subject")]
    pub subjects: Vec<String>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub events: usize,
    #[arg(long, default_value = "/home/user")]
    pub cwd: String,
    /// Paths the root process reads at the end of the run.
    #[arg(long)]
    pub inject: Vec<String>,
    /// Write the log here instead of stdout.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Trace(a) => cmd_trace(a),
        Command::TwoRun(a) => cmd_two_run(a),
        Command::Attach(a) => cmd_attach(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Scenario(a) => cmd_scenario(a),
    }
}

/// A log on disk together with what is known about its capture.
pub struct LoggedRun {
    pub path: PathBuf,
    pub text: String,
    pub meta: Option<RunMeta>,
    pub dialect: Option<TraceDialect>,
}

impl LoggedRun {
    pub fn read(path: &Path, dialect: Option<TraceDialect>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading trace log {}", path.display()))?;
        let meta = RunMeta::read(path)?;
        Ok(LoggedRun {
            path: path.to_path_buf(),
            text,
            meta,
            dialect,
        })
    }

    fn input(&self) -> RunInput<'_> {
        let mut input = RunInput::new(&self.text, self.path.display().to_string());
        input.dialect = self.dialect.or(self.meta.as_ref().map(|m| m.dialect));
        if let Some(m) = &self.meta {
            input.command = m.command.clone();
            input.capture_host = m.capture_host.clone();
            input.capture_time = m.capture_time.clone();
        }
        input
    }

    fn exit_warning(&self) -> Option<String> {
        let m = self.meta.as_ref().filter(|m| m.mode != RunMode::Attach)?;
        match m.exit_status {
            Some(0) => None,
            Some(n) => Some(format!("traced program exited with status {n}")),
            None => Some("traced program was terminated by a signal".into()),
        }
    }
}

/// Report settings shared by every command.
pub struct ReportSettings {
    pub cwd: Option<String>,
    pub mask: AccessMode,
    pub classifier: Classifier,
    pub packages: Option<Box<dyn PackageProvider>>,
    pub keep_subjects: bool,
    pub subjects: Vec<String>,
}

impl ReportSettings {
    pub fn from_args(
        args: &ReportArgs,
        cwd: Option<String>,
        subjects: Vec<String>,
    ) -> Result<Self> {
        let classifier = match &args.rules {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading rules {}", path.display()))?;
                Classifier::with_overrides(&text)
                    .with_context(|| format!("rules file {}", path.display()))?
            }
            None => Classifier::builtin().clone(),
        };
        let packages: Option<Box<dyn PackageProvider>> = match args.packages.as_deref() {
            None => None,
            Some("dpkg") => Some(Box::new(
                DpkgProvider::probe().ok_or(EnvError::DpkgMissing)?,
            )),
            Some(file) => Some(Box::new(FixtureProvider::from_file(Path::new(file))?)),
        };
        Ok(ReportSettings {
            cwd,
            mask: args.mask.mode(),
            classifier,
            packages,
            keep_subjects: args.keep_subjects,
            subjects,
        })
    }
}

/// The single analysis path behind every command, so a report built right
/// after capture equals one built later from the saved log.
pub fn report_for_logs(
    target: &LoggedRun,
    baseline: Option<&LoggedRun>,
    settings: &ReportSettings,
) -> Result<RIReport> {
    let cwd = settings
        .cwd
        .clone()
        .or_else(|| target.meta.as_ref().map(|m| m.cwd.clone()))
        .unwrap_or_else(|| "/".into());
    let mode = target.meta.as_ref().map_or(RunMode::SingleRun, |m| m.mode);
    let opts = AnalyzeOptions {
        cwd,
        diff_mask: settings.mask,
        classifier: &settings.classifier,
        packages: settings.packages.as_deref(),
        mode,
        exclude_subjects: !settings.keep_subjects,
        extra_subjects: settings.subjects.clone(),
    };
    let base_input = baseline.map(LoggedRun::input);
    let mut report = analyze(&target.input(), base_input.as_ref(), &opts)?;
    if let Some(w) = target.exit_warning() {
        report.warnings.push(w);
    }
    if let Some(w) = baseline.and_then(LoggedRun::exit_warning) {
        report.warnings.push(format!("baseline: {w}"));
    }
    Ok(report)
}

pub fn write_report(report: &RIReport, args: &ReportArgs) -> Result<()> {
    let text = match args.format {
        Format::Json => emit(report),
        Format::Text => render_summary(report),
    };
    match &args.output {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing report {}", path.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn current_dir() -> Result<String> {
    let dir = std::env::current_dir().context("reading the working directory")?;
    Ok(dir.to_string_lossy().into_owned())
}

/// Launches `argv` under the tracer and records the sidecar.
fn capture(sel: &TracerSel, argv: &[String], log: &Path, run: &str) -> Result<()> {
    let adapter = probe(sel.dialect()?)?;
    let mut meta = RunMeta::now(
        argv.to_vec(),
        adapter.dialect(),
        current_dir()?,
        RunMode::SingleRun,
    );
    let status = adapter
        .launch(argv, log)
        .with_context(|| format!("{run} run"))?;
    if !log.exists() {
        return Err(TracerError::Failed {
            adapter: adapter.name(),
            status,
            detail: format!("{} was not created", log.display()),
        })
        .with_context(|| format!("{run} run"));
    }
    meta.exit_status = status.code();
    meta.write(log)
        .with_context(|| format!("writing metadata for {}", log.display()))?;
    Ok(())
}

fn cmd_trace(a: TraceArgs) -> Result<()> {
    let settings = ReportSettings::from_args(&a.report, None, Vec::new())?;
    capture(&a.tracer, &a.argv, &a.log, "traced")?;
    let run = LoggedRun::read(&a.log, None)?;
    write_report(&report_for_logs(&run, None, &settings)?, &a.report)
}

/// The baseline command line: `argv` without its subjects.
pub fn baseline_argv(argv: &[String], subjects: &[String]) -> Vec<String> {
    match subjects {
        [] if argv.len() > 1 => argv[..argv.len() - 1].to_vec(),
        [] => argv.to_vec(),
        s => {
            let mut out = vec![argv[0].clone()];
            out.extend(argv[1..].iter().filter(|a| !s.contains(a)).cloned());
            out
        }
    }
}

fn cmd_two_run(a: TwoRunArgs) -> Result<()> {
    let (base_path, target_path) = match &a.from_logs {
        Some(logs) => (logs[0].clone(), logs[1].clone()),
        None => {
            if a.argv.is_empty() {
                bail!("two-run needs a command after `--`, or --from-logs BASELINE TARGET");
            }
            if a.argv.len() < 2 && a.subjects.is_empty() {
                bail!("the command has no argument to leave out of the baseline run; name one with --subject");
            }
            let base_argv = baseline_argv(&a.argv, &a.subjects);
            capture(&a.tracer, &base_argv, &a.baseline_log, "baseline")?;
            capture(&a.tracer, &a.argv, &a.target_log, "target")?;
            (a.baseline_log.clone(), a.target_log.clone())
        }
    };
    let base = LoggedRun::read(&base_path, None).context("baseline run")?;
    let target = LoggedRun::read(&target_path, None).context("target run")?;
    let settings = ReportSettings::from_args(&a.report, a.cwd.clone(), a.subjects.clone())?;
    write_report(
        &report_for_logs(&target, Some(&base), &settings)?,
        &a.report,
    )
}

fn cmd_attach(a: AttachArgs) -> Result<()> {
    if !(a.seconds >= 0.0 && a.seconds.is_finite()) {
        bail!("--seconds must be a non-negative number");
    }
    let settings = ReportSettings::from_args(&a.report, None, Vec::new())?;
    check_pid(a.pid)?;
    let window = Duration::from_secs_f64(a.seconds);
    let dialect = a.tracer.dialect()?;
    let meta = RunMeta::now(Vec::new(), dialect, "/".into(), RunMode::Attach);
    let report = if window.is_zero() {
        std::fs::write(&a.log, "").with_context(|| format!("writing {}", a.log.display()))?;
        meta.write(&a.log)?;
        let run = LoggedRun::read(&a.log, None)?;
        let mut r = report_for_logs(&run, None, &settings)?;
        r.warnings
            .push("attach window was empty (--seconds 0)".into());
        r
    } else {
        let adapter = probe(dialect)?;
        let status = adapter.attach(a.pid, &a.log, window)?;
        if !a.log.exists() {
            return Err(TracerError::Failed {
                adapter: adapter.name(),
                status,
                detail: format!("{} was not created", a.log.display()),
            }
            .into());
        }
        meta.write(&a.log)?;
        report_for_logs(&LoggedRun::read(&a.log, None)?, None, &settings)?
    };
    write_report(&report, &a.report)
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let dialect = a.dialect.dialect();
    let target = LoggedRun::read(&a.log, dialect)?;
    let base = match &a.baseline_log {
        Some(p) => Some(LoggedRun::read(p, dialect).context("baseline run")?),
        None => None,
    };
    let settings = ReportSettings::from_args(&a.report, a.cwd.clone(), a.subjects.clone())?;
    write_report(
        &report_for_logs(&target, base.as_ref(), &settings)?,
        &a.report,
    )
}

fn cmd_scenario(a: ScenarioArgs) -> Result<()> {
    let config = ScenarioConfig {
        seed: a.seed,
        events: a.events,
        initial_cwd: a.cwd,
        inject: a.inject,
    };
    let s = generate(&config);
    match &a.log {
        Some(p) => std::fs::write(p, &s.log).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(s.log.as_bytes())?,
    }
    if let Some(p) = &a.manifest {
        let text = serde_json::to_string_pretty(&s.manifest)?;
        std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}
