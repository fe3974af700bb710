//! The offline analysis path: parse → replay → diff → classify → missing
//! → enrich → report. Every CLI command funnels through [`analyze`].

use std::collections::BTreeSet;

use thiserror::Error;

use crate::analysis::{
    analyze_missing, classify_access, diff_logs, enrich_packages, Classifier, PackageProvider,
};
use crate::model::TraceDialect;
use crate::parser::{detect_dialect, parse_stream, ParsedTrace};
use crate::replay::{canonicalize, replay, AccessLog, AccessMode};
use crate::report::{
    PackageRef, ProcessEntry, Provenance, RIReport, ResourceEntry, RunMode, RunProvenance,
};

/// Parse issues reported individually before the rest are summarized.
const ISSUE_WARNINGS: usize = 20;

pub const EMPTY_TRACE: &str = "empty trace";

/// One captured log plus what is known about how it was captured.
#[derive(Debug, Clone)]
pub struct RunInput<'a> {
    pub text: &'a str,
    /// `None` to auto-detect.
    pub dialect: Option<TraceDialect>,
    pub command: Vec<String>,
    pub capture_host: String,
    pub capture_time: String,
    pub trace_file: String,
}

impl<'a> RunInput<'a> {
    pub fn new(text: &'a str, trace_file: impl Into<String>) -> Self {
        RunInput {
            text,
            dialect: None,
            command: Vec::new(),
            capture_host: "unknown".into(),
            capture_time: "unknown".into(),
            trace_file: trace_file.into(),
        }
    }
}

pub struct AnalyzeOptions<'a> {
    /// Working directory of the root traced process.
    pub cwd: String,
    /// Access modes compared in a two-run diff.
    pub diff_mask: AccessMode,
    pub classifier: &'a Classifier,
    pub packages: Option<&'a dyn PackageProvider>,
    /// Mode recorded for a single (non two-run) trace.
    pub mode: RunMode,
    /// Leave files named on the target command line out of the delta.
    pub exclude_subjects: bool,
    /// Additional subject arguments, resolved against `cwd`.
    pub extra_subjects: Vec<String>,
}

impl Default for AnalyzeOptions<'_> {
    fn default() -> Self {
        AnalyzeOptions {
            cwd: "/".into(),
            diff_mask: AccessMode::READ,
            classifier: Classifier::builtin(),
            packages: None,
            mode: RunMode::SingleRun,
            exclude_subjects: true,
            extra_subjects: Vec::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error("{run} log: cannot tell strace from dtruss output; pass --dialect strace or --dialect dtruss")]
    UnknownDialect { run: &'static str },
}

/// Parses with the given or detected dialect. Blank input parses as an
/// empty trace.
pub fn parse_run(
    text: &str,
    dialect: Option<TraceDialect>,
    run: &'static str,
) -> Result<ParsedTrace, PipelineError> {
    let dialect = match dialect {
        Some(d) => d,
        None if text.trim().is_empty() => TraceDialect::LinuxStrace,
        None => detect_dialect(text).ok_or(PipelineError::UnknownDialect { run })?,
    };
    Ok(parse_stream(text, dialect))
}

struct Analyzed {
    trace: ParsedTrace,
    log: AccessLog,
    warnings: Vec<String>,
}

fn run_one(input: &RunInput<'_>, cwd: &str, run: &'static str) -> Result<Analyzed, PipelineError> {
    let trace = parse_run(input.text, input.dialect, run)?;
    let log = replay(&trace, cwd);
    let mut warnings = Vec::new();
    if trace.events.is_empty() {
        warnings.push(EMPTY_TRACE.to_string());
    }
    for issue in trace.issues.iter().take(ISSUE_WARNINGS) {
        warnings.push(format!("line {}: unparsed: {}", issue.line, issue.reason));
    }
    if trace.issues.len() > ISSUE_WARNINGS {
        warnings.push(format!(
            "{} more unparsed lines",
            trace.issues.len() - ISSUE_WARNINGS
        ));
    }
    warnings.extend(log.warnings.iter().cloned());
    Ok(Analyzed {
        trace,
        log,
        warnings,
    })
}

fn provenance(input: &RunInput<'_>, dialect: TraceDialect, mode: RunMode) -> RunProvenance {
    RunProvenance {
        command: input.command.clone(),
        dialect,
        capture_host: input.capture_host.clone(),
        capture_time: input.capture_time.clone(),
        trace_file: input.trace_file.clone(),
        mode,
    }
}

/// Target arguments that do not appear on the baseline command line and
/// name a file the target run touched.
pub fn subjects(target: &[String], baseline: &[String], cwd: &str, log: &AccessLog) -> Vec<String> {
    let base: BTreeSet<&String> = baseline.iter().collect();
    resolve_subjects(
        target.iter().skip(1).filter(|a| !base.contains(a)),
        cwd,
        log,
    )
}

fn resolve_subjects<'s>(
    args: impl Iterator<Item = &'s String>,
    cwd: &str,
    log: &AccessLog,
) -> Vec<String> {
    let found: BTreeSet<String> = args
        .filter_map(|a| canonicalize(cwd, a).ok())
        .filter(|p| log.resources.get(p).is_some_and(|r| !r.synthetic))
        .collect();
    found.into_iter().collect()
}

pub fn analyze(
    target: &RunInput<'_>,
    baseline: Option<&RunInput<'_>>,
    opts: &AnalyzeOptions<'_>,
) -> Result<RIReport, PipelineError> {
    let t = run_one(target, &opts.cwd, "target")?;
    let b = match baseline {
        Some(input) => Some(run_one(input, &opts.cwd, "baseline")?),
        None => None,
    };

    let mode = if b.is_some() {
        RunMode::TwoRun
    } else {
        opts.mode
    };
    let mut report = RIReport::new(Provenance {
        target: provenance(target, t.trace.dialect, mode),
        baseline: baseline
            .zip(b.as_ref())
            .map(|(input, b)| provenance(input, b.trace.dialect, RunMode::TwoRun)),
    });

    report.warnings = t.warnings.clone();
    if let Some(b) = &b {
        report
            .warnings
            .extend(b.warnings.iter().map(|w| format!("baseline: {w}")));
        let mut delta = diff_logs(&b.log, &t.log, opts.diff_mask);
        if opts.exclude_subjects {
            let base_cmd = &baseline.expect("baseline input").command;
            let mut found = subjects(&target.command, base_cmd, &opts.cwd, &t.log);
            found.extend(resolve_subjects(
                opts.extra_subjects.iter(),
                &opts.cwd,
                &t.log,
            ));
            found.sort();
            found.dedup();
            report.subjects = found;
            for s in &report.subjects {
                delta.added.remove(s);
                delta.shared.remove(s);
                delta.removed.remove(s);
            }
        }
        report.delta = Some(delta);
    }

    let paths: BTreeSet<String> = t
        .log
        .resources
        .values()
        .filter(|r| !r.synthetic)
        .map(|r| r.path.clone())
        .collect();
    let enrichment = opts.packages.map(|p| enrich_packages(&paths, p));

    for r in t.log.resources.values().filter(|r| !r.synthetic) {
        let package = enrichment.as_ref().and_then(|e| {
            e.packages
                .iter()
                .find(|p| p.path == r.path)
                .map(|p| PackageRef {
                    name: p.package.clone(),
                    version: p.version.clone(),
                    source: p.source.clone(),
                })
        });
        report.resources.push(ResourceEntry {
            path: r.path.clone(),
            class: classify_access(opts.classifier, r),
            mode: r.mode,
            pids: r.pids.clone(),
            bytes_read: r.bytes_read,
            bytes_written: r.bytes_written,
            first_line: r.first_line,
            package,
        });
    }
    if let Some(e) = enrichment {
        report.unresolved_packages = e.unresolved;
        report.warnings.extend(
            e.failures
                .into_iter()
                .map(|f| format!("package lookup failed: {f}")),
        );
    }

    report.missing = analyze_missing(&t.log).missing;
    report.processes = t
        .log
        .processes
        .iter()
        .map(|p| ProcessEntry {
            pid: p.pid,
            parent: p.parent,
            program: p.program.clone(),
            argv: p.argv.clone(),
        })
        .collect();
    Ok(report)
}
