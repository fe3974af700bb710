//! Tracer output → [`TraceEvent`]s.
//!
//! Two dialects are understood: Linux `strace` (`-f` style, pid-prefixed
//! lines) and macOS `dtruss`. Parsing is total: malformed lines become
//! [`ParseIssue`]s, never errors.

use std::collections::HashMap;

use crate::model::{ProcessId, TraceDialect, TraceEvent};

mod dtruss;
pub mod escape;
mod strace;
mod syntax;

pub use escape::{decode_escaped_buffer, escape_c, parse_quoted, EscapeError};

/// Pid assigned to lines that carry none (tracing a single process without
/// `-f`).
pub const IMPLICIT_PID: u32 = 1;

/// Lines considered by [`detect_dialect`].
pub const DETECT_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIssue {
    pub line: usize,
    pub raw: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LineOutcome {
    Event(TraceEvent),
    /// Blank lines and tracer chatter (signals, exit notes, summary rows).
    Skip,
    Issue(ParseIssue),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTrace {
    pub dialect: TraceDialect,
    pub events: Vec<TraceEvent>,
    pub issues: Vec<ParseIssue>,
    pub skipped: usize,
    /// Physical lines after merging `<unfinished ...>`/`resumed` pairs.
    pub logical_lines: usize,
}

impl ParsedTrace {
    pub fn empty(dialect: TraceDialect) -> Self {
        ParsedTrace {
            dialect,
            events: Vec::new(),
            issues: Vec::new(),
            skipped: 0,
            logical_lines: 0,
        }
    }
}

pub(crate) fn issue(line: usize, raw: &str, reason: impl Into<String>) -> LineOutcome {
    LineOutcome::Issue(ParseIssue {
        line,
        raw: raw.to_string(),
        reason: reason.into(),
    })
}

/// Parses one complete logical trace line.
pub fn parse_line(line: &str, dialect: TraceDialect, line_number: usize) -> LineOutcome {
    if line.trim().is_empty() {
        return LineOutcome::Skip;
    }
    match dialect {
        TraceDialect::LinuxStrace => strace::parse_line(line, line_number),
        TraceDialect::MacDtruss => dtruss::parse_line(line, line_number),
    }
}

/// Parses a whole log, merging strace's split `<unfinished ...>` calls.
pub fn parse_stream(text: &str, dialect: TraceDialect) -> ParsedTrace {
    let mut out = ParsedTrace::empty(dialect);
    // (pid, call name) -> (line number, raw line, head text)
    let mut pending: HashMap<(Option<u32>, String), (usize, String, String)> = HashMap::new();
    let mut merged = 0usize;
    let mut physical = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let number = idx + 1;
        physical += 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);

        let outcome = if dialect == TraceDialect::LinuxStrace {
            match strace::split_fragment(raw) {
                Some(strace::Fragment::Unfinished { pid, name, head }) => {
                    let key = (pid, name);
                    if let Some((old_line, old_raw, _)) =
                        pending.insert(key, (number, raw.to_string(), head))
                    {
                        out.issues.push(ParseIssue {
                            line: old_line,
                            raw: old_raw,
                            reason: "unfinished call superseded before it resumed".into(),
                        });
                    }
                    continue;
                }
                Some(strace::Fragment::Resumed { pid, name, tail }) => {
                    match pending.remove(&(pid, name)) {
                        Some((_, _, head)) => {
                            merged += 1;
                            let logical = format!("{}{}", head.trim_end(), tail);
                            parse_line(&logical, dialect, number)
                        }
                        None => issue(number, raw, "resumed call without matching unfinished half"),
                    }
                }
                None => parse_line(raw, dialect, number),
            }
        } else {
            parse_line(raw, dialect, number)
        };

        match outcome {
            LineOutcome::Event(ev) => out.events.push(ev),
            LineOutcome::Skip => out.skipped += 1,
            LineOutcome::Issue(i) => out.issues.push(i),
        }
    }

    for (_, (line, raw, _)) in pending {
        out.issues.push(ParseIssue {
            line,
            raw,
            reason: "unfinished call never resumed".into(),
        });
    }
    out.issues.sort_by_key(|i| i.line);
    out.logical_lines = physical - merged;
    out
}

/// Guesses the dialect of a log by majority vote over its first
/// [`DETECT_WINDOW`] non-blank lines. `None` when neither dialect wins a
/// majority.
pub fn detect_dialect(text: &str) -> Option<TraceDialect> {
    let sample: Vec<&str> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .take(DETECT_WINDOW)
        .collect();
    if sample.is_empty() {
        return None;
    }
    let score = |dialect: TraceDialect| {
        sample
            .iter()
            .filter(|line| {
                if dialect == TraceDialect::LinuxStrace && strace::split_fragment(line).is_some() {
                    return true;
                }
                !matches!(parse_line(line, dialect, 1), LineOutcome::Issue(_))
            })
            .count()
    };
    let strace = score(TraceDialect::LinuxStrace);
    let dtruss = score(TraceDialect::MacDtruss);
    let majority = sample.len() / 2;
    match (strace > majority, dtruss > majority) {
        (true, false) => Some(TraceDialect::LinuxStrace),
        (false, true) => Some(TraceDialect::MacDtruss),
        (true, true) if strace > dtruss => Some(TraceDialect::LinuxStrace),
        (true, true) if dtruss > strace => Some(TraceDialect::MacDtruss),
        _ => None,
    }
}

pub(crate) fn pid_or_implicit(pid: Option<u32>) -> Option<ProcessId> {
    ProcessId::new(pid.unwrap_or(IMPLICIT_PID))
}
