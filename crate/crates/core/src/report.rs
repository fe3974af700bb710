//! Representation-information reports: JSON (schema version 1) and a
//! plain-text summary.
//!
//! The JSON layout is documented in `docs/report-schema.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{DependencyDelta, MissingResource, ResourceClass};
use crate::model::{ProcessId, TraceDialect};
use crate::replay::AccessMode;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    TwoRun,
    Attach,
    SingleRun,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::TwoRun => "two-run",
            RunMode::Attach => "attach",
            RunMode::SingleRun => "single-run",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunProvenance {
    /// argv of the traced run; empty when attaching or when unknown.
    pub command: Vec<String>,
    pub dialect: TraceDialect,
    pub capture_host: String,
    pub capture_time: String,
    pub trace_file: String,
    pub mode: RunMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Provenance {
    pub target: RunProvenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<RunProvenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PackageRef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResourceEntry {
    pub path: String,
    pub class: ResourceClass,
    pub mode: AccessMode,
    pub pids: BTreeSet<ProcessId>,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub first_line: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package: Option<PackageRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcessEntry {
    pub pid: ProcessId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<ProcessId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
    pub argv: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RIReport {
    pub schema_version: String,
    pub provenance: Provenance,
    pub resources: Vec<ResourceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<DependencyDelta>,
    pub missing: Vec<MissingResource>,
    pub processes: Vec<ProcessEntry>,
    /// Paths named on the target command line and left out of the delta.
    #[serde(default)]
    pub subjects: Vec<String>,
    #[serde(default)]
    pub unresolved_packages: usize,
    pub warnings: Vec<String>,
}

impl RIReport {
    pub fn new(provenance: Provenance) -> Self {
        RIReport {
            schema_version: SCHEMA_VERSION.to_string(),
            provenance,
            resources: Vec::new(),
            delta: None,
            missing: Vec::new(),
            processes: Vec::new(),
            subjects: Vec::new(),
            unresolved_packages: 0,
            warnings: Vec::new(),
        }
    }

    /// Checks the structural invariants `emit` relies on.
    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version.is_empty() {
            return Err("schemaVersion is empty".into());
        }
        if let Some(w) = self.resources.windows(2).find(|w| w[0].path >= w[1].path) {
            return Err(format!(
                "resources not strictly sorted at `{}`, `{}`",
                w[0].path, w[1].path
            ));
        }
        let two_run = self.provenance.target.mode == RunMode::TwoRun;
        if (two_run || self.delta.is_some()) && self.provenance.baseline.is_none() {
            return Err("two-run report without baseline provenance".into());
        }
        if let Some(m) = self.missing.iter().find(|m| m.attempted_paths.is_empty()) {
            return Err(format!("missing resource `{}` has no attempts", m.basename));
        }
        Ok(())
    }

    pub fn resource(&self, path: &str) -> Option<&ResourceEntry> {
        self.resources
            .binary_search_by(|r| r.path.as_str().cmp(path))
            .ok()
            .map(|i| &self.resources[i])
    }

    /// Font resources in path order.
    pub fn fonts(&self) -> impl Iterator<Item = &ResourceEntry> {
        self.resources.iter().filter(|r| r.class.is_font())
    }
}

pub fn emit(report: &RIReport) -> String {
    debug_assert_eq!(report.validate(), Ok(()));
    let mut out = serde_json::to_string_pretty(report).expect("report serializes");
    out.push('\n');
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LoadError {
    #[error("malformed report at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("report has no schemaVersion")]
    MissingVersion,
    #[error("unsupported report schemaVersion `{found}` (supported: {SCHEMA_VERSION})")]
    UnsupportedVersion { found: String },
    #[error("invalid report: {0}")]
    Invalid(String),
}

impl LoadError {
    fn parse(e: serde_json::Error) -> Self {
        LoadError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

pub fn load(text: &str) -> Result<RIReport, LoadError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(LoadError::parse)?;
    match value.get("schemaVersion") {
        None => return Err(LoadError::MissingVersion),
        Some(serde_json::Value::String(v)) if v == SCHEMA_VERSION => {}
        Some(other) => {
            let found = other
                .as_str()
                .map(str::to_string)
                .unwrap_or_else(|| other.to_string());
            return Err(LoadError::UnsupportedVersion { found });
        }
    }
    let report: RIReport = serde_json::from_str(text).map_err(LoadError::parse)?;
    report.validate().map_err(LoadError::Invalid)?;
    Ok(report)
}

fn group_title(class: &ResourceClass) -> (u8, &'static str) {
    match class {
        ResourceClass::Font(_) => (0, "Fonts"),
        ResourceClass::MediaFile(_) => (1, "Media"),
        ResourceClass::Config => (2, "Configuration"),
        ResourceClass::SharedLibrary => (3, "Shared libraries"),
        ResourceClass::Executable => (4, "Executables"),
        ResourceClass::Directory => (5, "Directories"),
        ResourceClass::Other => (6, "Other"),
    }
}

fn file_name(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

/// Human-readable table, fonts first. With a delta present only the
/// document-specific (added) resources are listed.
pub fn render_summary(report: &RIReport) -> String {
    let mut out = String::new();
    let listed: Vec<&ResourceEntry> = match &report.delta {
        Some(d) => report
            .resources
            .iter()
            .filter(|r| d.added.contains(&r.path))
            .collect(),
        None => report.resources.iter().collect(),
    };
    let (probed, used): (Vec<&ResourceEntry>, Vec<&ResourceEntry>) =
        listed.into_iter().partition(|r| r.mode.statted_only);

    if report.resources.is_empty() && report.missing.is_empty() {
        out.push_str("no resources\n");
    }

    let mut groups: BTreeMap<(u8, &str), Vec<&ResourceEntry>> = BTreeMap::new();
    for r in used {
        groups.entry(group_title(&r.class)).or_default().push(r);
    }
    for ((_, title), entries) in &groups {
        section(&mut out, title, entries);
    }
    if !probed.is_empty() {
        section(&mut out, "Probed only", &probed);
    }

    if let Some(d) = &report.delta {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "Baseline comparison: {} added, {} shared, {} baseline only",
            d.added.len(),
            d.shared.len(),
            d.removed.len()
        );
    }

    if !report.missing.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "Missing ({})", report.missing.len());
        for m in &report.missing {
            let errnos: Vec<&str> = m.errnos.iter().map(String::as_str).collect();
            let _ = writeln!(
                out,
                "  {}  {}  {} attempt{}",
                m.basename,
                errnos.join(","),
                m.attempted_paths.len(),
                if m.attempted_paths.len() == 1 {
                    ""
                } else {
                    "s"
                }
            );
            for p in &m.attempted_paths {
                let _ = writeln!(out, "    {p}");
            }
        }
    }

    if !report.warnings.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "Warnings ({})", report.warnings.len());
        for w in &report.warnings {
            let _ = writeln!(out, "  {w}");
        }
    }
    out
}

fn section(out: &mut String, title: &str, entries: &[&ResourceEntry]) {
    if !out.is_empty() {
        out.push('\n');
    }
    let _ = writeln!(out, "{title} ({})", entries.len());
    let name_w = entries
        .iter()
        .map(|r| file_name(&r.path).len())
        .max()
        .unwrap_or(0);
    let class_w = entries
        .iter()
        .map(|r| r.class.to_string().len())
        .max()
        .unwrap_or(0);
    for r in entries {
        let mut line = format!(
            "  {:name_w$}  {:class_w$}  {}",
            file_name(&r.path),
            r.class.to_string(),
            r.path
        );
        if let Some(p) = &r.package {
            match &p.version {
                Some(v) => {
                    let _ = write!(line, "  [{} {}]", p.name, v);
                }
                None => {
                    let _ = write!(line, "  [{}]", p.name);
                }
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
}
