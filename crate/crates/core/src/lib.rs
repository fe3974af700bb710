//! Dynamic dependency analysis from system-call traces.
//!
//! A renderer is traced (strace on Linux, dtruss on macOS), the log is
//! parsed into [`TraceEvent`]s, replayed through per-process descriptor
//! tables into an [`AccessLog`], and the result is turned into a
//! representation-information report: which fonts, libraries and media
//! were pulled in, which only appear when the document is loaded, and which
//! referenced resources could not be found.

pub mod analysis;
pub mod model;
pub mod parser;
pub mod pipeline;
pub mod replay;
pub mod report;
pub mod scenario;

pub use analysis::{
    classify, detect_missing, diff_logs, enrich_packages, fontset, Classifier, DependencyDelta,
    FontSubtype, MissingResource, PackageInfo, PackageProvider, ResourceClass,
};
pub use model::{
    Buffer, CallClass, CallResult, Fd, OpenFlags, ProcessId, TraceDialect, TraceEvent,
};
pub use parser::{detect_dialect, parse_line, parse_stream, LineOutcome, ParseIssue, ParsedTrace};
pub use pipeline::{analyze, AnalyzeOptions, PipelineError, RunInput};
pub use replay::{
    canonicalize, replay, resource_set, AccessLog, AccessMode, FailedOpen, ProcessNode,
    ResourceAccess,
};
pub use report::{emit, load, render_summary, RIReport, RunMode, RunProvenance};
