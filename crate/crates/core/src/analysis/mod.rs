//! Turning access logs into preservation knowledge.

mod classify;
mod diff;
mod missing;
mod packages;

pub use classify::{classify, fontset, Classifier, FontSubtype, Hints, ResourceClass, RuleError};
pub use diff::{diff_logs, diff_sets, DependencyDelta};
pub use missing::{analyze_missing, basename, detect_missing, MissingAnalysis, MissingResource};
pub use packages::{
    enrich_packages, Enrichment, FixtureError, FixtureProvider, PackageInfo, PackageProvider,
    PackageRecord, ProviderError,
};

use crate::replay::ResourceAccess;

/// Classifies a replayed resource, taking exec/directory facts into account.
pub fn classify_access(classifier: &Classifier, access: &ResourceAccess) -> ResourceClass {
    classifier.classify_with(
        &access.path,
        access.sniffed_prefix.as_deref(),
        Hints {
            executed: access.mode.executed,
            directory: access.directory,
        },
    )
}
