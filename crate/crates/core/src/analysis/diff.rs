//! Baseline/target comparison.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::replay::{resource_set, AccessLog, AccessMode};

/// Partition of the paths touched by two runs.
///
/// `added ∪ shared` is the target set and `shared ∪ removed` the baseline
/// set; the three parts are pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DependencyDelta {
    pub added: BTreeSet<String>,
    pub shared: BTreeSet<String>,
    pub removed: BTreeSet<String>,
}

impl DependencyDelta {
    pub fn target(&self) -> BTreeSet<String> {
        self.added.union(&self.shared).cloned().collect()
    }

    pub fn baseline(&self) -> BTreeSet<String> {
        self.shared.union(&self.removed).cloned().collect()
    }
}

pub fn diff_sets(baseline: &BTreeSet<String>, target: &BTreeSet<String>) -> DependencyDelta {
    DependencyDelta {
        added: target.difference(baseline).cloned().collect(),
        shared: target.intersection(baseline).cloned().collect(),
        removed: baseline.difference(target).cloned().collect(),
    }
}

pub fn diff_logs(baseline: &AccessLog, target: &AccessLog, mask: AccessMode) -> DependencyDelta {
    diff_sets(&resource_set(baseline, mask), &resource_set(target, mask))
}
