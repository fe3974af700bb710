//! Clustering of failed opens into missing referenced resources.
//!
//! A program that cannot find a referenced file typically probes several
//! candidate locations for the same file name. Failed `ENOENT` opens are
//! grouped by basename; a group is reported unless the basename was
//! eventually found somewhere (ordinary search-path probing).

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::model::ProcessId;
use crate::replay::AccessLog;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MissingResource {
    pub basename: String,
    /// Every attempt, in trace order.
    pub attempted_paths: Vec<String>,
    #[serde(rename = "errnoNames")]
    pub errnos: BTreeSet<String>,
    pub pids: BTreeSet<ProcessId>,
}

pub fn basename(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MissingAnalysis {
    pub missing: Vec<MissingResource>,
    /// ENOENT attempts whose basename was later found.
    pub excluded_attempts: usize,
}

pub fn detect_missing(log: &AccessLog) -> Vec<MissingResource> {
    analyze_missing(log).missing
}

pub fn analyze_missing(log: &AccessLog) -> MissingAnalysis {
    let found: BTreeSet<&str> = log
        .resources
        .values()
        .filter(|r| !r.synthetic)
        .map(|r| basename(&r.path))
        .collect();

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, MissingResource> = HashMap::new();
    for f in log.failed_opens.iter().filter(|f| f.errno == "ENOENT") {
        let name = basename(&f.path).to_string();
        let group = groups.entry(name.clone()).or_insert_with(|| {
            order.push(name.clone());
            MissingResource {
                basename: name,
                attempted_paths: Vec::new(),
                errnos: BTreeSet::new(),
                pids: BTreeSet::new(),
            }
        });
        group.attempted_paths.push(f.path.clone());
        group.errnos.insert(f.errno.clone());
        group.pids.insert(f.pid);
    }

    let mut out = MissingAnalysis::default();
    for name in order {
        let group = groups.remove(&name).expect("grouped");
        if found.contains(name.as_str()) {
            out.excluded_attempts += group.attempted_paths.len();
        } else {
            out.missing.push(group);
        }
    }
    out
}
