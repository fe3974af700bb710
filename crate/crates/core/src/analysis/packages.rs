//! Mapping dependency paths to the packages that provide them.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageRecord {
    pub name: String,
    pub version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageInfo {
    pub path: String,
    pub package: String,
    pub version: Option<String>,
    /// Identifier of the provider that resolved the path.
    pub source: String,
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ProviderError(pub String);

/// Path → owning package lookup.
pub trait PackageProvider {
    fn id(&self) -> &str;
    fn lookup(&self, path: &str) -> Result<Option<PackageRecord>, ProviderError>;
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("reading package fixture {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("package fixture line {line}: {reason}")]
    Syntax { line: usize, reason: String },
}

/// File-backed provider using `dpkg -S` style lines:
///
/// ```text
/// gsfonts: /usr/share/fonts/type1/gsfonts/n019004l.pfb
/// libmagickcore3=6.6.0.4-3: /usr/lib/libMagickCore.so.3
/// ```
#[derive(Debug, Clone, Default)]
pub struct FixtureProvider {
    id: String,
    entries: HashMap<String, PackageRecord>,
}

impl FixtureProvider {
    pub fn parse(id: &str, text: &str) -> Result<Self, FixtureError> {
        let mut entries = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |reason: &str| FixtureError::Syntax {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let (pkg, path) = line
                .split_once(": /")
                .ok_or_else(|| syntax("expected `package: /path`"))?;
            let (name, version) = match pkg.split_once('=') {
                Some((n, v)) => (n.trim(), Some(v.trim().to_string())),
                None => (pkg.trim(), None),
            };
            if name.is_empty() {
                return Err(syntax("empty package name"));
            }
            entries.insert(
                format!("/{}", path.trim_end()),
                PackageRecord {
                    name: name.to_string(),
                    version,
                },
            );
        }
        Ok(FixtureProvider {
            id: id.to_string(),
            entries,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, FixtureError> {
        let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&format!("fixture:{}", path.display()), &text)
    }
}

impl PackageProvider for FixtureProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn lookup(&self, path: &str) -> Result<Option<PackageRecord>, ProviderError> {
        Ok(self.entries.get(path).cloned())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Enrichment {
    pub packages: Vec<PackageInfo>,
    pub unresolved: usize,
    /// Lookups that failed outright; also counted in `unresolved`.
    pub failures: Vec<String>,
}

pub fn enrich_packages(paths: &BTreeSet<String>, provider: &dyn PackageProvider) -> Enrichment {
    let mut out = Enrichment::default();
    for path in paths {
        match provider.lookup(path) {
            Ok(Some(rec)) => out.packages.push(PackageInfo {
                path: path.clone(),
                package: rec.name,
                version: rec.version,
                source: provider.id().to_string(),
            }),
            Ok(None) => out.unresolved += 1,
            Err(e) => {
                out.unresolved += 1;
                out.failures.push(format!("{path}: {e}"));
            }
        }
    }
    out
}
