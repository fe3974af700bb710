//! Package lookup through the host's `dpkg-query`.

use std::path::PathBuf;
use std::process::Command;

use ritrace_core::analysis::{PackageRecord, ProviderError};
use ritrace_core::PackageProvider;

pub struct DpkgProvider {
    binary: PathBuf,
}

impl DpkgProvider {
    pub fn new(binary: impl Into<PathBuf>) -> Self {
        DpkgProvider {
            binary: binary.into(),
        }
    }

    /// `dpkg-query` from `PATH`, if present.
    pub fn probe() -> Option<Self> {
        let path = std::env::var_os("PATH")?;
        std::env::split_paths(&path)
            .map(|d| d.join("dpkg-query"))
            .find(|p| p.is_file())
            .map(Self::new)
    }

    fn query(&self, args: &[&str]) -> Result<Option<String>, ProviderError> {
        let out = Command::new(&self.binary)
            .args(args)
            .output()
            .map_err(|e| ProviderError(format!("{}: {e}", self.binary.display())))?;
        if !out.status.success() {
            return Ok(None);
        }
        Ok(Some(String::from_utf8_lossy(&out.stdout).into_owned()))
    }
}

/// Owner of `path` in `dpkg-query -S` output (`pkg[:arch][, pkg2]: /path`).
pub fn parse_search(output: &str, path: &str) -> Option<String> {
    output.lines().find_map(|line| {
        let (pkgs, p) = line.rsplit_once(": ")?;
        if p.trim() != path || pkgs.starts_with("diversion ") {
            return None;
        }
        let first = pkgs.split(',').next()?.trim();
        (!first.is_empty()).then(|| first.to_string())
    })
}

impl PackageProvider for DpkgProvider {
    fn id(&self) -> &str {
        "dpkg"
    }

    fn lookup(&self, path: &str) -> Result<Option<PackageRecord>, ProviderError> {
        let Some(out) = self.query(&["-S", path])? else {
            return Ok(None);
        };
        let Some(name) = parse_search(&out, path) else {
            return Ok(None);
        };
        let version = self
            .query(&["-W", "-f=${Version}", &name])?
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty());
        Ok(Some(PackageRecord { name, version }))
    }
}
