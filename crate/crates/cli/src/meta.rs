//! Capture metadata kept next to a log as `<log>.meta.json`.

use std::io;
use std::path::{Path, PathBuf};

use ritrace_core::{RunMode, TraceDialect};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunMeta {
    pub command: Vec<String>,
    pub dialect: TraceDialect,
    pub capture_host: String,
    pub capture_time: String,
    pub cwd: String,
    pub mode: RunMode,
    /// Exit code of the traced program, `None` if it died from a signal.
    pub exit_status: Option<i32>,
}

impl RunMeta {
    pub fn now(command: Vec<String>, dialect: TraceDialect, cwd: String, mode: RunMode) -> Self {
        RunMeta {
            command,
            dialect,
            capture_host: hostname(),
            capture_time: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            cwd,
            mode,
            exit_status: None,
        }
    }

    pub fn write(&self, log: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        std::fs::write(sidecar_path(log), text + "\n")
    }

    /// The sidecar for `log`, if one exists.
    pub fn read(log: &Path) -> io::Result<Option<RunMeta>> {
        let path = sidecar_path(log);
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}: {e}", path.display()),
                )
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}

pub fn sidecar_path(log: &Path) -> PathBuf {
    let mut name = log.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn hostname() -> String {
    let mut buf = [0u8; 256];
    // SAFETY: the buffer is valid for its full length and gethostname
    // writes at most that many bytes.
    let rc = unsafe { libc::gethostname(buf.as_mut_ptr().cast(), buf.len()) };
    if rc != 0 {
        return "unknown".into();
    }
    let end = buf.iter().position(|&b| b == 0).unwrap_or(buf.len());
    String::from_utf8_lossy(&buf[..end]).into_owned()
}
