//! Platform tracer orchestration.

use std::ffi::OsString;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use ritrace_core::TraceDialect;
use thiserror::Error;

pub const TRACER_ENV: &str = "RI_TRACER_PATH";

#[derive(Debug, Error)]
pub enum TracerError {
    #[error("{adapter} not found (probed {probed}); install it or set {TRACER_ENV} to the tracer binary")]
    Missing {
        adapter: &'static str,
        probed: String,
    },
    #[error("{adapter} was not permitted to trace ({detail}); run with sufficient privileges (ptrace_scope, root, or SIP settings)")]
    PermissionDenied {
        adapter: &'static str,
        detail: String,
    },
    #[error("process {pid} does not exist (it may have exited)")]
    PidVanished { pid: u32 },
    #[error("not permitted to signal process {pid}; attaching needs the same user or root")]
    PidNotPermitted { pid: u32 },
    #[error("running {adapter} failed: {source}")]
    Spawn {
        adapter: &'static str,
        source: std::io::Error,
    },
    #[error("{adapter} exited with {status} without writing a trace: {detail}")]
    Failed {
        adapter: &'static str,
        status: ExitStatus,
        detail: String,
    },
    #[error("capture is not supported on this platform; analyze logs captured elsewhere instead")]
    Unsupported,
}

/// A system-call tracer that can launch or attach to a process and write a
/// log in its dialect.
pub trait TracerAdapter {
    fn name(&self) -> &'static str;
    fn dialect(&self) -> TraceDialect;
    fn binary(&self) -> &Path;
    /// Arguments for tracing `argv` from launch, following children.
    fn launch_args(&self, argv: &[String], log: &Path) -> Vec<OsString>;
    fn attach_args(&self, pid: u32, log: &Path) -> Vec<OsString>;
    /// Whether the tracer writes its trace to stderr rather than a file.
    fn trace_on_stderr(&self) -> bool;

    fn launch(&self, argv: &[String], log: &Path) -> Result<ExitStatus, TracerError> {
        let child = self.spawn(self.launch_args(argv, log), log)?;
        self.finish(child, None)
    }

    /// Traces `pid` until `stop` elapses or the tracer exits, then stops it
    /// with SIGINT.
    fn attach(&self, pid: u32, log: &Path, stop: Duration) -> Result<ExitStatus, TracerError> {
        check_pid(pid)?;
        let child = self.spawn(self.attach_args(pid, log), log)?;
        self.finish(child, Some(stop))
    }

    fn spawn(&self, args: Vec<OsString>, log: &Path) -> Result<Child, TracerError> {
        let spawn_err = |source| TracerError::Spawn {
            adapter: self.name(),
            source,
        };
        let mut cmd = Command::new(self.binary());
        // stdout carries the report, so the traced program writes to stderr
        cmd.args(args)
            .stdin(Stdio::inherit())
            .stdout(Stdio::from(std::io::stderr()));
        if self.trace_on_stderr() {
            cmd.stderr(File::create(log).map_err(spawn_err)?);
        } else {
            cmd.stderr(Stdio::piped());
        }
        cmd.spawn().map_err(spawn_err)
    }

    fn finish(&self, mut child: Child, stop: Option<Duration>) -> Result<ExitStatus, TracerError> {
        let stderr = child.stderr.take().map(|mut s| {
            thread::spawn(move || {
                let mut buf = String::new();
                let _ = s.read_to_string(&mut buf);
                buf
            })
        });
        let wait_err = |source| TracerError::Spawn {
            adapter: self.name(),
            source,
        };
        let status = match stop {
            None => child.wait().map_err(wait_err)?,
            Some(limit) => {
                let start = Instant::now();
                loop {
                    if let Some(status) = child.try_wait().map_err(wait_err)? {
                        break status;
                    }
                    if start.elapsed() >= limit {
                        interrupt(&child);
                        break child.wait().map_err(wait_err)?;
                    }
                    thread::sleep(Duration::from_millis(20));
                }
            }
        };
        let diagnostics = stderr
            .map(|h| h.join().unwrap_or_default())
            .unwrap_or_default();
        if !diagnostics.is_empty() {
            eprint!("{diagnostics}");
        }
        if let Some(line) = diagnostics
            .lines()
            .find(|l| l.contains("Operation not permitted") || l.contains("EPERM"))
        {
            return Err(TracerError::PermissionDenied {
                adapter: self.name(),
                detail: line.trim().to_string(),
            });
        }
        Ok(status)
    }
}

fn interrupt(child: &Child) {
    if let Ok(pid) = libc::pid_t::try_from(child.id()) {
        // SAFETY: plain kill(2) on our own child's pid.
        unsafe {
            libc::kill(pid, libc::SIGINT);
        }
    }
}

/// Distinguishes a vanished pid from one we may not signal.
pub fn check_pid(pid: u32) -> Result<(), TracerError> {
    let Ok(raw) = libc::pid_t::try_from(pid) else {
        return Err(TracerError::PidVanished { pid });
    };
    if raw <= 0 {
        return Err(TracerError::PidVanished { pid });
    }
    // SAFETY: signal 0 only performs the existence and permission check.
    let rc = unsafe { libc::kill(raw, 0) };
    if rc == 0 {
        return Ok(());
    }
    match std::io::Error::last_os_error().raw_os_error() {
        Some(libc::EPERM) => Err(TracerError::PidNotPermitted { pid }),
        _ => Err(TracerError::PidVanished { pid }),
    }
}

#[derive(Debug, Clone)]
pub struct StraceAdapter {
    pub binary: PathBuf,
}

impl TracerAdapter for StraceAdapter {
    fn name(&self) -> &'static str {
        "strace"
    }

    fn dialect(&self) -> TraceDialect {
        TraceDialect::LinuxStrace
    }

    fn binary(&self) -> &Path {
        &self.binary
    }

    fn launch_args(&self, argv: &[String], log: &Path) -> Vec<OsString> {
        let mut args = strace_common(log);
        args.push("--".into());
        args.extend(argv.iter().map(OsString::from));
        args
    }

    fn attach_args(&self, pid: u32, log: &Path) -> Vec<OsString> {
        let mut args = strace_common(log);
        args.push("-p".into());
        args.push(pid.to_string().into());
        args
    }

    fn trace_on_stderr(&self) -> bool {
        false
    }
}

/// Follow children, file/process/descriptor calls only, 64-byte buffer
/// prefixes for magic sniffing, output to the log file.
fn strace_common(log: &Path) -> Vec<OsString> {
    let mut args: Vec<OsString> = [
        "-f",
        "-q",
        "-s",
        "64",
        "-e",
        "trace=%file,%process,%desc",
        "-o",
    ]
    .map(OsString::from)
    .to_vec();
    args.push(log.into());
    args
}

#[derive(Debug, Clone)]
pub struct DtrussAdapter {
    pub binary: PathBuf,
}

impl TracerAdapter for DtrussAdapter {
    fn name(&self) -> &'static str {
        "dtruss"
    }

    fn dialect(&self) -> TraceDialect {
        TraceDialect::MacDtruss
    }

    fn binary(&self) -> &Path {
        &self.binary
    }

    fn launch_args(&self, argv: &[String], _log: &Path) -> Vec<OsString> {
        let mut args: Vec<OsString> = vec!["-f".into()];
        args.extend(argv.iter().map(OsString::from));
        args
    }

    fn attach_args(&self, pid: u32, _log: &Path) -> Vec<OsString> {
        vec!["-f".into(), "-p".into(), pid.to_string().into()]
    }

    fn trace_on_stderr(&self) -> bool {
        true
    }
}

/// Locates the tracer binary: `RI_TRACER_PATH` if set, else `PATH`.
pub fn probe(dialect: TraceDialect) -> Result<Box<dyn TracerAdapter>, TracerError> {
    let name = match dialect {
        TraceDialect::LinuxStrace => "strace",
        TraceDialect::MacDtruss => "dtruss",
    };
    let binary = match std::env::var_os(TRACER_ENV) {
        Some(p) if !p.is_empty() => {
            let p = PathBuf::from(p);
            if !p.is_file() {
                return Err(TracerError::Missing {
                    adapter: name,
                    probed: format!("{TRACER_ENV}={}", p.display()),
                });
            }
            p
        }
        _ => search_path(name).ok_or_else(|| TracerError::Missing {
            adapter: name,
            probed: format!("`{name}` on PATH"),
        })?,
    };
    Ok(match dialect {
        TraceDialect::LinuxStrace => Box::new(StraceAdapter { binary }),
        TraceDialect::MacDtruss => Box::new(DtrussAdapter { binary }),
    })
}

/// The tracer native to the running platform.
pub fn native_dialect() -> Result<TraceDialect, TracerError> {
    if cfg!(target_os = "linux") {
        Ok(TraceDialect::LinuxStrace)
    } else if cfg!(target_os = "macos") {
        Ok(TraceDialect::MacDtruss)
    } else {
        Err(TracerError::Unsupported)
    }
}

fn search_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(name))
        .find(|p| p.is_file())
}
