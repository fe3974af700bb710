//! Domain types for decoded kernel-call traces.
//!
//! Everything here is a plain value: no I/O, cheap to clone, `Send + Sync`.

use std::fmt;

use serde::{Deserialize, Serialize};

/// OS process identifier. Always positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(u32);

impl ProcessId {
    pub fn new(value: u32) -> Option<Self> {
        (value > 0).then_some(Self(value))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// File descriptor number within one process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fd(pub u32);

impl fmt::Display for Fd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Decoded open(2) flags. `raw` is kept verbatim as printed by the tracer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OpenFlags {
    pub read: bool,
    pub write: bool,
    pub create: bool,
    pub directory: bool,
    pub cloexec: bool,
    pub raw: String,
}

impl OpenFlags {
    /// Decodes symbolic Linux flags such as `O_RDONLY|O_CLOEXEC`.
    ///
    /// Unknown tokens are only preserved in `raw`.
    pub fn from_symbolic(raw: &str) -> Self {
        let mut flags = OpenFlags {
            raw: raw.to_string(),
            ..Default::default()
        };
        let mut access_seen = false;
        for token in raw.split('|').map(str::trim) {
            match token {
                "O_RDONLY" => {
                    flags.read = true;
                    access_seen = true;
                }
                "O_WRONLY" => {
                    flags.write = true;
                    access_seen = true;
                }
                "O_RDWR" => {
                    flags.read = true;
                    flags.write = true;
                    access_seen = true;
                }
                "O_CREAT" => flags.create = true,
                "O_DIRECTORY" => flags.directory = true,
                "O_CLOEXEC" => flags.cloexec = true,
                _ => {}
            }
        }
        // O_RDONLY is zero and strace omits it when other flags are numeric only.
        if !access_seen && !flags.write {
            flags.read = true;
        }
        flags
    }

    /// Decodes the numeric flag word printed by dtruss (Darwin values).
    pub fn from_darwin_bits(raw: &str, bits: u64) -> Self {
        const O_WRONLY: u64 = 0x1;
        const O_RDWR: u64 = 0x2;
        const O_CREAT: u64 = 0x200;
        const O_DIRECTORY: u64 = 0x10_0000;
        const O_CLOEXEC: u64 = 0x100_0000;
        let (read, write) = match bits & 0x3 {
            O_WRONLY => (false, true),
            O_RDWR => (true, true),
            _ => (true, false),
        };
        OpenFlags {
            read,
            write,
            create: bits & O_CREAT != 0,
            directory: bits & O_DIRECTORY != 0,
            cloexec: bits & O_CLOEXEC != 0,
            raw: raw.to_string(),
        }
    }
}

/// Kernel-call classes the replay state machine understands.
///
/// Calls that no dialect maps land in [`CallClass::Other`] so that event
/// positions stay aligned with the source log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallClass {
    /// `dir_fd` is `None` for cwd-relative opens (`open`, `AT_FDCWD`).
    Open {
        path: String,
        flags: OpenFlags,
        dir_fd: Option<Fd>,
    },
    Read {
        fd: Fd,
        requested: u64,
    },
    Write {
        fd: Fd,
        requested: u64,
    },
    Close {
        fd: Fd,
    },
    /// `new_fd` is `None` for plain `dup`, where the kernel picks the number.
    Dup {
        old_fd: Fd,
        new_fd: Option<Fd>,
        cloexec: bool,
    },
    /// Process creation as seen from the parent. `child` is `None` on the
    /// child side of a dtruss `fork() = 0`.
    Fork {
        child: Option<ProcessId>,
        shares_files: bool,
    },
    Exec {
        program: String,
        argv: Vec<String>,
    },
    Chdir {
        path: String,
    },
    Stat {
        path: String,
        dir_fd: Option<Fd>,
    },
    /// Memory mapping of a file descriptor. Not counted as a read.
    Mmap {
        fd: Fd,
    },
    Other {
        name: String,
    },
}

impl CallClass {
    /// Name used in the canonical rendering.
    pub fn name(&self) -> &str {
        match self {
            CallClass::Open { .. } => "openat",
            CallClass::Read { .. } => "read",
            CallClass::Write { .. } => "write",
            CallClass::Close { .. } => "close",
            CallClass::Dup {
                new_fd: None,
                cloexec: false,
                ..
            } => "dup",
            CallClass::Dup { new_fd: None, .. } => "fcntl",
            CallClass::Dup { cloexec: false, .. } => "dup2",
            CallClass::Dup { .. } => "dup3",
            CallClass::Fork { .. } => "clone",
            CallClass::Exec { .. } => "execve",
            CallClass::Chdir { .. } => "chdir",
            CallClass::Stat { dir_fd: None, .. } => "stat",
            CallClass::Stat { .. } => "newfstatat",
            CallClass::Mmap { .. } => "mmap",
            CallClass::Other { name } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallResult {
    Ok(i64),
    Err {
        errno: String,
        message: String,
    },
    /// strace prints `= ?` when the result never became available.
    Unknown,
}

impl CallResult {
    pub fn ok(&self) -> Option<i64> {
        match self {
            CallResult::Ok(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, CallResult::Ok(_))
    }

    pub fn errno(&self) -> Option<&str> {
        match self {
            CallResult::Err { errno, .. } => Some(errno),
            _ => None,
        }
    }
}

/// Leading bytes of a read buffer as printed by the tracer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Buffer {
    pub bytes: Vec<u8>,
    /// The tracer cut the buffer short (`"..."...`).
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub pid: ProcessId,
    pub call: CallClass,
    pub result: CallResult,
    /// 1-based line in the source log.
    pub line: usize,
    /// Only ever set on `Read` events.
    pub read_prefix: Option<Buffer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceDialect {
    LinuxStrace,
    MacDtruss,
}

impl TraceDialect {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceDialect::LinuxStrace => "strace",
            TraceDialect::MacDtruss => "dtruss",
        }
    }
}

impl fmt::Display for TraceDialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TraceDialect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strace" | "linux-strace" => Ok(TraceDialect::LinuxStrace),
            "dtruss" | "mac-dtruss" => Ok(TraceDialect::MacDtruss),
            other => Err(format!("unknown trace dialect `{other}`")),
        }
    }
}

impl TraceEvent {
    /// Canonical single-line strace rendering of this event.
    ///
    /// Parsing the output with the strace dialect yields an equal event
    /// (line number aside).
    pub fn render(&self) -> String {
        use crate::parser::escape::escape_c;
        let args = match &self.call {
            CallClass::Open {
                path,
                flags,
                dir_fd,
            } => format!(
                "{}, \"{}\", {}",
                render_dir_fd(*dir_fd),
                escape_c(path.as_bytes()),
                flags.raw
            ),
            CallClass::Read { fd, requested } => {
                let buf = match &self.read_prefix {
                    Some(b) => format!(
                        "\"{}\"{}",
                        escape_c(&b.bytes),
                        if b.truncated { "..." } else { "" }
                    ),
                    None => "0x7ffc00000000".to_string(),
                };
                format!("{fd}, {buf}, {requested}")
            }
            CallClass::Write { fd, requested } => format!("{fd}, \"\", {requested}"),
            CallClass::Close { fd } => fd.to_string(),
            CallClass::Dup {
                old_fd,
                new_fd,
                cloexec,
            } => match (new_fd, cloexec) {
                (Some(n), false) => format!("{old_fd}, {n}"),
                (Some(n), true) => format!("{old_fd}, {n}, O_CLOEXEC"),
                (None, false) => old_fd.to_string(),
                (None, true) => format!("{old_fd}, F_DUPFD_CLOEXEC, 0"),
            },
            CallClass::Fork { shares_files, .. } => format!(
                "child_stack=NULL, flags={}SIGCHLD",
                if *shares_files {
                    "CLONE_VM|CLONE_FILES|"
                } else {
                    ""
                }
            ),
            CallClass::Exec { program, argv } => {
                let argv: Vec<String> = argv
                    .iter()
                    .map(|a| format!("\"{}\"", escape_c(a.as_bytes())))
                    .collect();
                format!(
                    "\"{}\", [{}], 0x7ffc00000000 /* 0 vars */",
                    escape_c(program.as_bytes()),
                    argv.join(", ")
                )
            }
            CallClass::Chdir { path } => format!("\"{}\"", escape_c(path.as_bytes())),
            CallClass::Stat { path, dir_fd } => match dir_fd {
                Some(d) => format!(
                    "{d}, \"{}\", {{st_mode=S_IFREG|0644}}, 0",
                    escape_c(path.as_bytes())
                ),
                None => format!(
                    "\"{}\", {{st_mode=S_IFREG|0644}}",
                    escape_c(path.as_bytes())
                ),
            },
            CallClass::Mmap { fd } => format!("NULL, 4096, PROT_READ, MAP_PRIVATE, {fd}, 0"),
            CallClass::Other { .. } => String::new(),
        };
        let result = match &self.result {
            CallResult::Ok(v) => v.to_string(),
            CallResult::Err { errno, message } => format!("-1 {errno} ({message})"),
            CallResult::Unknown => "?".to_string(),
        };
        format!("{} {}({}) = {}", self.pid, self.call.name(), args, result)
    }
}

fn render_dir_fd(dir_fd: Option<Fd>) -> String {
    match dir_fd {
        Some(fd) => fd.to_string(),
        None => "AT_FDCWD".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pid_zero_is_rejected() {
        assert!(ProcessId::new(0).is_none());
        assert_eq!(ProcessId::new(5336).unwrap().get(), 5336);
    }

    #[test]
    fn symbolic_flags() {
        let f = OpenFlags::from_symbolic("O_RDONLY");
        assert!(f.read && !f.write && !f.create);
        let f = OpenFlags::from_symbolic("O_WRONLY|O_CREAT|O_TRUNC");
        assert!(!f.read && f.write && f.create);
        assert_eq!(f.raw, "O_WRONLY|O_CREAT|O_TRUNC");
        let f = OpenFlags::from_symbolic("O_RDONLY|O_NONBLOCK|O_CLOEXEC|O_DIRECTORY");
        assert!(f.read && f.directory && f.cloexec);
        let f = OpenFlags::from_symbolic("O_RDWR");
        assert!(f.read && f.write);
    }

    #[test]
    fn darwin_flags() {
        let f = OpenFlags::from_darwin_bits("0x0", 0);
        assert!(f.read && !f.write);
        let f = OpenFlags::from_darwin_bits("0x601", 0x601);
        assert!(!f.read && f.write && f.create);
        let f = OpenFlags::from_darwin_bits("0x100000", 0x10_0000);
        assert!(f.directory);
    }

    #[test]
    fn render_open() {
        let ev = TraceEvent {
            pid: ProcessId::new(5336).unwrap(),
            call: CallClass::Open {
                path: "/usr/share/fonts/type1/gsfonts/n019004l.pfb".into(),
                flags: OpenFlags::from_symbolic("O_RDONLY"),
                dir_fd: None,
            },
            result: CallResult::Ok(4),
            line: 1,
            read_prefix: None,
        };
        assert_eq!(
            ev.render(),
            "5336 openat(AT_FDCWD, \"/usr/share/fonts/type1/gsfonts/n019004l.pfb\", O_RDONLY) = 4"
        );
    }
}
