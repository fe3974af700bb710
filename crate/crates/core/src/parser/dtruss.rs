//! macOS dtruss dialect.
//!
//! ```text
//!   PID/THRD  SYSCALL(args)            = return
//!  5336/0x1a2b:  open("/etc/hosts\0", 0x0, 0x0)        = 3 0
//!  5336/0x1a2b:  open_nocancel("/nope\0", 0x0, 0x1B6)  = -1 Err#2
//! ```
//!
//! Numbers are printed in hex, strings carry a trailing `\0`, and the return
//! column is `value errno`. Exec events never carry argv.

use crate::model::{CallClass, CallResult, Fd, OpenFlags, ProcessId, TraceEvent};

use super::escape::parse_quoted;
use super::syntax::{parse_int, split_args, split_call};
use super::{issue, pid_or_implicit, LineOutcome};

/// Darwin AT_FDCWD.
const AT_FDCWD: i64 = -2;

fn split_prefix(line: &str) -> Result<(Option<u32>, &str), String> {
    let rest = line.trim_start();
    let first = rest.split_whitespace().next().unwrap_or("");
    let Some(tag) = first.strip_suffix(':') else {
        return Ok((None, rest));
    };
    let (pid, _thread) = tag.split_once('/').ok_or("malformed PID/THRD column")?;
    let pid = pid.parse().map_err(|_| format!("bad pid `{pid}`"))?;
    let mut rest = rest[first.len()..].trim_start();
    // -e / -o / -d add numeric columns before the call
    while let Some(tok) = rest.split_whitespace().next() {
        if tok.bytes().all(|b| b.is_ascii_digit()) {
            rest = rest[tok.len()..].trim_start();
        } else {
            break;
        }
    }
    Ok((Some(pid), rest))
}

fn is_chatter(line: &str) -> bool {
    let t = line.trim();
    t.starts_with("dtrace:")
        || t.starts_with("PID/THRD")
        || t.starts_with("SYSCALL(args)")
        || t.starts_with("CALL ")
        || {
            // -c summary rows: `open_nocancel   12`
            let mut it = t.split_whitespace();
            matches!(
                (it.next(), it.next(), it.next()),
                (Some(name), Some(n), None)
                    if super::syntax::is_call_name(name) && n.bytes().all(|b| b.is_ascii_digit())
            )
        }
}

pub(crate) fn parse_line(line: &str, number: usize) -> LineOutcome {
    if is_chatter(line) {
        return LineOutcome::Skip;
    }
    let (pid, rest) = match split_prefix(line) {
        Ok(p) => p,
        Err(reason) => return issue(number, line, reason),
    };
    let Some(pid) = pid_or_implicit(pid) else {
        return issue(number, line, "pid must be positive");
    };
    match parse_call(rest, pid, number) {
        Ok(ev) => LineOutcome::Event(ev),
        Err(reason) => issue(number, line, reason),
    }
}

fn errno_name(code: i64) -> String {
    let name = match code {
        1 => "EPERM",
        2 => "ENOENT",
        3 => "ESRCH",
        4 => "EINTR",
        5 => "EIO",
        9 => "EBADF",
        12 => "ENOMEM",
        13 => "EACCES",
        17 => "EEXIST",
        20 => "ENOTDIR",
        21 => "EISDIR",
        22 => "EINVAL",
        24 => "EMFILE",
        28 => "ENOSPC",
        35 => "EAGAIN",
        62 => "ELOOP",
        63 => "ENAMETOOLONG",
        93 => "ENOATTR",
        _ => return format!("ERRNO{code}"),
    };
    name.to_string()
}

fn parse_result(rest: &str) -> Result<CallResult, String> {
    let r = rest
        .trim_start()
        .strip_prefix('=')
        .ok_or("missing `= result`")?;
    let mut it = r.split_whitespace();
    let (Some(value), Some(err), None) = (it.next(), it.next(), it.next()) else {
        return Err(format!("expected `= value errno`, got `{}`", r.trim()));
    };
    let value = parse_int(value).ok_or_else(|| format!("bad return value `{value}`"))?;
    if let Some(code) = err.strip_prefix("Err#") {
        let code: i64 = code.parse().map_err(|_| format!("bad errno `{err}`"))?;
        return Ok(CallResult::Err {
            errno: errno_name(code),
            message: String::new(),
        });
    }
    parse_int(err).ok_or_else(|| format!("bad errno column `{err}`"))?;
    Ok(CallResult::Ok(value))
}

/// dtruss strings are NUL-terminated C strings.
fn path_arg(arg: &str) -> Result<String, String> {
    let mut buf = parse_quoted(arg).map_err(|e| e.to_string())?;
    while buf.bytes.last() == Some(&0) {
        buf.bytes.pop();
    }
    Ok(String::from_utf8_lossy(&buf.bytes).into_owned())
}

fn parse_call(text: &str, pid: ProcessId, number: usize) -> Result<TraceEvent, String> {
    let syntax = split_call(text)?;
    let result = parse_result(syntax.rest)?;
    let args = split_args(syntax.args).map_err(|e| e.to_string())?;
    let arg = |i: usize| {
        args.get(i)
            .copied()
            .ok_or_else(|| format!("{}: missing argument {}", syntax.name, i + 1))
    };
    let int = |i: usize| -> Result<i64, String> {
        let a = arg(i)?;
        parse_int(a).ok_or_else(|| format!("{}: bad integer `{a}`", syntax.name))
    };
    let fd = |i: usize| -> Result<Fd, String> {
        let v = int(i)?;
        u32::try_from(v)
            .map(Fd)
            .map_err(|_| format!("{}: bad fd {v}", syntax.name))
    };
    let dir_fd = |i: usize| -> Result<Option<Fd>, String> {
        let v = int(i)?;
        // AT_FDCWD may be printed as a 32- or 64-bit unsigned word
        if v == AT_FDCWD || v == 0xFFFF_FFFE {
            Ok(None)
        } else {
            fd(i).map(Some)
        }
    };
    let open = |path_idx: usize, dir: Option<Fd>| -> Result<CallClass, String> {
        let raw = arg(path_idx + 1)?;
        let bits = parse_int(raw).ok_or_else(|| format!("bad open flags `{raw}`"))?;
        Ok(CallClass::Open {
            path: path_arg(arg(path_idx)?)?,
            flags: OpenFlags::from_darwin_bits(raw, bits as u64),
            dir_fd: dir,
        })
    };
    let name = syntax.name.strip_suffix("_nocancel").unwrap_or(syntax.name);

    let mut read_prefix = None;
    let call = match name {
        "open" | "open_extended" => open(0, None)?,
        "openat" => open(1, dir_fd(0)?)?,
        "read" | "pread" => {
            let buf = arg(1)?;
            if buf.starts_with('"') {
                let mut b = parse_quoted(buf).map_err(|e| format!("read buffer: {e}"))?;
                while b.bytes.last() == Some(&0) {
                    b.bytes.pop();
                }
                read_prefix = Some(b);
            }
            CallClass::Read {
                fd: fd(0)?,
                requested: int(2)?.max(0) as u64,
            }
        }
        "readv" | "preadv" => CallClass::Read {
            fd: fd(0)?,
            requested: result.ok().unwrap_or(0).max(0) as u64,
        },
        "write" | "pwrite" => CallClass::Write {
            fd: fd(0)?,
            requested: int(2)?.max(0) as u64,
        },
        "writev" | "pwritev" => CallClass::Write {
            fd: fd(0)?,
            requested: result.ok().unwrap_or(0).max(0) as u64,
        },
        "close" | "guarded_close_np" => CallClass::Close { fd: fd(0)? },
        "dup" => CallClass::Dup {
            old_fd: fd(0)?,
            new_fd: None,
            cloexec: false,
        },
        "dup2" => CallClass::Dup {
            old_fd: fd(0)?,
            new_fd: Some(fd(1)?),
            cloexec: false,
        },
        // F_DUPFD = 0, F_DUPFD_CLOEXEC = 67
        "fcntl" if matches!(int(1)?, 0 | 67) => CallClass::Dup {
            old_fd: fd(0)?,
            new_fd: None,
            cloexec: int(1)? == 67,
        },
        "fork" | "vfork" => CallClass::Fork {
            child: result
                .ok()
                .and_then(|v| u32::try_from(v).ok())
                .and_then(ProcessId::new),
            shares_files: false,
        },
        "execve" | "__mac_execve" => CallClass::Exec {
            program: path_arg(arg(0)?)?,
            argv: Vec::new(),
        },
        "chdir" => CallClass::Chdir {
            path: path_arg(arg(0)?)?,
        },
        "stat" | "stat64" | "lstat" | "lstat64" | "access" | "readlink" | "getattrlist"
        | "stat_extended" | "lstat_extended" | "stat64_extended" | "lstat64_extended" => {
            CallClass::Stat {
                path: path_arg(arg(0)?)?,
                dir_fd: None,
            }
        }
        "faccessat" | "fstatat" | "fstatat64" | "readlinkat" => CallClass::Stat {
            dir_fd: dir_fd(0)?,
            path: path_arg(arg(1)?)?,
        },
        "mmap" => match u32::try_from(int(4)?) {
            Ok(n) => CallClass::Mmap { fd: Fd(n) },
            Err(_) => CallClass::Other {
                name: syntax.name.to_string(),
            },
        },
        _ => CallClass::Other {
            name: syntax.name.to_string(),
        },
    };
    Ok(TraceEvent {
        pid,
        call,
        result,
        line: number,
        read_prefix,
    })
}
