//! Linux strace dialect.
//!
//! Accepted line shape (as written by `strace -f -o FILE`):
//!
//! ```text
//! [PID|[pid PID]] [TIMESTAMP] name(args) = RESULT [ERRNO (message)] [<duration>]
//! ```

use crate::model::{CallClass, CallResult, Fd, OpenFlags, ProcessId, TraceEvent};

use super::escape::parse_quoted;
use super::syntax::{
    parse_int, quoted_string, split_args, split_call, string_array, strip_decoration,
};
use super::{issue, pid_or_implicit, LineOutcome};

pub(crate) enum Fragment {
    Unfinished {
        pid: Option<u32>,
        name: String,
        head: String,
    },
    Resumed {
        pid: Option<u32>,
        name: String,
        tail: String,
    },
}

/// Splits off the optional pid prefix and timestamp column.
fn split_prefix(line: &str) -> (Option<u32>, &str) {
    let mut rest = line.trim_start();
    let mut pid = None;
    if let Some(r) = rest.strip_prefix("[pid") {
        if let Some(end) = r.find(']') {
            if let Ok(p) = r[..end].trim().parse() {
                pid = Some(p);
                rest = r[end + 1..].trim_start();
            }
        }
    } else {
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let tok = &rest[..end];
        if !tok.is_empty() && tok.bytes().all(|b| b.is_ascii_digit()) && end < rest.len() {
            pid = tok.parse().ok();
            rest = rest[end..].trim_start();
        }
    }
    // -t / -tt / -ttt / -r timestamps
    let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
    let tok = &rest[..end];
    if end < rest.len()
        && tok.bytes().any(|b| b == b':' || b == b'.')
        && tok
            .bytes()
            .all(|b| b.is_ascii_digit() || b == b':' || b == b'.')
    {
        rest = rest[end..].trim_start();
    }
    (pid, rest)
}

pub(crate) fn split_fragment(line: &str) -> Option<Fragment> {
    let (pid, rest) = split_prefix(line);
    if let Some(r) = rest.strip_prefix("<... ") {
        let end = r.find(" resumed>")?;
        return Some(Fragment::Resumed {
            pid,
            name: r[..end].trim().to_string(),
            tail: r[end + " resumed>".len()..].to_string(),
        });
    }
    let trimmed = line.trim_end();
    let head = trimmed.strip_suffix("<unfinished ...>")?;
    let name = rest.split('(').next()?.trim();
    if !super::syntax::is_call_name(name) {
        return None;
    }
    Some(Fragment::Unfinished {
        pid,
        name: name.to_string(),
        head: head.to_string(),
    })
}

fn is_summary_row(line: &str) -> bool {
    let t = line.trim();
    if t.starts_with("% time") || t.starts_with("------") {
        return true;
    }
    let tokens: Vec<&str> = t.split_whitespace().collect();
    if !(3..=7).contains(&tokens.len()) {
        return false;
    }
    let (last, nums) = tokens.split_last().expect("non-empty");
    super::syntax::is_call_name(last)
        && nums
            .iter()
            .all(|n| n.bytes().all(|b| b.is_ascii_digit() || b == b'.'))
}

pub(crate) fn parse_line(line: &str, number: usize) -> LineOutcome {
    if line.trim_start().starts_with("strace:") || is_summary_row(line) {
        return LineOutcome::Skip;
    }
    let (pid, rest) = split_prefix(line);
    if rest.starts_with("+++") || rest.starts_with("---") {
        return LineOutcome::Skip;
    }
    if rest.starts_with("<... ") || rest.trim_end().ends_with("<unfinished ...>") {
        return issue(number, line, "unmerged unfinished/resumed fragment");
    }
    let Some(pid) = pid_or_implicit(pid) else {
        return issue(number, line, "pid must be positive");
    };
    match parse_call(rest, pid, number) {
        Ok(ev) => LineOutcome::Event(ev),
        Err(reason) => issue(number, line, reason),
    }
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
    let fd = |i: usize| -> Result<Fd, String> {
        let a = arg(i)?;
        strip_decoration(a)
            .parse::<u32>()
            .map(Fd)
            .map_err(|_| format!("{}: bad fd `{a}`", syntax.name))
    };
    let dir_fd = |i: usize| -> Result<Option<Fd>, String> {
        match arg(i)? {
            "AT_FDCWD" => Ok(None),
            _ => fd(i).map(Some),
        }
    };
    let count = |i: usize| -> Result<u64, String> {
        let a = arg(i)?;
        a.parse::<u64>()
            .map_err(|_| format!("{}: bad count `{a}`", syntax.name))
    };
    let ok_count = || result.ok().and_then(|v| u64::try_from(v).ok()).unwrap_or(0);

    let mut read_prefix = None;
    let call = match syntax.name {
        "open" => CallClass::Open {
            path: quoted_string(arg(0)?)?,
            flags: OpenFlags::from_symbolic(arg(1)?),
            dir_fd: None,
        },
        "openat" => CallClass::Open {
            dir_fd: dir_fd(0)?,
            path: quoted_string(arg(1)?)?,
            flags: OpenFlags::from_symbolic(arg(2)?),
        },
        "openat2" => {
            let how = arg(2)?;
            let flags = how
                .trim_matches(|c| c == '{' || c == '}')
                .split(", ")
                .find_map(|f| f.strip_prefix("flags="))
                .unwrap_or("O_RDONLY");
            CallClass::Open {
                dir_fd: dir_fd(0)?,
                path: quoted_string(arg(1)?)?,
                flags: OpenFlags::from_symbolic(flags),
            }
        }
        "creat" => CallClass::Open {
            path: quoted_string(arg(0)?)?,
            flags: OpenFlags::from_symbolic("O_WRONLY|O_CREAT|O_TRUNC"),
            dir_fd: None,
        },
        "read" | "pread64" => {
            let buf = arg(1)?;
            if buf.starts_with('"') {
                read_prefix = Some(parse_quoted(buf).map_err(|e| format!("read buffer: {e}"))?);
            }
            CallClass::Read {
                fd: fd(0)?,
                requested: count(2)?,
            }
        }
        "readv" | "preadv" | "preadv2" => CallClass::Read {
            fd: fd(0)?,
            requested: ok_count(),
        },
        "write" | "pwrite64" => CallClass::Write {
            fd: fd(0)?,
            requested: count(2)?,
        },
        "writev" | "pwritev" | "pwritev2" => CallClass::Write {
            fd: fd(0)?,
            requested: ok_count(),
        },
        "close" => CallClass::Close { fd: fd(0)? },
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
        "dup3" => CallClass::Dup {
            old_fd: fd(0)?,
            new_fd: Some(fd(1)?),
            cloexec: arg(2)?.contains("O_CLOEXEC"),
        },
        "fcntl" | "fcntl64" if arg(1)?.starts_with("F_DUPFD") => CallClass::Dup {
            old_fd: fd(0)?,
            new_fd: None,
            cloexec: arg(1)? == "F_DUPFD_CLOEXEC",
        },
        "fork" | "vfork" | "clone" | "clone3" => CallClass::Fork {
            child: result
                .ok()
                .and_then(|v| u32::try_from(v).ok())
                .and_then(ProcessId::new),
            shares_files: syntax.args.contains("CLONE_FILES"),
        },
        "execve" => CallClass::Exec {
            program: quoted_string(arg(0)?)?,
            argv: string_array(arg(1)?)?,
        },
        "execveat" => CallClass::Exec {
            program: quoted_string(arg(1)?)?,
            argv: string_array(arg(2)?)?,
        },
        "chdir" => CallClass::Chdir {
            path: quoted_string(arg(0)?)?,
        },
        "stat" | "lstat" | "stat64" | "lstat64" | "access" | "readlink" => CallClass::Stat {
            path: quoted_string(arg(0)?)?,
            dir_fd: None,
        },
        "newfstatat" | "fstatat64" | "statx" | "faccessat" | "faccessat2" | "readlinkat" => {
            let path = quoted_string(arg(1)?)?;
            if path.is_empty() {
                CallClass::Other {
                    name: syntax.name.to_string(),
                }
            } else {
                CallClass::Stat {
                    path,
                    dir_fd: dir_fd(0)?,
                }
            }
        }
        "mmap" | "mmap2" => match strip_decoration(arg(4)?).parse::<u32>() {
            Ok(n) => CallClass::Mmap { fd: Fd(n) },
            Err(_) => CallClass::Other {
                name: syntax.name.to_string(),
            },
        },
        other => CallClass::Other {
            name: other.to_string(),
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

/// Splits the first whitespace-separated token, keeping a `-y` style
/// `<path with spaces>` decoration attached.
fn first_token(s: &str) -> (&str, &str) {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'<' if i > 0 => {
                // decoration ends at a `>` followed by end or whitespace
                let mut j = i + 1;
                while j < bytes.len() {
                    if bytes[j] == b'>' && bytes.get(j + 1).is_none_or(|b| b.is_ascii_whitespace())
                    {
                        break;
                    }
                    j += 1;
                }
                i = (j + 1).min(bytes.len());
                break;
            }
            b if b.is_ascii_whitespace() => break,
            _ => i += 1,
        }
    }
    (&s[..i], &s[i..])
}

pub(crate) fn parse_result(rest: &str) -> Result<CallResult, String> {
    let r = rest
        .trim_start()
        .strip_prefix('=')
        .ok_or("missing `= result`")?
        .trim_start();
    let (tok, mut tail) = first_token(r);
    tail = tail.trim();
    // -T duration
    if tail.ends_with('>') {
        if let Some(start) = tail.rfind('<') {
            let inner = &tail[start + 1..tail.len() - 1];
            if inner.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
                tail = tail[..start].trim_end();
            }
        }
    }
    let value = match tok {
        "?" => None,
        _ => Some(parse_int(strip_decoration(tok)).ok_or_else(|| format!("bad result `{tok}`"))?),
    };
    let mut errno = None;
    if tail.starts_with('E') {
        let (name, msg) = tail.split_once(' ').unwrap_or((tail, ""));
        if !name
            .bytes()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_')
        {
            return Err(format!("bad errno `{name}`"));
        }
        let msg = msg.trim();
        let message = msg
            .strip_prefix('(')
            .and_then(|m| m.strip_suffix(')'))
            .ok_or_else(|| format!("bad errno message `{msg}`"))?;
        errno = Some((name.to_string(), message.to_string()));
    } else if !tail.is_empty() && !(tail.starts_with('(') && tail.ends_with(')')) {
        return Err(format!("unexpected text after result: `{tail}`"));
    }
    Ok(match (errno, value) {
        (Some((errno, message)), _) => CallResult::Err { errno, message },
        (None, Some(v)) => CallResult::Ok(v),
        (None, None) => CallResult::Unknown,
    })
}
