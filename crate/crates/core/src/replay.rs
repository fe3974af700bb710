//! Replays a parsed trace through per-process descriptor tables to find
//! which files were touched, how, and by which processes.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CallClass, CallResult, Fd, ProcessId, TraceEvent};
use crate::parser::ParsedTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AccessMode {
    #[serde(rename = "readData")]
    pub read: bool,
    #[serde(rename = "wroteData")]
    pub write: bool,
    pub executed: bool,
    /// Only ever probed with stat/access; never opened or executed.
    pub statted_only: bool,
}

impl AccessMode {
    pub const READ: AccessMode = AccessMode {
        read: true,
        write: false,
        executed: false,
        statted_only: false,
    };
    pub const WRITE: AccessMode = AccessMode {
        read: false,
        write: true,
        executed: false,
        statted_only: false,
    };
    pub const EXECUTED: AccessMode = AccessMode {
        read: false,
        write: false,
        executed: true,
        statted_only: false,
    };
    pub const STATTED: AccessMode = AccessMode {
        read: false,
        write: false,
        executed: false,
        statted_only: true,
    };
    pub const ANY: AccessMode = AccessMode {
        read: true,
        write: true,
        executed: true,
        statted_only: true,
    };
    /// Everything except bare stat probes.
    pub const TOUCHED: AccessMode = AccessMode {
        read: true,
        write: true,
        executed: true,
        statted_only: false,
    };

    pub fn intersects(&self, mask: AccessMode) -> bool {
        (self.read && mask.read)
            || (self.write && mask.write)
            || (self.executed && mask.executed)
            || (self.statted_only && mask.statted_only)
    }

    pub fn union(self, other: AccessMode) -> AccessMode {
        AccessMode {
            read: self.read || other.read,
            write: self.write || other.write,
            executed: self.executed || other.executed,
            statted_only: false,
        }
        .normalized(self.statted_only || other.statted_only)
    }

    fn normalized(mut self, statted: bool) -> AccessMode {
        self.statted_only = statted && !(self.read || self.write || self.executed);
        self
    }

    /// Parses a comma-separated mask such as `read,exec`.
    pub fn parse_mask(s: &str) -> Result<AccessMode, String> {
        let mut mask = AccessMode::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "read" => mask.read = true,
                "write" => mask.write = true,
                "exec" | "executed" => mask.executed = true,
                "stat" => mask.statted_only = true,
                "any" | "all" => mask = AccessMode::ANY,
                other => return Err(format!("unknown access mode `{other}`")),
            }
        }
        Ok(mask)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceAccess {
    pub path: String,
    pub mode: AccessMode,
    pub pids: BTreeSet<ProcessId>,
    pub first_line: usize,
    pub bytes_read: u64,
    pub bytes_written: u64,
    /// First non-empty read buffer prefix seen for this path.
    pub sniffed_prefix: Option<Vec<u8>>,
    /// Opened with `O_DIRECTORY`.
    pub directory: bool,
    /// `<fd:N of pid P>` placeholder for descriptors opened before tracing.
    pub synthetic: bool,
}

impl ResourceAccess {
    fn new(path: String, line: usize, synthetic: bool) -> Self {
        ResourceAccess {
            path,
            mode: AccessMode::default(),
            pids: BTreeSet::new(),
            first_line: line,
            bytes_read: 0,
            bytes_written: 0,
            sniffed_prefix: None,
            directory: false,
            synthetic,
        }
    }

    fn mark(&mut self, mode: AccessMode, pid: ProcessId) {
        self.mode = self.mode.union(mode);
        self.pids.insert(pid);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailedOpen {
    pub path: String,
    pub errno: String,
    pub pid: ProcessId,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessNode {
    pub pid: ProcessId,
    pub parent: Option<ProcessId>,
    pub program: Option<String>,
    pub argv: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AccessLog {
    pub resources: BTreeMap<String, ResourceAccess>,
    pub failed_opens: Vec<FailedOpen>,
    /// In order of first appearance.
    pub processes: Vec<ProcessNode>,
    pub warnings: Vec<String>,
}

impl AccessLog {
    pub fn process(&self, pid: ProcessId) -> Option<&ProcessNode> {
        self.processes.iter().find(|p| p.pid == pid)
    }

    pub fn is_empty(&self) -> bool {
        self.resources.is_empty() && self.failed_opens.is_empty() && self.processes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonicalizeError {
    #[error("empty path")]
    Empty,
    #[error("working directory `{0}` is not absolute")]
    RelativeCwd(String),
}

/// Lexically resolves `raw` against `cwd`. Symlinks are not followed and
/// the filesystem is never consulted.
pub fn canonicalize(cwd: &str, raw: &str) -> Result<String, CanonicalizeError> {
    if raw.is_empty() {
        return Err(CanonicalizeError::Empty);
    }
    if !cwd.starts_with('/') {
        return Err(CanonicalizeError::RelativeCwd(cwd.to_string()));
    }
    let base = if raw.starts_with('/') { "" } else { cwd };
    let mut parts: Vec<&str> = Vec::new();
    for seg in base.split('/').chain(raw.split('/')) {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            s => parts.push(s),
        }
    }
    Ok(format!("/{}", parts.join("/")))
}

/// Paths whose access mode intersects `mask`. Synthetic descriptor
/// placeholders are never included.
pub fn resource_set(log: &AccessLog, mask: AccessMode) -> BTreeSet<String> {
    log.resources
        .values()
        .filter(|r| !r.synthetic && r.mode.intersects(mask))
        .map(|r| r.path.clone())
        .collect()
}

#[derive(Debug, Clone)]
struct Binding {
    path: String,
    cloexec: bool,
}

type FdTable = HashMap<u32, Binding>;

#[derive(Debug)]
struct ProcState {
    table: usize,
    cwd: String,
    node: usize,
}

struct Replayer<'a> {
    initial_cwd: &'a str,
    origins: HashMap<ProcessId, (ProcessId, bool)>,
    tables: Vec<FdTable>,
    procs: HashMap<ProcessId, ProcState>,
    log: AccessLog,
}

/// Replays `trace` starting every root process in `initial_cwd`.
pub fn replay(trace: &ParsedTrace, initial_cwd: &str) -> AccessLog {
    replay_events(&trace.events, initial_cwd)
}

pub fn replay_events(events: &[TraceEvent], initial_cwd: &str) -> AccessLog {
    // strace prints a fork's result when the parent resumes, often after the
    // child has already run; remember every child's origin up front.
    let mut origins = HashMap::new();
    for ev in events {
        if let (
            CallClass::Fork {
                child: Some(child),
                shares_files,
            },
            CallResult::Ok(_),
        ) = (&ev.call, &ev.result)
        {
            origins.entry(*child).or_insert((ev.pid, *shares_files));
        }
    }
    let mut r = Replayer {
        initial_cwd,
        origins,
        tables: Vec::new(),
        procs: HashMap::new(),
        log: AccessLog::default(),
    };
    if !initial_cwd.starts_with('/') {
        r.log.warnings.push(format!(
            "initial cwd `{initial_cwd}` is not absolute; using /"
        ));
        r.initial_cwd = "/";
    }
    for ev in events {
        r.step(ev);
    }
    r.log
}

impl Replayer<'_> {
    fn ensure_process(&mut self, pid: ProcessId) {
        self.ensure_process_within(pid, self.origins.len());
    }

    /// A child can run before its parent's first completed call; the parent
    /// is materialized first so the child inherits from it. `budget` bounds
    /// the walk on malformed, cyclic fork records.
    fn ensure_process_within(&mut self, pid: ProcessId, budget: usize) {
        if self.procs.contains_key(&pid) {
            return;
        }
        if let Some(&(parent, _)) = self.origins.get(&pid) {
            if parent != pid && budget > 0 {
                self.ensure_process_within(parent, budget - 1);
            }
        }
        if self.procs.contains_key(&pid) {
            return;
        }
        let origin = self
            .origins
            .get(&pid)
            .copied()
            .filter(|(parent, _)| *parent != pid && self.procs.contains_key(parent));
        let (table, cwd, parent) = match origin {
            Some((parent, shares)) => {
                let p = &self.procs[&parent];
                let cwd = p.cwd.clone();
                let table = if shares {
                    p.table
                } else {
                    let copy = self.tables[p.table].clone();
                    self.tables.push(copy);
                    self.tables.len() - 1
                };
                (table, cwd, Some(parent))
            }
            None => {
                self.tables.push(FdTable::new());
                (self.tables.len() - 1, self.initial_cwd.to_string(), None)
            }
        };
        self.log.processes.push(ProcessNode {
            pid,
            parent,
            program: None,
            argv: Vec::new(),
        });
        self.procs.insert(
            pid,
            ProcState {
                table,
                cwd,
                node: self.log.processes.len() - 1,
            },
        );
    }

    fn warn(&mut self, ev: &TraceEvent, msg: impl std::fmt::Display) {
        self.log
            .warnings
            .push(format!("line {}: pid {}: {msg}", ev.line, ev.pid));
    }

    fn resource(&mut self, path: &str, line: usize, synthetic: bool) -> &mut ResourceAccess {
        self.log
            .resources
            .entry(path.to_string())
            .or_insert_with(|| ResourceAccess::new(path.to_string(), line, synthetic))
    }

    fn binding(&self, pid: ProcessId, fd: Fd) -> Option<&Binding> {
        self.tables[self.procs[&pid].table].get(&fd.0)
    }

    fn table_mut(&mut self, pid: ProcessId) -> &mut FdTable {
        let idx = self.procs[&pid].table;
        &mut self.tables[idx]
    }

    fn resolve(&mut self, ev: &TraceEvent, path: &str, dir_fd: Option<Fd>) -> Option<String> {
        let base = match dir_fd {
            Some(fd) if !path.starts_with('/') => match self.binding(ev.pid, fd) {
                Some(b) => b.path.clone(),
                None => {
                    self.warn(
                        ev,
                        format!("directory fd {fd} is not bound; resolving against cwd"),
                    );
                    self.procs[&ev.pid].cwd.clone()
                }
            },
            _ => self.procs[&ev.pid].cwd.clone(),
        };
        match canonicalize(&base, path) {
            Ok(p) => Some(p),
            Err(e) => {
                self.warn(ev, format!("{}: {e}", ev.call.name()));
                None
            }
        }
    }

    /// Path behind `fd`, or a synthetic placeholder if it was never bound.
    fn attributed_path(&mut self, ev: &TraceEvent, fd: Fd) -> String {
        if let Some(b) = self.binding(ev.pid, fd) {
            return b.path.clone();
        }
        let key = format!("<fd:{fd} of pid {}>", ev.pid);
        if !self.log.resources.contains_key(&key) {
            self.warn(
                ev,
                format!(
                    "{} on fd {fd} opened before tracing started",
                    ev.call.name()
                ),
            );
        }
        key
    }

    fn step(&mut self, ev: &TraceEvent) {
        self.ensure_process(ev.pid);
        let pid = ev.pid;
        match (&ev.call, &ev.result) {
            (
                CallClass::Open {
                    path,
                    flags,
                    dir_fd,
                },
                CallResult::Ok(fd),
            ) => {
                let Some(canon) = self.resolve(ev, path, *dir_fd) else {
                    return;
                };
                let Ok(fd) = u32::try_from(*fd) else {
                    self.warn(ev, format!("open returned invalid fd {fd}"));
                    return;
                };
                let res = self.resource(&canon, ev.line, false);
                res.mark(
                    AccessMode {
                        read: flags.read,
                        write: flags.write,
                        ..Default::default()
                    },
                    pid,
                );
                res.directory |= flags.directory;
                self.table_mut(pid).insert(
                    fd,
                    Binding {
                        path: canon,
                        cloexec: flags.cloexec,
                    },
                );
            }
            (CallClass::Open { path, dir_fd, .. }, CallResult::Err { errno, .. }) => {
                if let Some(canon) = self.resolve(ev, path, *dir_fd) {
                    self.log.failed_opens.push(FailedOpen {
                        path: canon,
                        errno: errno.clone(),
                        pid,
                        line: ev.line,
                    });
                }
            }
            (CallClass::Read { fd, .. }, CallResult::Ok(n)) => {
                let key = self.attributed_path(ev, *fd);
                let synthetic = key.starts_with('<');
                let res = self.resource(&key, ev.line, synthetic);
                res.mark(AccessMode::READ, pid);
                res.bytes_read += u64::try_from(*n).unwrap_or(0);
                if res.sniffed_prefix.is_none() {
                    if let Some(p) = ev.read_prefix.as_ref().filter(|p| !p.bytes.is_empty()) {
                        res.sniffed_prefix = Some(p.bytes.clone());
                    }
                }
            }
            (CallClass::Write { fd, .. }, CallResult::Ok(n)) => {
                let key = self.attributed_path(ev, *fd);
                let synthetic = key.starts_with('<');
                let res = self.resource(&key, ev.line, synthetic);
                res.mark(AccessMode::WRITE, pid);
                res.bytes_written += u64::try_from(*n).unwrap_or(0);
            }
            (CallClass::Close { fd }, _) => {
                if self.table_mut(pid).remove(&fd.0).is_none() {
                    self.warn(ev, format!("close of unbound fd {fd}"));
                }
            }
            (
                CallClass::Dup {
                    old_fd,
                    new_fd,
                    cloexec,
                },
                CallResult::Ok(ret),
            ) => {
                let target = match new_fd {
                    Some(n) => Some(n.0),
                    None => u32::try_from(*ret).ok(),
                };
                let Some(target) = target else {
                    self.warn(ev, format!("dup returned invalid fd {ret}"));
                    return;
                };
                match self.binding(pid, *old_fd).cloned() {
                    Some(b) => {
                        self.table_mut(pid).insert(
                            target,
                            Binding {
                                path: b.path,
                                cloexec: *cloexec,
                            },
                        );
                    }
                    None => {
                        self.table_mut(pid).remove(&target);
                        self.warn(ev, format!("dup of unbound fd {old_fd}"));
                    }
                }
            }
            (
                CallClass::Fork {
                    child: Some(child), ..
                },
                CallResult::Ok(_),
            ) => {
                if *child == pid {
                    return;
                }
                self.ensure_process(*child);
                let node = self.procs[child].node;
                if self.log.processes[node].parent.is_none() && !self.is_ancestor(*child, pid) {
                    self.log.processes[node].parent = Some(pid);
                }
            }
            (CallClass::Exec { program, argv }, CallResult::Ok(_)) => {
                let Some(canon) = self.resolve(ev, program, None) else {
                    return;
                };
                self.resource(&canon, ev.line, false)
                    .mark(AccessMode::EXECUTED, pid);
                let node = self.procs[&pid].node;
                self.log.processes[node].program = Some(canon);
                self.log.processes[node].argv = argv.clone();
                self.table_mut(pid).retain(|_, b| !b.cloexec);
            }
            (CallClass::Chdir { path }, CallResult::Ok(_)) => {
                if let Some(canon) = self.resolve(ev, path, None) {
                    self.procs.get_mut(&pid).expect("ensured").cwd = canon;
                }
            }
            (CallClass::Stat { path, dir_fd }, CallResult::Ok(_)) => {
                if let Some(canon) = self.resolve(ev, path, *dir_fd) {
                    self.resource(&canon, ev.line, false)
                        .mark(AccessMode::STATTED, pid);
                }
            }
            (CallClass::Mmap { fd }, CallResult::Ok(_)) => {
                if let Some(b) = self.binding(pid, *fd) {
                    let msg = format!("mmap of {} not counted as a read", b.path);
                    self.warn(ev, msg);
                }
            }
            _ => {}
        }
    }

    fn is_ancestor(&self, candidate: ProcessId, of: ProcessId) -> bool {
        let mut cur = Some(of);
        while let Some(p) = cur {
            if p == candidate {
                return true;
            }
            cur = self
                .procs
                .get(&p)
                .and_then(|s| self.log.processes[s.node].parent);
        }
        false
    }
}
