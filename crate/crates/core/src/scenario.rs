//! Seeded synthetic traces with a ground-truth manifest.
//!
//! The generator simulates a small process tree against its own model of
//! descriptor tables and working directories, writes what strace `-f`
//! would print, and records the expected outcome independently of the
//! parser and replay code.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{DependencyDelta, FontSubtype, MissingResource, ResourceClass};
use crate::model::{ProcessId, TraceDialect};
use crate::parser::escape_c;
use crate::replay::AccessMode;
use crate::report::{
    PackageRef, ProcessEntry, Provenance, RIReport, ResourceEntry, RunMode, RunProvenance,
};

const FILES: &[&str] = &[
    "/usr/lib/libMagickCore.so.3",
    "/usr/lib/libgs.so.8",
    "/lib/x86_64-linux-gnu/libc.so.6",
    "/etc/ld.so.cache",
    "/etc/fonts/fonts.conf",
    "/usr/share/fonts/type1/gsfonts/n019003l.pfb",
    "/usr/share/fonts/type1/gsfonts/n019004l.pfb",
    "/usr/share/fonts/truetype/ttf-dejavu/DejaVuSans.ttf",
    "/usr/share/ghostscript/8.71/Resource/Init/gs_init.ps",
    "/home/user/input.pdf",
    "/home/user/output-0.jpg",
    "/home/user/notes/draft.txt",
    "/home/user/notes/a b.txt",
    "/tmp/magick-XXa1",
    "/tmp/gs_out",
    "/var/cache/fontconfig/cache-4",
];

const DIRS: &[&str] = &[
    "/",
    "/home/user",
    "/home/user/notes",
    "/tmp",
    "/usr/share/fonts",
    "/usr/share/fonts/type1/gsfonts",
    "/usr/lib",
];

const MISSING: &[&str] = &[
    "/home/user/missing.png",
    "/tmp/missing.png",
    "/usr/share/fonts/ZX______.PFB",
    "/etc/app.conf.local",
];

const PROGRAMS: &[&str] = &["/usr/bin/convert", "/bin/sh", "/usr/bin/gs"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Approximate number of completed calls to emit.
    pub events: usize,
    pub initial_cwd: String,
    /// Paths opened and read by the root process at the very end.
    #[serde(default)]
    pub inject: Vec<String>,
}

impl ScenarioConfig {
    pub fn new(seed: u64, events: usize) -> Self {
        ScenarioConfig {
            seed,
            events,
            initial_cwd: "/home/user".into(),
            inject: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpectedResource {
    pub path: String,
    pub mode: AccessMode,
    pub pids: BTreeSet<ProcessId>,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub first_line: usize,
    pub sniffed_prefix: Option<Vec<u8>>,
    /// Descriptor inherited from before tracing began (`<fd:N of pid P>`).
    pub synthetic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpectedFailure {
    pub path: String,
    pub errno: String,
    pub pid: ProcessId,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpectedProcess {
    pub pid: ProcessId,
    pub parent: Option<ProcessId>,
    pub program: Option<String>,
    pub argv: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub config: ScenarioConfig,
    /// Completed calls in the log, counting each split pair once.
    pub events: usize,
    /// Sorted by path; synthetic entries sort first.
    pub resources: Vec<ExpectedResource>,
    pub failed_opens: Vec<ExpectedFailure>,
    /// Sorted by pid.
    pub processes: Vec<ExpectedProcess>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub log: String,
    pub manifest: Manifest,
}

#[derive(Debug, Clone)]
struct Binding {
    path: String,
    cloexec: bool,
}

type Table = BTreeMap<u32, Binding>;

#[derive(Debug, Clone)]
struct Proc {
    pid: u32,
    table: usize,
    cwd: String,
    alive: bool,
    blocked: bool,
}

enum Pending {
    Read {
        proc: usize,
        fd: u32,
        n: u64,
        buf: Vec<u8>,
        truncated: bool,
    },
    Clone {
        proc: usize,
        child: u32,
    },
}

struct Gen {
    rng: ChaCha8Rng,
    lines: Vec<String>,
    events: usize,
    tables: Vec<Table>,
    procs: Vec<Proc>,
    next_pid: u32,
    pending: Vec<Pending>,
    resources: BTreeMap<String, ExpectedResource>,
    failed: Vec<ExpectedFailure>,
    processes: Vec<ExpectedProcess>,
}

fn pid(n: u32) -> ProcessId {
    ProcessId::new(n).expect("generated pids are nonzero")
}

/// `target` expressed relative to `cwd`, both absolute and normalized.
fn relative_to(cwd: &str, target: &str) -> String {
    let from: Vec<&str> = cwd.split('/').filter(|s| !s.is_empty()).collect();
    let to: Vec<&str> = target.split('/').filter(|s| !s.is_empty()).collect();
    let common = from.iter().zip(&to).take_while(|(a, b)| a == b).count();
    let mut parts: Vec<&str> = vec![".."; from.len() - common];
    parts.extend(&to[common..]);
    if parts.is_empty() {
        ".".to_string()
    } else {
        parts.join("/")
    }
}

impl Gen {
    fn new(seed: u64, cwd: &str) -> Self {
        let root = 4000 + (seed % 1000) as u32;
        let mut g = Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            lines: Vec::new(),
            events: 0,
            tables: vec![Table::new()],
            procs: vec![Proc {
                pid: root,
                table: 0,
                cwd: cwd.to_string(),
                alive: true,
                blocked: false,
            }],
            next_pid: root + 1,
            pending: Vec::new(),
            resources: BTreeMap::new(),
            failed: Vec::new(),
            processes: Vec::new(),
        };
        g.appear(root, None);
        g
    }

    fn line_no(&self) -> usize {
        self.lines.len()
    }

    fn emit(&mut self, line: String) {
        self.lines.push(line);
    }

    /// Emits a completed call and returns its line number.
    fn call(&mut self, p: usize, text: String) -> usize {
        let pid = self.procs[p].pid;
        self.appear(pid, None);
        self.emit(format!("{pid} {text}"));
        self.events += 1;
        self.line_no()
    }

    fn appear(&mut self, pid_n: u32, parent: Option<u32>) {
        if !self.processes.iter().any(|e| e.pid.get() == pid_n) {
            self.processes.push(ExpectedProcess {
                pid: pid(pid_n),
                parent: parent.map(pid),
                program: None,
                argv: Vec::new(),
            });
        }
    }

    fn touch(
        &mut self,
        path: &str,
        mode: AccessMode,
        p: usize,
        line: usize,
    ) -> &mut ExpectedResource {
        let pid_v = pid(self.procs[p].pid);
        let r = self
            .resources
            .entry(path.to_string())
            .or_insert_with(|| ExpectedResource {
                path: path.to_string(),
                mode: AccessMode::default(),
                pids: BTreeSet::new(),
                bytes_read: 0,
                bytes_written: 0,
                first_line: line,
                sniffed_prefix: None,
                synthetic: path.starts_with('<'),
            });
        let stronger = r.mode.read || r.mode.write || r.mode.executed;
        let adds = mode.read || mode.write || mode.executed;
        r.mode.read |= mode.read;
        r.mode.write |= mode.write;
        r.mode.executed |= mode.executed;
        r.mode.statted_only = !(stronger || adds) && (r.mode.statted_only || mode.statted_only);
        r.pids.insert(pid_v);
        r
    }

    fn table(&self, p: usize) -> &Table {
        &self.tables[self.procs[p].table]
    }

    fn lowest_free(&self, p: usize) -> u32 {
        let t = self.table(p);
        (3..).find(|fd| !t.contains_key(fd)).expect("free fd")
    }

    fn shared(&self, p: usize) -> bool {
        let t = self.procs[p].table;
        self.procs
            .iter()
            .enumerate()
            .any(|(i, q)| i != p && q.alive && q.table == t)
    }

    /// A spelling of `target` as seen from process `p`: absolute, relative,
    /// or with redundant `.`/`..` segments.
    fn spell(&mut self, p: usize, target: &str) -> String {
        let cwd = self.procs[p].cwd.clone();
        match self.rng.gen_range(0..6) {
            0..=2 => target.to_string(),
            3 => relative_to(&cwd, target),
            4 => format!("./{}", relative_to(&cwd, target)),
            _ => {
                let (dir, name) = target.rsplit_once('/').expect("absolute path");
                format!("{dir}/./sub/../{name}")
            }
        }
    }

    fn pick_file(&mut self) -> &'static str {
        FILES.choose(&mut self.rng).expect("non-empty pool")
    }

    /// Descriptor of `p`'s table that a blocked read is still using.
    fn busy(&self, p: usize, fd: u32) -> bool {
        let t = self.procs[p].table;
        self.pending.iter().any(|pend| match pend {
            Pending::Read { proc, fd: f, .. } => self.procs[*proc].table == t && *f == fd,
            Pending::Clone { .. } => false,
        })
    }

    fn pick_bound(&mut self, p: usize) -> Option<(u32, String)> {
        let fds: Vec<(u32, String)> = self
            .table(p)
            .iter()
            .map(|(fd, b)| (*fd, b.path.clone()))
            .collect();
        fds.choose(&mut self.rng).cloned()
    }

    fn fd_arg(&mut self, fd: u32, path: &str) -> String {
        if self.rng.gen_ratio(1, 8) {
            format!("{fd}<{path}>")
        } else {
            fd.to_string()
        }
    }

    fn random_buffer(&mut self, n: u64) -> (Vec<u8>, bool) {
        let len = (n as usize).min(self.rng.gen_range(1..=24));
        let bytes: Vec<u8> = (0..len)
            .map(|_| match self.rng.gen_range(0..4) {
                0 => self.rng.gen(),
                1 => b"%!PS-AdobeFont\n\t\"\\"[self.rng.gen_range(0..18)],
                _ => self.rng.gen_range(b'a'..=b'z'),
            })
            .collect();
        let truncated = (bytes.len() as u64) < n;
        (bytes, truncated)
    }

    fn step(&mut self) {
        if !self.pending.is_empty() && self.rng.gen_ratio(1, 3) {
            let i = self.rng.gen_range(0..self.pending.len());
            let pend = self.pending.swap_remove(i);
            self.resume(pend);
            return;
        }
        let live: Vec<usize> = (0..self.procs.len())
            .filter(|&i| self.procs[i].alive && !self.procs[i].blocked)
            .collect();
        let Some(&p) = live.choose(&mut self.rng) else {
            if let Some(pend) = self.pending.pop() {
                self.resume(pend);
            }
            return;
        };
        let open_fds = self.table(p).len();
        let roll = self.rng.gen_range(0..100);
        match roll {
            0..=21 if open_fds < 12 => self.open(p),
            0..=21 => self.close(p),
            22..=26 => self.open_dir_relative(p),
            27..=31 => self.failed_open(p),
            32..=49 => self.read(p),
            50..=55 => self.write(p),
            56..=67 => self.close(p),
            68..=71 => self.dup(p),
            72..=74 => self.fork(p),
            75..=76 => self.exec(p),
            77..=80 => self.chdir(p),
            81..=88 => self.stat(p),
            89..=95 => self.noise(p),
            96 if self.procs.iter().filter(|q| q.alive).count() > 1 && p != 0 => self.exit(p),
            _ => self.noise(p),
        }
    }

    fn open(&mut self, p: usize) {
        let target = self.pick_file();
        let spelled = self.spell(p, target);
        let (flags, mode) = match self.rng.gen_range(0..6) {
            0..=2 => ("O_RDONLY", AccessMode::READ),
            3 => ("O_RDONLY|O_CLOEXEC", AccessMode::READ),
            4 => ("O_WRONLY|O_CREAT|O_TRUNC, 0666", AccessMode::WRITE),
            _ => (
                "O_RDWR|O_CREAT|O_CLOEXEC, 0600",
                AccessMode {
                    read: true,
                    write: true,
                    ..Default::default()
                },
            ),
        };
        let fd = self.lowest_free(p);
        let text = if self.rng.gen_bool(0.5) {
            format!(
                "openat(AT_FDCWD, \"{}\", {flags}) = {fd}",
                escape_c(spelled.as_bytes())
            )
        } else {
            format!("open(\"{}\", {flags}) = {fd}", escape_c(spelled.as_bytes()))
        };
        let line = self.call(p, text);
        self.touch(target, mode, p, line);
        let t = self.procs[p].table;
        self.tables[t].insert(
            fd,
            Binding {
                path: target.to_string(),
                cloexec: flags.contains("O_CLOEXEC"),
            },
        );
    }

    /// Opens a directory with `O_DIRECTORY`, then a file inside it relative
    /// to the directory descriptor.
    fn open_dir_relative(&mut self, p: usize) {
        let dir = "/usr/share/fonts/type1/gsfonts";
        let dfd = self.lowest_free(p);
        let line = self.call(
            p,
            format!(
                "openat(AT_FDCWD, \"{dir}\", O_RDONLY|O_NONBLOCK|O_CLOEXEC|O_DIRECTORY) = {dfd}"
            ),
        );
        self.touch(dir, AccessMode::READ, p, line);
        let t = self.procs[p].table;
        self.tables[t].insert(
            dfd,
            Binding {
                path: dir.to_string(),
                cloexec: true,
            },
        );
        let name = ["n019003l.pfb", "n019004l.pfb", "n021003l.pfb"]
            .choose(&mut self.rng)
            .expect("names");
        let fd = self.lowest_free(p);
        let line = self.call(p, format!("openat({dfd}, \"{name}\", O_RDONLY) = {fd}"));
        let path = format!("{dir}/{name}");
        self.touch(&path, AccessMode::READ, p, line);
        self.tables[t].insert(
            fd,
            Binding {
                path,
                cloexec: false,
            },
        );
    }

    fn failed_open(&mut self, p: usize) {
        let target = *MISSING.choose(&mut self.rng).expect("pool");
        let spelled = self.spell(p, target);
        let (errno, msg) = if self.rng.gen_ratio(1, 5) {
            ("EACCES", "Permission denied")
        } else {
            ("ENOENT", "No such file or directory")
        };
        let line = self.call(
            p,
            format!(
                "openat(AT_FDCWD, \"{}\", O_RDONLY) = -1 {errno} ({msg})",
                escape_c(spelled.as_bytes())
            ),
        );
        self.failed.push(ExpectedFailure {
            path: target.to_string(),
            errno: errno.to_string(),
            pid: pid(self.procs[p].pid),
            line,
        });
    }

    fn read(&mut self, p: usize) {
        let Some((fd, path)) = self.pick_bound(p) else {
            return self.noise(p);
        };
        let n: u64 = match self.rng.gen_range(0..5) {
            0 => 0,
            1 => self.rng.gen_range(1..64),
            _ => self.rng.gen_range(64..=4096),
        };
        let (buf, truncated) = self.random_buffer(n);
        let pid_n = self.procs[p].pid;
        if self.rng.gen_ratio(1, 6) {
            let fd_text = self.fd_arg(fd, &path);
            self.appear(pid_n, None);
            self.emit(format!("{pid_n} read({fd_text}, <unfinished ...>"));
            self.procs[p].blocked = true;
            self.pending.push(Pending::Read {
                proc: p,
                fd,
                n,
                buf,
                truncated,
            });
        } else {
            let fd_text = self.fd_arg(fd, &path);
            let line = self.call(
                p,
                format!(
                    "read({fd_text}, \"{}\"{}, 4096) = {n}",
                    escape_c(&buf),
                    if truncated { "..." } else { "" }
                ),
            );
            self.record_read(p, fd, n, buf, line);
        }
    }

    fn record_read(&mut self, p: usize, fd: u32, n: u64, buf: Vec<u8>, line: usize) {
        let Some(path) = self.table(p).get(&fd).map(|b| b.path.clone()) else {
            return;
        };
        let r = self.touch(&path, AccessMode::READ, p, line);
        r.bytes_read += n;
        if r.sniffed_prefix.is_none() && !buf.is_empty() {
            r.sniffed_prefix = Some(buf);
        }
    }

    fn write(&mut self, p: usize) {
        let Some((fd, path)) = self.pick_bound(p) else {
            return self.noise(p);
        };
        let n: u64 = self.rng.gen_range(0..2048);
        let fd_text = self.fd_arg(fd, &path);
        let line = self.call(p, format!("write({fd_text}, \"x\"..., {n}) = {n}"));
        self.touch(&path, AccessMode::WRITE, p, line).bytes_written += n;
    }

    fn close(&mut self, p: usize) {
        let Some((fd, _)) = self.pick_bound(p) else {
            return self.noise(p);
        };
        if self.busy(p, fd) {
            return self.noise(p);
        }
        self.call(p, format!("close({fd}) = 0"));
        let t = self.procs[p].table;
        self.tables[t].remove(&fd);
    }

    fn dup(&mut self, p: usize) {
        let Some((old, path)) = self.pick_bound(p) else {
            return self.noise(p);
        };
        let t = self.procs[p].table;
        let (text, new, cloexec) = match self.rng.gen_range(0..4) {
            0 => {
                let new = self.lowest_free(p);
                (format!("dup({old}) = {new}"), new, false)
            }
            1 => {
                let new = self.rng.gen_range(3..16);
                if new == old {
                    return self.noise(p);
                }
                (format!("dup2({old}, {new}) = {new}"), new, false)
            }
            2 => {
                let new = self.rng.gen_range(3..16);
                if new == old {
                    return self.noise(p);
                }
                (format!("dup3({old}, {new}, O_CLOEXEC) = {new}"), new, true)
            }
            _ => {
                let new = self.lowest_free(p);
                (
                    format!("fcntl({old}, F_DUPFD_CLOEXEC, 0) = {new}"),
                    new,
                    true,
                )
            }
        };
        if self.busy(p, new) {
            return self.noise(p);
        }
        self.call(p, text);
        self.tables[t].insert(new, Binding { path, cloexec });
    }

    fn fork(&mut self, p: usize) {
        if self.procs.len() >= 24 {
            return self.noise(p);
        }
        let child = self.next_pid;
        self.next_pid += 1;
        let thread = self.rng.gen_ratio(1, 4);
        let split = !thread && !self.shared(p) && self.rng.gen_bool(0.5);
        let table = if thread {
            self.procs[p].table
        } else {
            let copy = self.tables[self.procs[p].table].clone();
            self.tables.push(copy);
            self.tables.len() - 1
        };
        let parent_pid = self.procs[p].pid;
        self.procs.push(Proc {
            pid: child,
            table,
            cwd: self.procs[p].cwd.clone(),
            alive: true,
            blocked: false,
        });
        let flags = if thread {
            "CLONE_VM|CLONE_FS|CLONE_FILES|CLONE_SIGHAND|CLONE_THREAD|CLONE_SYSVSEM"
        } else {
            "CLONE_CHILD_CLEARTID|CLONE_CHILD_SETTID|SIGCHLD"
        };
        if split {
            self.appear(parent_pid, None);
            self.emit(format!(
                "{parent_pid} clone(child_stack=NULL, flags={flags}, child_tidptr=0x7f0000000a10 <unfinished ...>"
            ));
            self.procs[p].blocked = true;
            self.pending.push(Pending::Clone { proc: p, child });
            // the child's first line may precede the parent's resumption
            self.processes.push(ExpectedProcess {
                pid: pid(child),
                parent: Some(pid(parent_pid)),
                program: None,
                argv: Vec::new(),
            });
        } else {
            self.call(
                p,
                format!(
                    "clone(child_stack=NULL, flags={flags}, child_tidptr=0x7f0000000a10) = {child}"
                ),
            );
            self.appear(child, Some(parent_pid));
        }
    }

    fn exec(&mut self, p: usize) {
        if self.shared(p) {
            return self.noise(p);
        }
        let program = *PROGRAMS.choose(&mut self.rng).expect("pool");
        let name = program.rsplit('/').next().expect("name");
        let argc = self.rng.gen_range(0..3);
        let mut argv = vec![name.to_string()];
        for _ in 0..argc {
            let a = self.pick_file();
            argv.push(a.to_string());
        }
        let rendered: Vec<String> = argv
            .iter()
            .map(|a| format!("\"{}\"", escape_c(a.as_bytes())))
            .collect();
        let line = self.call(
            p,
            format!(
                "execve(\"{program}\", [{}], 0x7ffd5a1e8f40 /* 23 vars */) = 0",
                rendered.join(", ")
            ),
        );
        self.touch(program, AccessMode::EXECUTED, p, line);
        let pid_n = self.procs[p].pid;
        let node = self
            .processes
            .iter_mut()
            .find(|e| e.pid.get() == pid_n)
            .expect("appeared");
        node.program = Some(program.to_string());
        node.argv = argv;
        let t = self.procs[p].table;
        self.tables[t].retain(|_, b| !b.cloexec);
    }

    fn chdir(&mut self, p: usize) {
        let dir = *DIRS.choose(&mut self.rng).expect("pool");
        let spelled = match self.rng.gen_range(0..3) {
            0 => relative_to(&self.procs[p].cwd, dir),
            _ => dir.to_string(),
        };
        self.call(
            p,
            format!("chdir(\"{}\") = 0", escape_c(spelled.as_bytes())),
        );
        self.procs[p].cwd = dir.to_string();
    }

    fn stat(&mut self, p: usize) {
        let target = if self.rng.gen_ratio(1, 3) {
            *DIRS.choose(&mut self.rng).expect("pool")
        } else {
            self.pick_file()
        };
        let spelled = self.spell(p, target);
        let text = match self.rng.gen_range(0..3) {
            0 => format!(
                "stat(\"{}\", {{st_mode=S_IFREG|0644, st_size=4096, ...}}) = 0",
                escape_c(spelled.as_bytes())
            ),
            1 => format!("access(\"{}\", R_OK) = 0", escape_c(spelled.as_bytes())),
            _ => format!(
                "newfstatat(AT_FDCWD, \"{}\", {{st_mode=S_IFREG|0644, st_size=4096, ...}}, 0) = 0",
                escape_c(spelled.as_bytes())
            ),
        };
        let line = self.call(p, text);
        self.touch(target, AccessMode::STATTED, p, line);
    }

    fn noise(&mut self, p: usize) {
        if self.rng.gen_ratio(1, 5) {
            let n: u64 = self.rng.gen_range(1..80);
            let line = self.call(p, format!("write(1, \"progress\\n\"..., {n}) = {n}"));
            let key = format!("<fd:1 of pid {}>", self.procs[p].pid);
            self.touch(&key, AccessMode::WRITE, p, line).bytes_written += n;
            return;
        }
        let text = match self.rng.gen_range(0..4) {
            0 => "brk(NULL) = 0x55d4c6b2e000".to_string(),
            1 => "mmap(NULL, 8192, PROT_READ|PROT_WRITE, MAP_PRIVATE|MAP_ANONYMOUS, -1, 0) = 0x7f3a2c000000".to_string(),
            2 => format!("getpid() = {}", self.procs[p].pid),
            _ => "rt_sigprocmask(SIG_SETMASK, [], NULL, 8) = 0".to_string(),
        };
        self.call(p, text);
    }

    fn exit(&mut self, p: usize) {
        self.call(p, "exit_group(0) = ?".to_string());
        let pid_n = self.procs[p].pid;
        self.emit(format!("{pid_n} +++ exited with 0 +++"));
        self.procs[p].alive = false;
    }

    fn resume(&mut self, pend: Pending) {
        match pend {
            Pending::Read {
                proc,
                fd,
                n,
                buf,
                truncated,
            } => {
                let pid_n = self.procs[proc].pid;
                self.emit(format!(
                    "{pid_n} <... read resumed>\"{}\"{}, 4096) = {n}",
                    escape_c(&buf),
                    if truncated { "..." } else { "" }
                ));
                self.events += 1;
                let line = self.line_no();
                self.record_read(proc, fd, n, buf, line);
                self.procs[proc].blocked = false;
            }
            Pending::Clone { proc, child } => {
                let pid_n = self.procs[proc].pid;
                self.emit(format!("{pid_n} <... clone resumed>) = {child}"));
                self.events += 1;
                self.procs[proc].blocked = false;
            }
        }
    }

    fn inject(&mut self, paths: &[String]) {
        for path in paths {
            let fd = self.lowest_free(0);
            let line = self.call(
                0,
                format!(
                    "openat(AT_FDCWD, \"{}\", O_RDONLY) = {fd}",
                    escape_c(path.as_bytes())
                ),
            );
            self.touch(path, AccessMode::READ, 0, line);
            let line = self.call(0, format!("read({fd}, \"\\200\\1\", 4096) = 2"));
            let r = self.touch(path, AccessMode::READ, 0, line);
            r.bytes_read += 2;
            if r.sniffed_prefix.is_none() {
                r.sniffed_prefix = Some(vec![0x80, 0x01]);
            }
            self.call(0, format!("close({fd}) = 0"));
        }
    }
}

pub fn generate(config: &ScenarioConfig) -> Scenario {
    let mut g = Gen::new(config.seed, &config.initial_cwd);
    let program = PROGRAMS[0];
    let line = g.call(
        0,
        format!("execve(\"{program}\", [\"convert\", \"input.pdf\", \"output.jpg\"], 0x7ffd5a1e8f40 /* 23 vars */) = 0"),
    );
    g.touch(program, AccessMode::EXECUTED, 0, line);
    g.processes[0].program = Some(program.to_string());
    g.processes[0].argv = ["convert", "input.pdf", "output.jpg"]
        .map(String::from)
        .to_vec();

    while g.events < config.events {
        g.step();
    }
    while let Some(pend) = g.pending.pop() {
        g.resume(pend);
    }
    g.procs[0].alive = true;
    g.inject(&config.inject);

    g.processes.sort_by_key(|e| e.pid);
    let mut log = String::new();
    for l in &g.lines {
        let _ = writeln!(log, "{l}");
    }
    Scenario {
        log,
        manifest: Manifest {
            config: config.clone(),
            events: g.events,
            resources: g.resources.into_values().collect(),
            failed_opens: g.failed,
            processes: g.processes,
        },
    }
}

/// Baseline/target pair whose target additionally reads `inject`.
pub fn generate_pair(seed: u64, events: usize, inject: &[String]) -> (Scenario, Scenario) {
    let base = ScenarioConfig::new(seed, events);
    let target = ScenarioConfig {
        inject: inject.to_vec(),
        ..base.clone()
    };
    (generate(&base), generate(&target))
}

/// A structurally valid report with random content, for round-trip tests.
pub fn random_report(seed: u64) -> RIReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let word = |rng: &mut ChaCha8Rng| -> String {
        let alphabet: Vec<char> = "abcXYZ019_-. é\"\\/\u{1F600}\t".chars().collect();
        (0..rng.gen_range(1..10))
            .map(|_| *alphabet.choose(rng).expect("alphabet"))
            .collect()
    };
    let dialect = if rng.gen() {
        TraceDialect::LinuxStrace
    } else {
        TraceDialect::MacDtruss
    };
    let run = |rng: &mut ChaCha8Rng, mode| RunProvenance {
        command: (0..rng.gen_range(0..4)).map(|_| word(rng)).collect(),
        dialect,
        capture_host: word(rng),
        capture_time: "2026-01-02T03:04:05Z".into(),
        trace_file: word(rng),
        mode,
    };
    let two_run = rng.gen_ratio(1, 3);
    let mode = if two_run {
        RunMode::TwoRun
    } else if rng.gen() {
        RunMode::Attach
    } else {
        RunMode::SingleRun
    };
    let mut report = RIReport::new(Provenance {
        target: run(&mut rng, mode),
        baseline: two_run.then(|| run(&mut rng, RunMode::TwoRun)),
    });
    let classes = [
        ResourceClass::Font(FontSubtype::Type1),
        ResourceClass::Font(FontSubtype::TrueType),
        ResourceClass::Font(FontSubtype::OpenType),
        ResourceClass::Font(FontSubtype::Unknown),
        ResourceClass::SharedLibrary,
        ResourceClass::Executable,
        ResourceClass::MediaFile("image".into()),
        ResourceClass::MediaFile("document".into()),
        ResourceClass::Config,
        ResourceClass::Directory,
        ResourceClass::Other,
    ];
    let mut paths = BTreeSet::new();
    for _ in 0..rng.gen_range(0..12) {
        paths.insert(format!("/{}/{}", word(&mut rng), word(&mut rng)));
    }
    for path in &paths {
        let mode = AccessMode {
            read: rng.gen(),
            write: rng.gen(),
            executed: rng.gen(),
            statted_only: false,
        };
        report.resources.push(ResourceEntry {
            path: path.clone(),
            class: classes.choose(&mut rng).expect("classes").clone(),
            mode: if mode == AccessMode::default() {
                AccessMode::STATTED
            } else {
                mode
            },
            pids: (0..rng.gen_range(1..4))
                .map(|_| pid(rng.gen_range(1..99999)))
                .collect(),
            bytes_read: rng.gen_range(0..1 << 40),
            bytes_written: rng.gen_range(0..1 << 20),
            first_line: rng.gen_range(1..100_000),
            package: rng.gen_ratio(1, 3).then(|| PackageRef {
                name: word(&mut rng),
                version: rng.gen::<bool>().then(|| word(&mut rng)),
                source: word(&mut rng),
            }),
        });
    }
    if two_run {
        let mut delta = DependencyDelta::default();
        for p in &paths {
            match rng.gen_range(0..3) {
                0 => delta.added.insert(p.clone()),
                1 => delta.shared.insert(p.clone()),
                _ => delta.removed.insert(p.clone()),
            };
        }
        report.delta = Some(delta);
        report.subjects = (0..rng.gen_range(0..2)).map(|_| word(&mut rng)).collect();
    }
    for _ in 0..rng.gen_range(0..3) {
        let base = word(&mut rng);
        report.missing.push(MissingResource {
            attempted_paths: (0..rng.gen_range(1..4))
                .map(|_| format!("/{}/{base}", word(&mut rng)))
                .collect(),
            basename: base,
            errnos: ["ENOENT".to_string()].into(),
            pids: [pid(rng.gen_range(1..99999))].into(),
        });
    }
    for i in 0..rng.gen_range(0..4) {
        report.processes.push(ProcessEntry {
            pid: pid(100 + i),
            parent: (i > 0).then(|| pid(100)),
            program: rng.gen::<bool>().then(|| word(&mut rng)),
            argv: (0..rng.gen_range(0..3)).map(|_| word(&mut rng)).collect(),
        });
    }
    report.unresolved_packages = rng.gen_range(0..10);
    report.warnings = (0..rng.gen_range(0..3)).map(|_| word(&mut rng)).collect();
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths() {
        assert_eq!(
            relative_to("/home/user", "/home/user/input.pdf"),
            "input.pdf"
        );
        assert_eq!(relative_to("/home/user/notes", "/tmp/x"), "../../../tmp/x");
        assert_eq!(relative_to("/", "/etc/hosts"), "etc/hosts");
        assert_eq!(relative_to("/tmp", "/tmp"), ".");
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&ScenarioConfig::new(7, 300));
        let b = generate(&ScenarioConfig::new(7, 300));
        assert_eq!(a.log, b.log);
        assert_eq!(a.manifest, b.manifest);
        assert_ne!(a.log, generate(&ScenarioConfig::new(8, 300)).log);
        assert!(a.manifest.events >= 300);
    }

    #[test]
    fn pair_shares_prefix() {
        let inject = vec!["/opt/doc/Font/ZX______.PFB".to_string()];
        let (base, target) = generate_pair(3, 200, &inject);
        assert!(target.log.starts_with(&base.log));
        assert!(target
            .manifest
            .resources
            .iter()
            .any(|r| r.path == inject[0]));
    }

    #[test]
    fn random_reports_are_valid() {
        for seed in 0..50 {
            random_report(seed).validate().unwrap();
        }
    }
}
