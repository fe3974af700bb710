//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ritrace_core::pipeline::{analyze, AnalyzeOptions, RunInput};
use ritrace_core::report::{emit, load};
use ritrace_core::scenario::{generate, random_report, ScenarioConfig};
use ritrace_core::{
    detect_dialect, detect_missing, fontset, parse_line, parse_stream, replay, resource_set,
    AccessMode, Buffer, CallClass, CallResult, Classifier, Fd, FontSubtype, LineOutcome, OpenFlags,
    ProcessId, ResourceClass, TraceDialect, TraceEvent,
};

type Outcome = Result<String, String>;

fn fixture(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!("took {elapsed:?}, limit {limit:?}")
    })
}

fn c1_listing() -> Outcome {
    let start = Instant::now();
    let text = fixture("listing.strace");
    let log = replay(&parse_stream(&text, TraceDialect::LinuxStrace), "/");
    let read = resource_set(&log, AccessMode::READ);
    let want = "/usr/share/fonts/type1/gsfonts/n019004l.pfb";
    ensure(read.len() == 1 && read.contains(want), || {
        format!("read set {read:?}")
    })?;
    let r = &log.resources[want];
    ensure(r.bytes_read == 8192, || {
        format!("bytes read {}", r.bytes_read)
    })?;
    let pids: Vec<u32> = r.pids.iter().map(|p| p.get()).collect();
    ensure(pids == [5336], || format!("pids {pids:?}"))?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("1 resource, 8192 bytes, pid 5336 in {elapsed:?}"))
}

fn c2_table_fonts() -> Outcome {
    let text = fixture("imagemagick-debian.strace");
    let log = replay(
        &parse_stream(&text, TraceDialect::LinuxStrace),
        "/home/user",
    );
    let paths = resource_set(&log, AccessMode::READ);
    let fonts = fontset(
        paths.iter(),
        |p: &str| log.resources[p].sniffed_prefix.as_deref(),
        Classifier::builtin(),
    );
    let names: BTreeSet<&str> = fonts
        .iter()
        .map(|(p, _)| p.rsplit('/').next().unwrap_or(p))
        .collect();
    let want: BTreeSet<&str> = [
        "n019003l.pfb",
        "n019004l.pfb",
        "n019023l.pfb",
        "n019024l.pfb",
        "n021003l.pfb",
    ]
    .into();
    ensure(names == want, || format!("fonts {names:?}"))?;
    ensure(fonts.iter().all(|(_, s)| *s == FontSubtype::Type1), || {
        format!("subtypes {fonts:?}")
    })?;
    Ok(format!(
        "{} Type1 fonts among {} read paths",
        fonts.len(),
        paths.len()
    ))
}

fn c3_two_run() -> Outcome {
    let base_text = fixture("adobe-baseline.strace");
    let target_text = fixture("adobe-target.strace");
    let mut base = RunInput::new(&base_text, "adobe-baseline.strace");
    base.command = vec!["acroread".into()];
    let mut target = RunInput::new(&target_text, "adobe-target.strace");
    target.command = vec!["acroread".into(), "/home/user/docs/z39_87_2006.pdf".into()];
    let r = analyze(&target, Some(&base), &AnalyzeOptions::default()).map_err(|e| e.to_string())?;
    let delta = r.delta.ok_or("no delta")?;
    let zx = "/opt/Adobe/Reader9/Resource/Font/ZX______.PFB";
    let added: Vec<&str> = delta.added.iter().map(String::as_str).collect();
    ensure(added == [zx], || format!("added {added:?}"))?;
    ensure(!delta.added.iter().any(|p| p.contains("DejaVu")), || {
        "DejaVu in delta".into()
    })?;
    let ui = delta
        .shared
        .iter()
        .filter(|p| p.contains("DejaVuSans"))
        .count();
    ensure(ui == 2, || format!("{ui} DejaVu fonts shared"))?;
    Ok("added == {ZX______.PFB}, both DejaVu fonts shared".into())
}

fn c4_missing() -> Outcome {
    let text = fixture("missing-media.strace");
    let log = replay(&parse_stream(&text, TraceDialect::LinuxStrace), "/");
    let missing = detect_missing(&log);
    ensure(missing.len() == 1, || format!("{missing:?}"))?;
    let m = &missing[0];
    let want = [
        "/Users/a/pic.png",
        "/Users/a/Desktop/pic.png",
        "/tmp/pic.png",
    ];
    ensure(m.basename == "pic.png" && m.attempted_paths == want, || {
        format!("{m:?}")
    })?;
    Ok(format!(
        "{} attempts at {}",
        m.attempted_paths.len(),
        m.basename
    ))
}

fn oracle_mismatch(seed: u64) -> Option<String> {
    let s = generate(&ScenarioConfig::new(seed, 1000));
    let trace = parse_stream(&s.log, TraceDialect::LinuxStrace);
    if !trace.issues.is_empty() {
        return Some(format!("seed {seed}: {:?}", trace.issues[0]));
    }
    let log = replay(&trace, &s.manifest.config.initial_cwd);
    let got: Vec<_> = log
        .resources
        .values()
        .map(|r| {
            (
                &r.path,
                r.mode,
                &r.pids,
                r.bytes_read,
                r.bytes_written,
                r.synthetic,
            )
        })
        .collect();
    let want: Vec<_> = s
        .manifest
        .resources
        .iter()
        .map(|r| {
            (
                &r.path,
                r.mode,
                &r.pids,
                r.bytes_read,
                r.bytes_written,
                r.synthetic,
            )
        })
        .collect();
    if got != want {
        let first = got.iter().zip(&want).find(|(a, b)| a != b);
        return Some(format!("seed {seed}: resources differ, first {first:?}"));
    }
    let mut procs: Vec<_> = log
        .processes
        .iter()
        .map(|p| (p.pid, p.parent, p.program.clone(), p.argv.clone()))
        .collect();
    procs.sort();
    let want: Vec<_> = s
        .manifest
        .processes
        .iter()
        .map(|p| (p.pid, p.parent, p.program.clone(), p.argv.clone()))
        .collect();
    if procs != want {
        return Some(format!("seed {seed}: process tree differs"));
    }
    None
}

fn c5_oracle() -> Outcome {
    let start = Instant::now();
    for seed in 0..100 {
        if let Some(m) = oracle_mismatch(seed) {
            return Err(m);
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!("100 seeds x 1000 events in {elapsed:?}"))
}

const FLAGS: &[&str] = &[
    "O_RDONLY",
    "O_RDONLY|O_CLOEXEC",
    "O_WRONLY|O_CREAT|O_TRUNC",
    "O_RDWR",
    "O_RDONLY|O_NONBLOCK|O_CLOEXEC|O_DIRECTORY",
];

/// A path-like string, absolute with probability `p_abs`.
fn random_string(rng: &mut ChaCha8Rng, p_abs: f64) -> String {
    let absolute = rng.gen_bool(p_abs);
    let alphabet: Vec<char> = "abcXYZ019_-. /\\\"\té\u{7f}\n".chars().collect();
    let len = rng.gen_range(1..16);
    let body: String = (0..len)
        .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
        .collect();
    if absolute {
        format!("/{body}")
    } else {
        body
    }
}

fn random_result(rng: &mut ChaCha8Rng) -> CallResult {
    match rng.gen_range(0..4) {
        0 => CallResult::Err {
            errno: "ENOENT".into(),
            message: "No such file or directory".into(),
        },
        1 => CallResult::Err {
            errno: "EACCES".into(),
            message: "Permission denied".into(),
        },
        _ => CallResult::Ok(rng.gen_range(0..1 << 40)),
    }
}

/// An event of class `kind` (0..11), so every class is covered in turn.
fn random_event(rng: &mut ChaCha8Rng, kind: usize, line: usize) -> TraceEvent {
    let fd = |rng: &mut ChaCha8Rng| Fd(rng.gen_range(0..1024));
    let opt_fd = |rng: &mut ChaCha8Rng| rng.gen_bool(0.5).then(|| Fd(rng.gen_range(0..1024)));
    let mut read_prefix = None;
    let (call, result) = match kind {
        0 => (
            CallClass::Open {
                path: random_string(rng, 0.7),
                flags: OpenFlags::from_symbolic(FLAGS[rng.gen_range(0..FLAGS.len())]),
                dir_fd: opt_fd(rng),
            },
            random_result(rng),
        ),
        1 => {
            if rng.gen_bool(0.7) {
                let bytes = (0..rng.gen_range(0..40)).map(|_| rng.gen()).collect();
                read_prefix = Some(Buffer {
                    bytes,
                    truncated: rng.gen(),
                });
            }
            let call = CallClass::Read {
                fd: fd(rng),
                requested: rng.gen_range(0..65536),
            };
            (call, random_result(rng))
        }
        2 => (
            CallClass::Write {
                fd: fd(rng),
                requested: rng.gen_range(0..65536),
            },
            random_result(rng),
        ),
        3 => (CallClass::Close { fd: fd(rng) }, random_result(rng)),
        4 => (
            CallClass::Dup {
                old_fd: fd(rng),
                new_fd: opt_fd(rng),
                cloexec: rng.gen(),
            },
            random_result(rng),
        ),
        5 => {
            let child = rng.gen_range(1..=u32::MAX);
            (
                CallClass::Fork {
                    child: ProcessId::new(child),
                    shares_files: rng.gen(),
                },
                CallResult::Ok(i64::from(child)),
            )
        }
        6 => (
            CallClass::Exec {
                program: random_string(rng, 1.0),
                argv: (0..rng.gen_range(0..4))
                    .map(|_| random_string(rng, 0.0))
                    .collect(),
            },
            random_result(rng),
        ),
        7 => (
            CallClass::Chdir {
                path: random_string(rng, 0.5),
            },
            random_result(rng),
        ),
        8 => (
            CallClass::Stat {
                path: random_string(rng, 0.5),
                dir_fd: opt_fd(rng),
            },
            random_result(rng),
        ),
        9 => (CallClass::Mmap { fd: fd(rng) }, random_result(rng)),
        _ => (
            CallClass::Other {
                name: ["getpid", "brk", "rt_sigaction", "munmap"][rng.gen_range(0..4)].into(),
            },
            CallResult::Unknown,
        ),
    };
    TraceEvent {
        pid: ProcessId::new(rng.gen_range(1..=u32::MAX)).expect("nonzero"),
        call,
        result,
        line,
        read_prefix,
    }
}

fn c6_totality_and_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let valid = generate(&ScenarioConfig::new(6, 300)).log;
    let valid: Vec<&str> = valid.lines().collect();
    for i in 0..10_000 {
        let bytes: Vec<u8> = if i % 2 == 0 {
            (0..rng.gen_range(0..512)).map(|_| rng.gen()).collect()
        } else {
            let mut b = valid[rng.gen_range(0..valid.len())].as_bytes().to_vec();
            for _ in 0..rng.gen_range(1..6) {
                let at = rng.gen_range(0..=b.len());
                b.insert(at, rng.gen());
            }
            b
        };
        let text = String::from_utf8_lossy(&bytes);
        for dialect in [TraceDialect::LinuxStrace, TraceDialect::MacDtruss] {
            let outcome = panic::catch_unwind(|| {
                let t = parse_stream(&text, dialect);
                let _ = replay(&t, "/");
                t.events.len() + t.issues.len() + t.skipped == t.logical_lines
            });
            match outcome {
                Ok(true) => {}
                Ok(false) => return Err(format!("line accounting off for input {i}")),
                Err(_) => return Err(format!("parse_stream panicked on input {i}: {bytes:?}")),
            }
        }
        let _ = detect_dialect(&text);
    }
    let mut classes = BTreeSet::new();
    for i in 0..11_000 {
        let ev = random_event(&mut rng, i % 11, i + 1);
        let text = ev.render();
        match parse_line(&text, TraceDialect::LinuxStrace, ev.line) {
            LineOutcome::Event(back) if back == ev => {
                classes.insert(ev.call.name().to_string());
            }
            other => return Err(format!("{text} -> {other:?}")),
        }
    }
    let kinds = classes.len();
    ensure(kinds >= 11, || format!("only {kinds} call shapes covered"))?;
    Ok(format!(
        "10^4 fuzz inputs in both dialects, 11000 round trips over {kinds} call shapes"
    ))
}

fn c7_report_round_trip() -> Outcome {
    for seed in 0..1000 {
        let r = random_report(seed);
        let text = emit(&r);
        let back = load(&text).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(back == r, || format!("seed {seed}: load(emit(r)) != r"))?;
        ensure(emit(&back) == text && emit(&r) == text, || {
            format!("seed {seed}: emit not byte-deterministic")
        })?;
    }
    Ok("1000 reports".into())
}

fn c8_dialects() -> Outcome {
    let s = replay(
        &parse_stream(&fixture("preview.strace"), TraceDialect::LinuxStrace),
        "/",
    );
    let d = replay(
        &parse_stream(&fixture("preview.dtruss"), TraceDialect::MacDtruss),
        "/",
    );
    for mask in [AccessMode::READ, AccessMode::TOUCHED, AccessMode::ANY] {
        let (a, b) = (resource_set(&s, mask), resource_set(&d, mask));
        ensure(a == b, || {
            format!(
                "strace-only {:?}, dtruss-only {:?}",
                a.difference(&b),
                b.difference(&a)
            )
        })?;
    }
    Ok(format!(
        "{} paths agree",
        resource_set(&s, AccessMode::ANY).len()
    ))
}

fn which(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|d| d.join(name))
        .find(|p| p.is_file())
}

/// `None` when the host cannot trace.
fn c9_live() -> Option<Outcome> {
    let strace = which("strace")?;
    let true_bin = which("true")?;
    Some((|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let tracer = |args: &[&str]| {
            Command::new(env!("CARGO_BIN_EXE_ri-tracer"))
                .current_dir(dir.path())
                .env("RI_TRACER_PATH", &strace)
                .args(args)
                .output()
                .map_err(|e| e.to_string())
        };
        let o = tracer(&["trace", "--tracer", "strace", "--", "true"])?;
        let stderr = String::from_utf8_lossy(&o.stderr);
        if o.status.code() == Some(2) && stderr.contains("not permitted") {
            return Ok(format!(
                "skipped, tracing not permitted here: {}",
                stderr.trim()
            ));
        }
        ensure(o.status.success(), || format!("trace failed: {stderr}"))?;
        let r = load(&String::from_utf8_lossy(&o.stdout)).map_err(|e| e.to_string())?;
        let exe = std::fs::canonicalize(&true_bin).unwrap_or(true_bin);
        let executed = r
            .resources
            .iter()
            .any(|e| e.mode.executed && (Path::new(&e.path) == exe || e.path.ends_with("/true")));
        ensure(executed, || {
            format!("{} not marked executed", exe.display())
        })?;
        let mut note = String::from("`trace -- true` marks the program executed");
        if which("convert").is_some() && which("gs").is_some() {
            let pdf = dir.path().join("input.pdf");
            std::fs::write(&pdf, MINIMAL_PDF).map_err(|e| e.to_string())?;
            let o = tracer(&[
                "trace",
                "--tracer",
                "strace",
                "--",
                "convert",
                "input.pdf",
                "output.jpg",
            ])?;
            let r = load(&String::from_utf8_lossy(&o.stdout)).map_err(|e| e.to_string())?;
            let fonts = r
                .resources
                .iter()
                .filter(|e| {
                    matches!(
                        e.class,
                        ResourceClass::Font(FontSubtype::Type1 | FontSubtype::TrueType)
                    )
                })
                .count();
            ensure(fonts >= 1, || {
                "convert read no Type1 or TrueType font".into()
            })?;
            note.push_str(&format!("; convert read {fonts} fonts"));
        }
        Ok(note)
    })())
}

const MINIMAL_PDF: &str = "%PDF-1.4
1 0 obj << /Type /Catalog /Pages 2 0 R >> endobj
2 0 obj << /Type /Pages /Kids [3 0 R] /Count 1 >> endobj
3 0 obj << /Type /Page /Parent 2 0 R /MediaBox [0 0 200 100] /Contents 4 0 R /Resources << /Font << /F1 5 0 R >> >> >> endobj
4 0 obj << /Length 44 >> stream
BT /F1 24 Tf 20 40 Td (Hello) Tj ET
endstream endobj
5 0 obj << /Type /Font /Subtype /Type1 /BaseFont /Helvetica >> endobj
trailer << /Root 1 0 R >>
%%EOF
";

fn run(n: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    match outcome {
        Ok(detail) => {
            println!("PASS  {n}. {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL  {n}. {name}: {detail}");
            false
        }
    }
}

fn main() {
    panic::set_hook(Box::new(|_| {}));
    let mut ok = true;
    ok &= run(1, "listing fixture", c1_listing);
    ok &= run(2, "ImageMagick font set", c2_table_fonts);
    ok &= run(3, "two-run separation", c3_two_run);
    ok &= run(4, "missing-media clustering", c4_missing);
    ok &= run(5, "oracle equivalence", c5_oracle);
    ok &= run(
        6,
        "parser totality and round trip",
        c6_totality_and_round_trip,
    );
    ok &= run(7, "report round trip", c7_report_round_trip);
    ok &= run(8, "dialect equivalence", c8_dialects);
    match c9_live() {
        Some(outcome) => ok &= run(9, "live capture", || outcome),
        None => println!("SKIP  9. live capture: strace not installed (gated, non-blocking)"),
    }
    if !ok {
        std::process::exit(1);
    }
}
