use std::collections::BTreeSet;

use proptest::prelude::*;
use ritrace_core::analysis::analyze_missing;
use ritrace_core::replay::replay_events;
use ritrace_core::report::{emit, load};
use ritrace_core::scenario::{generate, random_report, ScenarioConfig};
use ritrace_core::{
    detect_dialect, diff_logs, parse_line, parse_stream, replay, resource_set, AccessMode, Buffer,
    CallClass, CallResult, Fd, LineOutcome, OpenFlags, ProcessId, TraceDialect, TraceEvent,
};

const FLAGS: &[&str] = &[
    "O_RDONLY",
    "O_RDONLY|O_CLOEXEC",
    "O_WRONLY|O_CREAT|O_TRUNC",
    "O_RDWR",
    "O_RDONLY|O_NONBLOCK|O_CLOEXEC|O_DIRECTORY",
    "O_WRONLY|O_CREAT|O_APPEND|O_CLOEXEC",
];

const ERRNOS: &[(&str, &str)] = &[
    ("ENOENT", "No such file or directory"),
    ("EACCES", "Permission denied"),
    ("EBADF", "Bad file descriptor"),
    ("ENOTDIR", "Not a directory"),
];

fn path() -> impl Strategy<Value = String> {
    prop_oneof![
        "/[a-zA-Z0-9_. -]{1,12}(/[a-zA-Z0-9_.-]{1,8}){0,3}",
        "[a-z]{1,6}/\\.\\./[a-z]{1,6}",
        "\\PC{1,16}",
    ]
}

fn fd() -> impl Strategy<Value = Fd> {
    (0u32..1024).prop_map(Fd)
}

fn result() -> impl Strategy<Value = CallResult> {
    prop_oneof![
        (0i64..1 << 40).prop_map(CallResult::Ok),
        proptest::sample::select(ERRNOS).prop_map(|(e, m)| CallResult::Err {
            errno: e.to_string(),
            message: m.to_string(),
        }),
    ]
}

fn call_and_result() -> impl Strategy<Value = (CallClass, CallResult, Option<Buffer>)> {
    prop_oneof![
        (
            path(),
            proptest::sample::select(FLAGS),
            proptest::option::of(fd()),
            result()
        )
            .prop_map(|(path, raw, dir_fd, r)| (
                CallClass::Open {
                    path,
                    flags: OpenFlags::from_symbolic(raw),
                    dir_fd
                },
                r,
                None
            )),
        (
            fd(),
            0u64..65536,
            proptest::option::of((proptest::collection::vec(any::<u8>(), 0..40), any::<bool>())),
            result()
        )
            .prop_map(|(fd, requested, buf, r)| (
                CallClass::Read { fd, requested },
                r,
                buf.map(|(bytes, truncated)| Buffer { bytes, truncated })
            )),
        (fd(), 0u64..65536, result()).prop_map(|(fd, requested, r)| (
            CallClass::Write { fd, requested },
            r,
            None
        )),
        (fd(), result()).prop_map(|(fd, r)| (CallClass::Close { fd }, r, None)),
        (fd(), proptest::option::of(fd()), any::<bool>(), result()).prop_map(
            |(old_fd, new_fd, cloexec, r)| (
                CallClass::Dup {
                    old_fd,
                    new_fd,
                    cloexec
                },
                r,
                None
            )
        ),
        (1u32..=u32::MAX, any::<bool>()).prop_map(|(child, shares_files)| (
            CallClass::Fork {
                child: ProcessId::new(child),
                shares_files
            },
            CallResult::Ok(i64::from(child)),
            None
        )),
        (
            path(),
            proptest::collection::vec("\\PC{0,10}", 0..4),
            result()
        )
            .prop_map(|(program, argv, r)| (CallClass::Exec { program, argv }, r, None)),
        (path(), result()).prop_map(|(path, r)| (CallClass::Chdir { path }, r, None)),
        (path(), proptest::option::of(fd()), result()).prop_map(|(path, dir_fd, r)| (
            CallClass::Stat { path, dir_fd },
            r,
            None
        )),
        (fd(), result()).prop_map(|(fd, r)| (CallClass::Mmap { fd }, r, None)),
        "(getpid|brk|rt_sigaction|exit_group|munmap)".prop_map(|name| (
            CallClass::Other { name },
            CallResult::Unknown,
            None
        )),
    ]
}

fn event() -> impl Strategy<Value = TraceEvent> {
    (1u32..=u32::MAX, 1usize..100_000, call_and_result()).prop_map(
        |(p, line, (call, result, buf))| TraceEvent {
            pid: ProcessId::new(p).expect("nonzero"),
            call,
            result,
            line,
            read_prefix: buf,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn render_then_parse_is_identity(ev in event()) {
        let text = ev.render();
        match parse_line(&text, TraceDialect::LinuxStrace, ev.line) {
            LineOutcome::Event(parsed) => prop_assert_eq!(parsed, ev, "{}", text),
            other => prop_assert!(false, "{text} -> {other:?}"),
        }
    }

    #[test]
    fn parsing_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let text = String::from_utf8_lossy(&bytes);
        for dialect in [TraceDialect::LinuxStrace, TraceDialect::MacDtruss] {
            let t = parse_stream(&text, dialect);
            prop_assert_eq!(t.events.len() + t.issues.len() + t.skipped, t.logical_lines);
            let _ = replay(&t, "/");
        }
        let _ = detect_dialect(&text);
    }

    #[test]
    fn line_accounting_on_mangled_traces(seed in 0u64..1000, cut in 0usize..4000, junk in "\\PC{0,40}") {
        let s = generate(&ScenarioConfig::new(seed, 150));
        let mut text = s.log.clone();
        let cut = cut.min(text.len());
        let cut = (0..=cut).rev().find(|i| text.is_char_boundary(*i)).unwrap_or(0);
        text.insert_str(cut, &junk);
        let t = parse_stream(&text, TraceDialect::LinuxStrace);
        prop_assert_eq!(t.events.len() + t.issues.len() + t.skipped, t.logical_lines);
    }

    #[test]
    fn fd_reuse_attributes_to_latest_open(
        a in "/[a-z]{1,8}/a[0-9]{0,3}",
        b in "/[a-z]{1,8}/b[0-9]{0,3}",
        fd_n in 3u32..64,
        n1 in 1i64..10_000,
        n2 in 1i64..10_000,
    ) {
        let pid = ProcessId::new(42).unwrap();
        let ev = |line, call| TraceEvent { pid, call, result: CallResult::Ok(0), line, read_prefix: None };
        let open = |line, path: &str| TraceEvent {
            result: CallResult::Ok(i64::from(fd_n)),
            ..ev(line, CallClass::Open { path: path.into(), flags: OpenFlags::from_symbolic("O_RDONLY"), dir_fd: None })
        };
        let read = |line, n| TraceEvent {
            result: CallResult::Ok(n),
            ..ev(line, CallClass::Read { fd: Fd(fd_n), requested: 65536 })
        };
        let events = vec![
            open(1, &a),
            read(2, n1),
            ev(3, CallClass::Close { fd: Fd(fd_n) }),
            open(4, &b),
            read(5, n2),
        ];
        let log = replay_events(&events, "/");
        prop_assert_eq!(log.resources[&a].bytes_read, n1 as u64);
        prop_assert_eq!(log.resources[&b].bytes_read, n2 as u64);
    }
}

/// No process that ran within `events[..k]` is still waiting for the fork
/// result that created it.
fn quiescent(events: &[TraceEvent], k: usize) -> bool {
    let ran: BTreeSet<ProcessId> = events[..k].iter().map(|e| e.pid).collect();
    events[k..].iter().all(|e| match &e.call {
        CallClass::Fork { child: Some(c), .. } => !ran.contains(c),
        _ => true,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_is_deterministic(seed in any::<u64>()) {
        let s = generate(&ScenarioConfig::new(seed, 300));
        let t = parse_stream(&s.log, TraceDialect::LinuxStrace);
        prop_assert_eq!(replay(&t, "/home/user"), replay(&t, "/home/user"));
    }

    #[test]
    fn appending_events_never_removes_paths(seed in any::<u64>(), frac in 0.0f64..1.0) {
        let s = generate(&ScenarioConfig::new(seed, 300));
        let t = parse_stream(&s.log, TraceDialect::LinuxStrace);
        let mut k = (t.events.len() as f64 * frac) as usize;
        while !quiescent(&t.events, k) {
            k -= 1;
        }
        let prefix = replay_events(&t.events[..k], "/home/user");
        let full = replay_events(&t.events, "/home/user");
        let before: BTreeSet<&String> = prefix.resources.keys().collect();
        let after: BTreeSet<&String> = full.resources.keys().collect();
        prop_assert!(before.is_subset(&after));
    }

    #[test]
    fn resources_trace_back_to_an_event(seed in any::<u64>()) {
        let s = generate(&ScenarioConfig::new(seed, 300));
        let t = parse_stream(&s.log, TraceDialect::LinuxStrace);
        let log = replay(&t, "/home/user");
        for r in log.resources.values().filter(|r| !r.synthetic) {
            let origin = t.events.iter().find(|e| e.line == r.first_line).expect("event at first line");
            prop_assert!(origin.result.is_ok());
            prop_assert!(matches!(
                origin.call,
                CallClass::Open { .. } | CallClass::Exec { .. } | CallClass::Stat { .. }
            ), "{} first seen at {:?}", r.path, origin.call);
        }
    }

    #[test]
    fn missing_accounting_is_total(seed in any::<u64>()) {
        let s = generate(&ScenarioConfig::new(seed, 300));
        let log = replay(&parse_stream(&s.log, TraceDialect::LinuxStrace), "/home/user");
        let m = analyze_missing(&log);
        let enoent = log.failed_opens.iter().filter(|f| f.errno == "ENOENT").count();
        let grouped: usize = m.missing.iter().map(|g| g.attempted_paths.len()).sum();
        prop_assert_eq!(grouped + m.excluded_attempts, enoent);
        for g in &m.missing {
            prop_assert!(!g.attempted_paths.is_empty());
            let suffix = format!("/{}", g.basename);
            prop_assert!(g.attempted_paths.iter().all(|p| p.ends_with(&suffix)));
        }
    }

    #[test]
    fn diff_partition_laws_on_generated_logs(a in any::<u64>(), b in any::<u64>()) {
        let la = replay(&parse_stream(&generate(&ScenarioConfig::new(a, 200)).log, TraceDialect::LinuxStrace), "/");
        let lb = replay(&parse_stream(&generate(&ScenarioConfig::new(b, 200)).log, TraceDialect::LinuxStrace), "/");
        for mask in [AccessMode::READ, AccessMode::TOUCHED, AccessMode::ANY] {
            let d = diff_logs(&la, &lb, mask);
            prop_assert!(d.added.is_disjoint(&d.shared));
            prop_assert!(d.added.is_disjoint(&d.removed));
            prop_assert!(d.shared.is_disjoint(&d.removed));
            prop_assert_eq!(d.target(), resource_set(&lb, mask));
            prop_assert_eq!(d.baseline(), resource_set(&la, mask));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn report_round_trip(seed in any::<u64>()) {
        let r = random_report(seed);
        let text = emit(&r);
        let back = load(&text).expect("loads");
        prop_assert_eq!(&back, &r);
        prop_assert_eq!(emit(&back), text);
    }
}
