use std::collections::BTreeMap;

use ritrace_core::scenario::{
    generate, generate_pair, ExpectedFailure, ExpectedProcess, ExpectedResource, ScenarioConfig,
};
use ritrace_core::{diff_logs, parse_stream, replay, AccessMode, TraceDialect};

fn check(seed: u64, events: usize) {
    let s = generate(&ScenarioConfig::new(seed, events));
    let trace = parse_stream(&s.log, TraceDialect::LinuxStrace);
    assert!(
        trace.issues.is_empty(),
        "seed {seed}: {:?}",
        &trace.issues[..1]
    );
    assert_eq!(trace.events.len(), s.manifest.events, "seed {seed}");
    let log = replay(&trace, &s.manifest.config.initial_cwd);

    let got: Vec<ExpectedResource> = log
        .resources
        .values()
        .map(|r| ExpectedResource {
            path: r.path.clone(),
            mode: r.mode,
            pids: r.pids.clone(),
            bytes_read: r.bytes_read,
            bytes_written: r.bytes_written,
            first_line: r.first_line,
            sniffed_prefix: r.sniffed_prefix.clone(),
            synthetic: r.synthetic,
        })
        .collect();
    let want: BTreeMap<_, _> = s.manifest.resources.iter().map(|r| (&r.path, r)).collect();
    for r in &got {
        assert_eq!(Some(&r), want.get(&r.path), "seed {seed}: {}", r.path);
    }
    assert_eq!(got, s.manifest.resources, "seed {seed}");

    let failed: Vec<ExpectedFailure> = log
        .failed_opens
        .iter()
        .map(|f| ExpectedFailure {
            path: f.path.clone(),
            errno: f.errno.clone(),
            pid: f.pid,
            line: f.line,
        })
        .collect();
    assert_eq!(failed, s.manifest.failed_opens, "seed {seed}");

    let mut procs: Vec<ExpectedProcess> = log
        .processes
        .iter()
        .map(|p| ExpectedProcess {
            pid: p.pid,
            parent: p.parent,
            program: p.program.clone(),
            argv: p.argv.clone(),
        })
        .collect();
    procs.sort_by_key(|p| p.pid);
    assert_eq!(procs, s.manifest.processes, "seed {seed}");
}

#[test]
fn replay_matches_manifest() {
    for seed in 0..40 {
        check(seed, 1000);
    }
}

#[test]
fn short_and_long_runs() {
    check(1234, 10);
    check(99, 5000);
}

#[test]
fn injected_paths_are_the_delta() {
    let inject = vec![
        "/opt/Adobe/Reader9/Resource/Font/ZX______.PFB".to_string(),
        "/home/user/docs/figure 1.png".to_string(),
    ];
    for seed in 0..10 {
        let (base, target) = generate_pair(seed, 500, &inject);
        let b = replay(
            &parse_stream(&base.log, TraceDialect::LinuxStrace),
            "/home/user",
        );
        let t = replay(
            &parse_stream(&target.log, TraceDialect::LinuxStrace),
            "/home/user",
        );
        let d = diff_logs(&b, &t, AccessMode::READ);
        assert_eq!(d.added, inject.iter().cloned().collect(), "seed {seed}");
        assert!(d.removed.is_empty());
    }
}
