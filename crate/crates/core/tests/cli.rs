use std::process::{Command, Output};

fn hemlock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hemlock"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_two_threads_exits_zero_with_json_report() {
    let o = hemlock(&["verify", "--algo", "hemlock-ctr", "--threads", "2", "--locks", "1", "--iters", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["algorithm"], "hemlock-ctr");
    assert!(report["states_explored"].as_u64().unwrap() > 0);
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
    assert_eq!(report["exhausted"], false);
}

#[test]
fn verify_mutation_reports_replayable_trace() {
    let o = hemlock(&["verify", "--algo", "hemlock-naive", "--iters", "2", "--mutation", "drop-unlock-cas-guard"]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let trace = report["violations"][0]["trace"].as_str().unwrap();
    assert!(trace.split(',').all(|t| t.parse::<usize>().is_ok()));
}

#[test]
fn verify_exhaustion_exits_three() {
    let o = hemlock(&["verify", "--threads", "3", "--max-states", "20"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_nested_leader() {
    let o = hemlock(&["verify", "--algo", "mcs", "--threads", "3", "--locks", "2", "--nested"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["max_waiters_per_cell"], 1);
}

#[test]
fn space_reports_word_counts() {
    let o = hemlock(&["space"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let row = |family: &str| -> Vec<String> {
        out.lines()
            .find(|l| l.starts_with(family))
            .unwrap()
            .split_whitespace()
            .map(str::to_owned)
            .collect()
    };
    assert_eq!(row("hemlock")[1], "1");
    assert_eq!(row("ticket")[1], "2");
    assert!(out.contains("space: ok"));
}

#[test]
fn bench_single_thread_emits_one_run_row() {
    let o = hemlock(&["bench", "--mode", "max-contention", "--algo", "ticket", "--threads", "1", "--runs", "1", "--duration", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lines: Vec<_> = out.lines().collect();
    assert_eq!(lines[0], "# hemlock-bench v1");
    assert_eq!(
        lines[1],
        "mode,algorithm,policy,threads,run,ops,ops_per_sec,max_waiters_per_cell,max_locks_held,integrity"
    );
    let runs: Vec<_> = lines[2..].iter().filter(|l| !l.contains(",median,")).collect();
    assert_eq!(runs.len(), 1);
    let cols: Vec<_> = runs[0].split(',').collect();
    assert_eq!(cols.len(), 10);
    assert_eq!(&cols[..5], ["max-contention", "ticket", "ctr-cas", "1", "0"]);
    assert!(cols[5].parse::<u64>().unwrap() > 0);
    assert_eq!(cols[9], "ok");
}

#[test]
fn bench_writes_csv_file_and_doorstep_dump() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let dump = dir.path().join("log.txt");
    let o = hemlock(&[
        "bench",
        "--mode",
        "moderate",
        "--algo",
        "hemlock-oho1,clh",
        "--threads",
        "2",
        "--iters",
        "500",
        "--runs",
        "3",
        "--csv",
        csv.to_str().unwrap(),
        "--dump-log",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let written = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(written, stdout(&o));
    // Two configurations, three runs plus a median each.
    assert_eq!(written.lines().count(), 2 + 2 * 4);
    let records = std::fs::read_to_string(&dump).unwrap();
    // 2 algorithms x 3 runs x 2 threads x 500 acquisitions.
    assert_eq!(records.lines().count(), 6000);
    assert!(records.lines().all(|l| l.split(',').count() == 5));
}

#[test]
fn stress_subcommand_checks_everything() {
    let o = hemlock(&["stress", "--algo", "hemlock-overlap,ticket", "--threads", "3", "--iters", "2000", "--locks", "3", "--subset-max", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().filter(|l| l.starts_with("stress,")).all(|l| l.ends_with(",ok")));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["bench", "--threads", "x"][..],
        &["bench", "--mode", "sideways"],
        &["bench", "--runs", "4", "--iters", "1"],
        &["bench", "--mode", "ring", "--threads", "1", "--iters", "1", "--runs", "1"],
        &["verify", "--threads", "9"],
        &["verify", "--algo", "clh", "--mutation", "drop-clearing-store"],
        &["frobnicate"],
    ] {
        let o = hemlock(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}
