use std::io::{self, Write};

use super::BenchReport;

pub const CSV_VERSION: &str = "# hemlock-bench v1";
pub const CSV_COLUMNS: &str =
    "mode,algorithm,policy,threads,run,ops,ops_per_sec,max_waiters_per_cell,max_locks_held,integrity";

pub fn write_csv_header<W: Write>(mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_VERSION}")?;
    writeln!(out, "{CSV_COLUMNS}")
}

/// One row per run, then a `median` row. The median row leaves `ops` and
/// `ops_per_sec` empty when some run failed its checks.
pub fn write_csv<W: Write>(mut out: W, report: &BenchReport) -> io::Result<()> {
    let c = &report.config;
    let prefix = format!("{},{},{},{}", c.mode, c.algorithm, c.policy.name(), c.threads);
    let verdict = |ok: bool| if ok { "ok" } else { "FAILED" };
    for r in &report.runs {
        writeln!(
            out,
            "{prefix},{},{},{:.1},{},{},{}",
            r.run,
            r.ops,
            r.ops_per_sec,
            r.max_waiters_per_cell,
            r.max_locks_held,
            verdict(r.integrity_ok())
        )?;
    }
    let opt = |v: Option<f64>, prec: usize| v.map_or(String::new(), |v| format!("{v:.prec$}"));
    writeln!(
        out,
        "{prefix},median,{},{},{},{},{}",
        opt(report.median_ops, 0),
        opt(report.median_ops_per_sec, 1),
        report.max_waiters_per_cell(),
        report.max_locks_held(),
        verdict(report.integrity_ok())
    )
}
