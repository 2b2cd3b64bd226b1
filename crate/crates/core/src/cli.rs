//! Command-line driver behind the `hemlock` binary.
//!
//! Exit codes: 0 success, 1 property violation or failed run, 2 usage
//! error, 3 verifier state budget exhausted.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::bench::{self, BenchConfig, Length, Mode};
use crate::instrumentation::write_doorstep_log;
use crate::locks::{space_usage, LockAlgorithm, WaitPolicy, CELL_ALIGN};
use crate::verifier::{self, ModelConfig, Mutation, DEFAULT_MAX_STATES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_EXHAUSTED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hemlock", version, about = "Hemlock locks: benchmarks, model checking and layout checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a benchmark and print CSV.
    Bench(BenchArgs),
    /// Exhaustively explore all interleavings of a small configuration.
    Verify(VerifyArgs),
    /// Audited multi-lock stress run.
    Stress(StressArgs),
    /// Print lock and per-thread sizes and check the word counts.
    Space,
}

#[derive(Debug, Args)]
pub struct CommonRun {
    /// Lock algorithms, comma separated.
    #[arg(long = "algo", value_delimiter = ',', default_value = "hemlock-ctr")]
    pub algorithms: Vec<LockAlgorithm>,
    /// Wait policy for Hemlock algorithms [default: naive-load for
    /// hemlock-naive, ctr-cas otherwise].
    #[arg(long)]
    pub policy: Option<WaitPolicy>,
    /// Thread counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub threads: Vec<usize>,
    /// Fixed operations per thread instead of a timed run.
    #[arg(long)]
    pub iters: Option<u64>,
    /// Seconds per timed run.
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    /// Repetitions per configuration; must be odd.
    #[arg(long, default_value_t = 7)]
    pub runs: usize,
    /// PRNG seed.
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Bind worker i to CPU i.
    #[arg(long)]
    pub pin: bool,
    /// Also write the CSV to this file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write every doorstep record as `lock,doorstep_seq,entry_seq,thread,doorstep_end`.
    #[arg(long)]
    pub dump_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "max-contention")]
    pub mode: Mode,
    #[command(flatten)]
    pub common: CommonRun,
    /// PRNG steps inside the critical section (moderate).
    #[arg(long, default_value_t = 5)]
    pub cs_steps: u32,
    /// Upper bound (exclusive) on non-critical work (moderate).
    #[arg(long, default_value_t = 400)]
    pub ncs_max: u32,
    /// Number of locks (multiwait, stress).
    #[arg(long, default_value_t = 10)]
    pub locks: usize,
    /// Largest subset of locks held at once (stress).
    #[arg(long, default_value_t = 2)]
    pub subset_max: usize,
    /// Audit FIFO admission order.
    #[arg(long)]
    pub audit_fifo: bool,
}

#[derive(Debug, Args)]
pub struct StressArgs {
    #[arg(long = "algo", value_delimiter = ',', default_value = "hemlock-ctr")]
    pub algorithms: Vec<LockAlgorithm>,
    #[arg(long)]
    pub policy: Option<WaitPolicy>,
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub threads: Vec<usize>,
    /// Lock-set acquisitions per thread.
    #[arg(long, default_value_t = 10_000)]
    pub iters: u64,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[arg(long, default_value_t = 4)]
    pub locks: usize,
    #[arg(long, default_value_t = 2)]
    pub subset_max: usize,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    #[arg(long)]
    pub pin: bool,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub dump_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long = "algo", default_value = "hemlock-ctr")]
    pub algorithm: LockAlgorithm,
    #[arg(long)]
    pub policy: Option<WaitPolicy>,
    #[arg(long, default_value_t = 2)]
    pub threads: usize,
    #[arg(long, default_value_t = 1)]
    pub locks: usize,
    /// Acquire/release iterations per thread.
    #[arg(long, default_value_t = 1)]
    pub iters: usize,
    /// Thread 0 takes every lock nested; the others take one lock each.
    #[arg(long)]
    pub nested: bool,
    /// Break the encoding on purpose: drop-clearing-store or drop-unlock-cas-guard.
    #[arg(long)]
    pub mutation: Option<Mutation>,
    #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
    pub max_states: usize,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Bench(a) => bench_cmd(a, out, err),
        Command::Stress(a) => stress_cmd(a, out, err),
        Command::Verify(a) => verify_cmd(a, out, err),
        Command::Space => space_cmd(out),
    };
    result.unwrap_or_else(|e| {
        let _ = writeln!(err, "error: {e}");
        EXIT_USAGE
    })
}

/// Entry point for the binary.
pub fn main_from_env() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

type CmdResult = Result<i32, Box<dyn std::error::Error>>;

struct Sinks {
    csv: Option<BufWriter<File>>,
    dump: Option<BufWriter<File>>,
}

impl Sinks {
    fn open(csv: &Option<PathBuf>, dump: &Option<PathBuf>) -> io::Result<Self> {
        let open = |p: &Option<PathBuf>| p.as_ref().map(File::create).transpose().map(|f| f.map(BufWriter::new));
        Ok(Self {
            csv: open(csv)?,
            dump: open(dump)?,
        })
    }
}

fn run_configs(configs: Vec<BenchConfig>, sinks: &mut Sinks, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    for c in &configs {
        c.validate()?;
    }
    bench::write_csv_header(&mut *out)?;
    if let Some(f) = sinks.csv.as_mut() {
        bench::write_csv_header(&mut *f)?;
    }
    let mut ok = true;
    for cfg in configs {
        let report = bench::run(&cfg)?;
        bench::write_csv(&mut *out, &report)?;
        if let Some(f) = sinks.csv.as_mut() {
            bench::write_csv(&mut *f, &report)?;
        }
        for r in &report.runs {
            for f in &r.failures {
                writeln!(err, "FAILED {} {} T={} run {}: {f}", cfg.mode, cfg.algorithm, cfg.threads, r.run)?;
            }
            if let Some(d) = sinks.dump.as_mut() {
                write_doorstep_log(&mut *d, &r.doorsteps)?;
            }
        }
        ok &= report.integrity_ok();
    }
    if let Some(f) = sinks.csv.as_mut() {
        f.flush()?;
    }
    if let Some(d) = sinks.dump.as_mut() {
        d.flush()?;
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAILED })
}

fn bench_cmd(a: BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let c = &a.common;
    if !(c.duration >= 0.0 && c.duration.is_finite()) {
        return Err(format!("invalid duration {}", c.duration).into());
    }
    let mut configs = Vec::new();
    for &algo in &c.algorithms {
        for &threads in &c.threads {
            let mut cfg = BenchConfig::new(a.mode, algo, threads);
            cfg.policy = c.policy.unwrap_or(algo.default_policy());
            cfg.length = match c.iters {
                Some(k) => Length::Iterations(k),
                None => Length::Timed(Duration::from_secs_f64(c.duration)),
            };
            cfg.runs = c.runs;
            cfg.cs_steps = a.cs_steps;
            cfg.ncs_max = a.ncs_max;
            if matches!(a.mode, Mode::Multiwait | Mode::Stress) {
                cfg.num_locks = a.locks;
            }
            cfg.subset_max = a.subset_max;
            cfg.seed = c.seed;
            cfg.pin = c.pin;
            cfg.audit_fifo |= a.audit_fifo || c.dump_log.is_some();
            cfg.keep_doorsteps = c.dump_log.is_some();
            configs.push(cfg);
        }
    }
    let mut sinks = Sinks::open(&c.csv, &c.dump_log)?;
    run_configs(configs, &mut sinks, out, err)
}

fn stress_cmd(a: StressArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let mut configs = Vec::new();
    for &algo in &a.algorithms {
        for &threads in &a.threads {
            let mut cfg = BenchConfig::new(Mode::Stress, algo, threads)
                .iterations(a.iters)
                .runs(a.runs)
                .locks(a.locks)
                .subset_max(a.subset_max)
                .seed(a.seed);
            cfg.policy = a.policy.unwrap_or(algo.default_policy());
            cfg.pin = a.pin;
            cfg.keep_doorsteps = a.dump_log.is_some();
            configs.push(cfg);
        }
    }
    let mut sinks = Sinks::open(&a.csv, &a.dump_log)?;
    run_configs(configs, &mut sinks, out, err)
}

fn verify_cmd(a: VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let mut cfg = if a.nested {
        ModelConfig::leader_nested(a.algorithm, a.threads, a.locks)
    } else {
        ModelConfig::uniform(a.algorithm, a.threads, a.locks, a.iters)
    };
    if let Some(p) = a.policy {
        cfg = cfg.with_policy(p);
    }
    if let Some(m) = a.mutation {
        cfg = cfg.with_mutation(m);
    }
    cfg = cfg.with_max_states(a.max_states);
    let report = verifier::verify(&cfg)?;
    writeln!(out, "{}", report.to_json())?;
    for v in &report.violations {
        writeln!(err, "violation: {} ({} times), trace {}", v.property, v.occurrences, v.trace)?;
    }
    Ok(if report.exhausted {
        writeln!(err, "state budget of {} exhausted", a.max_states)?;
        EXIT_EXHAUSTED
    } else if report.violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

fn space_cmd(out: &mut dyn Write) -> CmdResult {
    writeln!(
        out,
        "{:<8} {:>10} {:>10} {:>12} {:>14} {:>13} {:>15} {:>5}",
        "family", "lock_words", "lock_bytes", "thread_words", "thread_padded", "element_words", "element_padded", "init"
    )?;
    let rows = space_usage();
    for r in &rows {
        writeln!(
            out,
            "{:<8} {:>10} {:>10} {:>12} {:>14} {:>13} {:>15} {:>5}",
            r.family,
            r.lock_words,
            r.lock_bytes,
            r.thread_words,
            r.thread_bytes_padded,
            r.element_words,
            r.element_bytes_padded,
            r.initial_elements
        )?;
    }
    let expected = [("hemlock", 1, 1, 0), ("mcs", 2, 0, 0), ("clh", 2, 0, 1), ("ticket", 2, 0, 0)];
    let mut ok = rows[0].thread_bytes_padded == CELL_ALIGN;
    for (r, (family, lock, thread, init)) in rows.iter().zip(expected) {
        let good = r.family == family && r.lock_words == lock && r.thread_words == thread && r.initial_elements == init;
        if !good {
            writeln!(out, "MISMATCH {family}: expected lock {lock} words, thread {thread} words, {init} initial elements")?;
        }
        ok &= good;
    }
    writeln!(out, "{}", if ok { "space: ok" } else { "space: FAILED" })?;
    Ok(if ok { EXIT_OK } else { EXIT_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("hemlock").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(call(&["bench", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(call(&["verify", "--algo", "spinlock"]).0, EXIT_USAGE);
        assert_eq!(call(&["bench", "--runs", "2", "--iters", "1"]).0, EXIT_USAGE);
        assert_eq!(call(&[]).0, EXIT_USAGE);
    }

    #[test]
    fn space_reports_word_counts() {
        let (code, out, _) = call(&["space"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("space: ok"));
    }

    #[test]
    fn verify_exit_codes() {
        assert_eq!(call(&["verify", "--algo", "hemlock-ctr", "--threads", "2"]).0, EXIT_OK);
        let (code, _, err) = call(&["verify", "--mutation", "drop-clearing-store", "--iters", "2"]);
        assert_eq!(code, EXIT_FAILED);
        assert!(err.contains("violation"));
        assert_eq!(call(&["verify", "--threads", "3", "--max-states", "10"]).0, EXIT_EXHAUSTED);
    }
}
