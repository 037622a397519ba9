use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use streamlab::bench::{
    append_results_csv, audit_guarantees, run_experiment, sweep, AuditRequest, BenchError, ExperimentConfig,
    ExperimentReport,
};
use streamlab::pipelines::PipelineKind;
use streamlab::protocols::GuaranteeMode;

#[derive(Parser)]
#[command(name = "streamlab", version, about = "Seeded stream-processing delivery-guarantee laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults apply to anything left out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pipeline: Option<PipelineKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; STREAMLAB_OUT takes precedence.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// One simulation: writes report.json, appends to results.csv and, with --trace, writes trace.jsonl.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<GuaranteeMode>,
        /// Checkpoint interval in sim-ms.
        #[arg(long)]
        interval: Option<u64>,
        /// Fault profile: none, loss, single or standard.
        #[arg(long)]
        faults: Option<String>,
        #[arg(long)]
        trace: bool,
    },
    /// Every combination of modes and checkpoint intervals.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "50,500,1000")]
        intervals: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "deterministic,transactional")]
        modes: Vec<GuaranteeMode>,
    },
    /// Faulty runs over many seeds, checked against the reference oracle.
    Audit {
        #[arg(long, default_value = "concat")]
        pipeline: PipelineKind,
        #[arg(long, default_value = "deterministic")]
        mode: GuaranteeMode,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value = "standard")]
        faults: String,
        #[arg(long, default_value_t = 5)]
        inputs: usize,
        #[arg(long, default_value_t = 50)]
        interval: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn out_dir(flag: &Path) -> Result<PathBuf, BenchError> {
    let dir = std::env::var_os("STREAMLAB_OUT").map_or_else(|| flag.to_path_buf(), PathBuf::from);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load(common: &Common) -> Result<ExperimentConfig, BenchError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = common.pipeline {
        cfg.pipeline = p;
    }
    if let Some(s) = common.seed {
        cfg.sim.seed = s;
    }
    Ok(cfg)
}

fn write_reports(dir: &Path, reports: &[ExperimentReport]) -> Result<(), BenchError> {
    let json = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])?
    } else {
        serde_json::to_string_pretty(reports)?
    };
    std::fs::write(dir.join("report.json"), json + "\n")?;
    let rows: Vec<_> = reports.iter().map(ExperimentReport::row).collect();
    append_results_csv(&dir.join("results.csv"), &rows)?;
    Ok(())
}

fn print_rows(reports: &[ExperimentReport]) {
    println!("{:<20} {:>8} {:>10} {:>10} {:>10} {:>10} {:>4}", "mode", "interval", "p50", "p75", "p95", "p99", "rec");
    for r in reports {
        let p = |f: fn(&streamlab::bench::Percentiles) -> f64| {
            r.percentiles.as_ref().map_or("-".to_string(), |p| format!("{:.3}", f(p)))
        };
        println!(
            "{:<20} {:>8} {:>10} {:>10} {:>10} {:>10} {:>4}",
            r.mode.short_name(),
            r.checkpoint_interval_ms,
            p(|p| p.p50),
            p(|p| p.p75),
            p(|p| p.p95),
            p(|p| p.p99),
            r.recoveries.len()
        );
    }
}

fn execute(cli: Cli) -> Result<bool, BenchError> {
    match cli.command {
        Command::Run {
            common,
            mode,
            interval,
            faults,
            trace,
        } => {
            let mut cfg = load(&common)?;
            if let Some(m) = mode {
                cfg.sim.mode = m;
            }
            if let Some(i) = interval {
                cfg.sim.checkpoint_interval = i;
            }
            if faults.is_some() {
                cfg.fault_profile = faults;
            }
            cfg.sim.record_trace |= trace;
            let (report, result) = run_experiment(&cfg)?;
            let dir = out_dir(&common.out)?;
            write_reports(&dir, std::slice::from_ref(&report))?;
            if trace {
                std::fs::write(dir.join("trace.jsonl"), result.trace.to_jsonl())?;
            }
            print_rows(std::slice::from_ref(&report));
            Ok(true)
        }
        Command::Sweep {
            common,
            intervals,
            modes,
        } => {
            let cfg = load(&common)?;
            let reports = sweep(&cfg, &intervals, &modes)?;
            write_reports(&out_dir(&common.out)?, &reports)?;
            print_rows(&reports);
            Ok(true)
        }
        Command::Audit {
            pipeline,
            mode,
            seeds,
            faults,
            inputs,
            interval,
            out,
        } => {
            let req = AuditRequest {
                pipeline,
                mode,
                seeds,
                profile: faults,
                inputs,
                base: ExperimentConfig::default().sim.with_interval(interval),
            };
            let summary = audit_guarantees(&req)?;
            let dir = out_dir(&out)?;
            std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
            for c in &summary.checks {
                let tag = if !c.mandatory {
                    "info"
                } else if c.failed == 0 {
                    "PASS"
                } else {
                    "FAIL"
                };
                println!(
                    "{tag:<4} {:<24} passed {:>4} failed {:>4} skipped {:>4}{}",
                    c.check,
                    c.passed,
                    c.failed,
                    c.skipped,
                    if c.failing_seeds.is_empty() {
                        String::new()
                    } else {
                        format!("  seeds {:?}", c.failing_seeds)
                    }
                );
            }
            Ok(summary.ok())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("streamlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
