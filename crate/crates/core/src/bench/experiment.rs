use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::Element;
use crate::pipelines::{read_corpus, PipelineKind};
use crate::protocols::GuaranteeMode;
use crate::sim::{run_simulation, FaultProfile, SimConfig, SimResult};

use super::percentile::{latency_report, Percentiles};
use super::BenchError;

pub const CSV_HEADER_COMMENT: &str = "# streamlab results v1";

fn default_pipeline() -> PipelineKind {
    PipelineKind::Index
}
fn default_inputs() -> usize {
    50
}

/// One experiment as read from a JSON config file. Simulator settings sit
/// at the top level next to the workload fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_pipeline")]
    pub pipeline: PipelineKind,
    /// Number of generated inputs; ignored when `corpus` is given.
    #[serde(default = "default_inputs")]
    pub inputs: usize,
    /// Seed of the generated corpus, kept apart from the run seed so that
    /// runs with different seeds see the same documents.
    #[serde(default)]
    pub corpus_seed: u64,
    /// JSON-lines corpus file used instead of a generated one.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    /// Named fault profile; replaces `fault_plan` with a plan drawn from the seed.
    #[serde(default)]
    pub fault_profile: Option<String>,
    #[serde(flatten)]
    pub sim: SimConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
    }

    pub fn load_inputs(&self) -> Result<Vec<Element>, BenchError> {
        match &self.corpus {
            Some(path) => Ok(read_corpus(path)?),
            None => Ok(self.pipeline.inputs(self.inputs, self.corpus_seed)),
        }
    }

    /// The simulator config with the fault profile, if any, expanded.
    pub fn sim_config(&self, inputs: usize) -> Result<SimConfig, BenchError> {
        let mut cfg = self.sim.clone();
        if let Some(name) = &self.fault_profile {
            let span_ms = inputs as f64 * 1000.0 / cfg.input_rate.max(f64::MIN_POSITIVE);
            let profile = FaultProfile::named(name, span_ms).map_err(|e| BenchError::Config(e.to_string()))?;
            cfg.fault_plan = profile.plan(cfg.seed, cfg.nodes);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub time_ms: f64,
    pub generation: u64,
    pub from_seq: u64,
    pub replayed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub pipeline: PipelineKind,
    pub mode: GuaranteeMode,
    pub checkpoint_interval_ms: u64,
    pub seed: u64,
    pub inputs: usize,
    pub outputs: usize,
    pub failures: usize,
    pub end_time_ms: f64,
    pub percentiles: Option<Percentiles>,
    pub recoveries: Vec<RecoveryReport>,
}

impl ExperimentReport {
    pub fn from_result(pipeline: PipelineKind, cfg: &SimConfig, r: &SimResult) -> Self {
        let recoveries = r
            .events
            .iter()
            .filter_map(|e| match e.kind {
                crate::sim::SimEventKind::Recovery {
                    generation,
                    from_seq,
                    replayed,
                } => Some(RecoveryReport {
                    time_ms: e.time_us as f64 / 1000.0,
                    generation,
                    from_seq,
                    replayed,
                }),
                _ => None,
            })
            .collect();
        ExperimentReport {
            pipeline,
            mode: r.mode,
            checkpoint_interval_ms: cfg.checkpoint_interval,
            seed: r.seed,
            inputs: r.inputs as usize,
            outputs: r.delivered_items().len(),
            failures: r.failures(),
            end_time_ms: r.end_time_us as f64 / 1000.0,
            percentiles: latency_report(&r.latency_ms()),
            recoveries,
        }
    }

    pub fn row(&self) -> ResultRow {
        let p = self.percentiles;
        ResultRow {
            mode: self.mode.short_name().to_string(),
            interval_ms: self.checkpoint_interval_ms,
            seed: self.seed,
            p50: p.map(|p| p.p50),
            p75: p.map(|p| p.p75),
            p95: p.map(|p| p.p95),
            p99: p.map(|p| p.p99),
            recoveries: self.recoveries.len(),
            inputs: self.inputs,
            outputs: self.outputs,
        }
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mode: String,
    pub interval_ms: u64,
    pub seed: u64,
    pub p50: Option<f64>,
    pub p75: Option<f64>,
    pub p95: Option<f64>,
    pub p99: Option<f64>,
    pub recoveries: usize,
    pub inputs: usize,
    pub outputs: usize,
}

/// Renders rows under the versioned header comment.
pub fn results_csv(rows: &[ResultRow]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["mode", "interval_ms", "seed", "p50", "p75", "p95", "p99", "recoveries", "inputs", "outputs"])?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8");
    Ok(format!("{CSV_HEADER_COMMENT}\n{body}"))
}

/// Appends `rows` to the results file at `path`, writing the header only when
/// the file is new or empty.
pub fn append_results_csv(path: &Path, rows: &[ResultRow]) -> Result<(), BenchError> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    if fresh {
        std::fs::write(path, results_csv(rows)?)?;
        return Ok(());
    }
    let file = std::fs::OpenOptions::new().append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses what [`results_csv`] wrote.
pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>, BenchError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, SimResult), BenchError> {
    let inputs = cfg.load_inputs()?;
    let sim = cfg.sim_config(inputs.len())?;
    let result = run_simulation(&cfg.pipeline.graph(), &inputs, &sim)?;
    Ok((ExperimentReport::from_result(cfg.pipeline, &sim, &result), result))
}

/// Runs every (mode, interval) pair of the base config. Reports come back
/// sorted by mode, then interval, whatever order the workers finish in.
pub fn sweep(
    base: &ExperimentConfig,
    intervals: &[u64],
    modes: &[GuaranteeMode],
) -> Result<Vec<ExperimentReport>, BenchError> {
    let inputs = base.load_inputs()?;
    let graph = base.pipeline.graph();
    let jobs: Vec<(GuaranteeMode, u64)> = modes
        .iter()
        .flat_map(|&m| intervals.iter().map(move |&i| (m, i)))
        .collect();
    let mut reports = jobs
        .par_iter()
        .map(|&(mode, interval)| {
            let mut cfg = base.clone();
            cfg.sim = cfg.sim.with_mode(mode).with_interval(interval);
            let sim = cfg.sim_config(inputs.len())?;
            let result = run_simulation(&graph, &inputs, &sim)?;
            Ok(ExperimentReport::from_result(base.pipeline, &sim, &result))
        })
        .collect::<Result<Vec<_>, BenchError>>()?;
    reports.sort_by_key(|r| (r.mode, r.checkpoint_interval_ms, r.seed));
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(pipeline: PipelineKind, inputs: usize) -> ExperimentConfig {
        ExperimentConfig {
            pipeline,
            inputs,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn appending_keeps_one_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let (a, _) = run_experiment(&small(PipelineKind::Concat, 3)).unwrap();
        append_results_csv(&path, &[a.row()]).unwrap();
        append_results_csv(&path, &[a.row()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches(CSV_HEADER_COMMENT).count(), 1);
        assert_eq!(parse_results_csv(&text).unwrap(), vec![a.row(), a.row()]);
    }

    #[test]
    fn index_smoke_run_has_percentiles() {
        let mut cfg = small(PipelineKind::Index, 20);
        cfg.sim = cfg.sim.with_seed(7).with_interval(1000);
        let (report, _) = run_experiment(&cfg).unwrap();
        let p = report.percentiles.unwrap();
        assert!(p.p50 > 0.0 && p.p50 <= p.p75 && p.p75 <= p.p95 && p.p95 <= p.p99);
        assert_eq!(report.inputs, 20);
        assert!(report.outputs > 20);
    }

    #[test]
    fn zero_inputs_give_empty_percentiles() {
        let (report, _) = run_experiment(&small(PipelineKind::Concat, 0)).unwrap();
        assert!(report.percentiles.is_none());
        let csv = results_csv(&[report.row()]).unwrap();
        assert!(csv.lines().nth(2).unwrap().starts_with("deterministic,1000,0,,,,,0,0,0"));
    }

    #[test]
    fn sweep_gives_one_row_per_mode_and_interval() {
        let modes = [GuaranteeMode::ExactlyOnceTransactional, GuaranteeMode::ExactlyOnceDeterministic];
        let reports = sweep(&small(PipelineKind::Concat, 10), &[1000, 50, 500], &modes).unwrap();
        let keys: Vec<(GuaranteeMode, u64)> =
            reports.iter().map(|r| (r.mode, r.checkpoint_interval_ms)).collect();
        assert_eq!(
            keys,
            vec![
                (GuaranteeMode::ExactlyOnceDeterministic, 50),
                (GuaranteeMode::ExactlyOnceDeterministic, 500),
                (GuaranteeMode::ExactlyOnceDeterministic, 1000),
                (GuaranteeMode::ExactlyOnceTransactional, 50),
                (GuaranteeMode::ExactlyOnceTransactional, 500),
                (GuaranteeMode::ExactlyOnceTransactional, 1000),
            ]
        );
    }

    #[test]
    fn csv_round_trips_under_its_header() {
        let reports = sweep(&small(PipelineKind::Concat, 5), &[50], &[GuaranteeMode::AtLeastOnceNaive]).unwrap();
        let rows: Vec<ResultRow> = reports.iter().map(ExperimentReport::row).collect();
        let text = results_csv(&rows).unwrap();
        assert!(text.starts_with("# streamlab results v1\nmode,interval_ms,seed,p50,p75,p95,p99,recoveries,inputs,outputs\n"));
        assert_eq!(parse_results_csv(&text).unwrap(), rows);
    }

    #[test]
    fn config_files_accept_flat_simulator_fields() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"pipeline": "concat", "inputs": 5, "seed": 3, "checkpoint_interval": 50,
                "mode": "ExactlyOnceTransactional", "fault_profile": "single"}"#,
        )
        .unwrap();
        assert_eq!(cfg.sim.seed, 3);
        assert_eq!(cfg.sim.checkpoint_interval, 50);
        let sim = cfg.sim_config(5).unwrap();
        assert_eq!(sim.fault_plan.node_failures.len(), 1);
        let bad = ExperimentConfig {
            fault_profile: Some("meteor".into()),
            ..cfg
        };
        assert!(matches!(bad.sim_config(5), Err(BenchError::Config(_))));
    }
}
