use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::DataflowGraph;
use crate::oracle::trace::{ExecutionTrace, TraceEvent};
use crate::oracle::{
    check_at_least_once, check_at_most_once, check_exactly_once, check_persistence_trace, racing,
    GuaranteeVerdict, OracleError, DEFAULT_MAX_DUPLICATION,
};
use crate::pipelines::{batch_index_oracle, materialize_index, PipelineKind};
use crate::protocols::GuaranteeMode;
use crate::sim::{run_simulation, FaultProfile, SimConfig, SimResult};

use super::BenchError;

/// Sequence checks enumerate interleavings; past this many inputs only
/// trace-level checks run.
pub const SEQUENCE_CHECK_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRequest {
    pub pipeline: PipelineKind,
    pub mode: GuaranteeMode,
    pub seeds: u64,
    pub profile: String,
    pub inputs: usize,
    /// Simulator settings other than seed, mode and faults.
    pub base: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckTally {
    pub check: String,
    /// A failure of a mandatory check fails the audit.
    pub mandatory: bool,
    pub passed: u64,
    pub failed: u64,
    pub skipped: u64,
    pub failing_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub pipeline: PipelineKind,
    pub mode: GuaranteeMode,
    pub seeds: u64,
    pub profile: String,
    pub checks: Vec<CheckTally>,
}

impl AuditSummary {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| !c.mandatory || c.failed == 0)
    }

    pub fn tally(&self, check: &str) -> Option<&CheckTally> {
        self.checks.iter().find(|c| c.check == check)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Pass,
    Fail,
    Skip,
}

fn verdict(v: Result<GuaranteeVerdict, OracleError>) -> Outcome {
    match v {
        Ok(v) if v.holds => Outcome::Pass,
        Ok(_) => Outcome::Fail,
        Err(_) => Outcome::Skip,
    }
}

fn bool_outcome(ok: bool) -> Outcome {
    if ok {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

/// Every delivered item belongs to an epoch that had committed when the
/// delivery happened. Returns the index of the first offending record.
pub fn check_commit_before_delivery(trace: &ExecutionTrace) -> Result<(), usize> {
    let mut committed = 0;
    for (i, r) in trace.records.iter().enumerate() {
        match &r.event {
            TraceEvent::EpochCommit { last_seq, .. } => committed = committed.max(*last_seq),
            TraceEvent::Deliver { items, .. } if items.iter().any(|it| it.key.producer_seq > committed) => {
                return Err(i);
            }
            _ => {}
        }
    }
    Ok(())
}

/// Which checks apply to a mode, and whether each is mandatory.
fn plan(req: &AuditRequest) -> Vec<(&'static str, bool)> {
    let eo = req.mode.claims_exactly_once();
    let mut checks = vec![
        ("exactly_once", eo),
        ("at_least_once", req.mode == GuaranteeMode::AtLeastOnceNaive || eo),
        // a restart without recovery loses state, so nothing is promised there
        ("at_most_once", eo),
        ("persistence", eo),
    ];
    if req.mode == GuaranteeMode::ExactlyOnceDeterministic {
        checks.push(("golden", true));
    }
    if req.mode == GuaranteeMode::ExactlyOnceTransactional {
        checks.push(("commit_before_delivery", true));
    }
    if req.pipeline == PipelineKind::Index && eo {
        checks.push(("index_replay", true));
    }
    checks
}

struct SeedContext<'a> {
    graph: &'a DataflowGraph,
    inputs: &'a [crate::model::Element],
    golden: &'a [crate::model::Payload],
}

fn check_seed(ctx: &SeedContext, checks: &[(&str, bool)], r: &SimResult) -> Vec<Outcome> {
    let sequence = ctx.inputs.len() <= SEQUENCE_CHECK_LIMIT;
    let observed = r.observed();
    let channels = racing(ctx.inputs);
    checks
        .iter()
        .map(|(name, _)| match *name {
            "exactly_once" if sequence => verdict(check_exactly_once(ctx.graph, &channels, &observed)),
            "at_least_once" if sequence => verdict(check_at_least_once(
                ctx.graph,
                &channels,
                &observed,
                DEFAULT_MAX_DUPLICATION,
            )),
            "at_most_once" if sequence => verdict(check_at_most_once(ctx.graph, &channels, &observed)),
            "persistence" => verdict(check_persistence_trace(&r.trace, ctx.graph)),
            "golden" => bool_outcome(r.delivered_payloads() == ctx.golden),
            "commit_before_delivery" => bool_outcome(check_commit_before_delivery(&r.trace).is_ok()),
            "index_replay" => bool_outcome(
                materialize_index(&r.delivered_payloads()).ok() == Some(batch_index_oracle(ctx.inputs)),
            ),
            _ => Outcome::Skip,
        })
        .collect()
}

/// Runs `seeds` faulty simulations and tallies every applicable check.
/// A run that does not quiesce fails all of its checks.
pub fn audit_guarantees(req: &AuditRequest) -> Result<AuditSummary, BenchError> {
    let graph = req.pipeline.graph();
    let inputs = req.pipeline.inputs(req.inputs, 0);
    let span_ms = inputs.len() as f64 * 1000.0 / req.base.input_rate.max(f64::MIN_POSITIVE);
    let profile = FaultProfile::named(&req.profile, span_ms).map_err(|e| BenchError::Config(e.to_string()))?;
    let base = req.base.clone().with_mode(req.mode);
    base.validate()?;
    let golden = run_simulation(&graph, &inputs, &base.clone().with_faults(Default::default()))?
        .delivered_payloads();
    let checks = plan(req);
    let ctx = SeedContext {
        graph: &graph,
        inputs: &inputs,
        golden: &golden,
    };
    let per_seed: Vec<(u64, Vec<Outcome>)> = (0..req.seeds)
        .into_par_iter()
        .map(|seed| {
            let cfg = base
                .clone()
                .with_seed(seed)
                .with_faults(profile.plan(seed, base.nodes));
            let outcomes = match run_simulation(&graph, &inputs, &cfg) {
                Ok(r) => check_seed(&ctx, &checks, &r),
                Err(_) => vec![Outcome::Fail; checks.len()],
            };
            (seed, outcomes)
        })
        .collect();
    let tallies = checks
        .iter()
        .enumerate()
        .map(|(i, (name, mandatory))| {
            let mut t = CheckTally {
                check: name.to_string(),
                mandatory: *mandatory,
                passed: 0,
                failed: 0,
                skipped: 0,
                failing_seeds: Vec::new(),
            };
            for (seed, outcomes) in &per_seed {
                match outcomes[i] {
                    Outcome::Pass => t.passed += 1,
                    Outcome::Skip => t.skipped += 1,
                    Outcome::Fail => {
                        t.failed += 1;
                        t.failing_seeds.push(*seed);
                    }
                }
            }
            t
        })
        .collect();
    Ok(AuditSummary {
        pipeline: req.pipeline,
        mode: req.mode,
        seeds: req.seeds,
        profile: req.profile.clone(),
        checks: tallies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(mode: GuaranteeMode, seeds: u64, profile: &str) -> AuditRequest {
        AuditRequest {
            pipeline: PipelineKind::Concat,
            mode,
            seeds,
            profile: profile.into(),
            inputs: 5,
            base: SimConfig::default().with_interval(50),
        }
    }

    #[test]
    fn deterministic_concat_passes_everything() {
        let s = audit_guarantees(&request(GuaranteeMode::ExactlyOnceDeterministic, 10, "standard")).unwrap();
        assert!(s.ok(), "{s:#?}");
        assert_eq!(s.tally("exactly_once").unwrap().passed, 10);
        assert_eq!(s.tally("golden").unwrap().passed, 10);
    }

    #[test]
    fn no_guarantee_without_faults_is_vacuous() {
        let s = audit_guarantees(&request(GuaranteeMode::NoGuarantee, 3, "none")).unwrap();
        assert!(s.ok());
        assert!(s.tally("persistence").is_some_and(|t| !t.mandatory));
    }

    #[test]
    fn no_guarantee_has_no_mandatory_checks() {
        let s = audit_guarantees(&request(GuaranteeMode::NoGuarantee, 5, "standard")).unwrap();
        assert!(s.checks.iter().all(|c| !c.mandatory));
        assert!(s.ok());
    }

    #[test]
    fn transactional_never_delivers_early() {
        let s = audit_guarantees(&request(GuaranteeMode::ExactlyOnceTransactional, 5, "standard")).unwrap();
        assert_eq!(s.tally("commit_before_delivery").unwrap().passed, 5);
        assert!(s.ok(), "{s:#?}");
    }

    #[test]
    fn early_delivery_is_caught() {
        let r = run_simulation(
            &PipelineKind::Concat.graph(),
            &PipelineKind::Concat.inputs(3, 0),
            &SimConfig::default(),
        )
        .unwrap();
        // deterministic mode releases behind the frontier, before any commit
        assert!(check_commit_before_delivery(&r.trace).is_err());
    }

    #[test]
    fn unknown_profile_is_a_config_error() {
        let err = audit_guarantees(&request(GuaranteeMode::NoGuarantee, 1, "hail")).unwrap_err();
        assert!(matches!(err, BenchError::Config(_)));
    }
}
