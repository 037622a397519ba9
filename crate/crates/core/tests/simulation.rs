use streamlab::model::{Element, Payload};
use streamlab::oracle::{check_at_least_once, check_exactly_once, check_persistence_trace, racing};
use streamlab::pipelines::{
    batch_index_oracle, concat_pipeline, generate_corpus, inverted_index_pipeline, letter_inputs,
    materialize_index, uppercase_pipeline, ConcatConfig, CorpusSpec,
};
use streamlab::protocols::GuaranteeMode;
use streamlab::sim::{run_simulation, FaultPlan, SimConfig, SimError, SimResult};

fn texts(r: &SimResult) -> Vec<String> {
    r.delivered_payloads()
        .iter()
        .map(|p| p.as_text().unwrap().to_string())
        .collect()
}

fn concat(n: usize, cfg: SimConfig) -> SimResult {
    run_simulation(&concat_pipeline(ConcatConfig::default()), &letter_inputs(n), &cfg).unwrap()
}

fn corpus(n: usize, seed: u64) -> Vec<Element> {
    generate_corpus(&CorpusSpec {
        seed,
        documents: n,
        ..CorpusSpec::default()
    })
}

fn faults(times: &[f64], loss: f64) -> FaultPlan {
    FaultPlan {
        packet_loss_probability: loss,
        ..FaultPlan::failures_at(times, 0)
    }
}

#[test]
fn deterministic_concat_without_faults_delivers_in_order() {
    let r = concat(5, SimConfig::default());
    assert_eq!(texts(&r), ["a", "ab", "bc", "cd", "de"]);
    assert_eq!(r.latencies.len(), 5);
    assert!(r.latency_ms().iter().all(|ms| *ms > 0.0));
}

#[test]
fn empty_input_delivers_nothing() {
    for mode in GuaranteeMode::ALL {
        let r = concat(0, SimConfig::default().with_mode(mode));
        assert!(r.delivered.is_empty(), "{mode:?}");
        assert!(r.latencies.is_empty());
    }
}

#[test]
fn every_mode_quiesces_without_faults() {
    let g = concat_pipeline(ConcatConfig::default());
    let inputs = letter_inputs(5);
    let golden = texts(&concat(5, SimConfig::default()));
    for mode in GuaranteeMode::ALL {
        let cfg = SimConfig::default().with_mode(mode).with_seed(3);
        let r = run_simulation(&g, &inputs, &cfg).unwrap();
        assert_eq!(texts(&r), golden, "{mode:?}");
    }
}

#[test]
fn same_config_same_result() {
    let cfg = SimConfig::default()
        .with_seed(9)
        .with_faults(faults(&[40.0, 90.0], 0.01));
    let a = concat(5, cfg.clone());
    let b = concat(5, cfg);
    assert_eq!(a, b);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn deterministic_recovers_golden_output() {
    let golden = texts(&concat(5, SimConfig::default()));
    for seed in 0..20 {
        let cfg = SimConfig::default()
            .with_seed(seed)
            .with_interval(50)
            .with_faults(faults(&[30.0, 75.0, 110.0], 0.01));
        let r = concat(5, cfg);
        assert_eq!(texts(&r), golden, "seed {seed}");
        assert!(r.failures() > 0);
        let g = concat_pipeline(ConcatConfig::default());
        assert!(check_persistence_trace(&r.trace, &g).unwrap().holds, "seed {seed}");
        assert!(
            check_exactly_once(&g, &racing(&letter_inputs(5)), &r.observed()).unwrap().holds,
            "seed {seed}"
        );
    }
}

#[test]
fn exactly_once_modes_recover_the_index() {
    let g = inverted_index_pipeline();
    let docs = corpus(30, 4);
    let expected = batch_index_oracle(&docs);
    let golden = run_simulation(&g, &docs, &SimConfig::default()).unwrap();
    for mode in [
        GuaranteeMode::ExactlyOnceDeterministic,
        GuaranteeMode::ExactlyOnceTransactional,
        GuaranteeMode::ExactlyOnceStrongProductions,
    ] {
        for seed in 0..4 {
            let cfg = SimConfig::default()
                .with_mode(mode)
                .with_seed(seed)
                .with_interval(200)
                .with_faults(faults(&[150.0, 400.0], 0.01));
            let r = run_simulation(&g, &docs, &cfg).unwrap();
            let payloads = r.delivered_payloads();
            assert_eq!(materialize_index(&payloads).unwrap(), expected, "{mode:?} seed {seed}");
            if mode == GuaranteeMode::ExactlyOnceDeterministic {
                assert_eq!(payloads, golden.delivered_payloads(), "seed {seed}");
            }
            assert!(check_persistence_trace(&r.trace, &g).unwrap().holds, "{mode:?} seed {seed}");
        }
    }
}

#[test]
fn naive_mode_duplicates_after_a_failure() {
    let g = concat_pipeline(ConcatConfig::default());
    let inputs = letter_inputs(5);
    let mut duplicated = false;
    for seed in 0..30 {
        let cfg = SimConfig::default()
            .with_mode(GuaranteeMode::AtLeastOnceNaive)
            .with_seed(seed)
            .with_interval(1000)
            .with_faults(faults(&[70.0], 0.0));
        let r = run_simulation(&g, &inputs, &cfg).unwrap();
        duplicated |= r.delivered_payloads().len() > 5;
        let v = check_at_least_once(&g, &racing(&inputs), &r.observed(), 2).unwrap();
        assert!(v.holds, "seed {seed}: {:?}", texts(&r));
    }
    assert!(duplicated);
}

#[test]
fn uppercase_is_delivered_once_per_input() {
    let inputs = letter_inputs(8);
    for mode in GuaranteeMode::ALL {
        let cfg = SimConfig::default().with_mode(mode).with_faults(faults(&[60.0], 0.0));
        let r = run_simulation(&uppercase_pipeline(), &inputs, &cfg).unwrap();
        let mut got = r.delivered_payloads();
        got.sort();
        got.dedup();
        assert!(got.iter().all(|p| matches!(p, Payload::Text(t) if t.chars().all(|c| c.is_ascii_uppercase()))));
        if mode.claims_exactly_once() {
            assert_eq!(r.delivered_payloads().len(), 8, "{mode:?}");
        }
    }
}

#[test]
fn runaway_run_diverges() {
    let mut cfg = SimConfig::default();
    cfg.max_sim_time = 50;
    let err = run_simulation(&concat_pipeline(ConcatConfig::default()), &letter_inputs(10), &cfg)
        .unwrap_err();
    assert!(matches!(err, SimError::Diverged { .. }), "{err}");
}

#[test]
fn invalid_config_is_rejected() {
    let mut cfg = SimConfig::default();
    cfg.fault_plan.packet_loss_probability = 1.5;
    let err = run_simulation(&concat_pipeline(ConcatConfig::default()), &letter_inputs(2), &cfg)
        .unwrap_err();
    assert!(matches!(err, SimError::InvalidConfig(_)));
}

#[test]
fn result_serializes() {
    let r = concat(3, SimConfig::default().with_faults(faults(&[30.0], 0.0)));
    let json = serde_json::to_string(&r).unwrap();
    let back: SimResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back.delivered, r.delivered);
    assert_eq!(back.events, r.events);
}
