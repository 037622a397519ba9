use crate::model::DataflowGraph;

use super::search::{
    enumerate_with_limits, guided_search, replay_and_complete, GuideOptions, GuideOutcome, Machine,
    SearchLimits,
};
use super::{Channels, GuaranteeVerdict, Observed, OracleError, Witness};

pub const DEFAULT_MAX_DUPLICATION: usize = 2;

/// Holds iff `observed` is a prefix of some failure-free run over exactly
/// the given inputs. Snapshot observations must name a state the task held
/// at or before that point.
pub fn check_exactly_once(
    graph: &DataflowGraph,
    channels: &Channels,
    observed: &[Observed],
) -> Result<GuaranteeVerdict, OracleError> {
    let mut m = Machine::new(graph, channels.clone(), observed, SearchLimits::default())?;
    match guided_search(&mut m, observed, GuideOptions::default())? {
        GuideOutcome::Found(path) => {
            let (run, _) = replay_and_complete(&mut m, &path, true)?;
            Ok(GuaranteeVerdict::pass(Witness::Run(run)))
        }
        GuideOutcome::NotFound(at) => Ok(GuaranteeVerdict::fail(
            at,
            "no failure-free run over the inputs continues the observation here",
        )),
    }
}

/// Holds iff `observed` is a run prefix over some multiset containing every
/// input up to `1 + max_duplication` times. Transforms may read states back
/// from observed snapshots, as a recovery does.
pub fn check_at_least_once(
    graph: &DataflowGraph,
    channels: &Channels,
    observed: &[Observed],
    max_duplication: usize,
) -> Result<GuaranteeVerdict, OracleError> {
    let mut widened = channels.clone();
    for e in channels.iter().flatten() {
        for _ in 0..max_duplication {
            widened.push(vec![e.clone()]);
        }
    }
    let limits = SearchLimits {
        max_inputs: SearchLimits::default().max_inputs * (1 + max_duplication),
        ..SearchLimits::default()
    };
    let mut m = Machine::new(graph, widened, observed, limits)?;
    let opts = GuideOptions {
        allow_drop: false,
        allow_restore: true,
    };
    match guided_search(&mut m, observed, opts)? {
        GuideOutcome::Found(path) => {
            let (_, mut consumed) = replay_and_complete(&mut m, &path, false)?;
            consumed.sort_unstable();
            Ok(GuaranteeVerdict::pass(Witness::InputMultiset(consumed)))
        }
        GuideOutcome::NotFound(at) => Ok(GuaranteeVerdict::fail(
            at,
            format!("no run over inputs duplicated up to {max_duplication} times matches"),
        )),
    }
}

/// Holds iff `observed` is a run prefix over some subset of the inputs;
/// a dropped input never enters the system.
pub fn check_at_most_once(
    graph: &DataflowGraph,
    channels: &Channels,
    observed: &[Observed],
) -> Result<GuaranteeVerdict, OracleError> {
    let mut m = Machine::new(graph, channels.clone(), observed, SearchLimits::default())?;
    let opts = GuideOptions {
        allow_drop: true,
        allow_restore: false,
    };
    match guided_search(&mut m, observed, opts)? {
        GuideOutcome::Found(path) => {
            let (_, mut kept) = replay_and_complete(&mut m, &path, false)?;
            kept.sort_unstable();
            Ok(GuaranteeVerdict::pass(Witness::InputSubset(kept)))
        }
        GuideOutcome::NotFound(at) => Ok(GuaranteeVerdict::fail(
            at,
            "no run over any subset of the inputs matches",
        )),
    }
}

/// True iff every failure-free run produces the same complete sequence.
pub fn check_determinism(
    graph: &DataflowGraph,
    channels: &Channels,
    max_outputs: usize,
) -> Result<bool, OracleError> {
    Ok(enumerate_with_limits(graph, channels, max_outputs, SearchLimits::default())?.len() == 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_graph, text_inputs, OperationSpec, Payload, Transition};
    use crate::oracle::{enumerate_reference_runs, racing, single_channel, TaskId};
    use proptest::prelude::*;

    fn concat_graph(window: usize) -> DataflowGraph {
        build_graph(
            vec![
                OperationSpec::map("src", Transition::Identity),
                OperationSpec::stateful(
                    "concat",
                    Transition::Concat {
                        window: Some(window),
                    },
                    Payload::List(vec![]),
                ),
                OperationSpec::map("snk", Transition::Identity),
            ],
            vec![
                ("src".into(), "concat".into()),
                ("concat".into(), "snk".into()),
            ],
        )
        .unwrap()
    }

    fn identity_graph() -> DataflowGraph {
        build_graph(vec![OperationSpec::map("id", Transition::Identity)], vec![]).unwrap()
    }

    /// Running example arrival: a, b, e on one channel and c, d on another.
    fn racing_example() -> Channels {
        let i = text_inputs(&["a", "c", "b", "d", "e"]);
        vec![
            vec![i[0].clone(), i[2].clone(), i[4].clone()],
            vec![i[1].clone(), i[3].clone()],
        ]
    }

    #[test]
    fn running_example_verdicts() {
        let g = concat_graph(2);
        let good = check_exactly_once(&g, &racing_example(), &Observed::texts(&["a", "ac", "cd", "db", "be"])).unwrap();
        assert!(good.holds);
        assert!(good.witness.is_some());
        let bad = check_exactly_once(&g, &racing_example(), &Observed::texts(&["a", "ac", "cd", "db", "de"])).unwrap();
        assert!(!bad.holds);
        assert_eq!(bad.counterexample_index, Some(4));
        assert!(check_exactly_once(&g, &racing_example(), &[]).unwrap().holds);
    }

    #[test]
    fn at_least_once_accepts_a_replayed_input() {
        let g = concat_graph(2);
        let ch = single_channel(&text_inputs(&["a", "c"]));
        let v = check_at_least_once(&g, &ch, &Observed::texts(&["a", "ac", "ca"]), 2).unwrap();
        assert!(v.holds);
        assert_eq!(v.witness, Some(Witness::InputMultiset(vec![1, 1, 2])));
        assert!(!check_exactly_once(&g, &ch, &Observed::texts(&["a", "ac", "ca"])).unwrap().holds);
        let never = check_at_least_once(&g, &ch, &Observed::texts(&["a", "zz"]), 2).unwrap();
        assert_eq!(never.counterexample_index, Some(1));
    }

    #[test]
    fn at_most_once_examples() {
        let g = concat_graph(2);
        let ch = single_channel(&text_inputs(&["a", "b"]));
        let v = check_at_most_once(&g, &ch, &Observed::texts(&["b"])).unwrap();
        assert_eq!(v.witness, Some(Witness::InputSubset(vec![2])));
        let full = check_at_most_once(&g, &ch, &Observed::texts(&["a", "ab"])).unwrap();
        assert_eq!(full.witness, Some(Witness::InputSubset(vec![1, 2])));
        assert!(!check_at_most_once(&g, &ch, &Observed::texts(&["a", "ab", "b"])).unwrap().holds);
    }

    #[test]
    fn determinism_examples() {
        let inputs = text_inputs(&["x", "y", "z"]);
        assert!(check_determinism(&identity_graph(), &single_channel(&inputs), 10).unwrap());
        let g = concat_graph(2);
        let i = text_inputs(&["a", "c", "b"]);
        let ch = vec![vec![i[0].clone(), i[1].clone()], vec![i[2].clone()]];
        assert!(!check_determinism(&g, &ch, 10).unwrap());
        assert!(check_determinism(&g, &vec![], 10).unwrap());
    }

    #[test]
    fn snapshot_read_back_explains_naive_replay() {
        let g = concat_graph(2);
        let ch = racing(&text_inputs(&["a", "c", "b", "d", "e"]));
        let snap = Observed::Snapshot {
            task: TaskId::new("concat", 0),
            partition: String::new(),
            state: Payload::List(vec![Payload::text("a"), Payload::text("c")]),
        };
        // processed a,c,b,d; the state after c was persisted; after the
        // failure c's successors are recomputed from that snapshot
        let mut obs = Observed::texts(&["a", "ac"]);
        obs.push(snap.clone());
        obs.extend(Observed::texts(&["cb", "bd", "cb", "bd", "de"]));
        assert!(!check_exactly_once(&g, &ch, &obs).unwrap().holds);
        assert!(check_at_least_once(&g, &ch, &obs, 2).unwrap().holds);
        // without the snapshot in the observation the replay is unexplainable
        let bare = Observed::texts(&["a", "ac", "cb", "bd", "cb", "bd", "de"]);
        assert!(!check_at_least_once(&g, &ch, &bare, 2).unwrap().holds);
        // a snapshot of a state never held is rejected at its position
        let mut fake = Observed::texts(&["a"]);
        fake.push(Observed::Snapshot {
            task: TaskId::new("concat", 0),
            partition: String::new(),
            state: Payload::List(vec![Payload::text("z")]),
        });
        assert_eq!(check_at_least_once(&g, &ch, &fake, 2).unwrap().counterexample_index, Some(1));
    }

    /// Brute force: all permutations of the duplicated multisets or subsets,
    /// folded through window concat directly.
    fn fold_concat(window: usize, order: &[&str]) -> Vec<String> {
        let mut state: Vec<&str> = Vec::new();
        let mut out = Vec::new();
        for w in order {
            state.push(w);
            if state.len() > window {
                state.remove(0);
            }
            out.push(state.concat());
        }
        out
    }

    fn permutations(items: &[&'static str]) -> Vec<Vec<&'static str>> {
        if items.is_empty() {
            return vec![vec![]];
        }
        let mut all = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let x = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, x);
                all.push(p);
            }
        }
        all
    }

    fn brute_prefix(window: usize, pools: &[Vec<&'static str>], observed: &[String]) -> bool {
        pools.iter().any(|pool| {
            permutations(pool).iter().any(|p| {
                let out = fold_concat(window, p);
                out.len() >= observed.len() && out[..observed.len()] == *observed
            })
        })
    }

    fn sub_multisets(words: &[&'static str], max_copies: usize) -> Vec<Vec<&'static str>> {
        let mut acc = vec![vec![]];
        for w in words {
            let mut next = Vec::new();
            for base in &acc {
                for n in 0..=max_copies {
                    let mut b = base.clone();
                    b.extend(std::iter::repeat_n(*w, n));
                    next.push(b);
                }
            }
            acc = next;
        }
        acc
    }

    /// At-least-once by depth-first search: each word may be taken up to
    /// `copies` times and the window may be reset to empty at any point, as
    /// a restart with nothing committed does.
    fn brute_with_resets(window: usize, copies: usize, observed: &[String]) -> bool {
        fn go(window: usize, left: &mut [usize; 3], state: &mut Vec<&'static str>, obs: &[String]) -> bool {
            let Some(want) = obs.first() else { return true };
            for (i, w) in ALPHABET.iter().enumerate() {
                if left[i] == 0 {
                    continue;
                }
                let mut next = state.clone();
                next.push(w);
                if next.len() > window {
                    next.remove(0);
                }
                if next.concat() == *want {
                    left[i] -= 1;
                    let ok = go(window, left, &mut next, &obs[1..]);
                    left[i] += 1;
                    if ok {
                        return true;
                    }
                }
            }
            !state.is_empty() && go(window, left, &mut Vec::new(), obs)
        }
        go(window, &mut [copies; 3], &mut Vec::new(), observed)
    }

    const ALPHABET: [&str; 3] = ["a", "b", "c"];

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn verdicts_agree_with_brute_force(
            observed in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "ab", "ba", "ca", "ac", "bc", "cb", "aa"]), 0..4)
        ) {
            let g = concat_graph(2);
            let ch = racing(&text_inputs(&ALPHABET));
            let obs: Vec<String> = observed.iter().map(|s| s.to_string()).collect();
            let o = Observed::outputs(observed.iter().map(|s| Payload::text(*s)));
            let eo = check_exactly_once(&g, &ch, &o).unwrap().holds;
            prop_assert_eq!(eo, brute_prefix(2, &[ALPHABET.to_vec()], &obs));
            let amo = check_at_most_once(&g, &ch, &o).unwrap().holds;
            prop_assert_eq!(amo, brute_prefix(2, &sub_multisets(&ALPHABET, 1), &obs));
            let alo = check_at_least_once(&g, &ch, &o, 1).unwrap().holds;
            prop_assert_eq!(alo, brute_with_resets(2, 2, &obs));
            if eo {
                prop_assert!(amo && alo);
            }
        }

        #[test]
        fn deterministic_runs_reject_mutations(words in prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 0..5), pos in 0usize..5) {
            let g = concat_graph(2);
            let refs: Vec<&str> = words.clone();
            let ch = single_channel(&text_inputs(&refs));
            prop_assert!(check_determinism(&g, &ch, 10).unwrap());
            let runs = enumerate_reference_runs(&g, &ch, 10).unwrap();
            let only = runs.into_iter().next().unwrap();
            for k in 0..=only.len() {
                prop_assert!(check_exactly_once(&g, &ch, &Observed::outputs(only[..k].to_vec())).unwrap().holds);
            }
            if !only.is_empty() {
                let at = pos % only.len();
                let mut mutated = only.clone();
                mutated[at] = Payload::text("zz");
                let v = check_exactly_once(&g, &ch, &Observed::outputs(mutated)).unwrap();
                prop_assert!(!v.holds);
                prop_assert_eq!(v.counterexample_index, Some(at));
            }
        }
    }
}
