use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::model::{apply_operation, DataflowGraph, Element, Payload, StateCell};

use super::{Channels, Observed, OracleError, TaskId};

pub const DEFAULT_NODE_BUDGET: u64 = 5_000_000;

/// Bounds for one search call.
#[derive(Debug, Clone, Copy)]
pub struct SearchLimits {
    pub node_budget: u64,
    pub max_inputs: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            node_budget: DEFAULT_NODE_BUDGET,
            max_inputs: 8,
        }
    }
}

struct Task {
    op: usize,
    in_queues: Vec<usize>,
    is_source: bool,
    is_sink: bool,
    /// A task with a single input queue has no scheduling choice of its own,
    /// so it runs as soon as something is queued.
    eager: bool,
}

/// Tasks of the physical graph and the FIFO queues between them.
pub(super) struct Topology<'g> {
    graph: &'g DataflowGraph,
    tasks: Vec<Task>,
    task_index: BTreeMap<(usize, usize), usize>,
    queue_of: HashMap<(usize, usize), usize>,
    queue_count: usize,
}

impl<'g> Topology<'g> {
    pub(super) fn new(graph: &'g DataflowGraph) -> Self {
        let mut tasks = Vec::new();
        let mut task_index = BTreeMap::new();
        for op in graph.ops_in_order() {
            let oi = graph.op_index(&op.name).expect("validated");
            for i in 0..op.parallelism {
                task_index.insert((oi, i), tasks.len());
                tasks.push(Task {
                    op: oi,
                    in_queues: Vec::new(),
                    is_source: op.name == graph.source_name,
                    is_sink: op.name == graph.sink_name,
                    eager: false,
                });
            }
        }
        let mut queue_of = HashMap::new();
        let mut queue_count = 0;
        for (from, to) in &graph.edges {
            let (fi, ti) = (graph.op_index(from).unwrap(), graph.op_index(to).unwrap());
            for a in 0..graph.operations[fi].parallelism {
                for b in 0..graph.operations[ti].parallelism {
                    let (src, dst) = (task_index[&(fi, a)], task_index[&(ti, b)]);
                    queue_of.insert((src, dst), queue_count);
                    tasks[dst].in_queues.push(queue_count);
                    queue_count += 1;
                }
            }
        }
        for t in &mut tasks {
            t.eager = !t.is_source && t.in_queues.len() == 1;
        }
        Topology {
            graph,
            tasks,
            task_index,
            queue_of,
            queue_count,
        }
    }

    fn task_of(&self, op: usize, instance: usize) -> usize {
        self.task_index[&(op, instance)]
    }

    pub(super) fn find_task(&self, id: &TaskId) -> Option<usize> {
        let op = self.graph.op_index(&id.op)?;
        self.task_index.get(&(op, id.instance)).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(super) struct Config {
    pos: Vec<usize>,
    queues: Vec<VecDeque<Element>>,
    /// Per task: partition key to current state; absent slots hold the initial state.
    states: Vec<BTreeMap<String, Payload>>,
    /// Bit k set once the state named by snapshot candidate k has been held.
    held: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Move {
    Take(usize),
    Drop(usize),
    Pop { task: usize, queue: usize },
    Restore { candidate: usize },
    /// A task returns to its initial state, as after a restart with no snapshot.
    Reset { task: usize },
}

/// A state that appears in the observation as a snapshot.
pub(super) struct Candidate {
    observed_at: usize,
    task: usize,
    partition: String,
    state: Payload,
}

pub(super) struct Machine<'g> {
    pub(super) topo: Topology<'g>,
    pub(super) channels: Channels,
    pub(super) candidates: Vec<Candidate>,
    nodes: u64,
    budget: u64,
}

impl<'g> Machine<'g> {
    pub(super) fn new(
        graph: &'g DataflowGraph,
        channels: Channels,
        observed: &[Observed],
        limits: SearchLimits,
    ) -> Result<Self, OracleError> {
        let total: usize = channels.iter().map(Vec::len).sum();
        if total > limits.max_inputs {
            return Err(OracleError::TooLarge(format!(
                "{total} inputs, bound is {}",
                limits.max_inputs
            )));
        }
        let topo = Topology::new(graph);
        let mut candidates = Vec::new();
        for (i, o) in observed.iter().enumerate() {
            if let Observed::Snapshot {
                task,
                partition,
                state,
            } = o
            {
                let t = topo.find_task(task).ok_or_else(|| {
                    OracleError::StepNotEnabled(format!("snapshot names unknown task {task}"))
                })?;
                candidates.push(Candidate {
                    observed_at: i,
                    task: t,
                    partition: partition.clone(),
                    state: state.clone(),
                });
            }
        }
        if candidates.len() > 64 {
            return Err(OracleError::TooLarge("more than 64 snapshot observations".into()));
        }
        Ok(Machine {
            topo,
            channels,
            candidates,
            nodes: 0,
            budget: limits.node_budget,
        })
    }

    pub(super) fn initial(&self) -> Config {
        let mut c = Config {
            pos: vec![0; self.channels.len()],
            queues: vec![VecDeque::new(); self.topo.queue_count],
            states: vec![BTreeMap::new(); self.topo.tasks.len()],
            held: 0,
        };
        for (k, cand) in self.candidates.iter().enumerate() {
            let op = &self.topo.graph.operations[self.topo.tasks[cand.task].op];
            if op.initial_state.as_ref() == Some(&cand.state) {
                c.held |= 1 << k;
            }
        }
        c
    }

    pub(super) fn tick(&mut self) -> Result<(), OracleError> {
        self.nodes += 1;
        if self.nodes > self.budget {
            Err(OracleError::SearchBudgetExceeded(self.budget))
        } else {
            Ok(())
        }
    }

    pub(super) fn state_of(&self, c: &Config, task: usize, partition: &str) -> Option<Payload> {
        c.states[task].get(partition).cloned().or_else(|| {
            self.topo.graph.operations[self.topo.tasks[task].op]
                .initial_state
                .clone()
        })
    }

    /// Snapshot candidate `k` may be observed now.
    pub(super) fn can_observe(&self, c: &Config, k: usize) -> bool {
        let cand = &self.candidates[k];
        c.held & (1 << k) != 0 || self.state_of(c, cand.task, &cand.partition).as_ref() == Some(&cand.state)
    }

    pub(super) fn candidate_index(&self, observed_at: usize) -> Option<usize> {
        self.candidates.iter().position(|c| c.observed_at == observed_at)
    }

    pub(super) fn moves(&self, c: &Config, allow_drop: bool, restorable_before: Option<usize>) -> Vec<Move> {
        let mut out = Vec::new();
        for (ch, items) in self.channels.iter().enumerate() {
            if c.pos[ch] < items.len() {
                out.push(Move::Take(ch));
                if allow_drop {
                    out.push(Move::Drop(ch));
                }
            }
        }
        for (t, task) in self.topo.tasks.iter().enumerate() {
            if task.eager {
                continue;
            }
            for &q in &task.in_queues {
                if !c.queues[q].is_empty() {
                    out.push(Move::Pop { task: t, queue: q });
                }
            }
        }
        if let Some(limit) = restorable_before {
            for (t, held) in c.states.iter().enumerate() {
                if !held.is_empty() {
                    out.push(Move::Reset { task: t });
                }
            }
            let mut seen = BTreeSet::new();
            for (k, cand) in self.candidates.iter().enumerate() {
                if cand.observed_at < limit
                    && self.state_of(c, cand.task, &cand.partition).as_ref() != Some(&cand.state)
                    && seen.insert((cand.task, &cand.partition, &cand.state))
                {
                    out.push(Move::Restore { candidate: k });
                }
            }
        }
        out
    }

    /// Applies a move followed by every eager task; returns emitted outputs.
    pub(super) fn apply(&self, c: &Config, m: Move) -> Result<(Config, Vec<Payload>), OracleError> {
        let mut next = c.clone();
        let mut outputs = Vec::new();
        match m {
            Move::Take(ch) => {
                let elem = self.channels[ch][next.pos[ch]].clone();
                next.pos[ch] += 1;
                let src = self.topo.graph.op_index(&self.topo.graph.source_name).unwrap();
                let inst = self.topo.graph.operations[src].route(&elem);
                let t = self.topo.task_of(src, inst);
                self.process(&mut next, t, &elem, &mut outputs)?;
            }
            Move::Drop(ch) => next.pos[ch] += 1,
            Move::Pop { task, queue } => {
                let elem = next.queues[queue].pop_front().expect("enabled");
                self.process(&mut next, task, &elem, &mut outputs)?;
            }
            Move::Restore { candidate } => {
                let cand = &self.candidates[candidate];
                self.set_state(&mut next, cand.task, cand.partition.clone(), cand.state.clone());
            }
            Move::Reset { task } => next.states[task].clear(),
        }
        self.settle(&mut next, &mut outputs)?;
        Ok((next, outputs))
    }

    fn settle(&self, c: &mut Config, outputs: &mut Vec<Payload>) -> Result<(), OracleError> {
        loop {
            let mut progressed = false;
            for (t, task) in self.topo.tasks.iter().enumerate() {
                if !task.eager {
                    continue;
                }
                let q = task.in_queues[0];
                while let Some(elem) = c.queues[q].pop_front() {
                    self.process(c, t, &elem, outputs)?;
                    progressed = true;
                }
            }
            if !progressed {
                return Ok(());
            }
        }
    }

    fn set_state(&self, c: &mut Config, task: usize, partition: String, state: Payload) {
        for (k, cand) in self.candidates.iter().enumerate() {
            if cand.task == task && cand.partition == partition && cand.state == state {
                c.held |= 1 << k;
            }
        }
        c.states[task].insert(partition, state);
    }

    fn process(
        &self,
        c: &mut Config,
        t: usize,
        elem: &Element,
        outputs: &mut Vec<Payload>,
    ) -> Result<(), OracleError> {
        let graph = self.topo.graph;
        let task = &self.topo.tasks[t];
        let op = &graph.operations[task.op];
        let partition = op.partition_key(elem);
        let state = if op.is_stateful() {
            self.state_of(c, t, &partition).map(StateCell::new)
        } else {
            None
        };
        let (next, derived) = apply_operation(op, state.as_ref(), elem)?;
        if let Some(s) = next {
            self.set_state(c, t, partition, s.payload);
        }
        if task.is_sink {
            outputs.extend(derived.into_iter().map(|d| d.payload));
            return Ok(());
        }
        for succ in graph.successors(&op.name) {
            let si = graph.op_index(&succ.name).unwrap();
            for d in &derived {
                let dst = self.topo.task_of(si, succ.route(d));
                let q = self.topo.queue_of[&(t, dst)];
                c.queues[q].push_back(d.clone());
            }
        }
        Ok(())
    }

    /// Producer sequence of the element a take or drop move refers to.
    pub(super) fn seq_at(&self, c: &Config, ch: usize) -> u64 {
        self.channels[ch][c.pos[ch]].seq()
    }
}

/// Every complete output sequence a failure-free run can produce, truncated
/// at `max_outputs` items. Iteration order of the set is lexicographic.
pub fn enumerate_reference_runs(
    graph: &DataflowGraph,
    channels: &Channels,
    max_outputs: usize,
) -> Result<BTreeSet<Vec<Payload>>, OracleError> {
    enumerate_with_limits(graph, channels, max_outputs, SearchLimits::default())
}

pub(super) fn enumerate_with_limits(
    graph: &DataflowGraph,
    channels: &Channels,
    max_outputs: usize,
    limits: SearchLimits,
) -> Result<BTreeSet<Vec<Payload>>, OracleError> {
    let mut m = Machine::new(graph, channels.clone(), &[], limits)?;
    let start = m.initial();
    let mut memo = HashMap::new();
    let suffixes = enumerate_from(&mut m, &start, 0, max_outputs, &mut memo)?;
    Ok(suffixes)
}

type SuffixMemo = HashMap<(Config, usize), BTreeSet<Vec<Payload>>>;

fn enumerate_from(
    m: &mut Machine<'_>,
    c: &Config,
    emitted: usize,
    max_outputs: usize,
    memo: &mut SuffixMemo,
) -> Result<BTreeSet<Vec<Payload>>, OracleError> {
    let key = (c.clone(), emitted);
    if let Some(hit) = memo.get(&key) {
        return Ok(hit.clone());
    }
    m.tick()?;
    let mut result = BTreeSet::new();
    let moves = if emitted >= max_outputs {
        Vec::new()
    } else {
        m.moves(c, false, None)
    };
    if moves.is_empty() {
        result.insert(Vec::new());
    }
    for mv in moves {
        let (next, mut out) = m.apply(c, mv)?;
        let room = max_outputs - emitted;
        if out.len() >= room {
            out.truncate(room);
            result.insert(out);
            continue;
        }
        let n = out.len();
        for suffix in enumerate_from(m, &next, emitted + n, max_outputs, memo)? {
            let mut seq = out.clone();
            seq.extend(suffix);
            result.insert(seq);
        }
    }
    memo.insert(key, result.clone());
    Ok(result)
}

/// Options for a search guided by an observed prefix.
#[derive(Debug, Clone, Copy, Default)]
pub(super) struct GuideOptions {
    pub allow_drop: bool,
    pub allow_restore: bool,
}

pub(super) enum GuideOutcome {
    /// Moves (excluding snapshot observations) that reproduce the observation.
    Found(Vec<Move>),
    /// Length of the longest observation prefix any run could match.
    NotFound(usize),
}

pub(super) fn guided_search(
    m: &mut Machine<'_>,
    observed: &[Observed],
    opts: GuideOptions,
) -> Result<GuideOutcome, OracleError> {
    let start = m.initial();
    let mut memo: HashMap<(Config, usize), usize> = HashMap::new();
    let mut path = Vec::new();
    match guide(m, observed, opts, &start, 0, &mut memo, &mut path)? {
        Ok(()) => Ok(GuideOutcome::Found(path)),
        Err(best) => Ok(GuideOutcome::NotFound(best)),
    }
}

fn guide(
    m: &mut Machine<'_>,
    observed: &[Observed],
    opts: GuideOptions,
    c: &Config,
    mut matched: usize,
    memo: &mut HashMap<(Config, usize), usize>,
    path: &mut Vec<Move>,
) -> Result<Result<(), usize>, OracleError> {
    // Observing a snapshot changes nothing but what has left the system, so
    // it is taken as soon as it is possible.
    while matched < observed.len() {
        match m.candidate_index(matched) {
            Some(k) if m.can_observe(c, k) => matched += 1,
            _ => break,
        }
    }
    if matched == observed.len() {
        return Ok(Ok(()));
    }
    let key = (c.clone(), matched);
    if let Some(best) = memo.get(&key) {
        return Ok(Err(*best));
    }
    m.tick()?;
    let mut best = matched;
    let restore = opts.allow_restore.then_some(matched);
    for mv in m.moves(c, opts.allow_drop, restore) {
        let (next, out) = m.apply(c, mv)?;
        let mut at = matched;
        let mut ok = true;
        for p in out {
            if at == observed.len() {
                break;
            }
            if observed[at] != Observed::Output(p) {
                ok = false;
                break;
            }
            at += 1;
        }
        best = best.max(at);
        if !ok {
            continue;
        }
        path.push(mv);
        match guide(m, observed, opts, &next, at, memo, path)? {
            Ok(()) => return Ok(Ok(())),
            Err(b) => best = best.max(b),
        }
        path.pop();
    }
    memo.insert(key, best);
    Ok(Err(best))
}

/// Replays `path` from the initial configuration, then keeps taking the
/// first enabled move until the run is complete. Returns all outputs and
/// the producer sequences consumed along `path`.
pub(super) fn replay_and_complete(
    m: &mut Machine<'_>,
    path: &[Move],
    complete: bool,
) -> Result<(Vec<Payload>, Vec<u64>), OracleError> {
    let mut c = m.initial();
    let mut outputs = Vec::new();
    let mut consumed = Vec::new();
    for &mv in path {
        if let Move::Take(ch) = mv {
            consumed.push(m.seq_at(&c, ch));
        }
        let (next, out) = m.apply(&c, mv)?;
        outputs.extend(out);
        c = next;
    }
    if complete {
        while let Some(&mv) = m.moves(&c, false, None).first() {
            m.tick()?;
            let (next, out) = m.apply(&c, mv)?;
            outputs.extend(out);
            c = next;
        }
    }
    Ok((outputs, consumed))
}
