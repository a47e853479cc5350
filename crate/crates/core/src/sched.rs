//! Global transitions of multi-threaded programs: single steps, runs under
//! deterministic schedulers, and exhaustive exploration of interleavings.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ops::Registry;
use crate::sample::{tier1_projection, StoreSampler};
use crate::semantics::{step_in_place, write_field, Rule, RunOptions, RunStatus};
use crate::syntax::{Program, Store, ThreadId, Var};
use crate::typing::VarTypeEnv;
use crate::word::Word;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GlobalConfig {
    pub store: Store,
    pub program: Program,
    pub t: u64,
    pub k: u64,
}

impl GlobalConfig {
    pub fn new(store: Store, program: Program) -> Self {
        GlobalConfig {
            store,
            program,
            t: 0,
            k: 0,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.program.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GlobalStep {
    pub thread: ThreadId,
    pub rule: Rule,
    /// Cumulative `t` after this step.
    pub t: u64,
    pub write: Option<(Var, Word)>,
}

/// Performs one step of `thread` in place: (Stop) removes it when its
/// command terminates, (Step) replaces its command otherwise.
pub fn step_global_in_place(cfg: &mut GlobalConfig, thread: &ThreadId, registry: &Registry) -> Result<GlobalStep> {
    let cmd = cfg
        .program
        .remove(thread)
        .ok_or_else(|| Error::NoSuchThread(thread.clone()))?;
    let (rest, info) = step_in_place(&mut cfg.store, cmd, registry)?;
    if let Some(c1) = rest {
        cfg.program.insert(thread.clone(), c1);
    }
    cfg.k += 1;
    cfg.t += info.rule.loop_increment();
    Ok(GlobalStep {
        thread: thread.clone(),
        rule: info.rule,
        t: cfg.t,
        write: info.write,
    })
}

pub fn step_global(cfg: &GlobalConfig, thread: &ThreadId, registry: &Registry) -> Result<GlobalConfig> {
    let mut next = cfg.clone();
    step_global_in_place(&mut next, thread, registry)?;
    Ok(next)
}

/// A deterministic scheduling policy.
pub trait Scheduler {
    fn name(&self) -> String;

    /// Declared quiet: the choice depends only on the program and `μ↾1`.
    /// Quiet schedulers are shown `μ↾1`, others the full store.
    fn is_quiet(&self) -> bool;

    /// Picks a thread of a non-empty `program`.
    fn select(&mut self, program: &Program, view: &Store) -> ThreadId;
}

/// Cycles through live threads in lexicographic order.
#[derive(Clone, Debug, Default)]
pub struct RoundRobin {
    last: Option<ThreadId>,
}

impl Scheduler for RoundRobin {
    fn name(&self) -> String {
        "round-robin".into()
    }

    fn is_quiet(&self) -> bool {
        true
    }

    fn select(&mut self, program: &Program, _: &Store) -> ThreadId {
        let next = match &self.last {
            Some(prev) => program
                .range::<ThreadId, _>((std::ops::Bound::Excluded(prev), std::ops::Bound::Unbounded))
                .next()
                .or_else(|| program.iter().next()),
            None => program.iter().next(),
        };
        let id = next.expect("program is non-empty").0.clone();
        self.last = Some(id.clone());
        id
    }
}

/// Always the least (or greatest) live thread.
#[derive(Clone, Debug)]
pub struct Fixed {
    pub greatest: bool,
}

impl Scheduler for Fixed {
    fn name(&self) -> String {
        if self.greatest { "last" } else { "first" }.into()
    }

    fn is_quiet(&self) -> bool {
        true
    }

    fn select(&mut self, program: &Program, _: &Store) -> ThreadId {
        let it = if self.greatest {
            program.keys().next_back()
        } else {
            program.keys().next()
        };
        it.expect("program is non-empty").clone()
    }
}

/// Uniform choice from a seeded generator.
#[derive(Clone, Debug)]
pub struct Seeded {
    seed: u64,
    rng: ChaCha8Rng,
}

impl Seeded {
    pub fn new(seed: u64) -> Self {
        Seeded {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Scheduler for Seeded {
    fn name(&self) -> String {
        format!("random:{}", self.seed)
    }

    fn is_quiet(&self) -> bool {
        true
    }

    fn select(&mut self, program: &Program, _: &Store) -> ThreadId {
        let i = self.rng.gen_range(0..program.len());
        program.keys().nth(i).expect("index in range").clone()
    }
}

/// Picks the thread at index `|μ(x)| mod live` from the full store. Not
/// quiet when `x` has tier 0.
#[derive(Clone, Debug)]
pub struct Peek {
    pub var: Var,
}

impl Scheduler for Peek {
    fn name(&self) -> String {
        format!("peek:{}", self.var)
    }

    fn is_quiet(&self) -> bool {
        false
    }

    fn select(&mut self, program: &Program, view: &Store) -> ThreadId {
        let i = view.get(self.var.as_str()).len() % program.len();
        program.keys().nth(i).expect("index in range").clone()
    }
}

/// Named scheduler constructors: `round-robin`, `first`, `last`,
/// `random[:SEED]`, `peek:VAR`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SchedulerKind {
    RoundRobin,
    First,
    Last,
    Random(Option<u64>),
    Peek(Var),
}

impl SchedulerKind {
    /// A fresh instance; `seed` is used by `random` without an explicit seed.
    pub fn build(&self, seed: u64) -> Box<dyn Scheduler> {
        match self {
            SchedulerKind::RoundRobin => Box::new(RoundRobin::default()),
            SchedulerKind::First => Box::new(Fixed { greatest: false }),
            SchedulerKind::Last => Box::new(Fixed { greatest: true }),
            SchedulerKind::Random(s) => Box::new(Seeded::new(s.unwrap_or(seed))),
            SchedulerKind::Peek(x) => Box::new(Peek { var: x.clone() }),
        }
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidArgument(format!(
                "unknown scheduler `{s}` (expected round-robin, first, last, random[:SEED] or peek:VAR)"
            ))
        };
        Ok(match s {
            "round-robin" | "rr" => SchedulerKind::RoundRobin,
            "first" => SchedulerKind::First,
            "last" => SchedulerKind::Last,
            "random" => SchedulerKind::Random(None),
            _ => {
                if let Some(n) = s.strip_prefix("random:") {
                    SchedulerKind::Random(Some(n.parse().map_err(|_| bad())?))
                } else if let Some(x) = s.strip_prefix("peek:") {
                    if x.is_empty() {
                        return Err(bad());
                    }
                    SchedulerKind::Peek(Var::from(x))
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulerKind::RoundRobin => f.write_str("round-robin"),
            SchedulerKind::First => f.write_str("first"),
            SchedulerKind::Last => f.write_str("last"),
            SchedulerKind::Random(None) => f.write_str("random"),
            SchedulerKind::Random(Some(s)) => write!(f, "random:{s}"),
            SchedulerKind::Peek(x) => write!(f, "peek:{x}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SchedRun {
    pub status: RunStatus,
    pub config: GlobalConfig,
    pub choices: Vec<ThreadId>,
    /// Per-step records, up to the trace cap.
    pub steps: Vec<GlobalStep>,
}

impl SchedRun {
    pub fn finished(&self) -> bool {
        self.status == RunStatus::Finished
    }

    /// Comma-separated thread choices.
    pub fn choice_trace(&self) -> String {
        let ids: Vec<&str> = self.choices.iter().map(ThreadId::as_str).collect();
        ids.join(",")
    }

    /// One line per step: `k thread rule t var=word` (`-` when nothing was
    /// written).
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                i + 1,
                s.thread,
                s.rule,
                s.t,
                write_field(&s.write)
            );
        }
        out
    }
}

/// Runs `m` from `mu`, letting `sched` pick each step. Quiet schedulers see
/// the store restricted to the tier-1 variables of `gamma`.
pub fn run_with_scheduler(
    mu: &Store,
    m: &Program,
    sched: &mut dyn Scheduler,
    gamma: &VarTypeEnv,
    opts: RunOptions,
    registry: &Registry,
) -> Result<SchedRun> {
    if opts.fuel == 0 {
        return Err(Error::InvalidArgument("fuel must be at least 1".into()));
    }
    let mut cfg = GlobalConfig::new(mu.clone(), m.clone());
    let mut choices = Vec::new();
    let mut steps = Vec::new();
    while !cfg.is_terminal() && cfg.k < opts.fuel {
        let id = if sched.is_quiet() {
            sched.select(&cfg.program, &tier1_projection(&cfg.store, gamma))
        } else {
            sched.select(&cfg.program, &cfg.store)
        };
        if !cfg.program.contains_key(&id) {
            return Err(Error::NoSuchThread(id));
        }
        let step = step_global_in_place(&mut cfg, &id, registry)?;
        choices.push(id);
        if steps.len() < opts.trace_cap {
            steps.push(step);
        }
    }
    Ok(SchedRun {
        status: if cfg.is_terminal() {
            RunStatus::Finished
        } else {
            RunStatus::FuelExhausted
        },
        config: cfg,
        choices,
        steps,
    })
}

// ---- exploration ----

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExplorationReport {
    pub terminal_stores: BTreeSet<Store>,
    /// Longest terminating path, in global steps.
    pub max_k: Option<u64>,
    /// Largest `t` over terminating paths.
    pub max_t: Option<u64>,
    /// Some configuration repeats along a path.
    pub cycle: bool,
    /// Configurations with a stuck guard.
    pub stuck: u64,
    pub visited: u64,
    pub limits_hit: bool,
    pub strongly_terminating_within_bounds: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExploreLimits {
    /// Depth bound along any path.
    pub max_steps: u64,
    pub max_states: u64,
}

impl Default for ExploreLimits {
    fn default() -> Self {
        ExploreLimits {
            max_steps: 100_000,
            max_states: 200_000,
        }
    }
}

struct Node {
    /// Successor node and whether the edge unfolded a loop.
    succ: Vec<(usize, u64)>,
    terminal: bool,
}

/// Depth-first search over all interleavings, memoized on `(store,
/// program)`. Revisiting a configuration on the current path is a cycle.
pub fn explore(mu: &Store, m: &Program, limits: ExploreLimits, registry: &Registry) -> Result<ExplorationReport> {
    if limits.max_steps == 0 || limits.max_states == 0 {
        return Err(Error::InvalidArgument("limits must be at least 1".into()));
    }
    let mut index: HashMap<(Store, Program), usize> = HashMap::new();
    let mut nodes: Vec<Node> = Vec::new();
    let mut configs: Vec<(Store, Program)> = Vec::new();
    let mut report = ExplorationReport {
        terminal_stores: BTreeSet::new(),
        max_k: None,
        max_t: None,
        cycle: false,
        stuck: 0,
        visited: 0,
        limits_hit: false,
        strongly_terminating_within_bounds: false,
    };

    let root = (mu.clone(), m.clone());
    index.insert(root.clone(), 0);
    nodes.push(Node {
        succ: vec![],
        terminal: m.is_empty(),
    });
    configs.push(root);

    // (node, next thread position, depth)
    let mut stack: Vec<(usize, usize, u64)> = vec![(0, 0, 0)];
    let mut on_stack = vec![true];
    let mut finished = vec![false];
    let mut order: Vec<usize> = Vec::new();

    while let Some(&mut (v, ref mut pos, depth)) = stack.last_mut() {
        let (store, prog) = configs[v].clone();
        if prog.is_empty() {
            report.terminal_stores.insert(store);
            on_stack[v] = false;
            finished[v] = true;
            order.push(v);
            stack.pop();
            continue;
        }
        if *pos == 0 && depth >= limits.max_steps {
            report.limits_hit = true;
            *pos = usize::MAX;
        }
        let Some(tid) = prog.keys().nth(*pos).cloned() else {
            on_stack[v] = false;
            finished[v] = true;
            order.push(v);
            stack.pop();
            continue;
        };
        *pos += 1;
        let mut cfg = GlobalConfig::new(store, prog);
        let step = match step_global_in_place(&mut cfg, &tid, registry) {
            Ok(s) => s,
            Err(Error::StuckGuard { .. }) => {
                report.stuck += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let key = (cfg.store, cfg.program);
        let inc = step.rule.loop_increment();
        match index.get(&key) {
            Some(&w) => {
                nodes[v].succ.push((w, inc));
                if on_stack[w] {
                    report.cycle = true;
                }
            }
            None => {
                if nodes.len() as u64 >= limits.max_states {
                    report.limits_hit = true;
                    continue;
                }
                let w = nodes.len();
                index.insert(key.clone(), w);
                nodes.push(Node {
                    succ: vec![],
                    terminal: key.1.is_empty(),
                });
                configs.push(key);
                on_stack.push(true);
                finished.push(false);
                nodes[v].succ.push((w, inc));
                stack.push((w, 0, depth + 1));
            }
        }
    }
    report.visited = nodes.len() as u64;

    // Longest terminating paths over the DFS post-order, ignoring edges into
    // nodes that were on the stack when taken.
    let mut best_k: Vec<Option<u64>> = vec![None; nodes.len()];
    let mut best_t: Vec<Option<u64>> = vec![None; nodes.len()];
    let mut done = vec![false; nodes.len()];
    for &v in &order {
        if nodes[v].terminal {
            best_k[v] = Some(0);
            best_t[v] = Some(0);
        } else {
            for &(w, inc) in &nodes[v].succ {
                if !done[w] {
                    continue;
                }
                if let Some(k) = best_k[w] {
                    best_k[v] = Some(best_k[v].map_or(k + 1, |b| b.max(k + 1)));
                }
                if let Some(t) = best_t[w] {
                    best_t[v] = Some(best_t[v].map_or(t + inc, |b| b.max(t + inc)));
                }
            }
        }
        done[v] = true;
    }
    report.max_k = best_k[0];
    report.max_t = best_t[0];
    report.strongly_terminating_within_bounds = !report.cycle && !report.limits_hit && report.stuck == 0;
    Ok(report)
}

// ---- quietness ----

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum QuietnessVerdict {
    Pass {
        trials: u64,
    },
    Diverged {
        trial: u64,
        step: usize,
        left: Store,
        right: Store,
        left_choice: Option<ThreadId>,
        right_choice: Option<ThreadId>,
    },
}

impl QuietnessVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, QuietnessVerdict::Pass { .. })
    }
}

#[derive(Clone, Debug)]
pub struct QuietnessConfig {
    pub trials: u64,
    pub fuel: u64,
    pub seed: u64,
    pub sampler: StoreSampler,
}

/// Runs `m` from random pairs of stores equal on tier-1 variables and
/// compares the thread-choice sequences. A run that stops early (fuel, stuck
/// guard) contributes its prefix.
pub fn quietness_test(
    make: &dyn Fn() -> Box<dyn Scheduler>,
    m: &Program,
    gamma: &VarTypeEnv,
    cfg: &QuietnessConfig,
    registry: &Registry,
) -> Result<QuietnessVerdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let opts = RunOptions::counters_only(cfg.fuel.max(1));
    let choices = |mu: &Store| -> Result<Vec<ThreadId>> {
        let mut s = make();
        match run_with_scheduler(mu, m, s.as_mut(), gamma, opts, registry) {
            Ok(r) => Ok(r.choices),
            Err(Error::StuckGuard { .. }) => Ok(stuck_prefix(mu, m, make, gamma, opts, registry)),
            Err(e) => Err(e),
        }
    };
    for trial in 0..cfg.trials {
        let (a, b) = cfg.sampler.pair(&mut rng, gamma);
        let (ca, cb) = (choices(&a)?, choices(&b)?);
        if ca != cb {
            let step = ca.iter().zip(&cb).take_while(|(x, y)| x == y).count();
            return Ok(QuietnessVerdict::Diverged {
                trial,
                step,
                left: a,
                right: b,
                left_choice: ca.get(step).cloned(),
                right_choice: cb.get(step).cloned(),
            });
        }
    }
    Ok(QuietnessVerdict::Pass { trials: cfg.trials })
}

/// Choices made before a run got stuck, replayed step by step.
fn stuck_prefix(
    mu: &Store,
    m: &Program,
    make: &dyn Fn() -> Box<dyn Scheduler>,
    gamma: &VarTypeEnv,
    opts: RunOptions,
    registry: &Registry,
) -> Vec<ThreadId> {
    let mut s = make();
    let mut cfg = GlobalConfig::new(mu.clone(), m.clone());
    let mut out = Vec::new();
    while !cfg.is_terminal() && cfg.k < opts.fuel {
        let view = if s.is_quiet() {
            tier1_projection(&cfg.store, gamma)
        } else {
            cfg.store.clone()
        };
        let id = s.select(&cfg.program, &view);
        out.push(id.clone());
        if step_global_in_place(&mut cfg, &id, registry).is_err() {
            break;
        }
    }
    out
}
