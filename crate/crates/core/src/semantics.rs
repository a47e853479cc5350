//! Small-step semantics of expressions and commands, instrumented with the
//! loop measure `t` (number of `while` unfoldings).

use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ops::Registry;
use crate::syntax::{Command, Expr, Store, Var};
use crate::word::Word;

/// The axiom at the root of a small step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Skip,
    Assign,
    IfTt,
    IfFf,
    WhileTt,
    WhileFf,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Skip => "skip",
            Rule::Assign => "assign",
            Rule::IfTt => "if_tt",
            Rule::IfFf => "if_ff",
            Rule::WhileTt => "w_tt",
            Rule::WhileFf => "w_ff",
        }
    }

    pub fn from_name(s: &str) -> Option<Rule> {
        [
            Rule::Skip,
            Rule::Assign,
            Rule::IfTt,
            Rule::IfFf,
            Rule::WhileTt,
            Rule::WhileFf,
        ]
        .into_iter()
        .find(|r| r.name() == s)
    }

    /// Contribution to `t`.
    pub fn loop_increment(self) -> u64 {
        u64::from(self == Rule::WhileTt)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn eval_expr(mu: &Store, e: &Expr, registry: &Registry) -> Result<Word> {
    match e {
        Expr::Var(x) => Ok(mu.get(x.as_str())),
        Expr::Op(name, args) => {
            let def = registry.lookup(name)?;
            let vals = args
                .iter()
                .map(|a| eval_expr(mu, a, registry))
                .collect::<Result<Vec<_>>>()?;
            Ok(def.apply(&vals))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Terminal(Store),
    Continue(Store, Command),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepResult {
    pub outcome: Outcome,
    pub rule: Rule,
    pub loop_increment: u64,
    /// The binding written by an assignment.
    pub write: Option<(Var, Word)>,
}

/// What one step did, without the resulting configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepInfo {
    pub rule: Rule,
    pub write: Option<(Var, Word)>,
}

/// One small step, updating the store in place. Returns the residual
/// command, or `None` when the command terminated.
pub fn step_in_place(mu: &mut Store, c: Command, registry: &Registry) -> Result<(Option<Command>, StepInfo)> {
    match c {
        Command::Skip => Ok((
            None,
            StepInfo {
                rule: Rule::Skip,
                write: None,
            },
        )),
        Command::Assign(x, e) => {
            let d = eval_expr(mu, &e, registry)?;
            mu.set(x.clone(), d.clone());
            Ok((
                None,
                StepInfo {
                    rule: Rule::Assign,
                    write: Some((x, d)),
                },
            ))
        }
        Command::Seq(a, b) => {
            let (rest, info) = step_in_place(mu, *a, registry)?;
            let next = match rest {
                None => *b,
                Some(a1) => Command::Seq(Box::new(a1), b),
            };
            Ok((Some(next), info))
        }
        Command::If(e, a, b) => {
            let w = eval_expr(mu, &e, registry)?;
            let (next, rule) = if w.is_tt() {
                (*a, Rule::IfTt)
            } else if w.is_ff() {
                (*b, Rule::IfFf)
            } else {
                return Err(Error::StuckGuard {
                    construct: "if",
                    value: w,
                });
            };
            Ok((Some(next), StepInfo { rule, write: None }))
        }
        Command::While(e, body) => {
            let w = eval_expr(mu, &e, registry)?;
            if w.is_tt() {
                let unfolded = Command::Seq(Box::new((*body).clone()), Box::new(Command::While(e, body)));
                Ok((
                    Some(unfolded),
                    StepInfo {
                        rule: Rule::WhileTt,
                        write: None,
                    },
                ))
            } else if w.is_ff() {
                Ok((
                    None,
                    StepInfo {
                        rule: Rule::WhileFf,
                        write: None,
                    },
                ))
            } else {
                Err(Error::StuckGuard {
                    construct: "while",
                    value: w,
                })
            }
        }
    }
}

pub fn step_command(mu: &Store, c: &Command, registry: &Registry) -> Result<StepResult> {
    let mut store = mu.clone();
    let (rest, info) = step_in_place(&mut store, c.clone(), registry)?;
    Ok(StepResult {
        outcome: match rest {
            None => Outcome::Terminal(store),
            Some(c1) => Outcome::Continue(store, c1),
        },
        rule: info.rule,
        loop_increment: info.rule.loop_increment(),
        write: info.write,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Maximum number of steps.
    pub fuel: u64,
    /// Maximum number of configurations and step records kept in a trace;
    /// later steps only update the counters.
    pub trace_cap: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            fuel: 1_000_000,
            trace_cap: 10_000,
        }
    }
}

impl RunOptions {
    pub fn fuel(fuel: u64) -> Self {
        RunOptions {
            fuel,
            ..RunOptions::default()
        }
    }

    pub fn counters_only(fuel: u64) -> Self {
        RunOptions { fuel, trace_cap: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    pub rule: Rule,
    /// Cumulative `t` after this step.
    pub t: u64,
    pub write: Option<(Var, Word)>,
}

/// Configurations `(store, residual)` visited by a sequential run; the
/// residual is `None` once the command has terminated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SeqTrace {
    pub configs: Vec<(Store, Option<Command>)>,
    pub steps: Vec<StepRecord>,
    pub t: u64,
    pub k: u64,
    /// Set when the cap cut off recording.
    pub truncated: bool,
    pub final_store: Store,
}

impl SeqTrace {
    /// One line per step: `k rule t var=word` (or `-` when nothing was
    /// written).
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            let _ = writeln!(out, "{} {} {} {}", i + 1, s.rule, s.t, write_field(&s.write));
        }
        out
    }
}

pub(crate) fn write_field(w: &Option<(Var, Word)>) -> String {
    match w {
        Some((x, d)) => format!("{x}={}", d.as_text()),
        None => "-".to_owned(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Finished,
    FuelExhausted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SeqRun {
    pub status: RunStatus,
    pub trace: SeqTrace,
}

impl SeqRun {
    pub fn finished(&self) -> bool {
        self.status == RunStatus::Finished
    }
}

pub fn run_sequential(mu: &Store, c: &Command, fuel: u64, registry: &Registry) -> Result<SeqRun> {
    run_sequential_with(mu, c, RunOptions::fuel(fuel), registry)
}

pub fn run_sequential_with(mu: &Store, c: &Command, opts: RunOptions, registry: &Registry) -> Result<SeqRun> {
    if opts.fuel == 0 {
        return Err(Error::InvalidArgument("fuel must be at least 1".into()));
    }
    let mut store = mu.clone();
    let mut cur = Some(c.clone());
    let mut trace = SeqTrace {
        configs: Vec::new(),
        steps: Vec::new(),
        t: 0,
        k: 0,
        truncated: false,
        final_store: Store::new(),
    };
    if opts.trace_cap > 0 {
        trace.configs.push((store.clone(), cur.clone()));
    }
    while let Some(cmd) = cur.take() {
        if trace.k == opts.fuel {
            cur = Some(cmd);
            break;
        }
        let (rest, info) = step_in_place(&mut store, cmd, registry)?;
        trace.k += 1;
        trace.t += info.rule.loop_increment();
        if trace.steps.len() < opts.trace_cap {
            trace.steps.push(StepRecord {
                rule: info.rule,
                t: trace.t,
                write: info.write,
            });
            trace.configs.push((store.clone(), rest.clone()));
        } else {
            trace.truncated = true;
        }
        cur = rest;
    }
    trace.final_store = store;
    Ok(SeqRun {
        status: if cur.is_none() {
            RunStatus::Finished
        } else {
            RunStatus::FuelExhausted
        },
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_command;

    fn reg() -> Registry {
        Registry::with_builtins()
    }

    #[test]
    fn eval_examples() {
        let mu = Store::new().with("x", "ab");
        let r = reg();
        assert_eq!(
            eval_expr(&mu, &Expr::op("pred", vec![Expr::var("x")]), &r).unwrap(),
            Word::from("b")
        );
        assert_eq!(eval_expr(&Store::new(), &Expr::var("x"), &r).unwrap(), Word::empty());
        let mut r = reg();
        r.register(crate::ops::builtin("eq[a]").unwrap()).unwrap();
        let mu = Store::new().with("x", "a");
        assert!(eval_expr(&mu, &Expr::op("eq[a]", vec![Expr::var("x")]), &r)
            .unwrap()
            .is_tt());
    }

    #[test]
    fn step_examples() {
        let r = reg();
        let s = step_command(&Store::new(), &Command::Skip, &r).unwrap();
        assert_eq!(s.outcome, Outcome::Terminal(Store::new()));
        assert_eq!(s.loop_increment, 0);

        let w = parse_command("while (x > 0) { x := x - 1 }").unwrap();
        let mu = Store::new().with("x", "1");
        let s = step_command(&mu, &w, &r).unwrap();
        let Command::While(_, body) = &w else { unreachable!() };
        assert_eq!(
            s.outcome,
            Outcome::Continue(mu.clone(), Command::seq((**body).clone(), w.clone()))
        );
        assert_eq!(s.loop_increment, 1);

        let s = step_command(&Store::new(), &w, &r).unwrap();
        assert_eq!(s.outcome, Outcome::Terminal(Store::new()));
        assert_eq!(s.rule, Rule::WhileFf);
    }

    #[test]
    fn stuck_guards() {
        let r = reg();
        let c = parse_command("if (x) { skip } else { skip }").unwrap();
        let e = step_command(&Store::new().with("x", "1"), &c, &r).unwrap_err();
        assert!(matches!(e, Error::StuckGuard { construct: "if", .. }));
        let c = parse_command("while (x) { skip }").unwrap();
        let e = step_command(&Store::new(), &c, &r).unwrap_err();
        assert!(matches!(e, Error::StuckGuard { construct: "while", .. }));
    }

    #[test]
    fn unary_add_run() {
        let c = parse_command("while (x > 0) { x := x - 1; y := y + 1 }").unwrap();
        let mu = Store::new().with("x", "111").with("y", "11");
        let run = run_sequential(&mu, &c, 1000, &reg()).unwrap();
        assert!(run.finished());
        assert_eq!(run.trace.final_store.get("y"), Word::from("11111"));
        assert_eq!(run.trace.t, 3);
        assert!(run.trace.t <= run.trace.k);
        let recount = run.trace.steps.iter().filter(|s| s.rule == Rule::WhileTt).count() as u64;
        assert_eq!(recount, run.trace.t);
    }

    #[test]
    fn skip_runs_in_one_step() {
        let run = run_sequential(&Store::new().with("x", "1"), &Command::Skip, 1, &reg()).unwrap();
        assert!(run.finished());
        assert_eq!((run.trace.k, run.trace.t), (1, 0));
    }

    #[test]
    fn fuel_exhaustion() {
        let c = parse_command("while (x > 0) { skip }").unwrap();
        let run = run_sequential(&Store::new().with("x", "1"), &c, 10, &reg()).unwrap();
        assert_eq!(run.status, RunStatus::FuelExhausted);
        assert_eq!(run.trace.k, 10);
    }

    #[test]
    fn trace_cap_switches_to_counters() {
        let c = parse_command("while (x > 0) { x := x - 1 }").unwrap();
        let mu = Store::new().with("x", "11111");
        let opts = RunOptions {
            fuel: 100,
            trace_cap: 3,
        };
        let run = run_sequential_with(&mu, &c, opts, &reg()).unwrap();
        assert!(run.trace.truncated);
        assert_eq!(run.trace.steps.len(), 3);
        assert_eq!(run.trace.configs.len(), 4);
        assert_eq!(run.trace.t, 5);
    }

    #[test]
    fn dump_format() {
        let c = parse_command("x := x + 1; skip").unwrap();
        let run = run_sequential(&Store::new(), &c, 10, &reg()).unwrap();
        assert_eq!(run.trace.dump(), "1 assign 0 x=1\n2 skip 0 -\n");
    }
}
