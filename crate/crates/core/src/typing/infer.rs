//! Tier inference by backtracking search over variable tiers, and
//! minimal conflict cores for untypable programs.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use super::{
    delta_diagnostics, describe_constraint, type_command, ConstraintId, Diagnostic, OpTypeEnv, Relax, SetChecker,
    TierSet, TypeDerivation, VarTypeEnv,
};
use crate::error::Result;
use crate::parser::{walk_paths, SourceFile};
use crate::syntax::{Command, ThreadId, Tier, Var};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum InferVerdict {
    Solution { derivation: TypeDerivation },
    Unsatisfiable { core: Vec<Diagnostic> },
}

impl InferVerdict {
    pub fn gamma(&self) -> Option<&VarTypeEnv> {
        match self {
            InferVerdict::Solution { derivation } => Some(&derivation.gamma),
            InferVerdict::Unsatisfiable { .. } => None,
        }
    }
}

struct Problem<'a> {
    delta: &'a OpTypeEnv,
    threads: Vec<(&'a ThreadId, &'a Command)>,
    /// Variables to branch on, in order.
    order: Vec<Var>,
    prefer_one: HashSet<Var>,
}

type Env = BTreeMap<Var, TierSet>;

impl Problem<'_> {
    fn feasible(&self, env: &Env, relax: &Relax) -> Result<bool> {
        for (tid, body) in &self.threads {
            let ck = SetChecker {
                gamma: env,
                delta: self.delta,
                relax,
                thread: tid,
            };
            if ck.cmd(body, &mut vec![])?.is_empty() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Fixes every open variable that has only one feasible tier. Returns
    /// false when some variable has none.
    fn propagate(&self, env: &mut Env, relax: &Relax) -> Result<bool> {
        loop {
            let mut changed = false;
            for x in &self.order {
                if env[x] != TierSet::BOTH {
                    continue;
                }
                let mut ok = TierSet::EMPTY;
                for t in Tier::ALL {
                    env.insert(x.clone(), TierSet::single(t));
                    if self.feasible(env, relax)? {
                        ok.insert(t);
                    }
                }
                env.insert(x.clone(), ok);
                if ok.is_empty() {
                    return Ok(false);
                }
                changed |= ok != TierSet::BOTH;
            }
            if !changed {
                return Ok(true);
            }
        }
    }

    fn search(&self, env: &mut Env, relax: &Relax) -> Result<bool> {
        if !self.feasible(env, relax)? || !self.propagate(env, relax)? {
            return Ok(false);
        }
        let Some(x) = self.order.iter().find(|x| env[*x] == TierSet::BOTH).cloned() else {
            return Ok(true);
        };
        let first = if self.prefer_one.contains(&x) {
            Tier::One
        } else {
            Tier::Zero
        };
        let other = if first == Tier::One { Tier::Zero } else { Tier::One };
        for t in [first, other] {
            let mut next = env.clone();
            next.insert(x.clone(), TierSet::single(t));
            if self.search(&mut next, relax)? {
                *env = next;
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn solve(&self, init: &Env, relax: &Relax) -> Result<Option<VarTypeEnv>> {
        let mut env = init.clone();
        if !self.search(&mut env, relax)? {
            return Ok(None);
        }
        Ok(Some(
            env.into_iter().map(|(x, s)| (x, s.min().expect("solved"))).collect(),
        ))
    }

    fn constraints(&self, with_ops: bool) -> Vec<ConstraintId> {
        let mut out = Vec::new();
        for (tid, body) in &self.threads {
            walk_paths(body, &mut vec![], &mut |p, c| {
                let e = match c {
                    Command::Assign(_, e) | Command::If(e, _, _) | Command::While(e, _) => e,
                    Command::Seq(..) | Command::Skip => return,
                };
                out.push(ConstraintId {
                    thread: (*tid).clone(),
                    path: p.clone(),
                    op: None,
                });
                if with_ops {
                    let mut n = 0;
                    e.for_each_op(&mut |_, _| {
                        out.push(ConstraintId {
                            thread: (*tid).clone(),
                            path: p.clone(),
                            op: Some(n),
                        });
                        n += 1;
                    });
                }
            });
        }
        out
    }

    /// Minimal set of constraints that is unsatisfiable on its own, found by
    /// deleting constraints one at a time.
    fn core(&self, init: &Env) -> Result<Vec<ConstraintId>> {
        let mut universe = self.constraints(false);
        let all_off = Relax {
            disabled: universe.iter().cloned().collect(),
        };
        if self.solve(init, &all_off)?.is_some() {
            // structural constraints alone explain the conflict
        } else {
            universe = self.constraints(true);
        }
        let mut keep: Vec<ConstraintId> = universe.clone();
        let mut i = 0;
        while i < keep.len() {
            let trial: Vec<&ConstraintId> = keep
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, c)| c)
                .collect();
            let relax = Relax {
                disabled: universe.iter().filter(|c| !trial.contains(c)).cloned().collect(),
            };
            if self.solve(init, &relax)?.is_none() {
                keep.remove(i);
            } else {
                i += 1;
            }
        }
        Ok(keep)
    }
}

fn first_occurrence_order(file: &SourceFile) -> Vec<Var> {
    let mut seen = Vec::new();
    for body in file.threads.values() {
        body.vars_in_order(&mut seen);
    }
    let mut out: Vec<Var> = Vec::new();
    for x in seen {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

fn guard_vars(file: &SourceFile) -> HashSet<Var> {
    let mut out = HashSet::new();
    for body in file.threads.values() {
        body.walk(&mut |c| {
            if let Command::While(e, _) = c {
                out.extend(e.free_vars());
            }
        });
    }
    out
}

/// Finds a Γ extending the annotations under which every thread types, or a
/// minimal set of conflicting rule applications.
pub fn infer_tiers(file: &SourceFile) -> Result<InferVerdict> {
    let delta = file.delta();
    let registry = file.registry();
    let bad = delta_diagnostics(file, &delta, &registry)?;
    if !bad.is_empty() {
        return Ok(InferVerdict::Unsatisfiable { core: bad });
    }
    let order: Vec<Var> = first_occurrence_order(file)
        .into_iter()
        .filter(|x| !file.annotations.contains_key(x))
        .collect();
    let problem = Problem {
        delta: &delta,
        threads: file.threads.iter().collect(),
        order,
        prefer_one: guard_vars(file),
    };
    let mut init: Env = file
        .annotations
        .iter()
        .map(|(x, &t)| (x.clone(), TierSet::single(t)))
        .collect();
    for x in &problem.order {
        init.insert(x.clone(), TierSet::BOTH);
    }
    match problem.solve(&init, &Relax::default())? {
        Some(gamma) => {
            let mut threads = BTreeMap::new();
            for (tid, body) in &file.threads {
                let (_, d) = type_command(&gamma, &delta, body)?
                    .into_iter()
                    .next_back()
                    .expect("solution types every thread");
                threads.insert(tid.clone(), d);
            }
            Ok(InferVerdict::Solution {
                derivation: TypeDerivation { gamma, threads },
            })
        }
        None => {
            let core = problem.core(&init)?;
            Ok(InferVerdict::Unsatisfiable {
                core: core.iter().map(|c| describe_constraint(file, c)).collect(),
            })
        }
    }
}

/// Conflict core for one thread under a fixed, complete Γ.
pub(crate) fn thread_core(
    file: &SourceFile,
    gamma: &VarTypeEnv,
    delta: &OpTypeEnv,
    tid: &ThreadId,
) -> Result<Vec<Diagnostic>> {
    let (tid, body) = file.threads.get_key_value(tid).expect("thread exists");
    let problem = Problem {
        delta,
        threads: vec![(tid, body)],
        order: vec![],
        prefer_one: HashSet::new(),
    };
    let init: Env = gamma.iter().map(|(x, &t)| (x.clone(), TierSet::single(t))).collect();
    Ok(problem
        .core(&init)?
        .iter()
        .map(|c| describe_constraint(file, c))
        .collect())
}
