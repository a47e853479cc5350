//! Tier typing: the rules for expressions and commands, safety of operator
//! environments, whole-program checking, and tier inference.

mod infer;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ops::{self, validate_class, ClassVerdict, OpClass, Registry, ValidationConfig};
use crate::parser::{pretty_command, pretty_expr, walk_paths, NodePath, SourceFile};
use crate::syntax::{program_vars, Command, Expr, Span, ThreadId, Tier, Var};

pub use infer::{infer_tiers, InferVerdict};

/// `α₁ → … → αₙ → α`
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct OpSig {
    pub args: Vec<Tier>,
    pub result: Tier,
}

impl OpSig {
    pub fn new(args: &[Tier], result: Tier) -> Self {
        OpSig {
            args: args.to_vec(),
            result,
        }
    }
}

impl fmt::Display for OpSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.args {
            write!(f, "{a}->")?;
        }
        write!(f, "{}", self.result)
    }
}

/// Variable typing environment Γ.
pub type VarTypeEnv = BTreeMap<Var, Tier>;

/// Operator typing environment Δ: each operator maps to a finite set of
/// signatures.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpTypeEnv {
    sigs: BTreeMap<String, Vec<OpSig>>,
}

impl OpTypeEnv {
    pub fn new() -> Self {
        OpTypeEnv::default()
    }

    pub fn insert(&mut self, op: impl Into<String>, sigs: Vec<OpSig>) {
        self.sigs.insert(op.into(), sigs);
    }

    pub fn get(&self, op: &str) -> Option<&[OpSig]> {
        self.sigs.get(op).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<OpSig>)> {
        self.sigs.iter()
    }
}

/// Every signature admitted by a safe environment for an operator of the
/// given arity and class.
pub fn default_sigs(arity: usize, class: OpClass) -> Vec<OpSig> {
    let mut out = Vec::new();
    for mask in 0..(1u32 << arity) {
        let args: Vec<Tier> = (0..arity)
            .map(|i| if mask >> i & 1 == 1 { Tier::One } else { Tier::Zero })
            .collect();
        let meet = args.iter().fold(Tier::One, |m, &a| m.meet(a));
        for result in Tier::ALL {
            if result.le(meet) && (class.is_neutral() || result == Tier::Zero) {
                out.push(OpSig {
                    args: args.clone(),
                    result,
                });
            }
        }
    }
    out
}

impl SourceFile {
    /// Literal operators appearing in thread bodies.
    pub fn literals(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for c in self.threads.values() {
            c.for_each_expr(&mut |e| {
                e.for_each_op(&mut |name, _| {
                    if ops::is_literal(name) {
                        out.insert(name.to_owned());
                    }
                })
            });
        }
        out
    }

    /// Operator semantics under the declared classes.
    pub fn registry(&self) -> Registry {
        let mut r = Registry::new();
        for d in &self.ops {
            let def = ops::builtin(&d.name)
                .expect("parser only admits builtin names")
                .with_class(d.class);
            r.register(def).expect("parser rejects duplicate declarations");
        }
        for lit in self.literals() {
            if r.get(&lit).is_none() {
                r.register(ops::builtin(&lit).expect("literal")).expect("fresh");
            }
        }
        r
    }

    /// Δ: declared signature sets, or every safe signature when omitted.
    pub fn delta(&self) -> OpTypeEnv {
        let mut delta = OpTypeEnv::new();
        for d in &self.ops {
            let sigs = d.sigs.clone().unwrap_or_else(|| default_sigs(d.arity, d.class));
            delta.insert(d.name.clone(), sigs);
        }
        for lit in self.literals() {
            if delta.get(&lit).is_none() {
                let def = ops::builtin(&lit).expect("literal");
                delta.insert(lit, default_sigs(0, def.class));
            }
        }
        delta
    }
}

// ---- tier sets ----

/// Subset of `{0, 1}`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TierSet(u8);

impl TierSet {
    pub const EMPTY: TierSet = TierSet(0);
    pub const BOTH: TierSet = TierSet(0b11);

    fn bit(t: Tier) -> u8 {
        match t {
            Tier::Zero => 1,
            Tier::One => 2,
        }
    }

    pub fn single(t: Tier) -> Self {
        TierSet(Self::bit(t))
    }

    pub fn contains(self, t: Tier) -> bool {
        self.0 & Self::bit(t) != 0
    }

    pub fn insert(&mut self, t: Tier) {
        self.0 |= Self::bit(t);
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl DoubleEndedIterator<Item = Tier> {
        Tier::ALL.into_iter().filter(move |&t| self.contains(t))
    }

    pub fn max(self) -> Option<Tier> {
        self.iter().last()
    }

    pub fn min(self) -> Option<Tier> {
        self.iter().next()
    }

    pub fn union(self, other: TierSet) -> TierSet {
        TierSet(self.0 | other.0)
    }

    pub fn intersect(self, other: TierSet) -> TierSet {
        TierSet(self.0 & other.0)
    }
}

impl fmt::Debug for TierSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

// ---- derivations ----

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExprDeriv {
    pub tier: Tier,
    pub node: ExprDerivNode,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ExprDerivNode {
    Var,
    Op { sig: OpSig, args: Vec<ExprDeriv> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CmdDeriv {
    pub tier: Tier,
    pub node: CmdDerivNode,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum CmdDerivNode {
    Skip,
    Assign(ExprDeriv),
    Seq(Box<CmdDeriv>, Box<CmdDeriv>),
    If(ExprDeriv, Box<CmdDeriv>, Box<CmdDeriv>),
    While(ExprDeriv, Box<CmdDeriv>),
}

/// A typing derivation per thread, under one shared Γ.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TypeDerivation {
    pub gamma: VarTypeEnv,
    pub threads: BTreeMap<ThreadId, CmdDeriv>,
}

impl TypeDerivation {
    pub fn thread_tiers(&self) -> BTreeMap<ThreadId, Tier> {
        self.threads.iter().map(|(k, d)| (k.clone(), d.tier)).collect()
    }
}

// ---- relaxed rule evaluation ----

/// Identifies one side condition of the rules: an assignment, `if` or
/// `while` node, or (when `op` is set) the signature choice at the n-th
/// operator application of that node's expression.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstraintId {
    pub thread: ThreadId,
    pub path: NodePath,
    pub op: Option<u32>,
}

/// Side conditions switched off while searching for conflict cores.
#[derive(Clone, Debug, Default)]
pub(crate) struct Relax {
    pub disabled: HashSet<ConstraintId>,
}

impl Relax {
    fn off(&self, thread: &ThreadId, path: &NodePath, op: Option<u32>) -> bool {
        !self.disabled.is_empty()
            && self.disabled.contains(&ConstraintId {
                thread: thread.clone(),
                path: path.clone(),
                op,
            })
    }
}

/// Γ as seen by the set computation: each variable maps to the tiers it may
/// still take (a singleton once fixed).
pub(crate) trait GammaView {
    fn tiers(&self, x: &Var) -> Option<TierSet>;
}

impl GammaView for VarTypeEnv {
    fn tiers(&self, x: &Var) -> Option<TierSet> {
        self.get(x).map(|&t| TierSet::single(t))
    }
}

impl GammaView for BTreeMap<Var, TierSet> {
    fn tiers(&self, x: &Var) -> Option<TierSet> {
        self.get(x).copied()
    }
}

pub(crate) struct SetChecker<'a, G: GammaView + ?Sized> {
    pub gamma: &'a G,
    pub delta: &'a OpTypeEnv,
    pub relax: &'a Relax,
    pub thread: &'a ThreadId,
}

impl<G: GammaView + ?Sized> SetChecker<'_, G> {
    pub fn expr(&self, e: &Expr, path: &NodePath, counter: &mut u32) -> Result<TierSet> {
        match e {
            Expr::Var(x) => self.gamma.tiers(x).ok_or_else(|| Error::UnboundVariable(x.clone())),
            Expr::Op(name, args) => {
                let my = *counter;
                *counter += 1;
                let sigs = self
                    .delta
                    .get(name)
                    .ok_or_else(|| Error::UnknownOperator(name.clone()))?;
                let mut arg_sets = Vec::with_capacity(args.len());
                for a in args {
                    arg_sets.push(self.expr(a, path, counter)?);
                }
                if self.relax.off(self.thread, path, Some(my)) {
                    return Ok(if arg_sets.iter().all(|s| !s.is_empty()) {
                        TierSet::BOTH
                    } else {
                        TierSet::EMPTY
                    });
                }
                let mut out = TierSet::EMPTY;
                for sig in sigs {
                    if sig.args.len() == args.len() && sig.args.iter().zip(&arg_sets).all(|(&t, s)| s.contains(t)) {
                        out.insert(sig.result);
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn cmd(&self, c: &Command, path: &mut NodePath) -> Result<TierSet> {
        let mut counter = 0;
        Ok(match c {
            Command::Skip => TierSet::BOTH,
            Command::Assign(x, e) => {
                let target = self.gamma.tiers(x).ok_or_else(|| Error::UnboundVariable(x.clone()))?;
                let rhs = self.expr(e, path, &mut counter)?;
                if rhs.is_empty() {
                    return Ok(TierSet::EMPTY);
                }
                if self.relax.off(self.thread, path, None) {
                    return Ok(target);
                }
                let mut out = TierSet::EMPTY;
                for b in target.iter() {
                    if rhs.iter().any(|a| b.le(a)) {
                        out.insert(b);
                    }
                }
                out
            }
            Command::Seq(a, b) => {
                path.push(0);
                let sa = self.cmd(a, path)?;
                path.pop();
                path.push(1);
                let sb = self.cmd(b, path)?;
                path.pop();
                let mut out = TierSet::EMPTY;
                for x in sa.iter() {
                    for y in sb.iter() {
                        out.insert(x.join(y));
                    }
                }
                out
            }
            Command::If(e, a, b) => {
                let g = self.expr(e, path, &mut counter)?;
                path.push(0);
                let sa = self.cmd(a, path)?;
                path.pop();
                path.push(1);
                let sb = self.cmd(b, path)?;
                path.pop();
                if self.relax.off(self.thread, path, None) {
                    if g.is_empty() || sa.is_empty() || sb.is_empty() {
                        TierSet::EMPTY
                    } else {
                        sa.union(sb)
                    }
                } else {
                    g.intersect(sa).intersect(sb)
                }
            }
            Command::While(e, body) => {
                let g = self.expr(e, path, &mut counter)?;
                path.push(0);
                let sb = self.cmd(body, path)?;
                path.pop();
                let guard_ok = if self.relax.off(self.thread, path, None) {
                    !g.is_empty()
                } else {
                    g.contains(Tier::One)
                };
                if guard_ok && !sb.is_empty() {
                    TierSet::single(Tier::One)
                } else {
                    TierSet::EMPTY
                }
            }
        })
    }
}

fn no_relax() -> &'static Relax {
    static EMPTY: std::sync::OnceLock<Relax> = std::sync::OnceLock::new();
    EMPTY.get_or_init(Relax::default)
}

fn anon() -> &'static ThreadId {
    static ANON: std::sync::OnceLock<ThreadId> = std::sync::OnceLock::new();
    ANON.get_or_init(|| ThreadId::from("_"))
}

/// Tiers derivable for `e`.
pub fn expr_tiers(gamma: &VarTypeEnv, delta: &OpTypeEnv, e: &Expr) -> Result<TierSet> {
    let ck = SetChecker {
        gamma,
        delta,
        relax: no_relax(),
        thread: anon(),
    };
    ck.expr(e, &vec![], &mut 0)
}

/// Tiers derivable for `c`.
pub fn command_tiers(gamma: &VarTypeEnv, delta: &OpTypeEnv, c: &Command) -> Result<TierSet> {
    let ck = SetChecker {
        gamma,
        delta,
        relax: no_relax(),
        thread: anon(),
    };
    ck.cmd(c, &mut vec![])
}

fn derive_expr(gamma: &VarTypeEnv, delta: &OpTypeEnv, e: &Expr, tier: Tier) -> Result<Option<ExprDeriv>> {
    match e {
        Expr::Var(x) => {
            let t = *gamma.get(x).ok_or_else(|| Error::UnboundVariable(x.clone()))?;
            Ok((t == tier).then_some(ExprDeriv {
                tier,
                node: ExprDerivNode::Var,
            }))
        }
        Expr::Op(name, args) => {
            let sigs = delta.get(name).ok_or_else(|| Error::UnknownOperator(name.clone()))?;
            let sets = args
                .iter()
                .map(|a| expr_tiers(gamma, delta, a))
                .collect::<Result<Vec<_>>>()?;
            for sig in sigs {
                if sig.result != tier
                    || sig.args.len() != args.len()
                    || !sig.args.iter().zip(&sets).all(|(&t, s)| s.contains(t))
                {
                    continue;
                }
                let mut ds = Vec::with_capacity(args.len());
                for (a, &t) in args.iter().zip(&sig.args) {
                    ds.push(derive_expr(gamma, delta, a, t)?.expect("tier set says derivable"));
                }
                return Ok(Some(ExprDeriv {
                    tier,
                    node: ExprDerivNode::Op {
                        sig: sig.clone(),
                        args: ds,
                    },
                }));
            }
            Ok(None)
        }
    }
}

fn derive_cmd(gamma: &VarTypeEnv, delta: &OpTypeEnv, c: &Command, tier: Tier) -> Result<Option<CmdDeriv>> {
    let set = command_tiers(gamma, delta, c)?;
    if !set.contains(tier) {
        return Ok(None);
    }
    let pick = |cmd: &Command, t: Tier| -> Result<CmdDeriv> {
        Ok(derive_cmd(gamma, delta, cmd, t)?.expect("tier set says derivable"))
    };
    let node = match c {
        Command::Skip => CmdDerivNode::Skip,
        Command::Assign(_, e) => {
            let rhs = expr_tiers(gamma, delta, e)?;
            let a = if rhs.contains(tier) { tier } else { Tier::One };
            CmdDerivNode::Assign(derive_expr(gamma, delta, e, a)?.expect("derivable"))
        }
        Command::Seq(a, b) => {
            let (sa, sb) = (command_tiers(gamma, delta, a)?, command_tiers(gamma, delta, b)?);
            let (ta, tb) = sa
                .iter()
                .rev()
                .flat_map(|x| sb.iter().rev().map(move |y| (x, y)))
                .find(|(x, y)| x.join(*y) == tier)
                .expect("derivable");
            CmdDerivNode::Seq(Box::new(pick(a, ta)?), Box::new(pick(b, tb)?))
        }
        Command::If(e, a, b) => CmdDerivNode::If(
            derive_expr(gamma, delta, e, tier)?.expect("derivable"),
            Box::new(pick(a, tier)?),
            Box::new(pick(b, tier)?),
        ),
        Command::While(e, body) => {
            let tb = command_tiers(gamma, delta, body)?.max().expect("derivable");
            CmdDerivNode::While(
                derive_expr(gamma, delta, e, Tier::One)?.expect("derivable"),
                Box::new(pick(body, tb)?),
            )
        }
    };
    Ok(Some(CmdDeriv { tier, node }))
}

/// Every derivable tier of `e`, each with a witness derivation.
pub fn type_expr(gamma: &VarTypeEnv, delta: &OpTypeEnv, e: &Expr) -> Result<BTreeMap<Tier, ExprDeriv>> {
    let mut out = BTreeMap::new();
    for t in expr_tiers(gamma, delta, e)?.iter() {
        out.insert(t, derive_expr(gamma, delta, e, t)?.expect("derivable"));
    }
    Ok(out)
}

/// Every derivable tier of `c`, each with a witness derivation. An empty
/// map means `c` is untypable.
pub fn type_command(gamma: &VarTypeEnv, delta: &OpTypeEnv, c: &Command) -> Result<BTreeMap<Tier, CmdDeriv>> {
    let mut out = BTreeMap::new();
    for t in command_tiers(gamma, delta, c)?.iter() {
        out.insert(t, derive_cmd(gamma, delta, c, t)?.expect("derivable"));
    }
    Ok(out)
}

/// Re-checks a derivation rule by rule.
pub fn verify_expr_derivation(gamma: &VarTypeEnv, delta: &OpTypeEnv, e: &Expr, d: &ExprDeriv) -> bool {
    match (e, &d.node) {
        (Expr::Var(x), ExprDerivNode::Var) => gamma.get(x) == Some(&d.tier),
        (Expr::Op(name, args), ExprDerivNode::Op { sig, args: ds }) => {
            delta.get(name).is_some_and(|s| s.contains(sig))
                && sig.result == d.tier
                && args.len() == ds.len()
                && sig.args.len() == ds.len()
                && args
                    .iter()
                    .zip(ds)
                    .zip(&sig.args)
                    .all(|((a, ad), &t)| ad.tier == t && verify_expr_derivation(gamma, delta, a, ad))
        }
        _ => false,
    }
}

pub fn verify_derivation(gamma: &VarTypeEnv, delta: &OpTypeEnv, c: &Command, d: &CmdDeriv) -> bool {
    let ve = |e, ed| verify_expr_derivation(gamma, delta, e, ed);
    match (c, &d.node) {
        (Command::Skip, CmdDerivNode::Skip) => true,
        (Command::Assign(x, e), CmdDerivNode::Assign(ed)) => {
            gamma.get(x) == Some(&d.tier) && d.tier.le(ed.tier) && ve(e, ed)
        }
        (Command::Seq(a, b), CmdDerivNode::Seq(da, db)) => {
            d.tier == da.tier.join(db.tier)
                && verify_derivation(gamma, delta, a, da)
                && verify_derivation(gamma, delta, b, db)
        }
        (Command::If(e, a, b), CmdDerivNode::If(ed, da, db)) => {
            ed.tier == d.tier
                && da.tier == d.tier
                && db.tier == d.tier
                && ve(e, ed)
                && verify_derivation(gamma, delta, a, da)
                && verify_derivation(gamma, delta, b, db)
        }
        (Command::While(e, body), CmdDerivNode::While(ed, db)) => {
            d.tier == Tier::One && ed.tier == Tier::One && ve(e, ed) && verify_derivation(gamma, delta, body, db)
        }
        _ => false,
    }
}

// ---- safety of Δ ----

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SafetyViolation {
    pub op: String,
    pub sig: OpSig,
    pub reason: String,
}

/// Checks that every signature satisfies `α ≼ ∧αᵢ`, and that operators not
/// declared neutral only return tier 0.
pub fn check_safe_delta(delta: &OpTypeEnv, registry: &Registry) -> Result<Vec<SafetyViolation>> {
    let mut out = Vec::new();
    for (op, sigs) in delta.iter() {
        let def = registry.lookup(op)?;
        for sig in sigs {
            let meet = sig.args.iter().fold(Tier::One, |m, &a| m.meet(a));
            if !sig.result.le(meet) {
                out.push(SafetyViolation {
                    op: op.clone(),
                    sig: sig.clone(),
                    reason: format!(
                        "result tier {} exceeds the meet {meet} of the argument tiers",
                        sig.result
                    ),
                });
            } else if !def.class.is_neutral() && sig.result != Tier::Zero {
                out.push(SafetyViolation {
                    op: op.clone(),
                    sig: sig.clone(),
                    reason: format!(
                        "operator is {} but not neutral, so its result must be tier 0",
                        def.class
                    ),
                });
            }
        }
    }
    Ok(out)
}

// ---- whole programs ----

/// An explanation attached to a rejection.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Rule or check that failed: `assign`, `while`, `if`, `op`, `delta`,
    /// `class`, `annotation`.
    pub rule: String,
    pub thread: Option<ThreadId>,
    pub span: Option<Span>,
    pub message: String,
    pub vars: Vec<Var>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(s) = self.span {
            write!(f, "{s}: ")?;
        }
        write!(f, "[{}] ", self.rule)?;
        if let Some(t) = &self.thread {
            write!(f, "thread {t}: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ProgramVerdict {
    Safe { derivation: TypeDerivation },
    Rejected { diagnostics: Vec<Diagnostic> },
}

impl ProgramVerdict {
    pub fn is_safe(&self) -> bool {
        matches!(self, ProgramVerdict::Safe { .. })
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            ProgramVerdict::Rejected { diagnostics } => diagnostics,
            ProgramVerdict::Safe { .. } => &[],
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    /// Validate declared operator classes empirically; `None` skips it.
    pub validation: Option<ValidationConfig>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            validation: Some(ValidationConfig {
                max_len: 3,
                cap: 50_000,
                seed: 0,
            }),
        }
    }
}

pub(crate) fn delta_diagnostics(file: &SourceFile, delta: &OpTypeEnv, registry: &Registry) -> Result<Vec<Diagnostic>> {
    let mut out: Vec<Diagnostic> = check_safe_delta(delta, registry)?
        .into_iter()
        .map(|v| Diagnostic {
            rule: "delta".into(),
            thread: None,
            span: file.spans.ops.get(&v.op).copied(),
            message: format!("signature {} of `{}`: {}", v.sig, v.op, v.reason),
            vars: vec![],
        })
        .collect();
    for (op, sigs) in delta.iter() {
        let arity = registry.lookup(op)?.arity;
        if let Some(bad) = sigs.iter().find(|s| s.args.len() != arity) {
            out.push(Diagnostic {
                rule: "delta".into(),
                thread: None,
                span: file.spans.ops.get(op).copied(),
                message: format!("signature {bad} of `{op}` does not match arity {arity}"),
                vars: vec![],
            });
        }
    }
    Ok(out)
}

fn class_diagnostics(file: &SourceFile, registry: &Registry, cfg: &ValidationConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for def in registry.iter() {
        if let ClassVerdict::Counterexample { inputs, output } = validate_class(def, &file.alphabet, cfg) {
            let shown: Vec<String> = inputs.iter().map(|w| w.to_string()).collect();
            out.push(Diagnostic {
                rule: "class".into(),
                thread: None,
                span: file.spans.ops.get(&def.name).copied(),
                message: format!(
                    "`{}` declared {} but maps ({}) to {}",
                    def.name,
                    def.class,
                    shown.join(", "),
                    output
                ),
                vars: vec![],
            });
        }
    }
    out
}

/// Describes a constraint for diagnostics.
pub(crate) fn describe_constraint(file: &SourceFile, id: &ConstraintId) -> Diagnostic {
    let mut target = None;
    if let Some(root) = file.threads.get(&id.thread) {
        walk_paths(root, &mut vec![], &mut |p, c| {
            if *p == id.path {
                target = Some(c.clone());
            }
        });
    }
    let span = file.command_span(&id.thread, &id.path);
    let (rule, message, vars) = match (&target, id.op) {
        (Some(c), Some(k)) => {
            let e = match c {
                Command::Assign(_, e) | Command::If(e, _, _) | Command::While(e, _) => e,
                _ => unreachable!("op constraints live in expressions"),
            };
            let mut n = 0;
            let mut found = None;
            e.for_each_op(&mut |name, args| {
                if n == k {
                    found = Some(Expr::Op(name.to_owned(), args.to_vec()));
                }
                n += 1;
            });
            let sub = found.expect("op index in range");
            (
                "op",
                format!("no signature of `{}` fits its arguments", pretty_expr(&sub)),
                sub.free_vars().into_iter().collect(),
            )
        }
        (Some(Command::Assign(x, e)), None) => {
            let mut vars = vec![x.clone()];
            vars.extend(e.free_vars().into_iter().filter(|v| v != x));
            (
                "assign",
                format!(
                    "`{x} := {}` requires tier({x}) ≼ tier({})",
                    pretty_expr(e),
                    pretty_expr(e)
                ),
                vars,
            )
        }
        (Some(Command::While(e, _)), None) => (
            "while",
            format!("guard `{}` of while loop must be tier 1", pretty_expr(e)),
            e.free_vars().into_iter().collect(),
        ),
        (Some(c @ Command::If(e, _, _)), None) => (
            "if",
            format!(
                "guard `{}` and both branches of `{}` must share one tier",
                pretty_expr(e),
                pretty_command(c)
            ),
            e.free_vars().into_iter().collect(),
        ),
        _ => ("unknown", "unknown constraint".to_owned(), vec![]),
    };
    Diagnostic {
        rule: rule.into(),
        thread: Some(id.thread.clone()),
        span,
        message,
        vars,
    }
}

/// Checks a fully annotated program: Δ is safe, declared classes hold on
/// small inputs, and every thread types under the shared Γ. The recorded
/// derivation for each thread is at its largest derivable tier.
pub fn check_program(file: &SourceFile) -> Result<ProgramVerdict> {
    check_program_with(file, &CheckOptions::default())
}

pub fn check_program_with(file: &SourceFile, opts: &CheckOptions) -> Result<ProgramVerdict> {
    let registry = file.registry();
    let delta = file.delta();
    let mut diags = delta_diagnostics(file, &delta, &registry)?;
    if let Some(cfg) = &opts.validation {
        diags.extend(class_diagnostics(file, &registry, cfg));
    }
    let missing: Vec<Var> = program_vars(&file.threads)
        .into_iter()
        .filter(|x| !file.annotations.contains_key(x))
        .collect();
    if !missing.is_empty() {
        let names: Vec<&str> = missing.iter().map(Var::as_str).collect();
        diags.push(Diagnostic {
            rule: "annotation".into(),
            thread: None,
            span: None,
            message: format!("variables without a tier annotation: {}", names.join(", ")),
            vars: missing,
        });
    }
    if !diags.is_empty() {
        return Ok(ProgramVerdict::Rejected { diagnostics: diags });
    }
    let gamma = file.annotations.clone();
    let mut threads = BTreeMap::new();
    for (tid, body) in &file.threads {
        let tiers = type_command(&gamma, &delta, body)?;
        match tiers.into_iter().next_back() {
            Some((_, d)) => {
                threads.insert(tid.clone(), d);
            }
            None => {
                let core = infer::thread_core(file, &gamma, &delta, tid)?;
                diags.extend(core);
            }
        }
    }
    if diags.is_empty() {
        Ok(ProgramVerdict::Safe {
            derivation: TypeDerivation { gamma, threads },
        })
    } else {
        Ok(ProgramVerdict::Rejected { diagnostics: diags })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::Registry;

    fn sig(args: &[u8], r: u8) -> OpSig {
        let t = |d: &u8| Tier::from_digit(*d as u64).unwrap();
        OpSig {
            args: args.iter().map(t).collect(),
            result: t(&r),
        }
    }

    fn reg(names: &[&str]) -> Registry {
        let mut r = Registry::new();
        for n in names {
            r.register(ops::builtin(n).unwrap()).unwrap();
        }
        r
    }

    #[test]
    fn safe_delta_examples() {
        let r = reg(&["pred", "suc[a]"]);
        let mut d = OpTypeEnv::new();
        d.insert("pred", vec![sig(&[0], 0), sig(&[1], 1), sig(&[1], 0)]);
        assert!(check_safe_delta(&d, &r).unwrap().is_empty());

        let mut d = OpTypeEnv::new();
        d.insert("suc[a]", vec![sig(&[1], 1)]);
        let v = check_safe_delta(&d, &r).unwrap();
        assert_eq!(v.len(), 1);
        assert!(v[0].reason.contains("not neutral"));

        let mut d = OpTypeEnv::new();
        d.insert("pred", vec![sig(&[0], 1)]);
        let v = check_safe_delta(&d, &r).unwrap();
        assert!(v[0].reason.contains("exceeds the meet"));

        let mut d = OpTypeEnv::new();
        d.insert("nope", vec![]);
        assert!(matches!(check_safe_delta(&d, &r), Err(Error::UnknownOperator(_))));
    }

    #[test]
    fn default_sigs_match_safe_sets() {
        let s = default_sigs(1, OpClass::Subword);
        assert_eq!(s, vec![sig(&[0], 0), sig(&[1], 0), sig(&[1], 1)]);
        let s = default_sigs(1, OpClass::Positive(1));
        assert_eq!(s, vec![sig(&[0], 0), sig(&[1], 0)]);
        assert_eq!(default_sigs(0, OpClass::Subword), vec![sig(&[], 0), sig(&[], 1)]);
    }

    #[test]
    fn expr_typing_examples() {
        let gamma: VarTypeEnv = [(Var::from("x"), Tier::One)].into();
        let mut delta = OpTypeEnv::new();
        delta.insert("pred", vec![sig(&[1], 1), sig(&[1], 0)]);
        delta.insert("suc[a]", default_sigs(1, OpClass::Positive(1)));
        let x = Expr::var("x");
        assert_eq!(
            type_expr(&gamma, &delta, &x)
                .unwrap()
                .keys()
                .copied()
                .collect::<Vec<_>>(),
            vec![Tier::One]
        );
        let p = Expr::op("pred", vec![x.clone()]);
        let ts = type_expr(&gamma, &delta, &p).unwrap();
        assert_eq!(ts.len(), 2);
        for (t, d) in &ts {
            assert_eq!(d.tier, *t);
            assert!(verify_expr_derivation(&gamma, &delta, &p, d));
        }
        let g0: VarTypeEnv = [(Var::from("x"), Tier::Zero)].into();
        let s = Expr::op("suc[a]", vec![x]);
        assert_eq!(expr_tiers(&g0, &delta, &s).unwrap(), TierSet::single(Tier::Zero));
    }

    #[test]
    fn skip_admits_both() {
        let t = type_command(&VarTypeEnv::new(), &OpTypeEnv::new(), &Command::Skip).unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn unbound_and_unknown_errors() {
        let e = expr_tiers(&VarTypeEnv::new(), &OpTypeEnv::new(), &Expr::var("x"));
        assert!(matches!(e, Err(Error::UnboundVariable(_))));
        let g: VarTypeEnv = [(Var::from("x"), Tier::One)].into();
        let e = expr_tiers(&g, &OpTypeEnv::new(), &Expr::op("f", vec![Expr::var("x")]));
        assert!(matches!(e, Err(Error::UnknownOperator(_))));
    }
}
