//! Abstract syntax of the while-language, stores, and the two-point tier lattice.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};

use crate::word::Word;

macro_rules! name_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.0)
            }
        }
    };
}

name_type!(
    /// A program variable.
    Var
);
name_type!(
    /// A thread identifier. Lives in a namespace separate from variables.
    ThreadId
);

/// Line/column position in a source file, both 1-based.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Tiers form the boolean lattice `0 ≼ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    Zero,
    One,
}

impl Tier {
    pub const ALL: [Tier; 2] = [Tier::Zero, Tier::One];

    pub fn join(self, other: Tier) -> Tier {
        self.max(other)
    }

    pub fn meet(self, other: Tier) -> Tier {
        self.min(other)
    }

    /// `self ≼ other`
    pub fn le(self, other: Tier) -> bool {
        self <= other
    }

    pub fn from_digit(d: u64) -> Option<Tier> {
        match d {
            0 => Some(Tier::Zero),
            1 => Some(Tier::One),
            _ => None,
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Zero => "0",
            Tier::One => "1",
        })
    }
}

impl Serialize for Tier {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(match self {
            Tier::Zero => 0,
            Tier::One => 1,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Var(Var),
    Op(String, Vec<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(Var::from(name))
    }

    pub fn op(name: &str, args: Vec<Expr>) -> Expr {
        Expr::Op(name.to_owned(), args)
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Op(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// Visits every operator application, outermost first.
    pub fn for_each_op<'a>(&'a self, f: &mut impl FnMut(&'a str, &'a [Expr])) {
        if let Expr::Op(name, args) = self {
            f(name, args);
            args.iter().for_each(|a| a.for_each_op(f));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Command {
    Assign(Var, Expr),
    Seq(Box<Command>, Box<Command>),
    Skip,
    If(Expr, Box<Command>, Box<Command>),
    While(Expr, Box<Command>),
}

impl Command {
    pub fn assign(x: &str, e: Expr) -> Command {
        Command::Assign(Var::from(x), e)
    }

    pub fn seq(a: Command, b: Command) -> Command {
        Command::Seq(Box::new(a), Box::new(b))
    }

    /// Right-nested sequence of the given commands; `skip` when empty.
    pub fn seq_all(cmds: impl IntoIterator<Item = Command>) -> Command {
        let mut cmds: Vec<Command> = cmds.into_iter().collect();
        let Some(mut acc) = cmds.pop() else {
            return Command::Skip;
        };
        while let Some(c) = cmds.pop() {
            acc = Command::seq(c, acc);
        }
        acc
    }

    pub fn if_(e: Expr, a: Command, b: Command) -> Command {
        Command::If(e, Box::new(a), Box::new(b))
    }

    pub fn while_(e: Expr, body: Command) -> Command {
        Command::While(e, Box::new(body))
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Command::Assign(x, e) => {
                out.insert(x.clone());
                e.collect_vars(out);
            }
            Command::Seq(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Command::Skip => {}
            Command::If(e, a, b) => {
                e.collect_vars(out);
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Command::While(e, c) => {
                e.collect_vars(out);
                c.collect_vars(out);
            }
        }
    }

    /// Variables in order of first occurrence, left to right.
    pub fn vars_in_order(&self, out: &mut Vec<Var>) {
        fn expr(e: &Expr, out: &mut Vec<Var>) {
            match e {
                Expr::Var(v) => {
                    if !out.contains(v) {
                        out.push(v.clone());
                    }
                }
                Expr::Op(_, args) => args.iter().for_each(|a| expr(a, out)),
            }
        }
        match self {
            Command::Assign(x, e) => {
                if !out.contains(x) {
                    out.push(x.clone());
                }
                expr(e, out);
            }
            Command::Seq(a, b) => {
                a.vars_in_order(out);
                b.vars_in_order(out);
            }
            Command::Skip => {}
            Command::If(e, a, b) => {
                expr(e, out);
                a.vars_in_order(out);
                b.vars_in_order(out);
            }
            Command::While(e, c) => {
                expr(e, out);
                c.vars_in_order(out);
            }
        }
    }

    /// Variables that appear on the left of an assignment.
    pub fn assigned_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.walk(&mut |c| {
            if let Command::Assign(x, _) = c {
                out.insert(x.clone());
            }
        });
        out
    }

    pub fn contains_while(&self) -> bool {
        let mut found = false;
        self.walk(&mut |c| found |= matches!(c, Command::While(..)));
        found
    }

    /// Pre-order traversal of every sub-command.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Command)) {
        f(self);
        match self {
            Command::Seq(a, b) | Command::If(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            Command::While(_, c) => c.walk(f),
            Command::Assign(..) | Command::Skip => {}
        }
    }

    /// Every expression occurring directly in some sub-command.
    pub fn for_each_expr<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        self.walk(&mut |c| match c {
            Command::Assign(_, e) | Command::If(e, _, _) | Command::While(e, _) => f(e),
            _ => {}
        });
    }

    pub fn size(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }
}

/// A multi-threaded program: a finite map from thread ids to commands.
/// The empty map is the terminated program.
pub type Program = BTreeMap<ThreadId, Command>;

pub fn program_vars(p: &Program) -> BTreeSet<Var> {
    p.values().flat_map(|c| c.free_vars()).collect()
}

/// Global memory. Unbound variables read as `ε`; bindings to `ε` are not
/// stored, so equality is extensional.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Store {
    bindings: BTreeMap<Var, Word>,
}

impl Store {
    pub fn new() -> Self {
        Store::default()
    }

    pub fn get(&self, x: &str) -> Word {
        self.bindings.get(x).cloned().unwrap_or_default()
    }

    pub fn get_ref(&self, x: &str) -> Option<&Word> {
        self.bindings.get(x)
    }

    pub fn set(&mut self, x: Var, w: Word) {
        if w.is_empty() {
            self.bindings.remove(&x);
        } else {
            self.bindings.insert(x, w);
        }
    }

    pub fn with(mut self, x: &str, w: impl Into<Word>) -> Self {
        self.set(Var::from(x), w.into());
        self
    }

    /// Nonempty bindings, by variable name.
    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Word)> {
        self.bindings.iter()
    }

    /// Keeps only the given variables.
    pub fn restrict<'a>(&self, keep: impl IntoIterator<Item = &'a Var>) -> Store {
        let mut out = Store::new();
        for x in keep {
            if let Some(w) = self.bindings.get(x) {
                out.bindings.insert(x.clone(), w.clone());
            }
        }
        out
    }
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (x, w)) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{x}={w}")?;
        }
        f.write_str("}")
    }
}

impl Serialize for Store {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.bindings.serialize(s)
    }
}

impl FromIterator<(Var, Word)> for Store {
    fn from_iter<I: IntoIterator<Item = (Var, Word)>>(iter: I) -> Self {
        let mut s = Store::new();
        for (x, w) in iter {
            s.set(x, w);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_laws_exhaustive() {
        for a in Tier::ALL {
            assert_eq!(a.join(a), a);
            assert_eq!(a.meet(a), a);
            for b in Tier::ALL {
                assert_eq!(a.join(b), b.join(a));
                assert_eq!(a.meet(b), b.meet(a));
                assert_eq!(a.join(a.meet(b)), a);
                assert_eq!(a.meet(a.join(b)), a);
                assert_eq!(a.le(b), a.join(b) == b);
                for c in Tier::ALL {
                    assert_eq!(a.join(b).join(c), a.join(b.join(c)));
                    assert_eq!(a.meet(b).meet(c), a.meet(b.meet(c)));
                    assert_eq!(a.meet(b.join(c)), a.meet(b).join(a.meet(c)));
                }
            }
        }
        assert!(Tier::Zero.le(Tier::One));
        assert!(!Tier::One.le(Tier::Zero));
    }

    #[test]
    fn free_vars_examples() {
        assert_eq!(Expr::var("x").free_vars(), [Var::from("x")].into());
        let c = Command::assign("y", Expr::op("pred", vec![Expr::var("x")]));
        assert_eq!(c.free_vars(), [Var::from("x"), Var::from("y")].into());
        assert!(Command::Skip.free_vars().is_empty());
    }

    #[test]
    fn unbound_reads_empty() {
        let s = Store::new();
        assert_eq!(s.get("x"), Word::empty());
        let s = s.with("x", "ab");
        assert_eq!(s.get("x"), Word::from("ab"));
        let s = s.with("x", "");
        assert_eq!(s, Store::new());
    }

    #[test]
    fn seq_all_nests_right() {
        let c = Command::seq_all([Command::Skip, Command::Skip, Command::Skip]);
        assert_eq!(
            c,
            Command::seq(Command::Skip, Command::seq(Command::Skip, Command::Skip))
        );
        assert_eq!(Command::seq_all([]), Command::Skip);
    }
}
