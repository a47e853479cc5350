//! Operator semantics, their neutral/positive classes, and empirical
//! validation of a declared class against the actual function.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::word::{Alphabet, Word, TT_LETTER};

pub type OpFn = Arc<dyn Fn(&[Word]) -> Word + Send + Sync>;

/// Declared operator class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum OpClass {
    /// Codomain is `{tt, ff}`.
    Predicate,
    /// Output is always a subword of one of the inputs.
    Subword,
    /// `|output| ≤ max_i |input_i| + c`, and not claimed to be neutral.
    Positive(usize),
}

impl OpClass {
    pub fn is_neutral(self) -> bool {
        matches!(self, OpClass::Predicate | OpClass::Subword)
    }
}

impl fmt::Display for OpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpClass::Predicate => f.write_str("predicate"),
            OpClass::Subword => f.write_str("subword"),
            OpClass::Positive(c) => write!(f, "positive {c}"),
        }
    }
}

#[derive(Clone)]
pub struct OperatorDef {
    pub name: String,
    pub arity: usize,
    pub class: OpClass,
    func: OpFn,
}

impl OperatorDef {
    pub fn new(
        name: impl Into<String>,
        arity: usize,
        class: OpClass,
        func: impl Fn(&[Word]) -> Word + Send + Sync + 'static,
    ) -> Self {
        OperatorDef {
            name: name.into(),
            arity,
            class,
            func: Arc::new(func),
        }
    }

    pub fn apply(&self, args: &[Word]) -> Word {
        debug_assert_eq!(args.len(), self.arity, "arity of {}", self.name);
        (self.func)(args)
    }

    /// Same semantics under a different declared class.
    pub fn with_class(mut self, class: OpClass) -> Self {
        self.class = class;
        self
    }
}

impl fmt::Debug for OperatorDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorDef")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("class", &self.class)
            .finish()
    }
}

/// Name-indexed operator table. Immutable once built.
#[derive(Clone, Debug, Default)]
pub struct Registry {
    ops: BTreeMap<String, OperatorDef>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn register(&mut self, def: OperatorDef) -> Result<()> {
        if self.ops.contains_key(&def.name) {
            return Err(Error::DuplicateOperator(def.name));
        }
        self.ops.insert(def.name.clone(), def);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&OperatorDef> {
        self.ops.get(name)
    }

    pub fn lookup(&self, name: &str) -> Result<&OperatorDef> {
        self.get(name).ok_or_else(|| Error::UnknownOperator(name.to_owned()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &OperatorDef> {
        self.ops.values()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Registry holding every operator of [`builtins`].
    pub fn with_builtins() -> Self {
        let mut r = Registry::new();
        for def in builtins() {
            r.register(def).expect("builtin names are unique");
        }
        r
    }
}

fn truth(w: &Word) -> bool {
    w.is_tt()
}

/// Reads a binary digit: `1` and `tt` count as one, everything else as zero.
fn bit_of(w: &Word) -> bool {
    matches!(w.first(), Some(b'1') | Some(TT_LETTER))
}

/// Parses `family[param]` names.
fn family<'a>(name: &'a str, prefix: &str) -> Option<&'a str> {
    name.strip_prefix(prefix)?.strip_prefix('[')?.strip_suffix(']')
}

/// Name of the nullary operator denoting the constant word `w`.
pub fn literal_name(w: &Word) -> String {
    format!("\"{}\"", w.as_text())
}

/// Recognizes literal operator names: `tt`, `ff`, and quoted words.
pub fn literal_word(name: &str) -> Option<Word> {
    match name {
        "tt" => Some(Word::tt()),
        "ff" => Some(Word::ff()),
        _ => {
            let inner = name.strip_prefix('"')?.strip_suffix('"')?;
            (!inner.contains('"')).then(|| Word::from(inner))
        }
    }
}

pub fn is_literal(name: &str) -> bool {
    literal_word(name).is_some()
}

/// Resolves a builtin operator by name, including the parameterized
/// families `eq[w]`, `suc[w]`, `rstrip[letters]` and word literals.
pub fn builtin(name: &str) -> Option<OperatorDef> {
    if let Some(w) = literal_word(name) {
        let class = if w.is_truth_value() {
            OpClass::Predicate
        } else if w.is_empty() {
            OpClass::Subword
        } else {
            OpClass::Positive(w.len())
        };
        return Some(OperatorDef::new(name, 0, class, move |_| w.clone()));
    }
    if let Some(d) = family(name, "eq") {
        let d = Word::from(d);
        return Some(OperatorDef::new(name, 1, OpClass::Predicate, move |a| {
            Word::from_bool(a[0].starts_with(&d))
        }));
    }
    if let Some(d) = family(name, "suc") {
        let d = Word::from(d);
        let c = d.len();
        return Some(OperatorDef::new(name, 1, OpClass::Positive(c), move |a| {
            d.concat(&a[0])
        }));
    }
    if let Some(strip) = family(name, "rstrip") {
        let strip: Vec<u8> = strip.bytes().collect();
        return Some(OperatorDef::new(name, 1, OpClass::Subword, move |a| {
            let l = a[0].letters();
            let end = l.iter().rposition(|c| !strip.contains(c)).map_or(0, |i| i + 1);
            Word::from_letters(&l[..end])
        }));
    }
    let def = match name {
        "pred" => OperatorDef::new(name, 1, OpClass::Subword, |a| a[0].tail()),
        "-1" => OperatorDef::new(name, 1, OpClass::Subword, |a| a[0].tail()),
        "+1" => OperatorDef::new(name, 1, OpClass::Positive(1), |a| Word::unary(1).concat(&a[0])),
        ">0" => OperatorDef::new(name, 1, OpClass::Predicate, |a| Word::from_bool(!a[0].is_empty())),
        "not" => OperatorDef::new(name, 1, OpClass::Predicate, |a| Word::from_bool(!truth(&a[0]))),
        "eq_eps" => OperatorDef::new(name, 1, OpClass::Predicate, |a| Word::from_bool(a[0].is_empty())),
        "head" => OperatorDef::new(name, 1, OpClass::Subword, |a| {
            Word::from_letters(a[0].letters().get(..1).unwrap_or_default())
        }),
        "concat" => OperatorDef::new(name, 2, OpClass::Positive(1), |a| {
            let letter = if a[0].is_tt() {
                b'1'
            } else if a[0].is_ff() {
                b'0'
            } else {
                match a[0].first() {
                    Some(l) => l,
                    None => return a[1].clone(),
                }
            };
            Word::from_letters([letter]).concat(&a[1])
        }),
        "bit" => OperatorDef::new(name, 1, OpClass::Predicate, |a| Word::from_bool(bit_of(&a[0]))),
        "carry" => OperatorDef::new(name, 3, OpClass::Predicate, |a| {
            let n = a.iter().filter(|w| truth(w)).count();
            Word::from_bool(n >= 2)
        }),
        "result" => OperatorDef::new(name, 3, OpClass::Predicate, |a| {
            let n = a.iter().filter(|w| truth(w)).count();
            Word::from_bool(n % 2 == 1)
        }),
        "==" => OperatorDef::new(name, 2, OpClass::Predicate, |a| Word::from_bool(a[0] == a[1])),
        "!=" => OperatorDef::new(name, 2, OpClass::Predicate, |a| Word::from_bool(a[0] != a[1])),
        "bnz" => OperatorDef::new(name, 1, OpClass::Predicate, |a| {
            Word::from_bool(a[0].letters().contains(&b'1'))
        }),
        "bdec" => OperatorDef::new(name, 1, OpClass::Positive(0), |a| binary_dec(&a[0])),
        "binc" => OperatorDef::new(name, 1, OpClass::Positive(1), |a| binary_inc(&a[0])),
        _ => return None,
    };
    Some(def)
}

/// Least-significant-bit-first binary predecessor; zero stays zero.
fn binary_dec(w: &Word) -> Word {
    let mut v = w.letters().to_vec();
    match v.iter().position(|&c| c == b'1') {
        Some(i) => {
            v[..i].iter_mut().for_each(|c| *c = b'1');
            v[i] = b'0';
        }
        None => return w.clone(),
    }
    Word::from_letters(v)
}

/// Least-significant-bit-first binary successor.
fn binary_inc(w: &Word) -> Word {
    let mut v = w.letters().to_vec();
    for c in v.iter_mut() {
        if *c == b'1' {
            *c = b'0';
        } else {
            *c = b'1';
            return Word::from_letters(v);
        }
    }
    v.push(b'1');
    Word::from_letters(v)
}

/// The fixture operator library over the default alphabet `{0, 1}`.
/// Parameterized families are instantiated once per letter.
pub fn builtins() -> Vec<OperatorDef> {
    let names = [
        "pred",
        "-1",
        "+1",
        ">0",
        "not",
        "eq_eps",
        "head",
        "concat",
        "bit",
        "carry",
        "result",
        "==",
        "!=",
        "bnz",
        "bdec",
        "binc",
        "eq[0]",
        "eq[1]",
        "suc[0]",
        "suc[1]",
        "rstrip[_]",
    ];
    names.iter().map(|n| builtin(n).expect("known builtin")).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ClassVerdict {
    Ok { checked: u64, exhaustive: bool },
    Counterexample { inputs: Vec<Word>, output: Word },
}

impl ClassVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, ClassVerdict::Ok { .. })
    }
}

/// Settings for [`validate_class`].
#[derive(Clone, Debug)]
pub struct ValidationConfig {
    pub max_len: usize,
    /// Above this many input tuples, a random sample of this size is used.
    pub cap: u64,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            max_len: 3,
            cap: 200_000,
            seed: 0,
        }
    }
}

/// Does `output` satisfy the class axiom for `inputs`?
pub fn class_holds(class: OpClass, inputs: &[Word], output: &Word) -> bool {
    match class {
        OpClass::Predicate => output.is_truth_value(),
        // With no arguments the only word that is a subword of "some input" is ε.
        OpClass::Subword if inputs.is_empty() => output.is_empty(),
        OpClass::Subword => inputs.iter().any(|d| output.is_subword_of(d)),
        OpClass::Positive(c) => {
            let max = inputs.iter().map(Word::len).max().unwrap_or(0);
            output.len() <= max + c
        }
    }
}

/// Tests the declared class of `def` on every tuple of words over `sigma`
/// with length at most `cfg.max_len`, or on a seeded random sample when the
/// tuple space exceeds `cfg.cap`.
pub fn validate_class(def: &OperatorDef, sigma: &Alphabet, cfg: &ValidationConfig) -> ClassVerdict {
    let words = sigma.words_up_to(cfg.max_len);
    let space = (words.len() as u64).checked_pow(def.arity as u32);
    let check = |args: &[Word]| -> Option<ClassVerdict> {
        let out = def.apply(args);
        (!class_holds(def.class, args, &out)).then(|| ClassVerdict::Counterexample {
            inputs: args.to_vec(),
            output: out,
        })
    };
    match space {
        Some(total) if total <= cfg.cap => {
            let mut idx = vec![0usize; def.arity];
            let mut args: Vec<Word> = idx.iter().map(|&i| words[i].clone()).collect();
            for _ in 0..total {
                if let Some(cex) = check(&args) {
                    return cex;
                }
                // odometer increment, first position fastest
                for pos in 0..def.arity {
                    idx[pos] += 1;
                    if idx[pos] < words.len() {
                        args[pos] = words[idx[pos]].clone();
                        break;
                    }
                    idx[pos] = 0;
                    args[pos] = words[0].clone();
                }
            }
            ClassVerdict::Ok {
                checked: total,
                exhaustive: true,
            }
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut args = vec![Word::empty(); def.arity];
            for _ in 0..cfg.cap {
                for a in args.iter_mut() {
                    *a = words[rng.gen_range(0..words.len())].clone();
                }
                if let Some(cex) = check(&args) {
                    return cex;
                }
            }
            ClassVerdict::Ok {
                checked: cfg.cap,
                exhaustive: false,
            }
        }
    }
}
