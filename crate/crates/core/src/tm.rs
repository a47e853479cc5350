//! Single-tape Turing machines: a text format, a reference simulator, and
//! a compiler to safe sequential programs with a polynomial clock.
//!
//! ```text
//! # binary increment, least significant bit first
//! states c r h
//! alphabet 0 1 _
//! blank _
//! init c
//! halt h
//! clock 1 4
//! c 1 -> c 0 R
//! c 0 -> r 1 L
//! ```
//!
//! `clock k c` bounds the run by `c·n^k + c` simulated steps on inputs of
//! length `n`; `c` defaults to 4.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::parser::{self, SourceFile};
use crate::syntax::Var;
use crate::word::{Alphabet, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Move {
    L,
    R,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub next: String,
    pub write: u8,
    pub dir: Move,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TmSpec {
    pub states: Vec<String>,
    /// Tape letters, including the blank.
    pub tape: Vec<u8>,
    pub blank: u8,
    pub init: String,
    pub halt: BTreeSet<String>,
    pub delta: BTreeMap<(String, u8), Transition>,
    pub clock_degree: u32,
    pub clock_factor: u32,
}

fn machine(msg: impl Into<String>) -> Error {
    Error::Machine(msg.into())
}

fn one_letter(s: &str, what: &str) -> Result<u8> {
    match s.as_bytes() {
        [b] => Ok(*b),
        _ => Err(machine(format!("{what} `{s}` must be a single letter"))),
    }
}

impl TmSpec {
    pub fn parse(text: &str) -> Result<TmSpec> {
        let mut states = None;
        let mut tape = None;
        let mut blank = b'_';
        let mut init = None;
        let mut halt = None;
        let mut clock = None;
        let mut delta = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |m: String| machine(format!("line {}: {m}", lineno + 1));
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.contains(&"->") {
                let [s, a, "->", s1, b, d] = words.as_slice() else {
                    return Err(at("expected `state letter -> state letter L|R`".into()));
                };
                let dir = match *d {
                    "L" => Move::L,
                    "R" => Move::R,
                    _ => return Err(at(format!("move must be L or R, found `{d}`"))),
                };
                let key = ((*s).to_owned(), one_letter(a, "read letter")?);
                let tr = Transition {
                    next: (*s1).to_owned(),
                    write: one_letter(b, "written letter")?,
                    dir,
                };
                if delta.insert(key, tr).is_some() {
                    return Err(at(format!("duplicate transition for ({s}, {a})")));
                }
                continue;
            }
            let rest: Vec<String> = words[1..].iter().map(|s| (*s).to_owned()).collect();
            match words[0] {
                "states" => states = Some(rest),
                "alphabet" => {
                    tape = Some(
                        rest.iter()
                            .map(|s| one_letter(s, "tape letter"))
                            .collect::<Result<Vec<u8>>>()?,
                    )
                }
                "blank" => {
                    let [b] = rest.as_slice() else {
                        return Err(at("expected `blank LETTER`".into()));
                    };
                    blank = one_letter(b, "blank")?;
                }
                "init" => {
                    let [s] = rest.as_slice() else {
                        return Err(at("expected `init STATE`".into()));
                    };
                    init = Some(s.clone());
                }
                "halt" => halt = Some(rest.into_iter().collect::<BTreeSet<_>>()),
                "clock" => {
                    let nums = rest
                        .iter()
                        .map(|s| s.parse::<u32>().map_err(|_| at(format!("bad number `{s}`"))))
                        .collect::<Result<Vec<u32>>>()?;
                    clock = Some(match nums.as_slice() {
                        [k] => (*k, 4),
                        [k, c] => (*k, *c),
                        _ => return Err(at("expected `clock K [C]`".into())),
                    });
                }
                w => return Err(at(format!("unknown section `{w}`"))),
            }
        }
        let (clock_degree, clock_factor) = clock.ok_or_else(|| machine("missing `clock`"))?;
        let mut tape = tape.ok_or_else(|| machine("missing `alphabet`"))?;
        if !tape.contains(&blank) {
            tape.push(blank);
        }
        let spec = TmSpec {
            states: states.ok_or_else(|| machine("missing `states`"))?,
            tape,
            blank,
            init: init.ok_or_else(|| machine("missing `init`"))?,
            halt: halt.ok_or_else(|| machine("missing `halt`"))?,
            delta,
            clock_degree,
            clock_factor,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks totality on non-halting states, that halting states have no
    /// transitions, and that state names are prefix-free words.
    pub fn validate(&self) -> Result<()> {
        if self.clock_degree == 0 || self.clock_factor == 0 {
            return Err(machine("clock degree and factor must be at least 1"));
        }
        let known: BTreeSet<&String> = self.states.iter().collect();
        if known.len() != self.states.len() {
            return Err(machine("duplicate state name"));
        }
        for s in self.halt.iter().chain(std::iter::once(&self.init)) {
            if !known.contains(s) {
                return Err(machine(format!("unknown state `{s}`")));
            }
        }
        for a in &self.states {
            if a.is_empty() || !a.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') {
                return Err(machine(format!("state `{a}` must be a non-empty alphanumeric word")));
            }
            for b in &self.states {
                if a != b && b.starts_with(a.as_str()) {
                    return Err(machine(format!("state `{a}` is a prefix of `{b}`")));
                }
            }
        }
        Alphabet::new(self.tape.iter().copied()).map_err(|e| machine(e.to_string()))?;
        for ((s, a), tr) in &self.delta {
            if !known.contains(s) || !known.contains(&tr.next) {
                return Err(machine(format!(
                    "transition ({s}, {}) uses an unknown state",
                    *a as char
                )));
            }
            if !self.tape.contains(a) || !self.tape.contains(&tr.write) {
                return Err(machine(format!(
                    "transition ({s}, {}) uses a letter outside the tape alphabet",
                    *a as char
                )));
            }
            if self.halt.contains(s) {
                return Err(machine(format!("halting state `{s}` has a transition")));
            }
        }
        for s in &self.states {
            if self.halt.contains(s) {
                continue;
            }
            for &a in &self.tape {
                if !self.delta.contains_key(&(s.clone(), a)) {
                    return Err(machine(format!("no transition for ({s}, {})", a as char)));
                }
            }
        }
        Ok(())
    }

    pub fn input_letters(&self) -> Vec<u8> {
        self.tape.iter().copied().filter(|&b| b != self.blank).collect()
    }

    /// Simulated steps the compiled clock provides for inputs of length `n`.
    pub fn clock_budget(&self, n: u64) -> u64 {
        let c = u64::from(self.clock_factor);
        c * n.pow(self.clock_degree) + c
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TmOutcome {
    /// Tape contents from the head to the last non-blank cell.
    Halted {
        tape: Word,
        steps: u64,
    },
    StepLimit,
}

fn cell<'a>(left: &'a mut Vec<u8>, right: &'a mut Vec<u8>, pos: i64, blank: u8) -> &'a mut u8 {
    let (v, i) = if pos >= 0 {
        (right, pos as usize)
    } else {
        (left, (-pos - 1) as usize)
    };
    if v.len() <= i {
        v.resize(i + 1, blank);
    }
    &mut v[i]
}

pub fn simulate_tm(spec: &TmSpec, input: &Word, max_steps: u64) -> TmOutcome {
    // cells left of the origin are stored reversed in `left`
    let mut right: Vec<u8> = input.letters().to_vec();
    let mut left: Vec<u8> = Vec::new();
    let mut head: i64 = 0;
    let mut state = spec.init.clone();
    let mut steps = 0;
    loop {
        if spec.halt.contains(&state) {
            let mut tape = Vec::new();
            for p in head..(right.len() as i64).max(head) {
                tape.push(*cell(&mut left, &mut right, p, spec.blank));
            }
            let end = tape.iter().rposition(|&b| b != spec.blank).map_or(0, |i| i + 1);
            tape.truncate(end);
            return TmOutcome::Halted {
                tape: Word::from_letters(tape),
                steps,
            };
        }
        if steps == max_steps {
            return TmOutcome::StepLimit;
        }
        let c = cell(&mut left, &mut right, head, spec.blank);
        let tr = &spec.delta[&(state.clone(), *c)];
        *c = tr.write;
        head += match tr.dir {
            Move::L => -1,
            Move::R => 1,
        };
        state = tr.next.clone();
        steps += 1;
    }
}

#[derive(Clone, Debug, Default)]
pub struct CompileOptions {
    /// Count simulated steps in a tier-0 variable `Tick`.
    pub instrument: bool,
}

#[derive(Clone, Debug)]
pub struct CompiledProgram {
    pub text: String,
    pub source: SourceFile,
    pub input: Var,
    pub output: Var,
}

pub fn compile_tm(spec: &TmSpec) -> Result<CompiledProgram> {
    compile_tm_with(spec, &CompileOptions::default())
}

fn lit(s: &str) -> String {
    format!("\"{s}\"")
}

/// Emits the program text. The step command is an if-cascade on the read
/// letter and then the state, over tier-0 `Left` (reversed), `Right` and
/// `State`; the clock is `k` nested loops, each over a tier-1 copy of
/// `Input` consumed by `pred`.
pub fn compile_tm_with(spec: &TmSpec, opts: &CompileOptions) -> Result<CompiledProgram> {
    spec.validate()?;
    let blank = (spec.blank as char).to_string();
    let mut letters: BTreeSet<u8> = spec.tape.iter().copied().collect();
    for s in &spec.states {
        letters.extend(s.bytes());
    }
    let k = spec.clock_degree as usize;

    let mut out = String::new();
    let alpha: Vec<String> = letters.iter().map(|&b| (b as char).to_string()).collect();
    let _ = writeln!(out, "alphabet {};", alpha.join(" "));
    let mut ops: Vec<String> = vec!["pred".into(), ">0".into(), "eq_eps".into(), format!("rstrip[{blank}]")];
    for &a in &spec.tape {
        let a = a as char;
        ops.push(format!("eq[{a}]"));
        ops.push(format!("suc[{a}]"));
    }
    for s in &spec.states {
        ops.push(format!("eq[{s}]"));
    }
    for op in &ops {
        let _ = writeln!(out, "op {op} arity 1;");
    }
    let mut vars: Vec<String> = vec!["Input : 1".into()];
    vars.extend((1..=k).map(|i| format!("i{i} : 1")));
    vars.extend(["Left : 0", "Right : 0", "State : 0", "Out : 0"].map(String::from));
    if opts.instrument {
        vars.push("Tick : 0".into());
    }
    let _ = writeln!(out, "vars {};", vars.join(", "));

    // one simulated step
    let mut step = String::new();
    if opts.instrument {
        let _ = writeln!(step, "Tick := suc[{}](Tick);", spec.tape[0] as char);
    }
    let _ = writeln!(
        step,
        "if (eq_eps(Right)) {{ Right := {} }} else {{ skip }};",
        lit(&blank)
    );
    let mut letter_cascade = String::from("skip");
    for &a in spec.tape.iter().rev() {
        let mut state_cascade = String::from("skip");
        for s in spec.states.iter().rev() {
            let Some(tr) = spec.delta.get(&(s.clone(), a)) else {
                continue;
            };
            let b = tr.write as char;
            let action = match tr.dir {
                Move::R => format!(
                    "State := {}; Left := suc[{b}](Left); Right := pred(Right)",
                    lit(&tr.next)
                ),
                Move::L => {
                    let mut pull = format!("Right := suc[{blank}](Right)");
                    for &c in spec.tape.iter().rev() {
                        let c = c as char;
                        pull = format!("if (eq[{c}](Left)) {{ Right := suc[{c}](Right) }} else {{ {pull} }}");
                    }
                    format!(
                        "State := {}; Right := suc[{b}](pred(Right)); {pull}; Left := pred(Left)",
                        lit(&tr.next)
                    )
                }
            };
            state_cascade = format!("if (eq[{s}](State)) {{ {action} }} else {{ {state_cascade} }}");
        }
        letter_cascade = format!(
            "if (eq[{}](Right)) {{ {state_cascade} }} else {{ {letter_cascade} }}",
            a as char
        );
    }
    step.push_str(&letter_cascade);

    let c = spec.clock_factor as usize;
    let repeat = |n: usize| -> String { vec![step.clone(); n].join(";\n") };

    let mut body = repeat(c);
    for i in (1..=k).rev() {
        body = format!("i{i} := Input;\nwhile (i{i} > 0) {{\n{body};\ni{i} := pred(i{i})\n}}");
    }
    let _ = writeln!(out, "thread main {{");
    let _ = writeln!(out, "Left := \"\";\nRight := Input;\nState := {};", lit(&spec.init));
    let _ = writeln!(out, "{};", repeat(c));
    let _ = writeln!(out, "{body};");
    let _ = writeln!(out, "Out := rstrip[{blank}](Right)");
    let _ = writeln!(out, "}}");

    let source = parser::parse(&out)?;
    let text = parser::pretty(&source);
    Ok(CompiledProgram {
        text,
        source,
        input: Var::from("Input"),
        output: Var::from("Out"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const INCR: &str = "states c r h\nalphabet 0 1 _\nblank _\ninit c\nhalt h\nclock 1\n\
        c 1 -> c 0 R\nc 0 -> r 1 L\nc _ -> r 1 L\nr 0 -> r 0 L\nr 1 -> r 1 L\nr _ -> h _ R\n";

    #[test]
    fn parses_and_validates() {
        let s = TmSpec::parse(INCR).unwrap();
        assert_eq!(s.clock_degree, 1);
        assert_eq!(s.clock_factor, 4);
        assert_eq!(s.delta.len(), 6);
        let partial = INCR.replace("r _ -> h _ R\n", "");
        assert!(matches!(TmSpec::parse(&partial), Err(Error::Machine(_))));
        let halting = format!("{INCR}h 0 -> h 0 R\n");
        assert!(TmSpec::parse(&halting).is_err());
        let prefix = INCR.replace("states c r h", "states c r h cc");
        assert!(TmSpec::parse(&prefix).is_err());
    }

    #[test]
    fn simulate_examples() {
        let s = TmSpec::parse(INCR).unwrap();
        assert_eq!(
            simulate_tm(&s, &Word::from("111"), 100),
            TmOutcome::Halted {
                tape: Word::from("0001"),
                steps: 8
            }
        );
        assert_eq!(simulate_tm(&s, &Word::from("1"), 0), TmOutcome::StepLimit);
        let id = TmSpec::parse("states h\nalphabet a b _\ninit h\nhalt h\nclock 1\n").unwrap();
        assert_eq!(
            simulate_tm(&id, &Word::from("ab"), 0),
            TmOutcome::Halted {
                tape: Word::from("ab"),
                steps: 0
            }
        );
    }

    #[test]
    fn budget_formula() {
        let s = TmSpec::parse(&INCR.replace("clock 1", "clock 2 3")).unwrap();
        assert_eq!(s.clock_budget(5), 3 * 25 + 3);
    }
}
