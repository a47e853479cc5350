//! Concrete syntax for `.tier` files.
//!
//! ```text
//! // comment
//! alphabet 0 1;
//! op pred arity 1 class neutral sig 1->1, 1->0;
//! op +1 arity 1 class positive 1;
//! vars x : 1, y : 0;
//! thread main {
//!   while (x > 0) { x := x - 1; y := y + 1 }
//! }
//! ```
//!
//! Expressions are variables, operator calls `name(e, ...)`, word literals
//! (`"ab"`, `tt`, `ff`, and numerals `n` for the unary word `1^n`), and the
//! sugar `e + 1`, `e - 1`, `e > 0`, `!e`, `e == e`, `e != e`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ops::{self, OpClass};
use crate::syntax::{Command, Expr, Program, Span, ThreadId, Tier, Var};
use crate::typing::OpSig;
use crate::word::{Alphabet, Word};

/// Child-index path from a thread's root command to a sub-command.
/// `Seq` and `If` children are 0 and 1, a `While` body is 0.
pub type NodePath = Vec<u8>;

/// Source positions recorded by the parser. Ignored by equality so that
/// ASTs compare structurally.
#[derive(Clone, Debug, Default)]
pub struct SpanTable {
    pub commands: HashMap<(ThreadId, NodePath), Span>,
    pub ops: HashMap<String, Span>,
    pub threads: HashMap<ThreadId, Span>,
}

impl PartialEq for SpanTable {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for SpanTable {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpDecl {
    pub name: String,
    pub arity: usize,
    pub class: OpClass,
    /// `None` admits every signature allowed by safety.
    pub sigs: Option<Vec<OpSig>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceFile {
    pub alphabet: Alphabet,
    pub ops: Vec<OpDecl>,
    pub annotations: BTreeMap<Var, Tier>,
    pub threads: Program,
    pub spans: SpanTable,
}

impl SourceFile {
    pub fn new(alphabet: Alphabet, ops: Vec<OpDecl>, threads: Program) -> Self {
        SourceFile {
            alphabet,
            ops,
            annotations: BTreeMap::new(),
            threads,
            spans: SpanTable::default(),
        }
    }

    pub fn command_span(&self, thread: &ThreadId, path: &[u8]) -> Option<Span> {
        self.spans.commands.get(&(thread.clone(), path.to_vec())).copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Str(String),
    Sym(&'static str),
    Eof,
}

const SYMBOLS: [&str; 15] = [
    ":=", "->", "==", "!=", ";", ",", "(", ")", "{", "}", ":", "+", "-", ">", "!",
];

fn lex(src: &str) -> Result<Vec<(Tok, Span)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, message: String| Error::Syntax {
        span: Span { line, col },
        message,
    };
    while i < bytes.len() {
        let c = bytes[i];
        let span = Span { line, col };
        if c == b'\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if src[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'[' {
                while i < bytes.len() && bytes[i] != b']' {
                    if bytes[i].is_ascii_whitespace() {
                        return Err(err(line, col, "unterminated `[` in operator name".into()));
                    }
                    i += 1;
                }
                if i == bytes.len() {
                    return Err(err(line, col, "unterminated `[` in operator name".into()));
                }
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_owned()), span));
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            out.push((Tok::Num(src[start..i].to_owned()), span));
        } else if c == b'"' {
            i += 1;
            while i < bytes.len() && bytes[i] != b'"' {
                if bytes[i] == b'\n' {
                    return Err(err(line, col, "unterminated string literal".into()));
                }
                i += 1;
            }
            if i == bytes.len() {
                return Err(err(line, col, "unterminated string literal".into()));
            }
            out.push((Tok::Str(src[start + 1..i].to_owned()), span));
            i += 1;
        } else if let Some(sym) = SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            i += sym.len();
            out.push((Tok::Sym(sym), span));
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(err(line, col, format!("unexpected character {ch:?}")));
        }
        col += i - start;
    }
    out.push((Tok::Eof, Span { line, col }));
    Ok(out)
}

const KEYWORDS: [&str; 13] = [
    "thread", "while", "if", "else", "skip", "op", "arity", "class", "sig", "vars", "alphabet", "tt", "ff",
];

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            span: self.span(),
            message: message.into(),
        })
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(s) => format!("`{s}`"),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{s}`, found {}", Self::describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{kw}`, found {}", Self::describe(self.peek())))
        }
    }

    fn expect_num(&mut self) -> Result<u64> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                n.parse().or_else(|_| self.error(format!("number `{n}` is too large")))
            }
            t => self.error(format!("expected a number, found {}", Self::describe(&t))),
        }
    }

    fn name(&mut self, what: &str) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) && !s.contains('[') => {
                self.bump();
                Ok(s)
            }
            t => self.error(format!("expected {what}, found {}", Self::describe(&t))),
        }
    }

    fn tier(&mut self) -> Result<Tier> {
        let n = self.expect_num()?;
        match Tier::from_digit(n) {
            Some(t) => Ok(t),
            None => self.error(format!("tier must be 0 or 1, found {n}")),
        }
    }

    // ---- expressions ----

    fn expr(&mut self) -> Result<Expr> {
        let lhs = self.suffix_expr()?;
        for op in ["==", "!="] {
            if self.is_sym(op) {
                self.bump();
                let rhs = self.suffix_expr()?;
                return Ok(Expr::op(op, vec![lhs, rhs]));
            }
        }
        Ok(lhs)
    }

    fn suffix_expr(&mut self) -> Result<Expr> {
        let mut e = self.unary_expr()?;
        loop {
            let (sym, want, name) = if self.is_sym("+") {
                ("+", 1, "+1")
            } else if self.is_sym("-") {
                ("-", 1, "-1")
            } else if self.is_sym(">") {
                (">", 0, ">0")
            } else {
                return Ok(e);
            };
            self.bump();
            let n = self.expect_num()?;
            if n != want {
                return self.error(format!("only `{sym} {want}` is supported, found `{sym} {n}`"));
            }
            e = Expr::op(name, vec![e]);
        }
    }

    fn unary_expr(&mut self) -> Result<Expr> {
        if self.is_sym("!") {
            self.bump();
            let e = self.unary_expr()?;
            return Ok(Expr::op("not", vec![e]));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Num(_) => {
                let n = self.expect_num()?;
                if n > 100_000 {
                    return self.error("unary literal is too large");
                }
                Ok(Expr::Op(ops::literal_name(&Word::unary(n as usize)), vec![]))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Op(ops::literal_name(&Word::from(s.as_str())), vec![]))
            }
            Tok::Ident(s) if s == "tt" || s == "ff" => {
                self.bump();
                Ok(Expr::Op(s, vec![]))
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                if self.is_sym("(") {
                    self.bump();
                    let mut args = Vec::new();
                    if !self.is_sym(")") {
                        args.push(self.expr()?);
                        while self.is_sym(",") {
                            self.bump();
                            args.push(self.expr()?);
                        }
                    }
                    self.expect_sym(")")?;
                    Ok(Expr::Op(s, args))
                } else if s.contains('[') {
                    self.error(format!("operator `{s}` must be applied to arguments"))
                } else {
                    Ok(Expr::Var(Var::new(s)))
                }
            }
            t => self.error(format!("expected an expression, found {}", Self::describe(&t))),
        }
    }

    // ---- commands ----

    fn commands(&mut self, spans: &mut Vec<(NodePath, Span)>, path: NodePath) -> Result<Command> {
        let start = self.span();
        let mut items = vec![];
        loop {
            let mut local = vec![];
            let c = self.command(&mut local)?;
            items.push((c, local, start));
            if self.is_sym(";") {
                self.bump();
                // tolerate a trailing separator before the closing brace
                if self.is_sym("}") {
                    break;
                }
            } else {
                break;
            }
        }
        // Right-nested: c1; (c2; (c3; ...)).
        let n = items.len();
        let mut prefix = path.clone();
        let mut out = None;
        let mut built = Vec::with_capacity(n);
        for (i, (c, local, _)) in items.into_iter().enumerate() {
            let mut p = prefix.clone();
            if i + 1 < n {
                spans.push((prefix.clone(), start));
                p.push(0);
                prefix.push(1);
            }
            for (sub, sp) in local {
                let mut full = p.clone();
                full.extend(sub);
                spans.push((full, sp));
            }
            built.push(c);
        }
        let mut rev = built.into_iter().rev();
        if let Some(last) = rev.next() {
            let mut acc = last;
            for c in rev {
                acc = Command::seq(c, acc);
            }
            out = Some(acc);
        }
        Ok(out.expect("at least one command"))
    }

    fn block(&mut self, spans: &mut Vec<(NodePath, Span)>, path: NodePath) -> Result<Command> {
        self.expect_sym("{")?;
        if self.is_sym("}") {
            return self.error("empty block; use `skip`");
        }
        let c = self.commands(spans, path)?;
        self.expect_sym("}")?;
        Ok(c)
    }

    /// Parses one command; spans are recorded relative to the command itself.
    fn command(&mut self, spans: &mut Vec<(NodePath, Span)>) -> Result<Command> {
        let span = self.span();
        spans.push((vec![], span));
        match self.peek().clone() {
            Tok::Ident(k) if k == "skip" => {
                self.bump();
                Ok(Command::Skip)
            }
            Tok::Ident(k) if k == "while" => {
                self.bump();
                self.expect_sym("(")?;
                let e = self.expr()?;
                self.expect_sym(")")?;
                let body = self.block(spans, vec![0])?;
                Ok(Command::while_(e, body))
            }
            Tok::Ident(k) if k == "if" => {
                self.bump();
                self.expect_sym("(")?;
                let e = self.expr()?;
                self.expect_sym(")")?;
                let a = self.block(spans, vec![0])?;
                self.expect_kw("else")?;
                let b = self.block(spans, vec![1])?;
                Ok(Command::if_(e, a, b))
            }
            Tok::Sym("{") => {
                spans.pop();
                self.block(spans, vec![])
            }
            Tok::Ident(_) => {
                let x = self.name("a variable")?;
                self.expect_sym(":=")?;
                let e = self.expr()?;
                Ok(Command::Assign(Var::new(x), e))
            }
            t => self.error(format!("expected a command, found {}", Self::describe(&t))),
        }
    }

    // ---- declarations ----

    fn op_name(&mut self) -> Result<String> {
        let name = match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                s
            }
            Tok::Sym(s @ ("+" | "-" | ">")) => {
                self.bump();
                let n = self.expect_num()?;
                format!("{s}{n}")
            }
            Tok::Sym(s @ ("==" | "!=")) => {
                self.bump();
                s.to_owned()
            }
            t => return self.error(format!("expected an operator name, found {}", Self::describe(&t))),
        };
        Ok(name)
    }

    fn sig(&mut self, arity: usize) -> Result<OpSig> {
        let mut tiers = vec![self.tier()?];
        while self.is_sym("->") {
            self.bump();
            tiers.push(self.tier()?);
        }
        if tiers.len() != arity + 1 {
            return self.error(format!(
                "signature has {} argument tier(s), operator arity is {arity}",
                tiers.len() - 1
            ));
        }
        let result = tiers.pop().expect("nonempty");
        Ok(OpSig { args: tiers, result })
    }

    fn sig_list(&mut self, arity: usize) -> Result<Vec<OpSig>> {
        let mut sigs = vec![self.sig(arity)?];
        while self.is_sym(",") {
            self.bump();
            sigs.push(self.sig(arity)?);
        }
        Ok(sigs)
    }

    fn op_decl(&mut self, spans: &mut SpanTable) -> Result<OpDecl> {
        let span = self.span();
        self.expect_kw("op")?;
        let name_span = self.span();
        let name = self.op_name()?;
        let Some(def) = ops::builtin(&name) else {
            return Err(Error::Syntax {
                span: name_span,
                message: format!("no builtin operator named `{name}`"),
            });
        };
        self.expect_kw("arity")?;
        let arity_span = self.span();
        let arity = self.expect_num()? as usize;
        if arity != def.arity {
            return Err(Error::ArityMismatch {
                span: arity_span,
                name,
                expected: def.arity,
                found: arity,
            });
        }
        let mut class = def.class;
        if self.is_kw("class") {
            self.bump();
            class = match self.peek().clone() {
                Tok::Ident(k) if k == "neutral" => {
                    self.bump();
                    if def.class.is_neutral() {
                        def.class
                    } else {
                        OpClass::Subword
                    }
                }
                Tok::Ident(k) if k == "predicate" => {
                    self.bump();
                    OpClass::Predicate
                }
                Tok::Ident(k) if k == "subword" => {
                    self.bump();
                    OpClass::Subword
                }
                Tok::Ident(k) if k == "positive" => {
                    self.bump();
                    OpClass::Positive(self.expect_num()? as usize)
                }
                t => {
                    return self.error(format!(
                        "expected `neutral`, `predicate`, `subword` or `positive N`, found {}",
                        Self::describe(&t)
                    ))
                }
            };
        }
        let mut sigs = None;
        if self.is_kw("sig") {
            self.bump();
            sigs = Some(self.sig_list(arity)?);
        }
        self.expect_sym(";")?;
        // `op ...; sig ...;` form
        if sigs.is_none() && self.is_kw("sig") {
            self.bump();
            sigs = Some(self.sig_list(arity)?);
            self.expect_sym(";")?;
        }
        spans.ops.insert(name.clone(), span);
        Ok(OpDecl {
            name,
            arity,
            class,
            sigs,
        })
    }

    fn alphabet(&mut self) -> Result<Alphabet> {
        self.expect_kw("alphabet")?;
        let span = self.span();
        let mut letters = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Ident(s) | Tok::Num(s) => {
                    self.bump();
                    letters.extend(s.bytes());
                }
                Tok::Sym(";") => break,
                t => return self.error(format!("expected letters, found {}", Self::describe(&t))),
            }
        }
        self.expect_sym(";")?;
        Alphabet::new(letters).map_err(|e| Error::Syntax {
            span,
            message: e.to_string(),
        })
    }

    fn vars(&mut self, out: &mut BTreeMap<Var, Tier>) -> Result<()> {
        self.expect_kw("vars")?;
        loop {
            let span = self.span();
            let x = Var::new(self.name("a variable")?);
            self.expect_sym(":")?;
            let t = self.tier()?;
            if out.insert(x.clone(), t).is_some() {
                return Err(Error::Syntax {
                    span,
                    message: format!("variable `{x}` annotated twice"),
                });
            }
            if self.is_sym(",") {
                self.bump();
            } else {
                break;
            }
        }
        self.expect_sym(";")
    }

    fn file(&mut self) -> Result<SourceFile> {
        let mut alphabet = None;
        let mut decls: Vec<OpDecl> = Vec::new();
        let mut annotations = BTreeMap::new();
        let mut threads = Program::new();
        let mut spans = SpanTable::default();
        let mut thread_spans: Vec<(ThreadId, Vec<(NodePath, Span)>)> = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(k) if k == "alphabet" => {
                    if alphabet.is_some() {
                        return self.error("alphabet declared twice");
                    }
                    alphabet = Some(self.alphabet()?);
                }
                Tok::Ident(k) if k == "op" => {
                    let span = self.span();
                    let d = self.op_decl(&mut spans)?;
                    if decls.iter().any(|o| o.name == d.name) {
                        return Err(Error::Syntax {
                            span,
                            message: format!("operator `{}` declared twice", d.name),
                        });
                    }
                    decls.push(d);
                }
                Tok::Ident(k) if k == "vars" => self.vars(&mut annotations)?,
                Tok::Ident(k) if k == "thread" => {
                    let span = self.span();
                    self.bump();
                    let id = ThreadId::new(self.name("a thread name")?);
                    if threads.contains_key(&id) {
                        return Err(Error::Syntax {
                            span,
                            message: format!("thread `{id}` defined twice"),
                        });
                    }
                    let mut local = Vec::new();
                    let body = self.block(&mut local, vec![])?;
                    spans.threads.insert(id.clone(), span);
                    thread_spans.push((id.clone(), local));
                    threads.insert(id, body);
                }
                t => {
                    return self.error(format!(
                        "expected `alphabet`, `op`, `vars` or `thread`, found {}",
                        Self::describe(&t)
                    ))
                }
            }
        }
        for (id, local) in thread_spans {
            for (p, s) in local {
                spans.commands.entry((id.clone(), p)).or_insert(s);
            }
        }
        let file = SourceFile {
            alphabet: alphabet.unwrap_or_default(),
            ops: decls,
            annotations,
            threads,
            spans,
        };
        check_operators(&file)?;
        Ok(file)
    }
}

/// Every used operator is declared (or a literal) and applied at its arity;
/// literals only use letters of the alphabet.
fn check_operators(file: &SourceFile) -> Result<()> {
    let declared: HashMap<&str, usize> = file.ops.iter().map(|d| (d.name.as_str(), d.arity)).collect();
    for (tid, body) in &file.threads {
        let mut err = None;
        let mut visit = |path: &NodePath, c: &Command| {
            let e = match c {
                Command::Assign(_, e) | Command::If(e, _, _) | Command::While(e, _) => e,
                _ => return,
            };
            let span = file.command_span(tid, path).unwrap_or_default();
            e.for_each_op(&mut |name, args| {
                if err.is_some() {
                    return;
                }
                if let Some(w) = ops::literal_word(name) {
                    if !file.alphabet.admits(&w) {
                        err = Some(Error::Syntax {
                            span,
                            message: format!("literal {name} uses letters outside the alphabet"),
                        });
                    }
                    return;
                }
                match declared.get(name) {
                    None => {
                        err = Some(Error::UndeclaredOperator {
                            span,
                            name: name.to_owned(),
                        })
                    }
                    Some(&n) if n != args.len() => {
                        err = Some(Error::ArityMismatch {
                            span,
                            name: name.to_owned(),
                            expected: n,
                            found: args.len(),
                        })
                    }
                    _ => {}
                }
            });
        };
        walk_paths(body, &mut vec![], &mut visit);
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(())
}

/// Pre-order traversal with node paths.
pub fn walk_paths<'a>(c: &'a Command, path: &mut NodePath, f: &mut impl FnMut(&NodePath, &'a Command)) {
    f(path, c);
    match c {
        Command::Seq(a, b) | Command::If(_, a, b) => {
            path.push(0);
            walk_paths(a, path, f);
            path.pop();
            path.push(1);
            walk_paths(b, path, f);
            path.pop();
        }
        Command::While(_, body) => {
            path.push(0);
            walk_paths(body, path, f);
            path.pop();
        }
        Command::Assign(..) | Command::Skip => {}
    }
}

impl serde::Serialize for Command {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&pretty_command(self))
    }
}

impl serde::Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&pretty_expr(self))
    }
}

/// Parses a complete `.tier` file.
pub fn parse(text: &str) -> Result<SourceFile> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    p.file()
}

/// Parses a command sequence on its own, without declaration checks.
pub fn parse_command(text: &str) -> Result<Command> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let c = p.commands(&mut Vec::new(), vec![])?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {}", Parser::describe(p.peek())));
    }
    Ok(c)
}

/// Parses an expression on its own, without declaration checks.
pub fn parse_expr(text: &str) -> Result<Expr> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {}", Parser::describe(p.peek())));
    }
    Ok(e)
}

// ---- pretty printing ----

const PREC_CMP: u8 = 0;
const PREC_SUFFIX: u8 = 1;
const PREC_UNARY: u8 = 2;
const PREC_ATOM: u8 = 3;

fn expr_prec(e: &Expr) -> u8 {
    match e {
        Expr::Op(n, args) if args.len() == 2 && (n == "==" || n == "!=") => PREC_CMP,
        Expr::Op(n, args) if args.len() == 1 && (n == "+1" || n == "-1" || n == ">0") => PREC_SUFFIX,
        Expr::Op(n, args) if args.len() == 1 && n == "not" => PREC_UNARY,
        _ => PREC_ATOM,
    }
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    let prec = expr_prec(e);
    if prec < min_prec {
        out.push('(');
        write_expr(out, e, PREC_CMP);
        out.push(')');
        return;
    }
    match e {
        Expr::Var(x) => out.push_str(x.as_str()),
        Expr::Op(n, args) => match prec {
            PREC_CMP => {
                write_expr(out, &args[0], PREC_SUFFIX);
                let _ = write!(out, " {n} ");
                write_expr(out, &args[1], PREC_SUFFIX);
            }
            PREC_SUFFIX => {
                write_expr(out, &args[0], PREC_SUFFIX);
                let sugar = match n.as_str() {
                    "+1" => " + 1",
                    "-1" => " - 1",
                    _ => " > 0",
                };
                out.push_str(sugar);
            }
            PREC_UNARY => {
                out.push('!');
                write_expr(out, &args[0], PREC_UNARY);
            }
            _ => {
                if ops::is_literal(n) {
                    out.push_str(n);
                    return;
                }
                out.push_str(n);
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_expr(out, a, PREC_CMP);
                }
                out.push(')');
            }
        },
    }
}

pub fn pretty_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, PREC_CMP);
    s
}

struct CmdPrinter {
    out: String,
    compact: bool,
    indent: usize,
}

impl CmdPrinter {
    fn newline(&mut self) {
        if self.compact {
            self.out.push(' ');
        } else {
            self.out.push('\n');
            for _ in 0..self.indent {
                self.out.push_str("  ");
            }
        }
    }

    fn block(&mut self, c: &Command) {
        self.out.push('{');
        self.indent += 1;
        self.newline();
        self.cmd(c);
        self.indent -= 1;
        self.newline();
        self.out.push('}');
    }

    fn cmd(&mut self, c: &Command) {
        match c {
            Command::Skip => self.out.push_str("skip"),
            Command::Assign(x, e) => {
                let _ = write!(self.out, "{x} := {}", pretty_expr(e));
            }
            Command::Seq(a, b) => {
                if matches!(**a, Command::Seq(..)) {
                    self.block(a);
                } else {
                    self.cmd(a);
                }
                self.out.push(';');
                self.newline();
                self.cmd(b);
            }
            Command::If(e, a, b) => {
                let _ = write!(self.out, "if ({}) ", pretty_expr(e));
                self.block(a);
                self.out.push_str(" else ");
                self.block(b);
            }
            Command::While(e, body) => {
                let _ = write!(self.out, "while ({}) ", pretty_expr(e));
                self.block(body);
            }
        }
    }
}

/// Single-line rendering, e.g. `while (x > 0) { x := x - 1; y := y + 1 }`.
pub fn pretty_command(c: &Command) -> String {
    let mut p = CmdPrinter {
        out: String::new(),
        compact: true,
        indent: 0,
    };
    p.cmd(c);
    p.out
}

/// Indented multi-line rendering starting at `indent` levels.
pub fn pretty_command_indented(c: &Command, indent: usize) -> String {
    let mut p = CmdPrinter {
        out: String::new(),
        compact: false,
        indent,
    };
    p.cmd(c);
    p.out
}

fn write_sig(out: &mut String, s: &OpSig) {
    for a in &s.args {
        let _ = write!(out, "{a}->");
    }
    let _ = write!(out, "{}", s.result);
}

pub fn pretty_decl(d: &OpDecl) -> String {
    let mut s = format!("op {} arity {} class {}", d.name, d.arity, d.class);
    if let Some(sigs) = &d.sigs {
        s.push_str(" sig ");
        for (i, sig) in sigs.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            write_sig(&mut s, sig);
        }
    }
    s.push(';');
    s
}

pub fn pretty(file: &SourceFile) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "alphabet {};", file.alphabet);
    for d in &file.ops {
        let _ = writeln!(s, "{}", pretty_decl(d));
    }
    if !file.annotations.is_empty() {
        let parts: Vec<String> = file.annotations.iter().map(|(x, t)| format!("{x} : {t}")).collect();
        let _ = writeln!(s, "vars {};", parts.join(", "));
    }
    for (id, body) in &file.threads {
        let _ = writeln!(s, "\nthread {id} {{\n  {}\n}}", pretty_command_indented(body, 1));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skip_thread() {
        let f = parse("thread t { skip }").unwrap();
        assert_eq!(f.threads.len(), 1);
        assert_eq!(f.threads[&ThreadId::from("t")], Command::Skip);
    }

    #[test]
    fn empty_expression_is_syntax_error() {
        let err = parse("thread t { x := }").unwrap_err();
        match err {
            Error::Syntax { span, message } => {
                assert_eq!(span, Span { line: 1, col: 17 });
                assert!(message.contains("expected an expression"), "{message}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn undeclared_and_arity() {
        let e = parse("thread t { x := pred(x) }").unwrap_err();
        assert!(matches!(e, Error::UndeclaredOperator { ref name, .. } if name == "pred"));
        let e = parse("op pred arity 1; thread t { x := pred(x, x) }").unwrap_err();
        assert!(matches!(
            e,
            Error::ArityMismatch {
                expected: 1,
                found: 2,
                ..
            }
        ));
        let e = parse("op pred arity 2;").unwrap_err();
        assert!(matches!(
            e,
            Error::ArityMismatch {
                expected: 1,
                found: 2,
                ..
            }
        ));
    }

    #[test]
    fn pretty_small_commands() {
        assert_eq!(pretty_command(&Command::Skip), "skip");
        assert_eq!(
            pretty_command(&Command::seq(Command::Skip, Command::Skip)),
            "skip; skip"
        );
    }

    #[test]
    fn left_nested_seq_round_trips() {
        let c = Command::seq(
            Command::seq(Command::Skip, Command::assign("x", Expr::var("y"))),
            Command::Skip,
        );
        let text = pretty_command(&c);
        assert_eq!(text, "{ skip; x := y }; skip");
        assert_eq!(parse_command(&text).unwrap(), c);
    }

    #[test]
    fn sugar_precedence() {
        let e = parse_expr("!x > 0").unwrap();
        assert_eq!(e, Expr::op(">0", vec![Expr::op("not", vec![Expr::var("x")])]));
        assert_eq!(pretty_expr(&e), "!x > 0");
        let e = Expr::op("not", vec![Expr::op(">0", vec![Expr::var("x")])]);
        assert_eq!(pretty_expr(&e), "!(x > 0)");
        assert_eq!(parse_expr("!(x > 0)").unwrap(), e);
        assert_eq!(parse_expr("0").unwrap(), Expr::op("\"\"", vec![]));
        assert_eq!(parse_expr("3").unwrap(), Expr::op("\"111\"", vec![]));
    }

    #[test]
    fn sig_forms() {
        let f = parse("op pred arity 1 class neutral; sig 1->1, 1->0;\nthread t { skip }").unwrap();
        assert_eq!(f.ops[0].class, OpClass::Subword);
        assert_eq!(f.ops[0].sigs.as_ref().unwrap().len(), 2);
        let g = parse(&pretty(&f)).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn spans_recorded_for_commands() {
        let f = parse("op pred arity 1;\nthread t {\n  skip;\n  x := pred(x)\n}").unwrap();
        let t = ThreadId::from("t");
        assert_eq!(f.command_span(&t, &[1]), Some(Span { line: 4, col: 3 }));
        assert_eq!(f.command_span(&t, &[0]), Some(Span { line: 3, col: 3 }));
    }

    #[test]
    fn literal_outside_alphabet_rejected() {
        assert!(parse("thread t { x := \"ab\" }").is_err());
        assert!(parse("alphabet a b; thread t { x := \"ab\" }").is_ok());
    }
}
