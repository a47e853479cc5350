//! `tierflow`: batch front end for checking, running and analysing tiered
//! programs.
//!
//! Exit codes: 0 on success verdicts, 1 on rejections, counterexamples,
//! fuel exhaustion and superpolynomial fits, 2 on usage, IO and parse
//! errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use tierflow::analysis::{
    fit_polynomial, measure_growth, ni_suite, GrowthMode, Metric, NiConfig, NiMode, DEFAULT_FIT_THRESHOLD,
};
use tierflow::parser::{parse, SourceFile};
use tierflow::sample::StoreSampler;
use tierflow::sched::{explore, run_with_scheduler, ExploreLimits, SchedulerKind};
use tierflow::semantics::RunOptions;
use tierflow::syntax::program_vars;
use tierflow::tm::{compile_tm_with, CompileOptions, TmSpec};
use tierflow::typing::{check_program, infer_tiers, InferVerdict, ProgramVerdict, VarTypeEnv};
use tierflow::{Store, Var, Word};

#[derive(Parser)]
#[command(
    name = "tierflow",
    version,
    about = "Tiered type checker, interpreter and analyses for a multi-threaded while-language"
)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Print reports as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Type-check a program.
    Check {
        file: PathBuf,
        /// Infer tiers for unannotated variables.
        #[arg(long)]
        infer: bool,
    },
    /// Run a program under a scheduler.
    Run {
        file: PathBuf,
        #[arg(long, default_value = "round-robin")]
        scheduler: SchedulerKind,
        #[arg(long, default_value_t = 1_000_000)]
        fuel: u64,
        #[command(flatten)]
        inputs: Inputs,
        /// Write the step trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        gate: Gate,
    },
    /// Explore every interleaving.
    Explore {
        file: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        max_steps: u64,
        #[arg(long, default_value_t = 200_000)]
        max_states: u64,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Randomised non-interference trials.
    Ni {
        file: PathBuf,
        #[arg(long, default_value_t = 200)]
        trials: u64,
        #[arg(long, default_value_t = 10_000)]
        fuel: u64,
        /// Longest sampled word.
        #[arg(long, default_value_t = 6)]
        max_len: usize,
        #[arg(long, default_value = "round-robin", conflicts_with = "exhaustive")]
        scheduler: SchedulerKind,
        /// Compare all interleavings instead of one scheduled run.
        #[arg(long)]
        exhaustive: bool,
        /// Do not compare global step counts.
        #[arg(long)]
        ignore_k: bool,
        #[command(flatten)]
        gate: Gate,
    },
    /// Measure step counts over input sizes and fit a polynomial.
    Measure {
        file: PathBuf,
        /// Sizes as `A..B` or a comma-separated list.
        #[arg(long)]
        sizes: String,
        /// Variables set to the unary word of length n.
        #[arg(long, value_delimiter = ',', required = true)]
        vars: Vec<String>,
        /// Fixed values for other variables.
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value = "round-robin")]
        scheduler: SchedulerKind,
        /// Take maxima over all interleavings.
        #[arg(long)]
        explore: bool,
        #[arg(long, default_value_t = 10_000_000)]
        fuel: u64,
        /// Write the growth table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        max_degree: usize,
        #[arg(long, default_value_t = DEFAULT_FIT_THRESHOLD)]
        threshold: f64,
        /// Fit `k` or `t`.
        #[arg(long, default_value = "k")]
        metric: String,
        #[command(flatten)]
        gate: Gate,
    },
    /// Compile a Turing machine description to a program.
    TmCompile {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Count simulated steps in a tier-0 variable `Tick`.
        #[arg(long)]
        instrument: bool,
    },
}

#[derive(Args)]
struct Inputs {
    /// Initial value `VAR=WORD`; `tt`, `ff` and `ε` name the truth values and the empty word.
    #[arg(long = "input", value_name = "VAR=WORD")]
    input: Vec<String>,
}

#[derive(Args)]
struct Gate {
    /// Proceed on programs the checker rejects, using their annotations.
    #[arg(long)]
    unsafe_ok: bool,
}

enum Fail {
    Usage(String),
    Verdict,
}

impl<E: std::fmt::Display> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail::Usage(e.to_string())
    }
}

type Res = Result<(), Fail>;

struct Out {
    json: bool,
}

impl Out {
    fn emit(&self, text: &str, value: Value) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(&value).expect("serialisable"));
        } else {
            print!("{text}");
        }
    }
}

fn read(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<SourceFile, Fail> {
    parse(&read(path)?).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))
}

fn parse_word(s: &str) -> Word {
    match s {
        "tt" => Word::tt(),
        "ff" => Word::ff(),
        "ε" => Word::empty(),
        _ => Word::from(s),
    }
}

fn input_store(inputs: &Inputs) -> Result<Store, Fail> {
    let mut mu = Store::new();
    for kv in &inputs.input {
        let (x, w) = kv
            .split_once('=')
            .ok_or_else(|| Fail::Usage(format!("bad --input `{kv}`, expected VAR=WORD")))?;
        mu.set(Var::from(x), parse_word(w));
    }
    Ok(mu)
}

/// Γ of a safe program, or its annotations when `unsafe_ok` is set.
fn gamma_for(file: &SourceFile, gate: &Gate) -> Result<VarTypeEnv, Fail> {
    match check_program(file)? {
        ProgramVerdict::Safe { derivation } => Ok(derivation.gamma),
        ProgramVerdict::Rejected { .. } if gate.unsafe_ok => Ok(file.annotations.clone()),
        ProgramVerdict::Rejected { diagnostics } => {
            eprintln!("program rejected by the type checker (use --unsafe-ok to proceed):");
            for d in diagnostics {
                eprintln!("  {d}");
            }
            Err(Fail::Verdict)
        }
    }
}

/// Program variables (unset ones shown as ε) plus any extra bindings.
fn store_lines(file: &SourceFile, s: &Store) -> String {
    let mut vars = program_vars(&file.threads);
    vars.extend(s.iter().map(|(x, _)| x.clone()));
    let mut out = String::new();
    for x in vars {
        let _ = writeln!(out, "  {x} = {}", s.get(x.as_str()));
    }
    out
}

fn gamma_lines(g: &VarTypeEnv) -> String {
    let mut out = String::new();
    for (x, t) in g {
        let _ = writeln!(out, "  {x} : {t}");
    }
    out
}

fn cmd_check(out: &Out, path: &Path, infer: bool) -> Res {
    let file = load(path)?;
    let partial = file
        .threads
        .values()
        .flat_map(|c| {
            let mut v = Vec::new();
            c.vars_in_order(&mut v);
            v
        })
        .any(|x| !file.annotations.contains_key(&x));
    if partial {
        let verdict = infer_tiers(&file)?;
        let ok = infer && matches!(verdict, InferVerdict::Solution { .. });
        let mut text = String::new();
        match &verdict {
            InferVerdict::Solution { derivation } if infer => {
                text.push_str("safe (inferred)\n");
                text.push_str(&gamma_lines(&derivation.gamma));
                for (t, tier) in derivation.thread_tiers() {
                    let _ = writeln!(text, "  thread {t} : {tier}");
                }
            }
            InferVerdict::Solution { derivation } => {
                text.push_str("rejected: incomplete annotations (--infer accepts the typing below)\n");
                text.push_str(&gamma_lines(&derivation.gamma));
            }
            InferVerdict::Unsatisfiable { core } => {
                text.push_str("rejected: no tier assignment exists; conflict core:\n");
                for d in core {
                    let _ = writeln!(text, "  {d}");
                }
            }
        }
        out.emit(&text, json!(verdict));
        return if ok { Ok(()) } else { Err(Fail::Verdict) };
    }
    let verdict = check_program(&file)?;
    let mut text = String::new();
    match &verdict {
        ProgramVerdict::Safe { derivation } => {
            text.push_str("safe\n");
            text.push_str(&gamma_lines(&derivation.gamma));
            for (t, tier) in derivation.thread_tiers() {
                let _ = writeln!(text, "  thread {t} : {tier}");
            }
        }
        ProgramVerdict::Rejected { diagnostics } => {
            text.push_str("rejected\n");
            for d in diagnostics {
                let _ = writeln!(text, "  {d}");
            }
        }
    }
    out.emit(&text, json!(verdict));
    if verdict.is_safe() {
        Ok(())
    } else {
        Err(Fail::Verdict)
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    out: &Out,
    seed: u64,
    path: &Path,
    kind: &SchedulerKind,
    fuel: u64,
    inputs: &Inputs,
    trace: Option<&Path>,
    gate: &Gate,
) -> Res {
    let file = load(path)?;
    let gamma = gamma_for(&file, gate)?;
    let mu = input_store(inputs)?;
    let mut s = kind.build(seed);
    let opts = if trace.is_some() {
        RunOptions {
            fuel,
            trace_cap: usize::MAX,
        }
    } else {
        RunOptions::counters_only(fuel)
    };
    let run = run_with_scheduler(&mu, &file.threads, s.as_mut(), &gamma, opts, &file.registry())?;
    if let Some(p) = trace {
        fs::write(p, run.dump()).map_err(|e| Fail::Usage(format!("{}: {e}", p.display())))?;
    }
    let status = if run.finished() { "finished" } else { "fuel exhausted" };
    let mut text = format!(
        "status: {status}\nscheduler: {kind}\nk: {}\nt: {}\nstore:\n",
        run.config.k, run.config.t
    );
    text.push_str(&store_lines(&file, &run.config.store));
    out.emit(
        &text,
        json!({
            "status": run.status,
            "scheduler": kind.to_string(),
            "k": run.config.k,
            "t": run.config.t,
            "store": run.config.store,
            "choices": run.choice_trace(),
        }),
    );
    if run.finished() {
        Ok(())
    } else {
        Err(Fail::Verdict)
    }
}

fn cmd_explore(out: &Out, path: &Path, limits: ExploreLimits, inputs: &Inputs) -> Res {
    let file = load(path)?;
    let mu = input_store(inputs)?;
    let rep = explore(&mu, &file.threads, limits, &file.registry())?;
    let opt = |v: Option<u64>| v.map_or("-".to_owned(), |v| v.to_string());
    let mut text = format!(
        "visited: {}\nterminal stores: {}\nmax k: {}\nmax t: {}\ncycle: {}\nstuck: {}\nlimits hit: {}\nstrongly terminating within bounds: {}\n",
        rep.visited,
        rep.terminal_stores.len(),
        opt(rep.max_k),
        opt(rep.max_t),
        rep.cycle,
        rep.stuck,
        rep.limits_hit,
        rep.strongly_terminating_within_bounds
    );
    for (i, s) in rep.terminal_stores.iter().enumerate() {
        let _ = writeln!(text, "terminal {}:", i + 1);
        text.push_str(&store_lines(&file, s));
    }
    out.emit(&text, json!(rep));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ni(
    out: &Out,
    seed: u64,
    path: &Path,
    trials: u64,
    fuel: u64,
    max_len: usize,
    kind: &SchedulerKind,
    exhaustive: bool,
    ignore_k: bool,
    gate: &Gate,
) -> Res {
    let file = load(path)?;
    let gamma = gamma_for(&file, gate)?;
    let mode = if exhaustive {
        NiMode::Exhaustive(ExploreLimits {
            max_steps: fuel,
            ..ExploreLimits::default()
        })
    } else {
        NiMode::Scheduler(kind.clone())
    };
    let cfg = NiConfig {
        trials,
        fuel,
        seed,
        sampler: StoreSampler::new(file.alphabet.clone(), max_len),
        mode,
        compare_k: !ignore_k && !exhaustive,
    };
    let rep = ni_suite(&file.threads, &gamma, &cfg, &file.registry())?;
    let mut text = format!(
        "mode: {}\ntrials: {}\ninconclusive: {}\n",
        rep.mode, rep.trials, rep.inconclusive
    );
    if rep.passed() {
        text.push_str("verdict: pass\n");
    } else if let tierflow::analysis::NiVerdict::Counterexample {
        trial,
        field,
        left_store,
        right_store,
        left,
        right,
    } = &rep.verdict
    {
        let _ = writeln!(text, "verdict: counterexample at trial {trial} ({field} differs)");
        text.push_str("left store:\n");
        text.push_str(&store_lines(&file, left_store));
        text.push_str("right store:\n");
        text.push_str(&store_lines(&file, right_store));
        let _ = writeln!(text, "left: {} t={:?} k={:?}", left.status, left.t, left.k);
        let _ = writeln!(text, "right: {} t={:?} k={:?}", right.status, right.t, right.k);
    }
    out.emit(&text, json!(rep));
    if rep.passed() {
        Ok(())
    } else {
        Err(Fail::Verdict)
    }
}

fn parse_sizes(s: &str) -> Result<Vec<u64>, Fail> {
    let bad = || Fail::Usage(format!("bad --sizes `{s}`, expected A..B or a list"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

struct MeasureArgs<'a> {
    path: &'a Path,
    sizes: &'a str,
    vars: &'a [String],
    inputs: &'a Inputs,
    kind: &'a SchedulerKind,
    explore: bool,
    fuel: u64,
    csv: Option<&'a Path>,
    max_degree: usize,
    threshold: f64,
    metric: &'a str,
    gate: &'a Gate,
}

fn cmd_measure(out: &Out, seed: u64, a: MeasureArgs<'_>) -> Res {
    let file = load(a.path)?;
    gamma_for(&file, a.gate)?;
    let metric = match a.metric {
        "k" => Metric::K,
        "t" => Metric::T,
        m => return Err(Fail::Usage(format!("unknown metric `{m}`, expected k or t"))),
    };
    let sizes = parse_sizes(a.sizes)?;
    let base = input_store(a.inputs)?;
    let vars: Vec<Var> = a.vars.iter().map(|x| Var::from(x.as_str())).collect();
    let inputs = |n: u64| {
        let mut mu = base.clone();
        for x in &vars {
            mu.set(x.clone(), Word::unary(n as usize));
        }
        mu
    };
    let mode = if a.explore {
        GrowthMode::Explore(ExploreLimits::default())
    } else {
        GrowthMode::Scheduler(a.kind.clone(), seed)
    };
    let table = measure_growth(&file.threads, &inputs, &sizes, &mode, a.fuel, &file.registry())?;
    if let Some(p) = a.csv {
        fs::write(p, table.to_csv()).map_err(|e| Fail::Usage(format!("{}: {e}", p.display())))?;
    }
    let fit = fit_polynomial(&table, metric, a.max_degree, a.threshold)?;
    let mut text = String::new();
    if a.csv.is_none() {
        text.push_str(&table.to_csv());
    }
    for f in &fit.fits {
        let _ = writeln!(text, "degree {}: residual {:.4}", f.degree, f.residual);
    }
    match fit.selected() {
        Some(f) => {
            let coeffs: Vec<String> = f.coefficients.iter().map(|c| format!("{c:.4}")).collect();
            let _ = writeln!(
                text,
                "selected degree: {} (coefficients {})",
                f.degree,
                coeffs.join(", ")
            );
        }
        None => text.push_str("selected degree: none (superpolynomial suspect)\n"),
    }
    if table.rows.iter().any(|r| r.fuel_hit) {
        text.push_str("warning: some sizes ran out of fuel\n");
    }
    out.emit(&text, json!({ "table": table, "fit": fit }));
    if fit.superpolynomial_suspect() {
        Err(Fail::Verdict)
    } else {
        Ok(())
    }
}

fn cmd_tm_compile(path: &Path, output: Option<&Path>, instrument: bool) -> Res {
    let spec = TmSpec::parse(&read(path)?).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))?;
    let compiled = compile_tm_with(&spec, &CompileOptions { instrument })?;
    match output {
        Some(p) => fs::write(p, &compiled.text).map_err(|e| Fail::Usage(format!("{}: {e}", p.display())))?,
        None => print!("{}", compiled.text),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let out = Out { json: cli.json };
    let seed = cli.seed;
    let res = match &cli.cmd {
        Cmd::Check { file, infer } => cmd_check(&out, file, *infer),
        Cmd::Run {
            file,
            scheduler,
            fuel,
            inputs,
            trace,
            gate,
        } => cmd_run(&out, seed, file, scheduler, *fuel, inputs, trace.as_deref(), gate),
        Cmd::Explore {
            file,
            max_steps,
            max_states,
            inputs,
        } => cmd_explore(
            &out,
            file,
            ExploreLimits {
                max_steps: *max_steps,
                max_states: *max_states,
            },
            inputs,
        ),
        Cmd::Ni {
            file,
            trials,
            fuel,
            max_len,
            scheduler,
            exhaustive,
            ignore_k,
            gate,
        } => cmd_ni(
            &out,
            seed,
            file,
            *trials,
            *fuel,
            *max_len,
            scheduler,
            *exhaustive,
            *ignore_k,
            gate,
        ),
        Cmd::Measure {
            file,
            sizes,
            vars,
            inputs,
            scheduler,
            explore,
            fuel,
            csv,
            max_degree,
            threshold,
            metric,
            gate,
        } => cmd_measure(
            &out,
            seed,
            MeasureArgs {
                path: file,
                sizes,
                vars,
                inputs,
                kind: scheduler,
                explore: *explore,
                fuel: *fuel,
                csv: csv.as_deref(),
                max_degree: *max_degree,
                threshold: *threshold,
                metric,
                gate,
            },
        ),
        Cmd::TmCompile {
            file,
            output,
            instrument,
        } => cmd_tm_compile(file, output.as_deref(), *instrument),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Verdict) => ExitCode::from(1),
        Err(Fail::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
