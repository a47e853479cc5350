//! Empirical harnesses: non-interference trials, the subword invariant on
//! tier-1 values, typing properties checked on concrete programs, and
//! polynomial growth fits.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ops::Registry;
use crate::sample::{tier1_projection, StoreSampler};
use crate::sched::{explore, run_with_scheduler, step_global_in_place, ExploreLimits, GlobalConfig, SchedulerKind};
use crate::semantics::{step_in_place, RunOptions, RunStatus, SeqTrace};
use crate::syntax::{Command, Expr, Program, Store, ThreadId, Tier, Var};
use crate::typing::{command_tiers, type_expr, ExprDeriv, ExprDerivNode, OpTypeEnv, VarTypeEnv};
use crate::word::Word;

// ---- store equivalence ----

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EquivWitness {
    pub left: Store,
    pub right: Store,
    pub checked: Vec<Var>,
    pub first_diff: Option<Var>,
}

impl EquivWitness {
    pub fn equivalent(&self) -> bool {
        self.first_diff.is_none()
    }
}

/// Compares two stores on the tier-1 variables of `gamma`.
pub fn store_equiv(gamma: &VarTypeEnv, mu: &Store, sigma: &Store) -> EquivWitness {
    let checked: Vec<Var> = gamma
        .iter()
        .filter(|(_, &t)| t == Tier::One)
        .map(|(x, _)| x.clone())
        .collect();
    let first_diff = checked
        .iter()
        .find(|x| mu.get(x.as_str()) != sigma.get(x.as_str()))
        .cloned();
    EquivWitness {
        left: mu.clone(),
        right: sigma.clone(),
        checked,
        first_diff,
    }
}

// ---- non-interference ----

#[derive(Clone, Debug)]
pub enum NiMode {
    /// One run per store under a fresh scheduler instance.
    Scheduler(SchedulerKind),
    /// Exhaustive exploration of all interleavings.
    Exhaustive(ExploreLimits),
}

#[derive(Clone, Debug)]
pub struct NiConfig {
    pub trials: u64,
    pub fuel: u64,
    pub seed: u64,
    pub sampler: StoreSampler,
    pub mode: NiMode,
    /// Also require equal global step counts (scheduler mode only).
    pub compare_k: bool,
}

/// What a single run or exploration produced, reduced to the observables
/// non-interference compares.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Observation {
    pub status: String,
    pub tier1: BTreeSet<Store>,
    pub t: Option<u64>,
    pub k: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum NiVerdict {
    Pass,
    Counterexample {
        trial: u64,
        field: String,
        left_store: Store,
        right_store: Store,
        left: Observation,
        right: Observation,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NiReport {
    pub mode: String,
    pub trials: u64,
    /// Exhaustive trials skipped because a limit was hit.
    pub inconclusive: u64,
    pub verdict: NiVerdict,
}

impl NiReport {
    pub fn passed(&self) -> bool {
        self.verdict == NiVerdict::Pass
    }
}

fn observe(
    mu: &Store,
    m: &Program,
    gamma: &VarTypeEnv,
    cfg: &NiConfig,
    trial_seed: u64,
    registry: &Registry,
) -> Result<Option<Observation>> {
    match &cfg.mode {
        NiMode::Scheduler(kind) => {
            let mut s = kind.build(trial_seed);
            let r = run_with_scheduler(mu, m, s.as_mut(), gamma, RunOptions::counters_only(cfg.fuel), registry);
            Ok(Some(match r {
                Ok(r) => Observation {
                    status: match r.status {
                        RunStatus::Finished => "finished",
                        RunStatus::FuelExhausted => "fuel_exhausted",
                    }
                    .into(),
                    tier1: [tier1_projection(&r.config.store, gamma)].into(),
                    t: Some(r.config.t),
                    k: cfg.compare_k.then_some(r.config.k),
                },
                Err(Error::StuckGuard { .. }) => Observation {
                    status: "stuck".into(),
                    tier1: BTreeSet::new(),
                    t: None,
                    k: None,
                },
                Err(e) => return Err(e),
            }))
        }
        NiMode::Exhaustive(limits) => {
            let rep = explore(mu, m, *limits, registry)?;
            if rep.limits_hit {
                return Ok(None);
            }
            Ok(Some(Observation {
                status: if rep.strongly_terminating_within_bounds {
                    "terminating"
                } else {
                    "not_terminating"
                }
                .into(),
                tier1: rep.terminal_stores.iter().map(|s| tier1_projection(s, gamma)).collect(),
                t: rep.max_t,
                k: None,
            }))
        }
    }
}

/// Runs `m` from `trials` random ≈-related store pairs and compares the
/// tier-1 projections of the outcomes, the loop measure `t`, and (if
/// configured) the step count `k`.
pub fn ni_suite(m: &Program, gamma: &VarTypeEnv, cfg: &NiConfig, registry: &Registry) -> Result<NiReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mode = match &cfg.mode {
        NiMode::Scheduler(k) => format!("scheduler {k}"),
        NiMode::Exhaustive(_) => "exhaustive".to_owned(),
    };
    let mut inconclusive = 0;
    for trial in 0..cfg.trials {
        let (a, b) = cfg.sampler.pair(&mut rng, gamma);
        let trial_seed = cfg.seed.wrapping_add(trial);
        let (Some(oa), Some(ob)) = (
            observe(&a, m, gamma, cfg, trial_seed, registry)?,
            observe(&b, m, gamma, cfg, trial_seed, registry)?,
        ) else {
            inconclusive += 1;
            continue;
        };
        let field = if oa.status != ob.status {
            Some("status")
        } else if oa.tier1 != ob.tier1 {
            Some("tier1")
        } else if oa.t != ob.t {
            Some("t")
        } else if oa.k != ob.k {
            Some("k")
        } else {
            None
        };
        if let Some(field) = field {
            return Ok(NiReport {
                mode,
                trials: trial + 1,
                inconclusive,
                verdict: NiVerdict::Counterexample {
                    trial,
                    field: field.into(),
                    left_store: a,
                    right_store: b,
                    left: oa,
                    right: ob,
                },
            });
        }
    }
    Ok(NiReport {
        mode,
        trials: cfg.trials,
        inconclusive,
        verdict: NiVerdict::Pass,
    })
}

// ---- subword invariant ----

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SubwordVerdict {
    Pass { checked: u64 },
    Violation { step: u64, var: Var, value: Word },
}

impl SubwordVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, SubwordVerdict::Pass { .. })
    }
}

/// Checks that every value written to a tier-1 variable is `tt`, `ff`, or a
/// subword of some initial tier-1 value. Only assignments change the store,
/// so scanning the writes `(step, var, value)` covers every configuration.
pub fn subword_invariant<'a>(
    gamma: &VarTypeEnv,
    mu: &Store,
    writes: impl IntoIterator<Item = (u64, &'a Var, &'a Word)>,
) -> SubwordVerdict {
    let initial: Vec<Word> = gamma
        .iter()
        .filter(|(_, &t)| t == Tier::One)
        .map(|(x, _)| mu.get(x.as_str()))
        .collect();
    let mut checked = 0;
    for (step, x, w) in writes {
        if gamma.get(x) != Some(&Tier::One) {
            continue;
        }
        checked += 1;
        if !(w.is_truth_value() || initial.iter().any(|d| w.is_subword_of(d))) {
            return SubwordVerdict::Violation {
                step,
                var: x.clone(),
                value: w.clone(),
            };
        }
    }
    SubwordVerdict::Pass { checked }
}

/// [`subword_invariant`] over a sequential trace (which must not be
/// truncated).
pub fn subword_invariant_trace(gamma: &VarTypeEnv, mu: &Store, trace: &SeqTrace) -> SubwordVerdict {
    subword_invariant(
        gamma,
        mu,
        trace
            .steps
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.write.as_ref().map(|(x, w)| (i as u64 + 1, x, w))),
    )
}

// ---- typing properties on concrete programs ----

/// A tier-0 command contains no loop and assigns only tier-0 variables.
pub fn confinement_holds(gamma: &VarTypeEnv, delta: &OpTypeEnv, c: &Command) -> Result<bool> {
    if !command_tiers(gamma, delta, c)?.contains(Tier::Zero) {
        return Ok(true);
    }
    Ok(!c.contains_while() && c.assigned_vars().iter().all(|x| gamma.get(x) == Some(&Tier::Zero)))
}

/// A tier-1 expression derivation reads only tier-1 variables and applies
/// only neutral operators.
pub fn simple_security_holds(gamma: &VarTypeEnv, delta: &OpTypeEnv, registry: &Registry, e: &Expr) -> Result<bool> {
    let Some(d) = type_expr(gamma, delta, e)?.remove(&Tier::One) else {
        return Ok(true);
    };
    fn scan(e: &Expr, d: &ExprDeriv, gamma: &VarTypeEnv, registry: &Registry) -> Result<bool> {
        match (e, &d.node) {
            (Expr::Var(x), _) => Ok(gamma.get(x) == Some(&Tier::One)),
            (Expr::Op(name, args), ExprDerivNode::Op { args: ds, .. }) => {
                if !registry.lookup(name)?.class.is_neutral() {
                    return Ok(false);
                }
                for (a, ad) in args.iter().zip(ds) {
                    if !scan(a, ad, gamma, registry)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            _ => Ok(false),
        }
    }
    scan(e, &d, gamma, registry)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ReductionVerdict {
    Pass {
        steps: u64,
    },
    Violation {
        step: u64,
        thread: ThreadId,
        before: String,
        after: String,
    },
}

impl ReductionVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, ReductionVerdict::Pass { .. })
    }
}

/// Does the residual keep a tier at or below the least tier of its
/// predecessor?
fn reduces(gamma: &VarTypeEnv, delta: &OpTypeEnv, before: &Command, after: Option<&Command>) -> Result<bool> {
    let Some(after) = after else { return Ok(true) };
    let (b, a) = (
        command_tiers(gamma, delta, before)?,
        command_tiers(gamma, delta, after)?,
    );
    Ok(match (b.min(), a.min()) {
        (Some(tb), Some(ta)) => ta.le(tb),
        (None, _) => true,
        (Some(_), None) => false,
    })
}

/// Steps `m` under `sched` and re-types each stepped thread's residual.
#[allow(clippy::too_many_arguments)]
pub fn weak_subject_reduction(
    mu: &Store,
    m: &Program,
    gamma: &VarTypeEnv,
    delta: &OpTypeEnv,
    sched: &SchedulerKind,
    seed: u64,
    fuel: u64,
    registry: &Registry,
) -> Result<ReductionVerdict> {
    let mut s = sched.build(seed);
    let mut cfg = GlobalConfig::new(mu.clone(), m.clone());
    while !cfg.is_terminal() && cfg.k < fuel {
        let view = if s.is_quiet() {
            tier1_projection(&cfg.store, gamma)
        } else {
            cfg.store.clone()
        };
        let id = s.select(&cfg.program, &view);
        let before = cfg.program[&id].clone();
        match step_global_in_place(&mut cfg, &id, registry) {
            Ok(_) => {}
            Err(Error::StuckGuard { .. }) => break,
            Err(e) => return Err(e),
        }
        let after = cfg.program.get(&id);
        if !reduces(gamma, delta, &before, after)? {
            return Ok(ReductionVerdict::Violation {
                step: cfg.k,
                thread: id,
                before: crate::parser::pretty_command(&before),
                after: after.map(crate::parser::pretty_command).unwrap_or_default(),
            });
        }
    }
    Ok(ReductionVerdict::Pass { steps: cfg.k })
}

/// Sequential variant of [`weak_subject_reduction`] for a single command.
pub fn weak_subject_reduction_seq(
    mu: &Store,
    c: &Command,
    gamma: &VarTypeEnv,
    delta: &OpTypeEnv,
    fuel: u64,
    registry: &Registry,
) -> Result<ReductionVerdict> {
    let mut store = mu.clone();
    let mut cur = c.clone();
    for k in 1..=fuel {
        let (rest, _) = match step_in_place(&mut store, cur.clone(), registry) {
            Ok(r) => r,
            Err(Error::StuckGuard { .. }) => return Ok(ReductionVerdict::Pass { steps: k - 1 }),
            Err(e) => return Err(e),
        };
        if !reduces(gamma, delta, &cur, rest.as_ref())? {
            return Ok(ReductionVerdict::Violation {
                step: k,
                thread: ThreadId::from("main"),
                before: crate::parser::pretty_command(&cur),
                after: rest.as_ref().map(crate::parser::pretty_command).unwrap_or_default(),
            });
        }
        match rest {
            Some(c1) => cur = c1,
            None => return Ok(ReductionVerdict::Pass { steps: k }),
        }
    }
    Ok(ReductionVerdict::Pass { steps: fuel })
}

// ---- growth ----

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GrowthRow {
    pub n: u64,
    pub max_t: u64,
    pub max_k: u64,
    pub fuel_hit: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GrowthTable {
    pub rows: Vec<GrowthRow>,
}

impl GrowthTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,max_t,max_k,fuel_hit\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.n, r.max_t, r.max_k, r.fuel_hit);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub enum GrowthMode {
    Scheduler(SchedulerKind, u64),
    Explore(ExploreLimits),
}

/// Runs `m` on `inputs(n)` for each size and records `t` and `k` (maxima
/// over interleavings in explore mode).
pub fn measure_growth(
    m: &Program,
    inputs: &dyn Fn(u64) -> Store,
    sizes: &[u64],
    mode: &GrowthMode,
    fuel: u64,
    registry: &Registry,
) -> Result<GrowthTable> {
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("no sizes given".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("sizes must be strictly increasing".into()));
    }
    let mut table = GrowthTable::default();
    for &n in sizes {
        let mu = inputs(n);
        let row = match mode {
            GrowthMode::Scheduler(kind, seed) => {
                let mut s = kind.build(*seed);
                let r = run_with_scheduler(
                    &mu,
                    m,
                    s.as_mut(),
                    &VarTypeEnv::new(),
                    RunOptions::counters_only(fuel),
                    registry,
                )?;
                GrowthRow {
                    n,
                    max_t: r.config.t,
                    max_k: r.config.k,
                    fuel_hit: !r.finished(),
                }
            }
            GrowthMode::Explore(limits) => {
                let lim = ExploreLimits {
                    max_steps: limits.max_steps.min(fuel),
                    ..*limits
                };
                let rep = explore(&mu, m, lim, registry)?;
                GrowthRow {
                    n,
                    max_t: rep.max_t.unwrap_or(0),
                    max_k: rep.max_k.unwrap_or(0),
                    fuel_hit: rep.limits_hit,
                }
            }
        };
        table.rows.push(row);
    }
    Ok(table)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    K,
    T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeFit {
    pub degree: usize,
    /// Coefficients of `1, n, n², …`.
    pub coefficients: Vec<f64>,
    /// Relative RMS residual on the top half of the rows.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub metric: Metric,
    pub threshold: f64,
    pub fits: Vec<DegreeFit>,
    /// Smallest degree within the threshold; `None` flags a
    /// superpolynomial suspect.
    pub degree: Option<usize>,
}

impl FitReport {
    pub fn superpolynomial_suspect(&self) -> bool {
        self.degree.is_none()
    }

    pub fn selected(&self) -> Option<&DegreeFit> {
        self.degree.and_then(|d| self.fits.iter().find(|f| f.degree == d))
    }
}

pub const DEFAULT_FIT_THRESHOLD: f64 = 0.05;

/// Least-squares polynomial fits of `k` (or `t`) against `n` for degrees
/// `1..=max_degree`, selecting the smallest degree whose relative RMS
/// residual on the top half of the rows is below `threshold`.
pub fn fit_polynomial(table: &GrowthTable, metric: Metric, max_degree: usize, threshold: f64) -> Result<FitReport> {
    let rows = &table.rows;
    if max_degree == 0 {
        return Err(Error::InvalidArgument("max degree must be at least 1".into()));
    }
    if rows.len() < max_degree + 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least {} rows for degree {max_degree}, have {}",
            max_degree + 2,
            rows.len()
        )));
    }
    let scale = rows.iter().map(|r| r.n).max().unwrap_or(1).max(1) as f64;
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64 / scale).collect();
    let ys: Vec<f64> = rows
        .iter()
        .map(|r| match metric {
            Metric::K => r.max_k as f64,
            Metric::T => r.max_t as f64,
        })
        .collect();
    let top = rows.len() / 2;
    let mut fits = Vec::new();
    for d in 1..=max_degree {
        let a = DMatrix::from_fn(xs.len(), d + 1, |i, j| xs[i].powi(j as i32));
        let b = DVector::from_column_slice(&ys);
        let svd = a.clone().svd(true, true);
        let c = svd
            .solve(&b, 1e-12)
            .map_err(|e| Error::InvalidArgument(format!("least squares failed: {e}")))?;
        let pred = &a * &c;
        let (mut res2, mut y2) = (0.0, 0.0);
        for i in top..xs.len() {
            res2 += (pred[i] - ys[i]).powi(2);
            y2 += ys[i].powi(2);
        }
        let residual = if y2 == 0.0 {
            if res2 < 1e-18 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (res2 / y2).sqrt()
        };
        fits.push(DegreeFit {
            degree: d,
            coefficients: c.iter().enumerate().map(|(j, v)| v / scale.powi(j as i32)).collect(),
            residual,
        });
    }
    let degree = fits.iter().find(|f| f.residual < threshold).map(|f| f.degree);
    Ok(FitReport {
        metric,
        threshold,
        fits,
        degree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(f: impl Fn(u64) -> u64, ns: impl IntoIterator<Item = u64>) -> GrowthTable {
        GrowthTable {
            rows: ns
                .into_iter()
                .map(|n| GrowthRow {
                    n,
                    max_t: f(n),
                    max_k: f(n),
                    fuel_hit: false,
                })
                .collect(),
        }
    }

    #[test]
    fn equiv_examples() {
        let g: VarTypeEnv = [(Var::from("x"), Tier::One), (Var::from("z"), Tier::Zero)].into();
        let a = Store::new().with("x", "a");
        assert!(store_equiv(&g, &a, &Store::new().with("x", "a").with("z", "zzz")).equivalent());
        let w = store_equiv(&g, &a, &Store::new().with("x", "b"));
        assert_eq!(w.first_diff, Some(Var::from("x")));
        assert!(store_equiv(&VarTypeEnv::new(), &a, &Store::new()).equivalent());
    }

    #[test]
    fn fit_degrees() {
        let lin = table(|n| 3 * n + 1, 1..=64);
        assert_eq!(fit_polynomial(&lin, Metric::K, 3, 0.05).unwrap().degree, Some(1));
        let quad = table(|n| n * n + n + 2, 1..=24);
        let f = fit_polynomial(&quad, Metric::K, 3, 0.05).unwrap();
        assert_eq!(f.degree, Some(2));
        let c = &f.selected().unwrap().coefficients;
        assert!((c[2] - 1.0).abs() < 1e-6 && (c[1] - 1.0).abs() < 1e-6);
        let exp = table(|n| 1 << n, 1..=20);
        assert!(fit_polynomial(&exp, Metric::K, 3, 0.05)
            .unwrap()
            .superpolynomial_suspect());
        let zero = table(|_| 0, 1..=8);
        assert_eq!(fit_polynomial(&zero, Metric::K, 3, 0.05).unwrap().degree, Some(1));
    }

    #[test]
    fn fit_needs_rows() {
        let t = table(|n| n, 1..=4);
        assert!(fit_polynomial(&t, Metric::K, 3, 0.05).is_err());
    }

    #[test]
    fn csv_format() {
        let t = table(|n| n, [1, 2]);
        assert_eq!(t.to_csv(), "n,max_t,max_k,fuel_hit\n1,1,1,false\n2,2,2,false\n");
    }

    #[test]
    fn subword_scan() {
        let g: VarTypeEnv = [(Var::from("x"), Tier::One), (Var::from("y"), Tier::Zero)].into();
        let mu = Store::new().with("x", "abc");
        let (x, y) = (Var::from("x"), Var::from("y"));
        let ok = [
            (1, &x, &Word::from("bc")),
            (2, &y, &Word::from("zzzz")),
            (3, &x, &Word::tt()),
        ];
        assert!(subword_invariant(&g, &mu, ok).passed());
        let bad_w = Word::from("abca");
        let bad = [(1, &x, &Word::from("bc")), (2, &x, &bad_w)];
        assert_eq!(
            subword_invariant(&g, &mu, bad),
            SubwordVerdict::Violation {
                step: 2,
                var: x.clone(),
                value: bad_w.clone()
            }
        );
    }
}
