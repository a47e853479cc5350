use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tierflow::analysis::{
    confinement_holds, fit_polynomial, simple_security_holds, weak_subject_reduction_seq, GrowthRow, GrowthTable,
    Metric, ReductionVerdict,
};
use tierflow::ops::Registry;
use tierflow::parser::{parse_command, parse_expr, pretty_command, pretty_expr, OpDecl, SourceFile};
use tierflow::sample::{tier1_projection, StoreSampler};
use tierflow::semantics::{run_sequential_with, Rule, RunOptions};
use tierflow::typing::{
    command_tiers, infer_tiers, type_command, verify_derivation, InferVerdict, OpTypeEnv, TierSet, VarTypeEnv,
};
use tierflow::word::subword;
use tierflow::{Alphabet, Command, Expr, Store, Tier, Var, Word};

const VARS: [&str; 3] = ["a", "b", "c"];
const OPS: [(&str, usize); 4] = [("pred", 1), (">0", 1), ("+1", 1), ("concat", 2)];

fn registry() -> Registry {
    let mut r = Registry::new();
    for (name, _) in OPS {
        r.register(tierflow::ops::builtin(name).unwrap()).unwrap();
    }
    r
}

fn decls() -> Vec<OpDecl> {
    let r = registry();
    OPS.iter()
        .map(|(name, arity)| OpDecl {
            name: name.to_string(),
            arity: *arity,
            class: r.lookup(name).unwrap().class,
            sigs: None,
        })
        .collect()
}

fn delta() -> OpTypeEnv {
    let file = SourceFile::new(Alphabet::default(), decls(), BTreeMap::new());
    file.delta()
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop::sample::select(&VARS[..]).prop_map(Expr::var);
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::op("pred", vec![e])),
            inner.clone().prop_map(|e| Expr::op("+1", vec![e])),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::op("concat", vec![a, b])),
        ]
    })
}

/// Guards are always `e > 0`, so they evaluate to a truth value.
fn arb_guard() -> impl Strategy<Value = Expr> {
    arb_expr().prop_map(|e| Expr::op(">0", vec![e]))
}

fn arb_command() -> impl Strategy<Value = Command> {
    let leaf = prop_oneof![
        Just(Command::Skip),
        (prop::sample::select(&VARS[..]), arb_expr()).prop_map(|(x, e)| Command::assign(x, e)),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Command::seq(a, b)),
            (arb_guard(), inner.clone(), inner.clone()).prop_map(|(e, a, b)| Command::if_(e, a, b)),
            (arb_guard(), inner).prop_map(|(e, b)| Command::while_(e, b)),
        ]
    })
}

fn arb_gamma() -> impl Strategy<Value = VarTypeEnv> {
    prop::array::uniform3(any::<bool>()).prop_map(|bits| {
        VARS.iter()
            .zip(bits)
            .map(|(x, b)| (Var::from(*x), if b { Tier::One } else { Tier::Zero }))
            .collect()
    })
}

fn all_gammas() -> Vec<VarTypeEnv> {
    (0..8u32)
        .map(|m| {
            VARS.iter()
                .enumerate()
                .map(|(i, x)| (Var::from(*x), if m >> i & 1 == 1 { Tier::One } else { Tier::Zero }))
                .collect()
        })
        .collect()
}

fn arb_store() -> impl Strategy<Value = Store> {
    prop::collection::vec("[01]{0,5}", 3).prop_map(|ws| {
        VARS.iter()
            .zip(ws)
            .map(|(x, w)| (Var::from(*x), Word::from_letters(w.into_bytes())))
            .collect()
    })
}

// Independent restatement of the typing rules, used as the reference.

fn tiers(set: &[Tier]) -> Vec<Tier> {
    let mut v = set.to_vec();
    v.sort();
    v.dedup();
    v
}

fn ref_expr(gamma: &VarTypeEnv, e: &Expr) -> Vec<Tier> {
    match e {
        Expr::Var(x) => vec![gamma[x]],
        Expr::Op(name, args) => {
            let neutral = matches!(name.as_str(), "pred" | ">0");
            let arg_sets: Vec<Vec<Tier>> = args.iter().map(|a| ref_expr(gamma, a)).collect();
            let mut out = Vec::new();
            for combo in 0..(1u32 << args.len()) {
                let choice: Vec<Tier> = (0..args.len())
                    .map(|i| if combo >> i & 1 == 1 { Tier::One } else { Tier::Zero })
                    .collect();
                if choice.iter().zip(&arg_sets).any(|(t, s)| !s.contains(t)) {
                    continue;
                }
                let all_one = choice.iter().all(|&t| t == Tier::One);
                out.push(Tier::Zero);
                if all_one && neutral {
                    out.push(Tier::One);
                }
            }
            tiers(&out)
        }
    }
}

fn ref_cmd(gamma: &VarTypeEnv, c: &Command) -> Vec<Tier> {
    match c {
        Command::Skip => vec![Tier::Zero, Tier::One],
        Command::Assign(x, e) => {
            let a = gamma[x];
            let es = ref_expr(gamma, e);
            if es.iter().any(|&b| a == Tier::Zero || b == Tier::One) {
                vec![a]
            } else {
                vec![]
            }
        }
        Command::Seq(p, q) => {
            let (sp, sq) = (ref_cmd(gamma, p), ref_cmd(gamma, q));
            let mut out = Vec::new();
            for &x in &sp {
                for &y in &sq {
                    out.push(if x == Tier::One || y == Tier::One {
                        Tier::One
                    } else {
                        Tier::Zero
                    });
                }
            }
            tiers(&out)
        }
        Command::If(e, p, q) => {
            let (g, sp, sq) = (ref_expr(gamma, e), ref_cmd(gamma, p), ref_cmd(gamma, q));
            g.into_iter().filter(|t| sp.contains(t) && sq.contains(t)).collect()
        }
        Command::While(e, b) => {
            if ref_expr(gamma, e).contains(&Tier::One) && !ref_cmd(gamma, b).is_empty() {
                vec![Tier::One]
            } else {
                vec![]
            }
        }
    }
}

/// A Γ under which `c` is typable, picked by `pick` among all of them.
fn typable_gamma(c: &Command, pick: usize) -> Option<VarTypeEnv> {
    let ok: Vec<VarTypeEnv> = all_gammas().into_iter().filter(|g| !ref_cmd(g, c).is_empty()).collect();
    (!ok.is_empty()).then(|| ok[pick % ok.len()].clone())
}

fn set_vec(s: TierSet) -> Vec<Tier> {
    s.iter().collect()
}

fn count_while_true(c: &Command, mu: &Store, fuel: u64) -> (u64, u64, bool) {
    let run = run_sequential_with(
        mu,
        c,
        RunOptions {
            fuel,
            trace_cap: fuel as usize,
        },
        &registry(),
    )
    .unwrap();
    let recount = run.trace.steps.iter().filter(|s| s.rule == Rule::WhileTt).count() as u64;
    (run.trace.t, recount, run.trace.truncated)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 256,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn pretty_then_parse_round_trips(c in arb_command(), e in arb_expr()) {
        prop_assert_eq!(parse_command(&pretty_command(&c)).unwrap(), c);
        prop_assert_eq!(parse_expr(&pretty_expr(&e)).unwrap(), e);
    }

    #[test]
    fn lattice_laws(a in 0u64..2, b in 0u64..2, c in 0u64..2) {
        let (a, b, c) = (Tier::from_digit(a).unwrap(), Tier::from_digit(b).unwrap(), Tier::from_digit(c).unwrap());
        prop_assert_eq!(a.join(b), b.join(a));
        prop_assert_eq!(a.meet(b), b.meet(a));
        prop_assert_eq!(a.join(b.join(c)), a.join(b).join(c));
        prop_assert_eq!(a.meet(a.join(b)), a);
        prop_assert_eq!(a.le(b), a.join(b) == b);
        prop_assert!(a.meet(b).le(a) && a.le(a.join(b)));
    }

    #[test]
    fn subword_matches_naive_search(v in "[01]{0,4}", w in "[01]{0,8}") {
        let naive = v.is_empty() || w.as_bytes().windows(v.len()).any(|x| x == v.as_bytes());
        let (v, w) = (Word::from_letters(v.into_bytes()), Word::from_letters(w.into_bytes()));
        prop_assert_eq!(subword(&v, &w), naive);
    }

    #[test]
    fn subwords_are_closed(w in "[01]{0,10}", i in 0usize..11, j in 0usize..11, k in 0usize..11) {
        let n = w.len();
        let (lo, hi) = (i.min(j).min(n), i.max(j).min(n));
        let mid = Word::from_letters(w.as_bytes()[lo..hi].to_vec());
        let inner_hi = lo + (k % (hi - lo + 1));
        let inner = Word::from_letters(w.as_bytes()[lo..inner_hi].to_vec());
        let w = Word::from_letters(w.into_bytes());
        prop_assert!(subword(&w, &w));
        prop_assert!(subword(&w.tail(), &w));
        prop_assert!(subword(&mid, &w));
        prop_assert!(subword(&inner, &mid) && subword(&inner, &w));
    }

    #[test]
    fn command_tiers_match_reference(c in arb_command(), gamma in arb_gamma()) {
        let got = set_vec(command_tiers(&gamma, &delta(), &c).unwrap());
        prop_assert_eq!(got, ref_cmd(&gamma, &c));
    }

    #[test]
    fn derivations_verify(c in arb_command(), gamma in arb_gamma()) {
        let d = delta();
        for (tier, deriv) in type_command(&gamma, &d, &c).unwrap() {
            prop_assert_eq!(deriv.tier, tier);
            prop_assert!(verify_derivation(&gamma, &d, &c, &deriv));
        }
    }

    #[test]
    fn inference_matches_brute_force(c in arb_command()) {
        let mut file = SourceFile::new(Alphabet::default(), decls(), BTreeMap::new());
        file.threads.insert("main".into(), c.clone());
        let used: Vec<Var> = {
            let mut v = Vec::new();
            c.vars_in_order(&mut v);
            v
        };
        let typable = all_gammas().iter().any(|g| !ref_cmd(g, &c).is_empty());
        match infer_tiers(&file).unwrap() {
            InferVerdict::Solution { derivation } => {
                prop_assert!(typable);
                let mut g = derivation.gamma.clone();
                for x in VARS {
                    g.entry(Var::from(x)).or_insert(Tier::Zero);
                }
                prop_assert!(used.iter().all(|x| derivation.gamma.contains_key(x)));
                prop_assert!(!ref_cmd(&g, &c).is_empty());
            }
            InferVerdict::Unsatisfiable { core } => {
                prop_assert!(!typable);
                prop_assert!(!core.is_empty());
            }
        }
    }

    #[test]
    fn confinement(c in arb_command(), gamma in arb_gamma()) {
        prop_assert!(confinement_holds(&gamma, &delta(), &c).unwrap());
    }

    #[test]
    fn simple_security(e in arb_expr(), gamma in arb_gamma()) {
        prop_assert!(simple_security_holds(&gamma, &delta(), &registry(), &e).unwrap());
    }

    #[test]
    fn weak_subject_reduction_on_typable_commands(c in arb_command(), pick in any::<usize>(), mu in arb_store()) {
        let Some(gamma) = typable_gamma(&c, pick) else { return Ok(()) };
        let v = weak_subject_reduction_seq(&mu, &c, &gamma, &delta(), 500, &registry()).unwrap();
        prop_assert!(matches!(v, ReductionVerdict::Pass { .. }), "{:?}", v);
    }

    #[test]
    fn sequential_non_interference(c in arb_command(), pick in any::<usize>(), seed in any::<u64>()) {
        let Some(gamma) = typable_gamma(&c, pick) else { return Ok(()) };
        let sampler = StoreSampler { sigma: Alphabet::default(), max_len: 4, truth_prob: 0.0 };
        let (mu, nu) = sampler.pair(&mut ChaCha8Rng::seed_from_u64(seed), &gamma);
        let reg = registry();
        let a = run_sequential_with(&mu, &c, RunOptions::counters_only(2_000), &reg).unwrap();
        let b = run_sequential_with(&nu, &c, RunOptions::counters_only(2_000), &reg).unwrap();
        if a.finished() && b.finished() {
            prop_assert_eq!(tier1_projection(&a.trace.final_store, &gamma), tier1_projection(&b.trace.final_store, &gamma));
            prop_assert_eq!(a.trace.t, b.trace.t);
        }
    }

    #[test]
    fn t_counts_true_loop_unfoldings(c in arb_command(), mu in arb_store()) {
        let (t, recount, truncated) = count_while_true(&c, &mu, 1_000);
        prop_assert!(!truncated);
        prop_assert_eq!(t, recount);
    }

    #[test]
    fn fit_is_scale_consistent(ks in prop::collection::vec(1u64..10_000, 6..24), scale in 1u64..1_000) {
        let table = |s: u64| GrowthTable {
            rows: ks
                .iter()
                .enumerate()
                .map(|(i, &k)| GrowthRow { n: i as u64 + 1, max_t: k * s, max_k: k * s, fuel_hit: false })
                .collect(),
        };
        let f1 = fit_polynomial(&table(1), Metric::K, 3, 0.05).unwrap();
        let fs = fit_polynomial(&table(scale), Metric::K, 3, 0.05).unwrap();
        prop_assert_eq!(fs.degree, f1.degree);
    }

    #[test]
    fn fit_degree_bounded_by_polynomial_degree(a in 1u64..50, b in 0u64..50, d in 1usize..4) {
        let table = GrowthTable {
            rows: (1..=20u64)
                .map(|n| {
                    let k = a * n.pow(d as u32) + b;
                    GrowthRow { n, max_t: k, max_k: k, fuel_hit: false }
                })
                .collect(),
        };
        let f = fit_polynomial(&table, Metric::K, 3, 0.05).unwrap();
        prop_assert!(f.degree.is_some_and(|g| g <= d), "{:?}", f.degree);
        prop_assert!(f.fits[d - 1].residual < 1e-6);
    }
}
