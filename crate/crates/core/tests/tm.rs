use proptest::prelude::*;

use tierflow::fixtures::{halt_tm, incr_tm};
use tierflow::sched::{run_with_scheduler, SchedulerKind};
use tierflow::semantics::RunOptions;
use tierflow::tm::{compile_tm, compile_tm_with, simulate_tm, CompileOptions, TmOutcome, TmSpec};
use tierflow::typing::{check_program, ProgramVerdict};
use tierflow::{Store, Word};

fn run_compiled(spec: &TmSpec, input: &Word, instrument: bool) -> Store {
    let compiled = compile_tm_with(spec, &CompileOptions { instrument }).unwrap();
    let gamma = match check_program(&compiled.source).unwrap() {
        ProgramVerdict::Safe { derivation } => derivation.gamma,
        v => panic!("{v:?}"),
    };
    let mu = Store::new().with(compiled.input.as_str(), input.clone());
    let mut s = SchedulerKind::First.build(0);
    let run = run_with_scheduler(
        &mu,
        &compiled.source.threads,
        s.as_mut(),
        &gamma,
        RunOptions::counters_only(1_000_000),
        &compiled.source.registry(),
    )
    .unwrap();
    assert!(run.finished());
    run.config.store
}

#[test]
fn compiled_text_round_trips() {
    for spec in [incr_tm(), halt_tm()] {
        let compiled = compile_tm(&spec).unwrap();
        let reparsed = tierflow::parser::parse(&compiled.text).unwrap();
        assert_eq!(reparsed.threads, compiled.source.threads);
        assert!(check_program(&reparsed).unwrap().is_safe());
    }
}

#[test]
fn incr_overflow_extends_tape() {
    let out = run_compiled(&incr_tm(), &Word::from("111"), false);
    assert_eq!(out.get("Out"), Word::from("0001"));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn incr_agrees_with_simulator(input in "[01]{0,7}") {
        let spec = incr_tm();
        let input = Word::from(input.as_str());
        let n = input.len() as u64;
        let TmOutcome::Halted { tape, steps } = simulate_tm(&spec, &input, spec.clock_budget(n)) else {
            panic!("no halt within the clock");
        };
        prop_assert!(steps <= 2 * n + 2);
        let out = run_compiled(&spec, &input, true);
        prop_assert_eq!(out.get("Out"), tape);
        prop_assert_eq!(out.get("Tick").len() as u64, spec.clock_budget(n));
    }

    #[test]
    fn halt_machine_returns_input(input in "[ab]{0,6}") {
        let input = Word::from(input.as_str());
        let out = run_compiled(&halt_tm(), &input, false);
        prop_assert_eq!(out.get("Out"), input);
    }
}
