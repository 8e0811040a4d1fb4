mod common;

use common::*;
use jcam::ir::RuleKind;
use jcam::sched::{FirstMatch, PolicyKind};
use jcam::vm::{
    complete, enabled_matches, fire, parse_args, rule_matches, run, EventKind, FireError, Image, Match, RunConfig,
    RunError, RuntimeError, SignalValue, State, StepEvent, Value, Violation, WorkerState,
};
use jcam::{parse_program, Program};
use proptest::prelude::*;

fn sort_image() -> Image {
    Image::load(&program("sort.jc"), None).unwrap()
}

fn sig(img: &Image, name: &str) -> usize {
    img.signal_id(Some("Sort"), name).unwrap()
}

fn rule_of(img: &Image, pattern_len: usize, first: usize) -> usize {
    (0..img.rules.len())
        .find(|&r| img.rules[r].pattern.len() == pattern_len && img.rules[r].pattern[0] == first)
        .unwrap()
}

fn empty_state(img: &Image) -> State {
    let mut s = State::initial(img, &[arr(&[1])]).unwrap();
    let ids: Vec<u64> = s.env.iter().map(|m| m.id).collect();
    for id in ids {
        s.env.remove(id);
    }
    s
}

fn output_sig(img: &Image) -> Value {
    Value::Sig(SignalValue {
        signal: img.output.unwrap(),
        instance: 0,
    })
}

#[test]
fn merge_join_has_one_canonical_match() {
    let img = sort_image();
    let mut s = empty_state(&img);
    let (merge, info) = (sig(&img, "merge"), sig(&img, "info"));
    let at = |signal, instance| SignalValue { signal, instance };
    s.env.add(at(merge, 1), vec![arr(&[1, 3])], None);
    s.env.add(at(merge, 1), vec![arr(&[2])], None);
    s.env.add(at(info, 1), vec![Value::Int(3), output_sig(&img)], None);
    let r = rule_of(&img, 3, merge);
    let mut ms = Vec::new();
    rule_matches(&s.env, &img, r, &mut ms);
    assert_eq!(ms.len(), 1);

    let mut other = empty_state(&img);
    other.env.add(at(merge, 1), vec![arr(&[1])], None);
    other.env.add(at(merge, 2), vec![arr(&[2])], None);
    assert!(enabled_matches(&other, &img).is_empty());

    let mut single = empty_state(&img);
    single.env.add(at(sig(&img, "split"), 4), vec![arr(&[1, 2])], None);
    let ms = enabled_matches(&single, &img);
    assert_eq!(ms.len(), 1);
    assert_eq!(ms[0].instance, 4);
}

#[test]
fn fire_stacks_arguments_in_pattern_order() {
    let img = sort_image();
    let mut s = empty_state(&img);
    let (merge, info) = (sig(&img, "merge"), sig(&img, "info"));
    let a = s.env.add(
        SignalValue {
            signal: merge,
            instance: 1,
        },
        vec![arr(&[1, 3])],
        None,
    );
    let b = s.env.add(
        SignalValue {
            signal: merge,
            instance: 1,
        },
        vec![arr(&[2])],
        None,
    );
    let i = s.env.add(
        SignalValue {
            signal: info,
            instance: 1,
        },
        vec![Value::Int(3), output_sig(&img)],
        None,
    );
    s.env.add(
        SignalValue {
            signal: sig(&img, "split"),
            instance: 1,
        },
        vec![arr(&[9])],
        None,
    );
    let r = rule_of(&img, 3, merge);
    let m = Match {
        rule: r,
        instance: 1,
        msgs: vec![a, b, i],
    };
    fire(&mut s, &img, &m, None, 0).unwrap();
    assert_eq!(s.env.len(), 1);
    let WorkerState::Busy(f) = &s.workers[0] else { panic!() };
    assert_eq!(
        f.local.stack,
        vec![arr(&[1, 3]), arr(&[2]), Value::Int(3), output_sig(&img)]
    );
    assert_eq!(f.until, 1);

    let err = fire(&mut s, &img, &m, None, 0).unwrap_err();
    assert!(matches!(err, FireError::WorkerBusy(_)), "{err}");
}

#[test]
fn stale_match_rejected() {
    let img = sort_image();
    let mut s = empty_state(&img);
    let id = s.env.add(
        SignalValue {
            signal: sig(&img, "split"),
            instance: 0,
        },
        vec![arr(&[1])],
        None,
    );
    let m = enabled_matches(&s, &img).pop().unwrap();
    s.env.remove(id);
    assert_eq!(fire(&mut s, &img, &m, None, 0).unwrap_err(), FireError::StaleMatch);
}

#[test]
fn transfer_of_eight_words_takes_thirteen() {
    let m = two_proc();
    let mp = mapped(&program("sort.jc"), &m);
    let img = Image::load(&mp.program, Some(&m)).unwrap();
    let split_x = sig(&img, "split_x");
    let mut s = empty_state(&img);
    s.env.add(
        SignalValue {
            signal: split_x,
            instance: 0,
        },
        vec![arr(&[8, 7, 6, 5, 4, 3, 2, 1])],
        None,
    );
    let t = enabled_matches(&s, &img)
        .into_iter()
        .find(|m| img.rules[m.rule].kind == RuleKind::Transfer)
        .unwrap();
    let w = img.rules[t.rule].worker;
    fire(&mut s, &img, &t, None, w).unwrap();
    let WorkerState::Busy(f) = &s.workers[w] else { panic!() };
    assert_eq!((f.words, f.until), (8, 13));
    s.now = 13;
    complete(&mut s, &img, w).unwrap();
    let moved: Vec<_> = s.env.iter().map(|m| img.signal_name(m.signal.signal)).collect();
    assert_eq!(moved, vec!["Sort.split_y"]);
}

#[test]
fn construct_uses_and_bumps_fresh() {
    let p = parse_program(
        "entry M.main\ndefinition M {\n  .ctor main()\n  .ctor sort(arr)\n  main() {\n    load.const [3,1]\n    construct M.sort\n    finish\n  }\n  sort(a) {\n    finish\n  }\n}\n",
    )
    .unwrap();
    let img = Image::load(&p, None).unwrap();
    let mut s = State::initial(&img, &[]).unwrap();
    s.fresh = 5;
    let m = enabled_matches(&s, &img).pop().unwrap();
    fire(&mut s, &img, &m, None, 0).unwrap();
    s.now = 1;
    let ev = complete(&mut s, &img, 0).unwrap();
    let sort = img.signal_id(Some("M"), "sort").unwrap();
    assert!(ev.iter().any(
        |e| matches!(e, StepEvent::Construct { signal, .. } if *signal == SignalValue { signal: sort, instance: 5 })
    ));
    assert_eq!(s.fresh, 6);
    let msg = s.env.iter().next().unwrap();
    assert_eq!((msg.signal.instance, &msg.args[..]), (5, &[arr(&[3, 1])][..]));
}

#[test]
fn load_signal_carries_the_instance() {
    let img = sort_image();
    let mut s = empty_state(&img);
    s.env.add(
        SignalValue {
            signal: sig(&img, "split"),
            instance: 3,
        },
        vec![arr(&[7])],
        None,
    );
    let m = enabled_matches(&s, &img).pop().unwrap();
    fire(&mut s, &img, &m, None, 0).unwrap();
    s.now = 1;
    let ev = complete(&mut s, &img, 0).unwrap();
    let merge = SignalValue {
        signal: sig(&img, "merge"),
        instance: 3,
    };
    assert_eq!(ev[0], StepEvent::LoadSignal(merge));
    assert_eq!(*ev.last().unwrap(), StepEvent::Finish);
    assert!(s.workers[0].is_idle());
    let left: Vec<_> = s.env.iter().map(|m| m.signal).collect();
    assert_eq!(left, vec![merge]);
}

#[test]
fn step_before_due_is_refused() {
    let img = sort_image();
    let mut s = empty_state(&img);
    s.env.add(
        SignalValue {
            signal: sig(&img, "split"),
            instance: 0,
        },
        vec![arr(&[7])],
        None,
    );
    let m = enabled_matches(&s, &img).pop().unwrap();
    fire(&mut s, &img, &m, None, 0).unwrap();
    assert_eq!(complete(&mut s, &img, 0).unwrap_err(), RuntimeError::NotReady(1));
}

#[test]
fn sort_example_and_nested_example() {
    let r = run_policy(&program("sort.jc"), None, PolicyKind::First, 0, &[arr(&[4, 2, 1, 3])]);
    assert_eq!(r.outputs, vec![vec![arr(&[1, 2, 3, 4])]]);
    assert!(r.quiescent);
    let r = run_policy(&program("unnested.jc"), None, PolicyKind::First, 0, &[Value::Int(21)]);
    assert_eq!(r.outputs, vec![vec![Value::Int(42)]]);
}

#[test]
fn mapped_sort_agrees_with_unmapped() {
    let m = two_proc();
    let p = program("sort.jc");
    let mp = mapped(&p, &m);
    let args = [arr(&[9, 4, 7, 1, 8, 2, 6, 3, 5])];
    let want = run_policy(&p, None, PolicyKind::First, 0, &args).outputs;
    for kind in PolicyKind::ALL {
        for seed in 1..=10 {
            let r = run_policy(&mp.program, Some(&m), kind, seed, &args);
            assert_eq!(r.outputs, want, "{} seed {seed}", kind.name());
        }
    }
}

fn faulting(body: &str) -> Program {
    parse_program(&format!(
        "primordial OUTPUT/1\nentry M.go\ndefinition M {{\n  .ctor go(sig)\n  signal loop()\n  go(k) {{\n{body}\n  }}\n  loop() {{\n    load.signal loop\n    emit 0\n    finish\n  }}\n}}\n"
    ))
    .unwrap()
}

fn run_first(p: &Program, cfg: &RunConfig) -> Result<jcam::vm::RunResult, RunError> {
    run(p, None, &mut FirstMatch, &[], cfg)
}

#[test]
fn runtime_faults() {
    let div = faulting("    load k\n    load.const 1\n    load.const 0\n    div\n    emit 1\n    finish");
    match run_first(&div, &RunConfig::default()) {
        Err(RunError::Fault { error, rule, .. }) => {
            assert_eq!(error, RuntimeError::DivisionByZero);
            assert_eq!(rule, "M.0");
        }
        other => panic!("{other:?}"),
    }
    let arity = faulting("    load k\n    load.const 1\n    load.const 2\n    emit 2\n    finish");
    assert!(matches!(
        run_first(&arity, &RunConfig::default()),
        Err(RunError::Fault {
            error: RuntimeError::ArityMismatch { .. },
            ..
        })
    ));
    let ty = faulting("    load.const 1\n    brz L\n  L:\n    finish");
    assert!(matches!(
        run_first(&ty, &RunConfig::default()),
        Err(RunError::Fault {
            error: RuntimeError::TypeFault { .. },
            ..
        })
    ));
    let looping = faulting("    load.signal loop\n    emit 0\n    finish");
    assert!(matches!(
        run_first(&looping, &RunConfig { max_events: 500 }),
        Err(RunError::NonTermination { .. })
    ));
}

#[test]
fn entry_arguments_are_checked() {
    let p = program("sort.jc");
    assert!(matches!(
        run(&p, None, &mut FirstMatch, &[], &RunConfig::default()),
        Err(RunError::Args(_))
    ));
    assert!(matches!(
        run(&p, None, &mut FirstMatch, &[Value::Int(3)], &RunConfig::default()),
        Err(RunError::Args(_))
    ));
    assert_eq!(parse_args("[4,2,1,3]").unwrap(), vec![arr(&[4, 2, 1, 3])]);
}

#[test]
fn trace_format() {
    let m = two_proc();
    let mp = mapped(&program("sort.jc"), &m);
    let img = Image::load(&mp.program, Some(&m)).unwrap();
    let r = run_policy(
        &mp.program,
        Some(&m),
        PolicyKind::Random,
        3,
        &[arr(&[5, 3, 8, 1, 9, 2, 7, 4])],
    );
    let text = r.trace.render(&img);
    let first = text.lines().next().unwrap();
    assert_eq!(first, "t=0 w=x fire rule=Sort.0 inst=0");
    assert!(text.lines().any(|l| l.contains(" transfer ") && l.contains("words=")));
    assert!(text.lines().all(|l| l.starts_with("t=")));
    assert_eq!(text.lines().count(), r.event_count());
}

/// Each validator flags a tampered trace.
#[test]
fn auditors_catch_injected_faults() {
    let m = two_proc();
    let mp = mapped(&program("nested.jc"), &m);
    let img = Image::load(&mp.program, Some(&m)).unwrap();
    let r = run_policy(&mp.program, Some(&m), PolicyKind::First, 0, &[Value::Int(21)]);
    assert!(r.audit(&img).is_empty());
    let ids = r.final_env.iter().map(|m| m.id).collect();
    let audit = |t: &jcam::vm::Trace| {
        jcam::vm::Audit {
            img: &img,
            trace: t,
            final_env: &ids,
        }
        .all()
    };
    let fire_at = r.trace.events.iter().position(|e| e.kind == EventKind::Fire).unwrap();
    let finish_at = r.trace.events.iter().position(|e| e.kind == EventKind::Finish).unwrap();

    let mut t = r.trace.clone();
    t.events.remove(finish_at);
    assert!(audit(&t).iter().any(|v| matches!(v, Violation::Exclusivity(_))));

    let mut t = r.trace.clone();
    t.events[fire_at].consumed.push(9999);
    assert!(audit(&t).iter().any(|v| matches!(v, Violation::Conservation(_))));

    let mut t = r.trace.clone();
    t.events[fire_at].instance += 7;
    assert!(audit(&t).iter().any(|v| matches!(v, Violation::Coherence(_))));

    let mut t = r.trace.clone();
    let c = t.events.iter().position(|e| e.kind == EventKind::Construct).unwrap();
    t.events[c].signal.as_mut().unwrap().instance += 1;
    assert!(audit(&t).iter().any(|v| matches!(v, Violation::Freshness(_))));

    let mut t = r.trace.clone();
    let e = t
        .events
        .iter()
        .position(|e| {
            e.kind == EventKind::Emit
                && img.rules[e.rule].kind == RuleKind::Computation
                && img.rules[e.rule].proc == Some(0)
                && !img.is_primordial(e.signal.unwrap().signal)
        })
        .unwrap();
    let s = t.events[e].signal.unwrap().signal;
    let other = img.copy_on(img.sigs[s].osig, 1).unwrap();
    t.events[e].signal.as_mut().unwrap().signal = other;
    assert!(audit(&t).iter().any(|v| matches!(v, Violation::Locality(_))));
}

#[test]
fn dynamic_locality_aborts() {
    let m = two_proc();
    let mut mp = mapped(&program("sort.jc"), &m);
    let r = mp.program.definitions[0]
        .rules
        .iter_mut()
        .find(|r| r.worker == Some(jcam::ir::WorkerId::Processor("x".into())) && r.pattern[0].signal == "sort_x")
        .unwrap();
    for i in &mut r.body {
        if *i == jcam::ir::Instr::LoadSignal("split_x".into()) {
            *i = jcam::ir::Instr::LoadSignal("split_y".into());
        }
    }
    let mut pol = FirstMatch;
    match run(&mp.program, Some(&m), &mut pol, &[arr(&[2, 1])], &RunConfig::default()) {
        Err(RunError::Fault {
            error: RuntimeError::LocalityViolation { signal, worker },
            ..
        }) => {
            assert_eq!(signal, "Sort.split_y");
            assert_eq!(worker, "x");
        }
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_arrays_sort_under_every_policy(
        xs in prop::collection::vec(-50i64..50, 1..20),
        seed in 0u64..1000,
        kind in prop::sample::select(PolicyKind::ALL.to_vec()),
        batch in 1usize..3,
    ) {
        let m = two_proc();
        let mp = jcam::mapper::batch_transfers(&mapped(&program("sort.jc"), &m), batch);
        let img = Image::load(&mp.program, Some(&m)).unwrap();
        let mut want = xs.clone();
        want.sort();
        let a = run_policy(&mp.program, Some(&m), kind, seed, &[arr(&xs)]);
        prop_assert_eq!(&a.outputs, &vec![vec![arr(&want)]]);
        prop_assert!(a.audit(&img).is_empty());
        prop_assert!(a.quiescent);
        let b = run_policy(&mp.program, Some(&m), kind, seed, &[arr(&xs)]);
        prop_assert_eq!(a.trace.render(&img), b.trace.render(&img));
        for w in &a.state.workers {
            prop_assert!(w.is_idle());
        }
    }
}
