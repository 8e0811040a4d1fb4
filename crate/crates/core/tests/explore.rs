mod common;

use common::*;
use jcam::explore::{
    canonical_env, equivalent, explore, explore_image, verify_witnesses, CanonEnv, ExploreBounds, Verdict,
};
use jcam::ir::{RuleKind, WorkerId};
use jcam::machine::parse_machine;
use jcam::mapper::{map_program, MapOptions, MappedProgram};
use jcam::parse_program;
use jcam::vm::{Image, SignalValue, State, Value};

fn canon(lines: &[&str]) -> CanonEnv {
    CanonEnv(lines.iter().map(|s| s.to_string()).collect())
}

#[test]
fn race_has_two_terminals() {
    let rep = explore(&program("race.jc"), &[], &ExploreBounds::default()).unwrap();
    assert!(rep.is_complete());
    let want = [canon(&["Race.B@0()"]), canon(&["Race.C@0()"])].into_iter().collect();
    assert_eq!(rep.terminals, want);
}

#[test]
fn sort_two_elements() {
    let rep = explore(&program("sort.jc"), &[arr(&[2, 1])], &ExploreBounds::default()).unwrap();
    assert!(rep.is_complete());
    assert_eq!(
        rep.terminals.into_iter().collect::<Vec<_>>(),
        vec![canon(&["OUTPUT([1,2])"])]
    );
}

#[test]
fn message_cap_truncates() {
    let p = program("fanout.jc");
    let tight = ExploreBounds {
        max_messages_per_signal: 3,
        ..ExploreBounds::default()
    };
    assert!(!explore(&p, &[Value::Int(1)], &tight).unwrap().is_complete());
    let depth = ExploreBounds {
        max_events: 2,
        ..ExploreBounds::default()
    };
    assert!(!explore(&p, &[Value::Int(1)], &depth).unwrap().is_complete());
    let rep = explore(&p, &[Value::Int(1)], &ExploreBounds::default()).unwrap();
    assert!(rep.is_complete());
    assert_eq!(rep.terminals.len(), 1);
}

#[test]
fn instance_cap_truncates() {
    let rep = explore(
        &program("nested.jc"),
        &[Value::Int(1)],
        &ExploreBounds {
            max_instances: 0,
            ..ExploreBounds::default()
        },
    )
    .unwrap();
    assert!(!rep.is_complete());
}

#[test]
fn single_processor_mapping_is_equal() {
    let p = program("sort.jc");
    let mp = mapped(&p, &parse_machine("processor solo\n").unwrap());
    let rep = equivalent(&p, &mp, &[arr(&[3, 1, 2])], &ExploreBounds::default()).unwrap();
    assert!(rep.complete);
    assert_eq!(rep.verdict, Verdict::Equal);
}

#[test]
fn deleted_transfer_strands_messages() {
    let p = program("sort.jc");
    let m = parse_machine(&format!("{}forbid y Sort.3\n", source("twoProc.machine"))).unwrap();
    let (mp, _) = map_program(&p, &m, &MapOptions::default()).unwrap();
    let mut program = mp.program.clone();
    program.definitions[0].rules.retain(|r| {
        !(r.kind == RuleKind::Transfer
            && r.worker == Some(WorkerId::Link("y".into(), "x".into()))
            && r.pattern[0].signal == "merge_y")
    });
    let broken = MappedProgram::from_program(program);
    let args = [arr(&[2, 1])];
    let rep = equivalent(&p, &broken, &args, &ExploreBounds::default()).unwrap();
    assert!(rep.complete);
    let Verdict::Differing { only_mapped, .. } = &rep.verdict else {
        panic!("{rep}");
    };
    let stranded = only_mapped
        .iter()
        .find(|t| t.0.iter().any(|l| l.starts_with("Sort.merge@")) && !t.0.iter().any(|l| l.starts_with("OUTPUT")))
        .unwrap_or_else(|| panic!("{rep}"));
    let witness = &rep.mapped.witnesses[stranded];
    assert!(!witness.is_empty());
    let img = Image::load(&broken.program, None).unwrap();
    verify_witnesses(&img, &args, &rep.mapped).unwrap();
}

#[test]
fn witnesses_replay_on_the_vm() {
    for (p, args) in [
        (program("race.jc"), vec![]),
        (mapped(&program("sort.jc"), &two_proc()).program, vec![arr(&[3, 1, 2])]),
        (mapped(&program("nested.jc"), &two_proc()).program, vec![Value::Int(4)]),
    ] {
        let img = Image::load(&p, None).unwrap();
        let rep = explore_image(&img, &args, &ExploreBounds::default()).unwrap();
        assert_eq!(rep.witnesses.len(), rep.terminals.len());
        verify_witnesses(&img, &args, &rep).unwrap();
    }
}

#[test]
fn canonical_form_ignores_instance_numbering() {
    let p = parse_program(
        "primordial OUTPUT/1\nentry M.go\ndefinition M {\n  .ctor go()\n  signal left(int, sig)\n  go() {\n    finish\n  }\n}\n",
    )
    .unwrap();
    let img = Image::load(&p, None).unwrap();
    let left = img.signal_id(Some("M"), "left").unwrap();
    let env_with = |a: u64, b: u64| {
        let mut s = State::initial(&img, &[]).unwrap();
        let ids: Vec<u64> = s.env.iter().map(|m| m.id).collect();
        for id in ids {
            s.env.remove(id);
        }
        let to_b = Value::Sig(SignalValue {
            signal: left,
            instance: b,
        });
        s.env.add(
            SignalValue {
                signal: left,
                instance: a,
            },
            vec![Value::Int(1), to_b],
            None,
        );
        let out = Value::Sig(SignalValue {
            signal: img.output.unwrap(),
            instance: 0,
        });
        s.env.add(
            SignalValue {
                signal: left,
                instance: b,
            },
            vec![Value::Int(2), out],
            None,
        );
        canonical_env(&img, &s.env)
    };
    let c = env_with(3, 8);
    assert_eq!(c, env_with(1, 2));
    assert_eq!(c, env_with(0, 1));
    assert_ne!(c, env_with(8, 3));
    assert_eq!(c, canon(&["M.left@0(1, M.left@1)", "M.left@1(2, OUTPUT)"]));
}
