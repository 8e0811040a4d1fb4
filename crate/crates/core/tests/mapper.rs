mod common;

use std::collections::BTreeMap;

use common::*;
use jcam::ir::{Instr, RuleKind, RuleRef, SignalRef, WorkerId};
use jcam::machine::parse_machine;
use jcam::mapper::{batch_transfers, check_locality, map_program, MapOptions, MappedProgram, RuleOrigin};
use jcam::{validate_program, Program};
use proptest::prelude::*;

fn copies_on<'a>(mp: &'a MappedProgram, q: &str) -> Vec<&'a RuleRef> {
    mp.rule_origin
        .values()
        .filter_map(|o| match o {
            RuleOrigin::Copy { rule, processor } if processor == q => Some(rule),
            _ => None,
        })
        .collect()
}

#[test]
fn sort_on_two_processors() {
    let mp = mapped(&program("sort.jc"), &two_proc());
    assert!(validate_program(&mp.program).is_empty());
    let d = mp.program.definition("Sort").unwrap();
    for f in ["sort", "info", "split", "merge"] {
        for q in ["x", "y"] {
            assert!(d.signal(&format!("{f}_{q}")).is_some(), "{f}_{q}");
        }
    }
    let t = d
        .rules
        .iter()
        .find(|r| r.kind == RuleKind::Transfer && r.pattern[0].signal == "split_x")
        .unwrap();
    assert_eq!(t.worker, Some(WorkerId::Link("x".into(), "y".into())));
    assert_eq!(t.body[0], Instr::LoadSignal("split_y".into()));
    let transferred: Vec<&str> = d
        .rules
        .iter()
        .filter(|r| r.kind == RuleKind::Transfer)
        .map(|r| r.pattern[0].signal.as_str())
        .collect();
    assert_eq!(transferred.len(), 6);
    assert!(!transferred.iter().any(|s| s.starts_with("sort_")));
    assert_eq!(copies_on(&mp, "x").len(), 4);
    assert_eq!(copies_on(&mp, "y").len(), 4);
}

#[test]
fn forbidden_rule_is_omitted_on_that_processor() {
    let m = parse_machine(&format!("{}\nforbid x Sort.3\n", source("twoProc.machine"))).unwrap();
    let (mp, warnings) = map_program(&program("sort.jc"), &m, &MapOptions::default()).unwrap();
    assert!(warnings.is_empty());
    let merge = RuleRef {
        def: "Sort".into(),
        index: 3,
    };
    assert!(!copies_on(&mp, "x").contains(&&merge));
    assert!(copies_on(&mp, "y").contains(&&merge));
}

#[test]
fn computability_defaults_to_everything() {
    let p = program("sort.jc");
    let m = two_proc();
    assert_eq!(m.computability(&p).len(), 2 * 4);
}

#[test]
fn injected_cross_processor_emit_is_reported() {
    let mut mp = mapped(&program("sort.jc"), &two_proc());
    assert!(check_locality(&mp).is_empty());
    let d = &mut mp.program.definitions[0];
    let r = d
        .rules
        .iter_mut()
        .find(|r| r.worker == Some(WorkerId::Processor("x".into())) && r.pattern[0].signal == "split_x")
        .unwrap();
    for ins in &mut r.body {
        if *ins == Instr::LoadSignal("split_x".into()) {
            *ins = Instr::LoadSignal("split_y".into());
        }
    }
    let diags = check_locality(&mp);
    assert_eq!(diags.len(), 2, "{diags:?}");
    assert!(diags.iter().all(|d| d.kind.id() == "locality-violation"));
}

#[test]
fn merged_split_transfer() {
    let mp = batch_transfers(&mapped(&program("sort.jc"), &two_proc()), 2);
    let d = mp.program.definition("Sort").unwrap();
    let merged = d
        .rules
        .iter()
        .find(|r| r.kind == RuleKind::Transfer && r.pattern.len() == 2 && r.pattern[0].signal == "split_x")
        .unwrap();
    assert_eq!(merged.pattern[1].signal, "split_x");
    assert_eq!(merged.worker, Some(WorkerId::Link("x".into(), "y".into())));
    let targets = merged
        .body
        .iter()
        .filter(|i| **i == Instr::LoadSignal("split_y".into()))
        .count();
    assert_eq!(targets, 2);
    assert_eq!(mp.transfer_count(), 12);
    assert_eq!(batch_transfers(&mp, 2).program, mp.program);
    assert!(validate_program(&mp.program).is_empty());
}

#[test]
fn single_processor_renames_only() {
    let m = parse_machine("processor solo\n").unwrap();
    let mp = mapped(&program("sort.jc"), &m);
    assert_eq!(mp.workers, vec![WorkerId::Processor("solo".into())]);
    assert_eq!(mp.transfer_count(), 0);
    assert_eq!(mp.rules().count(), 4);
}

#[test]
fn unmappable_rule_fails() {
    let m = parse_machine(&format!(
        "{}\nforbid x Sort.2\nforbid y Sort.2\n",
        source("twoProc.machine")
    ))
    .unwrap();
    assert!(map_program(&program("sort.jc"), &m, &MapOptions::default()).is_err());
}

#[test]
fn entry_placement() {
    let p = program("sort.jc");
    let opts = MapOptions {
        entry_processor: Some("y".into()),
    };
    let (mp, _) = map_program(&p, &two_proc(), &opts).unwrap();
    assert_eq!(mp.program.entry.as_ref().unwrap().signal, "sort_y");
    let bad = MapOptions {
        entry_processor: Some("z".into()),
    };
    assert!(map_program(&p, &two_proc(), &bad).is_err());
}

/// Renames every signal of a copy back to its original.
fn project(mp: &MappedProgram, def: &str, r: &jcam::ir::TransitionRule) -> jcam::ir::TransitionRule {
    let back = |s: &str| {
        mp.signal_origin
            .get(&SignalRef {
                def: def.into(),
                signal: s.into(),
            })
            .map(|(o, _)| o.signal.clone())
            .unwrap_or_else(|| s.to_string())
    };
    let mut r = r.clone();
    for e in &mut r.pattern {
        e.signal = back(&e.signal);
    }
    for i in &mut r.body {
        match i {
            Instr::LoadSignal(s) => *s = back(s),
            Instr::Construct { def, ctor } => {
                *ctor = mp
                    .signal_origin
                    .get(&SignalRef {
                        def: def.clone(),
                        signal: ctor.clone(),
                    })
                    .map(|(o, _)| o.signal.clone())
                    .unwrap_or(ctor.clone())
            }
            _ => {}
        }
    }
    r.worker = None;
    r.origin = None;
    r
}

fn check_mapping(p: &Program, forbid: &[(bool, bool)]) -> Result<(), TestCaseError> {
    let mut text = source("twoProc.machine");
    let mut allowed = 0;
    for (i, (fx, fy)) in forbid.iter().enumerate() {
        if *fx {
            text += &format!("forbid x Sort.{i}\n");
        }
        if *fy {
            text += &format!("forbid y Sort.{i}\n");
        }
        allowed += usize::from(!fx) + usize::from(!fy);
    }
    let m = parse_machine(&text).unwrap();
    let (mp, _) = map_program(p, &m, &MapOptions::default()).unwrap();
    prop_assert!(validate_program(&mp.program).is_empty());
    prop_assert!(check_locality(&mp).is_empty());
    let comp = mp.rules().filter(|r| r.kind != RuleKind::Transfer).count();
    prop_assert_eq!(comp, allowed);
    prop_assert_eq!(mp.transfer_count(), 3 * 2);
    for r in mp.rules() {
        match (&r.kind, &r.worker) {
            (RuleKind::Transfer, Some(WorkerId::Link(..))) => {}
            (RuleKind::Transfer, _) => prop_assert!(false, "transfer without link tag"),
            (_, Some(WorkerId::Processor(_))) => {}
            _ => prop_assert!(false, "copy without processor tag"),
        }
    }
    let d = mp.program.definition("Sort").unwrap();
    let orig = p.definition("Sort").unwrap();
    let mut per_proc: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for r in &d.rules {
        if r.kind == RuleKind::Transfer {
            continue;
        }
        let Some(WorkerId::Processor(q)) = &r.worker else {
            unreachable!()
        };
        let idx = r.origin.unwrap();
        prop_assert_eq!(project(&mp, "Sort", r), orig.rules[idx].clone());
        per_proc.entry(q.clone()).or_default().push(idx);
    }
    for (q, idxs) in per_proc {
        let col = if q == "x" { 0 } else { 1 };
        let want: Vec<usize> = (0..forbid.len())
            .filter(|i| if col == 0 { !forbid[*i].0 } else { !forbid[*i].1 })
            .collect();
        prop_assert_eq!(idxs, want);
    }
    Ok(())
}

proptest! {
    #[test]
    fn rule_counts_tags_and_projection(forbid in prop::collection::vec((any::<bool>(), any::<bool>()), 4)
        .prop_filter("each rule somewhere", |f| f.iter().all(|(x, y)| !(*x && *y)))) {
        check_mapping(&program("sort.jc"), &forbid)?;
    }
}
