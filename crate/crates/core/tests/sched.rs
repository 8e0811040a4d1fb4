mod common;

use std::collections::BTreeSet;

use common::*;
use jcam::ir::RuleRef;
use jcam::machine::parse_machine;
use jcam::sched::{
    make_policy, ChooseCtx, FirstMatch, Policy, PolicyError, PolicyKind, PriorityPolicy, RandomPolicy, StealingPolicy,
};
use jcam::vm::{run, Image, Match, RunConfig, State, Value};
use jcam::{parse_program, Program};
use proptest::prelude::*;

fn two_rules() -> Program {
    parse_program(
        "entry D.go\ndefinition D {\n  .ctor go()\n  signal a()\n  signal b()\n  go() {\n    load.signal a\n    emit 0\n    load.signal b\n    emit 0\n    finish\n  }\n  a() {\n    finish\n  }\n  b() {\n    finish\n  }\n}\n",
    )
    .unwrap()
}

/// State right after the constructor ran: one `a` and one `b` message.
fn after_ctor(img: &Image) -> State {
    let mut s = State::initial(img, &[]).unwrap();
    let m = jcam::vm::enabled_matches(&s, img).pop().unwrap();
    jcam::vm::fire(&mut s, img, &m, None, 0).unwrap();
    s.now = 1;
    jcam::vm::complete(&mut s, img, 0).unwrap();
    s
}

fn chosen_rule(policy: &mut dyn Policy, img: &Image, s: &State) -> String {
    policy.prepare(img).unwrap();
    let enabled = jcam::vm::gate::schedulable(s, img);
    assert_eq!(enabled.len(), 2);
    let a = policy.choose(&ChooseCtx { img, state: s }, &enabled);
    assert_eq!(a.len(), 1);
    img.rules[a[0].1.rule].rref.to_string()
}

#[test]
fn first_match_takes_source_order() {
    let img = Image::load(&two_rules(), None).unwrap();
    let s = after_ctor(&img);
    assert_eq!(chosen_rule(&mut FirstMatch, &img, &s), "D.1");
}

#[test]
fn priority_list_reorders() {
    let img = Image::load(&two_rules(), None).unwrap();
    let s = after_ctor(&img);
    let list = PriorityPolicy::parse_list("# prefer b\nD.2\nD.1\n").unwrap();
    assert_eq!(chosen_rule(&mut PriorityPolicy::new(list), &img, &s), "D.2");
    let mut bad = PriorityPolicy::new(vec![RuleRef {
        def: "D".into(),
        index: 9,
    }]);
    assert!(matches!(bad.prepare(&img), Err(PolicyError::UnknownRule(_))));
}

#[test]
fn random_policy_follows_its_seed() {
    let img = Image::load(&two_rules(), None).unwrap();
    let s = after_ctor(&img);
    let picks = |seed| {
        let mut p = RandomPolicy::new(seed);
        (0..16).map(|_| chosen_rule(&mut p, &img, &s)).collect::<Vec<_>>()
    };
    assert_eq!(picks(4), picks(4));
    let all: BTreeSet<String> = (0..8).flat_map(picks).collect();
    assert_eq!(all.len(), 2);
}

#[test]
fn idle_link_steals_by_decomposing_a_queued_match() {
    let m = parse_machine(&format!(
        "{}compute x W.1 cost=10\ncompute y W.1 cost=10\n",
        source("twoProc.machine")
    ))
    .unwrap();
    let mp = mapped(&program("jobs.jc"), &m);
    let img = Image::load(&mp.program, Some(&m)).unwrap();
    let mut steal = StealingPolicy::new();
    let r = run(&mp.program, Some(&m), &mut steal, &[], &RunConfig::default()).unwrap();
    assert!(steal.stats.decomposed >= 1, "{:?}", steal.stats);
    let trace = r.trace.render(&img);
    assert!(trace.lines().any(|l| l.contains("w=(x,y) transfer")), "{trace}");
    assert!(trace.lines().any(|l| l.contains("w=y fire rule=W.")), "{trace}");
    let outs: BTreeSet<Vec<Value>> = r.outputs.iter().cloned().collect();
    assert_eq!(outs, [vec![Value::Int(10)], vec![Value::Int(20)]].into_iter().collect());

    let mut first = FirstMatch;
    let slow = run(&mp.program, Some(&m), &mut first, &[], &RunConfig::default()).unwrap();
    let slow_outs: BTreeSet<Vec<Value>> = slow.outputs.iter().cloned().collect();
    assert_eq!(slow_outs, outs);
}

/// Wraps a policy and checks each assignment it makes.
struct Checked {
    inner: Box<dyn Policy>,
    maximal: bool,
    problems: Vec<String>,
}

impl Policy for Checked {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn prepare(&mut self, img: &Image) -> Result<(), PolicyError> {
        self.inner.prepare(img)
    }

    fn choose(&mut self, ctx: &ChooseCtx<'_>, enabled: &[Match]) -> Vec<(usize, Match)> {
        let a = self.inner.choose(ctx, enabled);
        let mut used = BTreeSet::new();
        let mut workers = BTreeSet::new();
        for (w, m) in &a {
            if ctx.worker_of(m) != *w || !ctx.state.idle(*w) || !workers.insert(*w) {
                self.problems.push("ineligible worker".into());
            }
            if m.overlaps(&used) {
                self.problems.push("shared messages".into());
            }
            used.extend(m.msgs.iter().copied());
        }
        let eligible = |m: &&Match| ctx.state.idle(ctx.worker_of(m));
        if a.is_empty() && enabled.iter().any(|m| eligible(&m)) {
            self.problems.push("empty assignment with eligible work".into());
        }
        if self.maximal
            && enabled
                .iter()
                .filter(eligible)
                .any(|m| !workers.contains(&ctx.worker_of(m)) && !m.overlaps(&used))
        {
            self.problems.push("assignment not maximal".into());
        }
        a
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn assignments_are_valid(
        xs in prop::collection::vec(0i64..30, 2..16),
        seed in 0u64..500,
        kind in prop::sample::select(PolicyKind::ALL.to_vec()),
    ) {
        let m = two_proc();
        let mp = mapped(&program("sort.jc"), &m);
        let prio = vec![RuleRef { def: "Sort".into(), index: 3 }];
        let mut p = Checked {
            inner: make_policy(kind, seed, prio),
            maximal: matches!(kind, PolicyKind::First | PolicyKind::Priority),
            problems: Vec::new(),
        };
        let r = run(&mp.program, Some(&m), &mut p, &[arr(&xs)], &RunConfig::default()).unwrap();
        prop_assert!(p.problems.is_empty(), "{:?}", p.problems);
        prop_assert_eq!(r.outputs.len(), 1);
    }
}
