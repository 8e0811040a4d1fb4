//! Exhaustive, bounded enumeration of every schedule of a program.
//!
//! Exploration ignores virtual time: each step either starts an enabled
//! firing on an idle worker (in every distinct argument-binding order) or
//! completes one in-flight firing. States are deduplicated on their
//! contents, and a state is terminal when every worker is idle and no
//! computation can proceed.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use crate::frontend::TMP_SIGNAL;
use crate::ir::Program;
use crate::mapper::MappedProgram;
use crate::vm::gate::{explorable, quiescent};
use crate::vm::{
    binding_orders, complete, fire, ArgError, Env, Image, Inst, LoadError, Match, MsgId, RuntimeError, SigId, State,
    Value, WorkerState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreBounds {
    /// Longest schedule considered, in steps.
    pub max_events: usize,
    pub max_messages_per_signal: usize,
    pub max_instances: usize,
}

impl Default for ExploreBounds {
    fn default() -> Self {
        ExploreBounds {
            max_events: 20_000,
            max_messages_per_signal: 64,
            max_instances: 64,
        }
    }
}

/// A terminal environment with generated names projected away, duplicated
/// messages erased and instances renumbered. Sorted message renderings.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonEnv(pub Vec<String>);

impl fmt::Display for CanonEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return writeln!(f, "  (empty)");
        }
        for m in &self.0 {
            writeln!(f, "  {m}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExStep {
    Fire { m: Match, order: Vec<MsgId>, worker: usize },
    Complete(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completeness {
    Complete,
    Truncated,
}

#[derive(Debug, Clone)]
pub struct ExploreReport {
    pub terminals: BTreeSet<CanonEnv>,
    pub completeness: Completeness,
    pub states: usize,
    /// One schedule reaching each terminal.
    pub witnesses: BTreeMap<CanonEnv, Vec<ExStep>>,
}

impl ExploreReport {
    pub fn is_complete(&self) -> bool {
        self.completeness == Completeness::Complete
    }
}

impl fmt::Display for ExploreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.completeness {
            Completeness::Complete => "complete",
            Completeness::Truncated => "truncated",
        };
        writeln!(f, "completeness: {c}")?;
        writeln!(f, "states: {}", self.states)?;
        writeln!(f, "terminals: {}", self.terminals.len())?;
        for (i, t) in self.terminals.iter().enumerate() {
            writeln!(f)?;
            writeln!(f, "terminal {i}:")?;
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ExploreError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("bad program arguments: {0}")]
    Args(#[from] ArgError),
    #[error("runtime fault during exploration: {0}")]
    Fault(#[from] RuntimeError),
    #[error("witness replay failed: {0}")]
    Replay(String),
}

fn erased(img: &Image, s: SigId) -> bool {
    let o = &img.osigs[img.sigs[s].osig];
    o.dup || o.name.starts_with(TMP_SIGNAL)
}

/// Canonical form of an environment.
pub fn canonical_env(img: &Image, env: &Env) -> CanonEnv {
    let kept: Vec<_> = env.iter().filter(|m| !erased(img, m.signal.signal)).collect();
    let mut insts: BTreeSet<Inst> = BTreeSet::new();
    for m in &kept {
        if !img.is_primordial(m.signal.signal) {
            insts.insert(m.signal.instance);
        }
        for a in m.args.iter() {
            if let Value::Sig(s) = a {
                if !img.is_primordial(s.signal) {
                    insts.insert(s.instance);
                }
            }
        }
    }
    let renum: BTreeMap<Inst, usize> = insts.into_iter().enumerate().map(|(i, t)| (t, i)).collect();
    let sig = |s: SigId, inst: Inst| {
        if img.is_primordial(s) {
            img.projected_name(s)
        } else {
            format!("{}@{}", img.projected_name(s), renum[&inst])
        }
    };
    let mut out: Vec<String> = kept
        .iter()
        .map(|m| {
            let args: Vec<String> = m
                .args
                .iter()
                .map(|a| match a {
                    Value::Sig(s) => sig(s.signal, s.instance),
                    v => v.to_string(),
                })
                .collect();
            format!("{}({})", sig(m.signal.signal, m.signal.instance), args.join(", "))
        })
        .collect();
    out.sort();
    CanonEnv(out)
}

#[derive(PartialEq, Eq, Hash)]
struct Key {
    msgs: Vec<(SigId, Inst, Arc<[Value]>)>,
    workers: Vec<Option<(usize, Inst, Vec<Value>)>>,
    fresh: Inst,
}

fn key(state: &State) -> Key {
    let mut msgs: Vec<_> = state
        .env
        .iter()
        .map(|m| (m.signal.signal, m.signal.instance, m.args.clone()))
        .collect();
    msgs.sort();
    Key {
        msgs,
        workers: state
            .workers
            .iter()
            .map(|w| match w {
                WorkerState::Idle => None,
                WorkerState::Busy(f) => Some((f.rule, f.local.instance, f.local.stack.clone())),
            })
            .collect(),
        fresh: state.fresh,
    }
}

fn over_bounds(img: &Image, state: &State, b: &ExploreBounds) -> bool {
    if (state.fresh - 1) as usize > b.max_instances {
        return true;
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for m in state.env.iter() {
        let c = counts.entry(img.sigs[m.signal.signal].osig).or_default();
        *c += 1;
        if *c > b.max_messages_per_signal {
            return true;
        }
    }
    false
}

/// Applies one step to a state.
pub fn apply(state: &mut State, img: &Image, step: &ExStep) -> Result<(), ExploreError> {
    match step {
        ExStep::Fire { m, order, worker } => {
            fire(state, img, m, Some(order), *worker).map_err(|e| ExploreError::Replay(e.to_string()))
        }
        ExStep::Complete(w) => {
            if let WorkerState::Busy(f) = &state.workers[*w] {
                state.now = state.now.max(f.until);
            }
            complete(state, img, *w)?;
            Ok(())
        }
    }
}

fn successors(img: &Image, state: &State) -> Result<Vec<(ExStep, State)>, ExploreError> {
    let mut out = Vec::new();
    for w in 0..state.workers.len() {
        if !state.idle(w) {
            let step = ExStep::Complete(w);
            let mut s = state.clone();
            apply(&mut s, img, &step)?;
            out.push((step, s));
        }
    }
    for m in explorable(state, img) {
        let worker = img.rules[m.rule].worker;
        if !state.idle(worker) {
            continue;
        }
        for order in binding_orders(&m, &state.env, img) {
            let step = ExStep::Fire {
                m: m.clone(),
                order,
                worker,
            };
            let mut s = state.clone();
            apply(&mut s, img, &step)?;
            out.push((step, s));
        }
    }
    Ok(out)
}

pub fn explore(program: &Program, args: &[Value], bounds: &ExploreBounds) -> Result<ExploreReport, ExploreError> {
    let img = Image::load(program, None)?;
    explore_image(&img, args, bounds)
}

pub fn explore_image(img: &Image, args: &[Value], bounds: &ExploreBounds) -> Result<ExploreReport, ExploreError> {
    let init = State::initial(img, args)?;
    let mut visited: HashSet<Key> = HashSet::new();
    visited.insert(key(&init));
    // (parent node, step) per discovered state, for witness paths.
    let mut nodes: Vec<(usize, Option<ExStep>)> = vec![(usize::MAX, None)];
    let mut stack: Vec<(State, usize, usize)> = vec![(init, 0, 0)];
    let mut report = ExploreReport {
        terminals: BTreeSet::new(),
        completeness: Completeness::Complete,
        states: 1,
        witnesses: BTreeMap::new(),
    };
    while let Some((state, depth, node)) = stack.pop() {
        let terminal = quiescent(&state, img);
        let succ = if terminal { Vec::new() } else { successors(img, &state)? };
        if terminal || succ.is_empty() {
            let c = canonical_env(img, &state.env);
            if report.terminals.insert(c.clone()) {
                let mut path = Vec::new();
                let mut n = node;
                while let (p, Some(s)) = &nodes[n] {
                    path.push(s.clone());
                    n = *p;
                }
                path.reverse();
                report.witnesses.insert(c, path);
            }
            continue;
        }
        if depth >= bounds.max_events || over_bounds(img, &state, bounds) {
            report.completeness = Completeness::Truncated;
            continue;
        }
        for (step, s) in succ.into_iter().rev() {
            if visited.insert(key(&s)) {
                nodes.push((node, Some(step)));
                report.states += 1;
                stack.push((s, depth + 1, nodes.len() - 1));
            }
        }
    }
    Ok(report)
}

/// Replays each witness through the VM's transitions and checks it ends in
/// its terminal.
pub fn verify_witnesses(img: &Image, args: &[Value], report: &ExploreReport) -> Result<(), ExploreError> {
    for (terminal, path) in &report.witnesses {
        let mut s = State::initial(img, args)?;
        for step in path {
            apply(&mut s, img, step)?;
        }
        if !quiescent(&s, img) && !s.all_idle() {
            return Err(ExploreError::Replay("witness does not end idle".into()));
        }
        let got = canonical_env(img, &s.env);
        if got != *terminal {
            return Err(ExploreError::Replay(format!(
                "witness reached\n{got}instead of\n{terminal}"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Equal,
    Differing {
        only_unmapped: Vec<CanonEnv>,
        only_mapped: Vec<CanonEnv>,
    },
}

#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub verdict: Verdict,
    /// Both explorations finished within bounds; otherwise advisory.
    pub complete: bool,
    pub unmapped: ExploreReport,
    pub mapped: ExploreReport,
}

impl fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = if self.complete {
            "complete"
        } else {
            "truncated (advisory)"
        };
        match &self.verdict {
            Verdict::Equal => writeln!(f, "equal ({c}, {} terminals)", self.unmapped.terminals.len()),
            Verdict::Differing {
                only_unmapped,
                only_mapped,
            } => {
                writeln!(f, "differing ({c})")?;
                for t in only_unmapped {
                    writeln!(f, "only unmapped:")?;
                    write!(f, "{t}")?;
                }
                for t in only_mapped {
                    writeln!(f, "only mapped:")?;
                    write!(f, "{t}")?;
                }
                Ok(())
            }
        }
    }
}

/// Compares the terminal sets of a program and of its mapping.
pub fn equivalent(
    unmapped: &Program,
    mapped: &MappedProgram,
    args: &[Value],
    bounds: &ExploreBounds,
) -> Result<EquivalenceReport, ExploreError> {
    let u = explore(unmapped, args, bounds)?;
    let m = explore(&mapped.program, args, bounds)?;
    let verdict = if u.terminals == m.terminals {
        Verdict::Equal
    } else {
        Verdict::Differing {
            only_unmapped: u.terminals.difference(&m.terminals).cloned().collect(),
            only_mapped: m.terminals.difference(&u.terminals).cloned().collect(),
        }
    };
    Ok(EquivalenceReport {
        verdict,
        complete: u.is_complete() && m.is_complete(),
        unmapped: u,
        mapped: m,
    })
}
