//! Event log of a run and the validators that audit it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::ir::RuleKind;
use crate::machine::Cost;

use super::image::Image;
use super::value::{Inst, MsgId, SigId, SignalValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Fire,
    Transfer,
    Emit,
    Construct,
    Finish,
    /// `load.signal`; kept for auditing, not printed.
    Load,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Fire => "fire",
            EventKind::Transfer => "transfer",
            EventKind::Emit => "emit",
            EventKind::Construct => "construct",
            EventKind::Finish => "finish",
            EventKind::Load => "load",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: Cost,
    pub worker: usize,
    pub kind: EventKind,
    pub rule: usize,
    pub instance: Inst,
    pub words: Option<u64>,
    pub signal: Option<SignalValue>,
    pub consumed: Vec<MsgId>,
    pub produced: Option<MsgId>,
    /// Value of `fresh` once the event has happened.
    pub fresh: Inst,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
    /// Messages present before the first event: `(id, signal)`.
    pub initial: Vec<(MsgId, SignalValue)>,
}

impl Trace {
    /// Events that appear in the printed trace.
    pub fn visible(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| e.kind != EventKind::Load)
    }

    pub fn render(&self, img: &Image) -> String {
        let mut out = String::new();
        for e in self.visible() {
            out.push_str(&format_event(img, e));
            out.push('\n');
        }
        out
    }
}

/// `t=<n> w=<worker> <kind> rule=<def>.<idx> inst=<θ> [words=<n>] [sig=<s>]`
pub fn format_event(img: &Image, e: &TraceEvent) -> String {
    let mut s = format!(
        "t={} w={} {} rule={} inst={}",
        e.time,
        img.worker_name(e.worker),
        e.kind.name(),
        img.rules[e.rule].rref,
        e.instance
    );
    if let Some(w) = e.words {
        write!(s, " words={w}").unwrap();
    }
    if let Some(sig) = e.signal {
        write!(s, " sig={}@{}", img.signal_name(sig.signal), sig.instance).unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Exclusivity(String),
    Conservation(String),
    Coherence(String),
    Freshness(String),
    Locality(String),
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Exclusivity(s) => write!(f, "worker exclusivity: {s}"),
            Violation::Conservation(s) => write!(f, "message conservation: {s}"),
            Violation::Coherence(s) => write!(f, "instance coherence: {s}"),
            Violation::Freshness(s) => write!(f, "fresh monotonicity: {s}"),
            Violation::Locality(s) => write!(f, "dynamic locality: {s}"),
        }
    }
}

/// Per-invariant validators over a finished trace. `final_env` lists the
/// ids left in the environment at the end of the run.
pub struct Audit<'a> {
    pub img: &'a Image,
    pub trace: &'a Trace,
    pub final_env: &'a BTreeSet<MsgId>,
}

impl Audit<'_> {
    pub fn all(&self) -> Vec<Violation> {
        let mut v = self.exclusivity();
        v.extend(self.conservation());
        v.extend(self.coherence());
        v.extend(self.freshness());
        v.extend(self.locality());
        v
    }

    /// No worker starts a firing before finishing its previous one.
    pub fn exclusivity(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut open: BTreeMap<usize, Cost> = BTreeMap::new();
        let mut last_finish: BTreeMap<usize, Cost> = BTreeMap::new();
        for (i, e) in self.trace.events.iter().enumerate() {
            match e.kind {
                EventKind::Fire | EventKind::Transfer => {
                    if open.contains_key(&e.worker) {
                        out.push(Violation::Exclusivity(format!(
                            "event {i}: worker {} fired while busy",
                            e.worker
                        )));
                    }
                    if last_finish.get(&e.worker).is_some_and(|t| *t > e.time) {
                        out.push(Violation::Exclusivity(format!(
                            "event {i}: firing overlaps previous interval"
                        )));
                    }
                    open.insert(e.worker, e.time);
                }
                EventKind::Finish => match open.remove(&e.worker) {
                    Some(start) if start <= e.time => {
                        last_finish.insert(e.worker, e.time);
                    }
                    Some(_) => out.push(Violation::Exclusivity(format!("event {i}: finish before fire"))),
                    None => out.push(Violation::Exclusivity(format!("event {i}: finish without fire"))),
                },
                EventKind::Emit | EventKind::Construct | EventKind::Load => {
                    if !open.contains_key(&e.worker) {
                        out.push(Violation::Exclusivity(format!("event {i}: effect outside a firing")));
                    }
                }
            }
        }
        out
    }

    /// The environment changes only by removing exactly a fired pattern or
    /// adding exactly one emitted or constructed message.
    pub fn conservation(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut live: BTreeSet<MsgId> = self.trace.initial.iter().map(|(id, _)| *id).collect();
        let mut ever = live.clone();
        for (i, e) in self.trace.events.iter().enumerate() {
            match e.kind {
                EventKind::Fire | EventKind::Transfer => {
                    if e.consumed.len() != self.img.rules[e.rule].pattern.len() {
                        out.push(Violation::Conservation(format!(
                            "event {i}: consumed count differs from pattern"
                        )));
                    }
                    for id in &e.consumed {
                        if !live.remove(id) {
                            out.push(Violation::Conservation(format!("event {i}: message {id} not present")));
                        }
                    }
                }
                EventKind::Emit | EventKind::Construct => match e.produced {
                    Some(id) if ever.insert(id) => {
                        live.insert(id);
                    }
                    _ => out.push(Violation::Conservation(format!("event {i}: no fresh message produced"))),
                },
                EventKind::Finish | EventKind::Load => {
                    if e.produced.is_some() || !e.consumed.is_empty() {
                        out.push(Violation::Conservation(format!("event {i}: unexpected env change")));
                    }
                }
            }
        }
        if live != *self.final_env {
            out.push(Violation::Conservation(
                "replayed environment differs from the final one".into(),
            ));
        }
        out
    }

    /// Every firing consumes messages of one instance, and `load.signal`
    /// yields that instance.
    pub fn coherence(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut sig_of: BTreeMap<MsgId, SignalValue> = self.trace.initial.iter().copied().collect();
        let mut current: BTreeMap<usize, Inst> = BTreeMap::new();
        for (i, e) in self.trace.events.iter().enumerate() {
            match e.kind {
                EventKind::Fire | EventKind::Transfer => {
                    for (pos, id) in e.consumed.iter().enumerate() {
                        match sig_of.get(id) {
                            Some(s)
                                if s.instance == e.instance
                                    && Some(&s.signal) == self.img.rules[e.rule].pattern.get(pos) => {}
                            _ => out.push(Violation::Coherence(format!(
                                "event {i}: message {id} does not fit θ={}",
                                e.instance
                            ))),
                        }
                    }
                    current.insert(e.worker, e.instance);
                }
                EventKind::Emit | EventKind::Construct => {
                    if let (Some(id), Some(s)) = (e.produced, e.signal) {
                        sig_of.insert(id, s);
                    }
                }
                EventKind::Load => {
                    let s = e.signal.unwrap();
                    let expected = if self.img.is_primordial(s.signal) {
                        0
                    } else {
                        current.get(&e.worker).copied().unwrap_or(u64::MAX)
                    };
                    if s.instance != expected {
                        out.push(Violation::Coherence(format!(
                            "event {i}: load.signal outside the firing's instance"
                        )));
                    }
                }
                EventKind::Finish => {
                    current.remove(&e.worker);
                }
            }
        }
        out
    }

    /// Instance ids come only from construct and strictly increase.
    pub fn freshness(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut fresh: Inst = 1;
        for (i, e) in self.trace.events.iter().enumerate() {
            if e.kind == EventKind::Construct {
                let inst = e.signal.map(|s| s.instance);
                if inst != Some(fresh) {
                    out.push(Violation::Freshness(format!(
                        "event {i}: constructed instance {inst:?}, expected {fresh}"
                    )));
                }
                fresh += 1;
            }
            if e.fresh != fresh {
                out.push(Violation::Freshness(format!(
                    "event {i}: fresh is {} (expected {fresh})",
                    e.fresh
                )));
                fresh = e.fresh;
            }
        }
        out
    }

    /// Emits and constructs of processor rules stay on their processor.
    pub fn locality(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !self.img.mapped {
            return out;
        }
        for (i, e) in self.trace.events.iter().enumerate() {
            if !matches!(e.kind, EventKind::Emit | EventKind::Construct) {
                continue;
            }
            let rule = &self.img.rules[e.rule];
            if rule.kind == RuleKind::Transfer {
                continue;
            }
            let target: SigId = e.signal.unwrap().signal;
            let home = self.img.sigs[target].proc;
            if home.is_some() && home != rule.proc {
                out.push(Violation::Locality(format!(
                    "event {i}: {} emitted {}",
                    rule.rref,
                    self.img.signal_name(target)
                )));
            }
        }
        out
    }
}
