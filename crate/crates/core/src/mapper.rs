//! Placement of a flat program onto a machine.
//!
//! Every definition keeps its name. Inside it each signal `f` gets one copy
//! `f_q` per processor `q`, each rule `r` gets one copy per processor that
//! may compute it, and every non-constructor signal gets one transfer rule
//! per link. Rule copies are tagged with their processor, transfers with
//! their link.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write;

use crate::ir::{
    Definition, DiagKind, Diagnostic, Instr, Location, PatternElem, Program, RuleKind, RuleRef, SignalOrigin,
    SignalRef, TransitionRule, WorkerId,
};
use crate::machine::{MachineDescription, MachineError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MapError {
    #[error("rule `{0}` is computable on no processor")]
    UnmappableRule(RuleRef),
    #[error("machine declares no processors")]
    NoProcessors,
    #[error("entry processor `{0}` is not declared")]
    UnknownEntryProcessor(String),
    #[error("program has no entry constructor")]
    NoEntry,
    #[error("mapped name `{0}` collides with another copy")]
    NameCollision(String),
    #[error(transparent)]
    Machine(#[from] MachineError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MapWarning {
    /// The processor hosts no constructor rule, so nothing can start there.
    EmptyCopy(String),
}

impl std::fmt::Display for MapWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MapWarning::EmptyCopy(p) => write!(f, "warning: processor `{p}` computes no constructor"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MapOptions {
    /// Processor whose entry copy receives the initial message.
    pub entry_processor: Option<String>,
}

/// Where a mapped rule came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleOrigin {
    Copy { rule: RuleRef, processor: String },
    Transfer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappedProgram {
    pub program: Program,
    pub workers: Vec<WorkerId>,
    /// Mapped signal → (original signal, processor).
    pub signal_origin: BTreeMap<SignalRef, (SignalRef, String)>,
    pub rule_origin: BTreeMap<RuleRef, RuleOrigin>,
}

/// `f` on processor `q`.
pub fn copy_name(signal: &str, processor: &str) -> String {
    format!("{signal}_{processor}")
}

fn rename_body(body: &[Instr], def: &Definition, q: &str) -> Vec<Instr> {
    body.iter()
        .map(|ins| match ins {
            Instr::LoadSignal(s) if def.signal(s).is_some() => Instr::LoadSignal(copy_name(s, q)),
            Instr::Construct { def, ctor } => Instr::Construct {
                def: def.clone(),
                ctor: copy_name(ctor, q),
            },
            other => other.clone(),
        })
        .collect()
}

fn transfer_rule(signal: &str, arity: usize, copies: usize, src: &str, dst: &str) -> TransitionRule {
    let mut pattern = Vec::new();
    let mut body = Vec::new();
    for c in 0..copies {
        let formals: Vec<String> = (0..arity)
            .map(|j| {
                if copies == 1 {
                    format!("v{j}")
                } else {
                    format!("v{j}_{c}")
                }
            })
            .collect();
        body.push(Instr::LoadSignal(copy_name(signal, dst)));
        body.extend(formals.iter().map(|f| Instr::Load(f.clone())));
        body.push(Instr::Emit(arity));
        pattern.push(PatternElem {
            signal: copy_name(signal, src),
            formals,
        });
    }
    body.push(Instr::Finish);
    TransitionRule {
        pattern,
        body,
        worker: Some(WorkerId::Link(src.to_string(), dst.to_string())),
        kind: RuleKind::Transfer,
        origin: None,
    }
}

/// Replicates `p` onto `m`. Fails if some rule is computable nowhere.
pub fn map_program(
    p: &Program,
    m: &MachineDescription,
    opts: &MapOptions,
) -> Result<(MappedProgram, Vec<MapWarning>), MapError> {
    m.validate_against(p)?;
    if m.processors.is_empty() {
        return Err(MapError::NoProcessors);
    }
    let entry_proc = match &opts.entry_processor {
        Some(e) if !m.processors.contains(e) => return Err(MapError::UnknownEntryProcessor(e.clone())),
        Some(e) => e.clone(),
        None => m.processors[0].clone(),
    };
    let entry = p.entry.clone().ok_or(MapError::NoEntry)?;
    for r in p.rule_refs() {
        if !m.processors.iter().any(|q| m.computable(q, &r)) {
            return Err(MapError::UnmappableRule(r));
        }
    }

    let mut defs = Vec::new();
    let mut ctor_hosts: BTreeSet<&str> = BTreeSet::new();
    for def in &p.definitions {
        let mut md = Definition::new(def.name.clone());
        let mut seen = HashSet::new();
        for q in &m.processors {
            for s in &def.signals {
                let mut c = s.clone();
                c.name = copy_name(&s.name, q);
                if !seen.insert(c.name.clone()) {
                    return Err(MapError::NameCollision(c.name));
                }
                c.origin = Some(SignalOrigin {
                    signal: s.name.clone(),
                    processor: q.clone(),
                });
                md.signals.push(c);
            }
        }
        for q in &m.processors {
            for (idx, r) in def.rules.iter().enumerate() {
                let rr = RuleRef {
                    def: def.name.clone(),
                    index: idx,
                };
                if !m.computable(q, &rr) {
                    continue;
                }
                let pattern = r
                    .pattern
                    .iter()
                    .map(|e| PatternElem {
                        signal: copy_name(&e.signal, q),
                        formals: e.formals.clone(),
                    })
                    .collect();
                if r.pattern
                    .iter()
                    .any(|e| def.signal(&e.signal).is_some_and(|s| s.is_constructor))
                {
                    ctor_hosts.insert(q);
                }
                md.rules.push(TransitionRule {
                    pattern,
                    body: rename_body(&r.body, def, q),
                    worker: Some(WorkerId::Processor(q.clone())),
                    kind: r.kind,
                    origin: Some(idx),
                });
            }
        }
        for s in def.signals.iter().filter(|s| !s.is_constructor) {
            for l in &m.links {
                md.rules.push(transfer_rule(&s.name, s.arity(), 1, &l.src, &l.dst));
            }
        }
        defs.push(md);
    }

    let mut workers: Vec<WorkerId> = m.processors.iter().cloned().map(WorkerId::Processor).collect();
    workers.extend(m.links.iter().map(|l| WorkerId::Link(l.src.clone(), l.dst.clone())));
    let program = Program {
        primordials: p.primordials.clone(),
        entry: Some(SignalRef {
            def: entry.def,
            signal: copy_name(&entry.signal, &entry_proc),
        }),
        workers,
        definitions: defs,
    };
    let warnings = m
        .processors
        .iter()
        .filter(|q| !ctor_hosts.contains(q.as_str()))
        .map(|q| MapWarning::EmptyCopy(q.clone()))
        .collect();
    Ok((MappedProgram::from_program(program), warnings))
}

impl MappedProgram {
    /// Rebuilds the projection tables from the annotations a mapped program
    /// carries in its text (`from f@q`, `@worker`, `@origin`).
    pub fn from_program(program: Program) -> MappedProgram {
        let mut signal_origin = BTreeMap::new();
        let mut rule_origin = BTreeMap::new();
        for def in &program.definitions {
            for s in &def.signals {
                if let Some(o) = &s.origin {
                    signal_origin.insert(
                        SignalRef {
                            def: def.name.clone(),
                            signal: s.name.clone(),
                        },
                        (
                            SignalRef {
                                def: def.name.clone(),
                                signal: o.signal.clone(),
                            },
                            o.processor.clone(),
                        ),
                    );
                }
            }
            for (idx, r) in def.rules.iter().enumerate() {
                let here = RuleRef {
                    def: def.name.clone(),
                    index: idx,
                };
                let origin = match (&r.worker, r.origin) {
                    (Some(WorkerId::Processor(q)), Some(o)) if r.kind != RuleKind::Transfer => RuleOrigin::Copy {
                        rule: RuleRef {
                            def: def.name.clone(),
                            index: o,
                        },
                        processor: q.clone(),
                    },
                    _ => RuleOrigin::Transfer,
                };
                rule_origin.insert(here, origin);
            }
        }
        MappedProgram {
            workers: program.workers.clone(),
            program,
            signal_origin,
            rule_origin,
        }
    }

    /// Original signal name of a mapped one; unmapped names map to themselves.
    pub fn project_signal<'a>(&'a self, def: &str, signal: &'a str) -> &'a str {
        self.program
            .definition(def)
            .and_then(|d| d.signal(signal))
            .and_then(|s| s.origin.as_ref())
            .map(|o| o.signal.as_str())
            .unwrap_or(signal)
    }

    /// Processor hosting a mapped signal copy.
    pub fn processor_of(&self, def: &str, signal: &str) -> Option<&str> {
        self.program
            .definition(def)?
            .signal(signal)?
            .origin
            .as_ref()
            .map(|o| o.processor.as_str())
    }

    /// `mappedName originalName processor` triples, one per line.
    pub fn sidecar(&self) -> String {
        let mut out = String::new();
        for (mapped, (orig, q)) in &self.signal_origin {
            writeln!(out, "{mapped} {orig} {q}").unwrap();
        }
        for (mapped, o) in &self.rule_origin {
            if let RuleOrigin::Copy { rule, processor } = o {
                writeln!(out, "{mapped} {rule} {processor}").unwrap();
            }
        }
        out
    }

    pub fn transfer_count(&self) -> usize {
        self.rules().filter(|r| r.kind == RuleKind::Transfer).count()
    }

    pub fn rules(&self) -> impl Iterator<Item = &TransitionRule> {
        self.program.definitions.iter().flat_map(|d| &d.rules)
    }
}

/// Static locality of every non-transfer rule: each signal it names must be
/// a copy on its own processor, or a primordial.
pub fn check_locality(mp: &MappedProgram) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for def in &mp.program.definitions {
        for (ri, r) in def.rules.iter().enumerate() {
            if r.kind == RuleKind::Transfer {
                continue;
            }
            let Some(WorkerId::Processor(q)) = &r.worker else {
                continue;
            };
            let mut check = |signal: &str, instr: Option<usize>| {
                let home = def
                    .signal(signal)
                    .and_then(|s| s.origin.as_ref())
                    .map(|o| o.processor.as_str());
                if let Some(h) = home {
                    if h != q {
                        out.push(Diagnostic {
                            location: Location {
                                def: Some(def.name.clone()),
                                rule: Some(ri),
                                instr,
                            },
                            kind: DiagKind::LocalityViolation {
                                signal: signal.to_string(),
                                worker: q.clone(),
                            },
                        });
                    }
                }
            };
            for e in &r.pattern {
                check(&e.signal, None);
            }
            for (ii, ins) in r.body.iter().enumerate() {
                match ins {
                    Instr::LoadSignal(s) => check(s, Some(ii)),
                    Instr::Construct { def: d, ctor } if *d == def.name => check(ctor, Some(ii)),
                    _ => {}
                }
            }
        }
    }
    out
}

/// Adds an `n`-way merged transfer next to every single transfer rule.
/// Applying it again with the same `n` adds nothing.
pub fn batch_transfers(mp: &MappedProgram, n: usize) -> MappedProgram {
    let mut program = mp.program.clone();
    if n < 2 {
        return mp.clone();
    }
    for def in &mut program.definitions {
        let mut existing: HashSet<(Option<WorkerId>, Vec<String>)> = def
            .rules
            .iter()
            .filter(|r| r.kind == RuleKind::Transfer)
            .map(|r| (r.worker.clone(), r.pattern.iter().map(|e| e.signal.clone()).collect()))
            .collect();
        let mut added = Vec::new();
        for r in def
            .rules
            .iter()
            .filter(|r| r.kind == RuleKind::Transfer && r.pattern.len() == 1)
        {
            let Some(WorkerId::Link(src, dst)) = &r.worker else {
                continue;
            };
            let src_copy = &r.pattern[0].signal;
            let Some(origin) = def.signal(src_copy).and_then(|s| s.origin.clone()) else {
                continue;
            };
            let key = (r.worker.clone(), vec![src_copy.clone(); n]);
            if !existing.insert(key) {
                continue;
            }
            added.push(transfer_rule(&origin.signal, r.pattern[0].formals.len(), n, src, dst));
        }
        def.rules.extend(added);
    }
    MappedProgram::from_program(program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;
    use crate::machine::parse_machine;

    const PROG: &str = "\
definition D {
  .ctor start(int, sig)
  signal a(int)
  signal b(int, sig)
  start(n, k) {
    load.signal b; load n; load k; emit 2
    load.signal a; load n; emit 1
    finish
  }
  a(x) & b(y, k) {
    load k; load x; load y; add; emit 1
    finish
  }
}
";

    fn machine(text: &str) -> MachineDescription {
        parse_machine(text).unwrap()
    }

    #[test]
    fn two_processors() {
        let p = parse_program(PROG).unwrap();
        let m = machine("processor x\nprocessor y\nlink x y latency=5 perword=1\nlink y x latency=5 perword=1");
        let (mp, warnings) = map_program(&p, &m, &MapOptions::default()).unwrap();
        assert!(warnings.is_empty());
        let d = &mp.program.definitions[0];
        assert_eq!(d.signals.len(), 6);
        assert_eq!(d.rules.iter().filter(|r| r.kind == RuleKind::Computation).count(), 4);
        assert_eq!(mp.transfer_count(), 4);
        assert_eq!(mp.workers.len(), 4);
        assert_eq!(mp.program.entry.as_ref().unwrap().signal, "start_x");
        assert!(check_locality(&mp).is_empty());
        assert!(crate::ir::validate_program(&mp.program).is_empty());
    }

    #[test]
    fn single_processor_no_links() {
        let p = parse_program(PROG).unwrap();
        let (mp, _) = map_program(&p, &machine("processor x"), &MapOptions::default()).unwrap();
        assert_eq!(mp.transfer_count(), 0);
        assert_eq!(mp.workers, vec![WorkerId::Processor("x".into())]);
        assert_eq!(mp.program.definitions[0].rules.len(), 2);
    }

    #[test]
    fn forbid_omits_copy_and_unmappable_fails() {
        let p = parse_program(PROG).unwrap();
        let m = machine("processor x\nprocessor y\nforbid x D.1");
        let (mp, _) = map_program(&p, &m, &MapOptions::default()).unwrap();
        let tags: Vec<String> = mp.rules().map(|r| r.worker.as_ref().unwrap().to_string()).collect();
        assert_eq!(tags, vec!["x", "y", "y"]);
        let m = machine("processor x\nprocessor y\nforbid x D.1\nforbid y D.1");
        assert_eq!(
            map_program(&p, &m, &MapOptions::default()).unwrap_err(),
            MapError::UnmappableRule(RuleRef {
                def: "D".into(),
                index: 1
            })
        );
        let m = machine("processor x\nprocessor y\nforbid y D.0");
        let (_, w) = map_program(&p, &m, &MapOptions::default()).unwrap();
        assert_eq!(w, vec![MapWarning::EmptyCopy("y".into())]);
    }

    #[test]
    fn locality_violation_detected() {
        let p = parse_program(PROG).unwrap();
        let m = machine("processor x\nprocessor y\nlink x y latency=1 perword=1");
        let (mut mp, _) = map_program(&p, &m, &MapOptions::default()).unwrap();
        let r = &mut mp.program.definitions[0].rules[0];
        r.body[0] = Instr::LoadSignal("b_y".into());
        let diags = check_locality(&mp);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind.id(), "locality-violation");
    }

    #[test]
    fn batching_is_idempotent() {
        let p = parse_program(PROG).unwrap();
        let m = machine("processor x\nprocessor y\nlink x y latency=5 perword=1");
        let (mp, _) = map_program(&p, &m, &MapOptions::default()).unwrap();
        let once = batch_transfers(&mp, 2);
        assert_eq!(once.transfer_count(), 4);
        let twice = batch_transfers(&once, 2);
        assert_eq!(twice.program, once.program);
        let merged = once
            .rules()
            .find(|r| r.kind == RuleKind::Transfer && r.pattern.len() == 2)
            .unwrap();
        assert_eq!(merged.pattern[0].signal, "a_x");
        assert_eq!(merged.pattern[1].signal, "a_x");
    }

    #[test]
    fn text_round_trip_keeps_projection() {
        let p = parse_program(PROG).unwrap();
        let m = machine("processor x\nprocessor y\nlink x y latency=5 perword=1");
        let (mp, _) = map_program(&p, &m, &MapOptions::default()).unwrap();
        let text = crate::ir::pretty_print(&mp.program);
        let back = MappedProgram::from_program(parse_program(&text).unwrap());
        assert_eq!(back, mp);
        assert!(mp.sidecar().contains("D.a_y D.a y"));
    }
}
