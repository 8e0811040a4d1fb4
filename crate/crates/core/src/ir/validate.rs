//! Well-formedness checks for flat programs.

use std::collections::HashSet;
use std::fmt;

use super::flow::{analyze_body, FlowIssue};
use super::{Instr, Program, RuleKind, WorkerId};

/// Where a diagnostic applies. `rule` and `instr` index into the
/// definition's rule list and the rule's body respectively.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Location {
    pub def: Option<String>,
    pub rule: Option<usize>,
    pub instr: Option<usize>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.def, self.rule, self.instr) {
            (None, _, _) => write!(f, "<program>"),
            (Some(d), None, _) => write!(f, "{d}"),
            (Some(d), Some(r), None) => write!(f, "{d}.{r}"),
            (Some(d), Some(r), Some(i)) => write!(f, "{d}.{r}@{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiagKind {
    MissingEntry,
    UnknownEntry(String),
    EntryNotConstructor(String),
    DuplicateDefinition(String),
    DuplicateSignal(String),
    DuplicatePrimordial(String),
    EmptyPattern,
    UndeclaredSignal(String),
    ForeignSignalInPattern {
        signal: String,
        owner: String,
    },
    PatternArity {
        signal: String,
        expected: usize,
        found: usize,
    },
    DuplicateFormal(String),
    ConstructorInJoin(String),
    FreeVariable(String),
    UnresolvedSignal(String),
    UnknownConstructor(String),
    ArityMismatch {
        signal: String,
        expected: usize,
        found: usize,
    },
    UnknownLabel(String),
    DuplicateLabel(String),
    StackUnderflow,
    InconsistentStack,
    MissingFinish,
    UnknownWorker(String),
    BadDuplicationRule,
    LocalityViolation {
        signal: String,
        worker: String,
    },
}

impl DiagKind {
    /// Stable identifier of the violated invariant.
    pub fn id(&self) -> &'static str {
        match self {
            DiagKind::MissingEntry => "missing-entry",
            DiagKind::UnknownEntry(_) => "unknown-entry",
            DiagKind::EntryNotConstructor(_) => "entry-not-constructor",
            DiagKind::DuplicateDefinition(_) => "duplicate-definition",
            DiagKind::DuplicateSignal(_) => "duplicate-signal",
            DiagKind::DuplicatePrimordial(_) => "duplicate-primordial",
            DiagKind::EmptyPattern => "empty-pattern",
            DiagKind::UndeclaredSignal(_) => "undeclared-signal",
            DiagKind::ForeignSignalInPattern { .. } => "foreign-signal-in-pattern",
            DiagKind::PatternArity { .. } => "pattern-arity",
            DiagKind::DuplicateFormal(_) => "duplicate-formal",
            DiagKind::ConstructorInJoin(_) => "constructor-in-join",
            DiagKind::FreeVariable(_) => "free-variable",
            DiagKind::UnresolvedSignal(_) => "unresolved-signal",
            DiagKind::UnknownConstructor(_) => "unknown-constructor",
            DiagKind::ArityMismatch { .. } => "arity-mismatch",
            DiagKind::UnknownLabel(_) => "unknown-label",
            DiagKind::DuplicateLabel(_) => "duplicate-label",
            DiagKind::StackUnderflow => "stack-underflow",
            DiagKind::InconsistentStack => "inconsistent-stack",
            DiagKind::MissingFinish => "missing-finish",
            DiagKind::UnknownWorker(_) => "unknown-worker",
            DiagKind::BadDuplicationRule => "bad-duplication-rule",
            DiagKind::LocalityViolation { .. } => "locality-violation",
        }
    }
}

impl fmt::Display for DiagKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagKind::MissingEntry => write!(f, "no entry constructor declared"),
            DiagKind::UnknownEntry(e) => write!(f, "entry `{e}` does not exist"),
            DiagKind::EntryNotConstructor(e) => write!(f, "entry `{e}` is not a constructor"),
            DiagKind::DuplicateDefinition(d) => write!(f, "definition `{d}` declared twice"),
            DiagKind::DuplicateSignal(s) => write!(f, "signal `{s}` declared twice"),
            DiagKind::DuplicatePrimordial(s) => write!(f, "primordial `{s}` declared twice"),
            DiagKind::EmptyPattern => write!(f, "empty join pattern"),
            DiagKind::UndeclaredSignal(s) => write!(f, "pattern signal `{s}` is not declared"),
            DiagKind::ForeignSignalInPattern { signal, owner } => {
                write!(f, "pattern matches `{signal}` which belongs to definition `{owner}`")
            }
            DiagKind::PatternArity {
                signal,
                expected,
                found,
            } => write!(f, "`{signal}` takes {expected} parameters, pattern binds {found}"),
            DiagKind::DuplicateFormal(x) => write!(f, "formal `{x}` bound twice"),
            DiagKind::ConstructorInJoin(s) => {
                write!(f, "constructor `{s}` must be matched alone")
            }
            DiagKind::FreeVariable(x) => write!(f, "free variable `{x}`"),
            DiagKind::UnresolvedSignal(s) => write!(f, "`load.signal {s}` does not resolve"),
            DiagKind::UnknownConstructor(c) => write!(f, "`construct {c}` does not resolve"),
            DiagKind::ArityMismatch {
                signal,
                expected,
                found,
            } => write!(f, "emit to `{signal}` passes {found} arguments, expected {expected}"),
            DiagKind::UnknownLabel(l) => write!(f, "unknown label `{l}`"),
            DiagKind::DuplicateLabel(l) => write!(f, "label `{l}` defined twice"),
            DiagKind::StackUnderflow => write!(f, "stack underflow"),
            DiagKind::InconsistentStack => write!(f, "stack depth differs between paths"),
            DiagKind::MissingFinish => write!(f, "control path does not end in finish"),
            DiagKind::UnknownWorker(w) => write!(f, "worker `{w}` is not declared"),
            DiagKind::BadDuplicationRule => {
                write!(f, "duplication rule must re-emit its single message twice")
            }
            DiagKind::LocalityViolation { signal, worker } => {
                write!(f, "rule on worker `{worker}` refers to non-local signal `{signal}`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub location: Location,
    pub kind: DiagKind,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: [{}] {}", self.location, self.kind.id(), self.kind)
    }
}

/// Checks every structural invariant of a flat program; an empty result
/// means the program is well formed.
pub fn validate_program(p: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |def: Option<&str>, rule: Option<usize>, instr: Option<usize>, kind| {
        out.push(Diagnostic {
            location: Location {
                def: def.map(str::to_string),
                rule,
                instr,
            },
            kind,
        })
    };

    let mut prim_names = HashSet::new();
    for pr in &p.primordials {
        if !prim_names.insert(pr.name.as_str()) {
            push(None, None, None, DiagKind::DuplicatePrimordial(pr.name.clone()));
        }
    }

    match &p.entry {
        None => push(None, None, None, DiagKind::MissingEntry),
        Some(e) => match p.definition(&e.def).and_then(|d| d.signal(&e.signal)) {
            None => push(None, None, None, DiagKind::UnknownEntry(e.to_string())),
            Some(s) if !s.is_constructor => push(None, None, None, DiagKind::EntryNotConstructor(e.to_string())),
            Some(_) => {}
        },
    }

    let workers: HashSet<&WorkerId> = p.workers.iter().collect();
    let mut def_names = HashSet::new();
    for def in &p.definitions {
        let dn = Some(def.name.as_str());
        if !def_names.insert(def.name.as_str()) {
            push(None, None, None, DiagKind::DuplicateDefinition(def.name.clone()));
        }
        let mut sig_names = HashSet::new();
        for s in &def.signals {
            if !sig_names.insert(s.name.as_str()) {
                push(dn, None, None, DiagKind::DuplicateSignal(s.name.clone()));
            }
        }

        for (ri, rule) in def.rules.iter().enumerate() {
            let at = |i: Option<usize>| (dn, Some(ri), i);
            if rule.pattern.is_empty() {
                let (d, r, i) = at(None);
                push(d, r, i, DiagKind::EmptyPattern);
            }
            let mut formals = HashSet::new();
            for elem in &rule.pattern {
                match def.signal(&elem.signal) {
                    Some(decl) => {
                        if decl.arity() != elem.formals.len() {
                            let (d, r, i) = at(None);
                            push(
                                d,
                                r,
                                i,
                                DiagKind::PatternArity {
                                    signal: elem.signal.clone(),
                                    expected: decl.arity(),
                                    found: elem.formals.len(),
                                },
                            );
                        }
                        if decl.is_constructor && rule.pattern.len() > 1 {
                            let (d, r, i) = at(None);
                            push(d, r, i, DiagKind::ConstructorInJoin(elem.signal.clone()));
                        }
                    }
                    None => {
                        let owner = p
                            .definitions
                            .iter()
                            .find(|o| o.name != def.name && o.signal(&elem.signal).is_some());
                        let kind = match owner {
                            Some(o) => DiagKind::ForeignSignalInPattern {
                                signal: elem.signal.clone(),
                                owner: o.name.clone(),
                            },
                            None => DiagKind::UndeclaredSignal(elem.signal.clone()),
                        };
                        let (d, r, i) = at(None);
                        push(d, r, i, kind);
                    }
                }
                for f in &elem.formals {
                    if !formals.insert(f.as_str()) {
                        let (d, r, i) = at(None);
                        push(d, r, i, DiagKind::DuplicateFormal(f.clone()));
                    }
                }
            }

            if let Some(w) = &rule.worker {
                if !p.workers.is_empty() && !workers.contains(w) {
                    let (d, r, i) = at(None);
                    push(d, r, i, DiagKind::UnknownWorker(w.to_string()));
                }
            }
            if rule.kind == RuleKind::Duplication && !rule.has_duplication_shape() {
                let (d, r, i) = at(None);
                push(d, r, i, DiagKind::BadDuplicationRule);
            }

            let stored: HashSet<&str> = rule
                .body
                .iter()
                .filter_map(|i| match i {
                    Instr::Store(n) => Some(n.as_str()),
                    _ => None,
                })
                .collect();
            let mut reported_free = HashSet::new();
            for (ii, ins) in rule.body.iter().enumerate() {
                match ins {
                    Instr::Load(x) => {
                        if !formals.contains(x.as_str())
                            && !stored.contains(x.as_str())
                            && reported_free.insert(x.as_str())
                        {
                            let (d, r, i) = at(Some(ii));
                            push(d, r, i, DiagKind::FreeVariable(x.clone()));
                        }
                    }
                    Instr::LoadSignal(f) => {
                        if def.signal(f).is_none() && p.primordial(f).is_none() {
                            let (d, r, i) = at(Some(ii));
                            push(d, r, i, DiagKind::UnresolvedSignal(f.clone()));
                        }
                    }
                    Instr::Construct { def: cd, ctor } => {
                        let ok = p
                            .definition(cd)
                            .and_then(|d| d.signal(ctor))
                            .is_some_and(|s| s.is_constructor);
                        if !ok {
                            let (d, r, i) = at(Some(ii));
                            push(d, r, i, DiagKind::UnknownConstructor(format!("{cd}.{ctor}")));
                        }
                    }
                    _ => {}
                }
            }

            let sig_arity = |f: &str| {
                def.signal(f)
                    .map(|s| s.arity())
                    .or_else(|| p.primordial(f).map(|pr| pr.arity))
            };
            let ctor_arity = |d: &str, c: &str| p.definition(d).and_then(|d| d.signal(c)).map(|s| s.arity());
            let shape = analyze_body(&rule.body, &sig_arity, &ctor_arity);
            for issue in shape.issues {
                let (pc, kind) = match issue {
                    FlowIssue::UnknownLabel { at, label } => (at, DiagKind::UnknownLabel(label)),
                    FlowIssue::DuplicateLabel { at, label } => (at, DiagKind::DuplicateLabel(label)),
                    FlowIssue::StackUnderflow { at } => (at, DiagKind::StackUnderflow),
                    FlowIssue::InconsistentStack { at } => (at, DiagKind::InconsistentStack),
                    FlowIssue::MissingFinish { at } => (at, DiagKind::MissingFinish),
                    FlowIssue::StaticArity {
                        at,
                        signal,
                        expected,
                        found,
                    } => (
                        at,
                        DiagKind::ArityMismatch {
                            signal,
                            expected,
                            found,
                        },
                    ),
                };
                let (d, r, _) = at(None);
                push(d, r, Some(pc), kind);
            }
        }
    }
    out
}
