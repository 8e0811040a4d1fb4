//! Flat (non-nested) Join Calculus intermediate representation.
//!
//! A [`Program`] is a list of [`Definition`]s. Each definition owns a set of
//! signals and the transition rules whose join patterns match on them. Rule
//! bodies are symbolic stack assembly: locals and branch targets are named,
//! and the VM loader resolves them to slots and offsets.

use std::fmt;

mod flow;
mod print;
mod validate;

pub use flow::{analyze_body, BodyShape};
pub use print::pretty_print;
pub use validate::{validate_program, DiagKind, Diagnostic, Location};

/// Semantic type of a signal parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SemType {
    Int,
    Bool,
    IntArray,
    Signal,
}

impl SemType {
    pub fn keyword(self) -> &'static str {
        match self {
            SemType::Int => "int",
            SemType::Bool => "bool",
            SemType::IntArray => "arr",
            SemType::Signal => "sig",
        }
    }

    pub fn from_keyword(s: &str) -> Option<SemType> {
        Some(match s {
            "int" => SemType::Int,
            "bool" => SemType::Bool,
            "arr" => SemType::IntArray,
            "sig" => SemType::Signal,
            _ => return None,
        })
    }
}

/// Where a mapped signal copy came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignalOrigin {
    pub signal: String,
    pub processor: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignalDecl {
    pub name: String,
    pub params: Vec<SemType>,
    pub is_constructor: bool,
    pub origin: Option<SignalOrigin>,
}

impl SignalDecl {
    pub fn new(name: impl Into<String>, params: Vec<SemType>) -> Self {
        SignalDecl {
            name: name.into(),
            params,
            is_constructor: false,
            origin: None,
        }
    }

    pub fn constructor(name: impl Into<String>, params: Vec<SemType>) -> Self {
        SignalDecl {
            is_constructor: true,
            ..SignalDecl::new(name, params)
        }
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// An externally provided continuation such as `OUTPUT`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrimordialSignal {
    pub name: String,
    pub arity: usize,
}

/// Name of the built-in output continuation.
pub const OUTPUT: &str = "OUTPUT";

/// One element of a join pattern: `f(a, b)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternElem {
    pub signal: String,
    pub formals: Vec<String>,
}

impl PatternElem {
    pub fn new(signal: impl Into<String>, formals: &[&str]) -> Self {
        PatternElem {
            signal: signal.into(),
            formals: formals.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum RuleKind {
    #[default]
    Computation,
    Transfer,
    Duplication,
}

/// A worker: a processor, or a directed link between two processors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WorkerId {
    Processor(String),
    Link(String, String),
}

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkerId::Processor(p) => write!(f, "{p}"),
            WorkerId::Link(a, b) => write!(f, "({a},{b})"),
        }
    }
}

/// Literal operand of `load.const`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Const {
    Int(i64),
    Bool(bool),
    IntArray(Vec<i64>),
}

impl fmt::Display for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const::Int(n) => write!(f, "{n}"),
            Const::Bool(b) => write!(f, "{b}"),
            Const::IntArray(xs) => {
                write!(f, "[")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "]")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub const ALL: [BinOp; 10] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
            BinOp::Eq => "eq",
            BinOp::Ne => "ne",
            BinOp::Lt => "lt",
            BinOp::Le => "le",
            BinOp::Gt => "gt",
            BinOp::Ge => "ge",
        }
    }
}

/// A body instruction. `Label` is a pseudo-instruction marking a branch
/// target; it occupies no slot once loaded.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instr {
    Label(String),
    LoadConst(Const),
    Load(String),
    Store(String),
    LoadSignal(String),
    /// Emit with `n` arguments; the signal value sits beneath them.
    Emit(usize),
    Construct {
        def: String,
        ctor: String,
    },
    Finish,
    Bin(BinOp),
    Br(String),
    Brz(String),
    ArrLen,
    ArrSlice,
    ArrMerge,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransitionRule {
    pub pattern: Vec<PatternElem>,
    pub body: Vec<Instr>,
    pub worker: Option<WorkerId>,
    pub kind: RuleKind,
    /// Index of the source rule this one was copied from (mapped programs).
    pub origin: Option<usize>,
}

impl TransitionRule {
    pub fn new(pattern: Vec<PatternElem>, body: Vec<Instr>) -> Self {
        TransitionRule {
            pattern,
            body,
            worker: None,
            kind: RuleKind::Computation,
            origin: None,
        }
    }

    pub fn formals(&self) -> impl Iterator<Item = &str> {
        self.pattern.iter().flat_map(|p| p.formals.iter().map(String::as_str))
    }

    /// Local slot names: pattern formals in order, then every other name
    /// stored by the body in order of first appearance.
    pub fn local_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for f in self.formals() {
            if !names.iter().any(|n| n == f) {
                names.push(f.to_string());
            }
        }
        for i in &self.body {
            if let Instr::Store(n) = i {
                if !names.contains(n) {
                    names.push(n.clone());
                }
            }
        }
        names
    }

    /// `f(x..) { f(x..); f(x..); finish }` with no other effect.
    pub fn has_duplication_shape(&self) -> bool {
        let [elem] = self.pattern.as_slice() else {
            return false;
        };
        let mut one = vec![Instr::LoadSignal(elem.signal.clone())];
        one.extend(elem.formals.iter().map(|f| Instr::Load(f.clone())));
        one.push(Instr::Emit(elem.formals.len()));
        let mut expected = one.clone();
        expected.extend(one);
        expected.push(Instr::Finish);
        self.body == expected
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Definition {
    pub name: String,
    pub signals: Vec<SignalDecl>,
    pub rules: Vec<TransitionRule>,
}

impl Definition {
    pub fn new(name: impl Into<String>) -> Self {
        Definition {
            name: name.into(),
            signals: Vec::new(),
            rules: Vec::new(),
        }
    }

    pub fn signal(&self, name: &str) -> Option<&SignalDecl> {
        self.signals.iter().find(|s| s.name == name)
    }
}

/// `Def.signal`
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignalRef {
    pub def: String,
    pub signal: String,
}

impl fmt::Display for SignalRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.def, self.signal)
    }
}

/// `(definition name, rule index in source order)`
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleRef {
    pub def: String,
    pub index: usize,
}

impl fmt::Display for RuleRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.def, self.index)
    }
}

impl std::str::FromStr for RuleRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (def, idx) = s
            .trim()
            .rsplit_once('.')
            .ok_or_else(|| format!("expected <def>.<ruleIdx>, got `{s}`"))?;
        let index = idx.parse().map_err(|_| format!("bad rule index in `{s}`"))?;
        Ok(RuleRef {
            def: def.to_string(),
            index,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Program {
    pub primordials: Vec<PrimordialSignal>,
    pub entry: Option<SignalRef>,
    /// Worker set of a mapped program; empty before mapping.
    pub workers: Vec<WorkerId>,
    pub definitions: Vec<Definition>,
}

impl Program {
    pub fn definition(&self, name: &str) -> Option<&Definition> {
        self.definitions.iter().find(|d| d.name == name)
    }

    pub fn primordial(&self, name: &str) -> Option<&PrimordialSignal> {
        self.primordials.iter().find(|p| p.name == name)
    }

    pub fn rule(&self, r: &RuleRef) -> Option<&TransitionRule> {
        self.definition(&r.def)?.rules.get(r.index)
    }

    pub fn rule_refs(&self) -> impl Iterator<Item = RuleRef> + '_ {
        self.definitions.iter().flat_map(|d| {
            (0..d.rules.len()).map(move |index| RuleRef {
                def: d.name.clone(),
                index,
            })
        })
    }

    pub fn is_mapped(&self) -> bool {
        self.definitions
            .iter()
            .flat_map(|d| &d.rules)
            .any(|r| r.worker.is_some())
    }

    pub fn entry_decl(&self) -> Option<&SignalDecl> {
        let e = self.entry.as_ref()?;
        self.definition(&e.def)?.signal(&e.signal)
    }
}
