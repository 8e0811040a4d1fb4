//! Surface language: parsing and nesting elimination.
//!
//! The surface grammar is the flat textual format plus nested `definition`
//! blocks inside rule bodies, whose rules may `load` variables of the
//! enclosing rule. [`lift`] turns such programs into flat ones.

mod lexer;
mod lift;
mod parser;

use crate::ir::{Instr, PrimordialSignal, Program, RuleKind, SignalDecl, SignalRef, WorkerId};

pub use lift::{lift, CTOR_PREFIX, TMP_SIGNAL};
pub use parser::parse;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{}:{}: syntax error: {msg}", .span.line, .span.col)]
    Syntax { span: Span, msg: String },
    #[error("{}:{}: duplicate name `{name}`", .span.line, .span.col)]
    DuplicateName { span: Span, name: String },
}

impl ParseError {
    pub fn span(&self) -> Span {
        match self {
            ParseError::Syntax { span, .. } | ParseError::DuplicateName { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurfaceProgram {
    pub primordials: Vec<PrimordialSignal>,
    pub entry: Option<SignalRef>,
    pub workers: Vec<WorkerId>,
    pub definitions: Vec<SurfaceDef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceDef {
    pub name: String,
    pub signals: Vec<SignalDecl>,
    pub rules: Vec<SurfaceRule>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceRule {
    pub pattern: Vec<crate::ir::PatternElem>,
    pub body: Vec<Stmt>,
    pub worker: Option<WorkerId>,
    /// `None` when unannotated; lift infers duplication rules by shape.
    pub kind: Option<RuleKind>,
    pub origin: Option<usize>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Instr(Instr, Span),
    /// `construct X` with an unqualified target, resolved by lift.
    ConstructShort(String, Span),
    Nested(SurfaceDef),
}

/// Parses surface text and lifts it to a flat program.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    Ok(lift(parse(text)?))
}
