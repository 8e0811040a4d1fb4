//! Recursive-descent parser for the surface grammar.
//!
//! ```text
//! program    := { top | NL }
//! top        := "primordial" IDENT "/" INT
//!             | "entry" IDENT "." IDENT
//!             | "workers" { worker }
//!             | definition
//! definition := "definition" IDENT "{" { decl | rule | NL } "}"
//! decl       := ("signal" | ".ctor") IDENT "(" [type {"," type}] ")" ["from" IDENT "@" IDENT]
//! type       := "int" | "bool" | "arr" | "sig"
//! rule       := { annotation } elem { "&" elem } "{" body "}"
//! annotation := "@worker(" worker ")" | "@transfer" | "@dup" | "@compute" | "@origin(" INT ")"
//! worker     := IDENT | "(" IDENT "," IDENT ")"
//! elem       := IDENT "(" [IDENT {"," IDENT}] ")"
//! body       := { IDENT ":" | definition | instr | NL | ";" }
//! ```
//!
//! Instructions one per line (or `;`-separated): `load.const 3`,
//! `load.const [1,2]`, `load x`, `store x`, `load.signal f`, `emit 2`,
//! `construct Def.ctor` (or `construct ctor`), `finish`, `add` `sub` `mul`
//! `div` `eq` `ne` `lt` `le` `gt` `ge`, `br L`, `brz L`, `arr.len`,
//! `arr.slice` (half-open), `arr.merge`.

use std::collections::HashSet;

use super::lexer::{lex, Tok, Token};
use super::{ParseError, Span, Stmt, SurfaceDef, SurfaceProgram, SurfaceRule};
use crate::ir::{
    BinOp, Const, Instr, PatternElem, PrimordialSignal, RuleKind, SemType, SignalDecl, SignalOrigin, SignalRef,
    WorkerId,
};

pub fn parse(text: &str) -> Result<SurfaceProgram, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    p.program()
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError::Syntax {
            span: self.span(),
            msg: msg.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }

    fn skip_newlines(&mut self) {
        while matches!(self.peek(), Tok::Newline | Tok::Sym(';')) {
            self.bump();
        }
    }

    fn is_sym(&self, c: char) -> bool {
        self.peek() == &Tok::Sym(c)
    }

    fn expect_sym(&mut self, c: char) -> PResult<()> {
        if self.is_sym(c) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{c}`, found {}", self.describe()))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.err(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        let neg = if self.is_sym('-') {
            self.bump();
            true
        } else {
            false
        };
        match *self.peek() {
            Tok::Int(n) => {
                self.bump();
                Ok(if neg { -n } else { n })
            }
            _ => self.err(format!("expected integer, found {}", self.describe())),
        }
    }

    fn end_of_line(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline | Tok::Sym(';') | Tok::Eof => {
                self.skip_newlines();
                Ok(())
            }
            Tok::Sym('}') => Ok(()),
            _ => self.err(format!("expected end of line, found {}", self.describe())),
        }
    }

    fn program(&mut self) -> PResult<SurfaceProgram> {
        let mut prog = SurfaceProgram::default();
        let mut def_names = HashSet::new();
        loop {
            self.skip_newlines();
            let span = self.span();
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "primordial" => {
                    self.bump();
                    let name = self.ident()?;
                    self.expect_sym('/')?;
                    let arity = self.int()?;
                    if arity < 0 {
                        return self.err("negative arity");
                    }
                    if prog.primordials.iter().any(|p| p.name == name) {
                        return Err(ParseError::DuplicateName { span, name });
                    }
                    prog.primordials.push(PrimordialSignal {
                        name,
                        arity: arity as usize,
                    });
                    self.end_of_line()?;
                }
                Tok::Ident(kw) if kw == "entry" => {
                    self.bump();
                    let def = self.ident()?;
                    self.expect_sym('.')?;
                    let signal = self.ident()?;
                    prog.entry = Some(SignalRef { def, signal });
                    self.end_of_line()?;
                }
                Tok::Ident(kw) if kw == "workers" => {
                    self.bump();
                    while !matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Sym(';')) {
                        prog.workers.push(self.worker()?);
                    }
                    self.end_of_line()?;
                }
                Tok::Ident(kw) if kw == "definition" => {
                    let def = self.definition()?;
                    if !def_names.insert(def.name.clone()) {
                        return Err(ParseError::DuplicateName {
                            span: def.span,
                            name: def.name,
                        });
                    }
                    prog.definitions.push(def);
                }
                _ => return self.err(format!("expected a top-level item, found {}", self.describe())),
            }
        }
        Ok(prog)
    }

    fn worker(&mut self) -> PResult<WorkerId> {
        if self.is_sym('(') {
            self.bump();
            let a = self.ident()?;
            self.expect_sym(',')?;
            let b = self.ident()?;
            self.expect_sym(')')?;
            Ok(WorkerId::Link(a, b))
        } else {
            Ok(WorkerId::Processor(self.ident()?))
        }
    }

    fn definition(&mut self) -> PResult<SurfaceDef> {
        let span = self.span();
        if !self.is_kw("definition") {
            return self.err("expected `definition`");
        }
        self.bump();
        let name = self.ident()?;
        self.skip_newlines();
        self.expect_sym('{')?;
        let mut def = SurfaceDef {
            name,
            signals: Vec::new(),
            rules: Vec::new(),
            span,
        };
        loop {
            self.skip_newlines();
            if self.is_sym('}') {
                self.bump();
                break;
            }
            if matches!(self.peek(), Tok::Eof) {
                return self.err(format!("unclosed definition `{}`", def.name));
            }
            if self.is_kw("signal") || (self.is_sym('.') && matches!(self.peek_at(1), Tok::Ident(s) if s == "ctor")) {
                let dspan = self.span();
                let decl = self.signal_decl()?;
                if def.signals.iter().any(|s| s.name == decl.name) {
                    return Err(ParseError::DuplicateName {
                        span: dspan,
                        name: decl.name,
                    });
                }
                def.signals.push(decl);
            } else {
                def.rules.push(self.rule()?);
            }
        }
        Ok(def)
    }

    fn signal_decl(&mut self) -> PResult<SignalDecl> {
        let is_ctor = if self.is_sym('.') {
            self.bump();
            self.bump();
            true
        } else {
            self.bump();
            false
        };
        let name = self.ident()?;
        self.expect_sym('(')?;
        let mut params = Vec::new();
        if !self.is_sym(')') {
            loop {
                let t = self.ident()?;
                match SemType::from_keyword(&t) {
                    Some(ty) => params.push(ty),
                    None => {
                        self.pos -= 1;
                        return self.err(format!("unknown type `{t}` (expected int, bool, arr or sig)"));
                    }
                }
                if self.is_sym(',') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_sym(')')?;
        let origin = if self.is_kw("from") {
            self.bump();
            let signal = self.ident()?;
            self.expect_sym('@')?;
            let processor = self.ident()?;
            Some(SignalOrigin { signal, processor })
        } else {
            None
        };
        self.end_of_line()?;
        Ok(SignalDecl {
            name,
            params,
            is_constructor: is_ctor,
            origin,
        })
    }

    fn rule(&mut self) -> PResult<SurfaceRule> {
        let span = self.span();
        let mut worker = None;
        let mut kind = None;
        let mut origin = None;
        while self.is_sym('@') {
            self.bump();
            let a = self.ident()?;
            match a.as_str() {
                "worker" => {
                    self.expect_sym('(')?;
                    worker = Some(self.worker()?);
                    self.expect_sym(')')?;
                }
                "transfer" => kind = Some(RuleKind::Transfer),
                "dup" => kind = Some(RuleKind::Duplication),
                "compute" => kind = Some(RuleKind::Computation),
                "origin" => {
                    self.expect_sym('(')?;
                    let n = self.int()?;
                    if n < 0 {
                        return self.err("negative rule index");
                    }
                    origin = Some(n as usize);
                    self.expect_sym(')')?;
                }
                other => {
                    self.pos -= 1;
                    return self.err(format!("unknown annotation `@{other}`"));
                }
            }
            self.skip_newlines();
        }
        let mut pattern = vec![self.pattern_elem()?];
        while self.is_sym('&') {
            self.bump();
            self.skip_newlines();
            pattern.push(self.pattern_elem()?);
        }
        self.skip_newlines();
        self.expect_sym('{')?;
        let body = self.body()?;
        Ok(SurfaceRule {
            pattern,
            body,
            worker,
            kind,
            origin,
            span,
        })
    }

    fn pattern_elem(&mut self) -> PResult<PatternElem> {
        let signal = self.ident()?;
        self.expect_sym('(')?;
        let mut formals = Vec::new();
        if !self.is_sym(')') {
            loop {
                formals.push(self.ident()?);
                if self.is_sym(',') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_sym(')')?;
        Ok(PatternElem { signal, formals })
    }

    /// Parses statements up to and including the closing `}`.
    fn body(&mut self) -> PResult<Vec<Stmt>> {
        let mut stmts = Vec::new();
        loop {
            self.skip_newlines();
            let span = self.span();
            match self.peek().clone() {
                Tok::Sym('}') => {
                    self.bump();
                    return Ok(stmts);
                }
                Tok::Eof => return self.err("unclosed rule body"),
                Tok::Ident(s) if s == "definition" => {
                    stmts.push(Stmt::Nested(self.definition()?));
                }
                Tok::Ident(s) if self.peek_at(1) == &Tok::Sym(':') => {
                    self.bump();
                    self.bump();
                    stmts.push(Stmt::Instr(Instr::Label(s), span));
                }
                Tok::Ident(_) => {
                    stmts.push(self.instr(span)?);
                    self.end_of_line()?;
                }
                _ => return self.err(format!("expected an instruction, found {}", self.describe())),
            }
        }
    }

    fn instr(&mut self, span: Span) -> PResult<Stmt> {
        let mut op = self.ident()?;
        if self.is_sym('.') {
            self.bump();
            op.push('.');
            op.push_str(&self.ident()?);
        }
        let ins = match op.as_str() {
            "load.const" => Instr::LoadConst(self.constant()?),
            "load" => Instr::Load(self.ident()?),
            "store" => Instr::Store(self.ident()?),
            "load.signal" => Instr::LoadSignal(self.ident()?),
            "emit" => {
                let n = self.int()?;
                if n < 0 {
                    return self.err("negative argument count");
                }
                Instr::Emit(n as usize)
            }
            "construct" => {
                let first = self.ident()?;
                if self.is_sym('.') {
                    self.bump();
                    let ctor = self.ident()?;
                    Instr::Construct { def: first, ctor }
                } else {
                    return Ok(Stmt::ConstructShort(first, span));
                }
            }
            "finish" => Instr::Finish,
            "br" => Instr::Br(self.ident()?),
            "brz" => Instr::Brz(self.ident()?),
            "arr.len" => Instr::ArrLen,
            "arr.slice" => Instr::ArrSlice,
            "arr.merge" => Instr::ArrMerge,
            other => match BinOp::ALL.iter().find(|b| b.mnemonic() == other) {
                Some(b) => Instr::Bin(*b),
                None => {
                    return Err(ParseError::Syntax {
                        span,
                        msg: format!("unknown instruction `{other}`"),
                    })
                }
            },
        };
        Ok(Stmt::Instr(ins, span))
    }

    fn constant(&mut self) -> PResult<Const> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "true" => {
                self.bump();
                Ok(Const::Bool(true))
            }
            Tok::Ident(s) if s == "false" => {
                self.bump();
                Ok(Const::Bool(false))
            }
            Tok::Sym('[') => {
                self.bump();
                let mut xs = Vec::new();
                if !self.is_sym(']') {
                    loop {
                        xs.push(self.int()?);
                        if self.is_sym(',') {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect_sym(']')?;
                Ok(Const::IntArray(xs))
            }
            _ => Ok(Const::Int(self.int()?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_definition() {
        let p = parse("definition D { }").unwrap();
        assert_eq!(p.definitions.len(), 1);
        assert_eq!(p.definitions[0].name, "D");
        assert!(p.definitions[0].rules.is_empty());
        assert!(p.definitions[0].signals.is_empty());
    }

    #[test]
    fn unbalanced_brace_reports_line() {
        let text = "definition D {\n  signal a()\n  a() {\n    finish\n";
        let e = parse(text).unwrap_err();
        match e {
            ParseError::Syntax { span, .. } => assert_eq!(span.line, 5),
            other => panic!("{other:?}"),
        }
        let e = parse("definition D {\n  signal a()\n}\n}\n").unwrap_err();
        assert_eq!(e.span().line, 4);
    }

    #[test]
    fn duplicate_names_rejected() {
        let e = parse("definition D { }\ndefinition D { }").unwrap_err();
        assert!(matches!(e, ParseError::DuplicateName { ref name, .. } if name == "D"));
        let e = parse("definition D {\n signal a()\n signal a(int)\n}").unwrap_err();
        assert!(matches!(e, ParseError::DuplicateName { ref name, span } if name == "a" && span.line == 3));
    }

    #[test]
    fn annotations_and_workers() {
        let text = "workers x (x,y)\ndefinition D {\n signal a(int)\n @worker((x,y)) @transfer @origin(2)\n a(v) { load.signal a; load v; emit 1; finish }\n}";
        let p = parse(text).unwrap();
        assert_eq!(
            p.workers,
            vec![WorkerId::Processor("x".into()), WorkerId::Link("x".into(), "y".into())]
        );
        let r = &p.definitions[0].rules[0];
        assert_eq!(r.worker, Some(WorkerId::Link("x".into(), "y".into())));
        assert_eq!(r.kind, Some(RuleKind::Transfer));
        assert_eq!(r.origin, Some(2));
        assert_eq!(r.body.len(), 4);
    }

    #[test]
    fn constants() {
        let p = parse("definition D {\n signal a()\n a() {\n load.const -3\n load.const [1, -2]\n load.const true\n finish\n }\n}").unwrap();
        let body = &p.definitions[0].rules[0].body;
        assert!(matches!(&body[0], Stmt::Instr(Instr::LoadConst(Const::Int(-3)), _)));
        assert!(matches!(&body[1], Stmt::Instr(Instr::LoadConst(Const::IntArray(v)), _) if v == &vec![1, -2]));
        assert!(matches!(&body[2], Stmt::Instr(Instr::LoadConst(Const::Bool(true)), _)));
    }

    #[test]
    fn unknown_instruction() {
        let e = parse("definition D {\n signal a()\n a() {\n  jump\n }\n}").unwrap_err();
        assert_eq!(e.span(), Span { line: 4, col: 3 });
    }
}
