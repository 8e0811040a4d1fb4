//! Textual form of flat programs. `frontend::parse_program` reads it back.

use std::fmt::Write;

use super::{Definition, Instr, Program, RuleKind, TransitionRule};

pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    for pr in &p.primordials {
        writeln!(out, "primordial {}/{}", pr.name, pr.arity).unwrap();
    }
    if let Some(e) = &p.entry {
        writeln!(out, "entry {e}").unwrap();
    }
    if !p.workers.is_empty() {
        let ws: Vec<String> = p.workers.iter().map(|w| w.to_string()).collect();
        writeln!(out, "workers {}", ws.join(" ")).unwrap();
    }
    for def in &p.definitions {
        out.push('\n');
        print_definition(&mut out, def);
    }
    out
}

fn print_definition(out: &mut String, def: &Definition) {
    if def.signals.is_empty() && def.rules.is_empty() {
        writeln!(out, "definition {} {{ }}", def.name).unwrap();
        return;
    }
    writeln!(out, "definition {} {{", def.name).unwrap();
    for s in &def.signals {
        let kw = if s.is_constructor { ".ctor" } else { "signal" };
        let params: Vec<&str> = s.params.iter().map(|t| t.keyword()).collect();
        write!(out, "  {kw} {}({})", s.name, params.join(", ")).unwrap();
        if let Some(o) = &s.origin {
            write!(out, " from {}@{}", o.signal, o.processor).unwrap();
        }
        out.push('\n');
    }
    for rule in &def.rules {
        out.push('\n');
        print_rule(out, rule);
    }
    writeln!(out, "}}").unwrap();
}

fn print_rule(out: &mut String, rule: &TransitionRule) {
    let mut annotations = Vec::new();
    if let Some(w) = &rule.worker {
        annotations.push(format!("@worker({w})"));
    }
    match rule.kind {
        RuleKind::Transfer => annotations.push("@transfer".into()),
        RuleKind::Duplication => annotations.push("@dup".into()),
        // Keep the parser from inferring a duplication rule on re-read.
        RuleKind::Computation if rule.has_duplication_shape() => annotations.push("@compute".into()),
        RuleKind::Computation => {}
    }
    if let Some(o) = rule.origin {
        annotations.push(format!("@origin({o})"));
    }
    if !annotations.is_empty() {
        writeln!(out, "  {}", annotations.join(" ")).unwrap();
    }
    let pattern: Vec<String> = rule
        .pattern
        .iter()
        .map(|e| format!("{}({})", e.signal, e.formals.join(", ")))
        .collect();
    writeln!(out, "  {} {{", pattern.join(" & ")).unwrap();
    for ins in &rule.body {
        match ins {
            Instr::Label(l) => writeln!(out, "  {l}:").unwrap(),
            other => writeln!(out, "    {}", mnemonic(other)).unwrap(),
        }
    }
    writeln!(out, "  }}").unwrap();
}

/// Assembly text of one instruction.
pub(crate) fn mnemonic(ins: &Instr) -> String {
    match ins {
        Instr::Label(l) => format!("{l}:"),
        Instr::LoadConst(c) => format!("load.const {c}"),
        Instr::Load(x) => format!("load {x}"),
        Instr::Store(x) => format!("store {x}"),
        Instr::LoadSignal(f) => format!("load.signal {f}"),
        Instr::Emit(n) => format!("emit {n}"),
        Instr::Construct { def, ctor } => format!("construct {def}.{ctor}"),
        Instr::Finish => "finish".into(),
        Instr::Bin(op) => op.mnemonic().into(),
        Instr::Br(l) => format!("br {l}"),
        Instr::Brz(l) => format!("brz {l}"),
        Instr::ArrLen => "arr.len".into(),
        Instr::ArrSlice => "arr.slice".into(),
        Instr::ArrMerge => "arr.merge".into(),
    }
}
