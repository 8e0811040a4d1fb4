//! Nesting elimination.
//!
//! A nested definition whose rules read variables of the enclosing rule is
//! hoisted to the top level. Its captured variables become extra trailing
//! parameters of its constructors, and the ones needed after construction
//! travel in a single generated `$tmp(..)` message:
//!
//! ```text
//! a(x,k) { definition Nested { .ctor Nested() { k(f) }  f(m) { m(x*2) } }  construct Nested }
//! ```
//!
//! becomes
//!
//! ```text
//! definition Nested { .ctor $ctor_Nested(x,k) { $tmp(x); k(f) }
//!                     @dup $tmp(x) { $tmp(x); $tmp(x) }
//!                     f(m) & $tmp(x) { $tmp(x); m(x*2) } }
//! a(x,k) { construct Nested.$ctor_Nested(x,k) }
//! ```

use std::collections::{BTreeSet, HashMap, HashSet};

use super::{Stmt, SurfaceDef, SurfaceProgram, SurfaceRule};
use crate::ir::{
    Const, Definition, Instr, PatternElem, PrimordialSignal, Program, RuleKind, SemType, SignalDecl, SignalRef,
    TransitionRule, OUTPUT,
};

pub const TMP_SIGNAL: &str = "$tmp";
pub const CTOR_PREFIX: &str = "$ctor_";

struct DefNode {
    name: String,
    signals: Vec<SignalDecl>,
    rules: Vec<RuleNode>,
    parent: Option<(usize, usize)>,
}

struct RuleNode {
    src: SurfaceRule,
    body: Vec<BodyItem>,
    children: Vec<usize>,
}

enum BodyItem {
    Instr(Instr),
    /// Resolved construct; `None` target means unresolved (kept for validation).
    Construct {
        target: Option<usize>,
        def: String,
        ctor: String,
    },
}

struct Arena {
    defs: Vec<DefNode>,
    top: Vec<usize>,
}

impl Arena {
    fn add(&mut self, def: SurfaceDef, parent: Option<(usize, usize)>) -> usize {
        let id = self.defs.len();
        self.defs.push(DefNode {
            name: def.name,
            signals: def.signals,
            rules: Vec::new(),
            parent,
        });
        for (ri, mut rule) in def.rules.into_iter().enumerate() {
            let stmts = std::mem::take(&mut rule.body);
            let mut node = RuleNode {
                src: rule,
                body: Vec::new(),
                children: Vec::new(),
            };
            let mut nested = Vec::new();
            for s in stmts {
                match s {
                    Stmt::Instr(Instr::Construct { def, ctor }, _) => node.body.push(BodyItem::Construct {
                        target: None,
                        def,
                        ctor,
                    }),
                    Stmt::Instr(i, _) => node.body.push(BodyItem::Instr(i)),
                    Stmt::ConstructShort(name, _) => node.body.push(BodyItem::Construct {
                        target: None,
                        def: String::new(),
                        ctor: name,
                    }),
                    Stmt::Nested(d) => nested.push(d),
                }
            }
            self.defs[id].rules.push(node);
            for d in nested {
                let child = self.add(d, Some((id, ri)));
                self.defs[id].rules[ri].children.push(child);
            }
        }
        id
    }

    /// Definitions visible from rule `(d, r)`, innermost first.
    fn scope(&self, d: usize, r: usize) -> Vec<usize> {
        let mut out = self.defs[d].rules[r].children.clone();
        let mut cur = d;
        while let Some((pd, pr)) = self.defs[cur].parent {
            out.extend(self.defs[pd].rules[pr].children.iter().copied());
            cur = pd;
        }
        out.extend(self.top.iter().copied());
        out
    }

    fn resolve_constructs(&mut self) {
        for d in 0..self.defs.len() {
            for r in 0..self.defs[d].rules.len() {
                let scope = self.scope(d, r);
                let mut resolved = Vec::new();
                for (i, item) in self.defs[d].rules[r].body.iter().enumerate() {
                    let BodyItem::Construct { def, ctor, .. } = item else {
                        continue;
                    };
                    let has_ctor =
                        |t: usize, c: &str| self.defs[t].signals.iter().any(|s| s.is_constructor && s.name == c);
                    let found = if !def.is_empty() {
                        scope
                            .iter()
                            .copied()
                            .find(|&t| self.defs[t].name == *def && has_ctor(t, ctor))
                            .map(|t| (t, ctor.clone()))
                    } else {
                        scope
                            .iter()
                            .copied()
                            .find(|&t| has_ctor(t, ctor))
                            .map(|t| (t, ctor.clone()))
                            .or_else(|| {
                                scope.iter().copied().find_map(|t| {
                                    if self.defs[t].name != *ctor {
                                        return None;
                                    }
                                    let ctors: Vec<&SignalDecl> =
                                        self.defs[t].signals.iter().filter(|s| s.is_constructor).collect();
                                    match ctors.as_slice() {
                                        [only] => Some((t, only.name.clone())),
                                        _ => None,
                                    }
                                })
                            })
                    };
                    if let Some(f) = found {
                        resolved.push((i, f));
                    }
                }
                for (i, (t, c)) in resolved {
                    if let BodyItem::Construct { target, ctor, .. } = &mut self.defs[d].rules[r].body[i] {
                        *target = Some(t);
                        *ctor = c;
                    }
                }
            }
        }
    }

    fn bound(&self, d: usize, r: usize) -> HashSet<String> {
        let rule = &self.defs[d].rules[r];
        let mut b: HashSet<String> = rule
            .src
            .pattern
            .iter()
            .flat_map(|p| p.formals.iter().cloned())
            .collect();
        for item in &rule.body {
            if let BodyItem::Instr(Instr::Store(n)) = item {
                b.insert(n.clone());
            }
        }
        b
    }

    fn is_ctor_rule(&self, d: usize, r: usize) -> bool {
        let def = &self.defs[d];
        match def.rules[r].src.pattern.as_slice() {
            [only] => def.signals.iter().any(|s| s.name == only.signal && s.is_constructor),
            _ => false,
        }
    }
}

struct Captures {
    /// Ordered capture list per definition.
    caps: Vec<Vec<String>>,
    /// Free variables per rule.
    rule_free: Vec<Vec<BTreeSet<String>>>,
}

fn compute_captures(arena: &Arena) -> Captures {
    let n = arena.defs.len();
    let mut caps: Vec<Vec<String>> = vec![Vec::new(); n];
    let bounds: Vec<Vec<HashSet<String>>> = (0..n)
        .map(|d| (0..arena.defs[d].rules.len()).map(|r| arena.bound(d, r)).collect())
        .collect();
    loop {
        // Children before parents is not required: iterate to a fixpoint.
        let mut rule_free: Vec<Vec<BTreeSet<String>>> = arena
            .defs
            .iter()
            .map(|d| vec![BTreeSet::new(); d.rules.len()])
            .collect();
        let mut def_free: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n];
        for _ in 0..=n {
            let mut changed = false;
            for d in 0..n {
                for r in 0..arena.defs[d].rules.len() {
                    let rule = &arena.defs[d].rules[r];
                    let bound = &bounds[d][r];
                    let mut free = BTreeSet::new();
                    for item in &rule.body {
                        match item {
                            BodyItem::Instr(Instr::Load(x)) => {
                                free.insert(x.clone());
                            }
                            BodyItem::Construct { target: Some(t), .. } => free.extend(caps[*t].iter().cloned()),
                            _ => {}
                        }
                    }
                    for &c in &rule.children {
                        free.extend(def_free[c].iter().cloned());
                    }
                    free.retain(|x| !bound.contains(x));
                    if free != rule_free[d][r] {
                        rule_free[d][r] = free;
                        changed = true;
                    }
                }
                let df: BTreeSet<String> = rule_free[d].iter().flatten().cloned().collect();
                if df != def_free[d] {
                    def_free[d] = df;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut new_caps = vec![Vec::new(); n];
        for d in 0..n {
            let Some((pd, pr)) = arena.defs[d].parent else {
                continue;
            };
            let order = scope_order(arena, &caps, pd, pr);
            let mut list: Vec<String> = def_free[d].iter().cloned().collect();
            list.sort_by_key(|x| (order.iter().position(|o| o == x).unwrap_or(usize::MAX), x.clone()));
            new_caps[d] = list;
        }
        if new_caps == caps {
            return Captures { caps, rule_free };
        }
        caps = new_caps;
    }
}

/// Declaration order of the names visible in rule `(d, r)`.
fn scope_order(arena: &Arena, caps: &[Vec<String>], d: usize, r: usize) -> Vec<String> {
    let rule = &arena.defs[d].rules[r];
    let mut order: Vec<String> = Vec::new();
    let add = |x: &String, order: &mut Vec<String>| {
        if !order.contains(x) {
            order.push(x.clone());
        }
    };
    for p in &rule.src.pattern {
        for f in &p.formals {
            add(f, &mut order);
        }
    }
    for item in &rule.body {
        if let BodyItem::Instr(Instr::Store(n)) = item {
            add(n, &mut order);
        }
    }
    for c in &caps[d] {
        add(c, &mut order);
    }
    order
}

/// Types of stored locals, by abstract interpretation of the body.
fn infer_store_types(body: &[Instr], known: &dyn Fn(&str) -> Option<SemType>) -> HashMap<String, SemType> {
    let labels: HashMap<&str, usize> = body
        .iter()
        .enumerate()
        .filter_map(|(i, ins)| match ins {
            Instr::Label(l) => Some((l.as_str(), i)),
            _ => None,
        })
        .collect();
    let mut locals: HashMap<String, SemType> = HashMap::new();
    let mut visited = HashSet::new();
    let mut work: Vec<(usize, Vec<Option<SemType>>)> = vec![(0, Vec::new())];
    while let Some((pc, mut st)) = work.pop() {
        if pc >= body.len() || !visited.insert((pc, st.clone())) || visited.len() > 10_000 {
            continue;
        }
        let mut next = vec![pc + 1];
        let pop = |st: &mut Vec<Option<SemType>>, n: usize| {
            for _ in 0..n {
                st.pop();
            }
        };
        match &body[pc] {
            Instr::Label(_) => {}
            Instr::LoadConst(c) => st.push(Some(match c {
                Const::Int(_) => SemType::Int,
                Const::Bool(_) => SemType::Bool,
                Const::IntArray(_) => SemType::IntArray,
            })),
            Instr::Load(x) => st.push(locals.get(x).copied().or_else(|| known(x))),
            Instr::Store(x) => {
                if let Some(Some(t)) = st.pop() {
                    locals.entry(x.clone()).or_insert(t);
                }
            }
            Instr::LoadSignal(_) => st.push(Some(SemType::Signal)),
            Instr::Emit(n) => pop(&mut st, n + 1),
            Instr::Construct { .. } => st.clear(),
            Instr::Finish => next.clear(),
            Instr::Bin(op) => {
                pop(&mut st, 2);
                use crate::ir::BinOp::*;
                st.push(Some(match op {
                    Add | Sub | Mul | Div => SemType::Int,
                    _ => SemType::Bool,
                }));
            }
            Instr::ArrLen => {
                pop(&mut st, 1);
                st.push(Some(SemType::Int));
            }
            Instr::ArrSlice => {
                pop(&mut st, 3);
                st.push(Some(SemType::IntArray));
            }
            Instr::ArrMerge => {
                pop(&mut st, 2);
                st.push(Some(SemType::IntArray));
            }
            Instr::Br(l) => next = labels.get(l.as_str()).copied().into_iter().collect(),
            Instr::Brz(l) => {
                pop(&mut st, 1);
                next.extend(labels.get(l.as_str()).copied());
            }
        }
        for n in next {
            work.push((n, st.clone()));
        }
    }
    locals
}

/// Flattens a surface program. Flat input passes through unchanged apart
/// from construct resolution and duplication-kind inference.
pub fn lift(ast: SurfaceProgram) -> Program {
    let mut arena = Arena {
        defs: Vec::new(),
        top: Vec::new(),
    };
    for d in ast.definitions {
        let id = arena.add(d, None);
        arena.top.push(id);
    }
    arena.resolve_constructs();
    let captures = compute_captures(&arena);

    // Output order: each top-level definition followed by its hoisted
    // descendants, depth first.
    let mut order = Vec::new();
    fn walk(arena: &Arena, d: usize, order: &mut Vec<usize>) {
        order.push(d);
        for r in &arena.defs[d].rules {
            for &c in &r.children {
                walk(arena, c, order);
            }
        }
    }
    for &t in &arena.top {
        walk(&arena, t, &mut order);
    }

    let mut final_names: Vec<String> = vec![String::new(); arena.defs.len()];
    let mut taken: HashSet<String> = arena.top.iter().map(|&t| arena.defs[t].name.clone()).collect();
    for &d in &order {
        if arena.defs[d].parent.is_none() {
            final_names[d] = arena.defs[d].name.clone();
            continue;
        }
        let base = arena.defs[d].name.clone();
        let mut name = base.clone();
        let mut k = 2;
        while taken.contains(&name) {
            name = format!("{base}${k}");
            k += 1;
        }
        taken.insert(name.clone());
        final_names[d] = name;
    }

    // Capture types, parents first (order is parent-before-child).
    let mut cap_types: Vec<HashMap<String, SemType>> = vec![HashMap::new(); arena.defs.len()];
    for &d in &order {
        let Some((pd, pr)) = arena.defs[d].parent else {
            continue;
        };
        let parent = &arena.defs[pd];
        let prule = &parent.rules[pr];
        let mut formal_types: HashMap<String, SemType> = HashMap::new();
        for elem in &prule.src.pattern {
            if let Some(decl) = parent.signals.iter().find(|s| s.name == elem.signal) {
                for (f, t) in elem.formals.iter().zip(&decl.params) {
                    formal_types.insert(f.clone(), *t);
                }
            }
        }
        let ptypes = cap_types[pd].clone();
        let known = |x: &str| formal_types.get(x).or_else(|| ptypes.get(x)).copied();
        let body: Vec<Instr> = prule
            .body
            .iter()
            .map(|b| match b {
                BodyItem::Instr(i) => i.clone(),
                BodyItem::Construct { .. } => Instr::Construct {
                    def: String::new(),
                    ctor: String::new(),
                },
            })
            .collect();
        let stores = infer_store_types(&body, &known);
        let mut types = HashMap::new();
        for c in &captures.caps[d] {
            let t = formal_types
                .get(c)
                .or_else(|| stores.get(c))
                .or_else(|| ptypes.get(c))
                .copied()
                .unwrap_or(SemType::Int);
            types.insert(c.clone(), t);
        }
        cap_types[d] = types;
    }

    let ctor_name = |d: usize, c: &str| -> String {
        if captures.caps[d].is_empty() {
            c.to_string()
        } else {
            format!("{CTOR_PREFIX}{c}")
        }
    };

    let mut definitions = Vec::new();
    for &d in &order {
        let node = &arena.defs[d];
        let caps = &captures.caps[d];
        let types = &cap_types[d];
        let temp_caps: Vec<String> = caps
            .iter()
            .filter(|c| {
                (0..node.rules.len()).any(|r| !arena.is_ctor_rule(d, r) && captures.rule_free[d][r].contains(*c))
            })
            .cloned()
            .collect();
        let has_temp = !temp_caps.is_empty();

        let mut out = Definition::new(final_names[d].clone());
        for s in &node.signals {
            let mut s = s.clone();
            if s.is_constructor && !caps.is_empty() {
                s.name = ctor_name(d, &s.name);
                s.params.extend(caps.iter().map(|c| types[c]));
            }
            out.signals.push(s);
        }
        if has_temp {
            out.signals.push(SignalDecl::new(
                TMP_SIGNAL,
                temp_caps.iter().map(|c| types[c]).collect(),
            ));
        }

        let temp_emit = |names: &[String]| -> Vec<Instr> {
            let mut v = vec![Instr::LoadSignal(TMP_SIGNAL.into())];
            v.extend(names.iter().map(|n| Instr::Load(n.clone())));
            v.push(Instr::Emit(names.len()));
            v
        };

        let mut rules = Vec::new();
        let mut last_ctor = None;
        for (ri, rnode) in node.rules.iter().enumerate() {
            let bound = arena.bound(d, ri);
            let is_ctor = arena.is_ctor_rule(d, ri);
            let free = &captures.rule_free[d][ri];
            // Name under which capture `c` is bound in this rule.
            let fresh = |c: &str| {
                if bound.contains(c) {
                    format!("$cap_{c}")
                } else {
                    c.to_string()
                }
            };
            let mut cap_names: HashMap<String, String> = HashMap::new();
            let mut pattern: Vec<PatternElem> = rnode.src.pattern.clone();
            let mut prefix = Vec::new();
            if is_ctor && !caps.is_empty() {
                last_ctor = Some(ri);
                pattern[0].signal = ctor_name(d, &pattern[0].signal);
                for c in caps {
                    let n = fresh(c);
                    pattern[0].formals.push(n.clone());
                    cap_names.insert(c.clone(), n);
                }
                if has_temp {
                    let names: Vec<String> = temp_caps.iter().map(|c| cap_names[c].clone()).collect();
                    prefix = temp_emit(&names);
                }
            } else if is_ctor {
                last_ctor = Some(ri);
            } else if has_temp && temp_caps.iter().any(|c| free.contains(c)) {
                let names: Vec<String> = temp_caps.iter().map(|c| fresh(c)).collect();
                for (c, n) in temp_caps.iter().zip(&names) {
                    cap_names.insert(c.clone(), n.clone());
                }
                pattern.push(PatternElem {
                    signal: TMP_SIGNAL.into(),
                    formals: names.clone(),
                });
                prefix = temp_emit(&names);
            }

            let mut body = prefix;
            for item in &rnode.body {
                match item {
                    BodyItem::Instr(i) => body.push(i.clone()),
                    BodyItem::Construct {
                        target: Some(t), ctor, ..
                    } => {
                        let own_child = arena.defs[*t].parent == Some((d, ri));
                        for v in &captures.caps[*t] {
                            let name = if own_child && bound.contains(v) {
                                v.clone()
                            } else {
                                cap_names.get(v).cloned().unwrap_or_else(|| v.clone())
                            };
                            body.push(Instr::Load(name));
                        }
                        body.push(Instr::Construct {
                            def: final_names[*t].clone(),
                            ctor: ctor_name(*t, ctor),
                        });
                    }
                    BodyItem::Construct {
                        target: None,
                        def,
                        ctor,
                    } => body.push(Instr::Construct {
                        def: if def.is_empty() { ctor.clone() } else { def.clone() },
                        ctor: ctor.clone(),
                    }),
                }
            }

            let mut rule = TransitionRule {
                pattern,
                body,
                worker: rnode.src.worker.clone(),
                kind: RuleKind::Computation,
                origin: rnode.src.origin,
            };
            rule.kind = match rnode.src.kind {
                Some(k) => k,
                None if rule.has_duplication_shape() => RuleKind::Duplication,
                None => RuleKind::Computation,
            };
            rules.push(rule);
        }
        if has_temp {
            let mut body = temp_emit(&temp_caps);
            body.extend(temp_emit(&temp_caps));
            body.push(Instr::Finish);
            let dup = TransitionRule {
                pattern: vec![PatternElem {
                    signal: TMP_SIGNAL.into(),
                    formals: temp_caps.clone(),
                }],
                body,
                worker: None,
                kind: RuleKind::Duplication,
                origin: None,
            };
            let at = last_ctor.map_or(0, |i| i + 1);
            rules.insert(at, dup);
        }
        out.rules = rules;
        definitions.push(out);
    }

    let mut primordials = ast.primordials;
    if primordials.is_empty() {
        primordials.push(PrimordialSignal {
            name: OUTPUT.into(),
            arity: 1,
        });
    }
    let entry = ast.entry.or_else(|| {
        let defs = &arena.defs;
        let ctors: Vec<SignalRef> = arena
            .top
            .iter()
            .flat_map(|&t| {
                defs[t]
                    .signals
                    .iter()
                    .filter(|s| s.is_constructor)
                    .map(move |s| SignalRef {
                        def: defs[t].name.clone(),
                        signal: s.name.clone(),
                    })
            })
            .collect();
        match ctors.as_slice() {
            [only] => Some(only.clone()),
            _ => None,
        }
    });
    Program {
        primordials,
        entry,
        workers: ast.workers,
        definitions,
    }
}
