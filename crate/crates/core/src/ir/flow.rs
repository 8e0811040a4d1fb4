//! Static stack-shape analysis of rule bodies.

use std::collections::HashMap;

use super::Instr;

/// Result of analyzing one body.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BodyShape {
    pub max_stack: usize,
    pub issues: Vec<FlowIssue>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowIssue {
    UnknownLabel {
        at: usize,
        label: String,
    },
    DuplicateLabel {
        at: usize,
        label: String,
    },
    StackUnderflow {
        at: usize,
    },
    InconsistentStack {
        at: usize,
    },
    MissingFinish {
        at: usize,
    },
    /// An EMIT whose target was pushed by a visible `load.signal`.
    StaticArity {
        at: usize,
        signal: String,
        expected: usize,
        found: usize,
    },
}

/// Abstract slot: `Some(f)` when the value is known to be `load.signal f`.
type Slot = Option<String>;

/// Walks every control path of `body`, starting from an empty stack.
/// `signal_arity` resolves `load.signal` names, `ctor_arity` resolves
/// `construct` targets; unresolved names are reported elsewhere.
pub fn analyze_body(
    body: &[Instr],
    signal_arity: &dyn Fn(&str) -> Option<usize>,
    ctor_arity: &dyn Fn(&str, &str) -> Option<usize>,
) -> BodyShape {
    let mut shape = BodyShape::default();
    let mut labels: HashMap<&str, usize> = HashMap::new();
    for (i, ins) in body.iter().enumerate() {
        if let Instr::Label(l) = ins {
            if labels.insert(l.as_str(), i).is_some() {
                shape.issues.push(FlowIssue::DuplicateLabel {
                    at: i,
                    label: l.clone(),
                });
            }
        }
    }

    let mut seen: Vec<Option<Vec<Slot>>> = vec![None; body.len() + 1];
    let mut work: Vec<(usize, Vec<Slot>)> = vec![(0, Vec::new())];
    let mut reported_inconsistent = vec![false; body.len() + 1];

    while let Some((pc, mut stack)) = work.pop() {
        if let Some(prev) = &seen[pc] {
            if prev.len() != stack.len() {
                if !reported_inconsistent[pc] {
                    reported_inconsistent[pc] = true;
                    shape.issues.push(FlowIssue::InconsistentStack { at: pc });
                }
                continue;
            }
            let merged: Vec<Slot> = prev
                .iter()
                .zip(&stack)
                .map(|(a, b)| if a == b { a.clone() } else { None })
                .collect();
            if &merged == prev {
                continue;
            }
            stack = merged;
        }
        seen[pc] = Some(stack.clone());
        shape.max_stack = shape.max_stack.max(stack.len());

        let Some(ins) = body.get(pc) else {
            shape.issues.push(FlowIssue::MissingFinish { at: pc });
            continue;
        };

        let pop = |stack: &mut Vec<Slot>, n: usize, issues: &mut Vec<FlowIssue>| -> bool {
            if stack.len() < n {
                issues.push(FlowIssue::StackUnderflow { at: pc });
                false
            } else {
                stack.truncate(stack.len() - n);
                true
            }
        };

        let mut next = vec![pc + 1];
        match ins {
            Instr::Label(_) => {}
            Instr::LoadConst(_) | Instr::Load(_) => stack.push(None),
            Instr::LoadSignal(f) => stack.push(Some(f.clone())),
            Instr::Store(_) => {
                if !pop(&mut stack, 1, &mut shape.issues) {
                    continue;
                }
            }
            Instr::Emit(n) => {
                if stack.len() < n + 1 {
                    shape.issues.push(FlowIssue::StackUnderflow { at: pc });
                    continue;
                }
                if let Some(f) = &stack[stack.len() - n - 1] {
                    if let Some(expected) = signal_arity(f) {
                        if expected != *n {
                            shape.issues.push(FlowIssue::StaticArity {
                                at: pc,
                                signal: f.clone(),
                                expected,
                                found: *n,
                            });
                        }
                    }
                }
                stack.truncate(stack.len() - n - 1);
            }
            Instr::Construct { def, ctor } => {
                let n = ctor_arity(def, ctor).unwrap_or(0);
                if !pop(&mut stack, n, &mut shape.issues) {
                    continue;
                }
            }
            Instr::Finish => next.clear(),
            Instr::Bin(_) | Instr::ArrMerge => {
                if !pop(&mut stack, 2, &mut shape.issues) {
                    continue;
                }
                stack.push(None);
            }
            Instr::ArrLen => {
                if !pop(&mut stack, 1, &mut shape.issues) {
                    continue;
                }
                stack.push(None);
            }
            Instr::ArrSlice => {
                if !pop(&mut stack, 3, &mut shape.issues) {
                    continue;
                }
                stack.push(None);
            }
            Instr::Br(l) | Instr::Brz(l) => {
                if matches!(ins, Instr::Brz(_)) && !pop(&mut stack, 1, &mut shape.issues) {
                    continue;
                }
                match labels.get(l.as_str()) {
                    Some(&t) => {
                        if matches!(ins, Instr::Br(_)) {
                            next = vec![t];
                        } else {
                            next.push(t);
                        }
                    }
                    None => {
                        shape.issues.push(FlowIssue::UnknownLabel {
                            at: pc,
                            label: l.clone(),
                        });
                        if matches!(ins, Instr::Br(_)) {
                            next.clear();
                        }
                    }
                }
            }
        }
        shape.max_stack = shape.max_stack.max(stack.len());
        for n in next {
            work.push((n, stack.clone()));
        }
    }
    shape
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arity(f: &str) -> Option<usize> {
        match f {
            "one" => Some(1),
            _ => None,
        }
    }

    fn ctor(_: &str, _: &str) -> Option<usize> {
        Some(0)
    }

    #[test]
    fn straight_line_emit() {
        let body = vec![
            Instr::LoadSignal("one".into()),
            Instr::LoadConst(super::super::Const::Int(3)),
            Instr::Emit(1),
            Instr::Finish,
        ];
        let s = analyze_body(&body, &arity, &ctor);
        assert!(s.issues.is_empty(), "{:?}", s.issues);
        assert_eq!(s.max_stack, 2);
    }

    #[test]
    fn static_arity_and_missing_finish() {
        let body = vec![Instr::LoadSignal("one".into()), Instr::Emit(0)];
        let s = analyze_body(&body, &arity, &ctor);
        assert!(s.issues.contains(&FlowIssue::StaticArity {
            at: 1,
            signal: "one".into(),
            expected: 1,
            found: 0
        }));
        assert!(s.issues.contains(&FlowIssue::MissingFinish { at: 2 }));
    }

    #[test]
    fn branch_paths_all_checked() {
        let body = vec![
            Instr::LoadConst(super::super::Const::Bool(true)),
            Instr::Brz("L".into()),
            Instr::Finish,
            Instr::Label("L".into()),
        ];
        let s = analyze_body(&body, &arity, &ctor);
        assert_eq!(s.issues, vec![FlowIssue::MissingFinish { at: 4 }]);
    }

    #[test]
    fn unknown_label_and_underflow() {
        let body = vec![Instr::Br("nowhere".into())];
        let s = analyze_body(&body, &arity, &ctor);
        assert_eq!(
            s.issues,
            vec![FlowIssue::UnknownLabel {
                at: 0,
                label: "nowhere".into()
            }]
        );
        let s = analyze_body(&[Instr::Bin(super::super::BinOp::Add), Instr::Finish], &arity, &ctor);
        assert_eq!(s.issues, vec![FlowIssue::StackUnderflow { at: 0 }]);
    }
}
