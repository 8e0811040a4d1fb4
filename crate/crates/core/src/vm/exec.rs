//! The firing and instruction-step transitions.

use std::sync::Arc;

use crate::ir::BinOp;

use super::image::{Image, Op};
use super::matching::Match;
use super::state::{Firing, LocalState, State, WorkerState};
use super::value::{MsgId, SignalValue, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FireError {
    #[error("worker `{0}` is busy")]
    WorkerBusy(String),
    #[error("rule `{rule}` is not tagged with worker `{worker}`")]
    WrongWorker { rule: String, worker: String },
    #[error("matched messages are no longer present")]
    StaleMatch,
    #[error("messages do not fit the rule's pattern")]
    BadMatch,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuntimeError {
    #[error("emit to `{signal}` with {found} arguments, expected {expected}")]
    ArityMismatch {
        signal: String,
        expected: usize,
        found: usize,
    },
    #[error("type fault: {0}")]
    TypeFault(String),
    #[error("stack underflow")]
    StackUnderflow,
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("slice [{lo},{hi}) out of bounds for length {len}")]
    SliceBounds { len: usize, lo: i64, hi: i64 },
    #[error("rule on `{worker}` emitted to non-local signal `{signal}`")]
    LocalityViolation { signal: String, worker: String },
    #[error("local `{0}` read before being stored")]
    UnsetLocal(String),
    #[error("worker is idle")]
    NotBusy,
    #[error("firing is not due until t={0}")]
    NotReady(u64),
}

/// Observable effect of one instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepEvent {
    None,
    LoadSignal(SignalValue),
    Emit { signal: SignalValue, msg: MsgId },
    Construct { signal: SignalValue, msg: MsgId },
    Finish,
}

/// Consumes `m`'s messages and starts `m.rule` on `worker`. `order`, when
/// given, is a permutation of `m.msgs` fixing which message binds which
/// pattern position.
pub fn fire(
    state: &mut State,
    img: &Image,
    m: &Match,
    order: Option<&[MsgId]>,
    worker: usize,
) -> Result<(), FireError> {
    let rule = &img.rules[m.rule];
    if rule.worker != worker {
        return Err(FireError::WrongWorker {
            rule: rule.rref.to_string(),
            worker: img.worker_name(worker),
        });
    }
    if !state.idle(worker) {
        return Err(FireError::WorkerBusy(img.worker_name(worker)));
    }
    let ids = order.unwrap_or(&m.msgs);
    if ids.len() != rule.pattern.len() {
        return Err(FireError::BadMatch);
    }
    for (i, id) in ids.iter().enumerate() {
        let msg = state.env.get(*id).ok_or(FireError::StaleMatch)?;
        if msg.signal.signal != rule.pattern[i] || msg.signal.instance != m.instance {
            return Err(FireError::BadMatch);
        }
        if ids[..i].contains(id) {
            return Err(FireError::BadMatch);
        }
    }
    let mut stack = Vec::with_capacity(rule.max_stack);
    let mut words = 0;
    for id in ids {
        let msg = state.env.remove(*id).unwrap();
        words += msg.words();
        stack.extend(msg.args.iter().cloned());
    }
    let cost = match rule.link {
        Some(l) => {
            let c = img.link_costs[&l];
            c.latency + c.per_word * words
        }
        None => rule.cost,
    };
    state.workers[worker] = WorkerState::Busy(Box::new(Firing {
        rule: m.rule,
        local: LocalState {
            pc: 0,
            instance: m.instance,
            stack,
            locals: vec![None; rule.slot_names.len()],
        },
        consumed: ids.to_vec(),
        start: state.now,
        until: state.now + cost,
        words,
    }));
    Ok(())
}

fn pop(stack: &mut Vec<Value>) -> Result<Value, RuntimeError> {
    stack.pop().ok_or(RuntimeError::StackUnderflow)
}

fn pop_int(stack: &mut Vec<Value>, what: &str) -> Result<i64, RuntimeError> {
    match pop(stack)? {
        Value::Int(n) => Ok(n),
        v => Err(RuntimeError::TypeFault(format!(
            "{what} expects int, got {}",
            v.type_name()
        ))),
    }
}

fn pop_arr(stack: &mut Vec<Value>, what: &str) -> Result<Arc<[i64]>, RuntimeError> {
    match pop(stack)? {
        Value::Arr(a) => Ok(a),
        v => Err(RuntimeError::TypeFault(format!(
            "{what} expects arr, got {}",
            v.type_name()
        ))),
    }
}

fn binop(op: BinOp, a: Value, b: Value) -> Result<Value, RuntimeError> {
    use BinOp::*;
    match (op, &a, &b) {
        (Eq, _, _) if a.sem_type() == b.sem_type() => Ok(Value::Bool(a == b)),
        (Ne, _, _) if a.sem_type() == b.sem_type() => Ok(Value::Bool(a != b)),
        (_, Value::Int(x), Value::Int(y)) => {
            let (x, y) = (*x, *y);
            Ok(match op {
                Add => Value::Int(x.checked_add(y).ok_or(RuntimeError::Overflow)?),
                Sub => Value::Int(x.checked_sub(y).ok_or(RuntimeError::Overflow)?),
                Mul => Value::Int(x.checked_mul(y).ok_or(RuntimeError::Overflow)?),
                Div if y == 0 => return Err(RuntimeError::DivisionByZero),
                Div => Value::Int(x.checked_div(y).ok_or(RuntimeError::Overflow)?),
                Lt => Value::Bool(x < y),
                Le => Value::Bool(x <= y),
                Gt => Value::Bool(x > y),
                Ge => Value::Bool(x >= y),
                Eq | Ne => unreachable!(),
            })
        }
        _ => Err(RuntimeError::TypeFault(format!(
            "{} on {} and {}",
            op.mnemonic(),
            a.type_name(),
            b.type_name()
        ))),
    }
}

fn merge_sorted(a: &[i64], b: &[i64]) -> Vec<i64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Executes the next instruction of `worker`'s firing.
pub fn step(state: &mut State, img: &Image, worker: usize) -> Result<StepEvent, RuntimeError> {
    let now = state.now;
    let WorkerState::Busy(f) = &mut state.workers[worker] else {
        return Err(RuntimeError::NotBusy);
    };
    if f.until > now {
        return Err(RuntimeError::NotReady(f.until));
    }
    let rule = &img.rules[f.rule];
    let l = &mut f.local;
    let op = &rule.ops[l.pc];
    l.pc += 1;
    let st = &mut l.stack;
    match op {
        Op::Const(v) => st.push(v.clone()),
        Op::Load(i) => {
            let v = l.locals[*i]
                .clone()
                .ok_or_else(|| RuntimeError::UnsetLocal(rule.slot_names[*i].clone()))?;
            st.push(v);
        }
        Op::Store(i) => l.locals[*i] = Some(pop(st)?),
        Op::LoadSignal(s) => {
            let v = SignalValue {
                signal: *s,
                instance: if img.is_primordial(*s) { 0 } else { l.instance },
            };
            st.push(Value::Sig(v));
            return Ok(StepEvent::LoadSignal(v));
        }
        Op::Emit(n) => {
            let n = *n;
            if st.len() < n + 1 {
                return Err(RuntimeError::StackUnderflow);
            }
            let target = match &st[st.len() - 1 - n] {
                Value::Sig(s) => *s,
                v => {
                    return Err(RuntimeError::TypeFault(format!(
                        "emit target is {}, not a signal",
                        v.type_name()
                    )))
                }
            };
            let info = &img.sigs[target.signal];
            if info.arity != n {
                return Err(RuntimeError::ArityMismatch {
                    signal: img.signal_name(target.signal),
                    expected: info.arity,
                    found: n,
                });
            }
            let mut args = st.split_off(st.len() - n);
            st.pop();
            for (i, (v, t)) in args.iter().zip(&info.params).enumerate() {
                if v.sem_type() != *t {
                    return Err(RuntimeError::TypeFault(format!(
                        "argument {i} of `{}` expects {}, got {}",
                        img.signal_name(target.signal),
                        t.keyword(),
                        v.type_name()
                    )));
                }
            }
            if let Some((_, dst)) = rule.link {
                for v in args.iter_mut() {
                    if let Value::Sig(s) = v {
                        if img.sigs[s.signal].proc.is_some() {
                            if let Some(c) = img.copy_on(img.sigs[s.signal].osig, dst) {
                                s.signal = c;
                            }
                        }
                    }
                }
            } else if img.mapped {
                check_local(img, rule.proc, target.signal, worker)?;
            }
            if Some(target.signal) == img.output {
                state.outputs.push(args.clone());
            }
            let msg = state.env.add(target, args, Some(worker));
            return Ok(StepEvent::Emit { signal: target, msg });
        }
        Op::Construct(s) => {
            let info = &img.sigs[*s];
            if st.len() < info.arity {
                return Err(RuntimeError::StackUnderflow);
            }
            let args = st.split_off(st.len() - info.arity);
            for (i, (v, t)) in args.iter().zip(&info.params).enumerate() {
                if v.sem_type() != *t {
                    return Err(RuntimeError::TypeFault(format!(
                        "constructor argument {i} expects {}, got {}",
                        t.keyword(),
                        v.type_name()
                    )));
                }
            }
            if img.mapped {
                check_local(img, rule.proc, *s, worker)?;
            }
            let signal = SignalValue {
                signal: *s,
                instance: state.fresh,
            };
            state.fresh += 1;
            let msg = state.env.add(signal, args, Some(worker));
            return Ok(StepEvent::Construct { signal, msg });
        }
        Op::Finish => {
            state.workers[worker] = WorkerState::Idle;
            return Ok(StepEvent::Finish);
        }
        Op::Bin(b) => {
            let y = pop(st)?;
            let x = pop(st)?;
            st.push(binop(*b, x, y)?);
        }
        Op::Br(t) => l.pc = *t,
        Op::Brz(t) => match pop(st)? {
            Value::Bool(false) => l.pc = *t,
            Value::Bool(true) => {}
            v => {
                return Err(RuntimeError::TypeFault(format!(
                    "brz on {}, expected bool",
                    v.type_name()
                )))
            }
        },
        Op::ArrLen => {
            let a = pop_arr(st, "arr.len")?;
            st.push(Value::Int(a.len() as i64));
        }
        Op::ArrSlice => {
            let hi = pop_int(st, "arr.slice")?;
            let lo = pop_int(st, "arr.slice")?;
            let a = pop_arr(st, "arr.slice")?;
            if lo < 0 || hi < lo || hi as usize > a.len() {
                return Err(RuntimeError::SliceBounds { len: a.len(), lo, hi });
            }
            st.push(Value::arr(&a[lo as usize..hi as usize]));
        }
        Op::ArrMerge => {
            let b = pop_arr(st, "arr.merge")?;
            let a = pop_arr(st, "arr.merge")?;
            st.push(Value::Arr(merge_sorted(&a, &b).into()));
        }
    }
    Ok(StepEvent::None)
}

fn check_local(img: &Image, proc: Option<usize>, target: usize, worker: usize) -> Result<(), RuntimeError> {
    let home = img.sigs[target].proc;
    if home.is_some() && home != proc {
        return Err(RuntimeError::LocalityViolation {
            signal: img.signal_name(target),
            worker: img.worker_name(worker),
        });
    }
    Ok(())
}

/// Steps `worker` until its firing finishes.
pub fn complete(state: &mut State, img: &Image, worker: usize) -> Result<Vec<StepEvent>, RuntimeError> {
    let mut events = Vec::new();
    loop {
        let e = step(state, img, worker)?;
        let done = e == StepEvent::Finish;
        if e != StepEvent::None {
            events.push(e);
        }
        if done {
            return Ok(events);
        }
    }
}
