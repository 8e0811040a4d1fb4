use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::ir::SemType;
use crate::machine::Cost;

use super::image::Image;
use super::value::{ArgError, Inst, MsgId, SigId, SignalValue, Value};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Message {
    pub id: MsgId,
    pub signal: SignalValue,
    pub args: Arc<[Value]>,
    /// Worker whose firing emitted it; `None` for the entry message.
    pub producer: Option<usize>,
}

impl Message {
    pub fn words(&self) -> u64 {
        self.args.iter().map(Value::words).sum()
    }
}

/// Multiset of pending messages, indexed by `(signal, instance)`.
#[derive(Debug, Clone, Default)]
pub struct Env {
    msgs: BTreeMap<MsgId, Message>,
    index: BTreeMap<(SigId, Inst), BTreeSet<MsgId>>,
    next_id: MsgId,
}

impl Env {
    pub fn add(&mut self, signal: SignalValue, args: Vec<Value>, producer: Option<usize>) -> MsgId {
        let id = self.next_id;
        self.next_id += 1;
        self.index
            .entry((signal.signal, signal.instance))
            .or_default()
            .insert(id);
        self.msgs.insert(
            id,
            Message {
                id,
                signal,
                args: args.into(),
                producer,
            },
        );
        id
    }

    pub fn remove(&mut self, id: MsgId) -> Option<Message> {
        let m = self.msgs.remove(&id)?;
        let key = (m.signal.signal, m.signal.instance);
        if let Some(set) = self.index.get_mut(&key) {
            set.remove(&id);
            if set.is_empty() {
                self.index.remove(&key);
            }
        }
        Some(m)
    }

    pub fn get(&self, id: MsgId) -> Option<&Message> {
        self.msgs.get(&id)
    }

    pub fn contains(&self, id: MsgId) -> bool {
        self.msgs.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.msgs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.msgs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Message> {
        self.msgs.values()
    }

    /// Ids of messages on `signal` in instance `inst`, ascending.
    pub fn on(&self, signal: SigId, inst: Inst) -> impl Iterator<Item = MsgId> + '_ {
        self.index
            .get(&(signal, inst))
            .into_iter()
            .flat_map(|s| s.iter().copied())
    }

    /// Instances holding at least one message on `signal`.
    pub fn instances_of(&self, signal: SigId) -> impl Iterator<Item = Inst> + '_ {
        self.index
            .range((signal, 0)..=(signal, Inst::MAX))
            .map(|((_, i), _)| *i)
    }

    pub fn next_id(&self) -> MsgId {
        self.next_id
    }
}

/// `(pc, θ, stack, locals)` of one in-flight firing.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LocalState {
    pub pc: usize,
    pub instance: Inst,
    pub stack: Vec<Value>,
    pub locals: Vec<Option<Value>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Firing {
    pub rule: usize,
    pub local: LocalState,
    pub consumed: Vec<MsgId>,
    pub start: Cost,
    pub until: Cost,
    pub words: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum WorkerState {
    #[default]
    Idle,
    Busy(Box<Firing>),
}

impl WorkerState {
    pub fn is_idle(&self) -> bool {
        matches!(self, WorkerState::Idle)
    }
}

#[derive(Debug, Clone)]
pub struct State {
    pub env: Env,
    pub fresh: Inst,
    pub now: Cost,
    pub workers: Vec<WorkerState>,
    /// Argument vectors emitted to `OUTPUT`, in emission order.
    pub outputs: Vec<Vec<Value>>,
}

impl State {
    /// All workers idle, `fresh = 1`, `now = 0`, and one entry message in
    /// instance 0. Signal-typed entry parameters receive `OUTPUT`; the rest
    /// take `args` in order.
    pub fn initial(img: &Image, args: &[Value]) -> Result<State, ArgError> {
        let params = &img.sigs[img.entry].params;
        let expected = params.iter().filter(|t| **t != SemType::Signal).count();
        if expected != args.len() {
            return Err(ArgError::Count {
                expected,
                found: args.len(),
            });
        }
        let mut it = args.iter();
        let mut vals = Vec::new();
        for (index, t) in params.iter().enumerate() {
            if *t == SemType::Signal {
                let out = img.output.ok_or(ArgError::Type {
                    index,
                    expected: "sig",
                    found: "nothing (no OUTPUT primordial)",
                })?;
                vals.push(Value::Sig(SignalValue {
                    signal: out,
                    instance: 0,
                }));
            } else {
                let v = it.next().unwrap();
                if v.sem_type() != *t {
                    return Err(ArgError::Type {
                        index,
                        expected: t.keyword(),
                        found: v.type_name(),
                    });
                }
                vals.push(v.clone());
            }
        }
        let mut env = Env::default();
        env.add(
            SignalValue {
                signal: img.entry,
                instance: 0,
            },
            vals,
            None,
        );
        Ok(State {
            env,
            fresh: 1,
            now: 0,
            workers: vec![WorkerState::Idle; img.workers.len()],
            outputs: Vec::new(),
        })
    }

    pub fn all_idle(&self) -> bool {
        self.workers.iter().all(WorkerState::is_idle)
    }

    pub fn idle(&self, w: usize) -> bool {
        self.workers[w].is_idle()
    }

    /// Earliest completion among busy workers.
    pub fn next_completion(&self) -> Option<Cost> {
        self.workers
            .iter()
            .filter_map(|w| match w {
                WorkerState::Busy(f) => Some(f.until),
                WorkerState::Idle => None,
            })
            .min()
    }
}
