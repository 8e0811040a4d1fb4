//! The worker-based abstract machine.
//!
//! A run starts with every worker idle and one message on the entry
//! constructor. At each scheduling instant the policy assigns enabled
//! matches to idle workers; a firing removes its messages, occupies its
//! worker for the rule's cost in virtual time, and then executes its body
//! to `finish` in one go, adding the emitted and constructed messages.

mod exec;
pub mod gate;
mod image;
mod matching;
mod run;
mod state;
mod trace;
mod value;

pub use exec::{complete, fire, step, FireError, RuntimeError, StepEvent};
pub use image::{Image, LinkCost, LoadError, Op, OrigRule, OrigSignal, RuleInfo, SigInfo, DEFAULT_WORKER};
pub use matching::{binding_orders, enabled_matches, rule_matches, Match};
pub use run::{complete_logged, run, run_image, RunConfig, RunError, RunResult};
pub use state::{Env, Firing, LocalState, Message, State, WorkerState};
pub use trace::{format_event, Audit, EventKind, Trace, TraceEvent, Violation};
pub use value::{parse_args, ArgError, Inst, MsgId, SigId, SignalValue, Value};
