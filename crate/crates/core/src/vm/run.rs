use std::collections::BTreeSet;

use crate::ir::{Program, RuleKind};
use crate::machine::{Cost, MachineDescription};
use crate::sched::{ChooseCtx, Policy, PolicyError};

use super::exec::{complete, fire, FireError, RuntimeError, StepEvent};
use super::gate::{quiescent, schedulable};
use super::image::{Image, LoadError};
use super::matching::Match;
use super::state::{Message, State, WorkerState};
use super::trace::{Audit, EventKind, Trace, TraceEvent, Violation};
use super::value::{ArgError, Value};

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Abort once the trace holds this many events.
    pub max_events: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { max_events: 1_000_000 }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outputs: Vec<Vec<Value>>,
    pub trace: Trace,
    pub final_env: Vec<Message>,
    /// Final value of virtual `now`.
    pub makespan: Cost,
    /// Whether the run stopped in a quiescent state.
    pub quiescent: bool,
    pub state: State,
}

impl RunResult {
    /// Number of printed trace events.
    pub fn event_count(&self) -> usize {
        self.trace.visible().count()
    }

    pub fn audit(&self, img: &Image) -> Vec<Violation> {
        let ids: BTreeSet<u64> = self.final_env.iter().map(|m| m.id).collect();
        Audit {
            img,
            trace: &self.trace,
            final_env: &ids,
        }
        .all()
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("bad program arguments: {0}")]
    Args(#[from] ArgError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("runtime fault at t={time} on {worker} in rule {rule}: {error}")]
    Fault {
        error: RuntimeError,
        time: Cost,
        worker: String,
        rule: String,
        trace: Box<Trace>,
    },
    #[error("no termination after {events} events")]
    NonTermination { events: usize, trace: Box<Trace> },
    #[error("scheduler produced an invalid assignment: {0}")]
    Scheduler(String),
    #[error(transparent)]
    Fire(#[from] FireError),
}

/// Loads `program` (with `machine` when it is mapped) and runs it.
pub fn run(
    program: &Program,
    machine: Option<&MachineDescription>,
    policy: &mut dyn Policy,
    args: &[Value],
    cfg: &RunConfig,
) -> Result<RunResult, RunError> {
    let img = Image::load(program, machine)?;
    run_image(&img, policy, args, cfg)
}

/// Appends the fire event of the firing just started on `w`.
fn log_fire(state: &State, img: &Image, w: usize, trace: &mut Trace) {
    let WorkerState::Busy(f) = &state.workers[w] else {
        return;
    };
    let transfer = img.rules[f.rule].kind == RuleKind::Transfer;
    trace.events.push(TraceEvent {
        time: state.now,
        worker: w,
        kind: if transfer { EventKind::Transfer } else { EventKind::Fire },
        rule: f.rule,
        instance: f.local.instance,
        words: transfer.then_some(f.words),
        signal: None,
        consumed: f.consumed.clone(),
        produced: None,
        fresh: state.fresh,
    });
}

/// Completes the firing on `w`, logging its effects.
pub fn complete_logged(state: &mut State, img: &Image, w: usize, trace: &mut Trace) -> Result<(), RunError> {
    let WorkerState::Busy(f) = &state.workers[w] else {
        return Ok(());
    };
    let (rule, inst) = (f.rule, f.local.instance);
    let fault = |error, state: &State, trace: &Trace| RunError::Fault {
        error,
        time: state.now,
        worker: img.worker_name(w),
        rule: img.rules[rule].rref.to_string(),
        trace: Box::new(trace.clone()),
    };
    let events = complete(state, img, w).map_err(|e| fault(e, state, trace))?;
    let mut fresh = state.fresh
        - events
            .iter()
            .filter(|e| matches!(e, StepEvent::Construct { .. }))
            .count() as u64;
    for e in events {
        let (kind, signal, produced) = match e {
            StepEvent::None => continue,
            StepEvent::LoadSignal(s) => (EventKind::Load, Some(s), None),
            StepEvent::Emit { signal, msg } => (EventKind::Emit, Some(signal), Some(msg)),
            StepEvent::Construct { signal, msg } => {
                fresh += 1;
                (EventKind::Construct, Some(signal), Some(msg))
            }
            StepEvent::Finish => (EventKind::Finish, None, None),
        };
        trace.events.push(TraceEvent {
            time: state.now,
            worker: w,
            kind,
            rule,
            instance: inst,
            words: None,
            signal,
            consumed: Vec::new(),
            produced,
            fresh,
        });
    }
    Ok(())
}

pub fn run_image(img: &Image, policy: &mut dyn Policy, args: &[Value], cfg: &RunConfig) -> Result<RunResult, RunError> {
    policy.prepare(img)?;
    let mut state = State::initial(img, args)?;
    let mut trace = Trace {
        events: Vec::new(),
        initial: state.env.iter().map(|m| (m.id, m.signal)).collect(),
    };
    loop {
        let due: Vec<usize> = (0..state.workers.len())
            .filter(|w| matches!(&state.workers[*w], WorkerState::Busy(f) if f.until <= state.now))
            .collect();
        for w in due {
            complete_logged(&mut state, img, w, &mut trace)?;
        }
        if trace.events.len() > cfg.max_events {
            return Err(RunError::NonTermination {
                events: trace.events.len(),
                trace: Box::new(trace),
            });
        }

        let enabled = schedulable(&state, img);
        let assignments = {
            let ctx = ChooseCtx { img, state: &state };
            policy.choose(&ctx, &enabled)
        };
        check_assignments(img, &state, &enabled, &assignments)?;
        for (w, m) in &assignments {
            fire(&mut state, img, m, None, *w)?;
            log_fire(&state, img, *w, &mut trace);
        }
        if !assignments.is_empty() {
            continue;
        }
        match state.next_completion() {
            Some(t) => state.now = t.max(state.now),
            None => break,
        }
    }
    let quiescent = quiescent(&state, img);
    Ok(RunResult {
        outputs: state.outputs.clone(),
        final_env: state.env.iter().cloned().collect(),
        makespan: state.now,
        quiescent,
        trace,
        state,
    })
}

fn check_assignments(img: &Image, state: &State, enabled: &[Match], a: &[(usize, Match)]) -> Result<(), RunError> {
    let mut used = BTreeSet::new();
    let mut workers = BTreeSet::new();
    for (w, m) in a {
        if !enabled.contains(m) {
            return Err(RunError::Scheduler(format!(
                "match of rule {} is not enabled",
                img.rules[m.rule].rref
            )));
        }
        if img.rules[m.rule].worker != *w || !state.idle(*w) || !workers.insert(*w) {
            return Err(RunError::Scheduler(format!(
                "worker {} is not eligible",
                img.worker_name(*w)
            )));
        }
        if m.overlaps(&used) {
            return Err(RunError::Scheduler("assigned matches share messages".into()));
        }
        used.extend(m.msgs.iter().copied());
    }
    Ok(())
}
