//! Scheduling policies: which enabled matches fire on which idle workers.

use std::collections::{BTreeSet, VecDeque};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ir::{RuleKind, RuleRef};
use crate::vm::{Image, Match, State};

/// What a policy sees at a scheduling instant.
pub struct ChooseCtx<'a> {
    pub img: &'a Image,
    pub state: &'a State,
}

impl ChooseCtx<'_> {
    pub fn worker_of(&self, m: &Match) -> usize {
        self.img.rules[m.rule].worker
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("priority list names unknown rule `{0}`")]
    UnknownRule(RuleRef),
    #[error("unknown policy `{0}` (expected first, random, priority or steal)")]
    UnknownPolicy(String),
}

pub trait Policy {
    fn name(&self) -> &'static str;

    /// Called once with the image before the run starts.
    fn prepare(&mut self, _img: &Image) -> Result<(), PolicyError> {
        Ok(())
    }

    /// Returns `(worker, match)` pairs drawn from `enabled`: each match on
    /// its rule's worker, that worker idle, messages pairwise disjoint.
    fn choose(&mut self, ctx: &ChooseCtx<'_>, enabled: &[Match]) -> Vec<(usize, Match)>;
}

/// Takes matches in the given order while they fit.
pub fn greedy<'a>(ctx: &ChooseCtx<'_>, ordered: impl IntoIterator<Item = &'a Match>) -> Vec<(usize, Match)> {
    let mut taken = BTreeSet::new();
    let mut used = BTreeSet::new();
    let mut out = Vec::new();
    for m in ordered {
        let w = ctx.worker_of(m);
        if !ctx.state.idle(w) || taken.contains(&w) || m.overlaps(&used) {
            continue;
        }
        taken.insert(w);
        used.extend(m.msgs.iter().copied());
        out.push((w, m.clone()));
    }
    out
}

/// Rule order, then instance, then message ids.
#[derive(Debug, Default)]
pub struct FirstMatch;

impl Policy for FirstMatch {
    fn name(&self) -> &'static str {
        "first"
    }

    fn choose(&mut self, ctx: &ChooseCtx<'_>, enabled: &[Match]) -> Vec<(usize, Match)> {
        let mut v: Vec<&Match> = enabled.iter().collect();
        v.sort();
        greedy(ctx, v)
    }
}

/// Uniformly shuffled order from a seeded generator.
#[derive(Debug)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn choose(&mut self, ctx: &ChooseCtx<'_>, enabled: &[Match]) -> Vec<(usize, Match)> {
        let mut v: Vec<&Match> = enabled.iter().collect();
        v.sort();
        v.shuffle(&mut self.rng);
        greedy(ctx, v)
    }
}

/// Listed rules first, in list order; the rest in source order. A listed
/// original rule also ranks all of its mapped copies.
#[derive(Debug, Default)]
pub struct PriorityPolicy {
    list: Vec<RuleRef>,
    rank: Vec<usize>,
}

impl PriorityPolicy {
    pub fn new(list: Vec<RuleRef>) -> Self {
        PriorityPolicy { list, rank: Vec::new() }
    }

    /// One `def.ruleIdx` per line; blank lines and `#` comments skipped.
    pub fn parse_list(text: &str) -> Result<Vec<RuleRef>, String> {
        text.lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl Policy for PriorityPolicy {
    fn name(&self) -> &'static str {
        "priority"
    }

    fn prepare(&mut self, img: &Image) -> Result<(), PolicyError> {
        let refs = |i: usize| {
            let r = &img.rules[i];
            let orig = r.orig.map(|o| &img.orig_rules[o].rref);
            (r.rref.clone(), orig.cloned())
        };
        for p in &self.list {
            if !(0..img.rules.len()).any(|i| {
                let (own, orig) = refs(i);
                own == *p || orig.as_ref() == Some(p)
            }) {
                return Err(PolicyError::UnknownRule(p.clone()));
            }
        }
        self.rank = (0..img.rules.len())
            .map(|i| {
                let (own, orig) = refs(i);
                self.list
                    .iter()
                    .position(|p| *p == own || (img.mapped && orig.as_ref() == Some(p)))
                    .unwrap_or(self.list.len())
            })
            .collect();
        Ok(())
    }

    fn choose(&mut self, ctx: &ChooseCtx<'_>, enabled: &[Match]) -> Vec<(usize, Match)> {
        let mut v: Vec<&Match> = enabled.iter().collect();
        v.sort_by(|a, b| (self.rank[a.rule], *a).cmp(&(self.rank[b.rule], *b)));
        greedy(ctx, v)
    }
}

/// Per-worker FIFO queues of computation matches. A newly enabled one joins
/// the queue of the worker that emitted its newest message. Each idle worker takes an
/// eligible match from its own queue, else steals a whole match from
/// another queue, else breaks a queued match up by firing one of its own
/// rules on some of that match's messages, else falls back to first-match.
#[derive(Debug, Default)]
pub struct StealingPolicy {
    queues: Vec<VecDeque<Match>>,
    seen: BTreeSet<Match>,
    pub stats: StealStats,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct StealStats {
    pub own: usize,
    pub whole: usize,
    pub decomposed: usize,
    pub fallback: usize,
}

impl StealingPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    fn uncoverer(ctx: &ChooseCtx<'_>, m: &Match) -> usize {
        m.msgs
            .iter()
            .max()
            .and_then(|id| ctx.state.env.get(*id))
            .and_then(|msg| msg.producer)
            .unwrap_or(0)
    }

    /// First live entry of `queue` satisfying `pred`, removed; stale entries
    /// met on the way are dropped.
    fn take(
        queue: &mut VecDeque<Match>,
        live: &BTreeSet<&Match>,
        mut pred: impl FnMut(&Match) -> bool,
    ) -> Option<Match> {
        queue.retain(|m| live.contains(m));
        let pos = queue.iter().position(&mut pred)?;
        queue.remove(pos)
    }
}

impl Policy for StealingPolicy {
    fn name(&self) -> &'static str {
        "steal"
    }

    fn prepare(&mut self, img: &Image) -> Result<(), PolicyError> {
        self.queues = vec![VecDeque::new(); img.workers.len()];
        self.seen.clear();
        Ok(())
    }

    fn choose(&mut self, ctx: &ChooseCtx<'_>, enabled: &[Match]) -> Vec<(usize, Match)> {
        if self.queues.len() != ctx.img.workers.len() {
            self.queues = vec![VecDeque::new(); ctx.img.workers.len()];
        }
        let mut sorted: Vec<&Match> = enabled.iter().collect();
        sorted.sort();
        let live: BTreeSet<&Match> = sorted.iter().copied().collect();
        self.seen.retain(|m| live.contains(m));
        for m in &sorted {
            if ctx.img.rules[m.rule].kind == RuleKind::Computation && self.seen.insert((*m).clone()) {
                let w = Self::uncoverer(ctx, m);
                self.queues[w].push_back((*m).clone());
            }
        }

        let mut used: BTreeSet<u64> = BTreeSet::new();
        let mut out = Vec::new();
        for w in 0..ctx.img.workers.len() {
            if !ctx.state.idle(w) {
                continue;
            }
            let mine = |m: &Match, used: &BTreeSet<u64>| ctx.worker_of(m) == w && !m.overlaps(used);
            let mut pick = Self::take(&mut self.queues[w], &live, |m| mine(m, &used));
            if pick.is_some() {
                self.stats.own += 1;
            }
            if pick.is_none() {
                for v in (0..self.queues.len()).filter(|v| *v != w) {
                    pick = Self::take(&mut self.queues[v], &live, |m| mine(m, &used));
                    if pick.is_some() {
                        self.stats.whole += 1;
                        break;
                    }
                }
            }
            if pick.is_none() {
                'decompose: for v in std::iter::once(w).chain((0..self.queues.len()).filter(|v| *v != w)) {
                    self.queues[v].retain(|m| live.contains(m));
                    for qi in 0..self.queues[v].len() {
                        let host = &self.queues[v][qi];
                        if ctx.worker_of(host) == w || host.overlaps(&used) {
                            continue;
                        }
                        let part = sorted.iter().find(|x| {
                            ctx.worker_of(x) == w
                                && !x.overlaps(&used)
                                && x.msgs.iter().all(|id| host.msgs.contains(id))
                        });
                        if let Some(x) = part {
                            pick = Some((*x).clone());
                            self.queues[v].remove(qi);
                            self.stats.decomposed += 1;
                            break 'decompose;
                        }
                    }
                }
            }
            if pick.is_none() {
                pick = sorted.iter().find(|m| mine(m, &used)).map(|m| (*m).clone());
                if pick.is_some() {
                    self.stats.fallback += 1;
                }
            }
            if let Some(m) = pick {
                used.extend(m.msgs.iter().copied());
                out.push((w, m));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    First,
    Random,
    Priority,
    Steal,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::First,
        PolicyKind::Random,
        PolicyKind::Priority,
        PolicyKind::Steal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::First => "first",
            PolicyKind::Random => "random",
            PolicyKind::Priority => "priority",
            PolicyKind::Steal => "steal",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "first" => PolicyKind::First,
            "random" => PolicyKind::Random,
            "priority" => PolicyKind::Priority,
            "steal" | "stealing" => PolicyKind::Steal,
            _ => return Err(PolicyError::UnknownPolicy(s.to_string())),
        })
    }
}

pub fn make_policy(kind: PolicyKind, seed: u64, priority: Vec<RuleRef>) -> Box<dyn Policy> {
    match kind {
        PolicyKind::First => Box::new(FirstMatch),
        PolicyKind::Random => Box::new(RandomPolicy::new(seed)),
        PolicyKind::Priority => Box::new(PriorityPolicy::new(priority)),
        PolicyKind::Steal => Box::new(StealingPolicy::new()),
    }
}
