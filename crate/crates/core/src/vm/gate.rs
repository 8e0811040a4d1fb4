//! Which transfer and duplication firings are worth considering.
//!
//! Transfer and duplication rules are always enabled in a mapped program,
//! so "no match exists" never holds once they are present. A state is
//! instead quiescent when every worker is idle and no computation rule can
//! be completed by moving messages along transfer rules. The VM offers
//! auxiliary firings only when they serve a computation; the explorer
//! offers every transfer of ordinary messages and restricts only the
//! copies of duplicated ones.

use std::collections::BTreeSet;

use crate::ir::RuleKind;

use super::image::{Image, UNREACHABLE};
use super::matching::{rule_matches, Match};
use super::state::{Message, State, WorkerState};
use super::value::{Inst, MsgId};

fn proc_of(img: &Image, m: &Message) -> usize {
    img.sigs[m.signal.signal].proc.expect("definition signal")
}

fn osig_of(img: &Image, m: &Message) -> usize {
    img.sigs[m.signal.signal].osig
}

/// Messages selected to complete one original rule on one processor.
struct Plan {
    moves: usize,
    distance: u64,
    /// `(message, current processor, hops)` per selected message.
    picks: Vec<(MsgId, usize, u32)>,
}

fn plan(state: &State, img: &Image, orig: usize, inst: Inst, target: usize) -> Option<Plan> {
    let mut p = Plan {
        moves: 0,
        distance: 0,
        picks: Vec::new(),
    };
    for &(g, count) in &img.orig_rules[orig].groups {
        let mut cands: Vec<(u32, MsgId, usize)> = Vec::new();
        for q in 0..img.procs.len() {
            let Some(sid) = img.copy_on(g, q) else { continue };
            let d = img.dist[g][q][target];
            if d == UNREACHABLE {
                continue;
            }
            cands.extend(state.env.on(sid, inst).map(|id| (d, id, q)));
        }
        if cands.len() < count {
            return None;
        }
        cands.sort_unstable();
        for &(d, id, q) in &cands[..count] {
            if d > 0 {
                p.moves += 1;
                p.distance += d as u64;
            }
            p.picks.push((id, q, d));
        }
    }
    Some(p)
}

fn candidate_instances(state: &State, img: &Image, orig: usize) -> BTreeSet<Inst> {
    let g = img.orig_rules[orig].groups[0].0;
    img.osigs[g]
        .copies
        .iter()
        .flatten()
        .flat_map(|sid| state.env.instances_of(*sid))
        .collect()
}

fn computation_origs(img: &Image) -> impl Iterator<Item = usize> + '_ {
    (0..img.orig_rules.len()).filter(|o| img.orig_rules[*o].kind == RuleKind::Computation)
}

/// Some computation rule can eventually fire by moving messages along
/// existing transfer rules alone.
pub fn can_progress(state: &State, img: &Image) -> bool {
    computation_origs(img).any(|o| {
        candidate_instances(state, img, o).into_iter().any(|inst| {
            img.orig_rules[o]
                .copies
                .iter()
                .any(|&(p, _)| plan(state, img, o, inst, p).is_some())
        })
    })
}

/// All workers idle and nothing left to compute.
pub fn quiescent(state: &State, img: &Image) -> bool {
    state.all_idle() && !can_progress(state, img)
}

/// Matches of computation rules, every one of them.
pub fn computation_matches(state: &State, img: &Image) -> Vec<Match> {
    let mut out = Vec::new();
    for (r, info) in img.rules.iter().enumerate() {
        if info.kind == RuleKind::Computation {
            rule_matches(&state.env, img, r, &mut out);
        }
    }
    out
}

fn identical_at(state: &State, img: &Image, m: &Message, proc: usize) -> usize {
    let Some(sid) = img.copy_on(osig_of(img, m), proc) else {
        return 0;
    };
    state
        .env
        .on(sid, m.signal.instance)
        .filter(|id| state.env.get(*id).is_some_and(|x| x.args == m.args))
        .count()
}

/// Moving `m` to `dest` gives some computation copy there a full match.
fn completes_at(state: &State, img: &Image, m: &Message, dest: usize) -> bool {
    let g = osig_of(img, m);
    let inst = m.signal.instance;
    computation_origs(img).any(|o| {
        let r = &img.orig_rules[o];
        r.groups.iter().any(|(x, _)| *x == g)
            && r.copies.iter().any(|(p, _)| *p == dest)
            && r.groups.iter().all(|&(x, c)| {
                let here = img.copy_on(x, dest).map_or(0, |sid| state.env.on(sid, inst).count());
                here + usize::from(x == g) >= c
            })
    })
}

fn single_transfer(img: &Image, m: &Message, src: usize, dst: usize) -> Option<Match> {
    img.transfer.get(&(osig_of(img, m), src, dst)).map(|&rule| Match {
        rule,
        instance: m.signal.instance,
        msgs: vec![m.id],
    })
}

/// One hop toward the cheapest processor for every computation that is
/// feasible but not yet enabled anywhere.
fn goal_moves(state: &State, img: &Image, out: &mut BTreeSet<Match>) {
    for o in computation_origs(img) {
        for inst in candidate_instances(state, img, o) {
            let mut best: Option<(usize, u64, usize, Plan)> = None;
            let mut direct = false;
            for &(p, _) in &img.orig_rules[o].copies {
                let Some(pl) = plan(state, img, o, inst, p) else {
                    continue;
                };
                if pl.moves == 0 {
                    direct = true;
                    break;
                }
                let key = (pl.moves, pl.distance, p);
                if best.as_ref().is_none_or(|b| key < (b.0, b.1, b.2)) {
                    best = Some((key.0, key.1, key.2, pl));
                }
            }
            if direct {
                continue;
            }
            let Some((_, _, target, pl)) = best else { continue };
            for (id, q, d) in pl.picks {
                if d == 0 {
                    continue;
                }
                let m = state.env.get(id).unwrap();
                let g = osig_of(img, m);
                let hop = img.next_hop[g][q][target].unwrap();
                if img.osigs[g].dup && identical_at(state, img, m, hop) > 0 {
                    continue;
                }
                if let Some(t) = single_transfer(img, m, q, hop) {
                    out.insert(t);
                }
            }
        }
    }
}

fn dup_liberal(state: &State, img: &Image, m: &Message) -> bool {
    let q = proc_of(img, m);
    let g = osig_of(img, m);
    identical_at(state, img, m, q) == 1
        && img.consumed_on[q][g]
        && (0..img.procs.len()).any(|d| img.transfer.contains_key(&(g, q, d)) && identical_at(state, img, m, d) == 0)
}

fn dup_useful(state: &State, img: &Image, m: &Message) -> bool {
    let q = proc_of(img, m);
    let g = osig_of(img, m);
    dup_liberal(state, img, m)
        && (0..img.procs.len()).any(|d| {
            img.transfer.contains_key(&(g, q, d))
                && identical_at(state, img, m, d) == 0
                && completes_at(state, img, m, d)
        })
}

/// Adds merged transfers all of whose constituent moves are in `singles`.
fn batched(state: &State, img: &Image, singles: &BTreeSet<Match>, out: &mut Vec<Match>) {
    let allowed: BTreeSet<(MsgId, usize)> = singles.iter().map(|m| (m.msgs[0], m.rule)).collect();
    for (r, info) in img.rules.iter().enumerate() {
        if info.kind != RuleKind::Transfer || info.pattern.len() < 2 {
            continue;
        }
        let (src, dst) = info.link.unwrap();
        let mut ms = Vec::new();
        rule_matches(&state.env, img, r, &mut ms);
        for m in ms {
            let ok = m.msgs.iter().all(|id| {
                let msg = state.env.get(*id).unwrap();
                img.transfer
                    .get(&(osig_of(img, msg), src, dst))
                    .is_some_and(|t| allowed.contains(&(*id, *t)))
            });
            if ok {
                out.push(m);
            }
        }
    }
}

fn dup_matches(state: &State, img: &Image, useful: bool, out: &mut Vec<Match>) {
    for (r, info) in img.rules.iter().enumerate() {
        if info.kind != RuleKind::Duplication || !img.mapped {
            continue;
        }
        let mut ms = Vec::new();
        rule_matches(&state.env, img, r, &mut ms);
        for m in ms {
            let msg = state.env.get(m.msgs[0]).unwrap();
            let ok = if useful {
                dup_useful(state, img, msg)
            } else {
                dup_liberal(state, img, msg)
            };
            if ok {
                out.push(m);
            }
        }
    }
}

/// The VM's enabled set: computation matches, transfers that bring a
/// computation closer or move work off a busy processor, and duplications
/// whose copy could be used elsewhere.
pub fn schedulable(state: &State, img: &Image) -> Vec<Match> {
    let comp = computation_matches(state, img);
    if !img.mapped {
        return comp;
    }
    let mut singles = BTreeSet::new();
    goal_moves(state, img, &mut singles);

    // Offload: a busy processor's ready work can start on an idle one.
    let busy = |p: usize| !state.workers[img.proc_worker[p]].is_idle();
    let has_work: Vec<bool> = (0..img.procs.len())
        .map(|p| comp.iter().any(|m| img.rules[m.rule].proc == Some(p)))
        .collect();
    for m in &comp {
        let q = img.rules[m.rule].proc.unwrap();
        if !busy(q) {
            continue;
        }
        for (dest, &work) in has_work.iter().enumerate() {
            if dest == q || busy(dest) || work {
                continue;
            }
            for id in &m.msgs {
                let msg = state.env.get(*id).unwrap();
                let g = osig_of(img, msg);
                if img.osigs[g].dup && identical_at(state, img, msg, dest) > 0 {
                    continue;
                }
                if completes_at(state, img, msg, dest) {
                    if let Some(t) = single_transfer(img, msg, q, dest) {
                        singles.insert(t);
                    }
                }
            }
        }
    }
    // Surplus copies of a duplicated message go where they complete a match.
    for msg in state.env.iter() {
        let Some(q) = img.sigs[msg.signal.signal].proc else {
            continue;
        };
        if img.sigs[msg.signal.signal].is_ctor || identical_at(state, img, msg, q) < 2 {
            continue;
        }
        for dest in 0..img.procs.len() {
            if identical_at(state, img, msg, dest) == 0 && completes_at(state, img, msg, dest) {
                if let Some(t) = single_transfer(img, msg, q, dest) {
                    singles.insert(t);
                }
            }
        }
    }

    let mut out = comp;
    dup_matches(state, img, true, &mut out);
    batched(state, img, &singles, &mut out);
    out.extend(singles);
    out.sort();
    out
}

/// The explorer's enabled set: every computation match, every transfer of
/// a message whose signal is not duplicated, transfers of duplicated
/// messages to processors lacking an identical copy, and duplications that
/// could place a copy somewhere new.
pub fn explorable(state: &State, img: &Image) -> Vec<Match> {
    let mut out = computation_matches(state, img);
    if !img.mapped {
        return out;
    }
    let mut singles = BTreeSet::new();
    for msg in state.env.iter() {
        let Some(q) = img.sigs[msg.signal.signal].proc else {
            continue;
        };
        let g = osig_of(img, msg);
        for dest in 0..img.procs.len() {
            if img.osigs[g].dup && identical_at(state, img, msg, dest) > 0 {
                continue;
            }
            if let Some(t) = single_transfer(img, msg, q, dest) {
                singles.insert(t);
            }
        }
    }
    dup_matches(state, img, false, &mut out);
    batched(state, img, &singles, &mut out);
    out.extend(singles);
    out.sort();
    out
}

/// Busy workers, for diagnostics.
pub fn busy_workers(state: &State) -> impl Iterator<Item = usize> + '_ {
    state
        .workers
        .iter()
        .enumerate()
        .filter(|(_, w)| matches!(w, WorkerState::Busy(_)))
        .map(|(i, _)| i)
}
