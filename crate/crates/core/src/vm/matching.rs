//! Join-pattern matching over the environment.

use std::collections::BTreeSet;

use super::image::Image;
use super::state::{Env, State};
use super::value::{Inst, MsgId};

/// One rule, one instance, one message per pattern element (in pattern
/// order). Repeated pattern signals take their messages in ascending id
/// order, so each unordered selection appears once.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Match {
    pub rule: usize,
    pub instance: Inst,
    pub msgs: Vec<MsgId>,
}

impl Match {
    pub fn overlaps(&self, used: &BTreeSet<MsgId>) -> bool {
        self.msgs.iter().any(|m| used.contains(m))
    }
}

/// Every match of every rule, ungated, in `(rule, instance, messages)` order.
pub fn enabled_matches(state: &State, img: &Image) -> Vec<Match> {
    let mut out = Vec::new();
    for r in 0..img.rules.len() {
        rule_matches(&state.env, img, r, &mut out);
    }
    out
}

/// Distinct signals of a pattern with their positions.
fn groups(pattern: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let mut g: Vec<(usize, Vec<usize>)> = Vec::new();
    for (pos, s) in pattern.iter().enumerate() {
        match g.iter_mut().find(|x| x.0 == *s) {
            Some(x) => x.1.push(pos),
            None => g.push((*s, vec![pos])),
        }
    }
    g
}

/// Appends all `k`-combinations of `items` (ascending) to `out`.
fn combinations(items: &[MsgId], k: usize, out: &mut Vec<Vec<MsgId>>) {
    let n = items.len();
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn rule_matches(env: &Env, img: &Image, rule: usize, out: &mut Vec<Match>) {
    let pattern = &img.rules[rule].pattern;
    let gs = groups(pattern);
    let first = gs[0].0;
    for inst in env.instances_of(first) {
        let mut per_group: Vec<Vec<Vec<MsgId>>> = Vec::with_capacity(gs.len());
        let mut ok = true;
        for (sig, positions) in &gs {
            let ids: Vec<MsgId> = env.on(*sig, inst).collect();
            let mut combos = Vec::new();
            if positions.len() == 1 {
                combos.extend(ids.into_iter().map(|i| vec![i]));
            } else {
                combinations(&ids, positions.len(), &mut combos);
            }
            if combos.is_empty() {
                ok = false;
                break;
            }
            per_group.push(combos);
        }
        if !ok {
            continue;
        }
        let mut choice = vec![0usize; gs.len()];
        'odometer: loop {
            let mut msgs = vec![0; pattern.len()];
            for (gi, (_, positions)) in gs.iter().enumerate() {
                for (p, id) in positions.iter().zip(&per_group[gi][choice[gi]]) {
                    msgs[*p] = *id;
                }
            }
            out.push(Match {
                rule,
                instance: inst,
                msgs,
            });
            let mut gi = gs.len();
            loop {
                if gi == 0 {
                    break 'odometer;
                }
                gi -= 1;
                choice[gi] += 1;
                if choice[gi] < per_group[gi].len() {
                    continue 'odometer;
                }
                choice[gi] = 0;
            }
        }
    }
}

/// Distinct argument-binding orders of a match: every permutation of the
/// messages bound to each repeated signal, skipping orders whose argument
/// vectors coincide.
pub fn binding_orders(m: &Match, env: &Env, img: &Image) -> Vec<Vec<MsgId>> {
    let gs = groups(&img.rules[m.rule].pattern);
    let mut orders = vec![m.msgs.clone()];
    for (_, positions) in gs.iter().filter(|g| g.1.len() > 1) {
        let mut next = Vec::new();
        for base in &orders {
            let ids: Vec<MsgId> = positions.iter().map(|p| base[*p]).collect();
            let mut seen = BTreeSet::new();
            for perm in permutations(&ids) {
                let key: Vec<_> = perm.iter().map(|id| env.get(*id).map(|x| x.args.clone())).collect();
                if !seen.insert(key) {
                    continue;
                }
                let mut o = base.clone();
                for (p, id) in positions.iter().zip(perm) {
                    o[*p] = id;
                }
                next.push(o);
            }
        }
        orders = next;
    }
    orders
}

fn permutations(items: &[MsgId]) -> Vec<Vec<MsgId>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_counts() {
        let mut out = Vec::new();
        combinations(&[1, 2, 3, 4], 2, &mut out);
        assert_eq!(
            out,
            vec![vec![1, 2], vec![1, 3], vec![1, 4], vec![2, 3], vec![2, 4], vec![3, 4]]
        );
        out.clear();
        combinations(&[1, 2], 3, &mut out);
        assert!(out.is_empty());
        out.clear();
        combinations(&[7, 8], 2, &mut out);
        assert_eq!(out, vec![vec![7, 8]]);
        assert_eq!(permutations(&[1, 2, 3]).len(), 6);
    }
}
