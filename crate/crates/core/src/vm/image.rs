//! Loader: resolves a validated program into the tables the VM executes.

use std::collections::{BTreeMap, VecDeque};

use crate::ir::{
    analyze_body, validate_program, BinOp, Diagnostic, Instr, Program, RuleKind, RuleRef, SemType, WorkerId, OUTPUT,
};
use crate::machine::{Cost, MachineDescription};

use super::value::{SigId, Value};

/// Name of the single worker of an unmapped program.
pub const DEFAULT_WORKER: &str = "default";

#[derive(Debug, Clone)]
pub struct SigInfo {
    pub name: String,
    /// `None` for primordials.
    pub def: Option<usize>,
    pub params: Vec<SemType>,
    pub arity: usize,
    pub is_ctor: bool,
    /// Hosting processor; `None` for primordials.
    pub proc: Option<usize>,
    /// Original (pre-mapping) signal this one is a copy of.
    pub osig: usize,
}

/// An original signal and its per-processor copies.
#[derive(Debug, Clone)]
pub struct OrigSignal {
    pub def: Option<usize>,
    pub name: String,
    pub copies: Vec<Option<SigId>>,
    /// Matched by a duplication rule; its multiplicity is unobservable.
    pub dup: bool,
    pub is_ctor: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Const(Value),
    Load(usize),
    Store(usize),
    LoadSignal(SigId),
    Emit(usize),
    Construct(SigId),
    Finish,
    Bin(BinOp),
    Br(usize),
    Brz(usize),
    ArrLen,
    ArrSlice,
    ArrMerge,
}

#[derive(Debug, Clone)]
pub struct RuleInfo {
    pub rref: RuleRef,
    pub pattern: Vec<SigId>,
    pub ops: Vec<Op>,
    pub slot_names: Vec<String>,
    pub max_stack: usize,
    pub worker: usize,
    pub kind: RuleKind,
    pub proc: Option<usize>,
    /// `(src, dst)` processor indices of a transfer rule.
    pub link: Option<(usize, usize)>,
    /// Index into `Image::orig_rules` for computation and duplication copies.
    pub orig: Option<usize>,
    pub cost: Cost,
}

/// An original rule and the processors holding a copy of it.
#[derive(Debug, Clone)]
pub struct OrigRule {
    pub rref: RuleRef,
    pub kind: RuleKind,
    /// `(original signal, multiplicity)` per distinct pattern signal.
    pub groups: Vec<(usize, usize)>,
    pub copies: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkCost {
    pub latency: Cost,
    pub per_word: Cost,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoadError {
    #[error("program is not well formed:\n{}", fmt_diags(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("program has no entry constructor")]
    NoEntry,
    #[error("mapped signal `{0}` has no origin annotation")]
    MissingOrigin(String),
    #[error("rule `{0}` has no worker tag in a mapped program")]
    MissingWorker(RuleRef),
    #[error("rule `{0}` is tagged with the wrong kind of worker")]
    WrongWorkerKind(RuleRef),
    #[error("signal `{signal}` names unknown processor `{processor}`")]
    UnknownProcessor { signal: String, processor: String },
    #[error("link {0} -> {1} is not declared by the machine")]
    UnknownLink(String, String),
    #[error("machine given for an unmapped program; map it first")]
    MachineWithoutMapping,
}

fn fmt_diags(d: &[Diagnostic]) -> String {
    d.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct Image {
    pub program: Program,
    pub mapped: bool,
    pub def_names: Vec<String>,
    pub sigs: Vec<SigInfo>,
    pub osigs: Vec<OrigSignal>,
    pub rules: Vec<RuleInfo>,
    pub orig_rules: Vec<OrigRule>,
    pub workers: Vec<WorkerId>,
    pub procs: Vec<String>,
    /// Worker index of each processor.
    pub proc_worker: Vec<usize>,
    pub entry: SigId,
    pub output: Option<SigId>,
    /// Rules whose pattern mentions a signal.
    pub rules_by_sig: Vec<Vec<usize>>,
    /// Single-message transfer rule per (original signal, src, dst).
    pub transfer: BTreeMap<(usize, usize, usize), usize>,
    /// `dist[osig][from][to]` in transfer hops.
    pub dist: Vec<Vec<Vec<u32>>>,
    /// First hop of a canonical shortest path.
    pub next_hop: Vec<Vec<Vec<Option<usize>>>>,
    pub link_costs: BTreeMap<(usize, usize), LinkCost>,
    /// Original signals consumed by some computation copy on each processor.
    pub consumed_on: Vec<Vec<bool>>,
    sig_lookup: BTreeMap<(Option<usize>, String), SigId>,
}

impl Image {
    pub fn load(program: &Program, machine: Option<&MachineDescription>) -> Result<Image, LoadError> {
        let diags = validate_program(program);
        if !diags.is_empty() {
            return Err(LoadError::Invalid(diags));
        }
        let mapped = program.is_mapped();
        if machine.is_some() && !mapped {
            return Err(LoadError::MachineWithoutMapping);
        }
        let (workers, procs) = if mapped {
            let procs: Vec<String> = program
                .workers
                .iter()
                .filter_map(|w| match w {
                    WorkerId::Processor(p) => Some(p.clone()),
                    _ => None,
                })
                .collect();
            (program.workers.clone(), procs)
        } else {
            (
                vec![WorkerId::Processor(DEFAULT_WORKER.into())],
                vec![DEFAULT_WORKER.to_string()],
            )
        };
        let proc_index = |p: &str| procs.iter().position(|q| q == p);
        let proc_worker: Vec<usize> = procs
            .iter()
            .map(|p| {
                workers
                    .iter()
                    .position(|w| *w == WorkerId::Processor(p.clone()))
                    .unwrap()
            })
            .collect();

        let def_names: Vec<String> = program.definitions.iter().map(|d| d.name.clone()).collect();
        let mut sigs = Vec::new();
        let mut osigs: Vec<OrigSignal> = Vec::new();
        let mut osig_lookup: BTreeMap<(Option<usize>, String), usize> = BTreeMap::new();
        let mut sig_lookup = BTreeMap::new();
        for (di, def) in program.definitions.iter().enumerate() {
            for s in &def.signals {
                let (oname, proc) = if mapped {
                    let o = s
                        .origin
                        .as_ref()
                        .ok_or_else(|| LoadError::MissingOrigin(s.name.clone()))?;
                    let p = proc_index(&o.processor).ok_or_else(|| LoadError::UnknownProcessor {
                        signal: s.name.clone(),
                        processor: o.processor.clone(),
                    })?;
                    (o.signal.clone(), p)
                } else {
                    (s.name.clone(), 0)
                };
                let key = (Some(di), oname.clone());
                let oi = *osig_lookup.entry(key).or_insert_with(|| {
                    osigs.push(OrigSignal {
                        def: Some(di),
                        name: oname,
                        copies: vec![None; procs.len()],
                        dup: false,
                        is_ctor: s.is_constructor,
                    });
                    osigs.len() - 1
                });
                osigs[oi].copies[proc] = Some(sigs.len());
                sig_lookup.insert((Some(di), s.name.clone()), sigs.len());
                sigs.push(SigInfo {
                    name: s.name.clone(),
                    def: Some(di),
                    params: s.params.clone(),
                    arity: s.arity(),
                    is_ctor: s.is_constructor,
                    proc: Some(proc),
                    osig: oi,
                });
            }
        }
        for pr in &program.primordials {
            sig_lookup.insert((None, pr.name.clone()), sigs.len());
            osigs.push(OrigSignal {
                def: None,
                name: pr.name.clone(),
                copies: vec![None; procs.len()],
                dup: false,
                is_ctor: false,
            });
            sigs.push(SigInfo {
                name: pr.name.clone(),
                def: None,
                // Primordial parameter types are not declared.
                params: Vec::new(),
                arity: pr.arity,
                is_ctor: false,
                proc: None,
                osig: osigs.len() - 1,
            });
        }
        let entry_ref = program.entry.as_ref().ok_or(LoadError::NoEntry)?;
        let entry_def = def_names
            .iter()
            .position(|d| *d == entry_ref.def)
            .ok_or(LoadError::NoEntry)?;
        let entry = sig_lookup[&(Some(entry_def), entry_ref.signal.clone())];
        let output = sig_lookup.get(&(None, OUTPUT.to_string())).copied();

        let mut link_costs = BTreeMap::new();
        for w in &workers {
            if let WorkerId::Link(a, b) = w {
                let (Some(ai), Some(bi)) = (proc_index(a), proc_index(b)) else {
                    return Err(LoadError::UnknownLink(a.clone(), b.clone()));
                };
                let cost = match machine {
                    Some(m) => {
                        let l = m
                            .link(a, b)
                            .ok_or_else(|| LoadError::UnknownLink(a.clone(), b.clone()))?;
                        LinkCost {
                            latency: l.latency,
                            per_word: l.per_word,
                        }
                    }
                    None => LinkCost {
                        latency: 0,
                        per_word: 0,
                    },
                };
                link_costs.insert((ai, bi), cost);
            }
        }

        let mut rules = Vec::new();
        let mut orig_rules: Vec<OrigRule> = Vec::new();
        let mut orig_lookup: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut transfer = BTreeMap::new();
        for (di, def) in program.definitions.iter().enumerate() {
            let local = |name: &str| sig_lookup.get(&(Some(di), name.to_string())).copied();
            let resolve = |name: &str| local(name).or_else(|| sig_lookup.get(&(None, name.to_string())).copied());
            for (ri, r) in def.rules.iter().enumerate() {
                let rref = RuleRef {
                    def: def.name.clone(),
                    index: ri,
                };
                let pattern: Vec<SigId> = r.pattern.iter().map(|e| local(&e.signal).unwrap()).collect();
                let (worker, proc, link) = if mapped {
                    let w = r
                        .worker
                        .as_ref()
                        .ok_or_else(|| LoadError::MissingWorker(rref.clone()))?;
                    let wi = workers.iter().position(|x| x == w).unwrap();
                    match (w, r.kind) {
                        (WorkerId::Link(a, b), RuleKind::Transfer) => {
                            (wi, None, Some((proc_index(a).unwrap(), proc_index(b).unwrap())))
                        }
                        (WorkerId::Processor(p), k) if k != RuleKind::Transfer => (wi, proc_index(p), None),
                        _ => return Err(LoadError::WrongWorkerKind(rref)),
                    }
                } else {
                    (0, Some(0), None)
                };

                let slot_names = r.local_names();
                let slot = |n: &str| slot_names.iter().position(|s| s == n).unwrap();
                let mut labels = BTreeMap::new();
                let mut pc = r.formals().count();
                for ins in &r.body {
                    match ins {
                        Instr::Label(l) => {
                            labels.insert(l.clone(), pc);
                        }
                        _ => pc += 1,
                    }
                }
                // Prologue: move the deposited arguments into their slots.
                let n_formals = r.formals().count();
                let mut ops: Vec<Op> = (0..n_formals).rev().map(Op::Store).collect();
                for ins in &r.body {
                    ops.push(match ins {
                        Instr::Label(_) => continue,
                        Instr::LoadConst(c) => Op::Const(c.into()),
                        Instr::Load(n) => Op::Load(slot(n)),
                        Instr::Store(n) => Op::Store(slot(n)),
                        Instr::LoadSignal(s) => Op::LoadSignal(resolve(s).unwrap()),
                        Instr::Emit(n) => Op::Emit(*n),
                        Instr::Construct { def: d, ctor } => {
                            let dj = def_names.iter().position(|x| x == d).unwrap();
                            Op::Construct(sig_lookup[&(Some(dj), ctor.clone())])
                        }
                        Instr::Finish => Op::Finish,
                        Instr::Bin(b) => Op::Bin(*b),
                        Instr::Br(l) => Op::Br(labels[l]),
                        Instr::Brz(l) => Op::Brz(labels[l]),
                        Instr::ArrLen => Op::ArrLen,
                        Instr::ArrSlice => Op::ArrSlice,
                        Instr::ArrMerge => Op::ArrMerge,
                    });
                }
                let arity_of = |name: &str| resolve(name).map(|s| sigs[s].arity);
                let ctor_arity = |d: &str, c: &str| {
                    let dj = def_names.iter().position(|x| x == d)?;
                    sig_lookup
                        .get(&(Some(dj), c.to_string()))
                        .map(|s| sigs[*s].params.len())
                };
                let shape = analyze_body(&r.body, &arity_of, &ctor_arity);
                let max_stack = shape.max_stack.max(n_formals);

                let orig = if r.kind == RuleKind::Transfer {
                    None
                } else {
                    let oidx = if mapped { r.origin.unwrap_or(ri) } else { ri };
                    let oi = *orig_lookup.entry((di, oidx)).or_insert_with(|| {
                        let mut groups: Vec<(usize, usize)> = Vec::new();
                        for s in &pattern {
                            let o = sigs[*s].osig;
                            match groups.iter_mut().find(|g| g.0 == o) {
                                Some(g) => g.1 += 1,
                                None => groups.push((o, 1)),
                            }
                        }
                        orig_rules.push(OrigRule {
                            rref: RuleRef {
                                def: def.name.clone(),
                                index: oidx,
                            },
                            kind: r.kind,
                            groups,
                            copies: Vec::new(),
                        });
                        orig_rules.len() - 1
                    });
                    orig_rules[oi].copies.push((proc.unwrap(), rules.len()));
                    Some(oi)
                };
                let cost = match (r.kind, machine, proc) {
                    (RuleKind::Transfer, _, _) => 0,
                    (_, Some(m), Some(p)) => m.compute_cost(&procs[p], &orig_rules[orig.unwrap()].rref),
                    _ => crate::machine::DEFAULT_COMPUTE_COST,
                };
                if r.kind == RuleKind::Transfer && pattern.len() == 1 {
                    let (a, b) = link.unwrap();
                    transfer.insert((sigs[pattern[0]].osig, a, b), rules.len());
                }
                rules.push(RuleInfo {
                    rref,
                    pattern,
                    ops,
                    slot_names,
                    max_stack,
                    worker,
                    kind: r.kind,
                    proc,
                    link,
                    orig,
                    cost,
                });
            }
        }

        let mut rules_by_sig = vec![Vec::new(); sigs.len()];
        for (i, r) in rules.iter().enumerate() {
            for s in &r.pattern {
                if !rules_by_sig[*s].contains(&i) {
                    rules_by_sig[*s].push(i);
                }
            }
        }
        let mut consumed_on = vec![vec![false; osigs.len()]; procs.len()];
        for r in &rules {
            if r.kind == RuleKind::Computation {
                for s in &r.pattern {
                    consumed_on[r.proc.unwrap()][sigs[*s].osig] = true;
                }
            }
            if r.kind == RuleKind::Duplication {
                osigs[sigs[r.pattern[0]].osig].dup = true;
            }
        }

        let n = procs.len();
        let mut dist = Vec::with_capacity(osigs.len());
        let mut next_hop = Vec::with_capacity(osigs.len());
        for o in 0..osigs.len() {
            let mut adj = vec![Vec::new(); n];
            for &(g, a, b) in transfer.keys() {
                if g == o {
                    adj[a].push(b);
                }
            }
            for a in adj.iter_mut() {
                a.sort_unstable();
            }
            let mut d = vec![vec![UNREACHABLE; n]; n];
            for (src, row) in d.iter_mut().enumerate() {
                row[src] = 0;
                let mut q = VecDeque::from([src]);
                while let Some(u) = q.pop_front() {
                    for &v in &adj[u] {
                        if row[v] == UNREACHABLE {
                            row[v] = row[u] + 1;
                            q.push_back(v);
                        }
                    }
                }
            }
            let mut nh = vec![vec![None; n]; n];
            for from in 0..n {
                for to in 0..n {
                    if from != to && d[from][to] != UNREACHABLE {
                        nh[from][to] = adj[from]
                            .iter()
                            .copied()
                            .find(|&v| d[v][to] != UNREACHABLE && d[v][to] + 1 == d[from][to]);
                    }
                }
            }
            dist.push(d);
            next_hop.push(nh);
        }

        Ok(Image {
            program: program.clone(),
            mapped,
            def_names,
            sigs,
            osigs,
            rules,
            orig_rules,
            workers,
            procs,
            proc_worker,
            entry,
            output,
            rules_by_sig,
            transfer,
            dist,
            next_hop,
            link_costs,
            consumed_on,
            sig_lookup,
        })
    }

    pub fn signal_id(&self, def: Option<&str>, name: &str) -> Option<SigId> {
        let di = match def {
            Some(d) => Some(self.def_names.iter().position(|x| x == d)?),
            None => None,
        };
        self.sig_lookup.get(&(di, name.to_string())).copied()
    }

    /// `Def.sig` or a primordial name.
    pub fn signal_name(&self, s: SigId) -> String {
        let info = &self.sigs[s];
        match info.def {
            Some(d) => format!("{}.{}", self.def_names[d], info.name),
            None => info.name.clone(),
        }
    }

    /// Original name of a signal, with the processor suffix removed.
    pub fn projected_name(&self, s: SigId) -> String {
        let o = &self.osigs[self.sigs[s].osig];
        match o.def {
            Some(d) => format!("{}.{}", self.def_names[d], o.name),
            None => o.name.clone(),
        }
    }

    pub fn worker_name(&self, w: usize) -> String {
        self.workers[w].to_string()
    }

    pub fn render_value(&self, v: &Value) -> String {
        match v {
            Value::Sig(s) => format!("{}@{}", self.signal_name(s.signal), s.instance),
            other => other.to_string(),
        }
    }

    /// The copy of `osig` hosted on `proc`, if any.
    pub fn copy_on(&self, osig: usize, proc: usize) -> Option<SigId> {
        self.osigs[osig].copies.get(proc).copied().flatten()
    }

    pub fn is_primordial(&self, s: SigId) -> bool {
        self.sigs[s].def.is_none()
    }

    pub fn rule_index(&self, r: &RuleRef) -> Option<usize> {
        self.rules.iter().position(|x| x.rref == *r)
    }
}
