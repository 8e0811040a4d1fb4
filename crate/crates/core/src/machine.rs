//! Target machine description: processors, directed links with affine
//! transfer costs, the computability relation and per-rule compute costs.
//!
//! File format, one directive per line, `#` comments:
//!
//! ```text
//! processor x
//! link x y latency=5 perword=1
//! compute x Sort.2 cost=3
//! forbid y Sort.3
//! ```

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{Program, RuleRef};

/// Virtual-time units.
pub type Cost = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub src: String,
    pub dst: String,
    pub latency: Cost,
    pub per_word: Cost,
}

/// Price of one (possibly batched) transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CostQuote {
    pub total: Cost,
}

impl Link {
    /// `latency + per_word × words`.
    pub fn transfer_cost(&self, words: u64) -> CostQuote {
        CostQuote {
            total: self.latency + self.per_word * words,
        }
    }
}

/// Free-function form of [`Link::transfer_cost`].
pub fn transfer_cost(link: &Link, words: u64) -> CostQuote {
    link.transfer_cost(words)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MachineDescription {
    pub processors: Vec<String>,
    pub links: Vec<Link>,
    /// Pairs removed from the computability relation.
    pub forbidden: BTreeSet<(String, RuleRef)>,
    pub compute_costs: BTreeMap<(String, RuleRef), Cost>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MachineError {
    #[error("line {line}: unknown processor `{name}`")]
    UnknownProcessor { line: usize, name: String },
    #[error("line {line}: negative cost `{value}`")]
    NegativeCost { line: usize, value: String },
    #[error("line {line}: processor `{name}` declared twice")]
    DuplicateProcessor { line: usize, name: String },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: self-link on `{name}`")]
    SelfLink { line: usize, name: String },
    #[error("line {line}: link {src} -> {dst} declared twice")]
    DuplicateLink { line: usize, src: String, dst: String },
    #[error("rule `{0}` does not exist in the program")]
    UnknownRule(RuleRef),
}

pub const DEFAULT_COMPUTE_COST: Cost = 1;

fn parse_kv<'a>(tok: &'a str, key: &str, line: usize) -> Result<&'a str, MachineError> {
    tok.strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| MachineError::Syntax {
            line,
            msg: format!("expected `{key}=<n>`, found `{tok}`"),
        })
}

fn parse_cost(s: &str, line: usize) -> Result<Cost, MachineError> {
    if s.starts_with('-') {
        return Err(MachineError::NegativeCost {
            line,
            value: s.to_string(),
        });
    }
    s.parse().map_err(|_| MachineError::Syntax {
        line,
        msg: format!("bad cost `{s}`"),
    })
}

pub fn parse_machine(text: &str) -> Result<MachineDescription, MachineError> {
    let mut m = MachineDescription::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        // `processor x / processor y` on one line is accepted as well.
        for stmt in content.split(" / ").map(str::trim).filter(|s| !s.is_empty()) {
            let toks: Vec<&str> = stmt.split_whitespace().collect();
            let known = |m: &MachineDescription, p: &str| -> Result<(), MachineError> {
                if m.processors.iter().any(|q| q == p) {
                    Ok(())
                } else {
                    Err(MachineError::UnknownProcessor {
                        line,
                        name: p.to_string(),
                    })
                }
            };
            let rule_ref = |s: &str| -> Result<RuleRef, MachineError> {
                s.parse().map_err(|msg| MachineError::Syntax { line, msg })
            };
            match toks.as_slice() {
                ["processor", name] => {
                    if m.processors.iter().any(|q| q == name) {
                        return Err(MachineError::DuplicateProcessor {
                            line,
                            name: name.to_string(),
                        });
                    }
                    m.processors.push(name.to_string());
                }
                ["link", src, dst, lat, pw] => {
                    known(&m, src)?;
                    known(&m, dst)?;
                    if src == dst {
                        return Err(MachineError::SelfLink {
                            line,
                            name: src.to_string(),
                        });
                    }
                    if m.links.iter().any(|l| l.src == *src && l.dst == *dst) {
                        return Err(MachineError::DuplicateLink {
                            line,
                            src: src.to_string(),
                            dst: dst.to_string(),
                        });
                    }
                    let latency = parse_cost(parse_kv(lat, "latency", line)?, line)?;
                    let per_word = parse_cost(parse_kv(pw, "perword", line)?, line)?;
                    m.links.push(Link {
                        src: src.to_string(),
                        dst: dst.to_string(),
                        latency,
                        per_word,
                    });
                }
                ["compute", p, r, cost] => {
                    known(&m, p)?;
                    let c = parse_cost(parse_kv(cost, "cost", line)?, line)?;
                    m.compute_costs.insert((p.to_string(), rule_ref(r)?), c);
                }
                ["forbid", p, r] => {
                    known(&m, p)?;
                    m.forbidden.insert((p.to_string(), rule_ref(r)?));
                }
                _ => {
                    return Err(MachineError::Syntax {
                        line,
                        msg: format!("unrecognized directive `{stmt}`"),
                    })
                }
            }
        }
    }
    Ok(m)
}

impl MachineDescription {
    /// `(p, r) ∈ C`: all pairs except the forbidden ones.
    pub fn computable(&self, processor: &str, rule: &RuleRef) -> bool {
        !self.forbidden.contains(&(processor.to_string(), rule.clone()))
    }

    pub fn compute_cost(&self, processor: &str, rule: &RuleRef) -> Cost {
        self.compute_costs
            .get(&(processor.to_string(), rule.clone()))
            .copied()
            .unwrap_or(DEFAULT_COMPUTE_COST)
    }

    pub fn link(&self, src: &str, dst: &str) -> Option<&Link> {
        self.links.iter().find(|l| l.src == src && l.dst == dst)
    }

    /// The computability relation, resolved against `program`.
    pub fn computability(&self, program: &Program) -> BTreeSet<(String, RuleRef)> {
        let mut c = BTreeSet::new();
        for p in &self.processors {
            for r in program.rule_refs() {
                if self.computable(p, &r) {
                    c.insert((p.clone(), r));
                }
            }
        }
        c
    }

    /// Checks that every rule named by `compute`/`forbid` exists.
    pub fn validate_against(&self, program: &Program) -> Result<(), MachineError> {
        for (_, r) in self.forbidden.iter().chain(self.compute_costs.keys()) {
            if program.rule(r).is_none() {
                return Err(MachineError::UnknownRule(r.clone()));
            }
        }
        Ok(())
    }

    /// One processor, no links: the machine implied by an unmapped run.
    pub fn single(name: &str) -> Self {
        MachineDescription {
            processors: vec![name.to_string()],
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "processor x\nprocessor y\nlink x y latency=5 perword=1\nlink y x latency=5 perword=1\n";

    #[test]
    fn two_processor_machine() {
        let m = parse_machine(TWO).unwrap();
        assert_eq!(m.processors, vec!["x", "y"]);
        let pairs: Vec<(&str, &str)> = m.links.iter().map(|l| (l.src.as_str(), l.dst.as_str())).collect();
        assert_eq!(pairs, vec![("x", "y"), ("y", "x")]);
        let inline =
            parse_machine("processor x / processor y / link x y latency=5 perword=1 / link y x latency=5 perword=1")
                .unwrap();
        assert_eq!(inline, m);
    }

    #[test]
    fn errors() {
        assert_eq!(
            parse_machine("processor x\nlink x z latency=1 perword=1").unwrap_err(),
            MachineError::UnknownProcessor {
                line: 2,
                name: "z".into()
            }
        );
        assert_eq!(
            parse_machine("processor x\nprocessor x").unwrap_err(),
            MachineError::DuplicateProcessor {
                line: 2,
                name: "x".into()
            }
        );
        assert!(matches!(
            parse_machine("processor x\nprocessor y\nlink x y latency=-5 perword=1").unwrap_err(),
            MachineError::NegativeCost { line: 3, .. }
        ));
        assert!(matches!(
            parse_machine("processor x\nlink x x latency=1 perword=1").unwrap_err(),
            MachineError::SelfLink { .. }
        ));
    }

    #[test]
    fn transfer_cost_is_affine() {
        let l = Link {
            src: "x".into(),
            dst: "y".into(),
            latency: 5,
            per_word: 1,
        };
        assert_eq!(l.transfer_cost(8).total, 13);
        assert_eq!(l.transfer_cost(0).total, 5);
        let batched = l.transfer_cost(16).total;
        let separate = l.transfer_cost(8).total + l.transfer_cost(8).total;
        assert_eq!(batched, 21);
        assert_eq!(separate, 26);
        assert!(batched < separate);
    }

    #[test]
    fn compute_and_forbid() {
        let m = parse_machine("processor x\ncompute x Sort.2 cost=3\nforbid x Sort.3 # no merges").unwrap();
        let r2 = RuleRef {
            def: "Sort".into(),
            index: 2,
        };
        let r3 = RuleRef {
            def: "Sort".into(),
            index: 3,
        };
        assert_eq!(m.compute_cost("x", &r2), 3);
        assert_eq!(m.compute_cost("x", &r3), DEFAULT_COMPUTE_COST);
        assert!(!m.computable("x", &r3));
        assert!(m.computable("x", &r2));
    }

    proptest::proptest! {
        #[test]
        fn transfer_monotone_and_batching_never_worse(
            latency in 0u64..100, per_word in 0u64..20,
            words in proptest::collection::vec(0u64..64, 1..6),
        ) {
            let l = Link { src: "a".into(), dst: "b".into(), latency, per_word };
            let total: u64 = words.iter().sum();
            let one = l.transfer_cost(total).total;
            let many: u64 = words.iter().map(|w| l.transfer_cost(*w).total).sum();
            proptest::prop_assert!(one <= many);
            if words.len() > 1 {
                proptest::prop_assert_eq!(one == many, latency == 0);
            }
            for w in 0..total {
                proptest::prop_assert!(l.transfer_cost(w) <= l.transfer_cost(w + 1));
            }
        }
    }
}
