use std::fmt;
use std::sync::Arc;

use crate::ir::{Const, SemType};

/// Index into the image's signal table.
pub type SigId = usize;
/// Definition instance id (θ).
pub type Inst = u64;
pub type MsgId = u64;

/// A first-class signal reference: which signal, in which instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignalValue {
    pub signal: SigId,
    pub instance: Inst,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Arr(Arc<[i64]>),
    Sig(SignalValue),
}

impl Value {
    pub fn arr(xs: &[i64]) -> Value {
        Value::Arr(Arc::from(xs))
    }

    pub fn sem_type(&self) -> SemType {
        match self {
            Value::Int(_) => SemType::Int,
            Value::Bool(_) => SemType::Bool,
            Value::Arr(_) => SemType::IntArray,
            Value::Sig(_) => SemType::Signal,
        }
    }

    /// Transfer size: arrays count their length, everything else one word.
    pub fn words(&self) -> u64 {
        match self {
            Value::Arr(a) => a.len() as u64,
            _ => 1,
        }
    }

    pub fn type_name(&self) -> &'static str {
        self.sem_type().keyword()
    }
}

impl From<&Const> for Value {
    fn from(c: &Const) -> Value {
        match c {
            Const::Int(n) => Value::Int(*n),
            Const::Bool(b) => Value::Bool(*b),
            Const::IntArray(xs) => Value::arr(xs),
        }
    }
}

/// Renders scalars and arrays; signals print as `#<id>@<inst>` since names
/// need the image (see `Image::render_value`).
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Arr(xs) => {
                write!(f, "[")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "]")
            }
            Value::Sig(s) => write!(f, "#{}@{}", s.signal, s.instance),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArgError {
    #[error("expected {expected} arguments, got {found}")]
    Count { expected: usize, found: usize },
    #[error("argument {index}: expected {expected}, got {found}")]
    Type {
        index: usize,
        expected: &'static str,
        found: &'static str,
    },
    #[error("bad argument literal `{0}`")]
    Syntax(String),
}

/// Parses a comma-separated list of literals: integers, `true`/`false`, and
/// bracketed integer arrays, e.g. `[4,2,1,3]` or `21, true`.
pub fn parse_args(text: &str) -> Result<Vec<Value>, ArgError> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    let mut items = Vec::new();
    for c in text.chars() {
        match c {
            '[' => depth += 1,
            ']' => depth = depth.checked_sub(1).ok_or_else(|| ArgError::Syntax(text.to_string()))?,
            _ => {}
        }
        if c == ',' && depth == 0 {
            items.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    if depth != 0 {
        return Err(ArgError::Syntax(text.to_string()));
    }
    items.push(cur);
    if items.len() == 1 && items[0].trim().is_empty() {
        return Ok(out);
    }
    for item in items {
        out.push(parse_literal(item.trim())?);
    }
    Ok(out)
}

fn parse_literal(s: &str) -> Result<Value, ArgError> {
    let bad = || ArgError::Syntax(s.to_string());
    match s {
        "true" => return Ok(Value::Bool(true)),
        "false" => return Ok(Value::Bool(false)),
        _ => {}
    }
    if let Some(inner) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
        let inner = inner.trim();
        if inner.is_empty() {
            return Ok(Value::arr(&[]));
        }
        let xs: Result<Vec<i64>, _> = inner.split(',').map(|x| x.trim().parse::<i64>()).collect();
        return Ok(Value::arr(&xs.map_err(|_| bad())?));
    }
    s.parse::<i64>().map(Value::Int).map_err(|_| bad())
}
