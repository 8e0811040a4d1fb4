#![allow(dead_code)]

use std::path::PathBuf;

use jcam::explore::canonical_env;
use jcam::machine::{parse_machine, MachineDescription};
use jcam::mapper::{map_program, MapOptions, MappedProgram};
use jcam::sched::{make_policy, PolicyKind};
use jcam::vm::{run, Image, RunConfig, RunResult, Value};
use jcam::{parse_program, Program};

pub fn programs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("programs")
}

pub fn source(name: &str) -> String {
    std::fs::read_to_string(programs_dir().join(name)).unwrap()
}

pub fn program(name: &str) -> Program {
    parse_program(&source(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn two_proc() -> MachineDescription {
    parse_machine(&source("twoProc.machine")).unwrap()
}

pub fn mapped(p: &Program, m: &MachineDescription) -> MappedProgram {
    map_program(p, m, &MapOptions::default()).unwrap().0
}

pub fn arr(v: &[i64]) -> Value {
    Value::arr(v)
}

pub fn run_policy(
    p: &Program,
    m: Option<&MachineDescription>,
    kind: PolicyKind,
    seed: u64,
    args: &[Value],
) -> RunResult {
    let mut pol = make_policy(kind, seed, Vec::new());
    run(p, m, pol.as_mut(), args, &RunConfig::default()).unwrap_or_else(|e| panic!("{} seed {seed}: {e}", kind.name()))
}

/// Canonical form of a finished run's environment.
pub fn run_canon(p: &Program, r: &RunResult) -> jcam::explore::CanonEnv {
    let img = Image::load(p, None).unwrap();
    canonical_env(&img, &r.state.env)
}

pub struct Fixture {
    pub name: &'static str,
    pub program: Program,
    pub args: Vec<Value>,
}

/// The three behavioral fixtures: merge sort, the nested program after
/// lifting, and the A&B / A&C race.
pub fn fixtures() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "sort",
            program: program("sort.jc"),
            args: vec![arr(&[4, 2, 1, 3])],
        },
        Fixture {
            name: "nested",
            program: program("nested.jc"),
            args: vec![Value::Int(21)],
        },
        Fixture {
            name: "race",
            program: program("race.jc"),
            args: vec![],
        },
    ]
}
