//! Toolchain and abstract machine for the non-nested Join Calculus.
//!
//! The pipeline is `frontend::parse` (surface text, possibly nested) →
//! `frontend::lift` (flat [`ir::Program`]) → `mapper::map_program` (optional,
//! places the program on a [`machine::MachineDescription`]) → `vm::run`
//! under a [`sched::Policy`]. `explore` enumerates every schedule of a
//! program and is used as the oracle for mapping equivalence.

pub mod explore;
pub mod frontend;
pub mod ir;
pub mod machine;
pub mod mapper;
pub mod sched;
pub mod vm;

pub mod cli;

pub use frontend::{lift, parse, parse_program};
pub use ir::{validate_program, Program};
pub use machine::MachineDescription;
pub use mapper::{map_program, MappedProgram};
