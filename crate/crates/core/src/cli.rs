//! The `jcam` command line.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::explore::{equivalent, explore_image, verify_witnesses, ExploreBounds, Verdict};
use crate::frontend::parse_program;
use crate::ir::{pretty_print, validate_program, Program};
use crate::machine::{parse_machine, MachineDescription};
use crate::mapper::{batch_transfers, map_program, MapOptions, MappedProgram};
use crate::sched::{make_policy, PolicyKind, PriorityPolicy};
use crate::vm::{parse_args, run, Image, RunConfig, RunError, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIAGNOSTICS: i32 = 1;
pub const EXIT_FAULT: i32 = 2;
pub const EXIT_GUARD: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "jcam", version, about = "Join Calculus abstract machine toolchain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a program and list its diagnostics.
    Validate {
        /// Program file, or `-` for stdin.
        input: PathBuf,
    },
    /// Print the flat form of a (possibly nested) program.
    Lift { input: PathBuf },
    /// Place a program on a machine.
    Map {
        input: PathBuf,
        #[command(flatten)]
        place: Placement,
        /// Write the projection sidecar here instead of appending it as comments.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Run a program once and print what reached OUTPUT.
    Run {
        input: PathBuf,
        #[command(flatten)]
        place: Placement,
        #[command(flatten)]
        sched: Sched,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Program arguments, e.g. `"[4,2,1,3]"` or `"21"`.
        #[arg(long, default_value = "")]
        args: String,
        /// Trace destination; `-` for stderr.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = RunConfig::default().max_events)]
        max_events: usize,
    },
    /// Enumerate every schedule and print the terminal environments.
    Explore {
        input: PathBuf,
        #[command(flatten)]
        place: Placement,
        #[arg(long, default_value = "")]
        args: String,
        #[command(flatten)]
        bounds: BoundArgs,
        /// With `-m`: compare the program against its mapping instead.
        #[arg(long)]
        compare: bool,
    },
    /// Run every (policy, seed) cell and print CSV.
    Bench {
        input: PathBuf,
        #[command(flatten)]
        place: Placement,
        /// Comma-separated policies; all of them by default.
        #[arg(long, value_delimiter = ',')]
        policy: Vec<PolicyKind>,
        #[arg(long)]
        priority: Option<PathBuf>,
        /// Inclusive range such as `1..10`, or one seed.
        #[arg(long, default_value = "1..10", value_parser = parse_seeds)]
        seeds: (u64, u64),
        #[arg(long, default_value = "")]
        args: String,
        #[arg(long, default_value_t = RunConfig::default().max_events)]
        max_events: usize,
    },
}

#[derive(Debug, Args)]
pub struct Placement {
    /// Machine description. Unmapped programs are mapped onto it first.
    #[arg(short = 'm', long = "machine")]
    pub machine: Option<PathBuf>,
    #[arg(long)]
    pub entry_proc: Option<String>,
    /// Merge transfers of this many messages into one rule.
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Sched {
    #[arg(long, default_value = "first")]
    pub policy: PolicyKind,
    /// Rule list for the priority policy, one `Def.idx` per line.
    #[arg(long)]
    pub priority: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long, default_value_t = ExploreBounds::default().max_events)]
    pub max_events: usize,
    #[arg(long, default_value_t = ExploreBounds::default().max_messages_per_signal)]
    pub max_messages: usize,
    #[arg(long, default_value_t = ExploreBounds::default().max_instances)]
    pub max_instances: usize,
}

fn parse_seeds(s: &str) -> Result<(u64, u64), String> {
    let bad = || format!("bad seed range `{s}`");
    match s.split_once("..") {
        Some((a, b)) => {
            let lo = a.trim().parse().map_err(|_| bad())?;
            let hi = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            if lo > hi {
                return Err(bad());
            }
            Ok((lo, hi))
        }
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            Ok((n, n))
        }
    }
}

/// A failure carrying its exit code and message.
struct Fail(i32, String);

impl Fail {
    fn diag(msg: impl ToString) -> Self {
        Fail(EXIT_DIAGNOSTICS, msg.to_string())
    }
}

type CliResult<T> = Result<T, Fail>;

fn read_input(path: &PathBuf) -> CliResult<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Fail(EXIT_USAGE, format!("stdin: {e}")))?;
        return Ok(s);
    }
    std::fs::read_to_string(path).map_err(|e| Fail(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn load_program(path: &PathBuf) -> CliResult<Program> {
    let text = read_input(path)?;
    let p = parse_program(&text).map_err(|e| Fail::diag(format!("{}:{e}", path.display())))?;
    let diags = validate_program(&p);
    if !diags.is_empty() {
        let mut s = String::new();
        for d in diags {
            writeln!(s, "{d}").unwrap();
        }
        return Err(Fail(EXIT_DIAGNOSTICS, s.trim_end().to_string()));
    }
    Ok(p)
}

fn load_machine(path: &PathBuf) -> CliResult<MachineDescription> {
    let text = read_input(path)?;
    parse_machine(&text).map_err(|e| Fail::diag(format!("{}: {e}", path.display())))
}

fn program_args(s: &str) -> CliResult<Vec<Value>> {
    parse_args(s).map_err(|e| Fail(EXIT_USAGE, format!("--args: {e}")))
}

/// Maps an unmapped program when a machine is given, then batches.
fn place(p: Program, place: &Placement) -> CliResult<(Program, Option<MachineDescription>, Option<MappedProgram>)> {
    let Some(mpath) = &place.machine else {
        if place.entry_proc.is_some() || place.batch.is_some() {
            return Err(Fail(EXIT_USAGE, "--entry-proc and --batch need a machine (-m)".into()));
        }
        return Ok((p, None, None));
    };
    let m = load_machine(mpath)?;
    let mut mp = if p.is_mapped() {
        MappedProgram::from_program(p)
    } else {
        let opts = MapOptions {
            entry_processor: place.entry_proc.clone(),
        };
        let (mp, warnings) = map_program(&p, &m, &opts).map_err(Fail::diag)?;
        for w in warnings {
            eprintln!("{w}");
        }
        mp
    };
    if let Some(n) = place.batch {
        if n == 0 {
            return Err(Fail(EXIT_USAGE, "--batch must be at least 1".into()));
        }
        mp = batch_transfers(&mp, n);
    }
    Ok((mp.program.clone(), Some(m), Some(mp)))
}

fn priority_list(path: &Option<PathBuf>) -> CliResult<Vec<crate::ir::RuleRef>> {
    match path {
        None => Ok(Vec::new()),
        Some(p) => {
            PriorityPolicy::parse_list(&read_input(p)?).map_err(|e| Fail(EXIT_USAGE, format!("{}: {e}", p.display())))
        }
    }
}

fn run_error(e: RunError) -> Fail {
    match e {
        RunError::Fault { .. } | RunError::Scheduler(_) | RunError::Fire(_) => Fail(EXIT_FAULT, e.to_string()),
        RunError::NonTermination { .. } => Fail(EXIT_GUARD, e.to_string()),
        RunError::Args(_) => Fail(EXIT_USAGE, e.to_string()),
        RunError::Policy(_) => Fail(EXIT_USAGE, e.to_string()),
        RunError::Load(_) => Fail::diag(e),
    }
}

/// One line per OUTPUT message, arguments comma-separated.
pub fn format_outputs(outputs: &[Vec<Value>]) -> String {
    let mut s = String::new();
    for o in outputs {
        let parts: Vec<String> = o.iter().map(Value::to_string).collect();
        writeln!(s, "{}", parts.join(", ")).unwrap();
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<i32> {
    let io = |e: std::io::Error| Fail(EXIT_USAGE, e.to_string());
    match cli.command {
        Command::Validate { input } => {
            let text = read_input(&input)?;
            let p = parse_program(&text).map_err(|e| Fail::diag(format!("{}:{e}", input.display())))?;
            let diags = validate_program(&p);
            for d in &diags {
                writeln!(out, "{d}").map_err(io)?;
            }
            Ok(if diags.is_empty() { EXIT_OK } else { EXIT_DIAGNOSTICS })
        }
        Command::Lift { input } => {
            let p = load_program(&input)?;
            write!(out, "{}", pretty_print(&p)).map_err(io)?;
            Ok(EXIT_OK)
        }
        Command::Map {
            input,
            place: pl,
            sidecar,
        } => {
            if pl.machine.is_none() {
                return Err(Fail(EXIT_USAGE, "map needs a machine (-m)".into()));
            }
            let (p, _, mp) = place(load_program(&input)?, &pl)?;
            let mp = mp.expect("machine given");
            write!(out, "{}", pretty_print(&p)).map_err(io)?;
            let side = mp.sidecar();
            match sidecar {
                Some(path) => {
                    std::fs::write(&path, side).map_err(|e| Fail(EXIT_USAGE, format!("{}: {e}", path.display())))?
                }
                None => {
                    writeln!(out, "\n# projection: mapped original processor").map_err(io)?;
                    for l in side.lines() {
                        writeln!(out, "# {l}").map_err(io)?;
                    }
                }
            }
            Ok(EXIT_OK)
        }
        Command::Run {
            input,
            place: pl,
            sched,
            seed,
            args,
            trace,
            max_events,
        } => {
            let (p, m, _) = place(load_program(&input)?, &pl)?;
            let args = program_args(&args)?;
            let img = Image::load(&p, m.as_ref()).map_err(Fail::diag)?;
            let mut policy = make_policy(sched.policy, seed, priority_list(&sched.priority)?);
            let res = run(&p, m.as_ref(), policy.as_mut(), &args, &RunConfig { max_events });
            let write_trace = |t: &crate::vm::Trace, err: &mut dyn Write| -> CliResult<()> {
                let text = t.render(&img);
                match &trace {
                    None => Ok(()),
                    Some(path) if path.as_os_str() == "-" => err.write_all(text.as_bytes()).map_err(io),
                    Some(path) => {
                        std::fs::write(path, text).map_err(|e| Fail(EXIT_USAGE, format!("{}: {e}", path.display())))
                    }
                }
            };
            match res {
                Ok(r) => {
                    write!(out, "{}", format_outputs(&r.outputs)).map_err(io)?;
                    write_trace(&r.trace, err)?;
                    Ok(EXIT_OK)
                }
                Err(e) => {
                    if let RunError::Fault { trace: t, .. } | RunError::NonTermination { trace: t, .. } = &e {
                        write_trace(t, err)?;
                    }
                    Err(run_error(e))
                }
            }
        }
        Command::Explore {
            input,
            place: pl,
            args,
            bounds,
            compare,
        } => {
            let original = load_program(&input)?;
            let (p, _, mp) = place(original.clone(), &pl)?;
            let args = program_args(&args)?;
            let bounds = ExploreBounds {
                max_events: bounds.max_events,
                max_messages_per_signal: bounds.max_messages,
                max_instances: bounds.max_instances,
            };
            if compare {
                let Some(mp) = mp else {
                    return Err(Fail(EXIT_USAGE, "--compare needs a machine (-m)".into()));
                };
                if original.is_mapped() {
                    return Err(Fail(EXIT_USAGE, "--compare needs an unmapped program".into()));
                }
                let rep = equivalent(&original, &mp, &args, &bounds).map_err(|e| Fail(EXIT_FAULT, e.to_string()))?;
                write!(out, "{rep}").map_err(io)?;
                return Ok(if rep.verdict == Verdict::Equal {
                    EXIT_OK
                } else {
                    EXIT_DIAGNOSTICS
                });
            }
            let img = Image::load(&p, None).map_err(Fail::diag)?;
            let rep = explore_image(&img, &args, &bounds).map_err(|e| Fail(EXIT_FAULT, e.to_string()))?;
            verify_witnesses(&img, &args, &rep).map_err(|e| Fail(EXIT_FAULT, e.to_string()))?;
            write!(out, "{rep}").map_err(io)?;
            Ok(EXIT_OK)
        }
        Command::Bench {
            input,
            place: pl,
            policy,
            priority,
            seeds,
            args,
            max_events,
        } => {
            let (p, m, _) = place(load_program(&input)?, &pl)?;
            let args = program_args(&args)?;
            let prio = priority_list(&priority)?;
            let policies = if policy.is_empty() {
                PolicyKind::ALL.to_vec()
            } else {
                policy
            };
            writeln!(out, "policy,seed,makespan,events,output").map_err(io)?;
            for kind in policies {
                for seed in seeds.0..=seeds.1 {
                    let mut pol = make_policy(kind, seed, prio.clone());
                    let r = run(&p, m.as_ref(), pol.as_mut(), &args, &RunConfig { max_events }).map_err(run_error)?;
                    let output = format_outputs(&r.outputs).trim_end().replace('\n', "; ");
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        kind.name(),
                        seed,
                        r.makespan,
                        r.event_count(),
                        csv_field(&output)
                    )
                    .map_err(io)?;
                }
            }
            Ok(EXIT_OK)
        }
    }
}

/// Parses `argv` and runs the subcommand, returning the exit code.
pub fn main_with(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(Fail(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}
