//! Script execution as the command line sees it: parse, validate, run each
//! invocation, and map the outcome to an exit status.

use std::fmt::Write;
use std::sync::Arc;

use crate::ast::{FuncIdx, Invocation, Literal, ModuleDef, ValType};
use crate::interp::{self, Fault, RunOptions, RunResult, Stats, Trap, DEFAULT_FUEL};
use crate::meta::{self, Engine};
use crate::runtime::Value;
use crate::text::parse_script;
use crate::validate::validate_module;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExitStatus {
    Success,
    /// Trap, uncaught exception or unhandled suspension.
    Failure,
    InvalidModule,
    ParseError,
    /// Fuel exhaustion, a stuck configuration or a soundness violation.
    Internal,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Failure => 1,
            ExitStatus::InvalidModule => 2,
            ExitStatus::ParseError => 3,
            ExitStatus::Internal => 4,
        }
    }

    pub fn from_code(code: i32) -> Option<Self> {
        Some(match code {
            0 => ExitStatus::Success,
            1 => ExitStatus::Failure,
            2 => ExitStatus::InvalidModule,
            3 => ExitStatus::ParseError,
            4 => ExitStatus::Internal,
            _ => return None,
        })
    }

    pub fn of(result: &RunResult) -> Self {
        match result {
            RunResult::Values(_) => ExitStatus::Success,
            RunResult::Trap(Trap::FuelExhausted | Trap::Stuck(_)) => ExitStatus::Internal,
            RunResult::Trap(_) | RunResult::UncaughtThrow { .. } | RunResult::UnhandledSuspend { .. } => {
                ExitStatus::Failure
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DriverOptions {
    /// Function name (with or without `$`) or index; overrides the script's
    /// invocations.
    pub invoke: Option<String>,
    /// Arguments for `invoke`, parsed against the entry's parameter types.
    pub args: Vec<String>,
    pub fuel: u64,
    pub trace: bool,
    pub check_soundness: bool,
    pub engine: Engine,
    pub fault: Option<Fault>,
}

impl Default for DriverOptions {
    fn default() -> Self {
        DriverOptions {
            invoke: None,
            args: vec![],
            fuel: DEFAULT_FUEL,
            trace: false,
            check_soundness: false,
            engine: Engine::Machine,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Execution {
    pub stdout: String,
    pub stderr: String,
    pub exit: ExitStatus,
    /// Summed over all invocations that ran.
    pub stats: Stats,
}

impl Execution {
    fn fail(exit: ExitStatus, message: String) -> Self {
        Execution {
            stdout: String::new(),
            stderr: message + "\n",
            exit,
            stats: Stats::default(),
        }
    }
}

/// Parses and validates a script without running it.
pub fn load(source: &str) -> Result<(ModuleDef, Vec<Invocation>), Execution> {
    let (module, invocations) =
        parse_script(source).map_err(|e| Execution::fail(ExitStatus::ParseError, format!("parse error: {e}")))?;
    if let Err(errors) = validate_module(&module) {
        let msg = errors
            .iter()
            .map(|e| format!("type error: {e}"))
            .collect::<Vec<_>>()
            .join("\n");
        return Err(Execution::fail(ExitStatus::InvalidModule, msg));
    }
    Ok((module, invocations))
}

/// Runs a script end to end.
pub fn execute(source: &str, opts: &DriverOptions) -> Execution {
    let (module, invocations) = match load(source) {
        Ok(x) => x,
        Err(e) => return e,
    };
    let calls = match select(&module, &invocations, opts) {
        Ok(c) => c,
        Err(msg) => return Execution::fail(ExitStatus::InvalidModule, msg),
    };
    let module = Arc::new(module);
    let mut exec = Execution {
        stdout: String::new(),
        stderr: String::new(),
        exit: ExitStatus::Success,
        stats: Stats::default(),
    };
    for (entry, args) in calls {
        let run_opts = RunOptions {
            fuel: opts.fuel,
            trace: opts.trace,
            fault: opts.fault,
        };
        let mut on_event = |e: &interp::StepEvent| {
            let _ = writeln!(exec.stderr, "{e}");
        };
        let outcome = match opts.engine {
            Engine::Machine => interp::run(&module, entry, args.clone(), run_opts, &mut on_event),
            Engine::Audit => interp::run_audit(&module, entry, args.clone(), run_opts, &mut on_event),
        };
        add_stats(&mut exec.stats, &outcome.stats);
        if !outcome.printed.is_empty() {
            let _ = writeln!(exec.stdout, "{}", outcome.output());
        }
        if opts.trace {
            for (k, v) in outcome.stats.report() {
                let _ = writeln!(exec.stderr, "{k}: {v}");
            }
        }
        if opts.check_soundness {
            if let Err(msg) = soundness(&module, entry, args, opts.engine, run_opts) {
                exec.stderr.push_str(&msg);
                exec.exit = ExitStatus::Internal;
                return exec;
            }
        }
        match &outcome.result {
            RunResult::Values(vs) => {
                if !vs.is_empty() {
                    let _ = writeln!(exec.stdout, "{}", interp::join(vs));
                }
            }
            other => {
                let _ = writeln!(exec.stderr, "{}", other.describe(&module));
                exec.exit = ExitStatus::of(other);
                return exec;
            }
        }
    }
    exec
}

fn soundness(
    module: &Arc<ModuleDef>,
    entry: FuncIdx,
    args: Vec<Value>,
    engine: Engine,
    opts: RunOptions,
) -> Result<(), String> {
    let opts = RunOptions { trace: false, ..opts };
    let p = meta::check_preservation(module, entry, args.clone(), engine, opts).map_err(|c| format!("{c}\n"))?;
    let q = meta::check_progress(module, entry, args, engine, opts).map_err(|s| format!("{s}\n"))?;
    if p.result != q.result {
        return Err(format!("checker runs disagree: {:?} vs {:?}\n", p.result, q.result));
    }
    Ok(())
}

fn add_stats(total: &mut Stats, s: &Stats) {
    total.steps += s.steps;
    total.resumes += s.resumes;
    total.suspends += s.suspends;
    total.cont_allocs += s.cont_allocs;
    total.cont_news += s.cont_news;
    total.cont_binds += s.cont_binds;
    total.resume_throws += s.resume_throws;
    total.host_calls += s.host_calls;
}

/// The calls to perform: `--invoke` if given, else the script's
/// invocations, else the start function.
pub fn select(
    module: &ModuleDef,
    invocations: &[Invocation],
    opts: &DriverOptions,
) -> Result<Vec<(FuncIdx, Vec<Value>)>, String> {
    if let Some(name) = &opts.invoke {
        let entry = resolve_func(module, name)?;
        let params = &module.funcs[entry as usize].ty.params;
        if params.len() != opts.args.len() {
            return Err(format!(
                "{} expects {} arguments, got {}",
                module.func_label(entry),
                params.len(),
                opts.args.len()
            ));
        }
        let args = params
            .iter()
            .zip(&opts.args)
            .map(|(t, a)| parse_arg(t, a))
            .collect::<Result<_, _>>()?;
        return Ok(vec![(entry, args)]);
    }
    if !invocations.is_empty() {
        return invocations
            .iter()
            .map(|inv| {
                let params = &module.funcs[inv.func as usize].ty.params;
                let args: Vec<Value> = inv.args.iter().map(literal_value).collect();
                let types: Vec<ValType> = inv.args.iter().map(literal_type).collect();
                if *params != types {
                    return Err(format!(
                        "invoke of {} with arguments of the wrong types",
                        module.func_label(inv.func)
                    ));
                }
                Ok((inv.func, args))
            })
            .collect();
    }
    Ok(module.start.map(|s| (s, vec![])).into_iter().collect())
}

fn resolve_func(module: &ModuleDef, name: &str) -> Result<FuncIdx, String> {
    if let Ok(i) = name.parse::<FuncIdx>() {
        if (i as usize) < module.funcs.len() {
            return Ok(i);
        }
        return Err(format!("no function with index {i}"));
    }
    module
        .func_index(name)
        .ok_or_else(|| format!("no function named {name}"))
}

fn parse_arg(t: &ValType, s: &str) -> Result<Value, String> {
    let bad = || format!("cannot read {s:?} as {t}");
    match t {
        ValType::I32 => {
            let v: i64 = s.parse().map_err(|_| bad())?;
            if v < i64::from(i32::MIN) || v > i64::from(u32::MAX) {
                return Err(bad());
            }
            Ok(Value::I32(v as i32))
        }
        ValType::I64 => s.parse().map(Value::I64).map_err(|_| bad()),
        ValType::Ref(_) => Err(format!("reference arguments cannot be given on the command line ({t})")),
    }
}

fn literal_value(l: &Literal) -> Value {
    match l {
        Literal::I32(v) => Value::I32(*v),
        Literal::I64(v) => Value::I64(*v),
    }
}

fn literal_type(l: &Literal) -> ValType {
    match l {
        Literal::I32(_) => ValType::I32,
        Literal::I64(_) => ValType::I64,
    }
}
