//! Dynamic soundness checking: typing of administrative configurations, and
//! Preservation/Progress checked step by step along real runs.
//!
//! Typing of the administrative forms:
//! - `ref.cont a` has the type recorded when `a` was allocated, whether or
//!   not `a` is still live.
//! - `label{cont} body` with branch types `t1*`: `cont` maps `t1*` to some
//!   `t2*`, and `body` produces `t2*` with `t1*` pushed as a label.
//! - `frame{f} body` types `body` with the locals of `f` and the frame's
//!   results as return type, no labels.
//! - `handler{h*} body` types `body` with no locals, labels or return type;
//!   the clauses are checked against the enclosing context.
//! - The store is well-typed when every live continuation, plugged with
//!   arguments of its parameter types, produces its result types.

use std::fmt::{self, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::ast::{fmt_types, FuncIdx, HeapType, Instr, ModuleDef, ValType};
use crate::interp::audit::Audit;
use crate::interp::{Machine, Rule, RunOptions, RunResult, Trap};
use crate::runtime::{Admin, Config, ContState, ExecContext, Store, Value};
use crate::text::print_instrs;
use crate::validate::{check_handler_clause, check_instr, mismatch, push, StackShape, TypingContext};

/// `⊢ s; f; instr* : t*`. When `open` is set the code ends in an
/// unconditional transfer and `results` is only the known suffix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigType {
    pub results: Vec<ValType>,
    pub open: bool,
}

impl ConfigType {
    pub fn closed(results: Vec<ValType>) -> Self {
        ConfigType { results, open: false }
    }

    /// Whether a configuration of this type may stand for one of type `t`.
    pub fn fits(&self, t: &[ValType]) -> bool {
        StackShape {
            known: self.results.clone(),
            polymorphic: self.open,
        }
        .matches(t)
    }
}

impl fmt::Display for ConfigType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = StackShape {
            known: self.results.clone(),
            polymorphic: self.open,
        };
        write!(f, "{shape}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct MetaTypeError {
    /// Location of the first untypeable layer, e.g. `code/1/handler/0/frame/3`.
    pub path: String,
    pub message: String,
}

/// Types a whole configuration: the store first, then the code.
pub fn type_config(c: &Config) -> Result<ConfigType, MetaTypeError> {
    let mut t = Typer::new(&c.store);
    t.store()?;
    let mut ctx = t.empty.clone();
    ctx.locals = c
        .frame
        .locals
        .iter()
        .map(|v| t.value_type(v))
        .collect::<Result<_, _>>()
        .map_err(|m| t.fail(m))?;
    t.path.push("code".into());
    let s = t.seq(&mut ctx, &c.code, StackShape::default())?;
    Ok(ConfigType {
        results: s.known,
        open: s.polymorphic,
    })
}

struct Typer<'a> {
    store: &'a Store<ExecContext>,
    /// `C°`: module-level bindings only.
    empty: TypingContext,
    path: Vec<String>,
}

type Typed<T> = Result<T, MetaTypeError>;

impl<'a> Typer<'a> {
    fn new(store: &'a Store<ExecContext>) -> Self {
        Typer {
            store,
            empty: TypingContext::for_module(&store.module),
            path: vec![],
        }
    }

    fn fail(&self, message: impl Into<String>) -> MetaTypeError {
        MetaTypeError {
            path: self.path.join("/"),
            message: message.into(),
        }
    }

    fn value_type(&self, v: &Value) -> Result<ValType, String> {
        Ok(match v {
            Value::I32(_) => ValType::I32,
            Value::I64(_) => ValType::I64,
            Value::NullRef(heap) => ValType::Ref(Box::new(HeapType::clone(heap))),
            Value::FuncRef(x) => match self.store.module.funcs.get(*x as usize) {
                Some(f) => ValType::func_ref(f.ty.clone()),
                None => return Err(format!("reference to unknown function {x}")),
            },
            Value::ContRef(a) => match self.store.cont_type(*a) {
                Some(ft) => ValType::cont_ref(ft.clone()),
                None => return Err(format!("reference to unallocated continuation {a}")),
            },
        })
    }

    fn store(&mut self) -> Typed<()> {
        for (a, entry) in self.store.conts.iter().enumerate() {
            let ContState::Live(ctx) = &entry.state else {
                continue;
            };
            self.path.push(format!("cont {a}"));
            let args = entry.ty.params.iter().map(|t| Admin::Val(Value::zero(t))).collect();
            let mut c = self.empty.clone();
            let s = self.seq(&mut c, &ctx.plug(args), StackShape::default())?;
            if !s.matches(&entry.ty.results) {
                return Err(self.fail(format!(
                    "context of type {} -> {} produces {s}",
                    fmt_types(&entry.ty.params),
                    fmt_types(&entry.ty.results)
                )));
            }
            self.path.pop();
        }
        Ok(())
    }

    fn seq(&mut self, c: &mut TypingContext, seq: &[Admin], mut s: StackShape) -> Typed<StackShape> {
        for (i, a) in seq.iter().enumerate() {
            self.path.push(i.to_string());
            s = self.admin(c, a, s)?;
            self.path.pop();
        }
        Ok(s)
    }

    /// Types a nested body from the empty stack and requires `results`.
    fn body(&mut self, kind: &str, c: &mut TypingContext, body: &[Admin], results: &[ValType]) -> Typed<()> {
        self.path.push(kind.into());
        let s = self.seq(c, body, StackShape::default())?;
        if !s.matches(results) {
            return Err(self.fail(mismatch(results, &s)));
        }
        self.path.pop();
        Ok(())
    }

    fn admin(&mut self, c: &mut TypingContext, a: &Admin, mut s: StackShape) -> Typed<StackShape> {
        match a {
            Admin::Val(v) => {
                let t = self.value_type(v).map_err(|m| self.fail(m))?;
                push(&mut s, &[t]);
                Ok(s)
            }
            Admin::Instr(i) => check_instr(c, i, s).map_err(|e| self.fail(e.to_string())),
            Admin::Trap => Ok(StackShape::unreachable()),
            Admin::Label {
                label_types,
                cont,
                body,
            } => {
                let out = self.label_results(c, label_types, cont)?;
                c.labels.push(label_types.clone());
                let r = self.body("label", c, body, &out);
                c.labels.pop();
                r?;
                push(&mut s, &out);
                Ok(s)
            }
            Admin::Frame { results, frame, body } => {
                let locals = frame
                    .locals
                    .iter()
                    .map(|v| self.value_type(v))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|m| self.fail(m))?;
                let mut inner = self.empty.clone();
                inner.locals = locals;
                inner.ret = Some(results.clone());
                self.body("frame", &mut inner, body, results)?;
                push(&mut s, results);
                Ok(s)
            }
            Admin::Handler { clauses, results, body } => {
                for h in clauses {
                    check_handler_clause(c, *h, results).map_err(|e| self.fail(e.message))?;
                }
                let mut inner = self.empty.clone();
                self.body("handler", &mut inner, body, results)?;
                push(&mut s, results);
                Ok(s)
            }
        }
    }

    /// Result types of a label: what its continuation makes of the branch
    /// types.
    fn label_results(&self, c: &TypingContext, label_types: &[ValType], cont: &[Instr]) -> Typed<Vec<ValType>> {
        let mut s = StackShape::of(label_types);
        for i in cont {
            s = check_instr(c, i, s).map_err(|e| self.fail(format!("label continuation: {e}")))?;
        }
        if s.polymorphic {
            return Err(self.fail("label continuation does not fall through"));
        }
        Ok(s.known)
    }
}

/// Checks that `args` can start `entry` and returns the initial type.
fn initial_type(m: &ModuleDef, entry: FuncIdx, args: &[Value]) -> Result<ConfigType, MetaTypeError> {
    let mut code: Vec<Admin> = args.iter().cloned().map(Admin::Val).collect();
    code.push(Admin::Instr(Instr::Call(entry)));
    let config = Config {
        store: Store::new(Arc::new(m.clone())),
        frame: Default::default(),
        code,
    };
    type_config(&config)
}

/// Which interpreter a check drives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Engine {
    #[default]
    Machine,
    Audit,
}

/// One stepping interpreter, seen as a sequence of configurations.
trait Stepper {
    fn step(&mut self) -> (Option<RunResult>, Option<Rule>);
    fn snapshot(&self) -> Config;
}

impl Stepper for Machine {
    fn step(&mut self) -> (Option<RunResult>, Option<Rule>) {
        let r = Machine::step(self);
        (r, self.take_event().map(|e| e.rule))
    }

    fn snapshot(&self) -> Config {
        Machine::snapshot(self)
    }
}

impl Stepper for Audit {
    fn step(&mut self) -> (Option<RunResult>, Option<Rule>) {
        let r = Audit::step(self);
        (r, self.last_event().map(|e| e.rule))
    }

    fn snapshot(&self) -> Config {
        self.config().clone()
    }
}

fn stepper(
    module: &Arc<ModuleDef>,
    entry: FuncIdx,
    args: Vec<Value>,
    engine: Engine,
    opts: RunOptions,
) -> Box<dyn Stepper> {
    match engine {
        Engine::Machine => Box::new(Machine::new(
            module.clone(),
            entry,
            args,
            RunOptions { trace: true, ..opts },
        )),
        Engine::Audit => Box::new(Audit::new(module.clone(), entry, args, opts.fuel)),
    }
}

/// A step after which the configuration no longer has the initial type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterExample {
    /// 1-based index of the offending step; 0 for the initial configuration.
    pub step: u64,
    pub rule: Option<&'static str>,
    pub expected: ConfigType,
    pub error: String,
    pub before: String,
    pub after: String,
}

impl fmt::Display for CounterExample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "preservation violated at step {} ({}): {}",
            self.step,
            self.rule.unwrap_or("initial"),
            self.error
        )?;
        writeln!(f, "expected type {}", self.expected)?;
        writeln!(f, "before:\n{}", self.before)?;
        write!(f, "after:\n{}", self.after)
    }
}

/// Outcome of a successful check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Checked {
    pub steps: u64,
    pub result: RunResult,
}

/// Runs `entry` and types every intermediate configuration. Fuel
/// exhaustion ends the check successfully.
#[allow(clippy::result_large_err)]
pub fn check_preservation(
    module: &Arc<ModuleDef>,
    entry: FuncIdx,
    args: Vec<Value>,
    engine: Engine,
    opts: RunOptions,
) -> Result<Checked, CounterExample> {
    let expected = initial_type(module, entry, &args).map_err(|e| CounterExample {
        step: 0,
        rule: None,
        expected: ConfigType::closed(vec![]),
        error: e.to_string(),
        before: String::new(),
        after: String::new(),
    })?;
    let mut run = stepper(module, entry, args, engine, opts);
    let mut before = run.snapshot();
    let mut steps = 0;
    loop {
        let (done, rule) = run.step();
        let after = run.snapshot();
        steps += 1;
        let verdict = match &done {
            Some(RunResult::Values(vs)) => value_types(&after, vs).and_then(|ts| {
                if expected.fits(&ts) {
                    Ok(())
                } else {
                    Err(format!("final values {} do not have type {expected}", fmt_types(&ts)))
                }
            }),
            Some(_) => Ok(()),
            None => match type_config(&after) {
                Ok(t) if t.fits(&expected.results) => Ok(()),
                Ok(t) => Err(format!("type changed from {expected} to {t}")),
                Err(e) => Err(e.to_string()),
            },
        };
        if let Err(error) = verdict {
            return Err(CounterExample {
                step: steps,
                rule: rule.map(Rule::name),
                expected,
                error,
                before: render_config(&before),
                after: render_config(&after),
            });
        }
        if let Some(result) = done {
            return Ok(Checked { steps, result });
        }
        before = after;
    }
}

fn value_types(c: &Config, vs: &[Value]) -> Result<Vec<ValType>, String> {
    let t = Typer::new(&c.store);
    vs.iter().map(|v| t.value_type(v)).collect()
}

/// A non-terminal configuration that cannot take a step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StuckConfig {
    /// Number of steps taken before getting stuck.
    pub step: u64,
    pub reason: String,
    pub config: String,
}

impl fmt::Display for StuckConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stuck after {} steps: {}\n{}", self.step, self.reason, self.config)
    }
}

/// Runs `entry` and checks that every configuration either steps or is a
/// result. Fuel exhaustion is not stuckness.
pub fn check_progress(
    module: &Arc<ModuleDef>,
    entry: FuncIdx,
    args: Vec<Value>,
    engine: Engine,
    opts: RunOptions,
) -> Result<Checked, StuckConfig> {
    let run = stepper(module, entry, args, engine, opts);
    progress(run)
}

/// Progress from an arbitrary configuration, using literal reduction.
pub fn check_progress_config(config: Config, fuel: u64) -> Result<Checked, StuckConfig> {
    progress(Box::new(Audit::from_config(config, fuel)))
}

fn progress(mut run: Box<dyn Stepper>) -> Result<Checked, StuckConfig> {
    let mut steps = 0;
    loop {
        let before = run.snapshot();
        match run.step().0 {
            None => steps += 1,
            Some(RunResult::Trap(Trap::Stuck(reason))) => {
                return Err(StuckConfig {
                    step: steps,
                    reason,
                    config: render_config(&before),
                })
            }
            Some(result) => return Ok(Checked { steps, result }),
        }
    }
}

/// Multi-line rendering of a configuration: the live store, then the code.
pub fn render_config(c: &Config) -> String {
    let mut out = String::new();
    for (a, e) in c.store.conts.iter().enumerate() {
        let _ = write!(
            out,
            "cont {a} : {} -> {}",
            fmt_types(&e.ty.params),
            fmt_types(&e.ty.results)
        );
        match &e.state {
            ContState::Dead => out.push_str(" dead\n"),
            ContState::Live(ctx) => {
                out.push_str(" live\n");
                render_seq(&mut out, &ctx.plug(vec![Admin::Trap]), 1, "[_]");
            }
        }
    }
    if !c.frame.locals.is_empty() {
        let _ = writeln!(out, "frame {}", crate::interp::join(&c.frame.locals));
    }
    out.push_str("code\n");
    render_seq(&mut out, &c.code, 1, "trap");
    out
}

/// `trap_text` renders [`Admin::Trap`]; contexts use it to mark the hole.
fn render_seq(out: &mut String, seq: &[Admin], depth: usize, trap_text: &str) {
    let pad = "  ".repeat(depth);
    for a in seq {
        match a {
            Admin::Val(v) => {
                let _ = writeln!(out, "{pad}{v}");
            }
            Admin::Trap => {
                let _ = writeln!(out, "{pad}{trap_text}");
            }
            Admin::Instr(i) => {
                for line in print_instrs(std::slice::from_ref(i)).lines() {
                    let _ = writeln!(out, "{pad}{line}");
                }
            }
            Admin::Label { label_types, body, .. } => {
                let _ = writeln!(out, "{pad}label {}", fmt_types(label_types));
                render_seq(out, body, depth + 1, trap_text);
            }
            Admin::Frame { results, frame, body } => {
                let _ = writeln!(
                    out,
                    "{pad}frame {} [{}]",
                    fmt_types(results),
                    crate::interp::join(&frame.locals)
                );
                render_seq(out, body, depth + 1, trap_text);
            }
            Admin::Handler { clauses, results, body } => {
                let hs: Vec<String> = clauses.iter().map(|h| format!("(on {} {})", h.tag, h.label)).collect();
                let _ = writeln!(out, "{pad}handler {} {}", fmt_types(results), hs.join(" "));
                render_seq(out, body, depth + 1, trap_text);
            }
        }
    }
}
