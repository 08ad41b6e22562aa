//! Execution. [`machine`] is the fast abstract machine over a segmented
//! stack; [`audit`] rewrites whole administrative configurations one
//! reduction at a time. Both report the same [`RunResult`] and output.

use std::fmt;
use std::sync::Arc;

use crate::ast::{BinOp, CmpOp, FuncIdx, Instr, ModuleDef, NumType, TagIdx};
use crate::host::HostTrap;
use crate::runtime::Value;
use crate::text::print_instrs;

pub mod audit;
pub mod machine;

pub use machine::Machine;

pub const DEFAULT_FUEL: u64 = 50_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Trap {
    Unreachable,
    NullFunctionRef,
    NullContinuation,
    /// Consuming a continuation that is already dead.
    ContinuationConsumed,
    Host(HostTrap),
    FuelExhausted,
    /// No rule applies. Only reachable from configurations that did not come
    /// from a validated module.
    Stuck(String),
}

impl fmt::Display for Trap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trap::Unreachable => f.write_str("unreachable executed"),
            Trap::NullFunctionRef => f.write_str("null function reference"),
            Trap::NullContinuation => f.write_str("null continuation reference"),
            Trap::ContinuationConsumed => f.write_str("continuation already consumed"),
            Trap::Host(e) => write!(f, "{e}"),
            Trap::FuelExhausted => f.write_str("fuel exhausted"),
            Trap::Stuck(why) => write!(f, "stuck configuration: {why}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunResult {
    Values(Vec<Value>),
    Trap(Trap),
    UncaughtThrow { tag: TagIdx, payload: Vec<Value> },
    UnhandledSuspend { tag: TagIdx, payload: Vec<Value> },
}

impl RunResult {
    pub fn is_values(&self) -> bool {
        matches!(self, RunResult::Values(_))
    }

    /// One-line description used by the CLI, with tag names resolved.
    pub fn describe(&self, m: &ModuleDef) -> String {
        match self {
            RunResult::Values(vs) => join(vs),
            RunResult::Trap(t) => format!("trap: {t}"),
            RunResult::UncaughtThrow { tag, payload } => {
                with_payload(format!("uncaught exception {}", m.tag_label(*tag)), payload)
            }
            RunResult::UnhandledSuspend { tag, payload } => {
                with_payload(format!("trap: unhandled tag {}", m.tag_label(*tag)), payload)
            }
        }
    }
}

fn with_payload(head: String, payload: &[Value]) -> String {
    if payload.is_empty() {
        head
    } else {
        format!("{head} with payload {}", join(payload))
    }
}

/// Values separated by single spaces.
pub fn join(vs: &[Value]) -> String {
    vs.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub steps: u64,
    pub resumes: u64,
    pub suspends: u64,
    pub cont_allocs: u64,
    pub cont_news: u64,
    pub cont_binds: u64,
    pub resume_throws: u64,
    pub host_calls: u64,
}

impl Stats {
    pub fn report(&self) -> Vec<(&'static str, u64)> {
        vec![
            ("steps", self.steps),
            ("resumes", self.resumes),
            ("suspends", self.suspends),
            ("cont_allocs", self.cont_allocs),
            ("cont_news", self.cont_news),
            ("cont_binds", self.cont_binds),
            ("resume_throws", self.resume_throws),
            ("host_calls", self.host_calls),
        ]
    }
}

/// Reduction rules, as named in traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    Const,
    Local,
    Numeric,
    Drop,
    Ref,
    BlockEnter,
    LoopEnter,
    If,
    LabelExit,
    Br,
    BrIf,
    Return,
    Call,
    CallRef,
    ReturnCall,
    FrameExit,
    HostCall,
    ThrowUnwind,
    ContNew,
    Resume,
    HandlerExit,
    Suspend,
    ContBind,
    ResumeThrow,
    TrapDeadResume,
    TrapDeadBind,
    TrapDeadResumeThrow,
    Trap,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Const => "const",
            Rule::Local => "local",
            Rule::Numeric => "numeric",
            Rule::Drop => "drop",
            Rule::Ref => "ref",
            Rule::BlockEnter => "block-enter",
            Rule::LoopEnter => "loop-enter",
            Rule::If => "if",
            Rule::LabelExit => "label-exit",
            Rule::Br => "br",
            Rule::BrIf => "br-if",
            Rule::Return => "return",
            Rule::Call => "call",
            Rule::CallRef => "call-ref",
            Rule::ReturnCall => "return-call",
            Rule::FrameExit => "frame-exit",
            Rule::HostCall => "host-call",
            Rule::ThrowUnwind => "throw-unwind",
            Rule::ContNew => "cont-new",
            Rule::Resume => "resume",
            Rule::HandlerExit => "handler-exit",
            Rule::Suspend => "suspend",
            Rule::ContBind => "cont-bind",
            Rule::ResumeThrow => "resume-throw",
            Rule::TrapDeadResume => "trap-dead-resume",
            Rule::TrapDeadBind => "trap-dead-bind",
            Rule::TrapDeadResumeThrow => "trap-dead-resume-throw",
            Rule::Trap => "trap",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepEvent {
    pub step: u64,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for StepEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} {}", self.step, self.rule.name())?;
        if !self.detail.is_empty() {
            write!(f, " {}", self.detail)?;
        }
        Ok(())
    }
}

/// Deliberate interpreter bugs, used to show what the soundness checker
/// does and does not catch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// `resume` leaves the continuation live.
    SkipDeadMarking,
    /// `resume` loses the tag of its first handler clause while the labels
    /// stay in place, so every later tag dispatches to its predecessor's
    /// label.
    DropHandlerClause,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub fuel: u64,
    pub trace: bool,
    pub fault: Option<Fault>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            fuel: DEFAULT_FUEL,
            trace: false,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub result: RunResult,
    /// Integers printed by the program.
    pub printed: Vec<i64>,
    pub stats: Stats,
}

impl Outcome {
    pub fn output(&self) -> String {
        crate::host::Output(&self.printed).to_string()
    }
}

/// Runs `entry` on the abstract machine. `on_event` sees every step when
/// `opts.trace` is set.
pub fn run(
    module: &Arc<ModuleDef>,
    entry: FuncIdx,
    args: Vec<Value>,
    opts: RunOptions,
    on_event: &mut dyn FnMut(&StepEvent),
) -> Outcome {
    let mut m = Machine::new(module.clone(), entry, args, opts);
    let result = loop {
        let status = m.step();
        if let Some(e) = m.take_event() {
            on_event(&e);
        }
        if let Some(r) = status {
            break r;
        }
    };
    Outcome {
        result,
        printed: m.host().printed.clone(),
        stats: *m.stats(),
    }
}

/// Runs `entry` by literal rewriting of administrative configurations.
pub fn run_audit(
    module: &Arc<ModuleDef>,
    entry: FuncIdx,
    args: Vec<Value>,
    opts: RunOptions,
    on_event: &mut dyn FnMut(&StepEvent),
) -> Outcome {
    let mut a = audit::Audit::new(module.clone(), entry, args, opts.fuel);
    let result = loop {
        let status = a.step();
        if opts.trace {
            if let Some(e) = a.last_event() {
                on_event(&e);
            }
        }
        if let Some(r) = status {
            break r;
        }
    };
    Outcome {
        result,
        printed: a.config().store.host.printed.clone(),
        stats: a.stats,
    }
}

/// Short rendering of an instruction for trace details.
pub(crate) fn brief(instr: &Instr) -> String {
    match instr {
        Instr::Block(..) | Instr::Loop(..) | Instr::If(..) => instr.mnemonic(),
        _ => print_instrs(std::slice::from_ref(instr)),
    }
}

pub(crate) fn const_value(t: NumType, v: i64) -> Value {
    match t {
        NumType::I32 => Value::I32(v as i32),
        NumType::I64 => Value::I64(v),
    }
}

pub(crate) fn binary(op: BinOp, a: &Value, b: &Value) -> Option<Value> {
    Some(match (a, b) {
        (Value::I32(a), Value::I32(b)) => Value::I32(match op {
            BinOp::Add => a.wrapping_add(*b),
            BinOp::Sub => a.wrapping_sub(*b),
            BinOp::Mul => a.wrapping_mul(*b),
            BinOp::And => a & b,
            BinOp::Or => a | b,
            BinOp::Xor => a ^ b,
        }),
        (Value::I64(a), Value::I64(b)) => Value::I64(match op {
            BinOp::Add => a.wrapping_add(*b),
            BinOp::Sub => a.wrapping_sub(*b),
            BinOp::Mul => a.wrapping_mul(*b),
            BinOp::And => a & b,
            BinOp::Or => a | b,
            BinOp::Xor => a ^ b,
        }),
        _ => return None,
    })
}

fn cmp<S: Ord, U: Ord>(op: CmpOp, a: S, b: S, ua: U, ub: U) -> bool {
    match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::LtU => ua < ub,
        CmpOp::GtU => ua > ub,
        CmpOp::LeU => ua <= ub,
        CmpOp::GeU => ua >= ub,
        CmpOp::LtS => a < b,
        CmpOp::GtS => a > b,
    }
}

pub(crate) fn compare(op: CmpOp, a: &Value, b: &Value) -> Option<Value> {
    let r = match (a, b) {
        (Value::I32(a), Value::I32(b)) => cmp(op, *a, *b, *a as u32, *b as u32),
        (Value::I64(a), Value::I64(b)) => cmp(op, *a, *b, *a as u64, *b as u64),
        _ => return None,
    };
    Some(Value::I32(r as i32))
}

pub(crate) fn eqz(a: &Value) -> Option<Value> {
    match a {
        Value::I32(v) => Some(Value::I32((*v == 0) as i32)),
        Value::I64(v) => Some(Value::I32((*v == 0) as i32)),
        _ => None,
    }
}
