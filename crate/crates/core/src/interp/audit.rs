//! Literal small-step reduction over administrative configurations.
//!
//! Each step decomposes the instruction sequence afresh: the leftmost
//! non-value is the redex, possibly nested inside labels, frames and
//! handlers. Control transfers travel outwards as signals until the
//! delimiter that consumes them.

use std::sync::Arc;

use super::{binary, brief, compare, const_value, eqz, Rule, RunResult, Stats, StepEvent, Trap};
use crate::ast::*;
use crate::runtime::{Admin, Config, ContextSegment, Delimiter, ExecContext, Frame, Store, Value};

/// What one reduction did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Reduced {
    Step(Rule, String),
    Halt(RunResult),
    /// A trap raised by the named rule.
    Trapped(Rule, Trap),
}

enum Signal {
    Stepped(Rule, String),
    /// The sequence is all values.
    Done,
    Br {
        label: LabelIdx,
        values: Vec<Value>,
    },
    Return {
        values: Vec<Value>,
    },
    ReturnCall {
        func: FuncIdx,
        args: Vec<Value>,
    },
    Throw {
        tag: TagIdx,
        payload: Vec<Value>,
    },
    Suspend {
        tag: TagIdx,
        payload: Vec<Value>,
        ctx: ExecContext,
    },
    Halt(RunResult),
    Trapped(Rule, Trap),
}

fn stuck(why: impl Into<String>) -> Signal {
    Signal::Halt(RunResult::Trap(Trap::Stuck(why.into())))
}

fn trap(t: Trap) -> Signal {
    Signal::Halt(RunResult::Trap(t))
}

fn vals(vs: impl IntoIterator<Item = Value>) -> impl Iterator<Item = Admin> {
    vs.into_iter().map(Admin::Val)
}

fn leading_values(seq: &[Admin]) -> Vec<Value> {
    seq.iter().map_while(|a| a.as_value().cloned()).collect()
}

struct Cx<'a> {
    store: &'a mut Store<ExecContext>,
    stats: &'a mut Stats,
}

impl Cx<'_> {
    fn module(&self) -> Arc<ModuleDef> {
        self.store.module.clone()
    }
}

/// Applies one reduction to `config`.
pub fn step(config: &mut Config, stats: &mut Stats) -> Reduced {
    let mut cx = Cx {
        store: &mut config.store,
        stats,
    };
    match reduce_seq(&mut cx, &mut config.code, &mut config.frame) {
        Signal::Stepped(rule, detail) => Reduced::Step(rule, detail),
        Signal::Done => Reduced::Halt(RunResult::Values(leading_values(&config.code))),
        Signal::Throw { tag, payload } => Reduced::Halt(RunResult::UncaughtThrow { tag, payload }),
        Signal::Suspend { tag, payload, .. } => Reduced::Halt(RunResult::UnhandledSuspend { tag, payload }),
        Signal::Halt(r) => Reduced::Halt(r),
        Signal::Trapped(rule, t) => Reduced::Trapped(rule, t),
        Signal::Br { .. } => Reduced::Halt(RunResult::Trap(Trap::Stuck("branch at top level".into()))),
        Signal::Return { .. } | Signal::ReturnCall { .. } => {
            Reduced::Halt(RunResult::Trap(Trap::Stuck("return at top level".into())))
        }
    }
}

fn reduce_seq(cx: &mut Cx, seq: &mut Vec<Admin>, frame: &mut Frame) -> Signal {
    let Some(i) = seq.iter().position(|a| a.as_value().is_none()) else {
        return Signal::Done;
    };
    match &seq[i] {
        Admin::Instr(instr) => {
            let instr = instr.clone();
            reduce_instr(cx, seq, i, instr, frame)
        }
        Admin::Trap => stuck("trap instruction"),
        Admin::Val(_) => unreachable!(),
        Admin::Label { .. } | Admin::Frame { .. } | Admin::Handler { .. } => reduce_nested(cx, seq, i, frame),
    }
}

/// The `n` values just before position `i`.
fn operands(seq: &[Admin], i: usize, n: usize) -> Option<Vec<Value>> {
    let start = i.checked_sub(n)?;
    seq[start..i].iter().map(|a| a.as_value().cloned()).collect()
}

fn reduce_instr(cx: &mut Cx, seq: &mut Vec<Admin>, i: usize, instr: Instr, frame: &mut Frame) -> Signal {
    let module = cx.module();
    macro_rules! take {
        ($n:expr) => {
            match operands(seq, i, $n) {
                Some(v) => v,
                None => return stuck(format!("missing operands for {}", instr.mnemonic())),
            }
        };
    }
    // Replaces the operands and the instruction with `with`.
    let replace = |seq: &mut Vec<Admin>, n: usize, with: Vec<Admin>| {
        seq.splice(i - n..=i, with);
    };
    let detail = || brief(&instr);
    let rule = match &instr {
        Instr::Const(t, v) => {
            replace(seq, 0, vec![Admin::Val(const_value(*t, *v))]);
            Rule::Const
        }
        Instr::LocalGet(x) => {
            let Some(v) = frame.locals.get(*x as usize).cloned() else {
                return stuck("local index out of range");
            };
            replace(seq, 0, vec![Admin::Val(v)]);
            Rule::Local
        }
        Instr::LocalSet(x) | Instr::LocalTee(x) => {
            let v = take!(1).remove(0);
            let Some(slot) = frame.locals.get_mut(*x as usize) else {
                return stuck("local index out of range");
            };
            *slot = v.clone();
            let keep = if matches!(instr, Instr::LocalTee(_)) {
                vec![Admin::Val(v)]
            } else {
                vec![]
            };
            replace(seq, 1, keep);
            Rule::Local
        }
        Instr::Block(bt, body) | Instr::Loop(bt, body) => {
            let args = take!(bt.params.len());
            let mut inner: Vec<Admin> = vals(args).collect();
            inner.extend(Admin::from_instrs(body.iter(), &module));
            let (label_types, cont, rule) = match &instr {
                Instr::Loop(..) => (bt.params.clone(), vec![instr.clone()], Rule::LoopEnter),
                _ => (bt.results.clone(), vec![], Rule::BlockEnter),
            };
            replace(
                seq,
                bt.params.len(),
                vec![Admin::Label {
                    label_types,
                    cont,
                    body: inner,
                }],
            );
            rule
        }
        Instr::If(bt, then, els) => {
            let Some(c) = take!(1)[0].as_i32() else {
                return stuck("if expects an i32");
            };
            let body = if c != 0 { then.clone() } else { els.clone() };
            replace(seq, 1, vec![Admin::Instr(Instr::Block(bt.clone(), body))]);
            Rule::If
        }
        Instr::Br(l) => {
            return Signal::Br {
                label: *l,
                values: leading_values(&seq[..i]),
            }
        }
        Instr::BrIf(l) => {
            let Some(c) = take!(1)[0].as_i32() else {
                return stuck("br_if expects an i32");
            };
            let with = if c != 0 {
                vec![Admin::Instr(Instr::Br(*l))]
            } else {
                vec![]
            };
            replace(seq, 1, with);
            Rule::BrIf
        }
        Instr::Return => {
            return Signal::Return {
                values: leading_values(&seq[..i]),
            }
        }
        Instr::Unreachable => return trap(Trap::Unreachable),
        Instr::Drop => {
            take!(1);
            replace(seq, 1, vec![]);
            Rule::Drop
        }
        Instr::Call(x) => {
            let Some(f) = module.funcs.get(*x as usize) else {
                return stuck(format!("unknown function {x}"));
            };
            let n = f.ty.params.len();
            let args = take!(n);
            match &f.body {
                FuncBody::Builtin(name) => {
                    cx.stats.host_calls += 1;
                    let detail = format!("{name} {}", super::join(&args));
                    match cx.store.host.call_builtin(name, &args, &f.ty.results) {
                        Ok(results) => replace(seq, n, vals(results).collect()),
                        Err(e) => return trap(Trap::Host(e)),
                    }
                    return Signal::Stepped(Rule::HostCall, detail);
                }
                FuncBody::Code(body) => {
                    let callee = Admin::Frame {
                        results: f.ty.results.clone(),
                        frame: Frame::new(args, &f.locals),
                        body: Admin::from_instrs(body.iter(), &module),
                    };
                    replace(seq, n, vec![callee]);
                    return Signal::Stepped(Rule::Call, module.func_label(*x));
                }
            }
        }
        Instr::CallRef(_) => match take!(1).remove(0) {
            Value::FuncRef(x) => {
                replace(seq, 1, vec![Admin::Instr(Instr::Call(x))]);
                Rule::CallRef
            }
            Value::NullRef(_) => return trap(Trap::NullFunctionRef),
            _ => return stuck("call_ref expects a function reference"),
        },
        Instr::ReturnCall(x) => {
            let Some(f) = module.funcs.get(*x as usize) else {
                return stuck(format!("unknown function {x}"));
            };
            return Signal::ReturnCall {
                func: *x,
                args: take!(f.ty.params.len()),
            };
        }
        Instr::RefNull(t) => {
            let Some(heap) = module.heap_type(*t) else {
                return stuck(format!("unknown type {t}"));
            };
            replace(seq, 0, vec![Admin::Val(Value::null(heap.clone()))]);
            Rule::Ref
        }
        Instr::RefFunc(x) => {
            replace(seq, 0, vec![Admin::Val(Value::FuncRef(*x))]);
            Rule::Ref
        }
        Instr::RefIsNull => {
            let v = take!(1).remove(0);
            replace(seq, 1, vec![Admin::Val(Value::I32(v.is_null() as i32))]);
            Rule::Ref
        }
        Instr::Throw(x) => {
            let Some(tag) = module.tags.get(*x as usize) else {
                return stuck(format!("unknown tag {x}"));
            };
            return Signal::Throw {
                tag: *x,
                payload: take!(tag.ty.params.len()),
            };
        }
        Instr::Suspend(x) => {
            let Some(tag) = module.tags.get(*x as usize) else {
                return stuck(format!("unknown tag {x}"));
            };
            let n = tag.ty.params.len();
            let payload = take!(n);
            let ctx = ExecContext {
                base: ContextSegment {
                    values: leading_values(&seq[..i - n]),
                    rest: seq[i + 1..].to_vec(),
                },
                nested: vec![],
            };
            return Signal::Suspend { tag: *x, payload, ctx };
        }
        Instr::ContNew(t) => {
            let Some(ft) = module.heap_type(*t).and_then(HeapType::as_cont) else {
                return stuck(format!("type {t} is not a continuation type"));
            };
            let x = match take!(1).remove(0) {
                Value::FuncRef(x) => x,
                Value::NullRef(_) => return trap(Trap::NullFunctionRef),
                _ => return stuck("cont.new expects a function reference"),
            };
            let a = cx.store.alloc_cont(ExecContext::calling(x), ft.clone());
            cx.stats.cont_news += 1;
            cx.stats.cont_allocs += 1;
            replace(seq, 1, vec![Admin::Val(Value::ContRef(a))]);
            return Signal::Stepped(Rule::ContNew, format!("{} -> cont:{a}", module.func_label(x)));
        }
        Instr::Resume(t, hs) | Instr::ResumeThrow(t, _, hs) => {
            let Some(ft) = module.heap_type(*t).and_then(HeapType::as_cont) else {
                return stuck(format!("type {t} is not a continuation type"));
            };
            let n = match &instr {
                Instr::ResumeThrow(_, x, _) => match module.tags.get(*x as usize) {
                    Some(tag) => tag.ty.params.len(),
                    None => return stuck(format!("unknown tag {x}")),
                },
                _ => ft.params.len(),
            };
            let mut operands = take!(n + 1);
            let a = match operands.pop() {
                Some(Value::ContRef(a)) => a,
                Some(Value::NullRef(_)) => return trap(Trap::NullContinuation),
                _ => return stuck("expected a continuation reference"),
            };
            let Ok(ctx) = cx.store.consume_cont(a) else {
                let rule = match &instr {
                    Instr::ResumeThrow(..) => Rule::TrapDeadResumeThrow,
                    _ => Rule::TrapDeadResume,
                };
                return Signal::Trapped(rule, Trap::ContinuationConsumed);
            };
            let mut fill: Vec<Admin> = vals(operands).collect();
            let rule = match &instr {
                Instr::ResumeThrow(_, x, _) => {
                    fill.push(Admin::Instr(Instr::Throw(*x)));
                    cx.stats.resume_throws += 1;
                    Rule::ResumeThrow
                }
                _ => {
                    cx.stats.resumes += 1;
                    Rule::Resume
                }
            };
            let handler = Admin::Handler {
                clauses: hs.to_vec(),
                results: ft.results.clone(),
                body: ctx.plug(fill),
            };
            replace(seq, n + 1, vec![handler]);
            return Signal::Stepped(rule, format!("cont:{a}"));
        }
        Instr::ContBind(src, dst) => {
            let (Some(from), Some(to)) = (
                module.heap_type(*src).and_then(HeapType::as_cont),
                module.heap_type(*dst).and_then(HeapType::as_cont),
            ) else {
                return stuck("cont.bind needs continuation types");
            };
            let Some(n) = from.params.len().checked_sub(to.params.len()) else {
                return stuck("cont.bind widens the parameter list");
            };
            let mut operands = take!(n + 1);
            let a = match operands.pop() {
                Some(Value::ContRef(a)) => a,
                Some(Value::NullRef(_)) => return trap(Trap::NullContinuation),
                _ => return stuck("expected a continuation reference"),
            };
            let Ok(mut ctx) = cx.store.consume_cont(a) else {
                return Signal::Trapped(Rule::TrapDeadBind, Trap::ContinuationConsumed);
            };
            ctx.bind(operands);
            let b = cx.store.alloc_cont(ctx, to.clone());
            cx.stats.cont_binds += 1;
            cx.stats.cont_allocs += 1;
            replace(seq, n + 1, vec![Admin::Val(Value::ContRef(b))]);
            return Signal::Stepped(Rule::ContBind, format!("cont:{a} -> cont:{b}"));
        }
        Instr::Binary(_, op) => {
            let ab = take!(2);
            let Some(r) = binary(*op, &ab[0], &ab[1]) else {
                return stuck("operand type mismatch");
            };
            replace(seq, 2, vec![Admin::Val(r)]);
            Rule::Numeric
        }
        Instr::Compare(_, op) => {
            let ab = take!(2);
            let Some(r) = compare(*op, &ab[0], &ab[1]) else {
                return stuck("operand type mismatch");
            };
            replace(seq, 2, vec![Admin::Val(r)]);
            Rule::Numeric
        }
        Instr::Eqz(_) => {
            let Some(r) = eqz(&take!(1)[0]) else {
                return stuck("operand type mismatch");
            };
            replace(seq, 1, vec![Admin::Val(r)]);
            Rule::Numeric
        }
    };
    Signal::Stepped(rule, detail())
}

fn delimiter_of(a: &Admin) -> Delimiter {
    match a {
        Admin::Label { label_types, cont, .. } => Delimiter::Label {
            label_types: label_types.clone(),
            cont: cont.clone(),
        },
        Admin::Frame { results, frame, .. } => Delimiter::Frame {
            results: results.clone(),
            frame: frame.clone(),
        },
        Admin::Handler { clauses, results, .. } => Delimiter::Handler {
            clauses: clauses.clone(),
            results: results.clone(),
        },
        _ => unreachable!("not a delimiter"),
    }
}

fn reduce_nested(cx: &mut Cx, seq: &mut Vec<Admin>, i: usize, frame: &mut Frame) -> Signal {
    let signal = match &mut seq[i] {
        Admin::Label { body, .. } | Admin::Handler { body, .. } => reduce_seq(cx, body, frame),
        Admin::Frame { frame: inner, body, .. } => reduce_seq(cx, body, inner),
        _ => unreachable!(),
    };
    let put = |seq: &mut Vec<Admin>, with: Vec<Admin>| {
        seq.splice(i..=i, with);
    };
    match signal {
        Signal::Stepped(..) | Signal::Halt(_) | Signal::Trapped(..) => signal,
        Signal::Done => {
            let (body, rule) = match &mut seq[i] {
                Admin::Label { body, .. } => (std::mem::take(body), Rule::LabelExit),
                Admin::Frame { body, results, .. } => {
                    if body.len() != results.len() {
                        return stuck("frame exits with the wrong number of values");
                    }
                    (std::mem::take(body), Rule::FrameExit)
                }
                Admin::Handler { body, .. } => (std::mem::take(body), Rule::HandlerExit),
                _ => unreachable!(),
            };
            put(seq, body);
            Signal::Stepped(rule, String::new())
        }
        Signal::Br { label, mut values } => match &seq[i] {
            Admin::Label { label_types, cont, .. } if label == 0 => {
                let n = label_types.len();
                if values.len() < n {
                    return stuck("branch carries too few values");
                }
                let mut with: Vec<Admin> = vals(values.split_off(values.len() - n)).collect();
                with.extend(cont.iter().cloned().map(Admin::Instr));
                put(seq, with);
                Signal::Stepped(Rule::Br, "0".into())
            }
            Admin::Label { .. } | Admin::Handler { .. } => {
                let outer = if matches!(seq[i], Admin::Label { .. }) {
                    label - 1
                } else {
                    label
                };
                let mut with: Vec<Admin> = vals(values).collect();
                with.push(Admin::Instr(Instr::Br(outer)));
                put(seq, with);
                Signal::Stepped(Rule::Br, label.to_string())
            }
            _ => stuck("branch out of a function"),
        },
        Signal::Return { mut values } => match &seq[i] {
            Admin::Frame { results, .. } => {
                let n = results.len();
                if values.len() < n {
                    return stuck("return carries too few values");
                }
                put(seq, vals(values.split_off(values.len() - n)).collect());
                Signal::Stepped(Rule::Return, String::new())
            }
            _ => {
                let mut with: Vec<Admin> = vals(values).collect();
                with.push(Admin::Instr(Instr::Return));
                put(seq, with);
                Signal::Stepped(Rule::Return, String::new())
            }
        },
        Signal::ReturnCall { func, args } => match &seq[i] {
            Admin::Frame { .. } => {
                let mut with: Vec<Admin> = vals(args).collect();
                with.push(Admin::Instr(Instr::Call(func)));
                put(seq, with);
                Signal::Stepped(Rule::ReturnCall, cx.module().func_label(func))
            }
            Admin::Label { .. } => Signal::ReturnCall { func, args },
            _ => stuck("return_call across a handler"),
        },
        Signal::Throw { tag, payload } => match &seq[i] {
            Admin::Frame { .. } => {
                let mut with: Vec<Admin> = vals(payload).collect();
                with.push(Admin::Instr(Instr::Throw(tag)));
                put(seq, with);
                Signal::Stepped(Rule::ThrowUnwind, cx.module().tag_label(tag))
            }
            _ => Signal::Throw { tag, payload },
        },
        Signal::Suspend { tag, payload, ctx } => {
            if let Admin::Handler { clauses, results, .. } = &seq[i] {
                if let Some(h) = clauses.iter().find(|h| h.tag == tag) {
                    let label = h.label;
                    let module = cx.module();
                    let tag_results = module.tags[tag as usize].ty.results.clone();
                    let a = cx.store.alloc_cont(ctx, FuncType::new(tag_results, results.clone()));
                    cx.stats.suspends += 1;
                    cx.stats.cont_allocs += 1;
                    let mut with: Vec<Admin> = vals(payload).collect();
                    with.push(Admin::Val(Value::ContRef(a)));
                    with.push(Admin::Instr(Instr::Br(label)));
                    put(seq, with);
                    return Signal::Stepped(
                        Rule::Suspend,
                        format!("{} -> cont:{a}, br {label}", module.tag_label(tag)),
                    );
                }
            }
            let outer = ContextSegment {
                values: leading_values(&seq[..i]),
                rest: seq[i + 1..].to_vec(),
            };
            let mut nested = vec![(delimiter_of(&seq[i]), ctx.base)];
            nested.extend(ctx.nested);
            Signal::Suspend {
                tag,
                payload,
                ctx: ExecContext { base: outer, nested },
            }
        }
    }
}

/// A run under literal reduction.
pub struct Audit {
    config: Config,
    pub stats: Stats,
    fuel: u64,
    last: Option<StepEvent>,
    done: Option<RunResult>,
}

impl Audit {
    /// Configuration `args (call entry)` with an empty store.
    pub fn new(module: Arc<ModuleDef>, entry: FuncIdx, args: Vec<Value>, fuel: u64) -> Self {
        let mut code: Vec<Admin> = vals(args).collect();
        code.push(Admin::Instr(Instr::Call(entry)));
        Self::from_config(
            Config {
                store: Store::new(module),
                frame: Frame::default(),
                code,
            },
            fuel,
        )
    }

    pub fn from_config(config: Config, fuel: u64) -> Self {
        Audit {
            config,
            stats: Stats::default(),
            fuel,
            last: None,
            done: None,
        }
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn last_event(&self) -> Option<StepEvent> {
        self.last.clone()
    }

    pub fn step(&mut self) -> Option<RunResult> {
        if let Some(r) = &self.done {
            return Some(r.clone());
        }
        if self.stats.steps >= self.fuel {
            self.done = Some(RunResult::Trap(Trap::FuelExhausted));
            return self.done.clone();
        }
        self.stats.steps += 1;
        match step(&mut self.config, &mut self.stats) {
            Reduced::Step(rule, detail) => {
                self.last = Some(StepEvent {
                    step: self.stats.steps,
                    rule,
                    detail,
                });
                None
            }
            Reduced::Trapped(rule, t) => {
                self.last = Some(StepEvent {
                    step: self.stats.steps,
                    rule,
                    detail: t.to_string(),
                });
                self.done = Some(RunResult::Trap(t));
                self.done.clone()
            }
            Reduced::Halt(r) => {
                self.last = None;
                self.done = Some(r);
                self.done.clone()
            }
        }
    }
}
