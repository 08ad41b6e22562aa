//! Abstract machine over a stack of segments.
//!
//! Every label, frame and handler owns one segment: a code pointer plus the
//! height of the shared value stack at which its operands begin. Capturing a
//! continuation cuts the segment stack (and the values above the cut) at the
//! handler; resuming pastes them back on top.

use std::sync::Arc;

use super::{binary, brief, compare, const_value, eqz, Fault, Rule, RunOptions, RunResult, Stats, StepEvent, Trap};
use crate::ast::*;
use crate::host::HostState;
use crate::runtime::{
    Admin, Config, ContEntry, ContState, ContextSegment, Delimiter, ExecContext, Frame, Store, Value,
};

#[derive(Clone, Debug)]
enum Kind {
    /// Top level, or the outermost segment of a captured context.
    Base,
    Label {
        arity: usize,
        is_loop: bool,
    },
    Frame {
        func: FuncIdx,
        locals: Vec<Value>,
    },
    /// Installed by `resume` at continuation type `ty`.
    Handler {
        clauses: Arc<[HandlerClause]>,
        ty: TypeIdx,
    },
}

#[derive(Clone, Debug)]
struct Seg {
    kind: Kind,
    code: Body,
    pc: usize,
    base: usize,
}

/// A suspended computation: segments from the handler body outwards in,
/// with their values. Segment bases are relative to `values`.
#[derive(Clone, Debug)]
pub struct Captured {
    segs: Vec<Seg>,
    values: Vec<Value>,
}

type Halt = RunResult;

fn stuck(why: impl Into<String>) -> Halt {
    RunResult::Trap(Trap::Stuck(why.into()))
}

pub struct Machine {
    module: Arc<ModuleDef>,
    store: Store<Captured>,
    stack: Vec<Value>,
    segs: Vec<Seg>,
    stats: Stats,
    opts: RunOptions,
    /// `[call x]` bodies shared by every continuation created from `x`.
    call_bodies: Vec<Option<Body>>,
    event: Option<StepEvent>,
    done: Option<RunResult>,
}

impl Machine {
    /// Configuration `args (call entry)`.
    pub fn new(module: Arc<ModuleDef>, entry: FuncIdx, args: Vec<Value>, opts: RunOptions) -> Self {
        let nfuncs = module.funcs.len();
        Machine {
            store: Store::new(module.clone()),
            module,
            stack: args,
            segs: vec![Seg {
                kind: Kind::Base,
                code: Arc::from(vec![Instr::Call(entry)]),
                pc: 0,
                base: 0,
            }],
            stats: Stats::default(),
            opts,
            call_bodies: vec![None; nfuncs],
            event: None,
            done: None,
        }
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn host(&self) -> &HostState {
        &self.store.host
    }

    pub fn result(&self) -> Option<&RunResult> {
        self.done.as_ref()
    }

    /// The event of the last step, if tracing.
    pub fn take_event(&mut self) -> Option<StepEvent> {
        self.event.take()
    }

    /// Performs one reduction. Returns the result once the run is over.
    pub fn step(&mut self) -> Option<RunResult> {
        if let Some(r) = &self.done {
            return Some(r.clone());
        }
        if self.stats.steps >= self.opts.fuel {
            self.done = Some(RunResult::Trap(Trap::FuelExhausted));
            return self.done.clone();
        }
        self.stats.steps += 1;
        match self.exec() {
            Ok(()) => None,
            Err(r) => {
                self.done = Some(r);
                self.done.clone()
            }
        }
    }

    fn note(&mut self, rule: Rule, detail: impl FnOnce() -> String) {
        if self.opts.trace {
            self.event = Some(StepEvent {
                step: self.stats.steps,
                rule,
                detail: detail(),
            });
        }
    }

    fn pop(&mut self) -> Result<Value, Halt> {
        let floor = self.segs.last().map_or(0, |s| s.base);
        if self.stack.len() <= floor {
            return Err(stuck("operand stack underflow"));
        }
        Ok(self.stack.pop().expect("checked above"))
    }

    fn pop_n(&mut self, n: usize) -> Result<Vec<Value>, Halt> {
        let floor = self.segs.last().map_or(0, |s| s.base);
        if self.stack.len() < floor + n {
            return Err(stuck("operand stack underflow"));
        }
        Ok(self.stack.split_off(self.stack.len() - n))
    }

    fn pop_i32(&mut self) -> Result<i32, Halt> {
        self.pop()?.as_i32().ok_or_else(|| stuck("expected an i32 operand"))
    }

    fn locals(&mut self) -> Result<&mut Vec<Value>, Halt> {
        self.segs
            .iter_mut()
            .rev()
            .find_map(|s| match &mut s.kind {
                Kind::Frame { locals, .. } => Some(locals),
                _ => None,
            })
            .ok_or_else(|| stuck("local access outside of a function"))
    }

    fn local_slot(&mut self, x: LocalIdx) -> Result<&mut Value, Halt> {
        self.locals()?
            .get_mut(x as usize)
            .ok_or_else(|| stuck("local index out of range"))
    }

    fn cont_type(&self, t: TypeIdx) -> Result<FuncType, Halt> {
        self.module
            .heap_type(t)
            .and_then(HeapType::as_cont)
            .cloned()
            .ok_or_else(|| stuck(format!("type {t} is not a continuation type")))
    }

    fn tag_type(&self, x: TagIdx) -> Result<FuncType, Halt> {
        self.module
            .tags
            .get(x as usize)
            .map(|t| t.ty.clone())
            .ok_or_else(|| stuck(format!("unknown tag {x}")))
    }

    fn exec(&mut self) -> Result<(), Halt> {
        let top = self.segs.len() - 1;
        let seg = &self.segs[top];
        if seg.pc == seg.code.len() {
            return self.exit_segment();
        }
        let code = seg.code.clone();
        let instr = &code[seg.pc];
        self.segs[top].pc += 1;
        match instr {
            Instr::Const(t, v) => {
                self.stack.push(const_value(*t, *v));
                self.note(Rule::Const, || brief(instr));
            }
            Instr::LocalGet(x) => {
                let v = self.local_slot(*x)?.clone();
                self.stack.push(v);
                self.note(Rule::Local, || brief(instr));
            }
            Instr::LocalSet(x) => {
                let v = self.pop()?;
                *self.local_slot(*x)? = v;
                self.note(Rule::Local, || brief(instr));
            }
            Instr::LocalTee(x) => {
                let v = self.pop()?;
                *self.local_slot(*x)? = v.clone();
                self.stack.push(v);
                self.note(Rule::Local, || brief(instr));
            }
            Instr::Block(bt, body) => {
                self.enter_label(bt.params.len(), bt.results.len(), false, body.clone());
                self.note(Rule::BlockEnter, String::new);
            }
            Instr::Loop(bt, body) => {
                self.enter_label(bt.params.len(), bt.params.len(), true, body.clone());
                self.note(Rule::LoopEnter, String::new);
            }
            Instr::If(bt, then, els) => {
                let c = self.pop_i32()?;
                let body = if c != 0 { then } else { els };
                self.enter_label(bt.params.len(), bt.results.len(), false, body.clone());
                self.note(Rule::If, || if c != 0 { "then" } else { "else" }.into());
            }
            Instr::Br(l) => {
                self.branch(*l)?;
                self.note(Rule::Br, || l.to_string());
            }
            Instr::BrIf(l) => {
                let c = self.pop_i32()?;
                if c != 0 {
                    self.branch(*l)?;
                }
                self.note(Rule::BrIf, || {
                    format!("{l} {}", if c != 0 { "taken" } else { "not taken" })
                });
            }
            Instr::Return => {
                self.do_return()?;
                self.note(Rule::Return, String::new);
            }
            Instr::Unreachable => {
                self.note(Rule::Trap, || "unreachable".into());
                return Err(RunResult::Trap(Trap::Unreachable));
            }
            Instr::Drop => {
                self.pop()?;
                self.note(Rule::Drop, String::new);
            }
            Instr::Call(x) => self.call(*x, Rule::Call)?,
            Instr::CallRef(_) => match self.pop()? {
                Value::FuncRef(x) => self.call(x, Rule::CallRef)?,
                Value::NullRef(_) => {
                    self.note(Rule::Trap, || "call_ref of null".into());
                    return Err(RunResult::Trap(Trap::NullFunctionRef));
                }
                _ => return Err(stuck("call_ref expects a function reference")),
            },
            Instr::ReturnCall(x) => self.return_call(*x)?,
            Instr::RefNull(t) => {
                let heap = self
                    .module
                    .heap_type(*t)
                    .cloned()
                    .ok_or_else(|| stuck(format!("unknown type {t}")))?;
                self.stack.push(Value::null(heap));
                self.note(Rule::Ref, || brief(instr));
            }
            Instr::RefFunc(x) => {
                self.stack.push(Value::FuncRef(*x));
                self.note(Rule::Ref, || brief(instr));
            }
            Instr::RefIsNull => {
                let v = self.pop()?;
                self.stack.push(Value::I32(v.is_null() as i32));
                self.note(Rule::Ref, || brief(instr));
            }
            Instr::Throw(x) => {
                let n = self.tag_type(*x)?.params.len();
                let payload = self.pop_n(n)?;
                let module = self.module.clone();
                self.note(Rule::ThrowUnwind, || module.tag_label(*x));
                return Err(RunResult::UncaughtThrow { tag: *x, payload });
            }
            Instr::ContNew(t) => self.cont_new(*t)?,
            Instr::Resume(t, hs) => self.resume(*t, hs)?,
            Instr::Suspend(x) => self.suspend(*x)?,
            Instr::ContBind(src, dst) => self.cont_bind(*src, *dst)?,
            Instr::ResumeThrow(t, x, hs) => return Err(self.resume_throw(*t, *x, hs)),
            Instr::Binary(_, op) => {
                let b = self.pop()?;
                let a = self.pop()?;
                let r = binary(*op, &a, &b).ok_or_else(|| stuck("operand type mismatch"))?;
                self.stack.push(r);
                self.note(Rule::Numeric, || brief(instr));
            }
            Instr::Compare(_, op) => {
                let b = self.pop()?;
                let a = self.pop()?;
                let r = compare(*op, &a, &b).ok_or_else(|| stuck("operand type mismatch"))?;
                self.stack.push(r);
                self.note(Rule::Numeric, || brief(instr));
            }
            Instr::Eqz(_) => {
                let a = self.pop()?;
                let r = eqz(&a).ok_or_else(|| stuck("operand type mismatch"))?;
                self.stack.push(r);
                self.note(Rule::Numeric, || brief(instr));
            }
        }
        Ok(())
    }

    fn exit_segment(&mut self) -> Result<(), Halt> {
        let seg = self.segs.pop().expect("at least one segment");
        match seg.kind {
            Kind::Base => {
                let values = self.stack.split_off(seg.base);
                self.note(Rule::LabelExit, || "top level".into());
                return Err(RunResult::Values(values));
            }
            Kind::Label { .. } => self.note(Rule::LabelExit, String::new),
            Kind::Frame { func, .. } => {
                let module = self.module.clone();
                self.note(Rule::FrameExit, || module.func_label(func));
            }
            Kind::Handler { .. } => self.note(Rule::HandlerExit, String::new),
        }
        Ok(())
    }

    fn enter_label(&mut self, params: usize, arity: usize, is_loop: bool, body: Body) {
        self.segs.push(Seg {
            kind: Kind::Label { arity, is_loop },
            code: body,
            pc: 0,
            base: self.stack.len() - params,
        });
    }

    /// `br l`: crosses (and removes) any handlers in the way.
    fn branch(&mut self, l: LabelIdx) -> Result<(), Halt> {
        let mut depth = l;
        let mut i = self.segs.len();
        let (target, arity, is_loop) = loop {
            if i == 0 {
                return Err(stuck("branch target out of range"));
            }
            i -= 1;
            match self.segs[i].kind {
                Kind::Label { arity, is_loop } if depth == 0 => break (i, arity, is_loop),
                Kind::Label { .. } => depth -= 1,
                Kind::Handler { .. } => {}
                Kind::Frame { .. } | Kind::Base => return Err(stuck("branch out of a function")),
            }
        };
        let vals = self.pop_n(arity)?;
        self.stack.truncate(self.segs[target].base);
        if is_loop {
            self.segs.truncate(target + 1);
            self.segs[target].pc = 0;
        } else {
            self.segs.truncate(target);
        }
        self.stack.extend(vals);
        Ok(())
    }

    fn nearest_frame(&self) -> Result<(usize, FuncIdx), Halt> {
        self.segs
            .iter()
            .enumerate()
            .rev()
            .find_map(|(i, s)| match s.kind {
                Kind::Frame { func, .. } => Some((i, func)),
                _ => None,
            })
            .ok_or_else(|| stuck("return outside of a function"))
    }

    fn do_return(&mut self) -> Result<(), Halt> {
        let (t, func) = self.nearest_frame()?;
        let arity = self.module.funcs[func as usize].ty.results.len();
        let vals = self.pop_n(arity)?;
        self.stack.truncate(self.segs[t].base);
        self.segs.truncate(t);
        self.stack.extend(vals);
        Ok(())
    }

    fn call(&mut self, x: FuncIdx, rule: Rule) -> Result<(), Halt> {
        let module = self.module.clone();
        let f = module
            .funcs
            .get(x as usize)
            .ok_or_else(|| stuck(format!("unknown function {x}")))?;
        let args = self.pop_n(f.ty.params.len())?;
        match &f.body {
            FuncBody::Builtin(name) => {
                self.stats.host_calls += 1;
                self.note(Rule::HostCall, || format!("{name} {}", super::join(&args)));
                let results = self
                    .store
                    .host
                    .call_builtin(name, &args, &f.ty.results)
                    .map_err(|e| RunResult::Trap(Trap::Host(e)))?;
                self.stack.extend(results);
            }
            FuncBody::Code(body) => {
                let frame = Frame::new(args, &f.locals);
                self.segs.push(Seg {
                    kind: Kind::Frame {
                        func: x,
                        locals: frame.locals,
                    },
                    code: body.clone(),
                    pc: 0,
                    base: self.stack.len(),
                });
                self.note(rule, || module.func_label(x));
            }
        }
        Ok(())
    }

    /// Replaces the current frame; the segment stack does not grow.
    fn return_call(&mut self, x: FuncIdx) -> Result<(), Halt> {
        let module = self.module.clone();
        let f = module
            .funcs
            .get(x as usize)
            .ok_or_else(|| stuck(format!("unknown function {x}")))?;
        if let FuncBody::Builtin(_) = f.body {
            self.call(x, Rule::ReturnCall)?;
            return self.do_return();
        }
        let args = self.pop_n(f.ty.params.len())?;
        let (t, _) = self.nearest_frame()?;
        self.stack.truncate(self.segs[t].base);
        self.segs.truncate(t);
        self.stack.extend(args);
        self.call(x, Rule::ReturnCall)
    }

    fn call_body(&mut self, x: FuncIdx) -> Body {
        let slot = &mut self.call_bodies[x as usize];
        slot.get_or_insert_with(|| Arc::from(vec![Instr::Call(x)])).clone()
    }

    fn cont_new(&mut self, t: TypeIdx) -> Result<(), Halt> {
        let ft = self.cont_type(t)?;
        let x = match self.pop()? {
            Value::FuncRef(x) => x,
            Value::NullRef(_) => {
                self.note(Rule::Trap, || "cont.new of null".into());
                return Err(RunResult::Trap(Trap::NullFunctionRef));
            }
            _ => return Err(stuck("cont.new expects a function reference")),
        };
        if x as usize >= self.call_bodies.len() {
            return Err(stuck(format!("unknown function {x}")));
        }
        let code = self.call_body(x);
        let captured = Captured {
            segs: vec![Seg {
                kind: Kind::Base,
                code,
                pc: 0,
                base: 0,
            }],
            values: vec![],
        };
        let a = self.store.alloc_cont(captured, ft);
        self.stats.cont_news += 1;
        self.stats.cont_allocs += 1;
        self.stack.push(Value::ContRef(a));
        let module = self.module.clone();
        self.note(Rule::ContNew, || format!("{} -> cont:{a}", module.func_label(x)));
        Ok(())
    }

    /// Pops a continuation reference and takes its context.
    fn take_cont(&mut self, dead_rule: Rule, keep_live: bool) -> Result<(Captured, u32), Halt> {
        let a = match self.pop()? {
            Value::ContRef(a) => a,
            Value::NullRef(_) => {
                self.note(Rule::Trap, || "null continuation".into());
                return Err(RunResult::Trap(Trap::NullContinuation));
            }
            _ => return Err(stuck("expected a continuation reference")),
        };
        let taken = if keep_live {
            self.store.peek_cont(a)
        } else {
            self.store.consume_cont(a)
        };
        match taken {
            Ok(c) => Ok((c, a)),
            Err(_) => {
                self.note(dead_rule, || format!("cont:{a}"));
                Err(RunResult::Trap(Trap::ContinuationConsumed))
            }
        }
    }

    /// `handler{clauses} E[extra]` on top of the current segment.
    fn install(&mut self, captured: Captured, clauses: Arc<[HandlerClause]>, ty: TypeIdx, extra: Vec<Value>) {
        let base = self.stack.len();
        let Captured { mut segs, values } = captured;
        for s in &mut segs {
            s.base += base;
        }
        segs[0].kind = Kind::Handler { clauses, ty };
        self.segs.extend(segs);
        self.stack.extend(values);
        self.stack.extend(extra);
    }

    fn resume(&mut self, t: TypeIdx, hs: &Arc<[HandlerClause]>) -> Result<(), Halt> {
        let ft = self.cont_type(t)?;
        let keep_live = self.opts.fault == Some(Fault::SkipDeadMarking);
        let (captured, a) = self.take_cont(Rule::TrapDeadResume, keep_live)?;
        let args = self.pop_n(ft.params.len())?;
        let clauses = match self.opts.fault {
            Some(Fault::DropHandlerClause) if !hs.is_empty() => hs
                .windows(2)
                .map(|w| HandlerClause {
                    tag: w[1].tag,
                    label: w[0].label,
                })
                .collect(),
            _ => hs.clone(),
        };
        self.install(captured, clauses, t, args);
        self.stats.resumes += 1;
        self.note(Rule::Resume, || format!("cont:{a}"));
        Ok(())
    }

    fn suspend(&mut self, x: TagIdx) -> Result<(), Halt> {
        let tag_ft = self.tag_type(x)?;
        let payload = self.pop_n(tag_ft.params.len())?;
        let found = self.segs.iter().enumerate().rev().find_map(|(i, s)| match &s.kind {
            Kind::Handler { clauses, ty } => clauses.iter().find(|h| h.tag == x).map(|h| (i, h.label, *ty)),
            _ => None,
        });
        let Some((h, label, ty)) = found else {
            let module = self.module.clone();
            self.note(Rule::Suspend, || format!("{} unhandled", module.tag_label(x)));
            return Err(RunResult::UnhandledSuspend { tag: x, payload });
        };
        let results = self.cont_type(ty)?.results;
        let base = self.segs[h].base;
        let mut segs = self.segs.split_off(h);
        let values = self.stack.split_off(base);
        for s in &mut segs {
            s.base -= base;
        }
        segs[0].kind = Kind::Base;
        let a = self
            .store
            .alloc_cont(Captured { segs, values }, FuncType::new(tag_ft.results, results));
        self.stats.suspends += 1;
        self.stats.cont_allocs += 1;
        self.stack.extend(payload);
        self.stack.push(Value::ContRef(a));
        self.branch(label)?;
        let module = self.module.clone();
        self.note(Rule::Suspend, || {
            format!("{} -> cont:{a}, br {label}", module.tag_label(x))
        });
        Ok(())
    }

    fn cont_bind(&mut self, src: TypeIdx, dst: TypeIdx) -> Result<(), Halt> {
        let from = self.cont_type(src)?;
        let to = self.cont_type(dst)?;
        let n = from
            .params
            .len()
            .checked_sub(to.params.len())
            .ok_or_else(|| stuck("cont.bind widens the parameter list"))?;
        let (mut captured, a) = self.take_cont(Rule::TrapDeadBind, false)?;
        let vals = self.pop_n(n)?;
        captured.values.extend(vals);
        let b = self.store.alloc_cont(captured, to);
        self.stats.cont_binds += 1;
        self.stats.cont_allocs += 1;
        self.stack.push(Value::ContRef(b));
        self.note(Rule::ContBind, || format!("cont:{a} -> cont:{b}"));
        Ok(())
    }

    /// Nothing in the language catches an exception, so the run ends here.
    fn resume_throw(&mut self, t: TypeIdx, x: TagIdx, hs: &Arc<[HandlerClause]>) -> Halt {
        match self.try_resume_throw(t, x, hs) {
            Ok(r) | Err(r) => r,
        }
    }

    fn try_resume_throw(&mut self, t: TypeIdx, x: TagIdx, hs: &Arc<[HandlerClause]>) -> Result<Halt, Halt> {
        let n = self.tag_type(x)?.params.len();
        let (captured, a) = self.take_cont(Rule::TrapDeadResumeThrow, false)?;
        let payload = self.pop_n(n)?;
        self.install(captured, hs.clone(), t, vec![]);
        self.stats.resume_throws += 1;
        let module = self.module.clone();
        self.note(Rule::ResumeThrow, || format!("cont:{a} {}", module.tag_label(x)));
        Ok(RunResult::UncaughtThrow { tag: x, payload })
    }

    fn handler_results(&self, ty: TypeIdx) -> Vec<ValType> {
        self.module
            .heap_type(ty)
            .map(|h| h.func_type().results.clone())
            .unwrap_or_default()
    }

    fn delimiter(&self, segs: &[Seg], i: usize) -> Delimiter {
        match &segs[i].kind {
            Kind::Label { .. } => {
                let parent = &segs[i - 1];
                match &parent.code[parent.pc - 1] {
                    Instr::Loop(bt, _) => Delimiter::Label {
                        label_types: bt.params.clone(),
                        cont: vec![parent.code[parent.pc - 1].clone()],
                    },
                    Instr::Block(bt, _) | Instr::If(bt, ..) => Delimiter::Label {
                        label_types: bt.results.clone(),
                        cont: vec![],
                    },
                    other => unreachable!("label opened by {}", other.mnemonic()),
                }
            }
            Kind::Frame { func, locals } => Delimiter::Frame {
                results: self.module.funcs[*func as usize].ty.results.clone(),
                frame: Frame { locals: locals.clone() },
            },
            Kind::Handler { clauses, ty } => Delimiter::Handler {
                clauses: clauses.to_vec(),
                results: self.handler_results(*ty),
            },
            Kind::Base => unreachable!("base segments are outermost"),
        }
    }

    fn segment(&self, segs: &[Seg], values: &[Value], i: usize) -> ContextSegment {
        let end = segs.get(i + 1).map_or(values.len(), |s| s.base);
        let seg = &segs[i];
        ContextSegment {
            values: values[seg.base..end].to_vec(),
            rest: Admin::from_instrs(&seg.code[seg.pc..], &self.module),
        }
    }

    fn context(&self, segs: &[Seg], values: &[Value]) -> ExecContext {
        ExecContext {
            base: self.segment(segs, values, 0),
            nested: (1..segs.len())
                .map(|i| (self.delimiter(segs, i), self.segment(segs, values, i)))
                .collect(),
        }
    }

    /// The current state written out as an administrative configuration.
    pub fn snapshot(&self) -> Config {
        let conts = self
            .store
            .conts
            .iter()
            .map(|e| ContEntry {
                ty: e.ty.clone(),
                state: match &e.state {
                    ContState::Live(c) => ContState::Live(self.context(&c.segs, &c.values)),
                    ContState::Dead => ContState::Dead,
                },
            })
            .collect();
        let code = if self.segs.is_empty() {
            self.stack.iter().cloned().map(Admin::Val).collect()
        } else {
            self.context(&self.segs, &self.stack).plug(vec![])
        };
        Config {
            store: Store {
                module: self.module.clone(),
                conts,
                host: self.store.host.clone(),
            },
            frame: Frame::default(),
            code,
        }
    }
}
