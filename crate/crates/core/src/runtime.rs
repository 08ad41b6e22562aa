//! Runtime state: values, frames, the continuation table, and the
//! administrative instruction form used to write out whole configurations.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::ast::{FuncIdx, FuncType, HandlerClause, HeapType, Instr, ModuleDef, NumType, ValType};
use crate::host::HostState;

pub type ContAddr = u32;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    I32(i32),
    I64(i64),
    NullRef(Arc<HeapType>),
    FuncRef(FuncIdx),
    ContRef(ContAddr),
}

impl Value {
    pub fn null(heap: HeapType) -> Self {
        Value::NullRef(Arc::new(heap))
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::NullRef(_))
    }

    /// Initial value of a declared local.
    pub fn zero(ty: &ValType) -> Self {
        match ty {
            ValType::I32 => Value::I32(0),
            ValType::I64 => Value::I64(0),
            ValType::Ref(heap) => Value::null(HeapType::clone(heap)),
        }
    }

    pub fn as_i32(&self) -> Option<i32> {
        match self {
            Value::I32(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::I32(v) => write!(f, "{v}"),
            Value::I64(v) => write!(f, "{v}"),
            Value::NullRef(_) => f.write_str("null"),
            Value::FuncRef(x) => write!(f, "func:{x}"),
            Value::ContRef(a) => write!(f, "cont:{a}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Frame {
    pub locals: Vec<Value>,
}

impl Frame {
    /// Parameters followed by zero-initialised declared locals.
    pub fn new(args: Vec<Value>, declared: &[ValType]) -> Self {
        let mut locals = args;
        locals.extend(declared.iter().map(Value::zero));
        Frame { locals }
    }
}

/// An administrative instruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Admin {
    /// A source instruction that is not a value.
    Instr(Instr),
    /// A value, including `ref.cont a`.
    Val(Value),
    Trap,
    /// `label_n{cont} body`; `label_types` gives the arity and the branch types.
    Label {
        label_types: Vec<ValType>,
        cont: Vec<Instr>,
        body: Vec<Admin>,
    },
    /// `frame_n{f} body`.
    Frame {
        results: Vec<ValType>,
        frame: Frame,
        body: Vec<Admin>,
    },
    /// `handler{h*} body`; `results` are the handled computation's results.
    Handler {
        clauses: Vec<HandlerClause>,
        results: Vec<ValType>,
        body: Vec<Admin>,
    },
}

impl Admin {
    /// Normalises value-producing constants into [`Admin::Val`].
    pub fn from_instr(instr: &Instr, module: &ModuleDef) -> Admin {
        match instr {
            Instr::Const(NumType::I32, v) => Admin::Val(Value::I32(*v as i32)),
            Instr::Const(NumType::I64, v) => Admin::Val(Value::I64(*v)),
            Instr::RefFunc(x) => Admin::Val(Value::FuncRef(*x)),
            Instr::RefNull(t) => match module.heap_type(*t) {
                Some(heap) => Admin::Val(Value::null(heap.clone())),
                None => Admin::Instr(instr.clone()),
            },
            other => Admin::Instr(other.clone()),
        }
    }

    pub fn from_instrs<'a>(instrs: impl IntoIterator<Item = &'a Instr>, module: &ModuleDef) -> Vec<Admin> {
        instrs.into_iter().map(|i| Admin::from_instr(i, module)).collect()
    }

    pub fn as_value(&self) -> Option<&Value> {
        match self {
            Admin::Val(v) => Some(v),
            _ => None,
        }
    }
}

/// One delimiter of an evaluation context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Delimiter {
    Label {
        label_types: Vec<ValType>,
        cont: Vec<Instr>,
    },
    Frame {
        results: Vec<ValType>,
        frame: Frame,
    },
    Handler {
        clauses: Vec<HandlerClause>,
        results: Vec<ValType>,
    },
}

impl Delimiter {
    pub fn wrap(self, body: Vec<Admin>) -> Admin {
        match self {
            Delimiter::Label { label_types, cont } => Admin::Label {
                label_types,
                cont,
                body,
            },
            Delimiter::Frame { results, frame } => Admin::Frame { results, frame, body },
            Delimiter::Handler { clauses, results } => Admin::Handler { clauses, results, body },
        }
    }
}

/// `v* [_] instr*` at one nesting level.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContextSegment {
    pub values: Vec<Value>,
    pub rest: Vec<Admin>,
}

/// A reified evaluation context: the outermost segment, then nested
/// delimiters each followed by its own segment. The hole sits between the
/// values and the rest of the innermost segment.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecContext {
    pub base: ContextSegment,
    pub nested: Vec<(Delimiter, ContextSegment)>,
}

impl ExecContext {
    /// Context `[_] (call x)` created by `cont.new`.
    pub fn calling(func: FuncIdx) -> Self {
        ExecContext {
            base: ContextSegment {
                values: vec![],
                rest: vec![Admin::Instr(Instr::Call(func))],
            },
            nested: vec![],
        }
    }

    pub fn innermost_mut(&mut self) -> &mut ContextSegment {
        match self.nested.last_mut() {
            Some((_, seg)) => seg,
            None => &mut self.base,
        }
    }

    /// `E[v^n _]`: the values become part of the context.
    pub fn bind(&mut self, values: impl IntoIterator<Item = Value>) {
        self.innermost_mut().values.extend(values);
    }

    /// `E[fill]` as an instruction sequence.
    pub fn plug(&self, fill: Vec<Admin>) -> Vec<Admin> {
        let mut inner = fill;
        let segments = std::iter::once((None, &self.base))
            .chain(self.nested.iter().map(|(d, s)| (Some(d), s)))
            .collect::<Vec<_>>();
        for (delim, seg) in segments.into_iter().rev() {
            let mut seq: Vec<Admin> = seg.values.iter().cloned().map(Admin::Val).collect();
            seq.append(&mut inner);
            seq.extend(seg.rest.iter().cloned());
            inner = match delim {
                Some(d) => vec![d.clone().wrap(seq)],
                None => seq,
            };
        }
        inner
    }

    /// Continuation references occurring anywhere in the context.
    pub fn cont_refs(&self) -> Vec<ContAddr> {
        let mut out = vec![];
        collect_refs(&self.plug(vec![]), &mut out);
        for (d, _) in &self.nested {
            if let Delimiter::Frame { frame, .. } = d {
                out.extend(frame.locals.iter().filter_map(cont_addr));
            }
        }
        out
    }
}

fn cont_addr(v: &Value) -> Option<ContAddr> {
    match v {
        Value::ContRef(a) => Some(*a),
        _ => None,
    }
}

fn collect_refs(seq: &[Admin], out: &mut Vec<ContAddr>) {
    for a in seq {
        match a {
            Admin::Val(v) => out.extend(cont_addr(v)),
            Admin::Label { body, .. } | Admin::Handler { body, .. } => collect_refs(body, out),
            Admin::Frame { frame, body, .. } => {
                out.extend(frame.locals.iter().filter_map(cont_addr));
                collect_refs(body, out);
            }
            Admin::Instr(_) | Admin::Trap => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ContState<C> {
    Live(C),
    Dead,
}

/// A continuation table slot. The type outlives the context so that stale
/// references stay typeable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContEntry<C> {
    /// Expected arguments to results.
    pub ty: FuncType,
    pub state: ContState<C>,
}

impl<C> ContEntry<C> {
    pub fn is_live(&self) -> bool {
        matches!(self.state, ContState::Live(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("continuation {0} already consumed")]
pub struct LinearityViolation(pub ContAddr);

/// Global state of one run, generic over the context representation.
#[derive(Clone, Debug)]
pub struct Store<C> {
    pub module: Arc<ModuleDef>,
    pub conts: Vec<ContEntry<C>>,
    pub host: HostState,
}

impl<C> Store<C> {
    pub fn new(module: Arc<ModuleDef>) -> Self {
        Store {
            module,
            conts: Vec::new(),
            host: HostState::new(),
        }
    }

    /// Allocates a fresh live continuation. Addresses are never reused.
    pub fn alloc_cont(&mut self, ctx: C, ty: FuncType) -> ContAddr {
        self.conts.push(ContEntry {
            ty,
            state: ContState::Live(ctx),
        });
        (self.conts.len() - 1) as ContAddr
    }

    /// Takes the context out and marks the slot dead.
    pub fn consume_cont(&mut self, addr: ContAddr) -> Result<C, LinearityViolation> {
        let entry = self.conts.get_mut(addr as usize).ok_or(LinearityViolation(addr))?;
        match std::mem::replace(&mut entry.state, ContState::Dead) {
            ContState::Live(ctx) => Ok(ctx),
            ContState::Dead => Err(LinearityViolation(addr)),
        }
    }

    pub fn cont_type(&self, addr: ContAddr) -> Option<&FuncType> {
        self.conts.get(addr as usize).map(|e| &e.ty)
    }

    pub fn dead_count(&self) -> usize {
        self.conts.iter().filter(|e| !e.is_live()).count()
    }
}

impl<C: Clone> Store<C> {
    /// Reads a live context without consuming it.
    pub fn peek_cont(&self, addr: ContAddr) -> Result<C, LinearityViolation> {
        match self.conts.get(addr as usize).map(|e| &e.state) {
            Some(ContState::Live(ctx)) => Ok(ctx.clone()),
            _ => Err(LinearityViolation(addr)),
        }
    }
}

/// `s; f; instr*` in administrative form.
#[derive(Clone, Debug)]
pub struct Config {
    pub store: Store<ExecContext>,
    pub frame: Frame,
    pub code: Vec<Admin>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> Store<ExecContext> {
        Store::new(Arc::new(ModuleDef::default()))
    }

    #[test]
    fn allocation_is_monotonic_from_zero() {
        let mut s = store();
        assert_eq!(s.alloc_cont(ExecContext::calling(0), FuncType::default()), 0);
        assert_eq!(s.alloc_cont(ExecContext::calling(1), FuncType::default()), 1);
        s.consume_cont(0).unwrap();
        assert_eq!(s.alloc_cont(ExecContext::calling(2), FuncType::default()), 2);
        assert!(!s.conts[0].is_live());
        assert_eq!(s.dead_count(), 1);
    }

    #[test]
    fn second_consume_is_a_linearity_violation() {
        let mut s = store();
        let a = s.alloc_cont(ExecContext::calling(0), FuncType::default());
        assert_eq!(s.consume_cont(a), Ok(ExecContext::calling(0)));
        assert_eq!(s.conts[a as usize].state, ContState::Dead);
        assert_eq!(s.consume_cont(a), Err(LinearityViolation(a)));
        assert_eq!(s.cont_type(a), Some(&FuncType::default()));
    }

    #[test]
    fn plug_rebuilds_nested_sequences() {
        let ctx = ExecContext {
            base: ContextSegment {
                values: vec![Value::I32(1)],
                rest: vec![Admin::Instr(Instr::Drop)],
            },
            nested: vec![(
                Delimiter::Label {
                    label_types: vec![],
                    cont: vec![],
                },
                ContextSegment {
                    values: vec![Value::I32(2)],
                    rest: vec![Admin::Instr(Instr::Return)],
                },
            )],
        };
        let plugged = ctx.plug(vec![Admin::Instr(Instr::Unreachable)]);
        assert_eq!(
            plugged,
            vec![
                Admin::Val(Value::I32(1)),
                Admin::Label {
                    label_types: vec![],
                    cont: vec![],
                    body: vec![
                        Admin::Val(Value::I32(2)),
                        Admin::Instr(Instr::Unreachable),
                        Admin::Instr(Instr::Return),
                    ],
                },
                Admin::Instr(Instr::Drop),
            ]
        );
    }
}
