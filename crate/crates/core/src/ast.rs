//! Abstract syntax of the core language with continuation instructions.
//!
//! All names are resolved by the parser: every index stored here is numeric,
//! and label indices are relative (0 is the innermost enclosing label).

use std::fmt;
use std::sync::Arc;

pub type TypeIdx = u32;
pub type FuncIdx = u32;
pub type TagIdx = u32;
pub type LocalIdx = u32;
pub type LabelIdx = u32;

/// A value type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValType {
    I32,
    I64,
    Ref(Box<HeapType>),
}

impl ValType {
    pub fn func_ref(ft: FuncType) -> Self {
        ValType::Ref(Box::new(HeapType::Func(ft)))
    }

    pub fn cont_ref(ft: FuncType) -> Self {
        ValType::Ref(Box::new(HeapType::Cont(ft)))
    }

    pub fn is_ref(&self) -> bool {
        matches!(self, ValType::Ref(_))
    }
}

/// What a reference points at: a function or a continuation of the given type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeapType {
    Func(FuncType),
    Cont(FuncType),
}

impl HeapType {
    pub fn func_type(&self) -> &FuncType {
        match self {
            HeapType::Func(ft) | HeapType::Cont(ft) => ft,
        }
    }

    pub fn as_cont(&self) -> Option<&FuncType> {
        match self {
            HeapType::Cont(ft) => Some(ft),
            HeapType::Func(_) => None,
        }
    }

    pub fn as_func(&self) -> Option<&FuncType> {
        match self {
            HeapType::Func(ft) => Some(ft),
            HeapType::Cont(_) => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FuncType {
    pub params: Vec<ValType>,
    pub results: Vec<ValType>,
}

impl FuncType {
    pub fn new(params: impl Into<Vec<ValType>>, results: impl Into<Vec<ValType>>) -> Self {
        FuncType {
            params: params.into(),
            results: results.into(),
        }
    }

    /// Parameter and result counts.
    pub fn arity(&self) -> (usize, usize) {
        (self.params.len(), self.results.len())
    }
}

/// Free-function form of [`FuncType::arity`].
pub fn arity_of(ft: &FuncType) -> (usize, usize) {
    ft.arity()
}

/// Inline block signature `t1* -> t2*`.
pub type BlockType = FuncType;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NumType {
    I32,
    I64,
}

impl NumType {
    pub fn val_type(self) -> ValType {
        match self {
            NumType::I32 => ValType::I32,
            NumType::I64 => ValType::I64,
        }
    }

    pub fn prefix(self) -> &'static str {
        match self {
            NumType::I32 => "i32",
            NumType::I64 => "i64",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
}

impl BinOp {
    pub const ALL: [BinOp; 6] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::And, BinOp::Or, BinOp::Xor];

    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    LtU,
    GtU,
    LeU,
    GeU,
    LtS,
    GtS,
}

impl CmpOp {
    pub const ALL: [CmpOp; 8] = [
        CmpOp::Eq,
        CmpOp::Ne,
        CmpOp::LtU,
        CmpOp::GtU,
        CmpOp::LeU,
        CmpOp::GeU,
        CmpOp::LtS,
        CmpOp::GtS,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CmpOp::Eq => "eq",
            CmpOp::Ne => "ne",
            CmpOp::LtU => "lt_u",
            CmpOp::GtU => "gt_u",
            CmpOp::LeU => "le_u",
            CmpOp::GeU => "ge_u",
            CmpOp::LtS => "lt_s",
            CmpOp::GtS => "gt_s",
        }
    }
}

/// `(on tag label)`: suspensions with `tag` branch to `label`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HandlerClause {
    pub tag: TagIdx,
    pub label: LabelIdx,
}

/// Instruction bodies are shared so that runtime code pointers are cheap to clone.
pub type Body = Arc<[Instr]>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instr {
    Const(NumType, i64),
    LocalGet(LocalIdx),
    LocalSet(LocalIdx),
    LocalTee(LocalIdx),
    Block(BlockType, Body),
    Loop(BlockType, Body),
    If(BlockType, Body, Body),
    Br(LabelIdx),
    BrIf(LabelIdx),
    Return,
    Unreachable,
    Drop,
    Call(FuncIdx),
    CallRef(TypeIdx),
    ReturnCall(FuncIdx),
    RefNull(TypeIdx),
    RefFunc(FuncIdx),
    RefIsNull,
    Throw(TagIdx),
    ContNew(TypeIdx),
    Resume(TypeIdx, Arc<[HandlerClause]>),
    Suspend(TagIdx),
    ContBind(TypeIdx, TypeIdx),
    ResumeThrow(TypeIdx, TagIdx, Arc<[HandlerClause]>),
    Binary(NumType, BinOp),
    Compare(NumType, CmpOp),
    Eqz(NumType),
}

impl Instr {
    /// The text-format mnemonic.
    pub fn mnemonic(&self) -> String {
        match self {
            Instr::Const(t, _) => format!("{}.const", t.prefix()),
            Instr::LocalGet(_) => "local.get".into(),
            Instr::LocalSet(_) => "local.set".into(),
            Instr::LocalTee(_) => "local.tee".into(),
            Instr::Block(..) => "block".into(),
            Instr::Loop(..) => "loop".into(),
            Instr::If(..) => "if".into(),
            Instr::Br(_) => "br".into(),
            Instr::BrIf(_) => "br_if".into(),
            Instr::Return => "return".into(),
            Instr::Unreachable => "unreachable".into(),
            Instr::Drop => "drop".into(),
            Instr::Call(_) => "call".into(),
            Instr::CallRef(_) => "call_ref".into(),
            Instr::ReturnCall(_) => "return_call".into(),
            Instr::RefNull(_) => "ref.null".into(),
            Instr::RefFunc(_) => "ref.func".into(),
            Instr::RefIsNull => "ref.is_null".into(),
            Instr::Throw(_) => "throw".into(),
            Instr::ContNew(_) => "cont.new".into(),
            Instr::Resume(..) => "resume".into(),
            Instr::Suspend(_) => "suspend".into(),
            Instr::ContBind(..) => "cont.bind".into(),
            Instr::ResumeThrow(..) => "resume_throw".into(),
            Instr::Binary(t, op) => format!("{}.{}", t.prefix(), op.name()),
            Instr::Compare(t, op) => format!("{}.{}", t.prefix(), op.name()),
            Instr::Eqz(t) => format!("{}.eqz", t.prefix()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeDef {
    pub name: Option<String>,
    pub heap: HeapType,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagDef {
    pub name: Option<String>,
    pub ty: FuncType,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FuncBody {
    Code(Body),
    /// Bound to a named entry of the host registry.
    Builtin(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuncDef {
    pub name: Option<String>,
    pub ty: FuncType,
    pub locals: Vec<ValType>,
    pub body: FuncBody,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ModuleDef {
    pub types: Vec<TypeDef>,
    pub tags: Vec<TagDef>,
    pub funcs: Vec<FuncDef>,
    pub start: Option<FuncIdx>,
}

impl ModuleDef {
    pub fn heap_type(&self, idx: TypeIdx) -> Option<&HeapType> {
        self.types.get(idx as usize).map(|t| &t.heap)
    }

    pub fn func_index(&self, name: &str) -> Option<FuncIdx> {
        let name = name.strip_prefix('$').unwrap_or(name);
        self.funcs
            .iter()
            .position(|f| f.name.as_deref() == Some(name))
            .map(|i| i as FuncIdx)
    }

    /// `$name` if the tag was declared with one, its index otherwise.
    pub fn tag_label(&self, idx: TagIdx) -> String {
        match self.tags.get(idx as usize).and_then(|t| t.name.as_deref()) {
            Some(name) => format!("${name}"),
            None => idx.to_string(),
        }
    }

    pub fn func_label(&self, idx: FuncIdx) -> String {
        match self.funcs.get(idx as usize).and_then(|f| f.name.as_deref()) {
            Some(name) => format!("${name}"),
            None => idx.to_string(),
        }
    }
}

/// A literal argument of a scripted invocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Literal {
    I32(i32),
    I64(i64),
}

impl Literal {
    pub fn val_type(self) -> ValType {
        match self {
            Literal::I32(_) => ValType::I32,
            Literal::I64(_) => ValType::I64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Invocation {
    pub func: FuncIdx,
    pub args: Vec<Literal>,
}

impl fmt::Display for ValType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValType::I32 => f.write_str("i32"),
            ValType::I64 => f.write_str("i64"),
            ValType::Ref(heap) => write!(f, "(ref {heap})"),
        }
    }
}

impl fmt::Display for HeapType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeapType::Func(ft) => write!(f, "{ft}"),
            HeapType::Cont(ft) => write!(f, "(cont {ft})"),
        }
    }
}

impl fmt::Display for FuncType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(func")?;
        if !self.params.is_empty() {
            f.write_str(" (param")?;
            for t in &self.params {
                write!(f, " {t}")?;
            }
            f.write_str(")")?;
        }
        if !self.results.is_empty() {
            f.write_str(" (result")?;
            for t in &self.results {
                write!(f, " {t}")?;
            }
            f.write_str(")")?;
        }
        f.write_str(")")
    }
}

/// Renders a type list as `[i32 i64]`.
pub fn fmt_types(types: &[ValType]) -> String {
    let inner: Vec<String> = types.iter().map(ToString::to_string).collect();
    format!("[{}]", inner.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arity_counts_lists() {
        assert_eq!(arity_of(&FuncType::default()), (0, 0));
        assert_eq!(arity_of(&FuncType::new([ValType::I32], [])), (1, 0));
        assert_eq!(
            arity_of(&FuncType::new([ValType::I32, ValType::I64], [ValType::I32])),
            (2, 1)
        );
    }

    #[test]
    fn valtype_equality_is_structural() {
        let a = ValType::cont_ref(FuncType::new([ValType::I32], []));
        let b = ValType::cont_ref(FuncType::new([ValType::I32], []));
        let c = ValType::func_ref(FuncType::new([ValType::I32], []));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn type_rendering() {
        let ft = FuncType::new([ValType::I32], [ValType::cont_ref(FuncType::default())]);
        assert_eq!(ft.to_string(), "(func (param i32) (result (ref (cont (func)))))");
        assert_eq!(fmt_types(&[ValType::I32, ValType::I64]), "[i32 i64]");
    }
}
