//! Type checking of modules, function bodies and handler clauses.
//!
//! Stack polymorphism is realised with the usual operand stack over a
//! possibly polymorphic base: after an unconditional transfer the known
//! part is cleared and underflow is absorbed.

use std::fmt;

use thiserror::Error;

use crate::ast::*;
use crate::host::builtin_signature;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypingContext {
    pub types: Vec<HeapType>,
    pub funcs: Vec<FuncType>,
    pub tags: Vec<FuncType>,
    pub locals: Vec<ValType>,
    /// Innermost label last; see [`TypingContext::label`].
    pub labels: Vec<Vec<ValType>>,
    /// Result types of the enclosing function, if any.
    pub ret: Option<Vec<ValType>>,
}

impl TypingContext {
    /// Module-level context: no locals, labels or return type.
    pub fn for_module(m: &ModuleDef) -> Self {
        TypingContext {
            types: m.types.iter().map(|t| t.heap.clone()).collect(),
            funcs: m.funcs.iter().map(|f| f.ty.clone()).collect(),
            tags: m.tags.iter().map(|t| t.ty.clone()).collect(),
            locals: vec![],
            labels: vec![],
            ret: None,
        }
    }

    /// Context for checking the body of a function of type `ft`.
    pub fn for_function(&self, ft: &FuncType, locals: &[ValType]) -> Self {
        let mut c = self.clone();
        c.locals = ft.params.iter().chain(locals).cloned().collect();
        c.labels.clear();
        c.ret = Some(ft.results.clone());
        c
    }

    /// `C_label(l)` with de Bruijn indexing.
    pub fn label(&self, l: LabelIdx) -> Option<&Vec<ValType>> {
        let depth = self.labels.len().checked_sub(l as usize + 1)?;
        self.labels.get(depth)
    }

    pub fn tag(&self, x: TagIdx) -> Option<&FuncType> {
        self.tags.get(x as usize)
    }
}

/// Operand stack during checking. `known` has its top last.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StackShape {
    pub known: Vec<ValType>,
    pub polymorphic: bool,
}

impl StackShape {
    pub fn of(types: &[ValType]) -> Self {
        StackShape {
            known: types.to_vec(),
            polymorphic: false,
        }
    }

    pub fn unreachable() -> Self {
        StackShape {
            known: vec![],
            polymorphic: true,
        }
    }

    /// Whether the shape can stand for exactly `types`.
    pub fn matches(&self, types: &[ValType]) -> bool {
        if self.polymorphic {
            types.ends_with(&self.known)
        } else {
            self.known == types
        }
    }
}

impl fmt::Display for StackShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.polymorphic && self.known.is_empty() {
            f.write_str("[...]")
        } else if self.polymorphic {
            write!(f, "[... {}", &fmt_types(&self.known)[1..])
        } else {
            f.write_str(&fmt_types(&self.known))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct TypeError {
    /// `func $f/instr 3/block/instr 1` style location.
    pub path: String,
    pub message: String,
}

type Check<T> = Result<T, String>;

pub(crate) fn mismatch(expected: &[ValType], found: &StackShape) -> String {
    format!("expected {}, found {}", fmt_types(expected), found)
}

pub(crate) fn pop_types(s: &mut StackShape, expected: &[ValType]) -> Check<()> {
    let n = expected.len();
    let k = s.known.len();
    let ok = if k >= n {
        s.known[k - n..] == *expected
    } else {
        s.polymorphic && expected[n - k..] == s.known[..]
    };
    if !ok {
        let shown = StackShape {
            known: s.known[k.saturating_sub(n)..].to_vec(),
            polymorphic: s.polymorphic && k < n,
        };
        return Err(mismatch(expected, &shown));
    }
    s.known.truncate(k.saturating_sub(n));
    Ok(())
}

/// Pops one operand of any type; `None` if it came from a polymorphic base.
fn pop_any(s: &mut StackShape) -> Check<Option<ValType>> {
    match s.known.pop() {
        Some(t) => Ok(Some(t)),
        None if s.polymorphic => Ok(None),
        None => Err("expected an operand, found []".into()),
    }
}

pub(crate) fn push(s: &mut StackShape, types: &[ValType]) {
    s.known.extend_from_slice(types);
}

fn heap_type(c: &TypingContext, t: TypeIdx) -> Check<&HeapType> {
    c.types.get(t as usize).ok_or_else(|| format!("unknown type {t}"))
}

fn func_type_use(c: &TypingContext, t: TypeIdx) -> Check<&FuncType> {
    match heap_type(c, t)? {
        HeapType::Func(ft) => Ok(ft),
        HeapType::Cont(_) => Err(format!("type {t} is a continuation type, expected a function type")),
    }
}

fn cont_type_use(c: &TypingContext, t: TypeIdx) -> Check<&FuncType> {
    match heap_type(c, t)? {
        HeapType::Cont(ft) => Ok(ft),
        HeapType::Func(_) => Err(format!("type {t} is not a continuation type")),
    }
}

fn func(c: &TypingContext, x: FuncIdx) -> Check<&FuncType> {
    c.funcs.get(x as usize).ok_or_else(|| format!("unknown function {x}"))
}

fn tag(c: &TypingContext, x: TagIdx) -> Check<&FuncType> {
    c.tag(x).ok_or_else(|| format!("unknown tag {x}"))
}

fn local(c: &TypingContext, x: LocalIdx) -> Check<&ValType> {
    c.locals.get(x as usize).ok_or_else(|| format!("unknown local {x}"))
}

fn label(c: &TypingContext, l: LabelIdx) -> Check<&Vec<ValType>> {
    c.label(l).ok_or_else(|| format!("unknown label {l}"))
}

fn exception_tag(c: &TypingContext, x: TagIdx) -> Check<&FuncType> {
    let ft = tag(c, x)?;
    if !ft.results.is_empty() {
        return Err(format!(
            "tag {x} has results {} and cannot be thrown",
            fmt_types(&ft.results)
        ));
    }
    Ok(ft)
}

/// `C ⊢ on x l : t2* ok`: the label receives the tag payload followed by a
/// continuation from the tag's results to `t2`.
pub fn check_handler_clause(c: &TypingContext, h: HandlerClause, t2: &[ValType]) -> Result<(), TypeError> {
    clause(c, h, t2).map_err(|message| TypeError {
        path: String::new(),
        message,
    })
}

fn clause(c: &TypingContext, h: HandlerClause, t2: &[ValType]) -> Check<()> {
    let tag_ft = tag(c, h.tag)?;
    let label_types = label(c, h.label)?;
    let mut expected = tag_ft.params.clone();
    expected.push(ValType::cont_ref(FuncType::new(tag_ft.results.clone(), t2.to_vec())));
    if *label_types != expected {
        return Err(format!(
            "handler clause (on {} {}) expects label type {}, found {}",
            h.tag,
            h.label,
            fmt_types(&expected),
            fmt_types(label_types)
        ));
    }
    Ok(())
}

struct Checker {
    path: Vec<String>,
}

impl Checker {
    fn fail(&self, message: String) -> TypeError {
        TypeError {
            path: self.path.join("/"),
            message,
        }
    }

    /// Checks `body` starting from `params`, requiring exactly `results`.
    fn seq(
        &mut self,
        c: &mut TypingContext,
        body: &[Instr],
        params: &[ValType],
        results: &[ValType],
    ) -> Result<(), TypeError> {
        let mut s = StackShape::of(params);
        for (i, instr) in body.iter().enumerate() {
            self.path.push(format!("instr {i}"));
            s = self.instr(c, instr, s)?;
            self.path.pop();
        }
        if !s.matches(results) {
            self.path.push("end".into());
            let e = self.fail(mismatch(results, &s));
            self.path.pop();
            return Err(e);
        }
        Ok(())
    }

    fn block(
        &mut self,
        c: &mut TypingContext,
        kind: &str,
        body: &[Instr],
        bt: &BlockType,
        label_types: &[ValType],
    ) -> Result<(), TypeError> {
        self.path.push(kind.into());
        c.labels.push(label_types.to_vec());
        let r = self.seq(c, body, &bt.params, &bt.results);
        c.labels.pop();
        self.path.pop();
        r
    }

    fn instr(&mut self, c: &mut TypingContext, instr: &Instr, mut s: StackShape) -> Result<StackShape, TypeError> {
        match instr {
            Instr::Block(bt, body) | Instr::Loop(bt, body) | Instr::If(bt, body, _) => {
                if matches!(instr, Instr::If(..)) {
                    pop_types(&mut s, &[ValType::I32]).map_err(|e| self.fail(e))?;
                }
                pop_types(&mut s, &bt.params).map_err(|e| self.fail(e))?;
                match instr {
                    Instr::Block(..) => self.block(c, "block", body, bt, &bt.results)?,
                    Instr::Loop(..) => self.block(c, "loop", body, bt, &bt.params)?,
                    Instr::If(_, then, els) => {
                        self.block(c, "then", then, bt, &bt.results)?;
                        self.block(c, "else", els, bt, &bt.results)?;
                    }
                    _ => unreachable!(),
                }
                push(&mut s, &bt.results);
                Ok(s)
            }
            _ => simple(c, instr, s).map_err(|e| self.fail(e)),
        }
    }
}

/// Rules for instructions without nested bodies.
fn simple(c: &TypingContext, instr: &Instr, mut s: StackShape) -> Check<StackShape> {
    use ValType::I32;
    match instr {
        Instr::Const(t, _) => push(&mut s, &[t.val_type()]),
        Instr::LocalGet(x) => {
            let t = local(c, *x)?.clone();
            push(&mut s, &[t]);
        }
        Instr::LocalSet(x) => pop_types(&mut s, &[local(c, *x)?.clone()])?,
        Instr::LocalTee(x) => {
            let t = local(c, *x)?.clone();
            pop_types(&mut s, std::slice::from_ref(&t))?;
            push(&mut s, &[t]);
        }
        Instr::Br(l) => {
            pop_types(&mut s, label(c, *l)?)?;
            s = StackShape::unreachable();
        }
        Instr::BrIf(l) => {
            let ts = label(c, *l)?.clone();
            pop_types(&mut s, &[I32])?;
            pop_types(&mut s, &ts)?;
            push(&mut s, &ts);
        }
        Instr::Return => {
            let ret = c.ret.as_ref().ok_or("return outside of a function")?;
            pop_types(&mut s, ret)?;
            s = StackShape::unreachable();
        }
        Instr::Unreachable => s = StackShape::unreachable(),
        Instr::Drop => {
            pop_any(&mut s)?;
        }
        Instr::Call(x) => {
            let ft = func(c, *x)?;
            pop_types(&mut s, &ft.params)?;
            push(&mut s, &ft.results);
        }
        Instr::ReturnCall(x) => {
            let ft = func(c, *x)?;
            let ret = c.ret.as_ref().ok_or("return_call outside of a function")?;
            if ft.results != *ret {
                return Err(format!(
                    "return_call target returns {}, enclosing function returns {}",
                    fmt_types(&ft.results),
                    fmt_types(ret)
                ));
            }
            pop_types(&mut s, &ft.params)?;
            s = StackShape::unreachable();
        }
        Instr::CallRef(t) => {
            let ft = func_type_use(c, *t)?;
            pop_types(&mut s, &[ValType::func_ref(ft.clone())])?;
            pop_types(&mut s, &ft.params)?;
            push(&mut s, &ft.results);
        }
        Instr::RefNull(t) => {
            let heap = heap_type(c, *t)?;
            push(&mut s, &[ValType::Ref(Box::new(heap.clone()))]);
        }
        Instr::RefFunc(x) => {
            let ft = func(c, *x)?.clone();
            push(&mut s, &[ValType::func_ref(ft)]);
        }
        Instr::RefIsNull => {
            match pop_any(&mut s)? {
                Some(t) if !t.is_ref() => return Err(format!("expected a reference, found [{t}]")),
                _ => {}
            }
            push(&mut s, &[I32]);
        }
        Instr::Throw(x) => {
            pop_types(&mut s, &exception_tag(c, *x)?.params)?;
            s = StackShape::unreachable();
        }
        Instr::ContNew(t) => {
            let ft = cont_type_use(c, *t)?.clone();
            pop_types(&mut s, &[ValType::func_ref(ft.clone())])?;
            push(&mut s, &[ValType::cont_ref(ft)]);
        }
        Instr::Resume(t, hs) => {
            let ft = cont_type_use(c, *t)?;
            for h in hs.iter() {
                clause(c, *h, &ft.results)?;
            }
            pop_types(&mut s, &[ValType::cont_ref(ft.clone())])?;
            pop_types(&mut s, &ft.params)?;
            push(&mut s, &ft.results);
        }
        Instr::Suspend(x) => {
            let ft = tag(c, *x)?;
            pop_types(&mut s, &ft.params)?;
            push(&mut s, &ft.results);
        }
        Instr::ContBind(src, dst) => {
            let from = cont_type_use(c, *src)?;
            let to = cont_type_use(c, *dst)?;
            let bound = from.params.len().checked_sub(to.params.len());
            let Some(bound) = bound.filter(|_| from.params.ends_with(&to.params) && from.results == to.results) else {
                return Err(format!(
                    "cannot bind continuation type {} to {}",
                    HeapType::Cont(from.clone()),
                    HeapType::Cont(to.clone())
                ));
            };
            pop_types(&mut s, &[ValType::cont_ref(from.clone())])?;
            pop_types(&mut s, &from.params[..bound])?;
            push(&mut s, &[ValType::cont_ref(to.clone())]);
        }
        Instr::ResumeThrow(t, x, hs) => {
            let ft = cont_type_use(c, *t)?;
            let exn = exception_tag(c, *x)?;
            for h in hs.iter() {
                clause(c, *h, &ft.results)?;
            }
            pop_types(&mut s, &[ValType::cont_ref(ft.clone())])?;
            pop_types(&mut s, &exn.params)?;
            push(&mut s, &ft.results);
        }
        Instr::Binary(t, _) => {
            let t = t.val_type();
            pop_types(&mut s, &[t.clone(), t.clone()])?;
            push(&mut s, &[t]);
        }
        Instr::Compare(t, _) => {
            let t = t.val_type();
            pop_types(&mut s, &[t.clone(), t])?;
            push(&mut s, &[I32]);
        }
        Instr::Eqz(t) => {
            pop_types(&mut s, &[t.val_type()])?;
            push(&mut s, &[I32]);
        }
        Instr::Block(..) | Instr::Loop(..) | Instr::If(..) => {
            unreachable!("structured instructions are checked by Checker")
        }
    }
    Ok(s)
}

/// Applies the rule for `instr` to the stack shape `s`.
pub fn check_instr(c: &TypingContext, instr: &Instr, s: StackShape) -> Result<StackShape, TypeError> {
    let checker = Checker {
        path: vec![instr.mnemonic()],
    };
    match instr {
        Instr::Block(..) | Instr::Loop(..) | Instr::If(..) => {
            let mut checker = checker;
            checker.instr(&mut c.clone(), instr, s)
        }
        _ => simple(c, instr, s).map_err(|e| checker.fail(e)),
    }
}

/// `C ⊢ instrs : params → results`.
pub fn check_sequence(
    c: &TypingContext,
    instrs: &[Instr],
    params: &[ValType],
    results: &[ValType],
) -> Result<(), TypeError> {
    let mut c = c.clone();
    Checker { path: vec![] }.seq(&mut c, instrs, params, results)
}

/// Checks every definition; returns all errors found (one per function at most).
pub fn validate_module(m: &ModuleDef) -> Result<(), Vec<TypeError>> {
    let ctx = TypingContext::for_module(m);
    let mut errors = vec![];
    for (i, f) in m.funcs.iter().enumerate() {
        let name = format!("func {}", m.func_label(i as FuncIdx));
        match &f.body {
            FuncBody::Builtin(b) => match builtin_signature(b) {
                Some(sig) if sig.matches(&f.ty) => {}
                Some(_) => errors.push(TypeError {
                    path: name,
                    message: format!("type {} does not match builtin {b:?}", HeapType::Func(f.ty.clone())),
                }),
                None => errors.push(TypeError {
                    path: name,
                    message: format!("unknown builtin {b:?}"),
                }),
            },
            FuncBody::Code(body) => {
                let mut fc = ctx.for_function(&f.ty, &f.locals);
                let mut checker = Checker { path: vec![name] };
                if let Err(e) = checker.seq(&mut fc, body, &[], &f.ty.results) {
                    errors.push(e);
                }
            }
        }
    }
    if let Some(s) = m.start {
        match m.funcs.get(s as usize) {
            Some(f) if f.ty == FuncType::default() => {}
            Some(f) => errors.push(TypeError {
                path: "start".into(),
                message: format!(
                    "start function must have type [] -> [], found {}",
                    HeapType::Func(f.ty.clone())
                ),
            }),
            None => errors.push(TypeError {
                path: "start".into(),
                message: format!("unknown function {s}"),
            }),
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}
