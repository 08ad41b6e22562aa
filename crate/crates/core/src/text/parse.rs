//! Text format to AST, resolving every symbolic name.

use std::collections::HashMap;
use std::sync::Arc;

use super::sexpr::{read_all, SExpr};
use super::{ParseError, SourceSpan};
use crate::ast::*;
use crate::host::builtin_signature;

type PResult<T> = Result<T, ParseError>;

fn err<T>(span: SourceSpan, msg: impl Into<String>) -> PResult<T> {
    Err(ParseError::new(span, msg))
}

/// Parses a source file holding exactly one module.
pub fn parse_module(source: &str) -> PResult<ModuleDef> {
    let exprs = read_all(source)?;
    match exprs.as_slice() {
        [] => err(SourceSpan::default(), "expected a module"),
        [module] => module_from(module),
        [_, extra, ..] => err(extra.span(), "unexpected form after module"),
    }
}

/// Parses a module followed by `(invoke ...)` forms.
pub fn parse_script(source: &str) -> PResult<(ModuleDef, Vec<Invocation>)> {
    let exprs = read_all(source)?;
    let Some((first, rest)) = exprs.split_first() else {
        return err(SourceSpan::default(), "expected a module");
    };
    let module = module_from(first)?;
    let invocations = rest
        .iter()
        .map(|e| invocation(&module, e))
        .collect::<PResult<Vec<_>>>()?;
    Ok((module, invocations))
}

fn invocation(module: &ModuleDef, expr: &SExpr) -> PResult<Invocation> {
    let Some(items) = expr.headed("invoke") else {
        return err(expr.span(), "expected `(invoke ...)`");
    };
    let Some((target, args)) = items.split_first() else {
        return err(expr.span(), "invoke needs a function name or index");
    };
    let func = match (target.string(), target.id(), target.word()) {
        (Some(name), _, _) | (_, Some(name), _) => module.func_index(name),
        (_, _, Some(w)) => parse_u32(w).filter(|i| (*i as usize) < module.funcs.len()),
        _ => None,
    };
    let Some(func) = func else {
        return err(target.span(), "invoke references an unknown function");
    };
    let args = args
        .iter()
        .map(|a| {
            let (ty, value) = match (a.headed("i32.const"), a.headed("i64.const")) {
                (Some([v]), _) => (NumType::I32, v),
                (_, Some([v])) => (NumType::I64, v),
                _ => return err(a.span(), "invoke arguments must be i32.const or i64.const"),
            };
            let n = int_literal(value, ty)?;
            Ok(match ty {
                NumType::I32 => Literal::I32(n as i32),
                NumType::I64 => Literal::I64(n),
            })
        })
        .collect::<PResult<Vec<_>>>()?;
    Ok(Invocation { func, args })
}

fn parse_u32(w: &str) -> Option<u32> {
    let w = w.replace('_', "");
    match w.strip_prefix("0x") {
        Some(hex) => u32::from_str_radix(hex, 16).ok(),
        None => w.parse().ok(),
    }
}

/// Integer literal for a constant of type `ty`, wrapped to its width and
/// sign-extended into an `i64`.
fn int_literal(expr: &SExpr, ty: NumType) -> PResult<i64> {
    let Some(text) = expr.word() else {
        return err(expr.span(), "expected an integer literal");
    };
    let clean = text.replace('_', "");
    let (neg, digits) = match clean.as_bytes().first() {
        Some(b'-') => (true, &clean[1..]),
        Some(b'+') => (false, &clean[1..]),
        _ => (false, &clean[..]),
    };
    let magnitude = match digits.strip_prefix("0x") {
        Some(hex) => u128::from_str_radix(hex, 16),
        None => digits.parse::<u128>(),
    };
    let Ok(magnitude) = magnitude else {
        return err(expr.span(), format!("malformed integer literal `{text}`"));
    };
    let bits = match ty {
        NumType::I32 => 32,
        NumType::I64 => 64,
    };
    let in_range = if neg {
        magnitude <= 1u128 << (bits - 1)
    } else {
        magnitude < 1u128 << bits
    };
    if !in_range {
        return err(
            expr.span(),
            format!("integer literal `{text}` out of range for {}", ty.prefix()),
        );
    }
    let raw = if neg {
        (magnitude as i128).wrapping_neg()
    } else {
        magnitude as i128
    };
    Ok(match ty {
        NumType::I32 => i64::from(raw as u32 as i32),
        NumType::I64 => raw as u64 as i64,
    })
}

struct Names {
    types: HashMap<String, TypeIdx>,
    funcs: HashMap<String, FuncIdx>,
    tags: HashMap<String, TagIdx>,
}

fn module_from(expr: &SExpr) -> PResult<ModuleDef> {
    let Some(mut fields) = expr.headed("module") else {
        return err(expr.span(), "expected `(module ...)`");
    };
    if let Some(first) = fields.first() {
        if first.id().is_some() {
            fields = &fields[1..];
        }
    }

    let mut module = ModuleDef::default();
    let mut names = Names {
        types: HashMap::new(),
        funcs: HashMap::new(),
        tags: HashMap::new(),
    };

    // Types first, in order: a type may only mention earlier types.
    for field in fields {
        if let Some(items) = field.headed("type") {
            let (name, rest) = split_name(items);
            let def = match rest {
                [def] => heap_type_def(&module, &names, def)?,
                _ => {
                    return err(
                        field.span(),
                        "type definition needs exactly one `(func ...)` or `(cont ...)`",
                    )
                }
            };
            if let Some(n) = name {
                declare(&mut names.types, n, module.types.len(), field.span(), "type")?;
            }
            module.types.push(TypeDef {
                name: name.map(str::to_string),
                heap: def,
            });
        }
    }

    let mut func_fields = vec![];
    let mut tag_fields = vec![];
    let mut start_field = None;
    for field in fields {
        match field.head_word() {
            Some("type") => {}
            Some("func") => {
                let items = field.headed("func").unwrap_or_default();
                if let (Some(n), _) = split_name(items) {
                    declare(&mut names.funcs, n, func_fields.len(), field.span(), "function")?;
                }
                func_fields.push(field);
            }
            Some("tag") => {
                let items = field.headed("tag").unwrap_or_default();
                if let (Some(n), _) = split_name(items) {
                    declare(&mut names.tags, n, tag_fields.len(), field.span(), "tag")?;
                }
                tag_fields.push(field);
            }
            Some("start") => {
                if start_field.is_some() {
                    return err(field.span(), "multiple start functions");
                }
                start_field = Some(field);
            }
            _ => return err(field.span(), "unknown module field"),
        }
    }

    for field in tag_fields {
        let items = field.headed("tag").unwrap_or_default();
        let (name, rest) = split_name(items);
        let (ty, rest) = signature(&module, &names, rest, false)?;
        if let Some(extra) = rest.first() {
            return err(extra.span(), "unexpected item in tag definition");
        }
        module.tags.push(TagDef {
            name: name.map(str::to_string),
            ty: ty.func_type,
        });
    }

    let mut bodies = vec![];
    for field in &func_fields {
        let items = field.headed("func").unwrap_or_default();
        let (name, rest) = split_name(items);
        let (builtin, rest) = match rest.first().and_then(|e| e.headed("builtin")) {
            Some([s]) => match s.string() {
                Some(b) => (Some((b.to_string(), s.span())), &rest[1..]),
                None => return err(s.span(), "builtin name must be a string"),
            },
            Some(_) => return err(rest[0].span(), "expected `(builtin \"name\")`"),
            None => (None, rest),
        };
        let (sig, rest) = signature(&module, &names, rest, true)?;
        let (locals, local_names, rest) = locals(&module, &names, rest)?;
        let mut def = FuncDef {
            name: name.map(str::to_string),
            ty: sig.func_type.clone(),
            locals,
            body: FuncBody::Code(Arc::from(Vec::new())),
        };
        match builtin {
            Some((b, span)) => {
                let Some(reg) = builtin_signature(&b) else {
                    return err(span, format!("unknown builtin {b:?}"));
                };
                if !def.locals.is_empty() || !rest.is_empty() {
                    return err(field.span(), "a builtin function has no locals or body");
                }
                if !sig.explicit {
                    let cont = module
                        .types
                        .iter()
                        .find(|t| t.name.as_deref() == Some("cont"))
                        .and_then(|t| t.heap.as_cont());
                    def.ty = match reg.instantiate(cont) {
                        Some(ft) => ft,
                        None => {
                            return err(
                                field.span(),
                                format!("builtin {b:?} needs a declared signature or a `$cont` type"),
                            )
                        }
                    };
                }
                def.body = FuncBody::Builtin(b);
            }
            None => {
                let mut names_for_locals = sig.param_names.clone();
                names_for_locals.extend(local_names);
                bodies.push((module.funcs.len(), names_for_locals, rest));
            }
        }
        module.funcs.push(def);
    }

    for (idx, local_names, body) in bodies {
        let mut fp = FuncParser {
            module: &module,
            names: &names,
            locals: local_names,
            labels: vec![],
        };
        let code = fp.body(body)?;
        module.funcs[idx].body = FuncBody::Code(code.into());
    }

    if let Some(field) = start_field {
        let items = field.headed("start").unwrap_or_default();
        let [target] = items else {
            return err(field.span(), "start takes one function index");
        };
        module.start = Some(resolve(&names.funcs, module.funcs.len(), target, "function")?);
    }
    Ok(module)
}

fn split_name(items: &[SExpr]) -> (Option<&str>, &[SExpr]) {
    match items.first().and_then(SExpr::id) {
        Some(n) => (Some(n), &items[1..]),
        None => (None, items),
    }
}

fn declare(map: &mut HashMap<String, u32>, name: &str, idx: usize, span: SourceSpan, what: &str) -> PResult<()> {
    if map.insert(name.to_string(), idx as u32).is_some() {
        return err(span, format!("duplicate {what} name ${name}"));
    }
    Ok(())
}

/// Resolves `$name` or a numeric index against a namespace of `len` entries.
fn resolve(map: &HashMap<String, u32>, len: usize, expr: &SExpr, what: &str) -> PResult<u32> {
    if let Some(name) = expr.id() {
        return match map.get(name) {
            Some(i) => Ok(*i),
            None => err(expr.span(), format!("unbound {what} name ${name}")),
        };
    }
    match expr.word().and_then(parse_u32) {
        Some(i) if (i as usize) < len => Ok(i),
        Some(i) => err(expr.span(), format!("{what} index {i} out of range")),
        None => err(expr.span(), format!("expected a {what} index")),
    }
}

fn type_ref<'m>(module: &'m ModuleDef, names: &Names, expr: &SExpr) -> PResult<(TypeIdx, &'m HeapType)> {
    let idx = resolve(&names.types, module.types.len(), expr, "type")?;
    Ok((idx, &module.types[idx as usize].heap))
}

fn heap_type_def(module: &ModuleDef, names: &Names, expr: &SExpr) -> PResult<HeapType> {
    if let Some(items) = expr.headed("func") {
        let (sig, rest) = signature(module, names, items, false)?;
        if let Some(extra) = rest.first() {
            return err(extra.span(), "unexpected item in function type");
        }
        return Ok(HeapType::Func(sig.func_type));
    }
    if let Some(items) = expr.headed("cont") {
        let [inner] = items else {
            return err(expr.span(), "`cont` takes one function type");
        };
        let ft = if inner.list().is_some() {
            match heap_type_def(module, names, inner)? {
                HeapType::Func(ft) => ft,
                HeapType::Cont(_) => return err(inner.span(), "`cont` must wrap a function type"),
            }
        } else {
            match type_ref(module, names, inner)? {
                (_, HeapType::Func(ft)) => ft.clone(),
                (_, HeapType::Cont(_)) => return err(inner.span(), "`cont` must wrap a function type"),
            }
        };
        return Ok(HeapType::Cont(ft));
    }
    err(expr.span(), "expected `(func ...)` or `(cont ...)`")
}

fn val_type(module: &ModuleDef, names: &Names, expr: &SExpr) -> PResult<ValType> {
    match expr.word() {
        Some("i32") => return Ok(ValType::I32),
        Some("i64") => return Ok(ValType::I64),
        Some(other) => return err(expr.span(), format!("unsupported value type `{other}`")),
        None => {}
    }
    let Some(mut items) = expr.headed("ref") else {
        return err(expr.span(), "expected a value type");
    };
    if items.first().and_then(SExpr::word) == Some("null") {
        items = &items[1..];
    }
    let [target] = items else {
        return err(expr.span(), "`ref` takes one heap type");
    };
    let heap = if target.list().is_some() {
        heap_type_def(module, names, target)?
    } else {
        type_ref(module, names, target)?.1.clone()
    };
    Ok(ValType::Ref(Box::new(heap)))
}

struct Signature {
    func_type: FuncType,
    param_names: Vec<Option<String>>,
    explicit: bool,
}

/// `(type x)? (param ...)* (result ...)*`, returning the unconsumed tail.
fn signature<'e>(
    module: &ModuleDef,
    names: &Names,
    mut items: &'e [SExpr],
    allow_param_names: bool,
) -> PResult<(Signature, &'e [SExpr])> {
    let mut declared = None;
    if let Some(first) = items.first() {
        if let Some(t) = first.headed("type") {
            let [t] = t else {
                return err(first.span(), "`type` takes one index");
            };
            match type_ref(module, names, t)? {
                (_, HeapType::Func(ft)) => declared = Some(ft.clone()),
                _ => return err(t.span(), "type use must name a function type"),
            }
            items = &items[1..];
        }
    }
    let mut ft = FuncType::default();
    let mut param_names = vec![];
    let mut explicit = false;
    while let Some(first) = items.first() {
        if let Some(ps) = first.headed("param") {
            explicit = true;
            if let Some(n) = ps.first().and_then(SExpr::id) {
                if !allow_param_names {
                    return err(first.span(), "named parameters are not allowed here");
                }
                let [_, t] = ps else {
                    return err(first.span(), "a named parameter has exactly one type");
                };
                ft.params.push(val_type(module, names, t)?);
                param_names.push(Some(n.to_string()));
            } else {
                for t in ps {
                    ft.params.push(val_type(module, names, t)?);
                    param_names.push(None);
                }
            }
        } else if let Some(rs) = first.headed("result") {
            explicit = true;
            for t in rs {
                ft.results.push(val_type(module, names, t)?);
            }
        } else {
            break;
        }
        items = &items[1..];
    }
    let func_type = match declared {
        Some(d) if explicit && d != ft => {
            return err(
                items.first().map_or(SourceSpan::default(), SExpr::span),
                "inline signature disagrees with type use",
            )
        }
        Some(d) => {
            if param_names.is_empty() {
                param_names = vec![None; d.params.len()];
            }
            explicit = true;
            d
        }
        None => ft,
    };
    Ok((
        Signature {
            func_type,
            param_names,
            explicit,
        },
        items,
    ))
}

#[allow(clippy::type_complexity)]
fn locals<'e>(
    module: &ModuleDef,
    names: &Names,
    mut items: &'e [SExpr],
) -> PResult<(Vec<ValType>, Vec<Option<String>>, &'e [SExpr])> {
    let mut tys = vec![];
    let mut local_names = vec![];
    while let Some(ls) = items.first().and_then(|e| e.headed("local")) {
        if let Some(n) = ls.first().and_then(SExpr::id) {
            let [_, t] = ls else {
                return err(items[0].span(), "a named local has exactly one type");
            };
            tys.push(val_type(module, names, t)?);
            local_names.push(Some(n.to_string()));
        } else {
            for t in ls {
                tys.push(val_type(module, names, t)?);
                local_names.push(None);
            }
        }
        items = &items[1..];
    }
    Ok((tys, local_names, items))
}

struct FuncParser<'a> {
    module: &'a ModuleDef,
    names: &'a Names,
    locals: Vec<Option<String>>,
    /// Innermost label last.
    labels: Vec<Option<String>>,
}

impl FuncParser<'_> {
    fn body(&mut self, items: &[SExpr]) -> PResult<Vec<Instr>> {
        let mut out = vec![];
        let mut pos = 0;
        if let Some(stop) = self.seq(items, &mut pos, &mut out)? {
            return err(items[pos - 1].span(), format!("unexpected `{stop}`"));
        }
        Ok(out)
    }

    /// Parses instructions until the end of `items` or a bare `end`/`else`,
    /// which is consumed and returned.
    fn seq(&mut self, items: &[SExpr], pos: &mut usize, out: &mut Vec<Instr>) -> PResult<Option<&'static str>> {
        while *pos < items.len() {
            let item = &items[*pos];
            match item.word() {
                Some("end") => {
                    *pos += 1;
                    return Ok(Some("end"));
                }
                Some("else") => {
                    *pos += 1;
                    return Ok(Some("else"));
                }
                Some(_) => self.flat(items, pos, out)?,
                None if item.list().is_some() => {
                    self.folded(item, out)?;
                    *pos += 1;
                }
                None => return err(item.span(), "expected an instruction"),
            }
        }
        Ok(None)
    }

    fn local(&self, expr: &SExpr) -> PResult<LocalIdx> {
        if let Some(name) = expr.id() {
            return match self.locals.iter().position(|l| l.as_deref() == Some(name)) {
                Some(i) => Ok(i as LocalIdx),
                None => err(expr.span(), format!("unbound local name ${name}")),
            };
        }
        match expr.word().and_then(parse_u32) {
            Some(i) if (i as usize) < self.locals.len() => Ok(i),
            Some(i) => err(expr.span(), format!("local index {i} out of range")),
            None => err(expr.span(), "expected a local index"),
        }
    }

    fn label(&self, expr: &SExpr) -> PResult<LabelIdx> {
        if let Some(name) = expr.id() {
            return match self.labels.iter().rev().position(|l| l.as_deref() == Some(name)) {
                Some(depth) => Ok(depth as LabelIdx),
                None => err(expr.span(), format!("unbound label name ${name}")),
            };
        }
        match expr.word().and_then(parse_u32) {
            Some(i) => Ok(i),
            None => err(expr.span(), "expected a label index"),
        }
    }

    fn func(&self, expr: &SExpr) -> PResult<FuncIdx> {
        resolve(&self.names.funcs, self.module.funcs.len(), expr, "function")
    }

    fn tag(&self, expr: &SExpr) -> PResult<TagIdx> {
        resolve(&self.names.tags, self.module.tags.len(), expr, "tag")
    }

    fn type_use(&self, expr: &SExpr) -> PResult<TypeIdx> {
        resolve(&self.names.types, self.module.types.len(), expr, "type")
    }

    fn clauses(&self, items: &[SExpr], pos: &mut usize) -> PResult<Arc<[HandlerClause]>> {
        let mut out = vec![];
        while let Some(on) = items.get(*pos).and_then(|e| e.headed("on")) {
            let [tag, label] = on else {
                return err(items[*pos].span(), "handler clause is `(on tag label)`");
            };
            out.push(HandlerClause {
                tag: self.tag(tag)?,
                label: self.label(label)?,
            });
            *pos += 1;
        }
        Ok(out.into())
    }

    fn block_type(&self, items: &[SExpr], pos: &mut usize) -> PResult<BlockType> {
        let (sig, rest) = signature(self.module, self.names, &items[*pos..], false)?;
        *pos = items.len() - rest.len();
        Ok(sig.func_type)
    }

    fn opt_label_name(items: &[SExpr], pos: &mut usize) -> Option<String> {
        let name = items.get(*pos).and_then(SExpr::id).map(str::to_string);
        if name.is_some() {
            *pos += 1;
        }
        name
    }

    /// Reads the immediates of a plain (non-block) instruction starting at
    /// `items[*pos]`.
    fn plain(&self, op: &SExpr, items: &[SExpr], pos: &mut usize) -> PResult<Instr> {
        let name = op.word().unwrap_or_default();
        let mut arg = |what: &str| -> PResult<&SExpr> {
            let e = items
                .get(*pos)
                .filter(|e| e.list().is_none())
                .ok_or_else(|| ParseError::new(op.span(), format!("`{name}` expects {what}")))?;
            *pos += 1;
            Ok(e)
        };
        let instr = match name {
            "i32.const" => Instr::Const(NumType::I32, int_literal(arg("an integer")?, NumType::I32)?),
            "i64.const" => Instr::Const(NumType::I64, int_literal(arg("an integer")?, NumType::I64)?),
            "local.get" => Instr::LocalGet(self.local(arg("a local")?)?),
            "local.set" => Instr::LocalSet(self.local(arg("a local")?)?),
            "local.tee" => Instr::LocalTee(self.local(arg("a local")?)?),
            "br" => Instr::Br(self.label(arg("a label")?)?),
            "br_if" => Instr::BrIf(self.label(arg("a label")?)?),
            "return" => Instr::Return,
            "unreachable" => Instr::Unreachable,
            "drop" => Instr::Drop,
            "call" => Instr::Call(self.func(arg("a function")?)?),
            "return_call" => Instr::ReturnCall(self.func(arg("a function")?)?),
            "call_ref" => Instr::CallRef(self.type_use(arg("a type")?)?),
            "ref.null" => Instr::RefNull(self.type_use(arg("a type")?)?),
            "ref.func" => Instr::RefFunc(self.func(arg("a function")?)?),
            "ref.is_null" => Instr::RefIsNull,
            "throw" => Instr::Throw(self.tag(arg("a tag")?)?),
            "suspend" => Instr::Suspend(self.tag(arg("a tag")?)?),
            "cont.new" => Instr::ContNew(self.type_use(arg("a continuation type")?)?),
            "cont.bind" => {
                let src = self.type_use(arg("a source type")?)?;
                let dst = self.type_use(arg("a target type")?)?;
                Instr::ContBind(src, dst)
            }
            "resume" => {
                let ty = self.type_use(arg("a continuation type")?)?;
                Instr::Resume(ty, self.clauses(items, pos)?)
            }
            "resume_throw" => {
                let ty = self.type_use(arg("a continuation type")?)?;
                let tag = self.tag(arg("a tag")?)?;
                Instr::ResumeThrow(ty, tag, self.clauses(items, pos)?)
            }
            other => {
                numeric(other).ok_or_else(|| ParseError::new(op.span(), format!("unknown instruction `{other}`")))?
            }
        };
        Ok(instr)
    }

    fn flat(&mut self, items: &[SExpr], pos: &mut usize, out: &mut Vec<Instr>) -> PResult<()> {
        let op = &items[*pos];
        *pos += 1;
        match op.word() {
            Some(kw @ ("block" | "loop" | "if")) => {
                let label = Self::opt_label_name(items, pos);
                let bt = self.block_type(items, pos)?;
                self.labels.push(label);
                let mut first = vec![];
                let stop = self.seq(items, pos, &mut first)?;
                let mut second = vec![];
                let stop = match (kw, stop) {
                    ("if", Some("else")) => self.seq(items, pos, &mut second)?,
                    (_, s) => s,
                };
                self.labels.pop();
                if stop != Some("end") {
                    return err(op.span(), format!("`{kw}` without matching `end`"));
                }
                // An optional repeated label after `end`.
                if items.get(*pos).and_then(SExpr::id).is_some() {
                    *pos += 1;
                }
                out.push(match kw {
                    "block" => Instr::Block(bt, first.into()),
                    "loop" => Instr::Loop(bt, first.into()),
                    _ => Instr::If(bt, first.into(), second.into()),
                });
            }
            _ => {
                let instr = self.plain(op, items, pos)?;
                out.push(instr);
            }
        }
        Ok(())
    }

    fn folded(&mut self, expr: &SExpr, out: &mut Vec<Instr>) -> PResult<()> {
        let items = expr.list().unwrap_or_default();
        let Some(op) = items.first() else {
            return err(expr.span(), "empty instruction");
        };
        let Some(kw) = op.word() else {
            return err(op.span(), "expected an instruction mnemonic");
        };
        let mut pos = 1;
        match kw {
            "block" | "loop" => {
                let label = Self::opt_label_name(items, &mut pos);
                let bt = self.block_type(items, &mut pos)?;
                self.labels.push(label);
                let body = self.body(&items[pos..]);
                self.labels.pop();
                let body = body?;
                out.push(if kw == "block" {
                    Instr::Block(bt, body.into())
                } else {
                    Instr::Loop(bt, body.into())
                });
            }
            "if" => {
                let label = Self::opt_label_name(items, &mut pos);
                let bt = self.block_type(items, &mut pos)?;
                let mut then_items = None;
                let mut else_items = None;
                for item in &items[pos..] {
                    if let Some(t) = item.headed("then") {
                        if then_items.is_some() || else_items.is_some() {
                            return err(item.span(), "misplaced `then`");
                        }
                        then_items = Some(t);
                    } else if let Some(e) = item.headed("else") {
                        if then_items.is_none() || else_items.is_some() {
                            return err(item.span(), "misplaced `else`");
                        }
                        else_items = Some(e);
                    } else if then_items.is_some() {
                        return err(item.span(), "unexpected item after `then`");
                    } else {
                        // Condition operands.
                        self.folded(item, out)?;
                    }
                }
                let Some(then_items) = then_items else {
                    return err(expr.span(), "folded `if` needs a `(then ...)` clause");
                };
                self.labels.push(label);
                let then_body = self.body(then_items);
                let else_body = else_items.map(|e| self.body(e)).transpose();
                self.labels.pop();
                out.push(Instr::If(bt, then_body?.into(), else_body?.unwrap_or_default().into()));
            }
            _ => {
                let instr = self.plain(op, items, &mut pos)?;
                for operand in &items[pos..] {
                    if operand.list().is_none() {
                        return err(operand.span(), format!("unexpected immediate for `{kw}`"));
                    }
                    if operand.head_word() == Some("on") {
                        return err(operand.span(), "handler clauses must precede operands");
                    }
                    self.folded(operand, out)?;
                }
                out.push(instr);
            }
        }
        Ok(())
    }
}

fn numeric(name: &str) -> Option<Instr> {
    let (prefix, op) = name.split_once('.')?;
    let ty = match prefix {
        "i32" => NumType::I32,
        "i64" => NumType::I64,
        _ => return None,
    };
    if op == "eqz" {
        return Some(Instr::Eqz(ty));
    }
    if let Some(b) = BinOp::ALL.iter().find(|b| b.name() == op) {
        return Some(Instr::Binary(ty, *b));
    }
    CmpOp::ALL
        .iter()
        .find(|c| c.name() == op)
        .map(|c| Instr::Compare(ty, *c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(m: &ModuleDef, f: usize) -> &[Instr] {
        match &m.funcs[f].body {
            FuncBody::Code(c) => c,
            FuncBody::Builtin(_) => panic!("builtin"),
        }
    }

    #[test]
    fn folded_add_flattens_in_postorder() {
        let m = parse_module("(module (func $f (result i32) (i32.add (i32.const 30) (i32.const 12))))").unwrap();
        assert_eq!(
            body(&m, 0),
            &[
                Instr::Const(NumType::I32, 30),
                Instr::Const(NumType::I32, 12),
                Instr::Binary(NumType::I32, BinOp::Add),
            ]
        );
        assert_eq!(m.funcs[0].ty, FuncType::new([], [ValType::I32]));
    }

    #[test]
    fn empty_module() {
        assert_eq!(parse_module("(module)").unwrap(), ModuleDef::default());
    }

    #[test]
    fn tags_resolve_to_indices() {
        let m = parse_module("(module (tag $yield) (func (suspend $yield)))").unwrap();
        assert_eq!(m.tags.len(), 1);
        assert_eq!(body(&m, 0), &[Instr::Suspend(0)]);
    }

    #[test]
    fn labels_are_de_bruijn() {
        let m = parse_module("(module (func (block $b (loop $l (br $b) (br $l)))))").unwrap();
        let Instr::Block(_, outer) = &body(&m, 0)[0] else {
            panic!()
        };
        let Instr::Loop(_, inner) = &outer[0] else { panic!() };
        assert_eq!(&inner[..], &[Instr::Br(1), Instr::Br(0)]);
    }

    #[test]
    fn folded_and_flat_spellings_agree() {
        let folded = parse_module(
            "(module (func $f (param $x i32) (result i32)
               (block $b (result i32)
                 (br_if $b (local.get $x) (i32.eqz (local.get $x)))
                 (i32.add (local.get $x) (i32.const 1)))))",
        )
        .unwrap();
        let flat = parse_module(
            "(module (func $f (param $x i32) (result i32)
               block $b (result i32)
                 local.get $x
                 local.get $x
                 i32.eqz
                 br_if $b
                 local.get 0
                 i32.const 1
                 i32.add
               end $b))",
        )
        .unwrap();
        assert_eq!(folded, flat);
    }

    #[test]
    fn resume_clauses_precede_operands() {
        let src = "(module (type $f (func)) (type $c (cont $f)) (tag $t)
            (func (param $k (ref $c))
              (block $h (result (ref $c))
                (resume $c (on $t $h) (local.get $k))
                (return))
              (drop)))";
        let m = parse_module(src).unwrap();
        let Instr::Block(bt, inner) = &body(&m, 0)[0] else {
            panic!()
        };
        assert_eq!(bt.results, vec![ValType::cont_ref(FuncType::default())]);
        assert_eq!(
            inner[1],
            Instr::Resume(1, Arc::from(vec![HandlerClause { tag: 0, label: 0 }]))
        );
        let bad = src.replace("(on $t $h) (local.get $k)", "(local.get $k) (on $t $h)");
        assert!(parse_module(&bad).unwrap_err().message.contains("precede"));
    }

    #[test]
    fn folded_if_with_condition() {
        let m = parse_module("(module (func (param i32) (if (local.get 0) (then (nop_missing)))))");
        assert!(m.unwrap_err().message.contains("unknown instruction `nop_missing`"));
        let m = parse_module("(module (func (param i32) (if (local.get 0) (then (unreachable)) (else))))").unwrap();
        assert_eq!(
            body(&m, 0),
            &[
                Instr::LocalGet(0),
                Instr::If(
                    FuncType::default(),
                    Arc::from(vec![Instr::Unreachable]),
                    Arc::from(vec![])
                ),
            ]
        );
    }

    #[test]
    fn unbound_names_are_errors() {
        let e = parse_module("(module (func (suspend $yield)))").unwrap_err();
        assert!(e.message.contains("unbound tag name $yield"), "{e}");
        let e = parse_module("(module (func (br $nowhere)))").unwrap_err();
        assert!(e.message.contains("unbound label"));
        let e = parse_module("(module (func (local.get $x)))").unwrap_err();
        assert_eq!(e.span.column, 26);
    }

    #[test]
    fn integer_literals() {
        let m = parse_module(
            "(module (func (i32.const -1) (i32.const 0xffffffff) (i32.const 4_294_967_295) (i64.const -0x10) (i32.const 2147483648)))",
        )
        .unwrap();
        assert_eq!(
            body(&m, 0),
            &[
                Instr::Const(NumType::I32, -1),
                Instr::Const(NumType::I32, -1),
                Instr::Const(NumType::I32, -1),
                Instr::Const(NumType::I64, -16),
                Instr::Const(NumType::I32, i64::from(i32::MIN)),
            ]
        );
        assert!(parse_module("(module (func (i32.const 4294967296)))").is_err());
        assert!(parse_module("(module (func (i32.const -2147483649)))").is_err());
        assert!(parse_module("(module (func (i64.const 18446744073709551616)))").is_err());
    }

    #[test]
    fn builtins_take_registry_or_declared_signatures() {
        let m = parse_module(
            "(module (type $f (func)) (type $cont (cont $f))
               (func $print (builtin \"print\"))
               (func $dequeue (builtin \"dequeue\")))",
        )
        .unwrap();
        assert_eq!(m.funcs[0].ty, FuncType::new([ValType::I32], []));
        assert_eq!(
            m.funcs[1].ty,
            FuncType::new([], [ValType::cont_ref(FuncType::default())])
        );
        assert!(parse_module("(module (func (builtin \"dequeue\")))").is_err());
        assert!(parse_module("(module (func (builtin \"launch_missiles\")))").is_err());
    }

    #[test]
    fn scripts_collect_invocations() {
        let (m, inv) = parse_script(
            "(module (func $sum (param i32) (result i32) (local.get 0)) (func $g))
             (invoke 0 (i32.const 101))
             (invoke \"g\")
             (invoke $sum (i32.const 1))",
        )
        .unwrap();
        assert_eq!(m.funcs.len(), 2);
        assert_eq!(
            inv,
            vec![
                Invocation {
                    func: 0,
                    args: vec![Literal::I32(101)]
                },
                Invocation { func: 1, args: vec![] },
                Invocation {
                    func: 0,
                    args: vec![Literal::I32(1)]
                },
            ]
        );
        let (_, none) = parse_script("(module)").unwrap();
        assert!(none.is_empty());
        assert!(parse_script("(module (func) (func)) (invoke 7)").is_err());
    }

    #[test]
    fn structural_types_resolve_eagerly() {
        let m =
            parse_module("(module (type $t (func (param i32))) (type $c (cont $t)) (type $r (func (param (ref $c)))))")
                .unwrap();
        let cont = FuncType::new([ValType::I32], []);
        assert_eq!(m.types[1].heap, HeapType::Cont(cont.clone()));
        assert_eq!(
            m.types[2].heap,
            HeapType::Func(FuncType::new([ValType::cont_ref(cont)], []))
        );
        assert!(parse_module("(module (type $c (cont $later)) (type $later (func)))").is_err());
        assert!(parse_module("(module (type $t (func)) (type $c (cont $t)) (type $cc (cont $c)))").is_err());
    }
}
