//! Canonical text rendering. References are printed as numeric indices and
//! types structurally, so the output never depends on symbolic names other
//! than the definition names it carries along.

use std::fmt::Write;

use crate::ast::*;

pub fn print_module(m: &ModuleDef) -> String {
    let mut out = String::from("(module");
    for t in &m.types {
        out.push_str("\n  (type");
        push_name(&mut out, &t.name);
        let _ = write!(out, " {})", t.heap);
    }
    for t in &m.tags {
        out.push_str("\n  (tag");
        push_name(&mut out, &t.name);
        push_signature(&mut out, &t.ty);
        out.push(')');
    }
    for f in &m.funcs {
        out.push_str("\n  (func");
        push_name(&mut out, &f.name);
        if let FuncBody::Builtin(b) = &f.body {
            let _ = write!(out, " (builtin {b:?})");
        }
        push_signature(&mut out, &f.ty);
        if !f.locals.is_empty() {
            out.push_str(" (local");
            for t in &f.locals {
                let _ = write!(out, " {t}");
            }
            out.push(')');
        }
        if let FuncBody::Code(body) = &f.body {
            push_body(&mut out, body, 2);
        }
        out.push(')');
    }
    if let Some(s) = m.start {
        let _ = write!(out, "\n  (start {s})");
    }
    out.push(')');
    out
}

/// One instruction per line at the given indentation depth.
pub fn print_instrs(instrs: &[Instr]) -> String {
    let mut out = String::new();
    push_body(&mut out, instrs, 0);
    out.trim_start().to_string()
}

fn push_name(out: &mut String, name: &Option<String>) {
    if let Some(n) = name {
        let _ = write!(out, " ${n}");
    }
}

fn push_signature(out: &mut String, ft: &FuncType) {
    if !ft.params.is_empty() {
        out.push_str(" (param");
        for t in &ft.params {
            let _ = write!(out, " {t}");
        }
        out.push(')');
    }
    if !ft.results.is_empty() {
        out.push_str(" (result");
        for t in &ft.results {
            let _ = write!(out, " {t}");
        }
        out.push(')');
    }
}

fn push_body(out: &mut String, body: &[Instr], depth: usize) {
    for i in body {
        out.push('\n');
        out.push_str(&"  ".repeat(depth));
        push_instr(out, i, depth);
    }
}

fn push_clauses(out: &mut String, clauses: &[HandlerClause]) {
    for h in clauses {
        let _ = write!(out, " (on {} {})", h.tag, h.label);
    }
}

fn push_instr(out: &mut String, instr: &Instr, depth: usize) {
    let _ = write!(out, "({}", instr.mnemonic());
    match instr {
        Instr::Const(_, v) => {
            let _ = write!(out, " {v}");
        }
        Instr::LocalGet(x) | Instr::LocalSet(x) | Instr::LocalTee(x) => {
            let _ = write!(out, " {x}");
        }
        Instr::Br(x) | Instr::BrIf(x) => {
            let _ = write!(out, " {x}");
        }
        Instr::Call(x) | Instr::ReturnCall(x) | Instr::RefFunc(x) => {
            let _ = write!(out, " {x}");
        }
        Instr::CallRef(t) | Instr::RefNull(t) | Instr::ContNew(t) => {
            let _ = write!(out, " {t}");
        }
        Instr::Throw(x) | Instr::Suspend(x) => {
            let _ = write!(out, " {x}");
        }
        Instr::ContBind(a, b) => {
            let _ = write!(out, " {a} {b}");
        }
        Instr::Resume(t, hs) => {
            let _ = write!(out, " {t}");
            push_clauses(out, hs);
        }
        Instr::ResumeThrow(t, x, hs) => {
            let _ = write!(out, " {t} {x}");
            push_clauses(out, hs);
        }
        Instr::Block(bt, body) | Instr::Loop(bt, body) => {
            push_signature(out, bt);
            push_body(out, body, depth + 1);
        }
        Instr::If(bt, then, els) => {
            push_signature(out, bt);
            let pad = "  ".repeat(depth + 1);
            let _ = write!(out, "\n{pad}(then");
            push_body(out, then, depth + 2);
            out.push(')');
            if !els.is_empty() {
                let _ = write!(out, "\n{pad}(else");
                push_body(out, els, depth + 2);
                out.push(')');
            }
        }
        Instr::Return
        | Instr::Unreachable
        | Instr::Drop
        | Instr::RefIsNull
        | Instr::Binary(..)
        | Instr::Compare(..)
        | Instr::Eqz(_) => {}
    }
    out.push(')');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::parse_module;

    #[test]
    fn empty_module() {
        assert_eq!(print_module(&ModuleDef::default()), "(module)");
    }

    #[test]
    fn suspend_uses_numeric_tag() {
        let m = parse_module("(module (tag $yield) (func (suspend $yield)))").unwrap();
        let text = print_module(&m);
        assert!(text.contains("(suspend 0)"), "{text}");
        assert_eq!(parse_module(&text).unwrap(), m);
    }

    #[test]
    fn naturals_round_trips() {
        let src = r#"(module
          (type $ft (func))
          (type $cont (cont $ft))
          (tag $yield (param i32))
          (func $naturals
            (local $n i32)
            (loop $l
              (suspend $yield (local.get $n))
              (local.set $n (i32.add (local.get $n) (i32.const 1)))
              (br $l))))"#;
        let m = parse_module(src).unwrap();
        let printed = print_module(&m);
        assert_eq!(parse_module(&printed).unwrap(), m);
        assert_eq!(print_module(&parse_module(&printed).unwrap()), printed);
    }

    #[test]
    fn if_and_handlers_round_trip() {
        let src = r#"(module
          (type $f (func (param i32) (result i32)))
          (type $c (cont $f))
          (tag $t (param i64) (result i32))
          (func $print (builtin "print") (param i32))
          (func $g (param $k (ref null $c)) (result i32)
            (block $h (result i64 (ref $c))
              (resume $c (on $t $h) (i32.const 1) (local.get $k))
              (if (result i32) (then (i32.const -7)) (else (i32.const 0xff)))
              (i32.add)
              (return))
            (drop)
            (drop)
            (i32.const 0))
          (start 0))"#;
        let m = parse_module(src).unwrap();
        assert_eq!(parse_module(&print_module(&m)).unwrap(), m);
    }
}
