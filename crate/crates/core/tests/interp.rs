mod common;

use std::sync::Arc;

use common::{module, run_both, values};
use wasmfx::ast::{BinOp, Instr, ModuleDef, NumType};
use wasmfx::corpus::corpus_cases;
use wasmfx::driver::load;
use wasmfx::interp::audit::Audit;
use wasmfx::interp::{run, run_audit, Rule, RunOptions, RunResult, Trap};
use wasmfx::runtime::{Admin, Config, Frame, Store, Value};

fn config(code: Vec<Admin>) -> Config {
    Config {
        store: Store::new(Arc::new(ModuleDef::default())),
        frame: Frame::default(),
        code,
    }
}

#[test]
fn literal_add_reduces_to_42() {
    let mut a = Audit::from_config(
        config(vec![
            Admin::Val(Value::I32(30)),
            Admin::Val(Value::I32(12)),
            Admin::Instr(Instr::Binary(NumType::I32, BinOp::Add)),
        ]),
        10,
    );
    assert_eq!(a.step(), None);
    assert_eq!(a.last_event().map(|e| e.rule), Some(Rule::Numeric));
    assert_eq!(a.step(), Some(RunResult::Values(vec![Value::I32(42)])));
}

const IDENTITY: &str = r#"(module
  (type $f (func (param i32) (result i32)))
  (type $c (cont $f))
  (func $id (param i32) (result i32) (local.get 0))
  (func $main (result i32)
    (resume $c (i32.const 7) (cont.new $c (ref.func $id)))))"#;

#[test]
fn resuming_an_identity_continuation_exits_its_handler() {
    let m = module(IDENTITY);
    let out = run_both(&m, "main", vec![]);
    assert_eq!(values(&out.result), vec![Value::I32(7)]);
    let mut rules = vec![];
    let opts = RunOptions {
        trace: true,
        ..RunOptions::default()
    };
    run_audit(&m, m.func_index("main").unwrap(), vec![], opts, &mut |e| {
        rules.push(e.rule)
    });
    assert!(rules.contains(&Rule::Resume));
    assert!(rules.contains(&Rule::HandlerExit));
}

#[test]
fn suspend_without_handler_is_a_result() {
    let m = module("(module (tag $t (param i64)) (func $main (suspend $t (i64.const -3))))");
    let out = run_both(&m, "main", vec![]);
    assert_eq!(
        out.result,
        RunResult::UnhandledSuspend {
            tag: 0,
            payload: vec![Value::I64(-3)]
        }
    );
}

#[test]
fn throw_unwinds_frames_to_the_top() {
    let m = module(
        r#"(module
          (tag $e (param i32))
          (func $print (builtin "print"))
          (func $inner (param i32) (result i32)
            (block (call $print (i32.const 1)) (throw $e (local.get 0)))
            (i32.const 0))
          (func $main (result i32)
            (call $inner (i32.const 9))
            (call $print (i32.const 2))))"#,
    );
    let out = run_both(&m, "main", vec![]);
    assert_eq!(out.printed, vec![1]);
    assert_eq!(
        out.result,
        RunResult::UncaughtThrow {
            tag: 0,
            payload: vec![Value::I32(9)]
        }
    );
}

#[test]
fn branch_out_of_a_handler_keeps_its_label_index() {
    let handler = Admin::Handler {
        clauses: vec![],
        results: vec![],
        body: vec![Admin::Val(Value::I32(5)), Admin::Instr(Instr::Br(0))],
    };
    let code = vec![Admin::Label {
        label_types: vec![wasmfx::ast::ValType::I32],
        cont: vec![],
        body: vec![handler],
    }];
    let mut a = Audit::from_config(config(code), 10);
    let mut rules = vec![];
    let result = loop {
        if let Some(r) = a.step() {
            break r;
        }
        rules.push(a.last_event().unwrap().rule);
    };
    assert_eq!(result, RunResult::Values(vec![Value::I32(5)]));
    assert_eq!(rules, vec![Rule::Br, Rule::Br]);
}

#[test]
fn tail_calls_run_in_constant_space() {
    let m = module(
        r#"(module
          (func $count (param $n i32) (param $acc i64) (result i64)
            (if (result i64) (i32.eqz (local.get $n))
              (then (local.get $acc))
              (else
                (return_call $count
                  (i32.sub (local.get $n) (i32.const 1))
                  (i64.add (local.get $acc) (i64.const 2)))))))"#,
    );
    let out = run_both(&m, "count", vec![Value::I32(100_000), Value::I64(0)]);
    assert_eq!(values(&out.result), vec![Value::I64(200_000)]);
}

#[test]
fn infinite_producer_runs_out_of_fuel() {
    let m = module(
        r#"(module
          (type $f (func)) (type $c (cont $f))
          (tag $gen (param i32))
          (func $naturals (local $n i32)
            (loop $l
              (suspend $gen (local.get $n))
              (local.set $n (i32.add (local.get $n) (i32.const 1)))
              (br $l)))
          (func $main (local $k (ref $c))
            (local.set $k (cont.new $c (ref.func $naturals)))
            (loop $l
              (block $on (result i32 (ref $c))
                (resume $c (on $gen $on) (local.get $k))
                (return))
              (local.set $k)
              (drop)
              (br $l))))"#,
    );
    let f = m.func_index("main").unwrap();
    let opts = RunOptions {
        fuel: 1000,
        ..RunOptions::default()
    };
    for out in [
        run(&m, f, vec![], opts, &mut |_| {}),
        run_audit(&m, f, vec![], opts, &mut |_| {}),
    ] {
        assert_eq!(out.result, RunResult::Trap(Trap::FuelExhausted));
        assert_eq!(out.stats.steps, 1000);
    }
}

#[test]
fn null_references_trap_distinctly() {
    let m = module(
        r#"(module
          (type $f (func)) (type $c (cont $f))
          (func $call_null (call_ref $f (ref.null $f)))
          (func $resume_null (resume $c (ref.null $c))))"#,
    );
    assert_eq!(
        run_both(&m, "call_null", vec![]).result,
        RunResult::Trap(Trap::NullFunctionRef)
    );
    assert_eq!(
        run_both(&m, "resume_null", vec![]).result,
        RunResult::Trap(Trap::NullContinuation)
    );
    assert_ne!(Trap::NullFunctionRef.to_string(), Trap::NullContinuation.to_string());
}

/// A computation that suspends and is resumed straight away behaves as if
/// it had never suspended.
#[test]
fn capture_then_immediate_resume_is_invisible() {
    let src = |suspending: bool| {
        let pause = if suspending {
            "(local.set $x (i32.add (local.get $x) (suspend $ask (local.get $x))))"
        } else {
            "(local.set $x (i32.add (local.get $x) (local.get $x)))"
        };
        format!(
            r#"(module
              (type $f (func (param i32) (result i32))) (type $c (cont $f))
              (type $k (func (param i32) (result i32))) (type $kc (cont $k))
              (tag $ask (param i32) (result i32))
              (func $print (builtin "print"))
              (func $work (param $x i32) (result i32)
                (call $print (local.get $x))
                (block (result i32) (local.get $x) (drop) {pause} (local.get $x))
                (call $print)
                (i32.mul (local.get $x) (i32.const 3)))
              (func $main (result i32) (local $k (ref $c)) (local $v i32)
                (local.set $k (cont.new $c (ref.func $work)))
                (local.set $v (i32.const 5))
                (loop $l (result i32)
                  (block $on (result i32 (ref $kc))
                    (resume $c (on $ask $on) (local.get $v) (local.get $k))
                    (return))
                  (local.set $k)
                  (local.set $v)
                  (br $l))))"#
        )
    };
    let a = run_both(&module(&src(true)), "main", vec![]);
    let b = run_both(&module(&src(false)), "main", vec![]);
    assert_eq!(a.result, b.result);
    assert_eq!(a.printed, b.printed);
    assert_eq!(a.stats.suspends, 1);
    assert_eq!(b.stats.suspends, 0);
}

#[test]
fn runs_are_deterministic() {
    for case in corpus_cases() {
        let (m, invs) = load(case.source).unwrap();
        let m = Arc::new(m);
        for inv in invs {
            let args: Vec<Value> = inv
                .args
                .iter()
                .map(|l| match l {
                    wasmfx::ast::Literal::I32(v) => Value::I32(*v),
                    wasmfx::ast::Literal::I64(v) => Value::I64(*v),
                })
                .collect();
            let first = run(&m, inv.func, args.clone(), RunOptions::default(), &mut |_| {});
            let second = run(&m, inv.func, args.clone(), RunOptions::default(), &mut |_| {});
            assert_eq!(first, second, "{}", case.path);
            let first = run_audit(&m, inv.func, args.clone(), RunOptions::default(), &mut |_| {});
            let second = run_audit(&m, inv.func, args, RunOptions::default(), &mut |_| {});
            assert_eq!(first, second, "{}", case.path);
        }
    }
}

#[test]
fn allocations_are_news_plus_suspends_plus_binds() {
    for case in corpus_cases() {
        let (m, invs) = load(case.source).unwrap();
        let m = Arc::new(m);
        for inv in invs {
            let args = inv.args.iter().map(|l| match l {
                wasmfx::ast::Literal::I32(v) => Value::I32(*v),
                wasmfx::ast::Literal::I64(v) => Value::I64(*v),
            });
            for out in [
                run(&m, inv.func, args.clone().collect(), RunOptions::default(), &mut |_| {}),
                run_audit(&m, inv.func, args.clone().collect(), RunOptions::default(), &mut |_| {}),
            ] {
                let s = out.stats;
                assert_eq!(s.cont_allocs, s.cont_news + s.suspends + s.cont_binds, "{}", case.path);
            }
        }
    }
}

#[test]
fn trace_lines_have_step_and_rule() {
    let m = module(IDENTITY);
    let mut lines = vec![];
    let opts = RunOptions {
        trace: true,
        ..RunOptions::default()
    };
    run(&m, m.func_index("main").unwrap(), vec![], opts, &mut |e| {
        lines.push(e.to_string())
    });
    assert_eq!(lines[0], "#1 call $main");
    for (i, l) in lines.iter().enumerate() {
        let prefix = format!("#{} ", i + 1);
        assert!(l.starts_with(&prefix), "{l}");
    }
    assert!(lines.iter().any(|l| l.contains(" resume")));
}
