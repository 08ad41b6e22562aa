mod common;

use common::{module, run_both};
use proptest::prelude::*;
use wasmfx::interp::{run, run_audit, Rule, RunOptions, RunResult, Trap};

const PRELUDE: &str = r#"
  (type $f (func)) (type $cont (cont $f))
  (tag $e)
  (tag $yield)
  (func $print (builtin "print"))
  (func $tick)"#;

fn program(body: &str) -> String {
    format!("(module {PRELUDE}\n  (func $main (local $k (ref $cont))\n    (local.set $k (cont.new $cont (ref.func $tick)))\n{body}))")
}

fn dead_rule(first: &str, second: &str) -> (RunResult, Vec<Rule>) {
    let m = module(&program(&format!(
        "{first}\n(call $print (i32.const 1))\n{second}\n(call $print (i32.const 2))"
    )));
    let out = run_both(&m, "main", vec![]);
    assert_eq!(out.printed, vec![1]);
    let mut rules = vec![];
    let opts = RunOptions {
        trace: true,
        ..RunOptions::default()
    };
    run(&m, m.func_index("main").unwrap(), vec![], opts, &mut |e| {
        rules.push(e.rule)
    });
    let mut audit_rules = vec![];
    run_audit(&m, m.func_index("main").unwrap(), vec![], opts, &mut |e| {
        audit_rules.push(e.rule)
    });
    assert_eq!(rules.last(), audit_rules.last());
    (out.result, rules)
}

const RESUME: &str = "(resume $cont (local.get $k))";
const BIND: &str = "(drop (cont.bind $cont $cont (local.get $k)))";

#[test]
fn resume_of_a_dead_continuation_traps() {
    let (r, rules) = dead_rule(RESUME, RESUME);
    assert_eq!(r, RunResult::Trap(Trap::ContinuationConsumed));
    assert_eq!(rules.last(), Some(&Rule::TrapDeadResume));
    assert_eq!(r.describe(&Default::default()), "trap: continuation already consumed");
}

#[test]
fn bind_of_a_dead_continuation_traps() {
    let (r, rules) = dead_rule(BIND, BIND);
    assert_eq!(r, RunResult::Trap(Trap::ContinuationConsumed));
    assert_eq!(rules.last(), Some(&Rule::TrapDeadBind));
}

#[test]
fn resume_throw_into_a_dead_continuation_traps() {
    let (r, rules) = dead_rule(RESUME, "(resume_throw $cont $e (local.get $k))");
    assert_eq!(r, RunResult::Trap(Trap::ContinuationConsumed));
    assert_eq!(rules.last(), Some(&Rule::TrapDeadResumeThrow));
}

#[test]
fn bound_continuation_is_fresh_and_source_is_dead() {
    let m = module(&program(
        "(local.set $k (cont.bind $cont $cont (local.get $k)))\n(resume $cont (local.get $k))\n(call $print (i32.const 7))",
    ));
    let out = run_both(&m, "main", vec![]);
    assert_eq!(out.result, RunResult::Values(vec![]));
    assert_eq!(out.printed, vec![7]);
}

#[test]
fn continuation_queued_twice_traps_on_second_resume() {
    let src = format!(
        r#"(module {PRELUDE}
          (func $enqueue (builtin "enqueue"))
          (func $dequeue (builtin "dequeue"))
          (func $main (local $k (ref $cont))
            (local.set $k (cont.new $cont (ref.func $tick)))
            (call $enqueue (local.get $k))
            (call $enqueue (local.get $k))
            (resume $cont (call $dequeue))
            (call $print (i32.const 1))
            (resume $cont (call $dequeue))
            (call $print (i32.const 2))))"#
    );
    let out = run_both(&module(&src), "main", vec![]);
    assert_eq!(out.printed, vec![1]);
    assert_eq!(out.result, RunResult::Trap(Trap::ContinuationConsumed));
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Resume,
    Bind,
    Throw,
}

/// Independent model: the first consumption of an address succeeds, any
/// later one traps; a successful throw ends the run uncaught.
fn model(ops: &[(Op, usize)]) -> (Vec<i64>, RunResult) {
    let mut live = [true; 3];
    let mut printed = vec![];
    for (i, (op, k)) in ops.iter().enumerate() {
        if !live[*k] {
            return (printed, RunResult::Trap(Trap::ContinuationConsumed));
        }
        live[*k] = false;
        if let Op::Throw = op {
            return (
                printed,
                RunResult::UncaughtThrow {
                    tag: 0,
                    payload: vec![],
                },
            );
        }
        printed.push(i as i64);
    }
    (printed, RunResult::Values(vec![]))
}

fn render(ops: &[(Op, usize)]) -> String {
    let mut body =
        String::from("(func $main (local $k0 (ref $cont)) (local $k1 (ref $cont)) (local $k2 (ref $cont))\n");
    for k in 0..3 {
        body.push_str(&format!("(local.set $k{k} (cont.new $cont (ref.func $tick)))\n"));
    }
    for (i, (op, k)) in ops.iter().enumerate() {
        let instr = match op {
            Op::Resume => format!("(resume $cont (local.get $k{k}))"),
            Op::Bind => format!("(drop (cont.bind $cont $cont (local.get $k{k})))"),
            Op::Throw => format!("(resume_throw $cont $e (local.get $k{k}))"),
        };
        body.push_str(&format!("{instr}\n(call $print (i32.const {i}))\n"));
    }
    format!("(module {PRELUDE}\n{body}))")
}

fn arb_op() -> impl Strategy<Value = (Op, usize)> {
    (
        prop_oneof![Just(Op::Resume), Just(Op::Bind), Just(Op::Throw)],
        0..3usize,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn second_consumption_always_traps(ops in proptest::collection::vec(arb_op(), 1..10)) {
        let m = module(&render(&ops));
        let out = run_both(&m, "main", vec![]);
        let (printed, result) = model(&ops);
        prop_assert_eq!(out.printed, printed);
        prop_assert_eq!(out.result, result);
    }

    /// Every permutation of consuming all three, followed by a repeat of
    /// any one of them, traps exactly at the repeat.
    #[test]
    fn repeat_after_all_consumed_traps(perm in Just(vec![0usize, 1, 2]).prop_shuffle(), again in 0..3usize, kind in 0..2u8) {
        let op = if kind == 0 { Op::Resume } else { Op::Bind };
        let mut ops: Vec<(Op, usize)> = perm.into_iter().map(|k| (op, k)).collect();
        ops.push((Op::Resume, again));
        let out = run_both(&module(&render(&ops)), "main", vec![]);
        prop_assert_eq!(out.printed, vec![0, 1, 2]);
        prop_assert_eq!(out.result, RunResult::Trap(Trap::ContinuationConsumed));
    }
}
