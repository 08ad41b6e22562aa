#![allow(dead_code)]

use std::sync::Arc;

use wasmfx::interp::{run, run_audit, Outcome, RunOptions, RunResult};
use wasmfx::runtime::Value;
use wasmfx::validate::validate_module;
use wasmfx::{parse_module, ModuleDef};

pub fn module(src: &str) -> Arc<ModuleDef> {
    let m = parse_module(src).unwrap_or_else(|e| panic!("parse: {e}"));
    if let Err(es) = validate_module(&m) {
        panic!(
            "invalid: {}",
            es.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
        );
    }
    Arc::new(m)
}

/// Runs `entry` on both engines and checks that they agree on result and
/// output.
pub fn run_both(m: &Arc<ModuleDef>, entry: &str, args: Vec<Value>) -> Outcome {
    let f = m.func_index(entry).expect("entry exists");
    let a = run(m, f, args.clone(), RunOptions::default(), &mut |_| {});
    let b = run_audit(m, f, args, RunOptions::default(), &mut |_| {});
    assert_eq!(a.result, b.result, "engines disagree on the result");
    assert_eq!(a.printed, b.printed, "engines disagree on the output");
    a
}

pub fn values(r: &RunResult) -> Vec<Value> {
    match r {
        RunResult::Values(vs) => vs.clone(),
        other => panic!("expected values, got {other:?}"),
    }
}
