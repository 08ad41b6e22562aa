use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output};

use wasmfx::mutations::MUTATIONS;

fn wasmfx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wasmfx"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn corpus_file(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("../core/corpus");
    p.push(format!("{name}.wat"));
    p.to_string_lossy().into_owned()
}

fn script(source: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".wat").tempfile().unwrap();
    f.write_all(source.as_bytes()).unwrap();
    f
}

fn stdout(o: &Output) -> &str {
    std::str::from_utf8(&o.stdout).unwrap()
}

fn stderr(o: &Output) -> &str {
    std::str::from_utf8(&o.stderr).unwrap()
}

#[test]
fn run_prints_the_result_line() {
    let o = wasmfx(&["run", &corpus_file("generators/sum_until")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "5050\n");
    assert_eq!(stderr(&o), "");
}

#[test]
fn run_with_invoke_and_args() {
    let o = wasmfx(&[
        "run",
        &corpus_file("generators/sum_until"),
        "--invoke",
        "sum_until",
        "--arg",
        "11",
    ]);
    assert_eq!(stdout(&o), "55\n");
    let o = wasmfx(&[
        "run",
        &corpus_file("generators/sum_until"),
        "--invoke",
        "0",
        "--arg",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unhandled_suspension_exits_one() {
    let o = wasmfx(&["run", &corpus_file("primer/unhandled_yield")]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o), "10\n");
    assert_eq!(stderr(&o), "trap: unhandled tag $yield\n");
}

#[test]
fn type_error_exits_two_with_location() {
    let m = &MUTATIONS[0];
    let f = script(&m.source());
    let o = wasmfx(&["run", f.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).starts_with(&format!("type error: {}", m.at)),
        "{}",
        stderr(&o)
    );
    let o = wasmfx(&["validate", f.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn parse_error_exits_three() {
    let f = script("(module (func $f (i32.const 1))");
    let o = wasmfx(&["run", f.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("parse error: 1:"), "{}", stderr(&o));
}

#[test]
fn fuel_exhaustion_exits_four() {
    let o = wasmfx(&["run", &corpus_file("generators/sum_until"), "--fuel", "100"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn missing_file_exits_four() {
    let o = wasmfx(&["run", "/nonexistent/x.wat"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn trace_goes_to_stderr_with_stats() {
    let o = wasmfx(&["run", &corpus_file("handlers/yield_once"), "--trace"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "10 -1\n");
    let err = stderr(&o);
    assert!(err.lines().any(|l| l.contains("suspend")), "{err}");
    for key in ["steps: ", "resumes: 1", "suspends: 1"] {
        assert!(err.lines().any(|l| l.starts_with(key)), "missing {key} in\n{err}");
    }
}

#[test]
fn validate_and_print() {
    let file = corpus_file("primer/range");
    let o = wasmfx(&["validate", &file]);
    assert_eq!((o.status.code(), stdout(&o)), (Some(0), ""));
    let o = wasmfx(&["print", &file]);
    assert_eq!(o.status.code(), Some(0));
    let printed = stdout(&o).to_string();
    let again = wasmfx(&["print", script(&printed).path().to_str().unwrap()]);
    assert_eq!(stdout(&again), printed);
}

#[test]
fn corpus_command_under_every_mode() {
    for flags in [&[][..], &["--small-step-audit"], &["--check-soundness"]] {
        let mut args = vec!["corpus"];
        args.extend_from_slice(flags);
        let o = wasmfx(&args);
        assert_eq!(o.status.code(), Some(0), "{flags:?}: {}", stderr(&o));
        assert!(stdout(&o).ends_with("14 of 14 cases passed\n"), "{}", stdout(&o));
    }
}

#[test]
fn corpus_command_filters_by_name() {
    let o = wasmfx(&["corpus", "primer/add"]);
    assert_eq!(stdout(&o), "pass primer/add\n1 of 1 cases passed\n");
    let o = wasmfx(&["corpus", "nope"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn bench_small_counts() {
    let o = wasmfx(&["bench", "--coroutines", "4", "--requests", "10", "--work", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for line in ["completed: 10", "suspends: 10", "cont_allocs: 20"] {
        assert!(out.lines().any(|l| l == line), "missing {line} in\n{out}");
    }
    assert!(out.lines().any(|l| l.starts_with("wall_ms: ")));
}

#[test]
fn bench_rejects_zero() {
    let o = wasmfx(&["bench", "--coroutines", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
