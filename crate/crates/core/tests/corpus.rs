use wasmfx::corpus::corpus_cases;
use wasmfx::meta::Engine;
use wasmfx::{execute, DriverOptions};

fn check(engine: Engine, check_soundness: bool) {
    let mut failures = vec![];
    for case in corpus_cases() {
        let opts = DriverOptions {
            engine,
            check_soundness,
            ..DriverOptions::default()
        };
        let got = execute(case.source, &opts);
        let stderr_ok = match &case.expected_stderr {
            Some(e) => got.stderr.trim_end() == e,
            None => got.stderr.is_empty(),
        };
        if got.stdout != case.expected_stdout || got.exit != case.expected_exit || !stderr_ok {
            failures.push(format!(
                "{}: stdout {:?} (want {:?}), exit {:?} (want {:?}), stderr {:?}",
                case.path, got.stdout, case.expected_stdout, got.exit, case.expected_exit, got.stderr
            ));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn machine_matches_golden_files() {
    check(Engine::Machine, false);
}

#[test]
fn audit_matches_golden_files() {
    check(Engine::Audit, false);
}

#[test]
fn soundness_checks_pass_on_machine() {
    check(Engine::Machine, true);
}

#[test]
fn soundness_checks_pass_on_audit() {
    check(Engine::Audit, true);
}
