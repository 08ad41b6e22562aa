//! Golden example programs, embedded at build time.
//!
//! Each case is a script (`.wat`, a module plus `(invoke ...)` forms) paired
//! with a `.expected` file of `key: value` lines: `note`, one `stdout` per
//! output line, an optional `stderr`, and `exit`.

use crate::driver::ExitStatus;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldenCase {
    /// Path relative to the corpus root, e.g. `primer/range.wat`.
    pub path: &'static str,
    pub source: &'static str,
    pub expected_stdout: String,
    pub expected_stderr: Option<String>,
    pub expected_exit: ExitStatus,
    pub note: String,
}

impl GoldenCase {
    /// `primer/range.wat` becomes `primer/range`.
    pub fn name(&self) -> &'static str {
        self.path.trim_end_matches(".wat")
    }
}

macro_rules! cases {
    ($($path:literal),* $(,)?) => {
        &[$((
            concat!($path, ".wat"),
            include_str!(concat!("../corpus/", $path, ".wat")),
            include_str!(concat!("../corpus/", $path, ".expected")),
        )),*]
    };
}

const FILES: &[(&str, &str, &str)] = cases![
    "primer/range",
    "primer/main",
    "primer/add",
    "primer/unhandled_yield",
    "handlers/yield_once",
    "handlers/yield_loop",
    "scheduling/static",
    "scheduling/tail_recursive",
    "generators/sum_until",
    "threads/fork",
    "promises/async_await",
    "actors/chain",
    "linearity/double_resume",
    "linearity/resume_throw",
];

pub fn corpus_cases() -> Vec<GoldenCase> {
    FILES
        .iter()
        .map(|(path, source, expected)| parse_expected(path, source, expected))
        .collect()
}

pub fn find_case(name: &str) -> Option<GoldenCase> {
    corpus_cases().into_iter().find(|c| c.name() == name || c.path == name)
}

fn parse_expected(path: &'static str, source: &'static str, text: &str) -> GoldenCase {
    let mut stdout = vec![];
    let mut stderr = None;
    let mut exit = None;
    let mut note = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (key, value) = line
            .split_once(':')
            .unwrap_or_else(|| panic!("{path}: malformed expectation line {line:?}"));
        let value = value.trim();
        match key {
            "note" => note = value.to_string(),
            "stdout" => stdout.push(value.to_string()),
            "stderr" => stderr = Some(value.to_string()),
            "exit" => {
                let code = value
                    .parse::<i32>()
                    .unwrap_or_else(|_| panic!("{path}: bad exit code {value:?}"));
                exit = ExitStatus::from_code(code);
            }
            _ => panic!("{path}: unknown expectation key {key:?}"),
        }
    }
    let expected_stdout = stdout.iter().map(|l| format!("{l}\n")).collect();
    GoldenCase {
        path,
        source,
        expected_stdout,
        expected_stderr: stderr,
        expected_exit: exit.unwrap_or_else(|| panic!("{path}: missing exit")),
        note,
    }
}
