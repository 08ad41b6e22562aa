use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wasmfx::bench::{run_bench, BenchParams};
use wasmfx::corpus::corpus_cases;
use wasmfx::driver::{load, ExitStatus};
use wasmfx::interp::DEFAULT_FUEL;
use wasmfx::meta::Engine;
use wasmfx::{execute, print_module, DriverOptions, Execution};

#[derive(Parser)]
#[command(name = "wasmfx", version, about = "Interpreter for Wasm with typed continuations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, validate and run a script.
    Run(RunArgs),
    /// Parse and validate a script.
    Validate { file: PathBuf },
    /// Print a script's module in canonical form.
    Print { file: PathBuf },
    /// Run the built-in golden corpus.
    Corpus(CorpusArgs),
    /// Run the coroutine benchmark and report counts.
    Bench(BenchArgs),
}

#[derive(Args)]
struct EngineArgs {
    /// Maximum number of reduction steps per invocation.
    #[arg(long, default_value_t = DEFAULT_FUEL)]
    fuel: u64,
    /// Check Preservation and Progress at every step.
    #[arg(long)]
    check_soundness: bool,
    /// Run by literal rewriting of administrative configurations.
    #[arg(long)]
    small_step_audit: bool,
}

#[derive(Args)]
struct RunArgs {
    file: PathBuf,
    /// Function to call, by name or index, instead of the script's invocations.
    #[arg(long)]
    invoke: Option<String>,
    /// Argument for --invoke; repeat for several.
    #[arg(long = "arg", allow_hyphen_values = true)]
    args: Vec<String>,
    /// Print every step and the run statistics to stderr.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct CorpusArgs {
    /// Case names such as `primer/range`; all cases if omitted.
    names: Vec<String>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u32).range(1..))]
    coroutines: u32,
    #[arg(long, default_value_t = 10000, value_parser = clap::value_parser!(u32).range(1..))]
    requests: u32,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    work: u32,
    #[arg(long, default_value_t = DEFAULT_FUEL)]
    fuel: u64,
}

impl EngineArgs {
    fn options(&self) -> DriverOptions {
        DriverOptions {
            fuel: self.fuel,
            check_soundness: self.check_soundness,
            engine: if self.small_step_audit {
                Engine::Audit
            } else {
                Engine::Machine
            },
            ..DriverOptions::default()
        }
    }
}

fn exit(status: ExitStatus) -> ExitCode {
    ExitCode::from(status.code() as u8)
}

fn read(file: &PathBuf) -> Result<String, ExitCode> {
    std::fs::read_to_string(file).map_err(|e| {
        eprintln!("cannot read {}: {e}", file.display());
        exit(ExitStatus::Internal)
    })
}

fn emit(e: &Execution) -> ExitCode {
    print!("{}", e.stdout);
    eprint!("{}", e.stderr);
    let _ = std::io::stdout().flush();
    exit(e.exit)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(a) => {
            let source = match read(&a.file) {
                Ok(s) => s,
                Err(c) => return c,
            };
            let opts = DriverOptions {
                invoke: a.invoke,
                args: a.args,
                trace: a.trace,
                ..a.engine.options()
            };
            emit(&execute(&source, &opts))
        }
        Command::Validate { file } => {
            let source = match read(&file) {
                Ok(s) => s,
                Err(c) => return c,
            };
            match load(&source) {
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => emit(&e),
            }
        }
        Command::Print { file } => {
            let source = match read(&file) {
                Ok(s) => s,
                Err(c) => return c,
            };
            match load(&source) {
                Ok((m, _)) => {
                    println!("{}", print_module(&m));
                    ExitCode::SUCCESS
                }
                Err(e) => emit(&e),
            }
        }
        Command::Corpus(a) => corpus(&a),
        Command::Bench(a) => {
            let params = BenchParams {
                coroutines: a.coroutines,
                requests: a.requests,
                work: a.work,
            };
            match run_bench(params, a.fuel) {
                Ok(report) => {
                    for line in report.lines() {
                        println!("{line}");
                    }
                    ExitCode::SUCCESS
                }
                Err(r) => {
                    eprintln!("benchmark did not complete: {r:?}");
                    exit(ExitStatus::of(&r))
                }
            }
        }
    }
}

fn corpus(a: &CorpusArgs) -> ExitCode {
    let opts = a.engine.options();
    let cases: Vec<_> = corpus_cases()
        .into_iter()
        .filter(|c| a.names.is_empty() || a.names.iter().any(|n| n == c.name()))
        .collect();
    if cases.is_empty() {
        eprintln!("no matching corpus cases");
        return exit(ExitStatus::Internal);
    }
    let mut failed = 0;
    for case in &cases {
        let got = execute(case.source, &opts);
        let stderr_ok = match &case.expected_stderr {
            Some(want) => got.stderr.trim_end() == want,
            None => got.stderr.is_empty(),
        };
        let ok = got.stdout == case.expected_stdout && got.exit == case.expected_exit && stderr_ok;
        println!("{} {}", if ok { "pass" } else { "FAIL" }, case.name());
        if !ok {
            failed += 1;
            eprintln!(
                "{}: got exit {} stdout {:?} stderr {:?}",
                case.name(),
                got.exit.code(),
                got.stdout,
                got.stderr
            );
        }
    }
    println!("{} of {} cases passed", cases.len() - failed, cases.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        exit(ExitStatus::Failure)
    }
}
