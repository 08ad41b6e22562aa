//! Coroutine micro-benchmark: batches of coroutines that each suspend once
//! to simulate I/O, then do a fixed amount of arithmetic.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::interp::{self, RunOptions, RunResult, Stats};
use crate::runtime::Value;
use crate::text::parse_module;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchParams {
    /// Coroutines alive at once.
    pub coroutines: u32,
    /// Coroutines run in total.
    pub requests: u32,
    /// Loop iterations each coroutine performs after its suspension.
    pub work: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchReport {
    pub params: BenchParams,
    pub stats: Stats,
    pub wall: Duration,
    /// Number of coroutines the scheduler started.
    pub completed: i32,
}

impl BenchReport {
    /// `key: value` lines.
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("coroutines: {}", self.params.coroutines),
            format!("requests: {}", self.params.requests),
            format!("work: {}", self.params.work),
            format!("completed: {}", self.completed),
        ];
        out.extend(self.stats.report().into_iter().map(|(k, v)| format!("{k}: {v}")));
        out.push(format!("wall_ms: {}", self.wall.as_millis()));
        out
    }
}

/// Source of the benchmark module. The entry `$bench` takes the batch size
/// and the total and returns the number of coroutines started.
pub fn bench_source(work: u32) -> String {
    format!(
        r#"(module
  (type $func (func))
  (type $cont (cont $func))
  (tag $io)
  (func $queue_empty (builtin "queue_empty"))
  (func $enqueue (builtin "enqueue"))
  (func $dequeue (builtin "dequeue"))
  (func $coroutine (local $i i32) (local $acc i32)
    (suspend $io)
    (block $done
      (loop $work
        (br_if $done (i32.ge_u (local.get $i) (i32.const {work})))
        (local.set $acc (i32.xor (i32.mul (local.get $acc) (i32.const 31)) (local.get $i)))
        (local.set $i (i32.add (local.get $i) (i32.const 1)))
        (br $work))))
  (func $bench (param $n i32) (param $m i32) (result i32) (local $started i32) (local $j i32)
    (loop $batch
      (local.set $j (i32.const 0))
      (block $full
        (loop $spawn
          (br_if $full (i32.ge_u (local.get $j) (local.get $n)))
          (br_if $full (i32.ge_u (local.get $started) (local.get $m)))
          (call $enqueue (cont.new $cont (ref.func $coroutine)))
          (local.set $j (i32.add (local.get $j) (i32.const 1)))
          (local.set $started (i32.add (local.get $started) (i32.const 1)))
          (br $spawn)))
      (block $idle
        (loop $run
          (br_if $idle (call $queue_empty))
          (block $on_io (result (ref $cont))
            (resume $cont (on $io $on_io) (call $dequeue))
            (br $run))
          (call $enqueue)
          (br $run)))
      (br_if $batch (i32.lt_u (local.get $started) (local.get $m))))
    (local.get $started)))
"#
    )
}

pub fn run_bench(params: BenchParams, fuel: u64) -> Result<BenchReport, RunResult> {
    let module = Arc::new(parse_module(&bench_source(params.work)).expect("benchmark module parses"));
    let entry = module.func_index("bench").expect("benchmark entry exists");
    let args = vec![Value::I32(params.coroutines as i32), Value::I32(params.requests as i32)];
    let opts = RunOptions {
        fuel,
        ..RunOptions::default()
    };
    let start = Instant::now();
    let outcome = interp::run(&module, entry, args, opts, &mut |_| {});
    let wall = start.elapsed();
    match outcome.result {
        RunResult::Values(vs) => Ok(BenchReport {
            params,
            stats: outcome.stats,
            wall,
            completed: vs.first().and_then(Value::as_i32).unwrap_or_default(),
        }),
        other => Err(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::DEFAULT_FUEL;
    use crate::validate::validate_module;

    #[test]
    fn generated_module_validates() {
        let m = parse_module(&bench_source(3)).unwrap();
        assert_eq!(validate_module(&m), Ok(()));
    }

    #[test]
    fn tiny_runs_have_hand_counted_totals() {
        let r = run_bench(
            BenchParams {
                coroutines: 2,
                requests: 2,
                work: 1,
            },
            DEFAULT_FUEL,
        )
        .unwrap();
        assert_eq!((r.stats.suspends, r.stats.cont_news), (2, 2));
        let r = run_bench(
            BenchParams {
                coroutines: 1,
                requests: 1,
                work: 1,
            },
            DEFAULT_FUEL,
        )
        .unwrap();
        assert_eq!(r.stats.resumes, 2);
        assert_eq!(r.completed, 1);
    }

    #[test]
    fn partial_last_batch() {
        let r = run_bench(
            BenchParams {
                coroutines: 3,
                requests: 7,
                work: 2,
            },
            DEFAULT_FUEL,
        )
        .unwrap();
        assert_eq!(r.completed, 7);
        assert_eq!(r.stats.suspends, 7);
        assert_eq!(r.stats.resumes, 14);
        assert_eq!(r.stats.cont_allocs, 14);
    }

    #[test]
    fn fuel_exhaustion_is_reported() {
        let r = run_bench(
            BenchParams {
                coroutines: 10,
                requests: 10,
                work: 10,
            },
            100,
        );
        assert!(matches!(r, Err(RunResult::Trap(crate::interp::Trap::FuelExhausted))));
    }
}
