//! Broken variants of golden cases, each made by one textual substitution,
//! that the validator must reject at a known location.

use crate::corpus::find_case;
use crate::text::parse_script;
use crate::validate::{validate_module, TypeError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mutation {
    pub case: &'static str,
    pub from: &'static str,
    pub to: &'static str,
    /// Expected prefix of the error path.
    pub at: &'static str,
    /// Expected fragment of the message.
    pub says: &'static str,
}

pub const MUTATIONS: &[Mutation] = &[
    Mutation {
        case: "generators/sum_until",
        from: "(block $on_gen (result i32 (ref $cont))",
        to: "(block $on_gen (result i64 (ref $cont))",
        at: "func $sum_until/",
        says: "handler",
    },
    Mutation {
        case: "generators/sum_until",
        from: "(block $on_gen (result i32 (ref $cont))",
        to: "(block $on_gen (result i32)",
        at: "func $sum_until/",
        says: "handler",
    },
    Mutation {
        case: "generators/sum_until",
        from: "(resume $cont (on $gen",
        to: "(resume $func (on $gen",
        at: "func $sum_until/",
        says: "not a continuation type",
    },
    Mutation {
        case: "generators/sum_until",
        from: "(cont.new $cont (ref.func $naturals))",
        to: "(cont.new $func (ref.func $naturals))",
        at: "func $sum_until/",
        says: "not a continuation type",
    },
    Mutation {
        case: "generators/sum_until",
        from: "(suspend $gen (local.get $n))",
        to: "(suspend $gen)",
        at: "func $naturals/",
        says: "expected [i32]",
    },
    Mutation {
        case: "generators/sum_until",
        from: "(local $k (ref $cont))",
        to: "(local $k (ref $func))",
        at: "func $sum_until/",
        says: "expected",
    },
    Mutation {
        case: "actors/chain",
        from: "(local.set $p (suspend $self))",
        to: "(local.set $p (throw $self))",
        at: "func $chain/",
        says: "cannot be thrown",
    },
    Mutation {
        case: "actors/chain",
        from: "(block $on_self (result (ref $i32_cont))",
        to: "(block $on_self (result (ref $cont))",
        at: "func $act_aux/",
        says: "handler",
    },
    Mutation {
        case: "actors/chain",
        from: "(block $on_send (result i64 i32 (ref $cont))",
        to: "(block $on_send (result i32 i64 (ref $cont))",
        at: "func $act_aux/",
        says: "handler",
    },
    Mutation {
        case: "actors/chain",
        from: "(cont.bind $i32_cont $cont (local.get $p)",
        to: "(cont.bind $cont $i32_cont (local.get $p)",
        at: "func $chain/",
        says: "cannot bind",
    },
    Mutation {
        case: "actors/chain",
        from: "(resume $cont\n                (on $self",
        to: "(resume $i32_func\n                (on $self",
        at: "func $act_aux/",
        says: "not a continuation type",
    },
    Mutation {
        case: "promises/async_await",
        from: "(local.set $p (suspend $async",
        to: "(local.set $p (throw $async",
        at: "func $consumer/",
        says: "cannot be thrown",
    },
    Mutation {
        case: "promises/async_await",
        from: "(block $on_await (result i32 (ref $i64_cont))",
        to: "(block $on_await (result i32 (ref $i32_cont))",
        at: "func $scheduler/",
        says: "handler",
    },
    Mutation {
        case: "promises/async_await",
        from: "(call $print_i64 (suspend $await (local.get $p)))\n    (call $print (i32.const 5))",
        to: "(call $print (suspend $await (local.get $p)))\n    (call $print (i32.const 5))",
        at: "func $consumer/",
        says: "expected [i32]",
    },
    Mutation {
        case: "promises/async_await",
        from: "(call $print (i32.const 3))\n    (call $print_i64 (suspend $await (local.get $p)))",
        to: "(call $print (i32.const 3))\n    (call $print_i64 (suspend $await))",
        at: "func $consumer/",
        says: "expected [i32]",
    },
    Mutation {
        case: "promises/async_await",
        from: "(param i32 (ref $i64_cont)))",
        to: "(param i64 (ref $i64_cont)))",
        at: "func $prom_await",
        says: "builtin",
    },
    Mutation {
        case: "handlers/yield_once",
        from: "(resume $cont (on $yield $on_yield) (local.get $k))",
        to: "(resume $task_cont (on $yield $on_yield) (local.get $k))",
        at: "func $main/",
        says: "expected",
    },
    Mutation {
        case: "handlers/yield_once",
        from: "(cont.bind $task_cont $cont (i32.const 10)",
        to: "(cont.bind $task_cont $cont (i64.const 10)",
        at: "func $main/",
        says: "expected [i32",
    },
    Mutation {
        case: "handlers/yield_once",
        from: "(tag $yield)",
        to: "(tag $yield (param i32))",
        at: "func $process/",
        says: "expected [i32]",
    },
    Mutation {
        case: "handlers/yield_once",
        from: "(call $print (i32.const -2))\n        (br $h)",
        to: "(call $print (i32.const -2))\n        (br $on_yield)",
        at: "func $main/",
        says: "expected [(ref",
    },
    Mutation {
        case: "threads/fork",
        from: "(block $on_fork (result (ref $cont) (ref $cont))",
        to: "(block $on_fork (result (ref $cont))",
        at: "func $scheduler/",
        says: "handler",
    },
    Mutation {
        case: "threads/fork",
        from: "(suspend $fork (cont.bind $task_cont $cont (i32.const 20)",
        to: "(suspend $fork (cont.bind $task_cont $task_cont (i32.const 20)",
        at: "func $task1/",
        says: "expected [(ref (cont (func)))]",
    },
    Mutation {
        case: "scheduling/tail_recursive",
        from: "(return_call $scheduler (call $dequeue)))\n    (call $enqueue)",
        to: "(return_call $scheduler (i32.const 0)))\n    (call $enqueue)",
        at: "func $scheduler/",
        says: "found [i32]",
    },
    Mutation {
        case: "scheduling/tail_recursive",
        from: "(func $scheduler (param $nextk (ref null $cont))",
        to: "(func $scheduler (param $nextk (ref null $cont)) (result i32)",
        at: "func $scheduler",
        says: "expected [i32]",
    },
];

impl Mutation {
    /// The mutated source. Panics unless `from` occurs exactly once.
    pub fn source(&self) -> String {
        let source = find_case(self.case)
            .unwrap_or_else(|| panic!("no case {}", self.case))
            .source;
        assert_eq!(
            source.matches(self.from).count(),
            1,
            "{}: {:?} must occur once",
            self.case,
            self.from
        );
        source.replacen(self.from, self.to, 1)
    }

    /// Parses and validates the mutated source and returns the first error
    /// if it is the expected one.
    pub fn check(&self) -> Result<TypeError, String> {
        let (module, _) = parse_script(&self.source()).map_err(|e| format!("parse error {e}"))?;
        let errors = match validate_module(&module) {
            Ok(()) => return Err("accepted".into()),
            Err(es) => es,
        };
        let first = errors[0].clone();
        if first.path.starts_with(self.at) && first.message.contains(self.says) {
            Ok(first)
        } else {
            Err(format!("wrong error: {first}"))
        }
    }
}
