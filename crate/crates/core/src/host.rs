//! Host builtins: printing, a FIFO of continuations, mailboxes and promises.
//!
//! Modules bind builtins with `(func $name (builtin "name") ...)`. Builtins
//! that move continuations are generic over the continuation type; the
//! declaring function fixes it.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::ast::{FuncType, HeapType, ValType};
use crate::runtime::Value;

/// Parameter/result slot in a builtin signature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigType {
    I32,
    I64,
    /// Any continuation reference. All `Cont` slots of one signature must
    /// agree on the concrete type.
    Cont,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BuiltinSig {
    pub params: &'static [SigType],
    pub results: &'static [SigType],
}

use SigType::{Cont, I32, I64};

const REGISTRY: &[(&str, BuiltinSig)] = &[
    ("print", sig(&[I32], &[])),
    ("print_i64", sig(&[I64], &[])),
    ("queue_empty", sig(&[], &[I32])),
    ("enqueue", sig(&[Cont], &[])),
    ("dequeue", sig(&[], &[Cont])),
    ("mb_new", sig(&[], &[I32])),
    ("mb_send", sig(&[I64, I32], &[])),
    ("mb_recv", sig(&[I32], &[I64])),
    ("mb_empty", sig(&[I32], &[I32])),
    ("prom_new", sig(&[], &[I32])),
    ("prom_fulfill", sig(&[I32, I64], &[Cont])),
    ("prom_fulfilled", sig(&[I32], &[I32])),
    ("prom_value", sig(&[I32], &[I64])),
    ("prom_await", sig(&[I32, Cont], &[])),
];

const fn sig(params: &'static [SigType], results: &'static [SigType]) -> BuiltinSig {
    BuiltinSig { params, results }
}

/// The full registry, keyed by builtin name.
pub fn builtin_signatures() -> BTreeMap<&'static str, BuiltinSig> {
    REGISTRY.iter().copied().collect()
}

pub fn builtin_signature(name: &str) -> Option<BuiltinSig> {
    REGISTRY.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

impl BuiltinSig {
    pub fn uses_cont(&self) -> bool {
        self.params.iter().chain(self.results).any(|t| *t == Cont)
    }

    /// Concrete signature with every `Cont` slot set to `ref (cont cont_ft)`.
    pub fn instantiate(&self, cont_ft: Option<&FuncType>) -> Option<FuncType> {
        let conv = |ts: &[SigType]| -> Option<Vec<ValType>> {
            ts.iter()
                .map(|t| match t {
                    I32 => Some(ValType::I32),
                    I64 => Some(ValType::I64),
                    Cont => cont_ft.map(|ft| ValType::cont_ref(ft.clone())),
                })
                .collect()
        };
        Some(FuncType::new(conv(self.params)?, conv(self.results)?))
    }

    /// Structural check of a declared type against this signature.
    pub fn matches(&self, ft: &FuncType) -> bool {
        if ft.params.len() != self.params.len() || ft.results.len() != self.results.len() {
            return false;
        }
        let mut cont: Option<&FuncType> = None;
        let pairs = self
            .params
            .iter()
            .zip(&ft.params)
            .chain(self.results.iter().zip(&ft.results));
        for (expected, actual) in pairs {
            let ok = match (expected, actual) {
                (I32, ValType::I32) | (I64, ValType::I64) => true,
                (Cont, ValType::Ref(heap)) => match heap.as_cont() {
                    Some(c) => match cont {
                        Some(prev) => prev == c,
                        None => {
                            cont = Some(c);
                            true
                        }
                    },
                    None => false,
                },
                _ => false,
            };
            if !ok {
                return false;
            }
        }
        true
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum HostTrap {
    #[error("unknown builtin {0:?}")]
    Unknown(String),
    #[error("builtin {name} called with bad arguments")]
    BadArguments { name: String },
    #[error("mailbox {0} is empty")]
    EmptyMailbox(i32),
    #[error("unknown mailbox {0}")]
    UnknownMailbox(i32),
    #[error("unknown promise {0}")]
    UnknownPromise(i32),
    #[error("promise {0} already fulfilled")]
    AlreadyFulfilled(i32),
    #[error("promise {0} is not fulfilled")]
    Unfulfilled(i32),
    #[error("promise {0} already has a waiter")]
    WaiterTaken(i32),
    #[error("enqueue of a non-continuation value")]
    NotAContinuation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PromiseState {
    Unfulfilled,
    Fulfilled(i64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Promise {
    pub state: PromiseState,
    pub waiter: Option<Value>,
}

/// Mutable host state for one run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HostState {
    pub printed: Vec<i64>,
    pub queue: VecDeque<Value>,
    pub mailboxes: Vec<VecDeque<i64>>,
    pub promises: Vec<Promise>,
}

impl HostState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Printed integers joined by single spaces.
    pub fn output(&self) -> String {
        Output(&self.printed).to_string()
    }

    /// Continuation references currently held by the host.
    pub fn held_refs(&self) -> impl Iterator<Item = &Value> {
        self.queue
            .iter()
            .chain(self.promises.iter().filter_map(|p| p.waiter.as_ref()))
    }

    /// Runs builtin `name`. `results` are the declared result types of the
    /// binding function; they give null references their type.
    pub fn call_builtin(&mut self, name: &str, args: &[Value], results: &[ValType]) -> Result<Vec<Value>, HostTrap> {
        let bad = || HostTrap::BadArguments { name: name.to_string() };
        let null = || -> Result<Value, HostTrap> {
            match results.first() {
                Some(ValType::Ref(heap)) => Ok(Value::null(HeapType::clone(heap))),
                _ => Err(bad()),
            }
        };
        match (name, args) {
            ("print", [Value::I32(v)]) => {
                self.printed.push(i64::from(*v));
                Ok(vec![])
            }
            ("print_i64", [Value::I64(v)]) => {
                self.printed.push(*v);
                Ok(vec![])
            }
            ("queue_empty", []) => Ok(vec![Value::I32(self.queue.is_empty() as i32)]),
            ("enqueue", [v]) => match v {
                Value::ContRef(_) | Value::NullRef(_) => {
                    self.queue.push_back(v.clone());
                    Ok(vec![])
                }
                _ => Err(HostTrap::NotAContinuation),
            },
            ("dequeue", []) => match self.queue.pop_front() {
                Some(v) => Ok(vec![v]),
                None => Ok(vec![null()?]),
            },
            ("mb_new", []) => {
                self.mailboxes.push(VecDeque::new());
                Ok(vec![Value::I32(self.mailboxes.len() as i32 - 1)])
            }
            ("mb_send", [Value::I64(msg), Value::I32(mb)]) => {
                self.mailbox(*mb)?.push_back(*msg);
                Ok(vec![])
            }
            ("mb_recv", [Value::I32(mb)]) => {
                let msg = self.mailbox(*mb)?.pop_front().ok_or(HostTrap::EmptyMailbox(*mb))?;
                Ok(vec![Value::I64(msg)])
            }
            ("mb_empty", [Value::I32(mb)]) => {
                let empty = self.mailbox(*mb)?.is_empty();
                Ok(vec![Value::I32(empty as i32)])
            }
            ("prom_new", []) => {
                self.promises.push(Promise {
                    state: PromiseState::Unfulfilled,
                    waiter: None,
                });
                Ok(vec![Value::I32(self.promises.len() as i32 - 1)])
            }
            ("prom_fulfill", [Value::I32(p), Value::I64(v)]) => {
                let id = *p;
                let promise = self.promise(id)?;
                if promise.state != PromiseState::Unfulfilled {
                    return Err(HostTrap::AlreadyFulfilled(id));
                }
                promise.state = PromiseState::Fulfilled(*v);
                match promise.waiter.take() {
                    Some(w) => Ok(vec![w]),
                    None => Ok(vec![null()?]),
                }
            }
            ("prom_fulfilled", [Value::I32(p)]) => {
                let done = matches!(self.promise(*p)?.state, PromiseState::Fulfilled(_));
                Ok(vec![Value::I32(done as i32)])
            }
            ("prom_value", [Value::I32(p)]) => match self.promise(*p)?.state {
                PromiseState::Fulfilled(v) => Ok(vec![Value::I64(v)]),
                PromiseState::Unfulfilled => Err(HostTrap::Unfulfilled(*p)),
            },
            ("prom_await", [Value::I32(p), k]) => {
                let id = *p;
                let promise = self.promise(id)?;
                if promise.state != PromiseState::Unfulfilled {
                    return Err(HostTrap::AlreadyFulfilled(id));
                }
                if promise.waiter.is_some() {
                    return Err(HostTrap::WaiterTaken(id));
                }
                promise.waiter = Some(k.clone());
                Ok(vec![])
            }
            _ if builtin_signature(name).is_none() => Err(HostTrap::Unknown(name.to_string())),
            _ => Err(bad()),
        }
    }

    fn mailbox(&mut self, mb: i32) -> Result<&mut VecDeque<i64>, HostTrap> {
        usize::try_from(mb)
            .ok()
            .and_then(|i| self.mailboxes.get_mut(i))
            .ok_or(HostTrap::UnknownMailbox(mb))
    }

    fn promise(&mut self, p: i32) -> Result<&mut Promise, HostTrap> {
        usize::try_from(p)
            .ok()
            .and_then(|i| self.promises.get_mut(i))
            .ok_or(HostTrap::UnknownPromise(p))
    }
}

/// Space-separated rendering of printed integers.
pub struct Output<'a>(pub &'a [i64]);

impl fmt::Display for Output<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cont_ty() -> Vec<ValType> {
        vec![ValType::cont_ref(FuncType::default())]
    }

    #[test]
    fn registry_signatures() {
        let sigs = builtin_signatures();
        assert_eq!(sigs["print"], sig(&[I32], &[]));
        assert_eq!(sigs["dequeue"], sig(&[], &[Cont]));
        assert_eq!(sigs["mb_send"], sig(&[I64, I32], &[]));
        assert_eq!(sigs.len(), 14);
    }

    #[test]
    fn generic_cont_slots_must_agree() {
        let k0 = FuncType::default();
        let k1 = FuncType::new([ValType::I64], []);
        let await_sig = builtin_signature("prom_await").unwrap();
        assert!(await_sig.matches(&FuncType::new([ValType::I32, ValType::cont_ref(k1.clone())], [])));
        assert!(!await_sig.matches(&FuncType::new([ValType::I32, ValType::func_ref(k1.clone())], [])));
        let enqueue = builtin_signature("enqueue").unwrap();
        assert_eq!(
            enqueue.instantiate(Some(&k0)),
            Some(FuncType::new([ValType::cont_ref(k0)], []))
        );
        assert_eq!(enqueue.instantiate(None), None);
    }

    #[test]
    fn queue_is_fifo_and_dequeue_of_empty_is_null() {
        let mut h = HostState::new();
        h.call_builtin("enqueue", &[Value::ContRef(3)], &[]).unwrap();
        h.call_builtin("enqueue", &[Value::ContRef(5)], &[]).unwrap();
        assert_eq!(h.call_builtin("dequeue", &[], &cont_ty()), Ok(vec![Value::ContRef(3)]));
        assert_eq!(h.call_builtin("dequeue", &[], &cont_ty()), Ok(vec![Value::ContRef(5)]));
        let empty = h.call_builtin("dequeue", &[], &cont_ty()).unwrap();
        assert!(empty[0].is_null());
        assert_eq!(h.call_builtin("queue_empty", &[], &[]), Ok(vec![Value::I32(1)]));
    }

    #[test]
    fn fresh_mailbox_is_empty_and_recv_on_empty_traps() {
        let mut h = HostState::new();
        assert_eq!(h.call_builtin("mb_new", &[], &[]), Ok(vec![Value::I32(0)]));
        assert_eq!(
            h.call_builtin("mb_empty", &[Value::I32(0)], &[]),
            Ok(vec![Value::I32(1)])
        );
        assert_eq!(
            h.call_builtin("mb_recv", &[Value::I32(0)], &[]),
            Err(HostTrap::EmptyMailbox(0))
        );
        h.call_builtin("mb_send", &[Value::I64(7), Value::I32(0)], &[]).unwrap();
        assert_eq!(
            h.call_builtin("mb_recv", &[Value::I32(0)], &[]),
            Ok(vec![Value::I64(7)])
        );
        assert_eq!(
            h.call_builtin("mb_empty", &[Value::I32(4)], &[]),
            Err(HostTrap::UnknownMailbox(4))
        );
    }

    #[test]
    fn promise_state_machine() {
        let mut h = HostState::new();
        let p = h.call_builtin("prom_new", &[], &[]).unwrap()[0].clone();
        assert_eq!(p, Value::I32(0));
        assert_eq!(
            h.call_builtin("prom_fulfilled", std::slice::from_ref(&p), &[]),
            Ok(vec![Value::I32(0)])
        );
        assert_eq!(
            h.call_builtin("prom_value", std::slice::from_ref(&p), &[]),
            Err(HostTrap::Unfulfilled(0))
        );
        let waiter = h
            .call_builtin("prom_fulfill", &[p.clone(), Value::I64(9)], &cont_ty())
            .unwrap();
        assert!(waiter[0].is_null());
        assert_eq!(
            h.call_builtin("prom_fulfilled", std::slice::from_ref(&p), &[]),
            Ok(vec![Value::I32(1)])
        );
        assert_eq!(h.call_builtin("prom_value", std::slice::from_ref(&p), &[]), Ok(vec![Value::I64(9)]));
        assert_eq!(
            h.call_builtin("prom_fulfill", &[p.clone(), Value::I64(1)], &cont_ty()),
            Err(HostTrap::AlreadyFulfilled(0))
        );
        assert_eq!(
            h.call_builtin("prom_await", &[p, Value::ContRef(0)], &[]),
            Err(HostTrap::AlreadyFulfilled(0))
        );
    }

    #[test]
    fn fulfill_hands_back_the_waiter_once() {
        let mut h = HostState::new();
        h.call_builtin("prom_new", &[], &[]).unwrap();
        h.call_builtin("prom_await", &[Value::I32(0), Value::ContRef(2)], &[])
            .unwrap();
        assert_eq!(
            h.call_builtin("prom_await", &[Value::I32(0), Value::ContRef(3)], &[]),
            Err(HostTrap::WaiterTaken(0))
        );
        assert_eq!(
            h.call_builtin("prom_fulfill", &[Value::I32(0), Value::I64(1)], &cont_ty()),
            Ok(vec![Value::ContRef(2)])
        );
    }

    #[test]
    fn output_rendering() {
        let mut h = HostState::new();
        assert_eq!(h.output(), "");
        for v in [10, 11, -1] {
            h.call_builtin("print", &[Value::I32(v)], &[]).unwrap();
        }
        assert_eq!(h.output(), "10 11 -1");
    }
}
