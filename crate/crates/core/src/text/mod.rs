//! Text format: s-expression reader, parser and canonical printer.

use std::fmt;

use thiserror::Error;

mod parse;
mod print;
mod sexpr;

pub use parse::{parse_module, parse_script};
pub use print::{print_instrs, print_module};

/// Location of a token or form in the source text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SourceSpan {
    /// Byte offsets.
    pub start: usize,
    pub end: usize,
    /// 1-based.
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
}

impl ParseError {
    pub fn new(span: SourceSpan, message: impl Into<String>) -> Self {
        ParseError {
            span,
            message: message.into(),
        }
    }
}
