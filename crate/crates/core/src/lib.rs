//! Reference interpreter for WebAssembly extended with typed continuations
//! and effect handlers.

pub mod ast;
pub mod bench;
pub mod corpus;
pub mod driver;
pub mod host;
pub mod interp;
pub mod meta;
pub mod mutations;
pub mod runtime;
pub mod text;
pub mod validate;

pub use ast::ModuleDef;
pub use driver::{execute, DriverOptions, Execution, ExitStatus};
pub use text::{parse_module, parse_script, print_module, ParseError, SourceSpan};
