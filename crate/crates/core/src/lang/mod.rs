//! The policy-annotated while-language: syntax, parsing, printing, execution.

mod ast;
mod interp;
mod parser;
mod printer;

pub use ast::*;
pub use interp::{run, step, Event, Interpreter, Step, StepRecord, Store, Trace};
pub use parser::parse;
pub use printer::{print, print_command, print_expr};
