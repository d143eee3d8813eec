//! Priority GV: a linear lambda calculus with session-typed channels whose
//! actions carry priorities.
//!
//! Programs are parsed, typechecked against their priorities, and run by
//! translating them into graded computations.

pub mod check;
pub mod gen;
pub mod graph;
pub mod parse;
pub mod syntax;
pub mod translate;

pub use check::{typecheck, typecheck_with, CheckOptions, Checked, TypeError, Typed, TypedKind};
pub use graph::{comm_graph, Action, ActionOp, CommGraph};
pub use parse::{parse, parse_type, ParseError};
pub use syntax::{ConstK, PgvType, Span, Term, TermKind};
pub use translate::{compile, eval, translate, Compiled, EvalError};
