//! Binary session types over one-shot channels, a priority-graded layer
//! that rules out deadlocks, and Priority GV: a small linear calculus that
//! is typechecked against priorities and run on top of the graded layer.

pub mod graded;
pub mod oneshot;
pub mod pgv;
pub mod priority;
pub mod runtime;
pub mod session;

pub use priority::{seq_bounds, Bounds, Priority, SequenceError};
