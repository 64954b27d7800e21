//! Executable dataflow dialogue: every user turn is an annotation expression
//! that is parsed, expanded, built into a computational graph and evaluated
//! against the dialogue history.

pub mod calendar;
pub mod corpus;
pub mod engine;
pub mod expr;
pub mod functions;
pub mod graph;
pub mod rewrite;

pub use engine::{Engine, EngineError, Outcome};
pub use expr::{SurfaceExpr, Syntax};
pub use graph::{GraphContext, NodeId};
