//! Instrumented concurrent search structures and a trace checker for
//! traversal correctness.
//!
//! Data structures run on a deterministic scheduler that logs every shared
//! read and write into a [`Trace`]. The checker replays traces and evaluates
//! reachability predicates, forepassed conditions, traversal correctness and
//! linearizability over them.

pub mod checker;
pub mod ds;
pub mod explore;
pub mod lin;
pub mod reach;
pub mod runtime;
pub mod suite;
pub mod trace;

pub use reach::{ExtendRel, GhostView, LocSet, ReachPred, Shape, Target};
pub use trace::{
    Base, Field, KeyVal, Loc, ObjId, OpCall, OpKind, OpRecord, ReachKind, Ret, State, Structure,
    Trace, TraversalRecord, Value,
};
