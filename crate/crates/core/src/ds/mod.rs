//! The four instrumented structures. Nodes live in the shared [`World`]
//! state; a structure value only names its sentinel objects, so it is
//! `Copy` and can be handed to every task.

mod cftree;
mod citrus;
mod lazylist;
mod lotree;

pub use cftree::CfTree;
pub use citrus::Citrus;
pub use lazylist::LazyList;
pub use lotree::LoTree;

use crate::runtime::{Abort, Ctx, World};
use crate::trace::{KeyVal, ObjId, OpCall, OpKind, Ret, Structure, Value};

#[derive(Clone, Copy, Debug)]
pub enum Ds {
    LazyList(LazyList),
    LoTree(LoTree),
    CfTree(CfTree),
    Citrus(Citrus),
}

impl Ds {
    /// Builds the empty structure directly in `w` (no trace events).
    pub fn init(schema: Structure, w: &mut World) -> Ds {
        match schema {
            Structure::LazyList => Ds::LazyList(LazyList::init(w)),
            Structure::LoTree => Ds::LoTree(LoTree::init(w)),
            Structure::CfTree => Ds::CfTree(CfTree::init(w)),
            Structure::Citrus => Ds::Citrus(Citrus::init(w)),
        }
    }

    pub fn schema(&self) -> Structure {
        match self {
            Ds::LazyList(_) => Structure::LazyList,
            Ds::LoTree(_) => Structure::LoTree,
            Ds::CfTree(_) => Structure::CfTree,
            Ds::Citrus(_) => Structure::Citrus,
        }
    }

    pub async fn run(self, ctx: &Ctx, call: OpCall) -> Result<Ret, Abort> {
        let k = call.key;
        match (self, call.kind) {
            (Ds::LazyList(d), OpKind::Contains) => d.contains(ctx, k).await,
            (Ds::LazyList(d), OpKind::Insert) => d.insert(ctx, k).await,
            (Ds::LazyList(d), OpKind::Delete) => d.delete(ctx, k).await,
            (Ds::LoTree(d), OpKind::Contains) => d.contains(ctx, k).await,
            (Ds::LoTree(d), OpKind::Insert) => d.insert(ctx, k).await,
            (Ds::LoTree(d), OpKind::Delete) => d.delete(ctx, k).await,
            (Ds::LoTree(d), OpKind::Rotate) => d.rotate_right_left(ctx, k).await,
            (Ds::CfTree(d), OpKind::Contains) => d.contains(ctx, k).await,
            (Ds::CfTree(d), OpKind::Insert) => d.insert(ctx, k).await,
            (Ds::CfTree(d), OpKind::Delete) => d.delete(ctx, k).await,
            (Ds::CfTree(d), OpKind::Rotate) => d.rotate_right_left(ctx, k).await,
            (Ds::CfTree(d), OpKind::RemoveRight) => d.remove_right(ctx, k).await,
            (Ds::Citrus(d), OpKind::Contains) => d.contains(ctx, k).await,
            (Ds::Citrus(d), OpKind::Insert) => d.insert(ctx, k, call.data.unwrap_or(k)).await,
            (Ds::Citrus(d), OpKind::Delete) => d.delete(ctx, k).await,
            _ => Ok(Ret::Unit),
        }
    }
}

/// Whether a structure implements an operation kind.
pub fn supports(schema: Structure, kind: OpKind) -> bool {
    match kind {
        OpKind::Contains | OpKind::Insert | OpKind::Delete => true,
        OpKind::Rotate => matches!(schema, Structure::LoTree | Structure::CfTree),
        OpKind::RemoveRight => schema == Structure::CfTree,
    }
}

fn kv(v: Value) -> KeyVal {
    v.key().unwrap_or_else(|| panic!("expected a key, found {v}"))
}

fn lk(v: Value) -> Option<ObjId> {
    v.link()
}

fn flag(v: Value) -> bool {
    v.as_bool().unwrap_or(false)
}

fn link(o: ObjId) -> Value {
    Value::Link(o)
}

fn fin(k: i64) -> KeyVal {
    KeyVal::Fin(k)
}
