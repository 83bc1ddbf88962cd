//! Linearizability: per-structure abstraction functions, the effect-point
//! check (every abstract change is a single-key step owned by exactly one
//! successful update), and a Wing-Gong search over histories.

mod search;

pub use search::{check_history, LinOutcome};

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::checker::{Pred, TraceIndex, Verdict, Violation};
use crate::reach::{ReachPred, Target};
use crate::trace::{Field, KeyVal, Loc, OpKind, OpRecord, Ret, Structure, Trace};

/// Abstract contents: key to data (`None` for the set structures).
pub type AbsState = BTreeMap<i64, Option<i64>>;

/// Per-key content: absent, or present with optional data.
pub type Cell = Option<Option<i64>>;

fn key_pred(schema: Structure, k: i64) -> ReachPred {
    match schema {
        Structure::LazyList | Structure::LoTree => ReachPred::SuccK(k),
        Structure::CfTree | Structure::Citrus => ReachPred::BstK(Target::Exact(k)),
    }
}

/// Flag that hides a reachable node from the abstraction.
fn hiding_flag(schema: Structure) -> Option<Field> {
    match schema {
        Structure::LazyList | Structure::LoTree => Some(Field::Rem),
        Structure::CfTree => Some(Field::Del),
        Structure::Citrus => None,
    }
}

pub fn is_map(schema: Structure) -> bool {
    schema == Structure::Citrus
}

/// The abstraction at every time `0..=end`.
pub fn abstract_series(ix: &TraceIndex) -> Vec<AbsState> {
    let schema = ix.trace.schema();
    let (lo, hi) = (ix.trace.header.key_min, ix.trace.header.key_max);
    let mut out = vec![AbsState::new(); ix.states.len()];
    for k in lo..=hi {
        let sets = ix.series(Pred::plain(key_pred(schema, k)));
        for (t, set) in sets.iter().enumerate() {
            let st = ix.state(t as u64);
            let hit = set.iter().find(|l| {
                l.field == Field::Key
                    && st.key(l.obj) == Some(KeyVal::Fin(k))
                    && hiding_flag(schema).is_none_or(|f| !st.flag(l.obj, f))
            });
            if let Some(l) = hit {
                let data = is_map(schema).then(|| st.val(Loc::new(l.obj, Field::Data)).as_int()).flatten();
                out[t].insert(k, data);
            }
        }
    }
    out
}

/// Result of the sequential specification for `call` on `cell`.
pub fn apply(schema: Structure, call: crate::trace::OpCall, cell: Cell) -> (Ret, Cell) {
    let map = is_map(schema);
    match call.kind {
        OpKind::Contains if map => (Ret::Data(cell.map(|d| d.unwrap_or_default())), cell),
        OpKind::Contains => (Ret::Bool(cell.is_some()), cell),
        OpKind::Insert => {
            let data = map.then(|| call.data.unwrap_or(call.key));
            (Ret::Bool(cell.is_none()), cell.or(Some(data)))
        }
        OpKind::Delete => (Ret::Bool(cell.is_some()), None),
        OpKind::Rotate | OpKind::RemoveRight => (Ret::Unit, cell),
    }
}

/// One abstraction-changing write.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub t: u64,
    pub key: i64,
    pub inserted: bool,
    pub op: u32,
    pub label: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct EffectReport {
    pub verdict: Verdict,
    pub transitions: Vec<Transition>,
    /// Labels of the writes that took effect.
    pub decisive: BTreeSet<String>,
}

fn is_update(op: &OpRecord) -> bool {
    matches!(op.call.kind, OpKind::Insert | OpKind::Delete)
}

fn fail(chain: String, t: Option<u64>, key: Option<i64>) -> Verdict {
    Verdict::violation("effect-points", Violation { t, loc: None, key, later_t: None, chain })
}

/// Effect points against the abstraction series `abs`.
pub fn check_effect_points(ix: &TraceIndex, abs: &[AbsState]) -> EffectReport {
    let tr = ix.trace;
    let schema = tr.schema();
    let mut transitions = Vec::new();
    let mut decisive = BTreeSet::new();
    let mut owned: BTreeMap<u32, u64> = BTreeMap::new();
    let done = |verdict, transitions, decisive| EffectReport { verdict, transitions, decisive };

    for t in 1..abs.len() {
        let (a, b) = (&abs[t - 1], &abs[t]);
        if a == b {
            continue;
        }
        let t = t as u64;
        let w = tr.write_at(t).expect("write exists");
        let changed: Vec<i64> = a.keys().chain(b.keys()).copied().collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|k| a.get(k) != b.get(k))
            .collect();
        if changed.len() != 1 {
            let v = fail(format!("write t={t} ({}) changes keys {changed:?} at once", w.label), Some(t), None);
            return done(v, transitions, decisive);
        }
        let k = changed[0];
        let inserted = match (a.get(&k), b.get(&k)) {
            (None, Some(_)) => true,
            (Some(_), None) => false,
            _ => {
                let v = fail(format!("write t={t} ({}) overwrites the data of {k}", w.label), Some(t), Some(k));
                return done(v, transitions, decisive);
            }
        };
        let op = tr.op(w.op).expect("op exists");
        let dir = if inserted { OpKind::Insert } else { OpKind::Delete };
        let ok = op.call.kind == dir && op.call.key == k && matches!(op.ret, None | Some(Ret::Bool(true)));
        transitions.push(Transition { t, key: k, inserted, op: op.op, label: w.label.to_string() });
        if !ok {
            let what = if inserted { "adds" } else { "removes" };
            let v = fail(
                format!("write t={t} ({}) by {} -> {} {what} key {k}", w.label, op.call, fmt_ret(op.ret)),
                Some(t),
                Some(k),
            );
            return done(v, transitions, decisive);
        }
        if let Some(prev) = owned.insert(op.op, t) {
            let v = fail(format!("{} takes effect twice, at t={prev} and t={t}", op.call), Some(t), Some(k));
            return done(v, transitions, decisive);
        }
        decisive.insert(w.label.to_string());
    }

    for op in &tr.ops {
        if op.call.kind.is_maintenance() {
            continue;
        }
        let Some(ret) = op.ret else { continue };
        let res_t = op.res_t.unwrap_or(ix.end());
        if is_update(op) && ret == Ret::Bool(true) {
            if !owned.contains_key(&op.op) {
                let v = fail(
                    format!("{} returned true but no write in ({}, {res_t}] changes the abstraction", op.call, op.inv_t),
                    None,
                    Some(op.call.key),
                );
                return done(v, transitions, decisive);
            }
            continue;
        }
        let witness = (op.inv_t..=res_t).find(|&u| {
            let cell = abs[u as usize].get(&op.call.key).copied();
            apply(schema, op.call, cell).0 == ret
        });
        if witness.is_none() {
            let v = fail(
                format!(
                    "{} -> {ret}: no state in [{}, {res_t}] where that answer is correct",
                    op.call, op.inv_t
                ),
                Some(op.inv_t),
                Some(op.call.key),
            );
            return done(v, transitions, decisive);
        }
    }
    done(Verdict::ok("effect-points"), transitions, decisive)
}

fn fmt_ret(r: Option<Ret>) -> String {
    r.map_or("pending".into(), |r| r.to_string())
}

/// Abstraction of the state a trace starts from.
pub fn initial_abstraction(ix: &TraceIndex) -> AbsState {
    abstract_series(ix).swap_remove(0)
}

/// Checks the trace's history against the sequential specification.
pub fn check_trace_history(trace: &Trace, initial: &AbsState, budget: u64) -> LinOutcome {
    check_history(trace.schema(), &trace.ops, initial, budget)
}

#[cfg(test)]
mod tests;
