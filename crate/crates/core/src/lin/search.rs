//! Wing-Gong search with memoization on (linearized set, abstract state).
//! Sets and maps are checked one key at a time: a history of independent
//! per-key objects is linearizable iff each key's sub-history is.

use std::collections::{BTreeMap, HashSet};

use fixedbitset::FixedBitSet;
use serde::Serialize;

use super::{apply, AbsState, Cell};
use crate::trace::{OpRecord, Structure};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum LinOutcome {
    Linearizable,
    /// No sequential order explains the ops on `key`.
    NotLinearizable { key: i64, ops: Vec<u32> },
    /// The search budget ran out.
    Inconclusive { key: i64 },
}

impl LinOutcome {
    pub fn is_linearizable(&self) -> bool {
        *self == LinOutcome::Linearizable
    }
}

struct Search<'a> {
    schema: Structure,
    ops: Vec<&'a OpRecord>,
    seen: HashSet<(FixedBitSet, Cell)>,
    budget: u64,
}

impl Search<'_> {
    fn completed_left(&self, mask: &FixedBitSet) -> bool {
        self.ops.iter().enumerate().any(|(i, o)| !mask.contains(i) && o.ret.is_some())
    }

    /// Ops that may go next: nothing still open returned before they began.
    fn minimal(&self, mask: &FixedBitSet) -> Vec<usize> {
        let open: Vec<usize> = (0..self.ops.len()).filter(|&i| !mask.contains(i)).collect();
        open.iter()
            .copied()
            .filter(|&i| {
                let a = self.ops[i];
                !open.iter().any(|&j| self.ops[j].res_seq.is_some_and(|r| r < a.inv_seq))
            })
            .collect()
    }

    fn run(&mut self, mask: &mut FixedBitSet, cell: Cell) -> Option<bool> {
        if !self.completed_left(mask) {
            return Some(true);
        }
        if !self.seen.insert((mask.clone(), cell)) {
            return Some(false);
        }
        if self.budget == 0 {
            return None;
        }
        self.budget -= 1;
        for i in self.minimal(mask) {
            let op = self.ops[i];
            let (ret, next) = apply(self.schema, op.call, cell);
            if op.ret.is_some_and(|r| r != ret) {
                continue;
            }
            mask.insert(i);
            let r = self.run(mask, next);
            mask.set(i, false);
            if r != Some(false) {
                return r;
            }
        }
        Some(false)
    }
}

/// Checks `ops` (maintenance excluded) against the sequential set or map
/// starting from `initial`. `budget` bounds the search nodes per key.
pub fn check_history(schema: Structure, ops: &[OpRecord], initial: &AbsState, budget: u64) -> LinOutcome {
    let mut by_key: BTreeMap<i64, Vec<&OpRecord>> = BTreeMap::new();
    for op in ops.iter().filter(|o| !o.call.kind.is_maintenance()) {
        by_key.entry(op.call.key).or_default().push(op);
    }
    for (key, ops) in by_key {
        let n = ops.len();
        let ids = ops.iter().map(|o| o.op).collect();
        let mut s = Search { schema, ops, seen: HashSet::new(), budget };
        let cell = initial.get(&key).copied();
        match s.run(&mut FixedBitSet::with_capacity(n), cell) {
            Some(true) => {}
            Some(false) => return LinOutcome::NotLinearizable { key, ops: ids },
            None => return LinOutcome::Inconclusive { key },
        }
    }
    LinOutcome::Linearizable
}
