//! Per-trace precomputation shared by the checks: every state, the reach
//! set of each predicate at each time, and the writes that shrink them.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use crate::reach::{compat_violation, reach_set, ExtendRel, GhostView, LocSet, ReachPred, Shape};
use crate::trace::{GhostInterval, Loc, State, Trace};

/// A reachability predicate together with the ghost view it is read
/// under. `view` is the start time of the traversal whose ghost state is
/// used; it only matters for predicates that use ghost keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pred {
    pub reach: ReachPred,
    pub view: u64,
}

impl Pred {
    pub fn plain(reach: ReachPred) -> Self {
        Pred { reach, view: 0 }
    }

    pub fn viewed(reach: ReachPred, view: u64) -> Self {
        Pred { reach, view }
    }

    /// The key the predicate is parameterized by, if any.
    pub fn key(&self) -> Option<i64> {
        match self.reach {
            ReachPred::Succ => None,
            ReachPred::SuccK(k) | ReachPred::WeakK(k) => Some(k),
            ReachPred::BstK(t) => Some(match t {
                crate::reach::Target::Exact(k) | crate::reach::Target::Above(k) => k,
            }),
        }
    }
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.reach.uses_ghosts() {
            write!(f, "{}[view {}]", self.reach.name(), self.view)
        } else {
            f.write_str(&self.reach.name())
        }
    }
}

/// A write at `t` after which `loc` no longer satisfies the predicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Reduction {
    pub t: u64,
    pub loc: Loc,
    /// First write to `loc` at or after `t`.
    pub next_write: Option<u64>,
}

/// Per `(pred, extend)` pair.
pub(crate) struct Facts {
    /// Per state: a reachable location extending to an unreachable one.
    pub compat: Vec<Option<(Loc, Loc)>>,
    /// Parallel to the reductions: the first later write to the reduced
    /// location whose target was not reachable at any time from just
    /// before the reduction to that write.
    pub bad: Vec<Option<(u64, Loc)>>,
}

pub struct TraceIndex<'a> {
    pub trace: &'a Trace,
    pub shape: Shape,
    pub states: Vec<State>,
    pub ghosts: Vec<GhostInterval>,
    writes_to: HashMap<Loc, Vec<u64>>,
    series: RefCell<HashMap<Pred, Rc<Vec<LocSet>>>>,
    reductions: RefCell<HashMap<Pred, Rc<Vec<Reduction>>>>,
    facts: RefCell<HashMap<(Pred, ExtendRel), Rc<Facts>>>,
}

impl<'a> TraceIndex<'a> {
    pub fn new(trace: &'a Trace) -> Self {
        let mut writes_to: HashMap<Loc, Vec<u64>> = HashMap::new();
        for w in &trace.writes {
            writes_to.entry(w.loc).or_default().push(w.t);
        }
        TraceIndex {
            trace,
            shape: Shape::of(trace),
            states: trace.all_states(),
            ghosts: trace.ghost_intervals(),
            writes_to,
            series: RefCell::default(),
            reductions: RefCell::default(),
            facts: RefCell::default(),
        }
    }

    pub fn end(&self) -> u64 {
        self.trace.end()
    }

    pub fn state(&self, t: u64) -> &State {
        &self.states[t as usize]
    }

    /// Timestamps of the writes to `l`, ascending.
    pub fn writes_to(&self, l: Loc) -> &[u64] {
        self.writes_to.get(&l).map_or(&[], Vec::as_slice)
    }

    /// Writes to `l` in `[from, to]`.
    pub fn writes_between(&self, l: Loc, from: u64, to: u64) -> &[u64] {
        let ws = self.writes_to(l);
        let a = ws.partition_point(|&t| t < from);
        let b = ws.partition_point(|&t| t <= to);
        &ws[a..b.max(a)]
    }

    /// Views that see the same ghost opens are merged: the view start is
    /// moved back to the latest open at or before it.
    pub fn normalize(&self, p: Pred) -> Pred {
        if !p.reach.uses_ghosts() {
            return Pred { view: 0, ..p };
        }
        let view = self
            .ghosts
            .iter()
            .map(|g| g.open_t)
            .filter(|&o| o <= p.view)
            .max()
            .unwrap_or(0);
        Pred { view, ..p }
    }

    /// Reach sets of `p` at every time `0..=end`.
    pub fn series(&self, p: Pred) -> Rc<Vec<LocSet>> {
        let p = self.normalize(p);
        if let Some(s) = self.series.borrow().get(&p) {
            return Rc::clone(s);
        }
        let sets: Vec<LocSet> = self
            .states
            .iter()
            .enumerate()
            .map(|(t, st)| {
                let view = GhostView::new(&self.ghosts, p.view, t as u64);
                reach_set(st, &self.shape, p.reach, &view)
            })
            .collect();
        let sets = Rc::new(sets);
        self.series.borrow_mut().insert(p, Rc::clone(&sets));
        sets
    }

    pub fn holds(&self, p: Pred, l: Loc, t: u64) -> bool {
        self.series(p)[t as usize].contains(l)
    }

    /// Earliest `t'' ∈ [from, to]` at which `l` satisfies `p`.
    pub fn first_holds(&self, p: Pred, l: Loc, from: u64, to: u64) -> Option<u64> {
        if from > to {
            return None;
        }
        let s = self.series(p);
        (from..=to.min(self.end())).find(|&t| s[t as usize].contains(l))
    }

    pub fn reductions(&self, p: Pred) -> Rc<Vec<Reduction>> {
        let p = self.normalize(p);
        if let Some(r) = self.reductions.borrow().get(&p) {
            return Rc::clone(r);
        }
        let s = self.series(p);
        let mut out = Vec::new();
        for t in 1..s.len() {
            for loc in s[t - 1].minus(&s[t]) {
                let ws = self.writes_to(loc);
                let next_write = ws.get(ws.partition_point(|&w| w < t as u64)).copied();
                out.push(Reduction { t: t as u64, loc, next_write });
            }
        }
        let out = Rc::new(out);
        self.reductions.borrow_mut().insert(p, Rc::clone(&out));
        out
    }

    pub(crate) fn facts(&self, p: Pred, ext: ExtendRel) -> Rc<Facts> {
        let p = self.normalize(p);
        if let Some(f) = self.facts.borrow().get(&(p, ext)) {
            return Rc::clone(f);
        }
        let s = self.series(p);
        let compat = self
            .states
            .iter()
            .zip(s.iter())
            .map(|(st, set)| compat_violation(st, set, &ext))
            .collect();
        let bad = self
            .reductions(p)
            .iter()
            .map(|r| {
                self.writes_between(r.loc, r.t, self.end()).iter().find_map(|&t2| {
                    let v = self.trace.writes[t2 as usize - 1].value;
                    ext.next(r.loc, v)
                        .find(|&l2| self.first_holds(p, l2, r.t - 1, t2).is_none())
                        .map(|l2| (t2, l2))
                })
            })
            .collect();
        let f = Rc::new(Facts { compat, bad });
        self.facts.borrow_mut().insert((p, ext), Rc::clone(&f));
        f
    }
}
