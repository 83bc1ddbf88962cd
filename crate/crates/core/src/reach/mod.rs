//! Extend relations and reachability predicates over a single state.
//!
//! Every predicate is the set of locations connected to a start location by
//! a chain of its defining relation, so each is computed as one graph search
//! that yields the whole reachable set ([`LocSet`]). Searches mark visited
//! locations, which keeps them finite on cyclic link graphs.

use std::cmp::Ordering;
use std::fmt;

use fixedbitset::FixedBitSet;

use crate::trace::{Field, GhostInterval, KeyVal, Loc, ObjId, State, Structure, Trace, Value};

/// Search target: an integer key `k`, or `k + ε` with `ε = ½`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    Exact(i64),
    Above(i64),
}

impl Target {
    /// Ordering of node key `m` relative to the target.
    pub fn cmp_key(self, m: KeyVal) -> Ordering {
        match (m, self) {
            (KeyVal::NegInf, _) => Ordering::Less,
            (KeyVal::PosInf, _) => Ordering::Greater,
            (KeyVal::Fin(m), Target::Exact(k)) => m.cmp(&k),
            (KeyVal::Fin(m), Target::Above(k)) => {
                if m <= k {
                    Ordering::Less
                } else {
                    Ordering::Greater
                }
            }
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Exact(k) => write!(f, "{k}"),
            Target::Above(k) => write!(f, "{k}+1/2"),
        }
    }
}

/// Set of locations, indexed densely by [`Loc::index`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LocSet(FixedBitSet);

impl LocSet {
    pub fn with_objects(n: usize) -> Self {
        LocSet(FixedBitSet::with_capacity(n * Field::COUNT))
    }

    pub fn contains(&self, l: Loc) -> bool {
        self.0.contains(l.index())
    }

    /// Inserts and reports whether the location was new.
    pub fn insert(&mut self, l: Loc) -> bool {
        let i = l.index();
        if i >= self.0.len() {
            self.0.grow((i + 1).max(self.0.len() * 2));
        }
        !self.0.put(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = Loc> + '_ {
        self.0.ones().map(Loc::from_index)
    }

    pub fn len(&self) -> usize {
        self.0.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_clear()
    }

    /// Locations in `self` but not in `other`.
    pub fn minus<'a>(&'a self, other: &'a LocSet) -> impl Iterator<Item = Loc> + 'a {
        self.0
            .ones()
            .filter(move |&i| !other.0.contains(i))
            .map(Loc::from_index)
    }
}

/// Extend relations `extend_p(ℓ, v, ℓ')`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExtendRel {
    /// List search for `k`: key→succ while the key is below `k`, succ→next key.
    Succ(i64),
    /// Tree walk with pred links: key→{left,right,pred}, link→key.
    TreePred,
    /// Binary search for the target: right below, left above, stop at equal.
    Bst(Target),
}

impl ExtendRel {
    pub fn name(&self) -> String {
        match self {
            ExtendRel::Succ(k) => format!("extend_succ({k})"),
            ExtendRel::TreePred => "extend_treepred".into(),
            ExtendRel::Bst(t) => format!("extend_bst({t})"),
        }
    }

    pub fn from_kind(kind: crate::trace::ExtendKind, key: Option<i64>) -> Option<ExtendRel> {
        use crate::trace::ExtendKind as E;
        Some(match kind {
            E::Succ => ExtendRel::Succ(key?),
            E::TreePred => ExtendRel::TreePred,
            E::Bst => ExtendRel::Bst(Target::Exact(key?)),
            E::BstEps => ExtendRel::Bst(Target::Above(key?)),
        })
    }

    /// The relation as stated: is `(l, v, l2)` in it?
    pub fn holds(&self, l: Loc, v: Value, l2: Loc) -> bool {
        match *self {
            ExtendRel::Succ(k) => match (l.field, v) {
                (Field::Key, Value::Key(m)) => {
                    m < KeyVal::Fin(k) && l2 == Loc::new(l.obj, Field::Succ)
                }
                (Field::Succ, Value::Link(o)) => l2 == Loc::new(o, Field::Key),
                _ => false,
            },
            ExtendRel::TreePred => match (l.field, v) {
                (Field::Key, _) => {
                    l2.obj == l.obj && matches!(l2.field, Field::Left | Field::Right | Field::Pred)
                }
                (Field::Left | Field::Right | Field::Pred, Value::Link(o)) => {
                    l2 == Loc::new(o, Field::Key)
                }
                _ => false,
            },
            ExtendRel::Bst(t) => match (l.field, v) {
                (Field::Key, Value::Key(m)) => match t.cmp_key(m) {
                    Ordering::Less => l2 == Loc::new(l.obj, Field::Right),
                    Ordering::Greater => l2 == Loc::new(l.obj, Field::Left),
                    Ordering::Equal => false,
                },
                (Field::Left | Field::Right, Value::Link(o)) => l2 == Loc::new(o, Field::Key),
                _ => false,
            },
        }
    }

    /// Every `l2` with `holds(l, v, l2)`.
    pub fn next(&self, l: Loc, v: Value) -> Next {
        let mut out = Next::default();
        match *self {
            ExtendRel::Succ(k) => match (l.field, v) {
                (Field::Key, Value::Key(m)) if m < KeyVal::Fin(k) => {
                    out.push(Loc::new(l.obj, Field::Succ))
                }
                (Field::Succ, Value::Link(o)) => out.push(Loc::new(o, Field::Key)),
                _ => {}
            },
            ExtendRel::TreePred => match (l.field, v) {
                (Field::Key, _) => {
                    for f in [Field::Left, Field::Right, Field::Pred] {
                        out.push(Loc::new(l.obj, f));
                    }
                }
                (Field::Left | Field::Right | Field::Pred, Value::Link(o)) => {
                    out.push(Loc::new(o, Field::Key))
                }
                _ => {}
            },
            ExtendRel::Bst(t) => match (l.field, v) {
                (Field::Key, Value::Key(m)) => match t.cmp_key(m) {
                    Ordering::Less => out.push(Loc::new(l.obj, Field::Right)),
                    Ordering::Greater => out.push(Loc::new(l.obj, Field::Left)),
                    Ordering::Equal => {}
                },
                (Field::Left | Field::Right, Value::Link(o)) => out.push(Loc::new(o, Field::Key)),
                _ => {}
            },
        }
        out
    }
}

/// Up to three successor locations.
#[derive(Clone, Copy, Debug, Default)]
pub struct Next {
    buf: [Option<Loc>; 3],
    len: usize,
}

impl Next {
    fn push(&mut self, l: Loc) {
        self.buf[self.len] = Some(l);
        self.len += 1;
    }
}

impl Iterator for Next {
    type Item = Loc;
    fn next(&mut self) -> Option<Loc> {
        let l = self.buf.iter_mut().find_map(Option::take);
        if l.is_some() {
            self.len -= 1;
        }
        l
    }
}

/// Per-traversal ghost state: which ghost-key opens a traversal that
/// started at `s` sees when the state at `t` is queried.
#[derive(Clone, Copy, Debug)]
pub struct GhostView<'a> {
    pub intervals: &'a [GhostInterval],
    pub s: u64,
    pub t: u64,
}

impl<'a> GhostView<'a> {
    pub fn none() -> GhostView<'static> {
        GhostView { intervals: &[], s: 0, t: 0 }
    }

    pub fn new(intervals: &'a [GhostInterval], s: u64, t: u64) -> Self {
        GhostView { intervals, s, t }
    }

    pub fn at(self, t: u64) -> Self {
        GhostView { t, ..self }
    }

    /// Effective ghost key of `obj`, if an open is visible.
    pub fn ghost(&self, obj: ObjId) -> Option<KeyVal> {
        self.intervals
            .iter()
            .find(|iv| {
                iv.obj == obj
                    && self.s < iv.open_t
                    && iv.open_t <= self.t
                    && iv.collapse_t.is_none_or(|c| c > self.t)
            })
            .map(|iv| iv.ghost)
    }

    pub fn is_trivial(&self) -> bool {
        self.intervals
            .iter()
            .all(|iv| !(self.s < iv.open_t && iv.open_t <= self.t && iv.collapse_t.is_none_or(|c| c > self.t)))
    }
}

/// Named start objects of a structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub schema: Structure,
    /// `-∞` list head (lists, LO tree).
    pub head: Option<ObjId>,
    /// Tree root.
    pub root: Option<ObjId>,
}

impl Shape {
    pub fn of(trace: &Trace) -> Shape {
        Shape {
            schema: trace.schema(),
            head: trace.root("min"),
            root: trace.root("root"),
        }
    }
}

/// Reachability predicates `Reach_k(·)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReachPred {
    /// Plain successor-list reachability, lifted to every field of a node
    /// on the list.
    Succ,
    /// `succ_kreach`: extend_succ(k) chains from `(-∞, key)`.
    SuccK(i64),
    /// `bst_kreach` (and, with `Above`, `succ_kreach_eps`).
    BstK(Target),
    /// Citrus weak reachability with ghost keys.
    WeakK(i64),
}

impl ReachPred {
    pub fn name(&self) -> String {
        match self {
            ReachPred::Succ => "succ".into(),
            ReachPred::SuccK(k) => format!("succ_k({k})"),
            ReachPred::BstK(Target::Exact(k)) => format!("bst_k({k})"),
            ReachPred::BstK(Target::Above(k)) => format!("succ_k_eps({k})"),
            ReachPred::WeakK(k) => format!("weak_k({k})"),
        }
    }

    pub fn from_kind(kind: crate::trace::ReachKind, key: Option<i64>) -> Option<ReachPred> {
        use crate::trace::ReachKind as R;
        Some(match kind {
            R::Succ => ReachPred::Succ,
            R::SuccK => ReachPred::SuccK(key?),
            R::BstK => ReachPred::BstK(Target::Exact(key?)),
            R::WeakK => ReachPred::WeakK(key?),
            R::SuccKEps => ReachPred::BstK(Target::Above(key?)),
        })
    }

    /// The extend relation whose chains define this predicate.
    pub fn defining_extend(&self) -> Option<ExtendRel> {
        match *self {
            ReachPred::Succ => None,
            ReachPred::SuccK(k) => Some(ExtendRel::Succ(k)),
            ReachPred::BstK(t) => Some(ExtendRel::Bst(t)),
            ReachPred::WeakK(k) => Some(ExtendRel::Bst(Target::Exact(k))),
        }
    }

    pub fn uses_ghosts(&self) -> bool {
        matches!(self, ReachPred::WeakK(_))
    }
}

/// Weak-link successors (`go right` / `go left` rule with ghost key `g`).
pub fn weak_next(k: i64, m: KeyVal, g: KeyVal, obj: ObjId) -> Next {
    let k = KeyVal::Fin(k);
    let mut out = Next::default();
    if (k > g && k != m) || (k == m && g != m) {
        out.push(Loc::new(obj, Field::Right));
    }
    if k < m {
        out.push(Loc::new(obj, Field::Left));
    }
    out
}

/// Every location satisfying `pred` in `st`.
pub fn reach_set(st: &State, shape: &Shape, pred: ReachPred, ghost: &GhostView) -> LocSet {
    let mut set = LocSet::with_objects(st.obj_bound());
    match pred {
        ReachPred::Succ => {
            let Some(mut o) = shape.head else { return set };
            loop {
                if !st.is_allocated(o) || set.contains(Loc::new(o, Field::Key)) {
                    break;
                }
                for &f in shape.schema.fields() {
                    if f != Field::GhostKey {
                        set.insert(Loc::new(o, f));
                    }
                }
                match st.link(o, Field::Succ) {
                    Some(n) => o = n,
                    None => break,
                }
            }
        }
        ReachPred::SuccK(k) => {
            let Some(head) = shape.head else { return set };
            chain(st, Loc::new(head, Field::Key), ExtendRel::Succ(k), &mut set);
        }
        ReachPred::BstK(t) => {
            let Some(root) = shape.root else { return set };
            chain(st, Loc::new(root, Field::Key), ExtendRel::Bst(t), &mut set);
        }
        ReachPred::WeakK(k) => {
            let Some(root) = shape.root else { return set };
            let mut stack = vec![Loc::new(root, Field::Key)];
            while let Some(l) = stack.pop() {
                if !st.is_allocated(l.obj) || !set.insert(l) {
                    continue;
                }
                let v = st.val(l);
                match (l.field, v) {
                    (Field::Key, Value::Key(m)) => {
                        let g = ghost.ghost(l.obj).unwrap_or(m);
                        stack.extend(weak_next(k, m, g, l.obj));
                    }
                    (Field::Left | Field::Right, Value::Link(o)) => {
                        stack.push(Loc::new(o, Field::Key))
                    }
                    _ => {}
                }
            }
        }
    }
    set
}

/// Follows a deterministic relation from `start`, stopping on revisits.
fn chain(st: &State, start: Loc, ext: ExtendRel, set: &mut LocSet) {
    let mut cur = Some(start);
    while let Some(l) = cur {
        if !st.is_allocated(l.obj) || !set.insert(l) {
            return;
        }
        cur = ext.next(l, st.val(l)).next();
    }
}

pub fn reachable(st: &State, shape: &Shape, pred: ReachPred, ghost: &GhostView, x: Loc) -> bool {
    reach_set(st, shape, pred, ghost).contains(x)
}

/// Single-step compatibility on one state: the first `(ℓ, ℓ')` with `ℓ`
/// reachable, `extend(ℓ, σ(ℓ), ℓ')`, and `ℓ'` not reachable.
pub fn compat_violation(st: &State, set: &LocSet, ext: &ExtendRel) -> Option<(Loc, Loc)> {
    set.iter().find_map(|l| {
        ext.next(l, st.val(l))
            .find(|l2| !set.contains(*l2))
            .map(|l2| (l, l2))
    })
}

/// Verdict-returning form of [`compat_violation`].
pub fn check_compat_on_state(
    st: &State,
    shape: &Shape,
    ext: &ExtendRel,
    pred: ReachPred,
    ghost: &GhostView,
) -> Result<(), (Loc, Loc)> {
    let set = reach_set(st, shape, pred, ghost);
    compat_violation(st, &set, ext).map_or(Ok(()), Err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(o: u32, k: KeyVal, st: &mut State) {
        st.set(Loc::new(ObjId(o), Field::Key), Value::Key(k));
    }

    fn link(o: u32, f: Field, to: Option<u32>, st: &mut State) {
        st.set(Loc::new(ObjId(o), f), Value::from_link(to.map(ObjId)));
    }

    /// -inf(0) -> 3(2) -> 7(3) -> +inf(1)
    fn list() -> (State, Shape) {
        let mut st = State::default();
        key(0, KeyVal::NegInf, &mut st);
        key(1, KeyVal::PosInf, &mut st);
        key(2, KeyVal::Fin(3), &mut st);
        key(3, KeyVal::Fin(7), &mut st);
        link(0, Field::Succ, Some(2), &mut st);
        link(2, Field::Succ, Some(3), &mut st);
        link(3, Field::Succ, Some(1), &mut st);
        link(1, Field::Succ, None, &mut st);
        for o in 0..4 {
            st.set(Loc::new(ObjId(o), Field::Rem), Value::Bool(false));
        }
        let shape = Shape { schema: Structure::LazyList, head: Some(ObjId(0)), root: None };
        (st, shape)
    }

    #[test]
    fn extend_succ_cases() {
        let o = ObjId(4);
        let e = ExtendRel::Succ(5);
        assert!(e.holds(Loc::new(o, Field::Key), Value::Key(KeyVal::Fin(3)), Loc::new(o, Field::Succ)));
        assert!(!e.holds(Loc::new(o, Field::Key), Value::Key(KeyVal::Fin(7)), Loc::new(o, Field::Succ)));
        assert!(e.holds(Loc::new(o, Field::Succ), Value::Link(ObjId(9)), Loc::new(ObjId(9), Field::Key)));
    }

    #[test]
    fn extend_treepred_cases() {
        let o = ObjId(4);
        let e = ExtendRel::TreePred;
        assert!(e.holds(Loc::new(o, Field::Key), Value::Key(KeyVal::Fin(1)), Loc::new(o, Field::Pred)));
        assert!(!e.holds(Loc::new(o, Field::Left), Value::Null, Loc::new(ObjId(0), Field::Key)));
        assert!(!e.holds(Loc::new(o, Field::Succ), Value::Link(ObjId(2)), Loc::new(ObjId(2), Field::Key)));
    }

    #[test]
    fn extend_bst_cases() {
        let o = ObjId(4);
        let e = ExtendRel::Bst(Target::Exact(5));
        assert!(e.holds(Loc::new(o, Field::Key), Value::Key(KeyVal::Fin(3)), Loc::new(o, Field::Right)));
        assert!(e.next(Loc::new(o, Field::Key), Value::Key(KeyVal::Fin(5))).next().is_none());
        assert!(e.holds(Loc::new(o, Field::Key), Value::Key(KeyVal::Fin(8)), Loc::new(o, Field::Left)));
    }

    #[test]
    fn eps_target_never_equals_an_integer() {
        for m in -5..5 {
            assert_ne!(Target::Above(0).cmp_key(KeyVal::Fin(m)), Ordering::Equal);
        }
    }

    #[test]
    fn succ_k_stops_at_first_key_not_below() {
        let (st, shape) = list();
        let g = GhostView::none();
        let node7 = Loc::new(ObjId(3), Field::Key);
        assert!(reachable(&st, &shape, ReachPred::SuccK(5), &g, node7));
        assert!(!reachable(&st, &shape, ReachPred::SuccK(2), &g, node7));
        for k in -3..10 {
            assert!(reachable(&st, &shape, ReachPred::SuccK(k), &g, Loc::new(ObjId(0), Field::Key)));
        }
    }

    #[test]
    fn succ_reach_is_lifted_to_nodes() {
        let (mut st, shape) = list();
        let g = GhostView::none();
        assert!(reachable(&st, &shape, ReachPred::Succ, &g, Loc::new(ObjId(1), Field::Key)));
        assert!(reachable(&st, &shape, ReachPred::Succ, &g, Loc::new(ObjId(2), Field::Rem)));
        key(5, KeyVal::Fin(4), &mut st);
        link(5, Field::Succ, Some(3), &mut st);
        assert!(!reachable(&st, &shape, ReachPred::Succ, &g, Loc::new(ObjId(5), Field::Key)));
    }

    #[test]
    fn compat_negative_control_pred_leaves_list() {
        let (mut st, _) = list();
        let shape = Shape { schema: Structure::LoTree, head: Some(ObjId(0)), root: None };
        for o in 0..4 {
            for f in [Field::Left, Field::Right, Field::Pred, Field::Parent] {
                link(o, f, None, &mut st);
            }
        }
        let g = GhostView::none();
        assert!(check_compat_on_state(&st, &shape, &ExtendRel::TreePred, ReachPred::Succ, &g).is_ok());
        key(6, KeyVal::Fin(5), &mut st);
        link(3, Field::Pred, Some(6), &mut st);
        let err = check_compat_on_state(&st, &shape, &ExtendRel::TreePred, ReachPred::Succ, &g);
        assert_eq!(err, Err((Loc::new(ObjId(3), Field::Pred), Loc::new(ObjId(6), Field::Key))));
    }

    #[test]
    fn bst_cycles_terminate() {
        let mut st = State::default();
        key(0, KeyVal::PosInf, &mut st);
        key(1, KeyVal::Fin(2), &mut st);
        link(0, Field::Left, Some(1), &mut st);
        link(1, Field::Right, Some(0), &mut st);
        link(1, Field::Left, Some(0), &mut st);
        let shape = Shape { schema: Structure::CfTree, head: None, root: Some(ObjId(0)) };
        let set = reach_set(&st, &shape, ReachPred::BstK(Target::Exact(3)), &GhostView::none());
        assert_eq!(set.len(), 4);
    }

    #[test]
    fn weak_opens_both_sides_inside_ghost_interval() {
        // w has key 7 and ghost 3; a search for 5 may go left or right.
        let mut st = State::default();
        key(0, KeyVal::Fin(7), &mut st);
        key(1, KeyVal::Fin(2), &mut st);
        key(2, KeyVal::Fin(9), &mut st);
        link(0, Field::Left, Some(1), &mut st);
        link(0, Field::Right, Some(2), &mut st);
        let shape = Shape { schema: Structure::Citrus, head: None, root: Some(ObjId(0)) };
        let ivs = [GhostInterval { obj: ObjId(0), open_t: 2, ghost: KeyVal::Fin(3), collapse_t: None }];
        let view = GhostView::new(&ivs, 1, 5);
        let set = reach_set(&st, &shape, ReachPred::WeakK(5), &view);
        assert!(set.contains(Loc::new(ObjId(0), Field::Left)));
        assert!(set.contains(Loc::new(ObjId(0), Field::Right)));
        // traversal that started after the open sees no ghost
        let late = GhostView::new(&ivs, 2, 5);
        let set = reach_set(&st, &shape, ReachPred::WeakK(5), &late);
        assert!(!set.contains(Loc::new(ObjId(0), Field::Right)));
    }
}
