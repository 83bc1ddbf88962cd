//! Citrus-specific checks: the two ghost-key lemmas, the tag lemma at
//! guarded inserts, grace periods against ghost intervals, and end-point
//! strengthening from weak to standard reachability.

use std::collections::HashSet;

use super::{Pred, TraceIndex, Verdict, Violation};
use crate::reach::{reach_set, weak_next, ExtendRel, GhostView, LocSet, ReachPred, Target};
use crate::trace::{Base, Field, KeyVal, Loc, ObjId, RcuKind, State, TraversalRecord};

/// Objects in the subtree rooted at `o`, following left/right links.
fn subtree(st: &State, o: ObjId) -> Vec<ObjId> {
    let mut seen = HashSet::new();
    let mut stack = vec![o];
    let mut out = Vec::new();
    while let Some(n) = stack.pop() {
        if !st.is_allocated(n) || !seen.insert(n) {
            continue;
        }
        out.push(n);
        stack.extend(st.link(n, Field::Left));
        stack.extend(st.link(n, Field::Right));
    }
    out
}

/// Node holding key `m` on the standard search for `m` that starts at
/// `(w, right)`.
fn search_from_right(st: &State, w: ObjId, m: KeyVal) -> Option<ObjId> {
    let KeyVal::Fin(mk) = m else { return None };
    let ext = ExtendRel::Bst(Target::Exact(mk));
    let mut seen = HashSet::new();
    let mut cur = Loc::new(w, Field::Right);
    loop {
        if !seen.insert(cur) || !st.is_allocated(cur.obj) {
            return None;
        }
        let v = st.val(cur);
        if cur.field == Field::Key && v.key() == Some(m) && cur.obj != w {
            return Some(cur.obj);
        }
        cur = ext.next(cur, v).next()?;
    }
}

/// A read-side section as `(thread, enter seq, exit (seq, t))`.
type Section = (u32, u64, Option<(u64, u64)>);

fn read_sections(ix: &TraceIndex) -> Vec<Section> {
    let mut sections: Vec<Section> = Vec::new();
    for e in &ix.trace.rcu {
        match e.kind {
            RcuKind::Enter => sections.push((e.thread, e.seq, None)),
            RcuKind::Exit => {
                if let Some(s) = sections.iter_mut().rev().find(|s| s.0 == e.thread && s.2.is_none()) {
                    s.2 = Some((e.seq, e.t));
                }
            }
            _ => {}
        }
    }
    sections
}

/// While a ghost is live on `w` (ghost `g`, key `m`): no key in `(g, m)`
/// is in `w`'s right subtree, and the standard search for `m` from
/// `w.right` reaches another node holding `m`. At the opening write the
/// whole subtree is free of such keys; later inserts may legitimately put
/// them on the left, where only the deviation-free search goes.
pub fn check_ghost_subtree(ix: &TraceIndex) -> Verdict {
    let name = "citrus-ghost-subtree";
    for iv in &ix.ghosts {
        let until = iv.collapse_t.unwrap_or(ix.end() + 1);
        for t in iv.open_t..until {
            let st = ix.state(t);
            let Some(m) = st.key(iv.obj) else { continue };
            let roots: Vec<ObjId> = if t == iv.open_t {
                vec![iv.obj]
            } else {
                st.link(iv.obj, Field::Right).into_iter().collect()
            };
            let inside = roots
                .into_iter()
                .flat_map(|r| subtree(st, r))
                .find(|&n| st.key(n).is_some_and(|k| iv.ghost < k && k < m));
            let fail = |chain: String| {
                Verdict::violation(
                    name,
                    Violation { t: Some(t), loc: Some(Loc::new(iv.obj, Field::GhostKey)), key: None, later_t: None, chain },
                )
            };
            if let Some(n) = inside {
                return fail(format!(
                    "at t={t}, {n} with key {} lies in the subtree of {} (ghost {}, key {m})",
                    st.key(n).unwrap(),
                    iv.obj,
                    iv.ghost
                ));
            }
            if search_from_right(st, iv.obj, m).is_none() {
                return fail(format!("at t={t}, no node with key {m} below {}.right", iv.obj));
            }
        }
    }
    Verdict::ok(name)
}

/// Weak paths deviate from standard search paths at most once: every
/// weakly reachable location is reachable by a standard path, one weak
/// link, then a standard path. Checked on every state with a live ghost,
/// with every ghost visible, for every key in the domain.
pub fn check_single_deviation(ix: &TraceIndex, keys: impl Iterator<Item = i64> + Clone) -> Verdict {
    let name = "citrus-single-deviation";
    let live: HashSet<u64> = ix
        .ghosts
        .iter()
        .flat_map(|iv| iv.open_t..iv.collapse_t.unwrap_or(ix.end() + 1))
        .collect();
    let mut times: Vec<u64> = live.into_iter().collect();
    times.sort_unstable();
    for t in times {
        let st = ix.state(t);
        let view = GhostView::new(&ix.ghosts, 0, t);
        for k in keys.clone() {
            let weak = reach_set(st, &ix.shape, ReachPred::WeakK(k), &view);
            let strong = reach_set(st, &ix.shape, ReachPred::BstK(Target::Exact(k)), &view);
            let once = one_deviation(st, &strong, &view, k);
            let stray = weak.iter().find(|l| !strong.contains(*l) && !once.contains(*l));
            if let Some(l) = stray {
                return Verdict::violation(
                    name,
                    Violation {
                        t: Some(t),
                        loc: Some(l),
                        key: Some(k),
                        later_t: None,
                        chain: format!("at t={t}, {l} is weakly {k}-reachable only through two or more deviations"),
                    },
                );
            }
        }
    }
    Verdict::ok(name)
}

/// Locations reached by one weak link out of `strong`, then standard steps.
fn one_deviation(st: &State, strong: &LocSet, view: &GhostView, k: i64) -> LocSet {
    let ext = ExtendRel::Bst(Target::Exact(k));
    let mut out = LocSet::with_objects(st.obj_bound());
    let mut stack: Vec<Loc> = Vec::new();
    for l in strong.iter().filter(|l| l.field == Field::Key) {
        let Some(m) = st.key(l.obj) else { continue };
        let g = view.ghost(l.obj).unwrap_or(m);
        stack.extend(weak_next(k, m, g, l.obj));
    }
    while let Some(l) = stack.pop() {
        if !st.is_allocated(l.obj) || !out.insert(l) {
            continue;
        }
        stack.extend(ext.next(l, st.val(l)));
    }
    out
}

/// At every guarded insert link, the written slot is on the standard
/// search path for the inserted key just before the write.
pub fn check_tag_lemma(ix: &TraceIndex) -> Verdict {
    let name = "citrus-tag-lemma";
    for w in &ix.trace.writes {
        if w.label != "insert:link-left" && w.label != "insert:link-right" {
            continue;
        }
        let Some(k) = ix.trace.op(w.op).map(|o| o.call.key) else { continue };
        let p = Pred::plain(ReachPred::BstK(Target::Exact(k)));
        if !ix.holds(p, w.loc, w.t - 1) {
            return Verdict::violation(
                name,
                Violation {
                    t: Some(w.t),
                    loc: Some(w.loc),
                    key: Some(k),
                    later_t: None,
                    chain: format!("insert link t={} ({}) writes {}, which is not on the search path for {k}", w.t, w.label, w.loc),
                },
            );
        }
    }
    Verdict::ok(name)
}

/// No read-side section that began before a ghost open is still running
/// when the ghost collapses.
pub fn check_grace(ix: &TraceIndex) -> Verdict {
    let name = "rcu-grace";
    let tr = ix.trace;
    let sections = read_sections(ix);
    for iv in &ix.ghosts {
        let Some(c) = iv.collapse_t else { continue };
        let (Some(open), Some(collapse)) = (tr.write_at(iv.open_t), tr.write_at(c)) else { continue };
        if let Some(&(th, enter, _)) = sections
            .iter()
            .find(|&&(_, enter, exit)| enter < open.seq && exit.is_none_or(|(x, _)| x > collapse.seq))
        {
            return Verdict::violation(
                name,
                Violation {
                    t: Some(c),
                    loc: Some(Loc::new(iv.obj, Field::GhostKey)),
                    key: None,
                    later_t: None,
                    chain: format!(
                        "thread {th} entered a read-side section (seq {enter}) before the ghost open at t={} \
                         and was still inside it at the collapse t={c}",
                        iv.open_t
                    ),
                },
            );
        }
    }
    Verdict::ok(name)
}

/// The last location a lookup read was, at some time between its base and
/// that read, on the standard search path and holding the value read.
pub fn check_endpoint(ix: &TraceIndex, tr: &TraversalRecord) -> Verdict {
    let name = format!("endpoint[{} op {}]", tr.site, tr.op);
    let (Some(k), Some(last)) = (tr.key, tr.steps.last()) else {
        return Verdict::ok(name);
    };
    let base = match tr.base {
        Base::At(t) => t,
        Base::Witness { from } => from,
    };
    let v = ix.state(last.t).val(last.loc);
    let p = Pred::plain(ReachPred::BstK(Target::Exact(k)));
    if super::field_witness(ix, p, last.loc, last.loc, v, base, last.t).is_some() {
        return Verdict::ok(name);
    }
    Verdict::violation(
        name,
        Violation {
            t: Some(last.t),
            loc: Some(last.loc),
            key: Some(k),
            later_t: None,
            chain: format!(
                "end point {} (read {v} at t={}) is never on the search path for {k} with that value in [{base}, {}]",
                last.loc, last.t, last.t
            ),
        },
    )
}
