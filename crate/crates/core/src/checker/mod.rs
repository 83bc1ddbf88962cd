//! Offline checks over completed traces.
//!
//! Everything here is evaluated against a [`TraceIndex`], which replays the
//! trace once and memoizes reach sets per predicate. Spans are inclusive
//! pairs of state times `(from, to)`; the writes a span covers are those
//! with `from < t <= to`.

mod citrus;
mod index;

pub use citrus::{check_endpoint, check_grace, check_ghost_subtree, check_single_deviation, check_tag_lemma};
pub use index::{Pred, Reduction, TraceIndex};

use serde::Serialize;

use crate::reach::ExtendRel;
use crate::trace::{Base, Loc, TraversalRecord, Value};

/// A cited counterexample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// The write (or read) the violation is anchored at.
    pub t: Option<u64>,
    pub loc: Option<Loc>,
    pub key: Option<i64>,
    /// A later write the condition forbids, if any.
    pub later_t: Option<u64>,
    pub chain: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Ok,
    Violation(Violation),
    /// An implication-style check whose premise does not hold: no claim.
    Premise { premise: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub condition: String,
    #[serde(flatten)]
    pub status: Status,
}

impl Verdict {
    pub fn ok(condition: impl Into<String>) -> Self {
        Verdict { condition: condition.into(), status: Status::Ok }
    }

    pub fn violation(condition: impl Into<String>, v: Violation) -> Self {
        Verdict { condition: condition.into(), status: Status::Violation(v) }
    }

    pub fn premise(condition: impl Into<String>, premise: impl Into<String>) -> Self {
        Verdict { condition: condition.into(), status: Status::Premise { premise: premise.into() } }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub fn is_violation(&self) -> bool {
        matches!(self.status, Status::Violation(_))
    }

    pub fn cited(&self) -> Option<&Violation> {
        match &self.status {
            Status::Violation(v) => Some(v),
            _ => None,
        }
    }

    /// One-line description of a non-OK verdict.
    pub fn describe(&self) -> String {
        match &self.status {
            Status::Ok => format!("{}: ok", self.condition),
            Status::Violation(v) => format!("{}: {}", self.condition, v.chain),
            Status::Premise { premise } => format!("{}: premise failed: {premise}", self.condition),
        }
    }
}

/// `◇_[t, t'] p(ℓ)` with its earliest witness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PastWitness {
    pub loc: Loc,
    pub key: Option<i64>,
    pub at: u64,
    pub from: u64,
    pub to: u64,
}

pub fn past_holds(ix: &TraceIndex, p: Pred, l: Loc, t: u64, t2: u64) -> Option<PastWitness> {
    ix.first_holds(p, l, t, t2)
        .map(|at| PastWitness { loc: l, key: p.key(), at, from: t, to: t2 })
}

fn label<'a>(ix: &TraceIndex<'a>, t: u64) -> &'a str {
    ix.trace.write_at(t).map_or("?", |w| w.label.as_ref())
}

fn clamp(ix: &TraceIndex, span: (u64, u64)) -> (u64, u64) {
    (span.0, span.1.min(ix.end()))
}

/// Single-step compatibility on every state in the span.
pub fn check_compat(ix: &TraceIndex, p: Pred, ext: ExtendRel, span: (u64, u64)) -> Verdict {
    let name = format!("compat[{p} ~ {}]", ext.name());
    let (a, b) = clamp(ix, span);
    let f = ix.facts(p, ext);
    for t in a..=b {
        if let Some((l, l2)) = f.compat[t as usize] {
            let v = ix.state(t).val(l);
            return Verdict::violation(
                name,
                Violation {
                    t: Some(t),
                    loc: Some(l),
                    key: p.key(),
                    later_t: None,
                    chain: format!("at t={t}, {l} satisfies {p} and holds {v}, extending to {l2}, which does not"),
                },
            );
        }
    }
    Verdict::ok(name)
}

/// The forepassed condition for every write in the span.
pub fn check_forepassed(ix: &TraceIndex, p: Pred, ext: ExtendRel, span: (u64, u64)) -> Verdict {
    let name = format!("forepassed[{p} ~ {}]", ext.name());
    let (a, b) = clamp(ix, span);
    let reds = ix.reductions(p);
    let f = ix.facts(p, ext);
    for (r, bad) in reds.iter().zip(&f.bad) {
        if r.t <= a || r.t > b {
            continue;
        }
        if let Some((t2, l2)) = *bad {
            if t2 > b {
                continue;
            }
            let v = ix.trace.writes[t2 as usize - 1].value;
            return Verdict::violation(
                name,
                Violation {
                    t: Some(r.t),
                    loc: Some(r.loc),
                    key: p.key(),
                    later_t: Some(t2),
                    chain: format!(
                        "write t={} ({}) reduces {p} at {}; write t'={t2} ({}) stores {v} there, leading to {l2}, \
                         which does not satisfy {p} at any time in [{}, {t2}]",
                        r.t,
                        label(ix, r.t),
                        r.loc,
                        label(ix, t2),
                        r.t - 1
                    ),
                },
            );
        }
    }
    Verdict::ok(name)
}

/// Every reduction in the span is followed by no write to the reduced
/// location up to the end of the span (the reducing write included).
pub fn check_strong_forepassed(ix: &TraceIndex, p: Pred, span: (u64, u64)) -> Verdict {
    let name = format!("strong-forepassed[{p}]");
    match strong_violations(ix, p, span).first() {
        None => Verdict::ok(name),
        Some(r) => {
            let t2 = r.next_write.unwrap_or_default();
            Verdict::violation(
                name,
                Violation {
                    t: Some(r.t),
                    loc: Some(r.loc),
                    key: p.key(),
                    later_t: Some(t2),
                    chain: format!(
                        "write t={} ({}) reduces {p} at {}, which is written again at t'={t2} ({})",
                        r.t,
                        label(ix, r.t),
                        r.loc,
                        label(ix, t2)
                    ),
                },
            )
        }
    }
}

/// All reductions in the span that break the strong condition.
pub fn strong_violations(ix: &TraceIndex, p: Pred, span: (u64, u64)) -> Vec<Reduction> {
    let (a, b) = clamp(ix, span);
    ix.reductions(p)
        .iter()
        .filter(|r| r.t > a && r.t <= b && r.next_write.is_some_and(|w| w <= b))
        .copied()
        .collect()
}

/// The field form: whenever `l` loses `p`, the field location `f` is never
/// written again within the span.
pub fn check_field_forepassed(ix: &TraceIndex, p: Pred, l: Loc, f: Loc, span: (u64, u64)) -> Verdict {
    let name = format!("field-forepassed[{p}; {l}, {f}]");
    let (a, b) = clamp(ix, span);
    for r in ix.reductions(p).iter().filter(|r| r.loc == l && r.t > a && r.t <= b) {
        if let Some(&t2) = ix.writes_between(f, r.t, b).first() {
            return Verdict::violation(
                name,
                Violation {
                    t: Some(r.t),
                    loc: Some(l),
                    key: p.key(),
                    later_t: Some(t2),
                    chain: format!(
                        "write t={} ({}) reduces {p} at {l}; {f} is written at t'={t2} ({})",
                        r.t,
                        label(ix, r.t),
                        label(ix, t2)
                    ),
                },
            );
        }
    }
    Verdict::ok(name)
}

/// The base time of a traversal under `p`.
pub fn resolve_base(ix: &TraceIndex, tr: &TraversalRecord, p: Pred) -> Result<u64, String> {
    let first = tr.steps.first().ok_or("empty traversal")?;
    match tr.base {
        Base::At(t) => Ok(t),
        Base::Witness { from } => ix.first_holds(p, first.loc, from, first.t).ok_or_else(|| {
            format!("{} does not satisfy {p} at any time in [{from}, {}]", first.loc, first.t)
        }),
    }
}

fn traversal_name(kind: &str, tr: &TraversalRecord, p: Pred) -> String {
    format!("{kind}[{} op {} ~ {p}]", tr.site, tr.op)
}

/// Direct check: the first location holds at the base and every later
/// location has held at some time between the base and the read that led
/// to it.
pub fn check_traversal_correct(ix: &TraceIndex, tr: &TraversalRecord, p: Pred) -> Verdict {
    let name = traversal_name("traversal", tr, p);
    let fail = |t: u64, loc: Loc, chain: String| {
        Verdict::violation(&name, Violation { t: Some(t), loc: Some(loc), key: p.key(), later_t: None, chain })
    };
    let Some(first) = tr.steps.first() else {
        return Verdict::ok(&name);
    };
    let base = match resolve_base(ix, tr, p) {
        Ok(b) => b,
        Err(e) => return fail(first.t, first.loc, format!("no base time: {e}")),
    };
    if base > ix.end() || !ix.holds(p, first.loc, base) {
        return fail(base, first.loc, format!("{} does not satisfy {p} at base t*={base}", first.loc));
    }
    for (i, l, ti) in tr.targets() {
        if ix.first_holds(p, l, base, ti).is_none() {
            return fail(
                ti,
                l,
                format!("step {} reaches {l} after the read at t={ti}; it never satisfies {p} in [{base}, {ti}]", i + 1),
            );
        }
    }
    Verdict::ok(name)
}

/// Traversal correctness by the compatibility + forepassed theorem: OK
/// only if every premise holds on the traversal's span, otherwise the
/// verdict names the failed premise and makes no claim.
pub fn infer_traversal_correct(ix: &TraceIndex, tr: &TraversalRecord, p: Pred, ext: ExtendRel) -> Verdict {
    let name = traversal_name("inferred", tr, p);
    let Some(first) = tr.steps.first() else {
        return Verdict::ok(name);
    };
    let base = match resolve_base(ix, tr, p) {
        Ok(b) => b,
        Err(e) => return Verdict::premise(name, format!("(a) {e}")),
    };
    if base > first.t || !ix.holds(p, first.loc, base) {
        return Verdict::premise(name, format!("(a) {} does not satisfy {p} at t*={base}", first.loc));
    }
    let span = (base, tr.last_t());
    let c = check_compat(ix, p, ext, span);
    if !c.is_ok() {
        return Verdict::premise(name, format!("(b) {}", c.describe()));
    }
    let f = check_forepassed(ix, p, ext, span);
    if !f.is_ok() {
        return Verdict::premise(name, format!("(c) {}", f.describe()));
    }
    Verdict::ok(name)
}

/// Diagnostic form of the points-to-reachable lemma over `[span.0, span.1]`:
/// once `ℓ` holds, whatever it later points to along `ext` has held since
/// `span.0`. Only the first time `ℓ` holds and the writes to `ℓ` after it
/// need checking, since the conclusion is monotone in `t'` for a fixed value.
pub fn check_lemma_points_reachable(ix: &TraceIndex, p: Pred, ext: ExtendRel, span: (u64, u64)) -> Verdict {
    let name = format!("points-to-reachable[{p} ~ {}]", ext.name());
    let (a, b) = clamp(ix, span);
    let s = ix.series(p);
    let mut first: std::collections::HashMap<Loc, u64> = std::collections::HashMap::new();
    for t in a..=b {
        for l in s[t as usize].iter() {
            first.entry(l).or_insert(t);
        }
    }
    let mut ls: Vec<(Loc, u64)> = first.iter().map(|(&l, &t)| (l, t)).collect();
    ls.sort_by_key(|&(l, t)| (t, l));
    for (l, f) in ls {
        let times = std::iter::once(f).chain(ix.writes_between(l, f + 1, b).iter().copied());
        for t2 in times {
            let v = ix.state(t2).val(l);
            if let Some(l2) = ext.next(l, v).find(|l2| first.get(l2).is_none_or(|&f2| f2 > t2)) {
                return Verdict::violation(
                    name,
                    Violation {
                        t: Some(f),
                        loc: Some(l),
                        key: p.key(),
                        later_t: Some(t2),
                        chain: format!(
                            "{l} satisfies {p} at t={f}; at t'={t2} it holds {v}, leading to {l2}, \
                             which does not satisfy {p} at any time in [{a}, {t2}]"
                        ),
                    },
                );
            }
        }
    }
    Verdict::ok(name)
}

/// Earliest `t'' ∈ [t, t2]` at which `l` satisfies `p` and `f` holds `v`.
pub fn field_witness(ix: &TraceIndex, p: Pred, l: Loc, f: Loc, v: Value, t: u64, t2: u64) -> Option<u64> {
    let s = ix.series(p);
    (t..=t2.min(ix.end())).find(|&u| s[u as usize].contains(l) && ix.state(u).val(f) == v)
}

/// The field-extension theorem on `[t, t2]`: from `p(ℓ)` at `t`, the value
/// `v` of `f` at `t2` and the field forepassed condition, some time in
/// between has both. A violation means the conclusion failed although the
/// premises held.
pub fn check_past_reach_with_field(ix: &TraceIndex, p: Pred, l: Loc, f: Loc, t: u64, t2: u64) -> Verdict {
    let name = format!("past-reach-with-field[{p}; {l}, {f}]");
    if t > t2 || t2 > ix.end() {
        return Verdict::premise(name, format!("bad interval [{t}, {t2}]"));
    }
    if !ix.holds(p, l, t) {
        return Verdict::premise(name, format!("{l} does not satisfy {p} at t={t}"));
    }
    let ff = check_field_forepassed(ix, p, l, f, (t, t2));
    if !ff.is_ok() {
        return Verdict::premise(name, ff.describe());
    }
    let v = ix.state(t2).val(f);
    match field_witness(ix, p, l, f, v, t, t2) {
        Some(_) => Verdict::ok(name),
        None => Verdict::violation(
            name,
            Violation {
                t: Some(t),
                loc: Some(l),
                key: p.key(),
                later_t: Some(t2),
                chain: format!("no time in [{t}, {t2}] where {l} satisfies {p} and {f} = {v}"),
            },
        ),
    }
}

#[cfg(test)]
mod tests;
