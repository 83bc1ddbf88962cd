//! The full checker battery for one trace.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::checker::{self, Pred, TraceIndex, Verdict};
use crate::lin::{self, LinOutcome};
use crate::reach::{ExtendRel, ReachPred, Target};
use crate::trace::{validate_trace, validate_traversal_in, Base, ReachKind, Structure, Trace, TraversalRecord};

/// Counts per check family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub ok: u64,
    pub violation: u64,
    /// Implication-style checks whose premise did not hold.
    pub premise: u64,
}

impl Tally {
    pub fn add(&mut self, o: Tally) {
        self.ok += o.ok;
        self.violation += o.violation;
        self.premise += o.premise;
    }

    pub fn total(&self) -> u64 {
        self.ok + self.violation + self.premise
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatteryOptions {
    /// Histories up to this many (non-maintenance) ops get the search oracle.
    pub lin_max_ops: usize,
    pub lin_budget: u64,
    /// Run the whole-trace reachability conditions (compat, forepassed,
    /// strong, lemmas) for every key, not just effect points.
    pub conditions: bool,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        BatteryOptions { lin_max_ops: 8, lin_budget: 1_000_000, conditions: true }
    }
}

impl BatteryOptions {
    /// Effect points and validation only.
    pub fn light() -> Self {
        BatteryOptions { lin_max_ops: 0, lin_budget: 0, conditions: false }
    }
}

/// Everything the battery found on one trace.
#[derive(Clone, Debug, Default, Serialize)]
pub struct TraceChecks {
    pub tallies: BTreeMap<String, Tally>,
    /// Non-OK verdicts (violations and premise failures).
    pub findings: Vec<(String, Verdict)>,
    pub decisive: BTreeSet<String>,
    /// Labels of writes that reduced a prescribed predicate.
    pub reducing: BTreeSet<String>,
}

impl TraceChecks {
    fn record(&mut self, family: &str, v: Verdict) {
        let t = self.tallies.entry(family.to_string()).or_default();
        match v.status {
            checker::Status::Ok => t.ok += 1,
            checker::Status::Violation(_) => t.violation += 1,
            checker::Status::Premise { .. } => t.premise += 1,
        }
        if !v.is_ok() {
            self.findings.push((family.to_string(), v));
        }
    }

    /// Tallies without keeping the verdict: for families where violations
    /// are the expected outcome.
    fn note(&mut self, family: &str, v: &Verdict) {
        let t = self.tallies.entry(family.to_string()).or_default();
        t.ok += v.is_ok() as u64;
        t.violation += v.is_violation() as u64;
    }

    fn pass(&mut self, family: &str, name: impl Into<String>) {
        self.record(family, Verdict::ok(name));
    }

    fn fail(&mut self, family: &str, name: impl Into<String>, chain: String) {
        let v = checker::Violation { t: None, loc: None, key: None, later_t: None, chain };
        self.record(family, Verdict::violation(name, v));
    }

    /// Violations in families that must hold.
    pub fn violations(&self) -> u64 {
        self.tallies.iter().filter(|(f, _)| !is_expected_violation(f)).map(|(_, t)| t.violation).sum()
    }
}

/// The strong condition on the CF tree, which backtracking breaks.
pub const EXPECTED_STRONG_CF: &str = "strong-forepassed-cf";

pub fn is_expected_violation(family: &str) -> bool {
    family == EXPECTED_STRONG_CF
}

/// Write labels that may change the abstraction.
pub fn decisive_labels(s: Structure) -> &'static [&'static str] {
    match s {
        Structure::LazyList => &["insert:publish", "delete:mark"],
        Structure::LoTree => &["insert:succ-publish", "delete:mark"],
        Structure::CfTree => &["insert:link", "insert:unmark", "delete:mark"],
        Structure::Citrus => &["insert:link-left", "insert:link-right", "delete:bypass", "delete:link-copy"],
    }
}

/// Write labels allowed to reduce the key-parameterized predicate of the
/// list-shaped structures.
pub fn reducing_labels(s: Structure) -> Option<&'static [&'static str]> {
    match s {
        Structure::LazyList => Some(&["insert:publish", "delete:succ-unlink"]),
        Structure::LoTree => Some(&["insert:succ-publish", "delete:succ-unlink"]),
        _ => None,
    }
}

/// Key-parameterized (predicate, extend) pairs checked over the whole trace.
/// Citrus has none: weak reachability depends on the traversal's start, and
/// the successor walk's predicate only holds its conditions while the
/// walk's start node is latched, so both are checked per traversal.
pub fn prescribed_pairs(s: Structure, k: i64) -> Vec<(ReachPred, ExtendRel)> {
    match s {
        Structure::LazyList | Structure::LoTree => vec![(ReachPred::SuccK(k), ExtendRel::Succ(k))],
        Structure::CfTree => vec![(ReachPred::BstK(Target::Exact(k)), ExtendRel::Bst(Target::Exact(k)))],
        Structure::Citrus => vec![],
    }
}

/// The predicate a traversal record is bound to, with its ghost view.
pub fn traversal_pred(tr: &TraversalRecord) -> Option<Pred> {
    let reach = ReachPred::from_kind(tr.reach, tr.key)?;
    let view = match (tr.reach, tr.base) {
        (ReachKind::WeakK, Base::At(s)) => s,
        _ => 0,
    };
    Some(Pred::viewed(reach, view))
}

/// Whether a trace qualifies for the search oracle.
pub fn lin_sized(trace: &Trace, max_ops: usize) -> bool {
    trace.ops.iter().filter(|o| !o.call.kind.is_maintenance()).count() <= max_ops
}

pub fn run_battery(trace: &Trace, opts: &BatteryOptions) -> TraceChecks {
    let mut out = TraceChecks::default();
    let schema = trace.schema();

    let rep = validate_trace(trace);
    if rep.errors.is_empty() {
        out.pass("validate-trace", "validate-trace");
    } else {
        out.fail("validate-trace", "validate-trace", rep.errors.join("; "));
        return out;
    }
    let ix = TraceIndex::new(trace);

    let abs = lin::abstract_series(&ix);
    let eff = lin::check_effect_points(&ix, &abs);
    let effect_ok = eff.verdict.is_ok();
    out.decisive = eff.decisive.clone();
    for tr in &eff.transitions {
        if decisive_labels(schema).contains(&tr.label.as_str()) {
            out.pass("abstraction-stability", "abstraction-stability");
        } else {
            out.fail(
                "abstraction-stability",
                "abstraction-stability",
                format!("write t={} ({}) changes the abstraction at key {}", tr.t, tr.label, tr.key),
            );
        }
    }
    out.record("effect-points", eff.verdict);

    if opts.lin_max_ops > 0 && lin_sized(trace, opts.lin_max_ops) {
        let r = lin::check_trace_history(trace, &abs[0], opts.lin_budget);
        match &r {
            LinOutcome::Linearizable => out.pass("linearizable", "linearizable"),
            LinOutcome::NotLinearizable { key, ops } => out.fail(
                "linearizable",
                "linearizable",
                format!("no linearization of the ops {ops:?} on key {key}"),
            ),
            LinOutcome::Inconclusive { key } => out.record(
                "linearizable",
                Verdict::premise("linearizable", format!("search budget exhausted on key {key}")),
            ),
        }
        if effect_ok && !r.is_linearizable() {
            out.fail("lin-agreement", "lin-agreement", "effect points hold but the search found no linearization".into());
        } else {
            out.pass("lin-agreement", "lin-agreement");
        }
    }

    traversals(&ix, &mut out);
    field_reads(&ix, &mut out);
    if opts.conditions {
        conditions(&ix, &mut out);
        if schema == Structure::Citrus {
            citrus(&ix, &mut out);
        }
    }
    out
}

fn traversals(ix: &TraceIndex, out: &mut TraceChecks) {
    let trace = ix.trace;
    for tr in &trace.traversals {
        let (Some(p), Some(ext)) = (traversal_pred(tr), ExtendRel::from_kind(tr.extend, tr.key)) else {
            out.fail("validate-traversal", format!("traversal[{}]", tr.site), "unbound predicate".into());
            continue;
        };
        let rep = validate_traversal_in(&ix.states, tr, &ext);
        if rep.errors.is_empty() {
            out.pass("validate-traversal", "validate-traversal");
        } else {
            out.fail("validate-traversal", format!("validate-traversal[{}]", tr.site), rep.errors.join("; "));
        }

        let direct = checker::check_traversal_correct(ix, tr, p);
        let direct_ok = direct.is_ok();
        out.record("traversal", direct);

        let inferred = checker::infer_traversal_correct(ix, tr, p, ext);
        if inferred.is_ok() && !direct_ok {
            out.fail(
                "infer-soundness",
                format!("infer-soundness[{} op {}]", tr.site, tr.op),
                "inferred OK but the direct check failed".into(),
            );
        } else {
            out.pass("infer-soundness", "infer-soundness");
        }
        out.record("premises", inferred);

        if let Base::Witness { .. } = tr.base {
            let v = match checker::resolve_base(ix, tr, p) {
                Ok(_) => Verdict::ok("base-witness"),
                Err(e) => Verdict::violation(
                    "base-witness",
                    checker::Violation { t: None, loc: None, key: tr.key, later_t: None, chain: e },
                ),
            };
            out.record("base-witness", v);
        }
        if tr.reach == ReachKind::WeakK {
            out.record("citrus-endpoint", checker::check_endpoint(ix, tr));
            let span = (checker::resolve_base(ix, tr, p).unwrap_or(0), tr.last_t());
            out.record("weak-compat", checker::check_compat(ix, p, ext, span));
            out.record("weak-forepassed", checker::check_forepassed(ix, p, ext, span));
            out.record("weak-points-to-reachable", checker::check_lemma_points_reachable(ix, p, ext, span));
        }
    }
}

fn field_reads(ix: &TraceIndex, out: &mut TraceChecks) {
    for fr in &ix.trace.field_reads {
        let view = if fr.reach == ReachKind::WeakK { fr.base } else { 0 };
        let Some(reach) = ReachPred::from_kind(fr.reach, Some(fr.key)) else { continue };
        let p = Pred::viewed(reach, view);
        let name = format!("field-witness[{} op {}]", fr.site, fr.op);
        match checker::field_witness(ix, p, fr.node, fr.field, fr.value, fr.base, fr.t) {
            Some(_) => out.pass("field-witness", name),
            None => out.fail(
                "field-witness",
                name,
                format!(
                    "no time in [{}, {}] where {} satisfies {p} and {} = {}",
                    fr.base, fr.t, fr.node, fr.field, fr.value
                ),
            ),
        }
        // The theorem itself, from the first time the node was reachable.
        if let Some(t1) = ix.first_holds(p, fr.node, fr.base, fr.t) {
            out.record("field-extension", checker::check_past_reach_with_field(ix, p, fr.node, fr.field, t1, fr.t));
        }
    }
}

fn conditions(ix: &TraceIndex, out: &mut TraceChecks) {
    let trace = ix.trace;
    let schema = trace.schema();
    let span = (0, ix.end());
    let (lo, hi) = (trace.header.key_min - 1, trace.header.key_max + 1);
    let mut pairs: Vec<(ReachPred, ExtendRel)> = (lo..=hi).flat_map(|k| prescribed_pairs(schema, k)).collect();
    if schema == Structure::LoTree {
        pairs.push((ReachPred::Succ, ExtendRel::TreePred));
    }
    let label = |t: u64| trace.write_at(t).map_or(String::new(), |w| w.label.to_string());

    for (r, ext) in pairs {
        let p = Pred::plain(r);
        out.record("compat", checker::check_compat(ix, p, ext, span));
        out.record("forepassed", checker::check_forepassed(ix, p, ext, span));
        out.record("points-to-reachable", checker::check_lemma_points_reachable(ix, p, ext, span));
        for red in ix.reductions(p).iter() {
            out.reducing.insert(label(red.t));
        }
        if r == ReachPred::Succ || schema == Structure::Citrus {
            continue;
        }
        let strong = checker::strong_violations(ix, p, span);
        match schema {
            Structure::CfTree => {
                for red in &strong {
                    let l = label(red.next_write.unwrap_or(0));
                    if l.starts_with("remove:backtrack") {
                        out.pass("strong-at-backtrack", "strong-at-backtrack");
                    } else {
                        out.fail(
                            "strong-at-backtrack",
                            format!("strong-at-backtrack[{p}]"),
                            format!("reduction at t={} ({}) of {} is undone by {l}", red.t, label(red.t), red.loc),
                        );
                    }
                }
                let v = checker::check_strong_forepassed(ix, p, span);
                out.note(EXPECTED_STRONG_CF, &v);
                rotation_reductions(ix, p, out);
            }
            _ => {
                out.record("strong-forepassed", checker::check_strong_forepassed(ix, p, span));
                let allowed = reducing_labels(schema).unwrap_or(&[]);
                for red in ix.reductions(p).iter() {
                    let l = label(red.t);
                    if allowed.contains(&l.as_str()) {
                        out.pass("reducing-labels", "reducing-labels");
                    } else {
                        out.fail(
                            "reducing-labels",
                            format!("reducing-labels[{p}]"),
                            format!("write t={} ({l}) reduces {p} at {}", red.t, red.loc),
                        );
                    }
                }
            }
        }
    }

    if schema == Structure::CfTree {
        let unlinks = trace.writes.iter().any(|w| w.label == "remove:unlink");
        let backtracks = trace.writes.iter().any(|w| w.label.starts_with("remove:backtrack"));
        if unlinks && backtracks {
            let any = (lo..=hi).any(|k| {
                let p = Pred::plain(ReachPred::BstK(Target::Exact(k)));
                !checker::strong_violations(ix, p, span).is_empty()
            });
            if any {
                out.pass("backtrack-breaks-strong", "backtrack-breaks-strong");
            } else {
                out.fail(
                    "backtrack-breaks-strong",
                    "backtrack-breaks-strong",
                    "a right child was removed and backtracked without any strong-forepassed violation".into(),
                );
            }
        }
    }
}

/// CF rotation writes only reduce locations of the node they retire.
fn rotation_reductions(ix: &TraceIndex, p: Pred, out: &mut TraceChecks) {
    let trace = ix.trace;
    for red in ix.reductions(p).iter() {
        let Some(w) = trace.write_at(red.t) else { continue };
        if !w.label.starts_with("rotate:") {
            continue;
        }
        let retired = trace
            .writes
            .iter()
            .any(|m| m.op == w.op && m.label == "rotate:mark-rem" && m.loc.obj == red.loc.obj);
        if retired {
            out.pass("rotation-reductions", "rotation-reductions");
        } else {
            out.fail(
                "rotation-reductions",
                format!("rotation-reductions[{p}]"),
                format!("rotation write t={} ({}) reduces {p} at {}, which it does not retire", red.t, w.label, red.loc),
            );
        }
    }
}

fn citrus(ix: &TraceIndex, out: &mut TraceChecks) {
    let (lo, hi) = (ix.trace.header.key_min - 1, ix.trace.header.key_max + 1);
    out.record("rcu-grace", checker::check_grace(ix));
    out.record("citrus-ghost-subtree", checker::check_ghost_subtree(ix));
    out.record("citrus-single-deviation", checker::check_single_deviation(ix, lo..=hi));
    out.record("citrus-tag-lemma", checker::check_tag_lemma(ix));
}
