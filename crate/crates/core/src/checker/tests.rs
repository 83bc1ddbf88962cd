use super::*;
use crate::explore::{random_workload, run_script, run_stress, scenario};
use crate::reach::{ReachPred, Target};
use crate::trace::{Base, Structure, Trace};

fn scenario_trace(name: &str) -> Trace {
    let s = scenario(name).unwrap();
    run_script(&s.workload, &s.script, 8).unwrap().1
}

fn random_traces(structure: Structure, n: u64) -> Vec<Trace> {
    (0..n)
        .map(|seed| {
            let w = random_workload(structure, 3, 3, (1, 4), seed);
            run_stress(&w, seed, 8).unwrap().1
        })
        .collect()
}

#[test]
fn past_holds_matches_linear_scan() {
    for tr in random_traces(Structure::LazyList, 6) {
        let ix = TraceIndex::new(&tr);
        let p = Pred::plain(ReachPred::SuccK(2));
        let end = ix.end();
        for l in ix.state(end).entries().map(|(l, _)| l) {
            for t in 0..=end {
                for t2 in t..=end {
                    let scan = (t..=t2).find(|&u| {
                        let st = ix.state(u);
                        crate::reach::reachable(st, &ix.shape, p.reach, &crate::reach::GhostView::none(), l)
                    });
                    assert_eq!(past_holds(&ix, p, l, t, t2).map(|w| w.at), scan, "{l} [{t}, {t2}]");
                }
            }
        }
    }
}

#[test]
fn strong_forepassed_implies_forepassed() {
    for (s, preds) in [
        (Structure::LazyList, vec![(ReachPred::SuccK(2), ExtendRel::Succ(2))]),
        (Structure::LoTree, vec![(ReachPred::SuccK(3), ExtendRel::Succ(3)), (ReachPred::Succ, ExtendRel::TreePred)]),
        (Structure::CfTree, vec![(ReachPred::BstK(Target::Exact(2)), ExtendRel::Bst(Target::Exact(2)))]),
    ] {
        for tr in random_traces(s, 6) {
            let ix = TraceIndex::new(&tr);
            for &(r, ext) in &preds {
                let p = Pred::plain(r);
                let span = (0, ix.end());
                if check_strong_forepassed(&ix, p, span).is_ok() {
                    assert!(check_forepassed(&ix, p, ext, span).is_ok(), "{s} {p}");
                }
            }
        }
    }
}

#[test]
fn violations_reproduce_on_prefix() {
    let tr = scenario_trace("citrus-weakreach");
    let ix = TraceIndex::new(&tr);
    let p = Pred::plain(ReachPred::BstK(Target::Exact(3)));
    let ext = ExtendRel::Bst(Target::Exact(3));
    let v = check_forepassed(&ix, p, ext, (0, ix.end()));
    let later = v.cited().and_then(|c| c.later_t).expect("violation expected");
    let pre = tr.prefix(later);
    let pix = TraceIndex::new(&pre);
    assert!(check_forepassed(&pix, p, ext, (0, pix.end())).is_violation());
}

#[test]
fn weak_reach_dichotomy_on_citrus_scenario() {
    let tr = scenario_trace("citrus-weakreach");
    let ix = TraceIndex::new(&tr);
    let loc = tr
        .traversals
        .iter()
        .find(|r| r.thread == 0 && r.site == "citrus:locate")
        .expect("lookup traversal");
    let Base::At(s) = loc.base else { panic!("lookup base") };
    let span = (s, loc.last_t());
    let ext = ExtendRel::Bst(Target::Exact(3));

    let strong = Pred::plain(ReachPred::BstK(Target::Exact(3)));
    assert!(check_forepassed(&ix, strong, ext, span).is_violation());
    assert!(check_traversal_correct(&ix, loc, strong).is_violation());

    let weak = Pred::viewed(ReachPred::WeakK(3), s);
    let f = check_forepassed(&ix, weak, ext, span);
    assert!(f.is_ok(), "{}", f.describe());
    let c = check_traversal_correct(&ix, loc, weak);
    assert!(c.is_ok(), "{}", c.describe());
    assert!(infer_traversal_correct(&ix, loc, weak, ext).is_ok());
    assert!(check_endpoint(&ix, loc).is_ok());
}

#[test]
fn citrus_lemmas_hold_on_scenario() {
    let tr = scenario_trace("citrus-weakreach");
    let ix = TraceIndex::new(&tr);
    assert!(!ix.ghosts.is_empty());
    for v in [check_grace(&ix), check_ghost_subtree(&ix), check_single_deviation(&ix, 0..=9), check_tag_lemma(&ix)] {
        assert!(v.is_ok(), "{}", v.describe());
    }
}

#[test]
fn cf_backtrack_breaks_only_the_strong_condition() {
    let tr = scenario_trace("cf-backtrack");
    let ix = TraceIndex::new(&tr);
    let span = (0, ix.end());
    let p = Pred::plain(ReachPred::BstK(Target::Exact(3)));
    let ext = ExtendRel::Bst(Target::Exact(3));
    let strong = strong_violations(&ix, p, span);
    assert!(!strong.is_empty());
    for r in &strong {
        let w = tr.write_at(r.next_write.unwrap()).unwrap();
        assert!(w.label.starts_with("remove:backtrack"), "{}", w.label);
    }
    assert!(check_forepassed(&ix, p, ext, span).is_ok());
    let c = check_compat(&ix, p, ext, span);
    assert!(c.is_ok(), "{}", c.describe());
    for r in tr.traversals.iter().filter(|r| r.thread == 0) {
        let v = check_traversal_correct(&ix, r, p);
        assert!(v.is_ok(), "{}", v.describe());
    }
}

#[test]
fn field_witness_on_lazy_contains() {
    for tr in random_traces(Structure::LazyList, 8) {
        let ix = TraceIndex::new(&tr);
        for fr in &tr.field_reads {
            let p = Pred::plain(ReachPred::SuccK(fr.key));
            let v = check_past_reach_with_field(&ix, p, fr.node, fr.field, fr.base, fr.t);
            assert!(!v.is_violation(), "{}", v.describe());
        }
    }
}
