use std::ops::ControlFlow;

use super::*;
use crate::explore::{random_workload, run_exhaustive, run_stress, Bounds, Workload};
use crate::runtime::Mutation;
use crate::trace::OpCall;

fn rec(op: u32, call: OpCall, inv: u64, res: Option<(u64, Ret)>) -> OpRecord {
    OpRecord {
        op,
        thread: op,
        call,
        inv_seq: inv,
        inv_t: 0,
        ret: res.map(|r| r.1),
        res_seq: res.map(|r| r.0),
        res_t: None,
    }
}

#[test]
fn sequential_set_spec() {
    let s = Structure::LazyList;
    assert_eq!(apply(s, OpCall::insert(1), None), (Ret::Bool(true), Some(None)));
    assert_eq!(apply(s, OpCall::insert(1), Some(None)), (Ret::Bool(false), Some(None)));
    assert_eq!(apply(s, OpCall::delete(1), Some(None)), (Ret::Bool(true), None));
    assert_eq!(apply(s, OpCall::contains(1), None), (Ret::Bool(false), None));
}

#[test]
fn map_insert_does_not_overwrite() {
    let s = Structure::Citrus;
    let (r, c) = apply(s, OpCall::insert_data(2, 7), Some(Some(5)));
    assert_eq!((r, c), (Ret::Bool(false), Some(Some(5))));
    assert_eq!(apply(s, OpCall::contains(2), c).0, Ret::Data(Some(5)));
}

#[test]
fn search_rejects_stale_read() {
    // insert(1) completes, then a later contains(1) misses it.
    let ops = vec![
        rec(0, OpCall::insert(1), 0, Some((1, Ret::Bool(true)))),
        rec(1, OpCall::contains(1), 2, Some((3, Ret::Bool(false)))),
    ];
    let out = check_history(Structure::LazyList, &ops, &AbsState::new(), 10_000);
    assert_eq!(out, LinOutcome::NotLinearizable { key: 1, ops: vec![0, 1] });
}

#[test]
fn search_accepts_overlap_and_pending() {
    let ops = vec![
        rec(0, OpCall::insert(1), 0, Some((3, Ret::Bool(true)))),
        rec(1, OpCall::contains(1), 1, Some((2, Ret::Bool(true)))),
        rec(2, OpCall::delete(1), 4, None),
        rec(3, OpCall::contains(1), 5, Some((6, Ret::Bool(false)))),
    ];
    assert!(check_history(Structure::LazyList, &ops, &AbsState::new(), 10_000).is_linearizable());
}

#[test]
fn random_runs_have_effect_points() {
    for s in Structure::ALL {
        for seed in 0..20 {
            let w = random_workload(s, 3, 4, (1, 4), seed);
            let (_, tr) = run_stress(&w, seed, 8).unwrap();
            let ix = TraceIndex::new(&tr);
            let abs = abstract_series(&ix);
            let r = check_effect_points(&ix, &abs);
            assert!(r.verdict.is_ok(), "{s} seed {seed}: {}", r.verdict.describe());
            let lin = check_trace_history(&tr, &abs[0], 100_000);
            assert!(lin.is_linearizable(), "{s} seed {seed}: {lin:?}");
        }
    }
}

#[test]
fn decisive_labels_per_structure() {
    let expect: [(Structure, &[&str]); 4] = [
        (Structure::LazyList, &["insert:publish", "delete:mark"]),
        (Structure::LoTree, &["insert:succ-publish", "delete:mark"]),
        (Structure::CfTree, &["insert:link", "insert:unmark", "delete:mark"]),
        (Structure::Citrus, &["insert:link-left", "insert:link-right", "delete:bypass", "delete:link-copy"]),
    ];
    for (s, labels) in expect {
        let mut seen = BTreeSet::new();
        for seed in 0..40 {
            let w = random_workload(s, 2, 4, (1, 4), seed);
            let (_, tr) = run_stress(&w, seed, 8).unwrap();
            let ix = TraceIndex::new(&tr);
            seen.extend(check_effect_points(&ix, &abstract_series(&ix)).decisive);
        }
        for l in &seen {
            assert!(labels.iter().any(|e| l.starts_with(e)), "{s}: unexpected decisive label {l}");
        }
    }
}

#[test]
fn orig_insert_order_breaks_effect_points() {
    let w = Workload::new(Structure::LoTree, vec![vec![OpCall::insert(2)], vec![OpCall::contains(2)]])
        .with_mutation(Mutation::OrigInsertOrder);
    let mut failed = false;
    run_exhaustive(&w, &Bounds::preemptions(1), |e| {
        let ix = TraceIndex::new(&e.trace);
        if check_effect_points(&ix, &abstract_series(&ix)).verdict.is_violation() {
            failed = true;
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    })
    .unwrap();
    assert!(failed);
}
