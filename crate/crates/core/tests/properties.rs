//! Property tests over random workloads and schedules.

use std::collections::BTreeMap;

use proptest::prelude::*;

use traverse_lab::checker::TraceIndex;
use traverse_lab::explore::{run_stress, Workload};
use traverse_lab::lin::{self, check_history};
use traverse_lab::runtime::exec::Outcome;
use traverse_lab::trace::{read_jsonl, validate_trace, write_jsonl};
use traverse_lab::{OpCall, OpKind, Ret, Structure};

fn structure() -> impl Strategy<Value = Structure> {
    prop::sample::select(Structure::ALL.to_vec())
}

fn call(s: Structure) -> impl Strategy<Value = OpCall> {
    (0..3u8, 1..=6i64).prop_map(move |(c, k)| match c {
        0 => OpCall::contains(k),
        1 if s == Structure::Citrus => OpCall::insert_data(k, 100 + k),
        1 => OpCall::insert(k),
        _ => OpCall::delete(k),
    })
}

fn workload(threads: usize, per: usize) -> impl Strategy<Value = Workload> {
    structure().prop_flat_map(move |s| {
        prop::collection::vec(prop::collection::vec(call(s), per), threads).prop_map(move |lists| {
            let mut w = Workload::new(s, lists);
            w.keys = (1, 6);
            w
        })
    })
}

/// Sequential model: set semantics for the lists and trees, map semantics
/// (insert does not overwrite) for citrus.
fn model(s: Structure, calls: &[OpCall]) -> Vec<Ret> {
    let mut m: BTreeMap<i64, i64> = BTreeMap::new();
    calls
        .iter()
        .map(|c| match c.kind {
            OpKind::Contains if s == Structure::Citrus => Ret::Data(m.get(&c.key).copied()),
            OpKind::Contains => Ret::Bool(m.contains_key(&c.key)),
            OpKind::Insert => {
                let fresh = !m.contains_key(&c.key);
                if fresh {
                    m.insert(c.key, c.data.unwrap_or(c.key));
                }
                Ret::Bool(fresh)
            }
            OpKind::Delete => Ret::Bool(m.remove(&c.key).is_some()),
            _ => Ret::Unit,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn single_thread_matches_model(w in workload(1, 24), seed in any::<u64>()) {
        let (outcome, trace) = run_stress(&w, seed, 8).unwrap();
        prop_assert!(matches!(outcome, Outcome::Done));
        let got: Vec<Ret> = trace.ops.iter().map(|o| o.ret.unwrap()).collect();
        prop_assert_eq!(got, model(w.structure, &w.threads[0]));
    }

    #[test]
    fn concurrent_runs_are_well_formed_and_linearizable(w in workload(3, 3), seed in any::<u64>()) {
        let (outcome, trace) = run_stress(&w, seed, 64).unwrap();
        prop_assert!(matches!(outcome, Outcome::Done), "{:?}", outcome);
        let rep = validate_trace(&trace);
        prop_assert!(rep.is_ok(), "{:?}", rep.first());
        let ix = TraceIndex::new(&trace);
        let abs = lin::abstract_series(&ix);
        let eff = lin::check_effect_points(&ix, &abs);
        prop_assert!(eff.verdict.is_ok(), "{}", eff.verdict.describe());
        let init = lin::initial_abstraction(&ix);
        prop_assert!(check_history(w.structure, &trace.ops, &init, 1_000_000).is_linearizable());
    }

    #[test]
    fn jsonl_roundtrip(w in workload(2, 2), seed in any::<u64>()) {
        let (_, trace) = run_stress(&w, seed, 64).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&trace, &mut buf).unwrap();
        let back = read_jsonl(&buf[..]).unwrap();
        prop_assert_eq!(back, trace);
    }

    #[test]
    fn same_seed_same_trace(w in workload(2, 3), seed in any::<u64>()) {
        let (_, a) = run_stress(&w, seed, 64).unwrap();
        let (_, b) = run_stress(&w, seed, 64).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn abstraction_changes_only_at_decisive_labels(w in workload(3, 2), seed in any::<u64>()) {
        let (_, trace) = run_stress(&w, seed, 64).unwrap();
        let ix = TraceIndex::new(&trace);
        let eff = lin::check_effect_points(&ix, &lin::abstract_series(&ix));
        let allowed = traverse_lab::suite::decisive_labels(w.structure);
        for l in &eff.decisive {
            prop_assert!(allowed.contains(&l.as_str()), "{} changed the abstraction", l);
        }
    }
}
