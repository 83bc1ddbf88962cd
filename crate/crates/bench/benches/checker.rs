use std::ops::ControlFlow;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use traverse_lab::checker::TraceIndex;
use traverse_lab::explore::{run_exhaustive, run_stress, Bounds};
use traverse_lab::lin;
use traverse_lab::reach::reach_set;
use traverse_lab::suite::{run_battery, sweep_workloads, BatteryOptions};
use traverse_lab::{GhostView, ReachPred, Shape, Structure, Target, Trace};

fn stress_trace(s: Structure, ops: usize) -> Trace {
    let w = traverse_lab::explore::random_workload(s, 4, ops, (1, 16), 11);
    run_stress(&w, 11, 64).expect("stress run").1
}

fn exploration(c: &mut Criterion) {
    let mut g = c.benchmark_group("explore");
    g.sample_size(10);
    for s in Structure::ALL {
        let item = sweep_workloads(s, 1).remove(0);
        g.bench_with_input(BenchmarkId::from_parameter(s), &item, |b, item| {
            b.iter(|| {
                let mut n = 0u64;
                run_exhaustive(&item.workload, &Bounds::preemptions(1), |_| {
                    n += 1;
                    ControlFlow::Continue(())
                })
                .unwrap();
                n
            })
        });
    }
    g.finish();
}

fn battery(c: &mut Criterion) {
    let mut g = c.benchmark_group("battery");
    g.sample_size(10);
    for s in Structure::ALL {
        let trace = stress_trace(s, 10);
        g.bench_with_input(BenchmarkId::from_parameter(s), &trace, |b, t| {
            b.iter(|| run_battery(black_box(t), &BatteryOptions::default()))
        });
    }
    g.finish();
}

fn effect_points(c: &mut Criterion) {
    let mut g = c.benchmark_group("effect-points");
    for s in Structure::ALL {
        let trace = stress_trace(s, 200);
        g.bench_with_input(BenchmarkId::from_parameter(s), &trace, |b, t| {
            b.iter(|| {
                let ix = TraceIndex::new(t);
                lin::check_effect_points(&ix, &lin::abstract_series(&ix)).verdict.is_ok()
            })
        });
    }
    g.finish();
}

fn reach(c: &mut Criterion) {
    let trace = stress_trace(Structure::CfTree, 50);
    let ix = TraceIndex::new(&trace);
    let shape = Shape::of(&trace);
    let st = ix.state(ix.end());
    c.bench_function("reach/bst_k", |b| {
        b.iter(|| {
            (1..=16)
                .map(|k| reach_set(st, &shape, ReachPred::BstK(Target::Exact(k)), &GhostView::none()).len())
                .sum::<usize>()
        })
    });
}

fn linearizability(c: &mut Criterion) {
    let trace = stress_trace(Structure::LazyList, 6);
    let ix = TraceIndex::new(&trace);
    let init = lin::initial_abstraction(&ix);
    c.bench_function("lin/search", |b| {
        b.iter(|| lin::check_history(Structure::LazyList, &trace.ops, &init, 1_000_000).is_linearizable())
    });
}

criterion_group!(benches, exploration, battery, effect_points, reach, linearizability);
criterion_main!(benches);
