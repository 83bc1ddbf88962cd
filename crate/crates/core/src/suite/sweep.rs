//! Exhaustive sweeps over families of small workloads, mutation
//! workloads, and random stress runs.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::battery::{run_battery, BatteryOptions, Tally, TraceChecks};
use crate::checker::{TraceIndex, Verdict};
use crate::explore::{random_workload, run_exhaustive, run_stress, Bounds, ExploreStats, Workload};
use crate::lin;
use crate::runtime::exec::Outcome;
use crate::runtime::Mutation;
use crate::trace::{OpCall, Structure, Trace};

#[derive(Clone, Debug, Serialize)]
pub struct SweepItem {
    pub workload: Workload,
    pub bounds: Bounds,
}

/// A non-OK verdict with enough context to replay it.
#[derive(Clone, Debug, Serialize)]
pub struct Finding {
    pub workload: usize,
    pub execution: u64,
    pub schedule: Vec<usize>,
    pub family: String,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SweepReport {
    pub structure: Option<Structure>,
    pub workloads: usize,
    pub traces: u64,
    pub livelock_pruned: u64,
    pub deadlocks: u64,
    pub step_limited: u64,
    pub truncated: bool,
    pub tallies: BTreeMap<String, Tally>,
    pub findings: Vec<Finding>,
    pub decisive: BTreeSet<String>,
    pub reducing: BTreeSet<String>,
    pub millis: u128,
}

const KEEP_FINDINGS: usize = 50;

impl SweepReport {
    /// Violations in families that must hold.
    pub fn violations(&self) -> u64 {
        self.tallies
            .iter()
            .filter(|(f, _)| !super::is_expected_violation(f))
            .map(|(_, t)| t.violation)
            .sum()
    }

    pub fn tally(&self, family: &str) -> Tally {
        self.tallies.get(family).copied().unwrap_or_default()
    }

    /// First kept finding of a family.
    pub fn first(&self, family: &str) -> Option<&Finding> {
        self.findings.iter().find(|f| f.family == family)
    }

    fn absorb_stats(&mut self, s: &ExploreStats) {
        self.traces += s.executions - s.livelock_pruned;
        self.livelock_pruned += s.livelock_pruned;
        self.deadlocks += s.deadlocks;
        self.step_limited += s.step_limited;
        self.truncated |= s.truncated;
    }

    fn absorb(&mut self, w: usize, exec: u64, schedule: &[usize], c: TraceChecks) {
        for (f, t) in c.tallies {
            self.tallies.entry(f).or_default().add(t);
        }
        for (family, verdict) in c.findings {
            let kept = self.findings.iter().filter(|f| f.family == family).count();
            if kept < KEEP_FINDINGS / 5 && self.findings.len() < KEEP_FINDINGS {
                self.findings.push(Finding { workload: w, execution: exec, schedule: schedule.to_vec(), family, verdict });
            }
        }
        self.decisive.extend(c.decisive);
        self.reducing.extend(c.reducing);
    }
}

fn maintenance_ops(s: Structure, rng: &mut ChaCha8Rng) -> (Vec<OpCall>, OpCall) {
    match s {
        // k gets a left child, which the rotation lifts.
        Structure::LoTree | Structure::CfTree if rng.gen_bool(0.5) || s == Structure::LoTree => {
            let k = rng.gen_range(2..=4);
            let mut pre = vec![OpCall::insert(k), OpCall::insert(k - 1)];
            if k == 4 && rng.gen_bool(0.5) {
                pre.push(OpCall::insert(2));
            }
            (pre, OpCall::rotate(k))
        }
        // k gets a deleted right child, which removeRight unlinks.
        _ => {
            let k = rng.gen_range(1..=3);
            let r = rng.gen_range(k + 1..=4);
            (vec![OpCall::insert(k), OpCall::insert(r), OpCall::delete(r)], OpCall::remove_right(k))
        }
    }
}

fn random_call(s: Structure, rng: &mut ChaCha8Rng) -> OpCall {
    let k = rng.gen_range(1..=4);
    match rng.gen_range(0..3) {
        0 => OpCall::contains(k),
        1 if s == Structure::Citrus => OpCall::insert_data(k, 10 + k),
        1 => OpCall::insert(k),
        _ => OpCall::delete(k),
    }
}

/// `(threads, ops per thread, preemption bound)` cycled through by the
/// sweep family.
pub const SHAPES: [(usize, usize, u32); 4] = [(2, 2, 3), (2, 2, 3), (3, 1, 2), (3, 2, 1)];

/// The fixed workload family swept for a structure, cycling through
/// [`SHAPES`] with keys 1..4. The trees with maintenance get a rotation or
/// a right-child removal injected into every other workload.
pub fn sweep_workloads(s: Structure, count: usize) -> Vec<SweepItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ s as u64);
    let maintenance = matches!(s, Structure::LoTree | Structure::CfTree);
    (0..count)
        .map(|i| {
            let (threads, per, bound) = SHAPES[i % SHAPES.len()];
            let mut lists: Vec<Vec<OpCall>> =
                (0..threads).map(|_| (0..per).map(|_| random_call(s, &mut rng)).collect()).collect();
            let mut keys: Vec<i64> = (1..=4).filter(|_| rng.gen_bool(0.5)).collect();
            keys.shuffle(&mut rng);
            let mut prefill: Vec<OpCall> = keys.iter().map(|&k| OpCall::insert(k)).collect();
            if maintenance && i % 2 == 1 {
                let (pre, m) = maintenance_ops(s, &mut rng);
                prefill = pre;
                let t = rng.gen_range(0..threads);
                let slot = rng.gen_range(0..per);
                lists[t][slot] = m;
            }
            if s == Structure::Citrus {
                for c in prefill.iter_mut() {
                    *c = OpCall::insert_data(c.key, 10 + c.key);
                }
            }
            let mut w = Workload::new(s, lists);
            w.prefill = prefill;
            w.keys = (1, 4);
            SweepItem { workload: w, bounds: Bounds::preemptions(bound) }
        })
        .collect()
}

/// The small workload each mutation is exercised with.
pub fn mutation_workload(m: Mutation) -> SweepItem {
    let w = match m {
        Mutation::OrigInsertOrder => {
            Workload::new(Structure::LoTree, vec![vec![OpCall::insert(2)], vec![OpCall::contains(2)]])
        }
        Mutation::SkipMark => {
            Workload::new(Structure::LoTree, vec![vec![OpCall::delete(2)], vec![OpCall::insert(3)]]).with_prefill(&[2, 4])
        }
        Mutation::NoGracePeriod => {
            let mut w = crate::explore::scenario("citrus-weakreach").expect("scenario").workload;
            w.keys = (1, 8);
            w
        }
    };
    SweepItem { workload: w.with_mutation(m), bounds: Bounds::preemptions(1) }
}

const BATCH: usize = 64;

/// Explores every item and runs the battery on each trace. Checking is
/// spread across the rayon pool in batches.
pub fn run_sweep(items: &[SweepItem], opts: &BatteryOptions) -> Result<SweepReport, String> {
    let start = Instant::now();
    let mut rep = SweepReport {
        structure: items.first().map(|i| i.workload.structure),
        workloads: items.len(),
        ..SweepReport::default()
    };
    for (wi, item) in items.iter().enumerate() {
        let mut batch: Vec<(u64, Vec<usize>, Trace)> = Vec::with_capacity(BATCH);
        let flush = |batch: &mut Vec<(u64, Vec<usize>, Trace)>, rep: &mut SweepReport| {
            let checked: Vec<_> = batch
                .par_iter()
                .map(|(i, _, t)| (*i, run_battery(t, opts)))
                .collect();
            for ((i, c), (_, sched, _)) in checked.into_iter().zip(batch.iter()) {
                rep.absorb(wi, i, sched, c);
            }
            batch.clear();
        };
        let stats = run_exhaustive(&item.workload, &item.bounds, |e| {
            if let Outcome::Deadlock { .. } = e.outcome {
                return ControlFlow::Continue(());
            }
            batch.push((e.index, e.schedule, e.trace));
            if batch.len() == BATCH {
                flush(&mut batch, &mut rep);
            }
            ControlFlow::Continue(())
        })?;
        flush(&mut batch, &mut rep);
        rep.absorb_stats(&stats);
    }
    rep.millis = start.elapsed().as_millis();
    Ok(rep)
}

#[derive(Clone, Debug, Serialize)]
pub struct StressReport {
    pub structure: Structure,
    pub ops: usize,
    pub completed: usize,
    pub outcome: String,
    pub effect_points: Verdict,
    pub transitions: usize,
    pub millis: u128,
}

/// One seeded random run of `threads × ops` with effect-point checking.
pub fn run_stress_check(
    s: Structure,
    threads: usize,
    ops: usize,
    keys: (i64, i64),
    seed: u64,
    mutations: &[Mutation],
) -> Result<StressReport, String> {
    let start = Instant::now();
    let mut w = random_workload(s, threads, ops, keys, seed);
    w.mutations = mutations.to_vec();
    let (outcome, trace) = run_stress(&w, seed, 64)?;
    let ix = TraceIndex::new(&trace);
    let abs = lin::abstract_series(&ix);
    let eff = lin::check_effect_points(&ix, &abs);
    Ok(StressReport {
        structure: s,
        ops: w.op_count(),
        completed: trace.ops.iter().filter(|o| o.ret.is_some()).count(),
        outcome: format!("{outcome:?}"),
        effect_points: eff.verdict,
        transitions: eff.transitions.len(),
        millis: start.elapsed().as_millis(),
    })
}
