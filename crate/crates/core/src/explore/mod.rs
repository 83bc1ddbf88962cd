//! Trace generation: bounded exhaustive schedule exploration, seeded
//! random stress and scripted interference scenarios.
//!
//! A workload is built once (structure construction plus prefill, not
//! logged); every execution starts from a clone of that world.

mod dfs;
mod scenario;
mod stress;

pub use dfs::{run_exhaustive, Explored, ExploreStats};
pub use scenario::{run_script, scenario, Directive, Scenario, SCENARIOS};
pub use stress::{random_workload, run_free, run_stress};

use std::future::Future;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::ds::{supports, Ds};
use crate::runtime::exec::{Chooser, Execution, Outcome, Task};
use crate::runtime::{Abort, Ctx, Mutation, World};
use crate::trace::{OpCall, Structure, Trace};

/// Per-thread operation lists over one structure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub structure: Structure,
    /// Inclusive key domain.
    #[serde(default = "default_keys")]
    pub keys: (i64, i64),
    /// Operations applied sequentially before recording starts.
    #[serde(default)]
    pub prefill: Vec<OpCall>,
    /// Maintenance (rotate / remove_right) is injected as ordinary items.
    pub threads: Vec<Vec<OpCall>>,
    #[serde(default)]
    pub mutations: Vec<Mutation>,
}

fn default_keys() -> (i64, i64) {
    (1, 4)
}

impl Workload {
    pub fn new(structure: Structure, threads: Vec<Vec<OpCall>>) -> Self {
        Workload { structure, keys: default_keys(), prefill: vec![], threads, mutations: vec![] }
    }

    pub fn with_prefill(mut self, keys: &[i64]) -> Self {
        self.prefill = keys.iter().map(|&k| OpCall::insert(k)).collect();
        self
    }

    pub fn with_mutation(mut self, m: Mutation) -> Self {
        self.mutations.push(m);
        self
    }

    pub fn op_count(&self) -> usize {
        self.threads.iter().map(Vec::len).sum()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.threads.is_empty() {
            return Err("a workload needs at least one thread".into());
        }
        if self.keys.0 > self.keys.1 {
            return Err(format!("empty key domain {}..{}", self.keys.0, self.keys.1));
        }
        for call in self.prefill.iter().chain(self.threads.iter().flatten()) {
            if call.key < self.keys.0 || call.key > self.keys.1 {
                return Err(format!("{call}: key outside {}..{}", self.keys.0, self.keys.1));
            }
            if !supports(self.structure, call.kind) {
                return Err(format!("{call} is not an operation of {}", self.structure));
            }
        }
        for m in &self.mutations {
            if m.structure() != self.structure {
                return Err(format!("mutation {} applies to {}", m.name(), m.structure()));
            }
        }
        Ok(())
    }
}

/// Exploration limits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bounds {
    /// Preemption bound; `None` explores every schedule.
    pub preemptions: Option<u32>,
    pub max_traces: u64,
    /// Restarts allowed per operation before the execution is pruned.
    pub restart_bound: u32,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { preemptions: None, max_traces: 1_000_000, restart_bound: 8 }
    }
}

impl Bounds {
    pub fn preemptions(p: u32) -> Self {
        Bounds { preemptions: Some(p), ..Bounds::default() }
    }
}

/// A workload with its initial world built.
#[derive(Clone, Debug)]
pub struct Prepared {
    world: World,
    ds: Ds,
    ops: Vec<Vec<(u32, OpCall)>>,
    mutations: Vec<Mutation>,
}

async fn run_ops(ds: Ds, ctx: Ctx, ops: &[(u32, OpCall)]) -> Result<(), Abort> {
    for &(id, call) in ops {
        ctx.begin(id, call);
        let ret = ds.run(&ctx, call).await?;
        ctx.respond(ret);
    }
    Ok(())
}

impl Prepared {
    pub fn new(w: &Workload) -> Result<Prepared, String> {
        w.validate()?;
        let mut world = World::new(w.structure, w.keys, 1);
        let ds = Ds::init(w.structure, &mut world);
        let world = if w.prefill.is_empty() {
            world
        } else {
            let shared = Arc::new(Mutex::new(world));
            let pre: Vec<(u32, OpCall)> = w.prefill.iter().map(|&c| (0, c)).collect();
            let outcome = {
                let ctx = Ctx::controlled(Arc::clone(&shared), 0, u32::MAX, vec![]);
                let task: Task = Box::pin(run_ops(ds, ctx, &pre));
                let mut ex = Execution::new(Arc::clone(&shared), vec![task]);
                ex.run(&mut crate::runtime::exec::NonPreemptive)
            };
            if outcome != Outcome::Done {
                return Err(format!("prefill did not complete: {outcome:?}"));
            }
            unwrap_world(shared)
        };
        let mut world = world;
        world.start_trace(w.threads.len(), &w.mutations);
        let mut next = 0u32;
        let ops = w
            .threads
            .iter()
            .map(|list| {
                list.iter()
                    .map(|&c| {
                        next += 1;
                        (next - 1, c)
                    })
                    .collect()
            })
            .collect();
        Ok(Prepared { world, ds, ops, mutations: w.mutations.clone() })
    }

    pub fn threads(&self) -> usize {
        self.ops.len()
    }

    /// Runs one controlled execution to its end under `chooser`.
    pub fn execute(&self, chooser: &mut dyn Chooser, restart_bound: u32) -> (Outcome, Trace) {
        self.with_execution(restart_bound, |ex| ex.run(chooser))
    }

    /// Builds the tasks of one execution and hands the executor to `drive`.
    pub fn with_execution<R>(&self, restart_bound: u32, drive: impl FnOnce(&mut Execution<'_>) -> R) -> (R, Trace) {
        let shared = Arc::new(Mutex::new(self.world.clone()));
        let r = {
            let tasks: Vec<Task> = self
                .ops
                .iter()
                .enumerate()
                .map(|(tid, ops)| {
                    let ctx = Ctx::controlled(Arc::clone(&shared), tid as u32, restart_bound, self.mutations.clone());
                    Box::pin(run_ops(self.ds, ctx, ops)) as Task
                })
                .collect();
            let mut ex = Execution::new(Arc::clone(&shared), tasks);
            drive(&mut ex)
        };
        (r, unwrap_world(shared).into_trace())
    }

    /// Runs every thread on its own OS thread.
    pub fn execute_free(&self, seed: u64, yield_pct: u32) -> Result<Trace, Abort> {
        let shared = Arc::new(Mutex::new(self.world.clone()));
        let ds = self.ds;
        let body = |tid: u32, ctx: Ctx| -> std::pin::Pin<Box<dyn Future<Output = Result<(), Abort>> + '_>> {
            Box::pin(run_ops(ds, ctx, &self.ops[tid as usize]))
        };
        crate::runtime::free::run_threads(Arc::clone(&shared), self.ops.len(), seed, yield_pct, &self.mutations, body)?;
        Ok(unwrap_world(shared).into_trace())
    }
}

fn unwrap_world(shared: Arc<Mutex<World>>) -> World {
    match Arc::try_unwrap(shared) {
        Ok(m) => m.into_inner().unwrap_or_else(|e| e.into_inner()),
        Err(shared) => crate::runtime::lock_world(&shared).clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::exec::NonPreemptive;
    use crate::trace::{OpKind, Ret};

    fn rets(trace: &Trace) -> Vec<(OpKind, i64, Ret)> {
        let mut ops = trace.ops.clone();
        ops.sort_by_key(|o| o.op);
        ops.iter().map(|o| (o.call.kind, o.call.key, o.ret.unwrap())).collect()
    }

    fn sequential(structure: Structure, calls: Vec<OpCall>) -> Vec<Ret> {
        let w = Workload::new(structure, vec![calls]);
        let p = Prepared::new(&w).unwrap();
        let (o, trace) = p.execute(&mut NonPreemptive, 8);
        assert_eq!(o, Outcome::Done);
        rets(&trace).into_iter().map(|r| r.2).collect()
    }

    #[test]
    fn lazylist_sequential_set() {
        let r = sequential(
            Structure::LazyList,
            vec![OpCall::contains(3), OpCall::insert(3), OpCall::insert(3), OpCall::contains(3), OpCall::delete(3), OpCall::contains(3)],
        );
        let b = |x| Ret::Bool(x);
        assert_eq!(r, vec![b(false), b(true), b(false), b(true), b(true), b(false)]);
    }

    #[test]
    fn lotree_sequential_set() {
        let r = sequential(
            Structure::LoTree,
            vec![OpCall::insert(3), OpCall::insert(1), OpCall::delete(3), OpCall::contains(3), OpCall::contains(1)],
        );
        let b = |x| Ret::Bool(x);
        assert_eq!(r, vec![b(true), b(true), b(true), b(false), b(true)]);
    }

    #[test]
    fn cftree_del_toggles() {
        let r = sequential(Structure::CfTree, vec![OpCall::insert(2), OpCall::delete(2), OpCall::insert(2), OpCall::contains(2)]);
        assert_eq!(r, vec![Ret::Bool(true); 4]);
    }

    #[test]
    fn citrus_map_no_overwrite() {
        let r = sequential(
            Structure::Citrus,
            vec![OpCall::insert_data(4, 40), OpCall::insert_data(4, 41), OpCall::contains(4), OpCall::contains(2)],
        );
        assert_eq!(r, vec![Ret::Bool(true), Ret::Bool(false), Ret::Data(Some(40)), Ret::Data(None)]);
    }

    #[test]
    fn workload_validation() {
        let w = Workload::new(Structure::LazyList, vec![vec![OpCall::rotate(1)]]);
        assert!(w.validate().is_err());
        let w = Workload::new(Structure::LazyList, vec![vec![OpCall::insert(9)]]);
        assert!(w.validate().is_err());
        let w = Workload::new(Structure::LazyList, vec![]);
        assert!(w.validate().is_err());
        let w = Workload::new(Structure::Citrus, vec![vec![OpCall::insert(1)]]).with_mutation(Mutation::SkipMark);
        assert!(w.validate().is_err());
    }

    #[test]
    fn workload_json_roundtrip() {
        let w = Workload::new(Structure::LoTree, vec![vec![OpCall::insert(1), OpCall::rotate(2)]])
            .with_prefill(&[2, 3])
            .with_mutation(Mutation::OrigInsertOrder);
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(serde_json::from_str::<Workload>(&s).unwrap(), w);
    }
}
