//! Stateless depth-first search over schedules. Each execution replays a
//! prefix of choices and continues with the default choice (keep running
//! the current task); backtracking bumps the deepest choice that still has
//! an untried alternative within the preemption bound.

use std::ops::ControlFlow;

use serde::Serialize;

use super::{Bounds, Prepared, Workload};
use crate::runtime::exec::{Chooser, Outcome};
use crate::trace::Trace;

#[derive(Clone, Copy, Debug)]
struct Decision {
    chosen: usize,
    options: usize,
    /// The running task was among the options (switching away preempts).
    current_enabled: bool,
    preemptions_before: u32,
}

struct DfsChooser<'p> {
    prefix: &'p [usize],
    log: Vec<Decision>,
    preemptions: u32,
}

impl Chooser for DfsChooser<'_> {
    fn choose(&mut self, enabled: &[u32], current: Option<u32>) -> Option<u32> {
        if enabled.len() == 1 {
            return Some(enabled[0]);
        }
        let chosen = self.prefix.get(self.log.len()).copied().unwrap_or(0);
        let current_enabled = current == Some(enabled[0]);
        self.log.push(Decision { chosen, options: enabled.len(), current_enabled, preemptions_before: self.preemptions });
        if current_enabled && chosen > 0 {
            self.preemptions += 1;
        }
        Some(enabled[chosen])
    }
}

/// The next prefix in DFS order, or none when the tree is exhausted.
fn backtrack(log: &[Decision], bound: Option<u32>) -> Option<Vec<usize>> {
    for i in (0..log.len()).rev() {
        let d = log[i];
        if d.chosen + 1 >= d.options {
            continue;
        }
        let cost = u32::from(d.current_enabled);
        if bound.is_some_and(|b| d.preemptions_before + cost > b) {
            continue;
        }
        let mut p: Vec<usize> = log[..i].iter().map(|d| d.chosen).collect();
        p.push(d.chosen + 1);
        return Some(p);
    }
    None
}

/// One explored execution.
#[derive(Clone, Debug)]
pub struct Explored {
    pub index: u64,
    pub outcome: Outcome,
    pub trace: Trace,
    /// Choice indices at every decision with more than one option.
    pub schedule: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ExploreStats {
    pub executions: u64,
    /// Executions cut at the restart bound (not visited).
    pub livelock_pruned: u64,
    pub deadlocks: u64,
    pub step_limited: u64,
    /// The max-traces guard stopped the search.
    pub truncated: bool,
}

/// Enumerates schedules of `w` depth-first. Livelocked executions are
/// pruned and counted; everything else is passed to `visit`.
pub fn run_exhaustive(
    w: &Workload,
    bounds: &Bounds,
    mut visit: impl FnMut(Explored) -> ControlFlow<()>,
) -> Result<ExploreStats, String> {
    let prepared = Prepared::new(w)?;
    let mut stats = ExploreStats::default();
    let mut prefix: Vec<usize> = Vec::new();
    loop {
        if stats.executions >= bounds.max_traces {
            stats.truncated = true;
            break;
        }
        let mut chooser = DfsChooser { prefix: &prefix, log: Vec::new(), preemptions: 0 };
        let (outcome, trace) = prepared.execute(&mut chooser, bounds.restart_bound);
        let log = chooser.log;
        stats.executions += 1;
        let flow = match outcome {
            Outcome::Livelock { .. } => {
                stats.livelock_pruned += 1;
                ControlFlow::Continue(())
            }
            o => {
                match o {
                    Outcome::Deadlock { .. } => stats.deadlocks += 1,
                    Outcome::StepLimit => stats.step_limited += 1,
                    _ => {}
                }
                let schedule = log.iter().map(|d| d.chosen).collect();
                visit(Explored { index: stats.executions - 1, outcome: o, trace, schedule })
            }
        };
        if flow.is_break() {
            break;
        }
        match backtrack(&log, bounds.preemptions) {
            Some(p) => prefix = p,
            None => break,
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::exec::NonPreemptive;
    use crate::trace::{OpCall, Ret, Structure};

    fn binom(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    /// Number of shared accesses one thread performs running `calls` alone.
    fn solo_steps(structure: Structure, prefill: &[i64], calls: Vec<OpCall>) -> u64 {
        let w = Workload::new(structure, vec![calls]).with_prefill(prefill);
        let p = Prepared::new(&w).unwrap();
        let (steps, _) = p.with_execution(8, |ex| {
            ex.run(&mut NonPreemptive);
            ex.steps()
        });
        steps
    }

    #[test]
    fn single_thread_single_trace() {
        let w = Workload::new(Structure::LazyList, vec![vec![OpCall::insert(2)]]);
        let stats = run_exhaustive(&w, &Bounds::default(), |_| ControlFlow::Continue(())).unwrap();
        assert_eq!(stats.executions, 1);
    }

    #[test]
    fn read_only_interleavings_match_binomial() {
        let prefill = [1, 2, 3];
        let a = solo_steps(Structure::LazyList, &prefill, vec![OpCall::contains(2)]);
        let b = solo_steps(Structure::LazyList, &prefill, vec![OpCall::contains(4)]);
        let w = Workload::new(Structure::LazyList, vec![vec![OpCall::contains(2)], vec![OpCall::contains(4)]])
            .with_prefill(&prefill);
        let stats = run_exhaustive(&w, &Bounds::default(), |_| ControlFlow::Continue(())).unwrap();
        assert_eq!(stats.executions, binom(a + b, a));
    }

    #[test]
    fn preemption_bound_zero_runs_threads_whole() {
        let w = Workload::new(Structure::LazyList, vec![vec![OpCall::contains(1)], vec![OpCall::contains(2)]]);
        let stats = run_exhaustive(&w, &Bounds::preemptions(0), |_| ControlFlow::Continue(())).unwrap();
        // T0 then T1, or T1 then T0.
        assert_eq!(stats.executions, 2);
    }

    #[test]
    fn exactly_one_duplicate_insert_wins() {
        let w = Workload::new(Structure::LazyList, vec![vec![OpCall::insert(3)], vec![OpCall::insert(3)]]);
        let mut n = 0;
        run_exhaustive(&w, &Bounds::default(), |e| {
            let wins = e.trace.ops.iter().filter(|o| o.ret == Some(Ret::Bool(true))).count();
            assert_eq!(wins, 1);
            n += 1;
            ControlFlow::Continue(())
        })
        .unwrap();
        assert!(n > 10);
    }

    #[test]
    fn max_traces_guard() {
        let w = Workload::new(Structure::LazyList, vec![vec![OpCall::insert(3)], vec![OpCall::insert(2)]]);
        let b = Bounds { max_traces: 5, ..Bounds::default() };
        let stats = run_exhaustive(&w, &b, |_| ControlFlow::Continue(())).unwrap();
        assert!(stats.truncated);
        assert_eq!(stats.executions, 5);
    }
}
