//! Scripted schedules that reproduce specific interference patterns.

use super::{Prepared, Workload};
use crate::runtime::exec::{NonPreemptive, Outcome};
use crate::runtime::lock_world;
use crate::trace::{Field, KeyVal, OpCall, Structure, Trace};

/// One scheduling instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Directive {
    /// Run a thread for a number of accesses.
    Steps(u32, usize),
    /// Run a thread until it blocks or finishes.
    UntilBlocked(u32),
    /// Run a thread to completion; an error if it blocks.
    UntilDone(u32),
    /// Run a thread until it has read `field` of the node holding `key`.
    AfterRead { thread: u32, key: i64, field: Field },
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: &'static str,
    pub workload: Workload,
    pub script: Vec<Directive>,
}

pub const SCENARIOS: [&str; 3] = ["lo-rotation-recovery", "cf-backtrack", "citrus-weakreach"];

pub fn scenario(name: &str) -> Option<Scenario> {
    use Directive::*;
    let (workload, script) = match name {
        // A contains descends towards 1 and is cut off by a rotation at 4;
        // it dead-ends at 2 and recovers along pred links.
        "lo-rotation-recovery" => (
            Workload::new(Structure::LoTree, vec![vec![OpCall::contains(1)], vec![OpCall::rotate(4)]])
                .with_prefill(&[4, 2, 1, 3]),
            vec![AfterRead { thread: 0, key: 4, field: Field::Left }, UntilDone(1), UntilDone(0)],
        ),
        // A contains stands on 4 when 4 (deleted, one child) is physically
        // removed from under 2; it follows the backtracking link to 2.
        "cf-backtrack" => {
            let mut w = Workload::new(Structure::CfTree, vec![vec![OpCall::contains(3)], vec![OpCall::remove_right(2)]])
                .with_prefill(&[2, 4, 3]);
            w.prefill.push(OpCall::delete(4));
            (w, vec![AfterRead { thread: 0, key: 4, field: Field::Key }, UntilDone(1), UntilDone(0)])
        }
        // A lookup of 3 passes 2 before 2 is replaced by a copy of its
        // successor 3; a second two-children removal then links a copy of 6
        // below 7, on the path the lookup is still following.
        "citrus-weakreach" => (
            Workload::new(
                Structure::Citrus,
                vec![vec![OpCall::contains(3)], vec![OpCall::delete(2)], vec![OpCall::delete(5)]],
            )
            .with_prefill(&[2, 1, 7, 5, 4, 3, 6]),
            vec![AfterRead { thread: 0, key: 2, field: Field::Key }, UntilBlocked(1), UntilBlocked(2), UntilDone(0)],
        ),
        _ => return None,
    };
    let mut workload = workload;
    workload.keys = (1, 8);
    Some(Scenario { name: SCENARIOS.into_iter().find(|s| *s == name)?, workload, script })
}

/// Runs `script`, then lets the remaining threads finish in id order.
pub fn run_script(w: &Workload, script: &[Directive], restart_bound: u32) -> Result<(Outcome, Trace), String> {
    let p = Prepared::new(w)?;
    let (r, trace) = p.with_execution(restart_bound, |ex| -> Result<Outcome, String> {
        for (i, d) in script.iter().enumerate() {
            let tid = match *d {
                Directive::Steps(t, _) | Directive::UntilBlocked(t) | Directive::UntilDone(t) => t,
                Directive::AfterRead { thread, .. } => thread,
            };
            if tid >= ex.threads() {
                return Err(format!("directive {i}: no thread {tid}"));
            }
            let mut n = 0usize;
            loop {
                let done = match *d {
                    Directive::Steps(_, k) => n >= k,
                    Directive::UntilBlocked(_) | Directive::UntilDone(_) => ex.is_finished(tid),
                    Directive::AfterRead { .. } => false,
                };
                if done {
                    break;
                }
                if !ex.enabled().contains(&tid) {
                    match d {
                        Directive::UntilBlocked(_) => break,
                        _ => return Err(format!("directive {i} ({d:?}): thread {tid} cannot move")),
                    }
                }
                let before = lock_world(ex.world()).trace.reads.len();
                ex.step(tid);
                n += 1;
                if let Directive::AfterRead { key, field, .. } = *d {
                    let w = lock_world(ex.world());
                    let hit = w.trace.reads.len() > before
                        && w.trace.reads.last().is_some_and(|r| {
                            r.loc.field == field && w.state.key(r.loc.obj) == Some(KeyVal::Fin(key))
                        });
                    if hit {
                        break;
                    }
                }
            }
        }
        Ok(ex.run(&mut NonPreemptive))
    });
    Ok((r?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Ret;

    fn run(name: &str) -> Trace {
        let s = scenario(name).unwrap();
        let (o, t) = run_script(&s.workload, &s.script, 8).unwrap();
        assert_eq!(o, Outcome::Done, "{name}");
        t
    }

    fn ret(t: &Trace, thread: u32) -> Ret {
        t.ops.iter().find(|o| o.thread == thread).unwrap().ret.unwrap()
    }

    #[test]
    fn lo_rotation_recovery_follows_pred() {
        let t = run("lo-rotation-recovery");
        assert_eq!(ret(&t, 0), Ret::Bool(true));
        let walk = t.traversals.iter().find(|r| r.thread == 0 && r.site == "lo:locate").unwrap();
        assert!(walk.steps.iter().any(|s| s.loc.field == Field::Pred));
        assert!(t.writes.iter().any(|w| w.label == "rotate:link-y"));
    }

    #[test]
    fn cf_backtrack_uses_back_link() {
        let t = run("cf-backtrack");
        assert_eq!(ret(&t, 0), Ret::Bool(true));
        assert!(t.writes.iter().any(|w| w.label == "remove:backtrack-l"));
        let walk = t.traversals.iter().find(|r| r.thread == 0).unwrap();
        let back = t.writes.iter().find(|w| w.label == "remove:backtrack-l").unwrap();
        assert!(walk.steps.iter().any(|s| s.loc == back.loc && s.t >= back.t));
    }

    #[test]
    fn citrus_weakreach_lookup_succeeds() {
        let t = run("citrus-weakreach");
        assert_eq!(ret(&t, 0), Ret::Data(Some(3)));
        assert_eq!(t.ghost_intervals().len(), 2);
        assert!(t.ghost_intervals().iter().all(|g| g.collapse_t.is_some()));
    }

    #[test]
    fn unknown_scenario() {
        assert!(scenario("nope").is_none());
    }
}
