//! Deterministic single-threaded executor: one pending access per task, a
//! [`Chooser`] picks which enabled task performs its access next.

use std::future::Future;
use std::pin::Pin;
use std::task::{Context, Poll};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{lock_world, Abort, SharedWorld};

pub type Task<'a> = Pin<Box<dyn Future<Output = Result<(), Abort>> + 'a>>;

/// How a controlled execution ended.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Done,
    /// No task could move while some were unfinished.
    Deadlock { blocked: Vec<u32> },
    /// A task exceeded the restart bound.
    Livelock { thread: u32 },
    /// The chooser declined to continue (scripted prefixes).
    Stopped,
    StepLimit,
}

/// Scheduling policy. `enabled` is ordered current task first, then by id.
pub trait Chooser {
    fn choose(&mut self, enabled: &[u32], current: Option<u32>) -> Option<u32>;
}

/// Keeps running the current task; switches to the lowest id otherwise.
#[derive(Clone, Copy, Debug, Default)]
pub struct NonPreemptive;

impl Chooser for NonPreemptive {
    fn choose(&mut self, enabled: &[u32], _current: Option<u32>) -> Option<u32> {
        enabled.first().copied()
    }
}

/// Uniformly random choice from a seeded stream.
#[derive(Clone, Debug)]
pub struct RandomChooser(ChaCha8Rng);

impl RandomChooser {
    pub fn new(seed: u64) -> Self {
        RandomChooser(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl Chooser for RandomChooser {
    fn choose(&mut self, enabled: &[u32], _current: Option<u32>) -> Option<u32> {
        enabled.choose(&mut self.0).copied()
    }
}

pub const DEFAULT_STEP_LIMIT: u64 = 5_000_000;

/// A set of tasks sharing one world, advanced one access at a time.
pub struct Execution<'a> {
    world: SharedWorld,
    tasks: Vec<Option<Task<'a>>>,
    current: Option<u32>,
    steps: u64,
    abort: Option<(u32, Abort)>,
    pub step_limit: u64,
}

fn poll_task(task: &mut Task<'_>) -> Poll<Result<(), Abort>> {
    let mut cx = Context::from_waker(futures::task::noop_waker_ref());
    task.as_mut().poll(&mut cx)
}

impl<'a> Execution<'a> {
    /// Polls every task once so each announces its first access.
    pub fn new(world: SharedWorld, tasks: Vec<Task<'a>>) -> Self {
        let mut ex = Execution {
            world,
            tasks: tasks.into_iter().map(Some).collect(),
            current: None,
            steps: 0,
            abort: None,
            step_limit: DEFAULT_STEP_LIMIT,
        };
        for tid in 0..ex.tasks.len() {
            ex.poll(tid as u32);
        }
        ex
    }

    fn poll(&mut self, tid: u32) {
        let slot = &mut self.tasks[tid as usize];
        if let Some(task) = slot {
            match poll_task(task) {
                Poll::Pending => {}
                Poll::Ready(r) => {
                    *slot = None;
                    if let Err(a) = r {
                        self.abort.get_or_insert((tid, a));
                    }
                }
            }
        }
    }

    pub fn world(&self) -> &SharedWorld {
        &self.world
    }

    pub fn threads(&self) -> u32 {
        self.tasks.len() as u32
    }

    pub fn current(&self) -> Option<u32> {
        self.current
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn is_finished(&self, tid: u32) -> bool {
        self.tasks[tid as usize].is_none()
    }

    pub fn all_finished(&self) -> bool {
        self.tasks.iter().all(Option::is_none)
    }

    /// Enabled tasks, current first then ascending ids.
    pub fn enabled(&self) -> Vec<u32> {
        let w = lock_world(&self.world);
        let mut out = Vec::with_capacity(self.tasks.len());
        if let Some(c) = self.current {
            if self.tasks[c as usize].is_some() && w.pending_enabled(c) {
                out.push(c);
            }
        }
        for (i, t) in self.tasks.iter().enumerate() {
            let i = i as u32;
            if Some(i) != self.current && t.is_some() && w.pending_enabled(i) {
                out.push(i);
            }
        }
        out
    }

    /// Performs the pending access of `tid` and runs it to its next access.
    pub fn step(&mut self, tid: u32) {
        {
            let mut w = lock_world(&self.world);
            let req = w.pending[tid as usize]
                .take()
                .expect("stepped a task with no pending access");
            let r = w.perform(tid, req);
            w.resp[tid as usize] = Some(r);
        }
        self.current = Some(tid);
        self.steps += 1;
        self.poll(tid);
    }

    /// The outcome if the execution cannot or must not continue.
    pub fn status(&self, enabled: &[u32]) -> Option<Outcome> {
        if let Some((thread, Abort::Livelock)) = self.abort {
            return Some(Outcome::Livelock { thread });
        }
        if self.all_finished() {
            return Some(Outcome::Done);
        }
        if enabled.is_empty() {
            let blocked = (0..self.tasks.len() as u32).filter(|&t| !self.is_finished(t)).collect();
            return Some(Outcome::Deadlock { blocked });
        }
        if self.steps >= self.step_limit {
            return Some(Outcome::StepLimit);
        }
        None
    }

    pub fn run(&mut self, chooser: &mut dyn Chooser) -> Outcome {
        loop {
            let enabled = self.enabled();
            if let Some(o) = self.status(&enabled) {
                return o;
            }
            match chooser.choose(&enabled, self.current) {
                Some(t) => self.step(t),
                None => return Outcome::Stopped,
            }
        }
    }
}
