//! Instrumented shared memory and the scheduler-facing access protocol.
//!
//! Each logical thread is an `async` task. Every shared access (read, write,
//! allocation, latch operation, RCU event) is a future that first announces
//! its request and then waits to be granted by a scheduler. Under the
//! controlled executor ([`exec`]) the scheduler decides which announced
//! request runs next; in free-running mode ([`free`]) tasks on OS threads
//! perform their requests directly under the world mutex.

pub mod exec;
pub mod free;

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::future::Future;
use std::pin::Pin;
use std::sync::{Arc, Mutex, MutexGuard};
use std::task::{Context, Poll};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::trace::{
    Base, ExtendKind, Field, FieldRead, Label, Loc, ObjId, OpCall, RcuKind, ReachKind, Ret,
    State, Structure, Trace, TraceHeader, TraversalRecord, Value,
};

/// Latch kinds; the LO tree has two per node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Latch {
    Node,
    Tree,
    Succ,
}

/// An execution was cut short.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Abort {
    /// An operation restarted more often than the configured bound.
    Livelock,
}

/// Fault-injection switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// LO insert publishes into the tree and pred list before the succ list.
    OrigInsertOrder,
    /// LO delete unlinks without setting `rem`.
    SkipMark,
    /// Citrus delete skips `synchronize_rcu`.
    NoGracePeriod,
}

impl Mutation {
    pub const ALL: [Mutation; 3] = [Mutation::OrigInsertOrder, Mutation::SkipMark, Mutation::NoGracePeriod];

    pub fn name(self) -> &'static str {
        match self {
            Mutation::OrigInsertOrder => "orig-insert-order",
            Mutation::SkipMark => "skip-mark",
            Mutation::NoGracePeriod => "no-grace-period",
        }
    }

    pub fn from_name(s: &str) -> Option<Mutation> {
        Mutation::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn structure(self) -> Structure {
        match self {
            Mutation::OrigInsertOrder | Mutation::SkipMark => Structure::LoTree,
            Mutation::NoGracePeriod => Structure::Citrus,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Request {
    Read(Loc),
    Write { loc: Loc, value: Value, label: Label, ghost: Vec<(Loc, Value)> },
    Alloc { fields: Vec<(Field, Value)>, label: Label },
    Lock(ObjId, Latch),
    TryLock(ObjId, Latch),
    UnlockAll(Option<Latch>),
    WaitFree(ObjId, Latch),
    Rcu(RcuKind),
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Resp {
    Val(Value, u64),
    Time(u64),
    Obj(ObjId),
    Bool(bool),
}

#[derive(Clone, Debug)]
struct CurOp {
    op: u32,
    call: OpCall,
    inv_t: Option<u64>,
}

/// Shared memory, latches, RCU registry and the trace being recorded.
#[derive(Clone, Debug)]
pub struct World {
    pub state: State,
    pub trace: Trace,
    latches: BTreeMap<(ObjId, Latch), u32>,
    next_obj: u32,
    rcu_in: Vec<bool>,
    rcu_epoch: Vec<u64>,
    sync_snap: Vec<Vec<(usize, u64)>>,
    cur: Vec<Option<CurOp>>,
    pub(crate) pending: Vec<Option<Request>>,
    pub(crate) resp: Vec<Option<Resp>>,
    record: bool,
}

impl World {
    /// A world for `threads` tasks. Until [`World::start_trace`] is called,
    /// accesses mutate state without being logged.
    pub fn new(schema: Structure, keys: (i64, i64), threads: usize) -> Self {
        let header = TraceHeader {
            schema,
            key_min: keys.0,
            key_max: keys.1,
            roots: BTreeMap::new(),
            initial: State::default(),
            mutations: vec![],
        };
        World {
            state: State::default(),
            trace: Trace::new(header),
            latches: BTreeMap::new(),
            next_obj: 0,
            rcu_in: vec![false; threads],
            rcu_epoch: vec![0; threads],
            sync_snap: vec![Vec::new(); threads],
            cur: vec![None; threads],
            pending: vec![None; threads],
            resp: vec![None; threads],
            record: false,
        }
    }

    /// Creates an object directly, outside any trace (construction time).
    pub fn create(&mut self, fields: &[(Field, Value)]) -> ObjId {
        let o = ObjId(self.next_obj);
        self.next_obj += 1;
        for &(f, v) in fields {
            self.state.set(Loc::new(o, f), v);
        }
        o
    }

    pub fn set_root(&mut self, name: &str, o: ObjId) {
        self.trace.header.roots.insert(name.to_string(), o);
    }

    /// Resets the thread registry and begins logging from the current state.
    pub fn start_trace(&mut self, threads: usize, mutations: &[Mutation]) {
        let mut header = self.trace.header.clone();
        header.initial = self.state.clone();
        header.mutations = mutations.iter().map(|m| m.name().to_string()).collect();
        self.trace = Trace::new(header);
        self.latches.clear();
        self.rcu_in = vec![false; threads];
        self.rcu_epoch = vec![0; threads];
        self.sync_snap = vec![Vec::new(); threads];
        self.cur = vec![None; threads];
        self.pending = vec![None; threads];
        self.resp = vec![None; threads];
        self.record = true;
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub(crate) fn enabled(&self, tid: u32, req: &Request) -> bool {
        match req {
            Request::Lock(o, l) | Request::WaitFree(o, l) => {
                self.latches.get(&(*o, *l)).is_none_or(|&h| h == tid)
            }
            Request::Rcu(RcuKind::SyncEnd) => self.sync_snap[tid as usize]
                .iter()
                .all(|&(u, e)| !self.rcu_in[u] || self.rcu_epoch[u] != e),
            _ => true,
        }
    }

    /// Whether the pending request of `tid` (if any) can run now.
    pub(crate) fn pending_enabled(&self, tid: u32) -> bool {
        self.pending[tid as usize]
            .as_ref()
            .is_some_and(|r| self.enabled(tid, r))
    }

    fn op_ids(&mut self, tid: u32) -> u32 {
        let rec = self.record;
        let Some(cur) = self.cur[tid as usize].as_mut() else { return 0 };
        if cur.inv_t.is_none() {
            cur.inv_t = Some(self.trace.end());
            if rec {
                let (op, call) = (cur.op, cur.call);
                self.trace.record_inv(tid, op, call);
            }
        }
        cur.op
    }

    pub(crate) fn perform(&mut self, tid: u32, req: Request) -> Resp {
        let op = self.op_ids(tid);
        match req {
            Request::Read(loc) => {
                if self.record {
                    let (v, t) = self.trace.record_read(tid, op, loc, &self.state);
                    Resp::Val(v, t)
                } else {
                    Resp::Val(self.state.val(loc), 0)
                }
            }
            Request::Write { loc, value, label, ghost } => {
                let t = self.log_write(tid, op, loc, value, label, ghost);
                Resp::Time(t)
            }
            Request::Alloc { fields, label } => {
                let o = ObjId(self.next_obj);
                self.next_obj += 1;
                for (f, v) in fields {
                    self.log_write(tid, op, Loc::new(o, f), v, label.clone(), vec![]);
                }
                Resp::Obj(o)
            }
            Request::Lock(o, l) => {
                self.latches.insert((o, l), tid);
                Resp::Bool(true)
            }
            Request::TryLock(o, l) => match self.latches.get(&(o, l)) {
                Some(&h) => Resp::Bool(h == tid),
                None => {
                    self.latches.insert((o, l), tid);
                    Resp::Bool(true)
                }
            },
            Request::UnlockAll(kind) => {
                self.latches
                    .retain(|&(_, l), &mut h| h != tid || kind.is_some_and(|k| k != l));
                Resp::Bool(true)
            }
            Request::WaitFree(..) => Resp::Bool(true),
            Request::Rcu(kind) => {
                let u = tid as usize;
                match kind {
                    RcuKind::Enter => {
                        self.rcu_in[u] = true;
                        self.rcu_epoch[u] += 1;
                    }
                    RcuKind::Exit => self.rcu_in[u] = false,
                    RcuKind::SyncBegin => {
                        self.sync_snap[u] = (0..self.rcu_in.len())
                            .filter(|&v| v != u && self.rcu_in[v])
                            .map(|v| (v, self.rcu_epoch[v]))
                            .collect();
                    }
                    RcuKind::SyncEnd => self.sync_snap[u].clear(),
                }
                let t = if self.record { self.trace.record_rcu(tid, op, kind) } else { self.trace.end() };
                Resp::Time(t)
            }
        }
    }

    fn log_write(&mut self, tid: u32, op: u32, loc: Loc, value: Value, label: Label, ghost: Vec<(Loc, Value)>) -> u64 {
        self.state.set(loc, value);
        if self.record {
            self.trace
                .record_write(tid, op, loc, value, label, ghost)
                .expect("structure wrote outside its schema")
        } else {
            0
        }
    }

    fn begin(&mut self, tid: u32, op: u32, call: OpCall) {
        self.cur[tid as usize] = Some(CurOp { op, call, inv_t: None });
    }

    fn respond(&mut self, tid: u32, ret: Ret) {
        let op = self.op_ids(tid);
        if self.record {
            self.trace.record_res(op, ret);
        }
        self.cur[tid as usize] = None;
    }

    fn inv_t(&self, tid: u32) -> u64 {
        self.cur[tid as usize]
            .as_ref()
            .and_then(|c| c.inv_t)
            .unwrap_or_else(|| self.trace.end())
    }
}

pub type SharedWorld = Arc<Mutex<World>>;

pub(crate) fn lock_world(w: &SharedWorld) -> MutexGuard<'_, World> {
    w.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug)]
enum Mode {
    Controlled,
    Free { rng: Box<RefCell<ChaCha8Rng>>, yield_pct: u32 },
}

/// Per-thread handle through which structure code touches shared memory.
#[derive(Debug)]
pub struct Ctx {
    world: SharedWorld,
    tid: u32,
    mode: Mode,
    restarts: Cell<u32>,
    restart_bound: u32,
    mutations: Vec<Mutation>,
}

/// The future behind every shared access.
struct Access<'c> {
    ctx: &'c Ctx,
    req: Option<Request>,
}

impl Future for Access<'_> {
    type Output = Resp;

    fn poll(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<Resp> {
        let ctx = self.ctx;
        let tid = ctx.tid;
        match &ctx.mode {
            Mode::Controlled => {
                let mut w = lock_world(&ctx.world);
                if let Some(r) = w.resp[tid as usize].take() {
                    return Poll::Ready(r);
                }
                let req = self.req.take().expect("access polled after completion");
                w.pending[tid as usize] = Some(req);
                Poll::Pending
            }
            Mode::Free { rng, yield_pct } => {
                if rng.borrow_mut().gen_range(0..100) < *yield_pct {
                    std::thread::yield_now();
                }
                let mut w = lock_world(&ctx.world);
                let req = self.req.as_ref().expect("access polled after completion");
                if w.enabled(tid, req) {
                    let req = self.req.take().unwrap();
                    Poll::Ready(w.perform(tid, req))
                } else {
                    drop(w);
                    std::thread::yield_now();
                    cx.waker().wake_by_ref();
                    Poll::Pending
                }
            }
        }
    }
}

impl Ctx {
    pub(crate) fn controlled(world: SharedWorld, tid: u32, restart_bound: u32, mutations: Vec<Mutation>) -> Ctx {
        Ctx { world, tid, mode: Mode::Controlled, restarts: Cell::new(0), restart_bound, mutations }
    }

    pub(crate) fn free(world: SharedWorld, tid: u32, rng: ChaCha8Rng, yield_pct: u32, mutations: Vec<Mutation>) -> Ctx {
        Ctx {
            world,
            tid,
            mode: Mode::Free { rng: Box::new(RefCell::new(rng)), yield_pct },
            restarts: Cell::new(0),
            restart_bound: u32::MAX,
            mutations,
        }
    }

    pub fn tid(&self) -> u32 {
        self.tid
    }

    pub fn has(&self, m: Mutation) -> bool {
        self.mutations.contains(&m)
    }

    fn access(&self, req: Request) -> Access<'_> {
        Access { ctx: self, req: Some(req) }
    }

    pub async fn read(&self, o: ObjId, f: Field) -> (Value, u64) {
        match self.access(Request::Read(Loc::new(o, f))).await {
            Resp::Val(v, t) => (v, t),
            r => unreachable!("read answered with {r:?}"),
        }
    }

    pub async fn val(&self, o: ObjId, f: Field) -> Value {
        self.read(o, f).await.0
    }

    pub async fn write(&self, o: ObjId, f: Field, v: Value, label: &'static str) -> u64 {
        self.write_ghost(o, f, v, label, vec![]).await
    }

    pub async fn write_ghost(&self, o: ObjId, f: Field, v: Value, label: &'static str, ghost: Vec<(Loc, Value)>) -> u64 {
        let req = Request::Write { loc: Loc::new(o, f), value: v, label: label.into(), ghost };
        match self.access(req).await {
            Resp::Time(t) => t,
            r => unreachable!("write answered with {r:?}"),
        }
    }

    /// Allocates a fresh object, writing its initial fields in one step.
    pub async fn alloc(&self, fields: Vec<(Field, Value)>, label: &'static str) -> ObjId {
        match self.access(Request::Alloc { fields, label: label.into() }).await {
            Resp::Obj(o) => o,
            r => unreachable!("alloc answered with {r:?}"),
        }
    }

    /// Blocking acquire; a no-op if this thread already holds the latch.
    pub async fn lock(&self, o: ObjId, l: Latch) {
        self.access(Request::Lock(o, l)).await;
    }

    pub async fn try_lock(&self, o: ObjId, l: Latch) -> bool {
        matches!(self.access(Request::TryLock(o, l)).await, Resp::Bool(true))
    }

    /// Releases every latch this thread holds.
    pub async fn unlock_all(&self) {
        self.access(Request::UnlockAll(None)).await;
    }

    /// Releases every latch of one kind held by this thread.
    pub async fn unlock_kind(&self, l: Latch) {
        self.access(Request::UnlockAll(Some(l))).await;
    }

    /// Blocks until the latch is free, without taking it.
    pub async fn wait_free(&self, o: ObjId, l: Latch) {
        self.access(Request::WaitFree(o, l)).await;
    }

    /// Enters a read-side section; returns the trace time of entry.
    pub async fn rcu_enter(&self) -> u64 {
        match self.access(Request::Rcu(RcuKind::Enter)).await {
            Resp::Time(t) => t,
            r => unreachable!("rcu answered with {r:?}"),
        }
    }

    pub async fn rcu_exit(&self) {
        self.access(Request::Rcu(RcuKind::Exit)).await;
    }

    /// Waits for every read-side section active at the call to exit.
    pub async fn synchronize_rcu(&self) {
        self.access(Request::Rcu(RcuKind::SyncBegin)).await;
        self.access(Request::Rcu(RcuKind::SyncEnd)).await;
    }

    /// Counts a restart; fails once the bound is exceeded.
    pub fn restart(&self) -> Result<(), Abort> {
        let n = self.restarts.get() + 1;
        self.restarts.set(n);
        if n > self.restart_bound {
            Err(Abort::Livelock)
        } else {
            Ok(())
        }
    }

    pub(crate) fn begin(&self, op: u32, call: OpCall) {
        self.restarts.set(0);
        lock_world(&self.world).begin(self.tid, op, call);
    }

    pub(crate) fn respond(&self, ret: Ret) {
        lock_world(&self.world).respond(self.tid, ret);
    }

    /// Invocation time of the running operation.
    pub fn inv_t(&self) -> u64 {
        lock_world(&self.world).inv_t(self.tid)
    }

    fn op(&self) -> u32 {
        lock_world(&self.world).cur[self.tid as usize].as_ref().map_or(0, |c| c.op)
    }

    pub fn walk(&self, site: &'static str, key: Option<i64>, reach: ReachKind, extend: ExtendKind, base: Base) -> Walk {
        Walk {
            rec: TraversalRecord {
                op: self.op(),
                thread: self.tid,
                site: site.into(),
                key,
                reach,
                extend,
                steps: Vec::new(),
                end: None,
                base,
            },
            virt: None,
            inv_base: None,
        }
    }

    /// A walk whose base is the invocation time of the running operation,
    /// used directly (`witness = false`) or as the lower end of a witness
    /// search for the first location.
    pub fn walk_inv(&self, site: &'static str, key: Option<i64>, reach: ReachKind, extend: ExtendKind, witness: bool) -> Walk {
        let mut w = self.walk(site, key, reach, extend, Base::At(0));
        w.inv_base = Some(witness);
        w
    }

    /// Reads a location as the next step of `walk`.
    pub async fn step(&self, walk: &mut Walk, o: ObjId, f: Field) -> Value {
        let (v, t) = self.read(o, f).await;
        walk.push(Loc::new(o, f), t);
        v
    }

    pub fn log_walk(&self, mut walk: Walk) {
        let mut w = lock_world(&self.world);
        if let Some(witness) = walk.inv_base {
            let from = w.inv_t(self.tid);
            walk.rec.base = if witness { Base::Witness { from } } else { Base::At(from) };
        }
        if w.record && !walk.rec.steps.is_empty() {
            w.trace.traversals.push(walk.rec);
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn log_field_read(
        &self,
        site: &'static str,
        key: i64,
        reach: ReachKind,
        node: ObjId,
        field: Field,
        base: u64,
        t: u64,
        value: Value,
    ) {
        let op = self.op();
        let mut w = lock_world(&self.world);
        if w.record {
            w.trace.field_reads.push(FieldRead {
                op,
                thread: self.tid,
                site: site.into(),
                key,
                reach,
                node: Loc::new(node, Field::Key),
                field: Loc::new(node, field),
                base,
                t,
                value,
            });
        }
    }
}

/// Traversal record under construction.
#[derive(Clone, Debug)]
pub struct Walk {
    pub rec: TraversalRecord,
    virt: Option<Loc>,
    inv_base: Option<bool>,
}

impl Walk {
    /// Appends a step; a pending virtual key step takes this read's time.
    pub fn push(&mut self, loc: Loc, t: u64) {
        if let Some(v) = self.virt.take() {
            self.rec.steps.push(crate::trace::Step { loc: v, t });
        }
        self.rec.steps.push(crate::trace::Step { loc, t });
    }

    /// A key location the code relies on without reading it (keys are
    /// immutable); it is stamped with the time of the next read.
    pub fn virt(&mut self, loc: Loc) {
        self.virt = Some(loc);
    }

    /// Drops the last step (a null link that ended a loop iteration).
    pub fn pop(&mut self) {
        self.rec.steps.pop();
    }

    pub fn set_end(&mut self, loc: Loc) {
        self.rec.end = Some(loc);
    }

    pub fn last_t(&self) -> u64 {
        self.rec.steps.last().map_or(0, |s| s.t)
    }
}
