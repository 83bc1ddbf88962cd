//! Event model for recorded executions.
//!
//! A [`Trace`] is a totally ordered log of shared-memory writes, reads,
//! operation invocations/responses and RCU section events, plus the
//! traversal records emitted by the data structures. Writes carry dense
//! timestamps: the initial state is `t = 0` and the n-th write has `t = n`.
//! Every event also carries a global sequence number so real-time order
//! between events that do not write can be recovered.

mod io;
mod state;
mod validate;

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use io::{read_jsonl, write_jsonl, TraceIoError};
pub use state::{snapshot_stride, Replay, State, DEFAULT_SNAPSHOT_STRIDE};
pub use validate::{validate_trace, validate_traversal, TraceReport};
pub(crate) use validate::validate_traversal_in;

/// Opaque node identifier. Allocation ordered and never reused within a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjId(pub u32);

impl fmt::Display for ObjId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Field {
    Key,
    Data,
    Succ,
    Pred,
    Left,
    Right,
    Parent,
    Rem,
    Del,
    Tag,
    GhostKey,
}

impl Field {
    pub const COUNT: usize = 11;
    pub const ALL: [Field; Field::COUNT] = [
        Field::Key,
        Field::Data,
        Field::Succ,
        Field::Pred,
        Field::Left,
        Field::Right,
        Field::Parent,
        Field::Rem,
        Field::Del,
        Field::Tag,
        Field::GhostKey,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Key => "key",
            Field::Data => "data",
            Field::Succ => "succ",
            Field::Pred => "pred",
            Field::Left => "left",
            Field::Right => "right",
            Field::Parent => "parent",
            Field::Rem => "rem",
            Field::Del => "del",
            Field::Tag => "tag",
            Field::GhostKey => "ghostKey",
        }
    }

    pub fn is_link(self) -> bool {
        matches!(
            self,
            Field::Succ | Field::Pred | Field::Left | Field::Right | Field::Parent
        )
    }
}

/// A memory location `(o, f)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(ObjId, Field)", into = "(ObjId, Field)")]
pub struct Loc {
    pub obj: ObjId,
    pub field: Field,
}

impl Loc {
    pub fn new(obj: ObjId, field: Field) -> Self {
        Loc { obj, field }
    }

    /// Dense index used by bitsets: `obj * Field::COUNT + field`.
    pub fn index(self) -> usize {
        self.obj.0 as usize * Field::COUNT + self.field.index()
    }

    pub fn from_index(i: usize) -> Self {
        Loc {
            obj: ObjId((i / Field::COUNT) as u32),
            field: Field::ALL[i % Field::COUNT],
        }
    }
}

impl From<(ObjId, Field)> for Loc {
    fn from((obj, field): (ObjId, Field)) -> Self {
        Loc { obj, field }
    }
}

impl From<Loc> for (ObjId, Field) {
    fn from(l: Loc) -> Self {
        (l.obj, l.field)
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.obj, self.field.name())
    }
}

/// Key values: integers plus the two sentinels. Variant order gives the
/// total order `-inf < n < +inf`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyVal {
    NegInf,
    Fin(i64),
    PosInf,
}

impl fmt::Display for KeyVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyVal::NegInf => write!(f, "-inf"),
            KeyVal::Fin(k) => write!(f, "{k}"),
            KeyVal::PosInf => write!(f, "+inf"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KeyRepr {
    Fin(i64),
    Sentinel(String),
}

impl Serialize for KeyVal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            KeyVal::Fin(k) => KeyRepr::Fin(*k),
            KeyVal::NegInf => KeyRepr::Sentinel("-inf".into()),
            KeyVal::PosInf => KeyRepr::Sentinel("+inf".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for KeyVal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match KeyRepr::deserialize(d)? {
            KeyRepr::Fin(k) => Ok(KeyVal::Fin(k)),
            KeyRepr::Sentinel(s) if s == "-inf" => Ok(KeyVal::NegInf),
            KeyRepr::Sentinel(s) if s == "+inf" => Ok(KeyVal::PosInf),
            KeyRepr::Sentinel(s) => Err(serde::de::Error::custom(format!("bad key {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    Key(KeyVal),
    Int(i64),
    Bool(bool),
    Link(ObjId),
    Null,
}

impl Value {
    pub fn link(self) -> Option<ObjId> {
        match self {
            Value::Link(o) => Some(o),
            _ => None,
        }
    }

    pub fn key(self) -> Option<KeyVal> {
        match self {
            Value::Key(k) => Some(k),
            _ => None,
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_int(self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(i),
            _ => None,
        }
    }

    pub fn from_link(o: Option<ObjId>) -> Value {
        o.map_or(Value::Null, Value::Link)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Key(k) => write!(f, "{k}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Link(o) => write!(f, "{o}"),
            Value::Null => write!(f, "null"),
        }
    }
}

/// The structures under test; each registers a field schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "lazylist")]
    LazyList,
    #[serde(rename = "lotree")]
    LoTree,
    #[serde(rename = "cftree")]
    CfTree,
    #[serde(rename = "citrus")]
    Citrus,
}

impl Structure {
    pub const ALL: [Structure; 4] = [
        Structure::LazyList,
        Structure::LoTree,
        Structure::CfTree,
        Structure::Citrus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Structure::LazyList => "lazylist",
            Structure::LoTree => "lotree",
            Structure::CfTree => "cftree",
            Structure::Citrus => "citrus",
        }
    }

    pub fn from_name(s: &str) -> Option<Structure> {
        Structure::ALL.into_iter().find(|st| st.name() == s)
    }

    pub fn fields(self) -> &'static [Field] {
        match self {
            Structure::LazyList => &[Field::Key, Field::Succ, Field::Rem],
            Structure::LoTree => &[
                Field::Key,
                Field::Rem,
                Field::Left,
                Field::Right,
                Field::Parent,
                Field::Succ,
                Field::Pred,
            ],
            Structure::CfTree => &[Field::Key, Field::Left, Field::Right, Field::Del, Field::Rem],
            Structure::Citrus => &[
                Field::Key,
                Field::Data,
                Field::Left,
                Field::Right,
                Field::Tag,
                Field::Rem,
                Field::GhostKey,
            ],
        }
    }

    pub fn has_field(self, f: Field) -> bool {
        self.fields().contains(&f)
    }

    /// Whether the field may carry a real (non-ghost) write.
    pub fn writable(self, f: Field) -> bool {
        f != Field::GhostKey && self.has_field(f)
    }

    pub fn allows_ghost(self) -> bool {
        self == Structure::Citrus
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type Label = Cow<'static, str>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteEvent {
    pub t: u64,
    pub seq: u64,
    pub thread: u32,
    pub op: u32,
    pub loc: Loc,
    pub value: Value,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ghost: Vec<(Loc, Value)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadEvent {
    pub seq: u64,
    pub thread: u32,
    pub op: u32,
    pub loc: Loc,
    /// Timestamp of the state the value was read from.
    pub src_t: u64,
    pub value: Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Contains,
    Insert,
    Delete,
    /// LO / CF maintenance: right rotation under the node with the given key.
    Rotate,
    /// CF maintenance: physical removal of a deleted right child.
    RemoveRight,
}

impl OpKind {
    pub fn is_maintenance(self) -> bool {
        matches!(self, OpKind::Rotate | OpKind::RemoveRight)
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Contains => "contains",
            OpKind::Insert => "insert",
            OpKind::Delete => "delete",
            OpKind::Rotate => "rotate",
            OpKind::RemoveRight => "remove_right",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpCall {
    pub kind: OpKind,
    pub key: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<i64>,
}

impl OpCall {
    pub fn contains(key: i64) -> Self {
        OpCall { kind: OpKind::Contains, key, data: None }
    }
    pub fn insert(key: i64) -> Self {
        OpCall { kind: OpKind::Insert, key, data: None }
    }
    pub fn insert_data(key: i64, data: i64) -> Self {
        OpCall { kind: OpKind::Insert, key, data: Some(data) }
    }
    pub fn delete(key: i64) -> Self {
        OpCall { kind: OpKind::Delete, key, data: None }
    }
    pub fn rotate(key: i64) -> Self {
        OpCall { kind: OpKind::Rotate, key, data: None }
    }
    pub fn remove_right(key: i64) -> Self {
        OpCall { kind: OpKind::RemoveRight, key, data: None }
    }
}

impl fmt::Display for OpCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.data {
            Some(d) => write!(f, "{}({},{})", self.kind.name(), self.key, d),
            None => write!(f, "{}({})", self.kind.name(), self.key),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ret {
    Bool(bool),
    /// Map lookup: `Some(data)` when present, `None` for "false".
    Data(Option<i64>),
    Unit,
}

impl fmt::Display for Ret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ret::Bool(b) => write!(f, "{b}"),
            Ret::Data(Some(d)) => write!(f, "{d}"),
            Ret::Data(None) => write!(f, "false"),
            Ret::Unit => write!(f, "()"),
        }
    }
}

/// One operation's invocation and (if it completed) response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRecord {
    pub op: u32,
    pub thread: u32,
    pub call: OpCall,
    pub inv_seq: u64,
    /// State visible at invocation.
    pub inv_t: u64,
    pub ret: Option<Ret>,
    pub res_seq: Option<u64>,
    pub res_t: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RcuKind {
    Enter,
    Exit,
    SyncBegin,
    SyncEnd,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RcuEvent {
    pub seq: u64,
    pub thread: u32,
    pub op: u32,
    pub kind: RcuKind,
    pub t: u64,
}

/// Reachability predicate families, addressed by name in configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReachKind {
    #[serde(rename = "succ")]
    Succ,
    #[serde(rename = "succ_k")]
    SuccK,
    #[serde(rename = "bst_k")]
    BstK,
    #[serde(rename = "weak_k")]
    WeakK,
    #[serde(rename = "succ_k_eps")]
    SuccKEps,
}

impl ReachKind {
    pub fn name(self) -> &'static str {
        match self {
            ReachKind::Succ => "succ",
            ReachKind::SuccK => "succ_k",
            ReachKind::BstK => "bst_k",
            ReachKind::WeakK => "weak_k",
            ReachKind::SuccKEps => "succ_k_eps",
        }
    }

    pub fn from_name(s: &str) -> Option<ReachKind> {
        [
            ReachKind::Succ,
            ReachKind::SuccK,
            ReachKind::BstK,
            ReachKind::WeakK,
            ReachKind::SuccKEps,
        ]
        .into_iter()
        .find(|r| r.name() == s)
    }
}

/// Extend relation families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExtendKind {
    #[serde(rename = "succ_k")]
    Succ,
    #[serde(rename = "treepred")]
    TreePred,
    #[serde(rename = "bst_k")]
    Bst,
    #[serde(rename = "bst_k_eps")]
    BstEps,
}

impl ExtendKind {
    pub fn name(self) -> &'static str {
        match self {
            ExtendKind::Succ => "succ_k",
            ExtendKind::TreePred => "treepred",
            ExtendKind::Bst => "bst_k",
            ExtendKind::BstEps => "bst_k_eps",
        }
    }
}

/// How the base time `t*` of a traversal is fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Base {
    /// A fixed timestamp (invocation, RCU section start, walk start).
    At(u64),
    /// The earliest time in `[from, t1]` at which the first location is
    /// reachable; used to glue the LO succ segment to the pred walk.
    Witness { from: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub loc: Loc,
    pub t: u64,
}

/// `(l1,t1) ... (ln,tn), l(n+1)` with base `t*`, bound to a reach/extend pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalRecord {
    pub op: u32,
    pub thread: u32,
    /// Code site, e.g. "lo:tree-locate".
    pub site: Label,
    pub key: Option<i64>,
    pub reach: ReachKind,
    pub extend: ExtendKind,
    pub steps: Vec<Step>,
    pub end: Option<Loc>,
    pub base: Base,
}

impl TraversalRecord {
    pub fn last_t(&self) -> u64 {
        self.steps.last().map_or(0, |s| s.t)
    }

    /// The locations `l2 .. l(n+1)` paired with the read time of their
    /// predecessor.
    pub fn targets(&self) -> impl Iterator<Item = (usize, Loc, u64)> + '_ {
        let inner = self
            .steps
            .windows(2)
            .enumerate()
            .map(|(i, w)| (i, w[1].loc, w[0].t));
        let tail = self
            .end
            .zip(self.steps.last())
            .map(|(l, s)| (self.steps.len() - 1, l, s.t));
        inner.chain(tail)
    }
}

/// A read of a node's field that a linearizability argument pairs with the
/// node's reachability, e.g. LO `contains` reading `x.rem`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldRead {
    pub op: u32,
    pub thread: u32,
    pub site: Label,
    pub key: i64,
    pub reach: ReachKind,
    /// The node location whose reachability is known, `(x, key)`.
    pub node: Loc,
    pub field: Loc,
    pub base: u64,
    pub t: u64,
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: Structure,
    pub key_min: i64,
    pub key_max: i64,
    /// Named globals: "min"/"max" for lists, "root" for trees.
    pub roots: BTreeMap<String, ObjId>,
    pub initial: State,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mutations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub writes: Vec<WriteEvent>,
    pub reads: Vec<ReadEvent>,
    pub ops: Vec<OpRecord>,
    pub rcu: Vec<RcuEvent>,
    pub traversals: Vec<TraversalRecord>,
    pub field_reads: Vec<FieldRead>,
    /// Next global sequence number.
    #[serde(skip)]
    pub(crate) seq: u64,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("field {field} is not in the {schema} schema")]
    Schema { schema: Structure, field: &'static str },
    #[error("ghost assignments are not allowed for {0}")]
    Ghost(Structure),
    #[error("timestamp {t} outside trace span [0, {end}]")]
    Range { t: u64, end: u64 },
}

impl Trace {
    pub fn new(header: TraceHeader) -> Self {
        Trace {
            header,
            writes: Vec::new(),
            reads: Vec::new(),
            ops: Vec::new(),
            rcu: Vec::new(),
            traversals: Vec::new(),
            field_reads: Vec::new(),
            seq: 0,
        }
    }

    pub fn schema(&self) -> Structure {
        self.header.schema
    }

    /// Timestamp of the last write (`0` for a write-free trace).
    pub fn end(&self) -> u64 {
        self.writes.len() as u64
    }

    pub fn root(&self, name: &str) -> Option<ObjId> {
        self.header.roots.get(name).copied()
    }

    pub fn write_at(&self, t: u64) -> Option<&WriteEvent> {
        if t == 0 {
            return None;
        }
        self.writes.get(t as usize - 1)
    }

    pub(crate) fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq - 1
    }

    /// Recomputes the sequence counter after events were assembled by hand.
    pub(crate) fn resync_seq(&mut self) {
        let w = self.writes.iter().map(|e| e.seq + 1).max().unwrap_or(0);
        let r = self.reads.iter().map(|e| e.seq + 1).max().unwrap_or(0);
        let o = self
            .ops
            .iter()
            .map(|o| o.res_seq.unwrap_or(o.inv_seq) + 1)
            .max()
            .unwrap_or(0);
        let c = self.rcu.iter().map(|e| e.seq + 1).max().unwrap_or(0);
        self.seq = w.max(r).max(o).max(c);
    }

    /// Appends a write with the next timestamp and returns it.
    pub fn record_write(
        &mut self,
        thread: u32,
        op: u32,
        loc: Loc,
        value: Value,
        label: impl Into<Label>,
        ghost: Vec<(Loc, Value)>,
    ) -> Result<u64, TraceError> {
        let schema = self.schema();
        if !schema.writable(loc.field) {
            return Err(TraceError::Schema { schema, field: loc.field.name() });
        }
        if !ghost.is_empty() {
            if !schema.allows_ghost() {
                return Err(TraceError::Ghost(schema));
            }
            if let Some((g, _)) = ghost.iter().find(|(g, _)| g.field != Field::GhostKey) {
                return Err(TraceError::Schema { schema, field: g.field.name() });
            }
        }
        let t = self.end() + 1;
        let seq = self.next_seq();
        self.writes.push(WriteEvent {
            t,
            seq,
            thread,
            op,
            loc,
            value,
            label: label.into(),
            ghost,
        });
        Ok(t)
    }

    /// Reads `loc` from the latest state and logs the read.
    pub fn record_read(&mut self, thread: u32, op: u32, loc: Loc, current: &State) -> (Value, u64) {
        let value = current.get(loc).unwrap_or(Value::Null);
        let src_t = self.end();
        let seq = self.next_seq();
        self.reads.push(ReadEvent { seq, thread, op, loc, src_t, value });
        (value, src_t)
    }

    /// All objects that ever hold a value in the trace.
    pub fn objects(&self) -> Vec<ObjId> {
        let mut v: Vec<ObjId> = self
            .header
            .initial
            .objects()
            .chain(self.writes.iter().map(|w| w.loc.obj))
            .collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn max_obj(&self) -> u32 {
        self.objects().last().map_or(0, |o| o.0 + 1)
    }

    pub fn op(&self, id: u32) -> Option<&OpRecord> {
        self.ops.iter().find(|o| o.op == id)
    }

    /// Truncate to the prefix ending with the write at `t` (events with a
    /// later sequence number are dropped; open operations lose their response).
    pub fn prefix(&self, t: u64) -> Trace {
        let cut = self.write_at(t).map_or(0, |w| w.seq + 1);
        let mut out = Trace::new(self.header.clone());
        out.writes = self.writes.iter().filter(|w| w.t <= t).cloned().collect();
        out.reads = self.reads.iter().filter(|r| r.seq < cut).cloned().collect();
        out.rcu = self.rcu.iter().filter(|r| r.seq < cut).cloned().collect();
        out.ops = self
            .ops
            .iter()
            .filter(|o| o.inv_seq < cut)
            .map(|o| {
                let mut o = o.clone();
                if o.res_seq.is_some_and(|s| s >= cut) {
                    o.ret = None;
                    o.res_seq = None;
                    o.res_t = None;
                }
                o
            })
            .collect();
        out.traversals = self
            .traversals
            .iter()
            .filter(|tr| tr.last_t() <= t)
            .cloned()
            .collect();
        out.field_reads = self.field_reads.iter().filter(|f| f.t <= t).cloned().collect();
        out.resync_seq();
        out
    }

    pub fn record_inv(&mut self, thread: u32, op: u32, call: OpCall) {
        let inv_seq = self.next_seq();
        let inv_t = self.end();
        self.ops.push(OpRecord {
            op,
            thread,
            call,
            inv_seq,
            inv_t,
            ret: None,
            res_seq: None,
            res_t: None,
        });
    }

    pub fn record_res(&mut self, op: u32, ret: Ret) {
        let seq = self.next_seq();
        let t = self.end();
        if let Some(o) = self.ops.iter_mut().rev().find(|o| o.op == op) {
            o.ret = Some(ret);
            o.res_seq = Some(seq);
            o.res_t = Some(t);
        }
    }

    pub fn record_rcu(&mut self, thread: u32, op: u32, kind: RcuKind) -> u64 {
        let seq = self.next_seq();
        let t = self.end();
        self.rcu.push(RcuEvent { seq, thread, op, kind, t });
        t
    }

    /// Ghost-key intervals: `(w, open_t, ghost value, collapse_t)`.
    pub fn ghost_intervals(&self) -> Vec<GhostInterval> {
        let mut out: Vec<GhostInterval> = Vec::new();
        for w in &self.writes {
            for (g, v) in &w.ghost {
                let Some(gk) = v.key() else { continue };
                let key_now = self
                    .writes
                    .iter()
                    .take(w.t as usize)
                    .rev()
                    .find(|e| e.loc == Loc::new(g.obj, Field::Key))
                    .map(|e| e.value)
                    .or_else(|| self.header.initial.get(Loc::new(g.obj, Field::Key)))
                    .and_then(Value::key);
                if key_now == Some(gk) {
                    // collapse: ghost returns to the real key
                    if let Some(iv) = out
                        .iter_mut()
                        .rev()
                        .find(|iv| iv.obj == g.obj && iv.collapse_t.is_none())
                    {
                        iv.collapse_t = Some(w.t);
                    }
                } else {
                    out.push(GhostInterval { obj: g.obj, open_t: w.t, ghost: gk, collapse_t: None });
                }
            }
        }
        out
    }
}

/// One open..collapse window of a ghost key on a successor copy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhostInterval {
    pub obj: ObjId,
    pub open_t: u64,
    pub ghost: KeyVal,
    pub collapse_t: Option<u64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(schema: Structure) -> TraceHeader {
        TraceHeader {
            schema,
            key_min: 1,
            key_max: 4,
            roots: BTreeMap::new(),
            initial: State::default(),
            mutations: vec![],
        }
    }

    #[test]
    fn timestamps_are_dense_from_one() {
        let mut tr = Trace::new(header(Structure::LazyList));
        let l = Loc::new(ObjId(0), Field::Key);
        let t1 = tr.record_write(0, 0, l, Value::Key(KeyVal::Fin(1)), "a", vec![]).unwrap();
        let t2 = tr.record_write(0, 0, l, Value::Key(KeyVal::Fin(2)), "b", vec![]).unwrap();
        assert_eq!((t1, t2), (1, 2));
    }

    #[test]
    fn ghost_rejected_outside_citrus() {
        let mut tr = Trace::new(header(Structure::CfTree));
        let l = Loc::new(ObjId(0), Field::Left);
        let g = vec![(Loc::new(ObjId(1), Field::GhostKey), Value::Key(KeyVal::Fin(1)))];
        assert_eq!(
            tr.record_write(0, 0, l, Value::Null, "x", g),
            Err(TraceError::Ghost(Structure::CfTree))
        );
    }

    #[test]
    fn unknown_field_is_a_schema_fault() {
        let mut tr = Trace::new(header(Structure::LazyList));
        let l = Loc::new(ObjId(0), Field::Left);
        assert!(matches!(
            tr.record_write(0, 0, l, Value::Null, "x", vec![]),
            Err(TraceError::Schema { .. })
        ));
    }

    #[test]
    fn reads_see_initial_then_written_values() {
        let mut init = State::default();
        let l = Loc::new(ObjId(0), Field::Key);
        init.set(l, Value::Key(KeyVal::NegInf));
        let mut h = header(Structure::LazyList);
        h.initial = init.clone();
        let mut tr = Trace::new(h);
        let mut cur = init;
        assert_eq!(tr.record_read(0, 0, l, &cur), (Value::Key(KeyVal::NegInf), 0));
        let v = Value::Key(KeyVal::Fin(3));
        let t = tr.record_write(0, 0, l, v, "w", vec![]).unwrap();
        cur.set(l, v);
        assert_eq!(tr.record_read(0, 0, l, &cur), (v, t));
        assert_eq!(tr.record_read(1, 1, l, &cur).1, t);
    }

    #[test]
    fn keyval_order_and_json() {
        assert!(KeyVal::NegInf < KeyVal::Fin(i64::MIN));
        assert!(KeyVal::Fin(i64::MAX) < KeyVal::PosInf);
        let s = serde_json::to_string(&Value::Key(KeyVal::PosInf)).unwrap();
        assert_eq!(s, r#"{"key":"+inf"}"#);
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back, Value::Key(KeyVal::PosInf));
        let loc = serde_json::to_string(&Loc::new(ObjId(3), Field::GhostKey)).unwrap();
        assert_eq!(loc, r#"[3,"ghostKey"]"#);
    }

    #[test]
    fn loc_index_roundtrip() {
        for o in 0..5 {
            for f in Field::ALL {
                let l = Loc::new(ObjId(o), f);
                assert_eq!(Loc::from_index(l.index()), l);
            }
        }
    }
}
