//! Memory states and their reconstruction by replay.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Field, Loc, ObjId, Trace, TraceError, Value};

pub const DEFAULT_SNAPSHOT_STRIDE: usize = 256;

/// Snapshot stride for [`Replay`], overridable through
/// `TRAVERSE_LAB_SNAPSHOT_STRIDE`.
pub fn snapshot_stride() -> usize {
    std::env::var("TRAVERSE_LAB_SNAPSHOT_STRIDE")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or(DEFAULT_SNAPSHOT_STRIDE)
}

type Slots = [Option<Value>; Field::COUNT];

/// A mapping from locations to values. Locations that were never written
/// are absent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct State {
    objs: Vec<Slots>,
}

impl State {
    pub fn get(&self, l: Loc) -> Option<Value> {
        self.objs.get(l.obj.0 as usize).and_then(|s| s[l.field.index()])
    }

    /// Value of a link/flag field, treating absent as null.
    pub fn val(&self, l: Loc) -> Value {
        self.get(l).unwrap_or(Value::Null)
    }

    pub fn link(&self, obj: ObjId, f: Field) -> Option<ObjId> {
        self.get(Loc::new(obj, f)).and_then(Value::link)
    }

    pub fn key(&self, obj: ObjId) -> Option<super::KeyVal> {
        self.get(Loc::new(obj, Field::Key)).and_then(Value::key)
    }

    pub fn flag(&self, obj: ObjId, f: Field) -> bool {
        self.get(Loc::new(obj, f)).and_then(Value::as_bool).unwrap_or(false)
    }

    pub fn set(&mut self, l: Loc, v: Value) {
        let i = l.obj.0 as usize;
        if self.objs.len() <= i {
            self.objs.resize(i + 1, [None; Field::COUNT]);
        }
        self.objs[i][l.field.index()] = Some(v);
    }

    pub fn is_allocated(&self, obj: ObjId) -> bool {
        self.objs
            .get(obj.0 as usize)
            .is_some_and(|s| s.iter().any(Option::is_some))
    }

    /// Objects holding at least one value.
    pub fn objects(&self) -> impl Iterator<Item = ObjId> + '_ {
        self.objs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.iter().any(Option::is_some))
            .map(|(i, _)| ObjId(i as u32))
    }

    pub fn entries(&self) -> impl Iterator<Item = (Loc, Value)> + '_ {
        self.objs.iter().enumerate().flat_map(|(i, s)| {
            s.iter().enumerate().filter_map(move |(f, v)| {
                v.map(|v| (Loc::new(ObjId(i as u32), Field::ALL[f]), v))
            })
        })
    }

    /// Upper bound on object ids (exclusive).
    pub fn obj_bound(&self) -> usize {
        self.objs.len()
    }
}

impl Serialize for State {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.entries())
    }
}

impl<'de> Deserialize<'de> for State {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let entries: Vec<(Loc, Value)> = Vec::deserialize(d)?;
        let mut st = State::default();
        for (l, v) in entries {
            st.set(l, v);
        }
        Ok(st)
    }
}

/// Replays a trace with a snapshot every `stride` writes.
pub struct Replay<'a> {
    trace: &'a Trace,
    stride: usize,
    snaps: Vec<State>,
}

impl<'a> Replay<'a> {
    pub fn new(trace: &'a Trace) -> Self {
        Self::with_stride(trace, snapshot_stride())
    }

    pub fn with_stride(trace: &'a Trace, stride: usize) -> Self {
        let stride = stride.max(1);
        let mut snaps = vec![trace.header.initial.clone()];
        let mut cur = trace.header.initial.clone();
        for w in &trace.writes {
            cur.set(w.loc, w.value);
            if (w.t as usize).is_multiple_of(stride) {
                snaps.push(cur.clone());
            }
        }
        Replay { trace, stride, snaps }
    }

    pub fn state_at(&self, t: u64) -> Result<State, TraceError> {
        let end = self.trace.end();
        if t > end {
            return Err(TraceError::Range { t, end });
        }
        let i = t as usize / self.stride;
        let mut st = self.snaps[i].clone();
        for w in &self.trace.writes[i * self.stride..t as usize] {
            st.set(w.loc, w.value);
        }
        Ok(st)
    }
}

impl Trace {
    /// State after applying every write with timestamp `<= t`. Ghost
    /// assignments are not applied.
    pub fn state_at(&self, t: u64) -> Result<State, TraceError> {
        let end = self.end();
        if t > end {
            return Err(TraceError::Range { t, end });
        }
        let mut st = self.header.initial.clone();
        for w in &self.writes[..t as usize] {
            st.set(w.loc, w.value);
        }
        Ok(st)
    }

    /// Every state `σ_0 .. σ_end`, in order.
    pub fn all_states(&self) -> Vec<State> {
        let mut out = Vec::with_capacity(self.writes.len() + 1);
        let mut cur = self.header.initial.clone();
        out.push(cur.clone());
        for w in &self.writes {
            cur.set(w.loc, w.value);
            out.push(cur.clone());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{KeyVal, Structure, TraceHeader};
    use std::collections::BTreeMap;

    fn trace_with(n: u64) -> Trace {
        let mut tr = Trace::new(TraceHeader {
            schema: Structure::CfTree,
            key_min: 0,
            key_max: 9,
            roots: BTreeMap::new(),
            initial: State::default(),
            mutations: vec![],
        });
        for i in 0..n {
            let loc = Loc::new(ObjId((i % 7) as u32), Field::Key);
            tr.record_write(0, 0, loc, Value::Key(KeyVal::Fin(i as i64)), "w", vec![])
                .unwrap();
        }
        tr
    }

    #[test]
    fn replay_matches_full_fold_at_every_t() {
        let tr = trace_with(40);
        let all = tr.all_states();
        for stride in [1, 3, 8, 64] {
            let rp = Replay::with_stride(&tr, stride);
            for t in 0..=tr.end() {
                assert_eq!(rp.state_at(t).unwrap(), all[t as usize], "stride {stride} t {t}");
            }
        }
    }

    #[test]
    fn out_of_span_is_a_range_fault() {
        let tr = trace_with(3);
        assert_eq!(tr.state_at(4), Err(TraceError::Range { t: 4, end: 3 }));
        assert!(Replay::new(&tr).state_at(9).is_err());
    }

    #[test]
    fn state_json_roundtrip() {
        let tr = trace_with(10);
        let st = tr.state_at(10).unwrap();
        let s = serde_json::to_string(&st).unwrap();
        let back: State = serde_json::from_str(&s).unwrap();
        assert_eq!(back, st);
    }
}
