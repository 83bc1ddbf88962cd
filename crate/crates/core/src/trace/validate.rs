//! Structural validation of traces and traversal records.

use std::collections::HashMap;

use super::{Field, State, Trace, TraversalRecord, Value};
use crate::reach::ExtendRel;

/// Outcome of a validation pass; `errors` is empty when the input is valid.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceReport {
    pub errors: Vec<String>,
}

impl TraceReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn first(&self) -> Option<&str> {
        self.errors.first().map(String::as_str)
    }

    fn push(&mut self, msg: String) {
        // keep reports bounded on badly broken inputs
        if self.errors.len() < 64 {
            self.errors.push(msg);
        }
    }
}

fn well_typed(field: Field, v: Value) -> bool {
    match field {
        Field::Key | Field::GhostKey => matches!(v, Value::Key(_)),
        f if f.is_link() => matches!(v, Value::Link(_) | Value::Null),
        Field::Rem | Field::Del => matches!(v, Value::Bool(_)),
        Field::Data | Field::Tag => matches!(v, Value::Int(_)),
        _ => true,
    }
}

/// Checks density, schema, typing, read coherence, per-thread monotonicity
/// and operation bracketing.
pub fn validate_trace(trace: &Trace) -> TraceReport {
    let mut rep = TraceReport::default();
    let schema = trace.schema();

    for (l, v) in trace.header.initial.entries() {
        if !schema.has_field(l.field) || !well_typed(l.field, v) {
            rep.push(format!("initial state: bad entry {l} = {v}"));
        }
    }

    let mut cur = trace.header.initial.clone();
    for (i, w) in trace.writes.iter().enumerate() {
        if w.t != i as u64 + 1 {
            rep.push(format!("write #{i}: timestamp {} breaks density", w.t));
        }
        if !schema.writable(w.loc.field) {
            rep.push(format!("write t={}: field {} not in {schema} schema", w.t, w.loc.field.name()));
        }
        if !well_typed(w.loc.field, w.value) {
            rep.push(format!("write t={}: ill-typed value {} for {}", w.t, w.value, w.loc));
        }
        if let Value::Link(o) = w.value {
            if !cur.is_allocated(o) && o != w.loc.obj {
                rep.push(format!("write t={}: link to unallocated {o}", w.t));
            }
        }
        if !w.ghost.is_empty() && !schema.allows_ghost() {
            rep.push(format!("write t={}: ghost assignment on {schema}", w.t));
        }
        for (g, v) in &w.ghost {
            if g.field != Field::GhostKey || !well_typed(g.field, *v) {
                rep.push(format!("write t={}: bad ghost assignment {g} = {v}", w.t));
            }
        }
        cur.set(w.loc, w.value);
    }
    for pair in trace.writes.windows(2) {
        if pair[1].seq <= pair[0].seq {
            rep.push(format!("write t={}: sequence number not increasing", pair[1].t));
        }
    }

    let end = trace.end();
    let mut last_src: HashMap<u32, (u64, u64)> = HashMap::new();
    let mut reads: Vec<_> = trace.reads.iter().collect();
    reads.sort_by_key(|r| r.seq);
    // replay writes in step with reads, in global sequence order
    let mut st = trace.header.initial.clone();
    let mut applied = 0usize;
    for r in reads {
        while applied < trace.writes.len() && trace.writes[applied].seq < r.seq {
            let w = &trace.writes[applied];
            st.set(w.loc, w.value);
            applied += 1;
        }
        if r.src_t != applied as u64 {
            rep.push(format!("read seq={}: src_t {} but {applied} writes precede it", r.seq, r.src_t));
            continue;
        }
        if !st.is_allocated(r.loc.obj) {
            rep.push(format!("read seq={}: {} not allocated at t={}", r.seq, r.loc, r.src_t));
        }
        let actual = st.val(r.loc);
        if actual != r.value {
            rep.push(format!(
                "read seq={} of {} at t={}: logged {} but state holds {actual}",
                r.seq, r.loc, r.src_t, r.value
            ));
        }
        if let Some(&(prev, pseq)) = last_src.get(&r.thread) {
            if r.src_t < prev {
                rep.push(format!(
                    "thread {}: read seq={} src_t {} after seq={} src_t {prev}",
                    r.thread, r.seq, r.src_t, pseq
                ));
            }
        }
        last_src.insert(r.thread, (r.src_t, r.seq));
    }

    let ops: HashMap<u32, &super::OpRecord> = trace.ops.iter().map(|o| (o.op, o)).collect();
    for o in &trace.ops {
        if let Some(res) = o.res_seq {
            if res <= o.inv_seq {
                rep.push(format!("op {}: response before invocation", o.op));
            }
        }
    }
    let bracket = |what: &str, seq: u64, thread: u32, op: u32, rep: &mut TraceReport| match ops.get(&op) {
        None => rep.push(format!("{what} seq={seq}: unknown op {op}")),
        Some(o) => {
            if o.thread != thread {
                rep.push(format!("{what} seq={seq}: op {op} belongs to thread {}", o.thread));
            }
            if seq < o.inv_seq || o.res_seq.is_some_and(|r| seq > r) {
                rep.push(format!("{what} seq={seq}: outside op {op} interval"));
            }
        }
    };
    for w in &trace.writes {
        bracket("write", w.seq, w.thread, w.op, &mut rep);
    }
    for r in &trace.reads {
        bracket("read", r.seq, r.thread, r.op, &mut rep);
    }
    for e in &trace.rcu {
        bracket("rcu", e.seq, e.thread, e.op, &mut rep);
    }

    for (i, tr) in trace.traversals.iter().enumerate() {
        if tr.steps.windows(2).any(|w| w[1].t < w[0].t) {
            rep.push(format!("traversal {i} ({}): timestamps decrease", tr.site));
        }
        if tr.steps.last().is_some_and(|s| s.t > end) {
            rep.push(format!("traversal {i} ({}): read beyond trace end", tr.site));
        }
        if let (super::Base::At(b), Some(s)) = (tr.base, tr.steps.first()) {
            if b > s.t {
                rep.push(format!("traversal {i} ({}): base {b} after first read {}", tr.site, s.t));
            }
        }
    }
    rep
}

/// Checks that every consecutive pair of a traversal follows `ext` with the
/// value held at the step's read time.
pub fn validate_traversal(trace: &Trace, rec: &TraversalRecord, ext: &ExtendRel) -> TraceReport {
    let states = trace.all_states();
    validate_traversal_in(&states, rec, ext)
}

pub(crate) fn validate_traversal_in(states: &[State], rec: &TraversalRecord, ext: &ExtendRel) -> TraceReport {
    let mut rep = TraceReport::default();
    for (i, next, t) in rec.targets() {
        let here = rec.steps[i].loc;
        let Some(st) = states.get(t as usize) else {
            rep.push(format!("step {i}: timestamp {t} outside trace"));
            continue;
        };
        let v = st.val(here);
        if !ext.holds(here, v, next) {
            rep.push(format!(
                "step {i}: {} does not extend {here} (value {v} at t={t}) to {next}",
                ext.name()
            ));
        }
    }
    rep
}
