//! JSON-lines trace serialization: one record per event, header first.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{
    FieldRead, Label, Loc, ObjId, OpCall, OpRecord, RcuEvent, RcuKind, ReadEvent, Ret, State,
    Structure, Trace, TraceHeader, TraversalRecord, Value, WriteEvent,
};

#[derive(Debug, thiserror::Error)]
pub enum TraceIoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {0}: record before header")]
    MissingHeader(usize),
    #[error("line {line}: response for unknown op {op}")]
    UnknownOp { line: usize, op: u32 },
    #[error("empty trace file")]
    Empty,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "ev")]
enum Record {
    #[serde(rename = "header")]
    Header {
        schema: Structure,
        key_min: i64,
        key_max: i64,
        roots: BTreeMap<String, ObjId>,
        initial: State,
        #[serde(default)]
        mutations: Vec<String>,
    },
    #[serde(rename = "w")]
    Write {
        t: u64,
        seq: u64,
        th: u32,
        op: u32,
        loc: Loc,
        val: Value,
        label: Label,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        ghost: Vec<(Loc, Value)>,
    },
    #[serde(rename = "r")]
    Read {
        seq: u64,
        th: u32,
        op: u32,
        loc: Loc,
        src: u64,
        val: Value,
    },
    #[serde(rename = "inv")]
    Inv {
        seq: u64,
        th: u32,
        op: u32,
        t: u64,
        call: OpCall,
    },
    #[serde(rename = "res")]
    Res {
        seq: u64,
        th: u32,
        op: u32,
        t: u64,
        ret: Ret,
    },
    #[serde(rename = "rcu_enter")]
    RcuEnter { seq: u64, th: u32, op: u32, t: u64 },
    #[serde(rename = "rcu_exit")]
    RcuExit { seq: u64, th: u32, op: u32, t: u64 },
    #[serde(rename = "sync_begin")]
    SyncBegin { seq: u64, th: u32, op: u32, t: u64 },
    #[serde(rename = "sync_end")]
    SyncEnd { seq: u64, th: u32, op: u32, t: u64 },
    #[serde(rename = "trav")]
    Trav(TraversalRecord),
    #[serde(rename = "field_read")]
    FieldRead(FieldRead),
}

impl Record {
    fn seq(&self) -> u64 {
        match self {
            Record::Header { .. } => 0,
            Record::Write { seq, .. }
            | Record::Read { seq, .. }
            | Record::Inv { seq, .. }
            | Record::Res { seq, .. }
            | Record::RcuEnter { seq, .. }
            | Record::RcuExit { seq, .. }
            | Record::SyncBegin { seq, .. }
            | Record::SyncEnd { seq, .. } => *seq,
            Record::Trav(_) | Record::FieldRead(_) => u64::MAX,
        }
    }
}

fn rcu_record(e: &RcuEvent) -> Record {
    let (seq, th, op, t) = (e.seq, e.thread, e.op, e.t);
    match e.kind {
        RcuKind::Enter => Record::RcuEnter { seq, th, op, t },
        RcuKind::Exit => Record::RcuExit { seq, th, op, t },
        RcuKind::SyncBegin => Record::SyncBegin { seq, th, op, t },
        RcuKind::SyncEnd => Record::SyncEnd { seq, th, op, t },
    }
}

/// Writes the trace as JSON lines, events in global sequence order.
pub fn write_jsonl<W: Write>(trace: &Trace, mut out: W) -> Result<(), TraceIoError> {
    let h = &trace.header;
    let header = Record::Header {
        schema: h.schema,
        key_min: h.key_min,
        key_max: h.key_max,
        roots: h.roots.clone(),
        initial: h.initial.clone(),
        mutations: h.mutations.clone(),
    };
    serde_json::to_writer(&mut out, &header).map_err(|e| TraceIoError::Json { line: 1, source: e })?;
    writeln!(out)?;

    let mut recs: Vec<Record> = Vec::new();
    for w in &trace.writes {
        recs.push(Record::Write {
            t: w.t,
            seq: w.seq,
            th: w.thread,
            op: w.op,
            loc: w.loc,
            val: w.value,
            label: w.label.clone(),
            ghost: w.ghost.clone(),
        });
    }
    for r in &trace.reads {
        recs.push(Record::Read {
            seq: r.seq,
            th: r.thread,
            op: r.op,
            loc: r.loc,
            src: r.src_t,
            val: r.value,
        });
    }
    for o in &trace.ops {
        recs.push(Record::Inv { seq: o.inv_seq, th: o.thread, op: o.op, t: o.inv_t, call: o.call });
        if let (Some(ret), Some(seq), Some(t)) = (o.ret, o.res_seq, o.res_t) {
            recs.push(Record::Res { seq, th: o.thread, op: o.op, t, ret });
        }
    }
    recs.extend(trace.rcu.iter().map(rcu_record));
    recs.sort_by_key(Record::seq);
    recs.extend(trace.traversals.iter().cloned().map(Record::Trav));
    recs.extend(trace.field_reads.iter().cloned().map(Record::FieldRead));
    for (i, r) in recs.iter().enumerate() {
        serde_json::to_writer(&mut out, r).map_err(|e| TraceIoError::Json { line: i + 2, source: e })?;
        writeln!(out)?;
    }
    Ok(())
}

/// Parses a JSON-lines trace.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Trace, TraceIoError> {
    let mut trace: Option<Trace> = None;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| TraceIoError::Json { line: lineno, source: e })?;
        if let Record::Header { schema, key_min, key_max, roots, initial, mutations } = rec {
            trace = Some(Trace::new(TraceHeader { schema, key_min, key_max, roots, initial, mutations }));
            continue;
        }
        let tr = trace.as_mut().ok_or(TraceIoError::MissingHeader(lineno))?;
        match rec {
            Record::Header { .. } => unreachable!(),
            Record::Write { t, seq, th, op, loc, val, label, ghost } => tr.writes.push(WriteEvent {
                t,
                seq,
                thread: th,
                op,
                loc,
                value: val,
                label,
                ghost,
            }),
            Record::Read { seq, th, op, loc, src, val } => tr.reads.push(ReadEvent {
                seq,
                thread: th,
                op,
                loc,
                src_t: src,
                value: val,
            }),
            Record::Inv { seq, th, op, t, call } => tr.ops.push(OpRecord {
                op,
                thread: th,
                call,
                inv_seq: seq,
                inv_t: t,
                ret: None,
                res_seq: None,
                res_t: None,
            }),
            Record::Res { seq, op, t, ret, .. } => {
                let o = tr
                    .ops
                    .iter_mut()
                    .rev()
                    .find(|o| o.op == op)
                    .ok_or(TraceIoError::UnknownOp { line: lineno, op })?;
                o.ret = Some(ret);
                o.res_seq = Some(seq);
                o.res_t = Some(t);
            }
            Record::RcuEnter { seq, th, op, t } => tr.rcu.push(RcuEvent { seq, thread: th, op, kind: RcuKind::Enter, t }),
            Record::RcuExit { seq, th, op, t } => tr.rcu.push(RcuEvent { seq, thread: th, op, kind: RcuKind::Exit, t }),
            Record::SyncBegin { seq, th, op, t } => tr.rcu.push(RcuEvent { seq, thread: th, op, kind: RcuKind::SyncBegin, t }),
            Record::SyncEnd { seq, th, op, t } => tr.rcu.push(RcuEvent { seq, thread: th, op, kind: RcuKind::SyncEnd, t }),
            Record::Trav(t) => tr.traversals.push(t),
            Record::FieldRead(f) => tr.field_reads.push(f),
        }
    }
    let mut tr = trace.ok_or(TraceIoError::Empty)?;
    tr.writes.sort_by_key(|w| w.t);
    tr.resync_seq();
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Field, KeyVal};

    #[test]
    fn roundtrip_preserves_every_event() {
        let mut init = State::default();
        init.set(Loc::new(ObjId(0), Field::Key), Value::Key(KeyVal::NegInf));
        let mut tr = Trace::new(TraceHeader {
            schema: Structure::Citrus,
            key_min: 1,
            key_max: 4,
            roots: [("root".to_string(), ObjId(0))].into_iter().collect(),
            initial: init.clone(),
            mutations: vec!["no-grace-period".into()],
        });
        tr.record_inv(0, 0, OpCall::insert_data(2, 20));
        tr.record_rcu(0, 0, RcuKind::Enter);
        tr.record_read(0, 0, Loc::new(ObjId(0), Field::Key), &init);
        tr.record_write(
            0,
            0,
            Loc::new(ObjId(0), Field::Left),
            Value::Link(ObjId(1)),
            "insert:link-left",
            vec![(Loc::new(ObjId(1), Field::GhostKey), Value::Key(KeyVal::Fin(1)))],
        )
        .unwrap();
        tr.record_res(0, Ret::Bool(true));
        let mut buf = Vec::new();
        write_jsonl(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains(r#""ev":"header""#));
        assert!(text.contains(r#""ev":"w""#) && text.contains(r#""src":0"#));
        let back = read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn record_before_header_is_rejected() {
        let line = r#"{"ev":"rcu_enter","seq":0,"th":0,"op":0,"t":0}"#;
        assert!(matches!(read_jsonl(line.as_bytes()), Err(TraceIoError::MissingHeader(1))));
    }
}
