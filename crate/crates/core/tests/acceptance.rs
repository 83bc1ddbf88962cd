//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run alone with `cargo test -p traverse-lab --test acceptance`.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use traverse_lab::reach::reach_set;
use traverse_lab::runtime::Mutation;
use traverse_lab::suite::{
    mutation_workload, run_scenario, run_stress_check, run_sweep, sweep_workloads, BatteryOptions, SweepReport,
};
use traverse_lab::trace::GhostInterval;
use traverse_lab::{Field, GhostView, KeyVal, Loc, ObjId, ReachPred, Shape, State, Structure, Target, Value};

/// Workloads per structure in the exhaustive sweep.
const SWEEP_WORKLOADS: usize = 40;
const SWEEP_BUDGET: Duration = Duration::from_secs(600);
const MUTATION_BUDGET: Duration = Duration::from_secs(300);
const STRESS_BUDGET: Duration = Duration::from_secs(120);
const ORACLE_STATES: usize = 500;
const ORACLE_MAX_NODES: u32 = 12;

struct Line {
    id: u32,
    pass: bool,
    what: String,
}

fn zero(r: &SweepReport, families: &[&str]) -> Result<(), String> {
    for f in families {
        let t = r.tally(f);
        if t.violation > 0 {
            return Err(format!("{}: {f} has {} violations", r.structure.unwrap(), t.violation));
        }
    }
    Ok(())
}

fn nonempty(r: &SweepReport, families: &[&str]) -> Result<(), String> {
    for f in families {
        if r.tally(f).ok == 0 {
            return Err(format!("{}: {f} was never checked", r.structure.unwrap()));
        }
    }
    Ok(())
}

fn all(checks: impl IntoIterator<Item = Result<(), String>>) -> Result<(), String> {
    checks.into_iter().collect::<Result<Vec<()>, String>>().map(|_| ())
}

fn line(id: u32, res: Result<String, String>) -> Line {
    match res {
        Ok(what) => Line { id, pass: true, what },
        Err(what) => Line { id, pass: false, what },
    }
}

fn criterion_1(sweeps: &[SweepReport]) -> Result<String, String> {
    let mut traces = 0;
    let mut slowest = 0;
    for r in sweeps {
        let s = r.structure.unwrap();
        if r.truncated {
            return Err(format!("{s}: sweep hit the trace cap"));
        }
        if r.millis > SWEEP_BUDGET.as_millis() {
            return Err(format!("{s}: sweep took {} ms", r.millis));
        }
        let fams = ["validate-trace", "effect-points", "traversal", "linearizable"];
        all([zero(r, &fams), nonempty(r, &fams)])?;
        if r.violations() > 0 {
            return Err(format!("{s}: {} violations in the full battery", r.violations()));
        }
        traces += r.traces;
        slowest = slowest.max(r.millis);
    }
    Ok(format!("{traces} traces over 4 structures, zero violations, slowest sweep {slowest} ms"))
}

fn criterion_2(sweeps: &[SweepReport]) -> Result<String, String> {
    let mut inferred = 0;
    for r in sweeps {
        let fams = ["infer-soundness", "premises", "compat", "forepassed", "base-witness", "points-to-reachable"];
        let checked: &[&str] = match r.structure.unwrap() {
            Structure::Citrus => &["infer-soundness", "premises", "weak-compat", "weak-forepassed"],
            Structure::LoTree => &["infer-soundness", "premises", "compat", "forepassed", "base-witness"],
            _ => &["infer-soundness", "premises", "compat", "forepassed"],
        };
        all([zero(r, &fams), zero(r, checked), nonempty(r, checked)])?;
        let p = r.tally("premises");
        if p.premise > 0 {
            return Err(format!("{}: {} traversals where the premises fail", r.structure.unwrap(), p.premise));
        }
        inferred += r.tally("infer-soundness").ok;
    }
    Ok(format!("{inferred} inferred verdicts agree with direct checks; premises hold everywhere"))
}

fn criterion_3(sweeps: &[SweepReport]) -> Result<String, String> {
    let by = |s| sweeps.iter().find(|r| r.structure == Some(s)).unwrap();
    let cf = by(Structure::CfTree);
    let strong = cf.tally("strong-forepassed-cf");
    if strong.violation == 0 {
        return Err("cftree: strong forepassed never fails".into());
    }
    all([
        zero(cf, &["strong-at-backtrack", "forepassed", "backtrack-breaks-strong", "rotation-reductions"]),
        nonempty(cf, &["strong-at-backtrack", "backtrack-breaks-strong"]),
    ])?;
    for s in [Structure::LazyList, Structure::LoTree] {
        let r = by(s);
        all([zero(r, &["strong-forepassed", "reducing-labels"]), nonempty(r, &["strong-forepassed"])])?;
    }
    Ok(format!(
        "cftree: {} strong-forepassed violations, all at backtrack writes, forepassed OK; lists strong OK",
        strong.violation
    ))
}

fn criterion_4(sweeps: &[SweepReport]) -> Result<String, String> {
    let rep = run_scenario("citrus-weakreach")?;
    if let Some(e) = rep.expectations.iter().find(|e| !e.met) {
        return Err(format!("citrus-weakreach: {} came out {}", e.what, e.verdict.describe()));
    }
    let citrus = sweeps.iter().find(|r| r.structure == Some(Structure::Citrus)).unwrap();
    let fams = ["citrus-ghost-subtree", "citrus-single-deviation", "citrus-tag-lemma", "rcu-grace"];
    all([zero(citrus, &fams), nonempty(citrus, &fams)])?;
    Ok(format!(
        "scenario: {} expectations met; lemmas hold on {} citrus traces",
        rep.expectations.len(),
        citrus.traces
    ))
}

fn criterion_5() -> Result<String, String> {
    let cases: [(Mutation, &[&str]); 3] = [
        (Mutation::OrigInsertOrder, &["effect-points"]),
        (Mutation::SkipMark, &["forepassed"]),
        (Mutation::NoGracePeriod, &["weak-forepassed", "traversal"]),
    ];
    let mut out = Vec::new();
    for (m, fams) in cases {
        let r = run_sweep(&[mutation_workload(m)], &BatteryOptions::default())?;
        if r.millis > MUTATION_BUDGET.as_millis() {
            return Err(format!("{}: took {} ms", m.name(), r.millis));
        }
        let hits: u64 = fams.iter().map(|f| r.tally(f).violation).sum();
        if hits == 0 {
            return Err(format!("{}: no violation of {}", m.name(), fams.join(" or ")));
        }
        out.push(format!("{} {hits}", m.name()));
    }
    Ok(format!("violations caught: {}", out.join(", ")))
}

// Brute-force reachability oracle: enumerate simple paths of locations from
// the start location, with the step rules written out independently.

fn step(st: &State, s: Structure, pred: ReachPred, ghosts: &[(ObjId, KeyVal)], l: Loc) -> Vec<Loc> {
    let v = st.val(l);
    if l.field != Field::Key {
        let follows = match pred {
            ReachPred::Succ | ReachPred::SuccK(_) => l.field == Field::Succ,
            _ => matches!(l.field, Field::Left | Field::Right),
        };
        return match v {
            Value::Link(o) if follows => vec![Loc::new(o, Field::Key)],
            _ => vec![],
        };
    }
    let Value::Key(m) = v else { return vec![] };
    let right = Loc::new(l.obj, Field::Right);
    let left = Loc::new(l.obj, Field::Left);
    match pred {
        ReachPred::Succ => vec![Loc::new(l.obj, Field::Succ)],
        ReachPred::SuccK(k) if m < KeyVal::Fin(k) => vec![Loc::new(l.obj, Field::Succ)],
        ReachPred::SuccK(_) => vec![],
        ReachPred::BstK(Target::Exact(k)) => match m.cmp(&KeyVal::Fin(k)) {
            std::cmp::Ordering::Less => vec![right],
            std::cmp::Ordering::Greater => vec![left],
            std::cmp::Ordering::Equal => vec![],
        },
        ReachPred::BstK(Target::Above(k)) => {
            if m <= KeyVal::Fin(k) {
                vec![right]
            } else {
                vec![left]
            }
        }
        ReachPred::WeakK(k) => {
            assert_eq!(s, Structure::Citrus);
            let g = ghosts.iter().find(|(o, _)| *o == l.obj).map_or(m, |&(_, g)| g);
            let k = KeyVal::Fin(k);
            let mut out = vec![];
            if (k > g && k != m) || (k == m && g != m) {
                out.push(right);
            }
            if k < m {
                out.push(left);
            }
            out
        }
    }
}

fn oracle(st: &State, s: Structure, start: ObjId, pred: ReachPred, ghosts: &[(ObjId, KeyVal)]) -> BTreeSet<Loc> {
    fn walk(
        st: &State,
        s: Structure,
        pred: ReachPred,
        ghosts: &[(ObjId, KeyVal)],
        path: &mut Vec<Loc>,
        found: &mut BTreeSet<Loc>,
    ) {
        let l = *path.last().unwrap();
        found.insert(l);
        for n in step(st, s, pred, ghosts, l) {
            if st.is_allocated(n.obj) && !path.contains(&n) {
                path.push(n);
                walk(st, s, pred, ghosts, path, found);
                path.pop();
            }
        }
    }
    let mut found = BTreeSet::new();
    let first = Loc::new(start, Field::Key);
    if st.is_allocated(start) {
        walk(st, s, pred, ghosts, &mut vec![first], &mut found);
    }
    if pred == ReachPred::Succ {
        let nodes: Vec<ObjId> = found.iter().filter(|l| l.field == Field::Key).map(|l| l.obj).collect();
        for o in nodes {
            for &f in s.fields() {
                found.insert(Loc::new(o, f));
            }
        }
    }
    found
}

fn random_key(rng: &mut ChaCha8Rng) -> KeyVal {
    match rng.gen_range(0..12) {
        0 => KeyVal::NegInf,
        1 => KeyVal::PosInf,
        _ => KeyVal::Fin(rng.gen_range(0..8)),
    }
}

fn random_state(s: Structure, rng: &mut ChaCha8Rng) -> (State, Shape) {
    let n = rng.gen_range(1..=ORACLE_MAX_NODES);
    let mut st = State::default();
    let link = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.25) {
            Value::Null
        } else {
            Value::Link(ObjId(rng.gen_range(0..n)))
        }
    };
    for o in 0..n {
        let o = ObjId(o);
        let key = if o.0 == 0 { KeyVal::NegInf } else { random_key(rng) };
        st.set(Loc::new(o, Field::Key), Value::Key(key));
        for &f in s.fields() {
            let v = match f {
                Field::Key | Field::GhostKey => continue,
                Field::Left | Field::Right | Field::Succ | Field::Pred | Field::Parent => link(rng),
                Field::Data | Field::Tag => Value::Int(rng.gen_range(0..4)),
                _ => Value::Bool(rng.gen_bool(0.3)),
            };
            st.set(Loc::new(o, f), v);
        }
    }
    let root = ObjId(rng.gen_range(0..n));
    let shape = Shape { schema: s, head: Some(ObjId(0)), root: Some(root) };
    (st, shape)
}

fn preds(s: Structure, k: i64) -> Vec<ReachPred> {
    match s {
        Structure::LazyList => vec![ReachPred::Succ, ReachPred::SuccK(k)],
        Structure::LoTree => vec![ReachPred::Succ, ReachPred::SuccK(k), ReachPred::BstK(Target::Exact(k))],
        Structure::CfTree => vec![ReachPred::BstK(Target::Exact(k)), ReachPred::BstK(Target::Above(k))],
        Structure::Citrus => {
            vec![ReachPred::BstK(Target::Exact(k)), ReachPred::BstK(Target::Above(k)), ReachPred::WeakK(k)]
        }
    }
}

fn criterion_6() -> Result<String, String> {
    let mut compared = 0usize;
    for s in Structure::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(0x04ac1e ^ s as u64);
        for i in 0..ORACLE_STATES {
            let (st, shape) = random_state(s, &mut rng);
            let objs = st.obj_bound() as u32;
            let ghosts: Vec<(ObjId, KeyVal)> = if s == Structure::Citrus {
                let picked: Vec<u32> = (0..objs).filter(|_| rng.gen_bool(0.3)).collect();
                picked.into_iter().map(|o| (ObjId(o), random_key(&mut rng))).collect()
            } else {
                vec![]
            };
            let intervals: Vec<GhostInterval> = ghosts
                .iter()
                .map(|&(obj, ghost)| GhostInterval { obj, open_t: 1, ghost, collapse_t: None })
                .collect();
            let view = GhostView::new(&intervals, 0, 1);
            for k in -1..=8 {
                for pred in preds(s, k) {
                    let start = match pred {
                        ReachPred::Succ | ReachPred::SuccK(_) => shape.head.unwrap(),
                        _ => shape.root.unwrap(),
                    };
                    let want = oracle(&st, s, start, pred, &ghosts);
                    let got: BTreeSet<Loc> = reach_set(&st, &shape, pred, &view).iter().collect();
                    if want != got {
                        return Err(format!(
                            "{s} state {i}, {}: evaluator {} locations, oracle {}",
                            pred.name(),
                            got.len(),
                            want.len()
                        ));
                    }
                    compared += 1;
                }
            }
        }
    }
    Ok(format!("{compared} evaluations on {} random states, 100% agreement", ORACLE_STATES * 4))
}

fn criterion_7(sweeps: &[SweepReport]) -> Result<String, String> {
    let mut reads = Vec::new();
    for s in [Structure::LoTree, Structure::CfTree] {
        let r = sweeps.iter().find(|r| r.structure == Some(s)).unwrap();
        let fams = ["field-witness", "field-extension"];
        all([zero(r, &fams), nonempty(r, &fams)])?;
        let ext = r.tally("field-extension");
        if ext.premise > 0 {
            return Err(format!("{s}: {} field reads without a reachable node", ext.premise));
        }
        reads.push(format!("{s} {}", r.tally("field-witness").ok));
    }
    Ok(format!("witness found for every field read ({})", reads.join(", ")))
}

fn criterion_8() -> Result<String, String> {
    let mut out = Vec::new();
    for s in Structure::ALL {
        let r = run_stress_check(s, 4, 200, (1, 16), 7, &[])?;
        if !r.effect_points.is_ok() {
            return Err(format!("{s}: {}", r.effect_points.describe()));
        }
        if r.completed != r.ops {
            return Err(format!("{s}: {} of {} ops completed ({})", r.completed, r.ops, r.outcome));
        }
        if r.millis > STRESS_BUDGET.as_millis() {
            return Err(format!("{s}: took {} ms", r.millis));
        }
        out.push(format!("{s} {} ms", r.millis));
    }
    Ok(format!("4x200 runs with effect points OK: {}", out.join(", ")))
}

fn main() {
    let start = Instant::now();
    let opts = BatteryOptions::default();
    let sweeps: Vec<SweepReport> = Structure::ALL
        .iter()
        .map(|&s| run_sweep(&sweep_workloads(s, SWEEP_WORKLOADS), &opts).expect("sweep runs"))
        .collect();
    let lines = [
        line(1, criterion_1(&sweeps)),
        line(2, criterion_2(&sweeps)),
        line(3, criterion_3(&sweeps)),
        line(4, criterion_4(&sweeps)),
        line(5, criterion_5()),
        line(6, criterion_6()),
        line(7, criterion_7(&sweeps)),
        line(8, criterion_8()),
    ];
    for l in &lines {
        println!("criterion {}: {} - {}", l.id, if l.pass { "PASS" } else { "FAIL" }, l.what);
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("acceptance: {}/{} passed in {:.1} s", lines.len() - failed, lines.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
