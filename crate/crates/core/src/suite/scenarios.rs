//! Expected verdicts for the scripted scenarios.

use serde::Serialize;

use crate::checker::{self, Pred, TraceIndex, Verdict};
use crate::explore::{run_script, scenario};
use crate::reach::{ExtendRel, ReachPred, Target};
use crate::trace::{Base, Ret, Trace};

use super::{run_battery, BatteryOptions};

/// One expectation: the verdict and whether it came out as expected.
#[derive(Clone, Debug, Serialize)]
pub struct Expectation {
    pub what: String,
    pub expect_ok: bool,
    pub verdict: Verdict,
    pub met: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub expectations: Vec<Expectation>,
    #[serde(skip)]
    pub trace: Option<Trace>,
}

impl ScenarioReport {
    pub fn all_met(&self) -> bool {
        self.expectations.iter().all(|e| e.met)
    }
}

fn expect(what: &str, expect_ok: bool, verdict: Verdict) -> Expectation {
    let met = if expect_ok { verdict.is_ok() } else { verdict.is_violation() };
    Expectation { what: what.into(), expect_ok, verdict, met }
}

fn ret_is(trace: &Trace, thread: u32, ret: Ret) -> Verdict {
    let name = format!("thread {thread} returns {ret}");
    match trace.ops.iter().find(|o| o.thread == thread) {
        Some(o) if o.ret == Some(ret) => Verdict::ok(name),
        o => Verdict::violation(
            name,
            checker::Violation {
                t: None,
                loc: None,
                key: o.map(|o| o.call.key),
                later_t: None,
                chain: format!("returned {}", o.and_then(|o| o.ret).map_or("nothing".into(), |r| r.to_string())),
            },
        ),
    }
}

fn battery_clean(trace: &Trace) -> Verdict {
    let c = run_battery(trace, &BatteryOptions::default());
    match c.findings.iter().find(|(f, v)| v.is_violation() && !super::is_expected_violation(f)) {
        None => Verdict::ok("battery"),
        Some((_, v)) => v.clone(),
    }
}

/// Runs a scenario and evaluates its expected verdicts.
pub fn run_scenario(name: &str) -> Result<ScenarioReport, String> {
    let s = scenario(name).ok_or_else(|| format!("unknown scenario {name}"))?;
    let (_, trace) = run_script(&s.workload, &s.script, 8)?;
    let ix = TraceIndex::new(&trace);
    let span = (0, ix.end());
    let mut ex = Vec::new();
    match s.name {
        "lo-rotation-recovery" => {
            ex.push(expect("contains(1) finds 1 after the rotation", true, ret_is(&trace, 0, Ret::Bool(true))));
            let pred_walk = trace
                .traversals
                .iter()
                .filter(|r| r.thread == 0)
                .any(|r| r.steps.iter().any(|st| st.loc.field == crate::trace::Field::Pred));
            let v = if pred_walk {
                Verdict::ok("recovery along pred links")
            } else {
                Verdict::violation(
                    "recovery along pred links",
                    checker::Violation { t: None, loc: None, key: Some(1), later_t: None, chain: "no pred step".into() },
                )
            };
            ex.push(expect("the lookup follows pred links", true, v));
            ex.push(expect("full battery", true, battery_clean(&trace)));
        }
        "cf-backtrack" => {
            let p = Pred::plain(ReachPred::BstK(Target::Exact(3)));
            let ext = ExtendRel::Bst(Target::Exact(3));
            ex.push(expect("contains(3) finds 3", true, ret_is(&trace, 0, Ret::Bool(true))));
            ex.push(expect("strong forepassed under bst_k(3)", false, checker::check_strong_forepassed(&ix, p, span)));
            ex.push(expect("forepassed under bst_k(3)", true, checker::check_forepassed(&ix, p, ext, span)));
            ex.push(expect("full battery", true, battery_clean(&trace)));
        }
        "citrus-weakreach" => {
            let tr = trace
                .traversals
                .iter()
                .find(|r| r.thread == 0 && r.site == "citrus:locate")
                .ok_or("no lookup traversal")?;
            let Base::At(s0) = tr.base else { return Err("lookup base is not fixed".into()) };
            let span = (s0, tr.last_t());
            let ext = ExtendRel::Bst(Target::Exact(3));
            let strong = Pred::plain(ReachPred::BstK(Target::Exact(3)));
            let weak = Pred::viewed(ReachPred::WeakK(3), s0);
            ex.push(expect("contains(3) finds 3", true, ret_is(&trace, 0, Ret::Data(Some(3)))));
            ex.push(expect("forepassed under bst_k(3)", false, checker::check_forepassed(&ix, strong, ext, span)));
            ex.push(expect("traversal under bst_k(3)", false, checker::check_traversal_correct(&ix, tr, strong)));
            ex.push(expect("forepassed under weak_k(3)", true, checker::check_forepassed(&ix, weak, ext, span)));
            ex.push(expect("traversal under weak_k(3)", true, checker::check_traversal_correct(&ix, tr, weak)));
            ex.push(expect("full battery", true, battery_clean(&trace)));
        }
        _ => unreachable!(),
    }
    Ok(ScenarioReport { name: s.name.into(), expectations: ex, trace: Some(trace) })
}
