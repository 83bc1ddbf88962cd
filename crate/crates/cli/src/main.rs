//! `traverse-lab`: explore, stress and check traces of the instrumented
//! structures.
//!
//! Exit codes: 0 when every check holds, 2 on a violation, 1 on usage or
//! trace faults.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use traverse_lab::explore::{run_free, Bounds, Workload, SCENARIOS};
use traverse_lab::lin;
use traverse_lab::runtime::Mutation;
use traverse_lab::suite::{
    self, mutation_workload, run_battery, run_scenario, run_stress_check, sweep_workloads, BatteryOptions, SweepItem,
    SweepReport, Tally,
};
use traverse_lab::trace::{read_jsonl, write_jsonl};
use traverse_lab::{checker::TraceIndex, Structure};

#[derive(Parser)]
#[command(name = "traverse-lab", version, about = "Trace checker for optimistic traversals")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args)]
struct Common {
    /// Key domain, inclusive.
    #[arg(long, default_value = "1..4", value_parser = parse_keys)]
    keys: (i64, i64),
    /// Fault injection (repeatable).
    #[arg(long = "mutate", value_parser = parse_mutation)]
    mutate: Vec<Mutation>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for JSON reports and counterexample traces.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exhaustive schedule exploration with the full checker battery.
    Explore {
        #[arg(long, value_parser = parse_structure)]
        structure: Option<Structure>,
        /// Workload JSON file (overrides the generated family).
        #[arg(long)]
        workload: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        threads: usize,
        #[arg(long, default_value_t = 2)]
        ops: usize,
        /// Number of generated workloads.
        #[arg(long, default_value_t = 6)]
        workloads: usize,
        /// Use the fixed acceptance family (bounds per workload shape).
        #[arg(long)]
        family: bool,
        /// Preemption bound; unbounded when omitted with --all-schedules.
        #[arg(long)]
        preemptions: Option<u32>,
        #[arg(long)]
        all_schedules: bool,
        #[arg(long, default_value_t = 1_000_000)]
        max_traces: u64,
        #[command(flatten)]
        common: Common,
    },
    /// One random-schedule run with effect-point checking.
    Stress {
        #[arg(long, value_parser = parse_structure)]
        structure: Structure,
        #[arg(long, default_value_t = 4)]
        threads: usize,
        #[arg(long, default_value_t = 200)]
        ops: usize,
        /// Run on OS threads instead of the deterministic scheduler.
        #[arg(long)]
        free: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Check a recorded JSON-lines trace.
    Check {
        trace: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a scripted interference scenario and its expected verdicts.
    Scenario {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(SCENARIOS))]
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_keys(s: &str) -> Result<(i64, i64), String> {
    let (a, b) = s.split_once("..").ok_or("expected A..B")?;
    let a: i64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let b: i64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if a > b {
        return Err(format!("empty range {s}"));
    }
    Ok((a, b))
}

fn parse_structure(s: &str) -> Result<Structure, String> {
    Structure::from_name(s).ok_or_else(|| {
        let names: Vec<_> = Structure::ALL.iter().map(|s| s.name()).collect();
        format!("unknown structure {s} (one of {})", names.join(", "))
    })
}

fn parse_mutation(s: &str) -> Result<Mutation, String> {
    Mutation::from_name(s).ok_or_else(|| {
        let names: Vec<_> = Mutation::ALL.iter().map(|m| m.name()).collect();
        format!("unknown mutation {s} (one of {})", names.join(", "))
    })
}

enum Fault {
    Usage(String),
    Violation,
}

impl From<String> for Fault {
    fn from(s: String) -> Self {
        Fault::Usage(s)
    }
}

fn main() -> ExitCode {
    // exit code 2 is reserved for violations
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let r = match cli.cmd {
        Cmd::Explore { structure, workload, threads, ops, workloads, family, preemptions, all_schedules, max_traces, common } => {
            let shape = Shape { threads, ops, count: workloads, family, preemptions, all_schedules, max_traces };
            explore(structure, workload, shape, &common)
        }
        Cmd::Stress { structure, threads, ops, free, common } => stress(structure, threads, ops, free, &common),
        Cmd::Check { trace, common } => check(&trace, &common),
        Cmd::Scenario { name, common } => scenario(&name, &common),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fault::Violation) => ExitCode::from(2),
        Err(Fault::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn write_out(dir: &Option<PathBuf>, name: &str, value: &impl Serialize) -> Result<(), String> {
    let Some(dir) = dir else { return Ok(()) };
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn tally_table(tallies: &std::collections::BTreeMap<String, Tally>) {
    println!("{:<28} {:>10} {:>10} {:>10}", "check", "ok", "violation", "premise");
    for (f, t) in tallies {
        let note = if suite::is_expected_violation(f) { "  (expected)" } else { "" };
        println!("{f:<28} {:>10} {:>10} {:>10}{note}", t.ok, t.violation, t.premise);
    }
}

struct Shape {
    threads: usize,
    ops: usize,
    count: usize,
    family: bool,
    preemptions: Option<u32>,
    all_schedules: bool,
    max_traces: u64,
}

fn explore(structure: Option<Structure>, workload: Option<PathBuf>, sh: Shape, c: &Common) -> Result<(), Fault> {
    let Shape { threads, ops, count, family, preemptions, all_schedules, max_traces } = sh;
    let bound = if all_schedules { None } else { Some(preemptions.unwrap_or(if threads > 2 { 1 } else { 2 })) };
    let bounds = Bounds { preemptions: bound, max_traces, ..Bounds::default() };
    let mut items: Vec<SweepItem> = Vec::new();
    if let Some(path) = workload {
        let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut w: Workload = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        w.mutations.extend(c.mutate.iter().copied());
        w.validate()?;
        items.push(SweepItem { workload: w, bounds });
    } else {
        let s = structure.ok_or_else(|| "--structure or --workload is required".to_string())?;
        for &m in &c.mutate {
            if m.structure() != s {
                return Err(format!("mutation {} applies to {}", m.name(), m.structure()).into());
            }
            let mut item = mutation_workload(m);
            item.workload.mutations = c.mutate.clone();
            item.bounds.max_traces = max_traces;
            items.push(item);
        }
        if family {
            for mut item in sweep_workloads(s, count) {
                item.workload.mutations = c.mutate.clone();
                item.bounds.max_traces = max_traces;
                items.push(item);
            }
        }
        for i in (0..count).filter(|_| !family) {
            let mut w = traverse_lab::explore::random_workload(s, threads, ops, c.keys, c.seed.wrapping_add(i as u64));
            w.mutations = c.mutate.clone();
            items.push(SweepItem { workload: w, bounds });
        }
    }
    for it in &items {
        it.workload.validate()?;
    }
    let rep = suite::run_sweep(&items, &BatteryOptions::default())?;
    write_out(&c.out, "verdicts.json", &rep)?;
    if let Some(dir) = &c.out {
        write_counterexample(dir, &items, &rep)?;
    }
    match c.format {
        Format::Json => print_json(&rep),
        Format::Table => explore_table(&rep),
    }
    if rep.violations() > 0 {
        Err(Fault::Violation)
    } else {
        Ok(())
    }
}

fn explore_table(rep: &SweepReport) {
    println!(
        "{} workloads, {} traces ({} livelock-pruned, {} deadlocks{}) in {} ms",
        rep.workloads,
        rep.traces,
        rep.livelock_pruned,
        rep.deadlocks,
        if rep.truncated { ", truncated at --max-traces" } else { "" },
        rep.millis
    );
    tally_table(&rep.tallies);
    println!("decisive writes: {}", rep.decisive.iter().cloned().collect::<Vec<_>>().join(", "));
    for f in rep.findings.iter().filter(|f| !suite::is_expected_violation(&f.family)).take(10) {
        println!("[workload {} trace {}] {}", f.workload, f.execution, f.verdict.describe());
    }
}

/// Re-runs the first violating schedule and saves its trace.
fn write_counterexample(dir: &Path, items: &[SweepItem], rep: &SweepReport) -> Result<(), String> {
    let Some(f) = rep.findings.iter().find(|f| f.verdict.is_violation() && !suite::is_expected_violation(&f.family))
    else {
        return Ok(());
    };
    let item = &items[f.workload];
    let mut found = None;
    traverse_lab::explore::run_exhaustive(&item.workload, &item.bounds, |e| {
        if e.index == f.execution {
            found = Some(e.trace);
            return std::ops::ControlFlow::Break(());
        }
        std::ops::ControlFlow::Continue(())
    })?;
    let Some(trace) = found else { return Ok(()) };
    let path = dir.join("counterexample.jsonl");
    let file = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    write_jsonl(&trace, file).map_err(|e| e.to_string())
}

fn stress(s: Structure, threads: usize, ops: usize, free: bool, c: &Common) -> Result<(), Fault> {
    if free {
        let mut w = traverse_lab::explore::random_workload(s, threads, ops, c.keys, c.seed);
        w.mutations = c.mutate.clone();
        let trace = run_free(&w, c.seed, 20)?.map_err(|a| format!("aborted: {a:?}"))?;
        let ix = TraceIndex::new(&trace);
        let eff = lin::check_effect_points(&ix, &lin::abstract_series(&ix));
        write_out(&c.out, "stress.json", &eff)?;
        match c.format {
            Format::Json => print_json(&eff),
            Format::Table => println!("{} ops on OS threads: {}", w.op_count(), eff.verdict.describe()),
        }
        return if eff.verdict.is_ok() { Ok(()) } else { Err(Fault::Violation) };
    }
    let rep = run_stress_check(s, threads, ops, c.keys, c.seed, &c.mutate)?;
    write_out(&c.out, "stress.json", &rep)?;
    match c.format {
        Format::Json => print_json(&rep),
        Format::Table => println!(
            "{}: {} ops, {} completed, {} transitions, {} ms: {}",
            s,
            rep.ops,
            rep.completed,
            rep.transitions,
            rep.millis,
            rep.effect_points.describe()
        ),
    }
    if rep.effect_points.is_ok() {
        Ok(())
    } else {
        Err(Fault::Violation)
    }
}

fn check(path: &Path, c: &Common) -> Result<(), Fault> {
    let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let trace = read_jsonl(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))?;
    let checks = run_battery(&trace, &BatteryOptions::default());
    write_out(&c.out, "verdicts.json", &checks)?;
    match c.format {
        Format::Json => print_json(&checks),
        Format::Table => {
            tally_table(&checks.tallies);
            for (f, v) in checks.findings.iter().filter(|(f, _)| !suite::is_expected_violation(f)) {
                println!("[{f}] {}", v.describe());
            }
        }
    }
    if checks.violations() > 0 {
        Err(Fault::Violation)
    } else {
        Ok(())
    }
}

fn scenario(name: &str, c: &Common) -> Result<(), Fault> {
    let rep = run_scenario(name)?;
    write_out(&c.out, "scenario.json", &rep)?;
    if let (Some(dir), Some(trace)) = (&c.out, &rep.trace) {
        let path = dir.join(format!("{name}.jsonl"));
        let file = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        write_jsonl(trace, file).map_err(|e| e.to_string())?;
    }
    match c.format {
        Format::Json => print_json(&rep),
        Format::Table => {
            for e in &rep.expectations {
                let want = if e.expect_ok { "OK" } else { "violation" };
                let mark = if e.met { "as expected" } else { "UNEXPECTED" };
                println!("{:<44} expect {want:<9} {mark}: {}", e.what, e.verdict.describe());
            }
        }
    }
    if rep.all_met() {
        Ok(())
    } else {
        Err(Fault::Violation)
    }
}
