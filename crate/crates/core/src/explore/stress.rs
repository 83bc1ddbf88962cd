//! Random workloads and randomly scheduled executions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Prepared, Workload};
use crate::runtime::exec::{Outcome, RandomChooser};
use crate::runtime::Abort;
use crate::trace::{OpCall, Structure, Trace};

/// `threads × ops` random set/map operations, plus roughly one
/// maintenance call in ten for the trees that have them.
pub fn random_workload(structure: Structure, threads: usize, ops: usize, keys: (i64, i64), seed: u64) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let maintenance = matches!(structure, Structure::LoTree | Structure::CfTree);
    let lists = (0..threads)
        .map(|_| {
            (0..ops)
                .map(|_| {
                    let k = rng.gen_range(keys.0..=keys.1);
                    match rng.gen_range(0..10) {
                        0 if maintenance => {
                            if structure == Structure::CfTree && rng.gen_bool(0.5) {
                                OpCall::remove_right(k)
                            } else {
                                OpCall::rotate(k)
                            }
                        }
                        0..=3 => OpCall::contains(k),
                        4..=6 if structure == Structure::Citrus => OpCall::insert_data(k, rng.gen_range(0..1000)),
                        4..=6 => OpCall::insert(k),
                        _ => OpCall::delete(k),
                    }
                })
                .collect()
        })
        .collect();
    let mut w = Workload::new(structure, lists);
    w.keys = keys;
    w
}

/// One execution under a seeded uniformly random scheduler. Deterministic
/// in `(workload, seed)`.
pub fn run_stress(w: &Workload, seed: u64, restart_bound: u32) -> Result<(Outcome, Trace), String> {
    let p = Prepared::new(w)?;
    Ok(p.execute(&mut RandomChooser::new(seed), restart_bound))
}

/// One execution on real threads with random yields (not reproducible).
pub fn run_free(w: &Workload, seed: u64, yield_pct: u32) -> Result<Result<Trace, Abort>, String> {
    let p = Prepared::new(w)?;
    Ok(p.execute_free(seed, yield_pct))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_workloads_are_seeded() {
        let a = random_workload(Structure::CfTree, 3, 20, (1, 8), 7);
        let b = random_workload(Structure::CfTree, 3, 20, (1, 8), 7);
        assert_eq!(a, b);
        assert!(a.validate().is_ok());
        assert_ne!(a, random_workload(Structure::CfTree, 3, 20, (1, 8), 8));
    }

    #[test]
    fn replay_stress_is_deterministic() {
        let w = random_workload(Structure::LazyList, 3, 10, (1, 4), 1);
        let (o1, t1) = run_stress(&w, 5, 1000).unwrap();
        let (o2, t2) = run_stress(&w, 5, 1000).unwrap();
        assert_eq!(o1, Outcome::Done);
        assert_eq!((o1, t1), (o2, t2));
    }

    #[test]
    fn free_running_completes() {
        for s in Structure::ALL {
            let w = random_workload(s, 3, 15, (1, 6), 3);
            let t = run_free(&w, 9, 20).unwrap().unwrap();
            assert_eq!(t.ops.len(), 45);
            assert!(t.ops.iter().all(|o| o.ret.is_some()));
        }
    }
}
