//! Browser demo for the solver. Each operation takes plain values and
//! returns a JSON string so the page needs no bindings beyond strings.
//!
//! Wall time is not available on `wasm32-unknown-unknown`, so budgets here
//! run on a logical clock: one tick per clock reading.

use std::time::Duration;

use serde_json::{json, Value};

use mqap::clock::LogicalClock;
use mqap::evaluation::Solution;
use mqap::experiment::{cmd_enumerate, sort_front};
use mqap::genetics::{crossover_cycles, cycle_crossover};
use mqap::instance::{generate_uniform, InstanceSpec};
use mqap::island::{build_topology, run_island, Algorithm, IslandConfig, TopologyKind, wire_mailboxes};
use mqap::localsearch::LocalSearchParams;
use mqap::metrics::{hypervolume, non_dominated_points, normalized_hypervolumes, Front, DEFAULT_REFERENCE_OFFSET};

/// Largest instance the page solves exactly alongside the heuristics.
pub const EXACT_MAX_N: usize = 8;
pub const SOLVE_MAX_N: usize = 40;

fn points(front: &[Solution]) -> Value {
    front.iter().map(|s| json!(s.objectives.values())).collect()
}

fn run_one(algorithm: Algorithm, inst: &mqap::instance::Instance, seed: u64, generations: usize) -> Result<Vec<Solution>, String> {
    let config = IslandConfig {
        algorithm,
        seed,
        generations,
        population_size: 20,
        time_budget: None,
        local_search: LocalSearchParams {
            t_max: Duration::from_millis(2),
        },
        ..IslandConfig::default()
    };
    let mailbox = wire_mailboxes(&build_topology(TopologyKind::Complete, 1)).remove(0);
    let clock = LogicalClock::new(Duration::from_micros(1));
    let outcome = run_island(&config, inst, &mailbox, &clock).map_err(|e| e.to_string())?;
    let mut front = outcome.archive.into_members();
    sort_front(&mut front);
    Ok(front)
}

/// Generates a two-objective instance, runs the memetic island and the
/// NSGA-II island on it, and for small `n` adds the exact front.
pub fn solve_json(n: usize, correlation: f64, seed: u64, generations: usize) -> Result<String, String> {
    if !(2..=SOLVE_MAX_N).contains(&n) {
        return Err(format!("n must be between 2 and {SOLVE_MAX_N}"));
    }
    let inst = generate_uniform(&InstanceSpec::new(n, 2, correlation, seed)).map_err(|e| e.to_string())?;
    let memetic = run_one(Algorithm::Memetic, &inst, seed, generations)?;
    let nsga2 = run_one(Algorithm::Nsga2, &inst, seed, generations)?;
    let exact = if n <= EXACT_MAX_N {
        Some(cmd_enumerate(&inst).map_err(|e| e.to_string())?)
    } else {
        None
    };

    let mut fronts = vec![Front::from_solutions(&memetic), Front::from_solutions(&nsga2)];
    if let Some(e) = &exact {
        fronts.push(Front::from_solutions(e));
    }
    let hv = normalized_hypervolumes(&fronts, DEFAULT_REFERENCE_OFFSET).map_err(|e| e.to_string())?;
    Ok(json!({
        "n": n,
        "memetic": { "front": points(&memetic), "hv": hv[0] },
        "nsga2": { "front": points(&nsga2), "hv": hv[1] },
        "exact": exact.as_ref().map(|e| json!({ "front": points(e), "hv": hv[2] })),
    })
    .to_string())
}

fn parse_perm(text: &str) -> Result<Vec<usize>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|_| format!("not a position: {t:?}")))
        .collect()
}

/// Cycle crossover of two permutations given as comma or space separated lists.
pub fn crossover_json(p1: &str, p2: &str) -> Result<String, String> {
    let (a, b) = (parse_perm(p1)?, parse_perm(p2)?);
    let (c1, c2) = cycle_crossover(&a, &b).map_err(|e| e.to_string())?;
    let cycles = crossover_cycles(&a, &b).map_err(|e| e.to_string())?;
    Ok(json!({ "child1": c1, "child2": c2, "cycles": cycles }).to_string())
}

/// Hypervolume of points in the unit square against `(1, 1)`, with a flag
/// per input point telling whether it is non-dominated.
pub fn hypervolume_json(points_json: &str) -> Result<String, String> {
    let pts: Vec<[f64; 2]> = serde_json::from_str(points_json).map_err(|e| e.to_string())?;
    let pts: Vec<Vec<f64>> = pts.iter().map(|p| p.to_vec()).collect();
    let front = non_dominated_points(&pts);
    let flags: Vec<bool> = pts.iter().map(|p| front.contains(p)).collect();
    let hv = hypervolume(&pts, &[1.0, 1.0]).map_err(|e| e.to_string())?;
    Ok(json!({ "hypervolume": hv, "nondominated": flags }).to_string())
}

#[cfg(target_arch = "wasm32")]
mod bindings {
    use wasm_bindgen::prelude::*;

    #[wasm_bindgen]
    pub fn solve(n: usize, correlation: f64, seed: u32, generations: usize) -> Result<String, JsError> {
        super::solve_json(n, correlation, seed as u64, generations).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen]
    pub fn crossover(p1: &str, p2: &str) -> Result<String, JsError> {
        super::crossover_json(p1, p2).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen]
    pub fn hypervolume(points: &str) -> Result<String, JsError> {
        super::hypervolume_json(points).map_err(|e| JsError::new(&e))
    }
}
