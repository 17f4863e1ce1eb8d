//! Dominance-based local search over the swap neighbourhood.
//!
//! Every archive member starts unvisited. Members are drawn uniformly from the
//! unvisited pool; the first swap (in lexicographic order) whose neighbour
//! Pareto-dominates the member is accepted and joins the pool unvisited. The
//! search ends when the pool is empty or the time budget is spent. The budget
//! is checked once per drawn member, so a single scan is never interrupted.

use std::collections::HashSet;
use std::time::Duration;

use rand::Rng;

use crate::archive::Archive;
use crate::clock::Clock;
use crate::evaluation::{delta_into, ObjectiveVector, Solution};
use crate::genetics::SearchRng;
use crate::instance::Instance;
use crate::ranking::{compare_objectives, Dominance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSearchParams {
    pub t_max: Duration,
}

impl Default for LocalSearchParams {
    fn default() -> Self {
        Self {
            t_max: Duration::from_secs(5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalSearchOutcome {
    pub population: Vec<Solution>,
    /// Neighbourhood scans started.
    pub scans: usize,
    /// Dominating neighbours accepted.
    pub improvements: usize,
    /// `(origin, neighbour)` index pairs into `population` for each newly added neighbour.
    pub links: Vec<(usize, usize)>,
    /// True when every solution was visited before the budget ran out.
    pub exhausted: bool,
}

/// Swap moves in scan order: (0,1), (0,2), ..., (0,n-1), (1,2), ..., (n-2,n-1).
pub fn ordered_swap_neighborhood(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// First dominating neighbour of `sol` in scan order, evaluated incrementally.
pub fn first_improving_neighbor(instance: &Instance, sol: &Solution) -> Option<Solution> {
    let mut delta = vec![0i64; instance.m()];
    let mut candidate = vec![0i64; instance.m()];
    let current = sol.objectives.values();
    for (i, j) in ordered_swap_neighborhood(instance.n()) {
        delta_into(instance, &sol.perm, i, j, &mut delta);
        for ((c, v), d) in candidate.iter_mut().zip(current).zip(&delta) {
            *c = v + d;
        }
        if compare_objectives(&candidate, current) == Dominance::Dominates {
            let mut perm = sol.perm.clone();
            perm.swap(i, j);
            let neighbor = Solution::with_objectives(perm, ObjectiveVector::new(candidate));
            debug_assert_eq!(
                Some(&neighbor.objectives),
                crate::evaluation::evaluate_full(instance, &neighbor.perm).ok().as_ref()
            );
            return Some(neighbor);
        }
    }
    None
}

/// Runs the dominance-based local search starting from the archive contents.
///
/// Returns the archive members (now visited) plus every accepted neighbour.
pub fn dominance_based_local_search(
    archive: &Archive,
    params: &LocalSearchParams,
    instance: &Instance,
    rng: &mut SearchRng,
    clock: &dyn Clock,
) -> LocalSearchOutcome {
    let start = clock.now();
    let mut population: Vec<Solution> = archive
        .members()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.visited = false;
            s
        })
        .collect();
    let mut known: HashSet<Vec<usize>> = population.iter().map(|s| s.perm.clone()).collect();
    let mut unvisited: Vec<usize> = (0..population.len()).collect();
    let mut scans = 0;
    let mut improvements = 0;
    let mut links = Vec::new();

    while !unvisited.is_empty() && clock.now().saturating_sub(start) < params.t_max {
        let pick = rng.gen_range(0..unvisited.len());
        let idx = unvisited.swap_remove(pick);
        scans += 1;
        if let Some(neighbor) = first_improving_neighbor(instance, &population[idx]) {
            improvements += 1;
            if known.insert(neighbor.perm.clone()) {
                links.push((idx, population.len()));
                unvisited.push(population.len());
                population.push(neighbor);
            }
        }
        population[idx].visited = true;
    }

    LocalSearchOutcome {
        population,
        scans,
        improvements,
        links,
        exhausted: unvisited.is_empty(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{LogicalClock, WallClock};
    use crate::evaluation::evaluate_full;
    use crate::genetics::{random_permutation, seeded_rng};
    use crate::instance::{generate_uniform, InstanceSpec};
    use crate::ranking::dominates;

    #[test]
    fn neighborhood_order() {
        let pairs: Vec<_> = ordered_swap_neighborhood(3).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(ordered_swap_neighborhood(2).collect::<Vec<_>>(), vec![(0, 1)]);
        let ten: Vec<_> = ordered_swap_neighborhood(10).collect();
        assert_eq!(ten.len(), 45);
        assert!(ten.windows(2).all(|w| w[0] < w[1]));
    }

    /// Oracle: full re-evaluation of every swap in scan order.
    fn brute_first_dominating(instance: &Instance, perm: &[usize]) -> Option<(usize, usize, ObjectiveVector)> {
        let base = evaluate_full(instance, perm).unwrap();
        let n = perm.len();
        for i in 0..n {
            for j in i + 1..n {
                let mut p = perm.to_vec();
                p.swap(i, j);
                let v = evaluate_full(instance, &p).unwrap();
                if dominates(&v, &base).unwrap() {
                    return Some((i, j, v));
                }
            }
        }
        None
    }

    #[test]
    fn first_improvement_matches_enumeration() {
        let inst = generate_uniform(&InstanceSpec::new(6, 2, 0.0, 17)).unwrap();
        let mut rng = seeded_rng(1);
        let mut checked = 0;
        for _ in 0..40 {
            let perm = random_permutation(6, &mut rng);
            let sol = Solution::new(&inst, perm.clone()).unwrap();
            let got = first_improving_neighbor(&inst, &sol);
            match brute_first_dominating(&inst, &perm) {
                Some((i, j, v)) => {
                    let got = got.expect("a dominating neighbour exists");
                    let mut p = perm.clone();
                    p.swap(i, j);
                    assert_eq!(got.perm, p);
                    assert_eq!(got.objectives, v);
                    checked += 1;
                }
                None => assert!(got.is_none()),
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn locally_optimal_member_is_returned_unchanged() {
        let inst = generate_uniform(&InstanceSpec::new(6, 2, 0.0, 17)).unwrap();
        // descend until no neighbour dominates
        let mut sol = Solution::new(&inst, vec![0, 1, 2, 3, 4, 5]).unwrap();
        while let Some(next) = first_improving_neighbor(&inst, &sol) {
            sol = next;
        }
        let mut archive = Archive::new(10);
        archive.insert(&[sol.clone()]);
        let clock = WallClock::new();
        let params = LocalSearchParams {
            t_max: Duration::from_secs(5),
        };
        let out = dominance_based_local_search(&archive, &params, &inst, &mut seeded_rng(3), &clock);
        assert_eq!(out.population.len(), 1);
        assert_eq!(out.population[0].perm, sol.perm);
        assert!(out.population[0].visited);
        assert!(out.exhausted);
        assert!(clock.now() < Duration::from_secs(1));
    }

    #[test]
    fn accepted_solutions_dominate_their_origin() {
        let inst = generate_uniform(&InstanceSpec::new(12, 3, 0.0, 5)).unwrap();
        let mut rng = seeded_rng(9);
        let mut archive = Archive::new(50);
        let start: Vec<Solution> = (0..30)
            .map(|_| Solution::new(&inst, random_permutation(12, &mut rng)).unwrap())
            .collect();
        archive.insert(&start);
        let out = dominance_based_local_search(
            &archive,
            &LocalSearchParams::default(),
            &inst,
            &mut rng,
            &LogicalClock::new(Duration::from_micros(1)),
        );
        assert!(out.exhausted);
        assert!(out.population.len() > archive.len());
        assert_eq!(out.links.len(), out.population.len() - archive.len());
        for &(origin, child) in &out.links {
            let (o, c) = (&out.population[origin], &out.population[child]);
            assert_eq!(c.objectives, evaluate_full(&inst, &c.perm).unwrap());
            assert!(dominates(&c.objectives, &o.objectives).unwrap());
            let differing = o.perm.iter().zip(&c.perm).filter(|(a, b)| a != b).count();
            assert_eq!(differing, 2);
        }
        assert!(out.population.iter().all(|s| s.visited));
    }

    #[test]
    fn tiny_budget_returns_promptly() {
        let inst = generate_uniform(&InstanceSpec::new(40, 2, 0.0, 5)).unwrap();
        let mut rng = seeded_rng(4);
        let mut archive = Archive::new(200);
        let start: Vec<Solution> = (0..150)
            .map(|_| Solution::new(&inst, random_permutation(40, &mut rng)).unwrap())
            .collect();
        archive.insert(&start);
        let clock = WallClock::new();
        let params = LocalSearchParams {
            t_max: Duration::from_millis(1),
        };
        let out = dominance_based_local_search(&archive, &params, &inst, &mut rng, &clock);
        assert!(clock.now() < Duration::from_millis(500));
        let perms: HashSet<_> = out.population.iter().map(|s| s.perm.clone()).collect();
        assert!(archive.members().iter().all(|m| perms.contains(&m.perm)));
    }

    #[test]
    fn logical_clock_makes_the_search_reproducible() {
        let inst = generate_uniform(&InstanceSpec::new(15, 2, 0.0, 2)).unwrap();
        let run = || {
            let mut rng = seeded_rng(11);
            let mut archive = Archive::new(20);
            let start: Vec<Solution> = (0..20)
                .map(|_| Solution::new(&inst, random_permutation(15, &mut rng)).unwrap())
                .collect();
            archive.insert(&start);
            let clock = LogicalClock::new(Duration::from_millis(1));
            let params = LocalSearchParams {
                t_max: Duration::from_millis(25),
            };
            dominance_based_local_search(&archive, &params, &inst, &mut rng, &clock)
                .population
                .into_iter()
                .map(|s| s.perm)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
