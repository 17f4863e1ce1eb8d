//! Pareto dominance, dominance-depth ranks, front-by-front crowding and the
//! elitist survival step built on top of them.

use std::cmp::Ordering;

use thiserror::Error;

use crate::evaluation::{ObjectiveVector, Solution};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RankingError {
    #[error("objective vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("solution has no rank assigned")]
    MissingRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    Dominates,
    DominatedBy,
    Incomparable,
    Equal,
}

/// Relation of `a` to `b` under minimisation.
pub fn compare_objectives(a: &[i64], b: &[i64]) -> Dominance {
    debug_assert_eq!(a.len(), b.len());
    let mut better = false;
    let mut worse = false;
    for (x, y) in a.iter().zip(b) {
        match x.cmp(y) {
            Ordering::Less => better = true,
            Ordering::Greater => worse = true,
            Ordering::Equal => {}
        }
        if better && worse {
            return Dominance::Incomparable;
        }
    }
    match (better, worse) {
        (true, false) => Dominance::Dominates,
        (false, true) => Dominance::DominatedBy,
        (false, false) => Dominance::Equal,
        (true, true) => Dominance::Incomparable,
    }
}

/// `a` is no worse than `b` everywhere and differs somewhere.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> Result<bool, RankingError> {
    if a.len() != b.len() {
        return Err(RankingError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(compare_objectives(a.values(), b.values()) == Dominance::Dominates)
}

#[inline]
pub(crate) fn dominates_unchecked(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    compare_objectives(a.values(), b.values()) == Dominance::Dominates
}

/// A population with ranks and crowding values filled in.
#[derive(Debug, Clone)]
pub struct RankedPopulation {
    pub members: Vec<Solution>,
    /// Indices into `members`, one list per front, front 0 first.
    pub fronts: Vec<Vec<usize>>,
}

impl RankedPopulation {
    pub fn into_members(self) -> Vec<Solution> {
        self.members
    }
}

/// Fast non-dominated sorting: domination counts plus dominated sets, peeled front by front.
pub fn dominance_depth_assign(mut pop: Vec<Solution>) -> RankedPopulation {
    let len = pop.len();
    let mut dominated_by_count = vec![0usize; len];
    let mut dominated_sets: Vec<Vec<usize>> = vec![Vec::new(); len];

    for p in 0..len {
        for q in p + 1..len {
            match compare_objectives(pop[p].objectives.values(), pop[q].objectives.values()) {
                Dominance::Dominates => {
                    dominated_sets[p].push(q);
                    dominated_by_count[q] += 1;
                }
                Dominance::DominatedBy => {
                    dominated_sets[q].push(p);
                    dominated_by_count[p] += 1;
                }
                _ => {}
            }
        }
    }

    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..len).filter(|&p| dominated_by_count[p] == 0).collect();
    while !current.is_empty() {
        let rank = fronts.len();
        let mut next = Vec::new();
        for &p in &current {
            pop[p].rank = Some(rank);
            for &q in &dominated_sets[p] {
                dominated_by_count[q] -= 1;
                if dominated_by_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }

    RankedPopulation { members: pop, fronts }
}

/// Crowding values computed front by front; see [`crowding_of_front`].
pub fn crowding_assign(mut ranked: RankedPopulation) -> RankedPopulation {
    for front in &ranked.fronts {
        let objectives: Vec<&ObjectiveVector> =
            front.iter().map(|&i| &ranked.members[i].objectives).collect();
        let values = crowding_of_front(&objectives);
        for (&idx, value) in front.iter().zip(values) {
            ranked.members[idx].diversity = value;
        }
    }
    ranked
}

/// Crowding values for one front.
///
/// Per objective the front is sorted ascending; the two extremes get +∞ and
/// every interior point adds `(next - prev) / (max - min)`. An objective with
/// `max == min` contributes nothing to interior points.
pub fn crowding_of_front(front: &[&ObjectiveVector]) -> Vec<f64> {
    let size = front.len();
    let mut distance = vec![0.0f64; size];
    if size == 0 {
        return distance;
    }
    if size <= 2 {
        return vec![f64::INFINITY; size];
    }
    let m = front[0].len();
    let mut order: Vec<usize> = (0..size).collect();
    for r in 0..m {
        order.sort_by_key(|&i| front[i][r]);
        let lo = front[order[0]][r];
        let hi = front[order[size - 1]][r];
        distance[order[0]] = f64::INFINITY;
        distance[order[size - 1]] = f64::INFINITY;
        if hi == lo {
            continue;
        }
        let range = (hi - lo) as f64;
        for w in 1..size - 1 {
            let gap = (front[order[w + 1]][r] - front[order[w - 1]][r]) as f64;
            distance[order[w]] += gap / range;
        }
    }
    distance
}

/// Assigns ranks and crowding in one go.
pub fn rank_and_crowd(pop: Vec<Solution>) -> RankedPopulation {
    crowding_assign(dominance_depth_assign(pop))
}

/// FitnessThenDiversity: lower rank first, then larger crowding.
///
/// Returns `Less` when `a` is the better solution, so it sorts best-first.
pub fn compare_fitness_then_diversity(a: &Solution, b: &Solution) -> Result<Ordering, RankingError> {
    let (ra, rb) = match (a.rank, b.rank) {
        (Some(ra), Some(rb)) => (ra, rb),
        _ => return Err(RankingError::MissingRank),
    };
    Ok(ra.cmp(&rb).then_with(|| {
        b.diversity
            .partial_cmp(&a.diversity)
            .unwrap_or(Ordering::Equal)
    }))
}

/// Infallible form for populations that have just been ranked.
pub(crate) fn fitness_then_diversity(a: &Solution, b: &Solution) -> Ordering {
    compare_fitness_then_diversity(a, b).expect("population must be ranked before comparison")
}

/// Ranks the population and keeps the `capacity` best under FitnessThenDiversity.
///
/// Ties keep their input order.
pub fn truncate_by_fitness(pop: Vec<Solution>, capacity: usize) -> Vec<Solution> {
    let mut members = rank_and_crowd(pop).into_members();
    members.sort_by(fitness_then_diversity);
    members.truncate(capacity);
    members
}

/// Merges residents and immigrants, re-ranks the union and keeps the best `capacity`.
///
/// Residents precede immigrants, so on exact ties residents survive.
pub fn elitist_integration(
    current: Vec<Solution>,
    immigrants: Vec<Solution>,
    capacity: usize,
) -> Vec<Solution> {
    let mut union = current;
    union.extend(immigrants);
    truncate_by_fitness(union, capacity.max(1))
}
