//! Variation and selection: cycle crossover, swap mutation, deterministic tournament.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::evaluation::Solution;

/// Seeded generator used by every stochastic operator. Each island owns one.
pub type SearchRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SearchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeneticsError {
    #[error("parents have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("tournament pool is empty")]
    EmptyPool,
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(String),
}

/// Crossover and mutation probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationParams {
    pub crossover: f64,
    pub mutation: f64,
}

impl Default for VariationParams {
    fn default() -> Self {
        Self {
            crossover: 0.9,
            mutation: 0.01,
        }
    }
}

impl VariationParams {
    pub fn new(crossover: f64, mutation: f64) -> Result<Self, GeneticsError> {
        for p in [crossover, mutation] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GeneticsError::InvalidProbability(p.to_string()));
            }
        }
        Ok(Self { crossover, mutation })
    }
}

/// Cycle index of every position (cycles numbered from 0 in order of their first position).
pub fn crossover_cycles(p1: &[usize], p2: &[usize]) -> Result<Vec<usize>, GeneticsError> {
    if p1.len() != p2.len() {
        return Err(GeneticsError::LengthMismatch(p1.len(), p2.len()));
    }
    let n = p1.len();
    let mut position_in_p1 = vec![usize::MAX; n];
    for (pos, &v) in p1.iter().enumerate() {
        position_in_p1[v] = pos;
    }
    let mut cycle_of = vec![usize::MAX; n];
    let mut cycle = 0;
    for start in 0..n {
        if cycle_of[start] != usize::MAX {
            continue;
        }
        let mut pos = start;
        loop {
            cycle_of[pos] = cycle;
            pos = position_in_p1[p2[pos]];
            if pos == start {
                break;
            }
        }
        cycle += 1;
    }
    Ok(cycle_of)
}

/// Cycle crossover (CX).
///
/// Cycles are found from the lowest unassigned position upward. Even-numbered
/// cycles copy `p1` into the first child and `p2` into the second; odd cycles
/// swap the sources. Every child position therefore keeps the value one of the
/// parents has at that position.
pub fn cycle_crossover(p1: &[usize], p2: &[usize]) -> Result<(Vec<usize>, Vec<usize>), GeneticsError> {
    let cycles = crossover_cycles(p1, p2)?;
    let (c1, c2) = cycles
        .iter()
        .enumerate()
        .map(|(pos, &c)| {
            if c % 2 == 0 {
                (p1[pos], p2[pos])
            } else {
                (p2[pos], p1[pos])
            }
        })
        .unzip();
    Ok((c1, c2))
}

/// With probability `pb_m` exchanges two distinct random positions.
pub fn swap_mutation(perm: &mut [usize], pb_m: f64, rng: &mut SearchRng) -> Option<(usize, usize)> {
    let n = perm.len();
    if n < 2 || !rng.gen_bool(pb_m.clamp(0.0, 1.0)) {
        return None;
    }
    let i = rng.gen_range(0..n);
    let mut j = rng.gen_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    perm.swap(i, j);
    Some((i.min(j), i.max(j)))
}

/// Deterministic k-tournament: `k` entrants drawn with replacement, best one wins.
///
/// `compare` returns `Less` when its first argument is the better solution.
/// Ties go to the earliest drawn entrant.
pub fn tournament_select<'a, F>(
    pool: &'a [Solution],
    k: usize,
    mut compare: F,
    rng: &mut SearchRng,
) -> Result<&'a Solution, GeneticsError>
where
    F: FnMut(&Solution, &Solution) -> Ordering,
{
    if pool.is_empty() {
        return Err(GeneticsError::EmptyPool);
    }
    let mut best = &pool[rng.gen_range(0..pool.len())];
    for _ in 1..k.max(1) {
        let challenger = &pool[rng.gen_range(0..pool.len())];
        if compare(challenger, best) == Ordering::Less {
            best = challenger;
        }
    }
    Ok(best)
}

/// Uniformly random permutation of `0..n`.
pub fn random_permutation(n: usize, rng: &mut SearchRng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}
