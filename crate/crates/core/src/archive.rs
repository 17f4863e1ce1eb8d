//! Bounded external archive of mutually non-dominated solutions.

use std::collections::HashSet;

use crate::evaluation::Solution;
use crate::ranking::{compare_objectives, crowding_of_front, dominates_unchecked, Dominance};

pub const DEFAULT_ARCHIVE_CAPACITY: usize = 100;

/// What happened during one [`Archive::insert`] call.
#[derive(Debug, Default, Clone)]
pub struct InsertReport {
    pub accepted: usize,
    pub rejected: usize,
    /// Members removed because an accepted candidate dominated them.
    pub displaced: usize,
    /// Members dropped by crowding truncation, in eviction order.
    pub evicted: Vec<Solution>,
}

#[derive(Debug, Clone)]
pub struct Archive {
    members: Vec<Solution>,
    capacity: usize,
}

impl Archive {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "archive capacity must be positive");
        Self {
            members: Vec::new(),
            capacity,
        }
    }

    pub fn members(&self) -> &[Solution] {
        &self.members
    }

    pub fn into_members(self) -> Vec<Solution> {
        self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Offers each candidate in turn.
    ///
    /// A candidate is rejected when a member dominates it or already holds the
    /// same permutation. Otherwise it joins and every member it dominates
    /// leaves. Overflow evicts the member with the lowest crowding value.
    pub fn insert<'a, I>(&mut self, candidates: I) -> InsertReport
    where
        I: IntoIterator<Item = &'a Solution>,
    {
        let mut report = InsertReport::default();
        for candidate in candidates {
            if self.offer(candidate, &mut report) {
                report.accepted += 1;
                if self.members.len() > self.capacity {
                    let evicted = self.evict_most_crowded();
                    report.evicted.push(evicted);
                }
            } else {
                report.rejected += 1;
            }
        }
        report
    }

    fn offer(&mut self, candidate: &Solution, report: &mut InsertReport) -> bool {
        for member in &self.members {
            if member.perm == candidate.perm {
                return false;
            }
            if compare_objectives(member.objectives.values(), candidate.objectives.values())
                == Dominance::Dominates
            {
                return false;
            }
        }
        let before = self.members.len();
        self.members
            .retain(|member| !dominates_unchecked(&candidate.objectives, &member.objectives));
        report.displaced += before - self.members.len();

        let mut entry = candidate.clone();
        entry.rank = Some(0);
        entry.visited = false;
        self.members.push(entry);
        true
    }

    fn evict_most_crowded(&mut self) -> Solution {
        let crowding = self.crowding();
        let mut victim = 0;
        for (idx, &c) in crowding.iter().enumerate() {
            if c < crowding[victim] {
                victim = idx;
            }
        }
        self.members.remove(victim)
    }

    fn crowding(&self) -> Vec<f64> {
        let objectives: Vec<_> = self.members.iter().map(|s| &s.objectives).collect();
        crowding_of_front(&objectives)
    }

    /// Members with rank 0 and their crowding values, ready for tournament selection.
    pub fn ranked_members(&self) -> Vec<Solution> {
        let crowding = self.crowding();
        self.members
            .iter()
            .zip(crowding)
            .map(|(s, c)| {
                let mut s = s.clone();
                s.rank = Some(0);
                s.diversity = c;
                s
            })
            .collect()
    }
}

/// Global non-dominated, permutation-unique union of several archives.
pub fn archive_merge<'a, I>(archives: I) -> Vec<Solution>
where
    I: IntoIterator<Item = &'a Archive>,
{
    let pool: Vec<&Solution> = archives.into_iter().flat_map(|a| a.members.iter()).collect();
    non_dominated_unique(pool)
}

/// Non-dominated, permutation-unique subset of `pool`, first occurrence kept.
pub fn non_dominated_unique<'a, I>(pool: I) -> Vec<Solution>
where
    I: IntoIterator<Item = &'a Solution>,
{
    let pool: Vec<&Solution> = pool.into_iter().collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, s) in pool.iter().enumerate() {
        let dominated = pool
            .iter()
            .enumerate()
            .any(|(j, t)| j != i && dominates_unchecked(&t.objectives, &s.objectives));
        if !dominated && seen.insert(s.perm.clone()) {
            out.push((*s).clone());
        }
    }
    out
}
