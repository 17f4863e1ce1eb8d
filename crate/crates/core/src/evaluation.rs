//! Objective evaluation: the full O(m·n²) cost and the O(m·n) swap delta.
//!
//! A permutation `perm` assigns facility `perm[i]` to location `i`, so
//! `C^r(perm) = Σ_i Σ_j d[i][j] · f^r[perm[i]][perm[j]]`.

use std::fmt;
use std::ops::{Add, Index};

use thiserror::Error;

use crate::instance::Instance;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("not a permutation of 0..{0}")]
    NotAPermutation(usize),
}

/// Cost vector `(C^1, ..., C^m)`; all objectives are minimised.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectiveVector(Vec<i64>);

impl ObjectiveVector {
    pub fn new(values: Vec<i64>) -> Self {
        Self(values)
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0; m])
    }

    pub fn values(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }
}

impl Index<usize> for ObjectiveVector {
    type Output = i64;

    fn index(&self, r: usize) -> &i64 {
        &self.0[r]
    }
}

impl Add<&ObjectiveVector> for &ObjectiveVector {
    type Output = ObjectiveVector;

    fn add(self, rhs: &ObjectiveVector) -> ObjectiveVector {
        assert_eq!(self.len(), rhs.len());
        ObjectiveVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl From<Vec<i64>> for ObjectiveVector {
    fn from(values: Vec<i64>) -> Self {
        Self(values)
    }
}

impl fmt::Display for ObjectiveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(i64::to_string).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// A candidate assignment plus the bookkeeping the search attaches to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub perm: Vec<usize>,
    pub objectives: ObjectiveVector,
    /// Local-search bookkeeping.
    pub visited: bool,
    /// Dominance depth; `None` until a ranking pass has run.
    pub rank: Option<usize>,
    /// Crowding value within the solution's front.
    pub diversity: f64,
}

impl Solution {
    /// Evaluates `perm` from scratch.
    pub fn new(instance: &Instance, perm: Vec<usize>) -> Result<Self, EvalError> {
        check_permutation(&perm, instance.n())?;
        let objectives = evaluate_full(instance, &perm)?;
        Ok(Self::with_objectives(perm, objectives))
    }

    /// Wraps a permutation whose objectives are already known.
    pub fn with_objectives(perm: Vec<usize>, objectives: ObjectiveVector) -> Self {
        Self {
            perm,
            objectives,
            visited: false,
            rank: None,
            diversity: 0.0,
        }
    }
}

pub fn check_permutation(perm: &[usize], n: usize) -> Result<(), EvalError> {
    if perm.len() != n {
        return Err(EvalError::DimensionMismatch {
            expected: n,
            actual: perm.len(),
        });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(EvalError::NotAPermutation(n));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Full evaluation of every objective.
pub fn evaluate_full(instance: &Instance, perm: &[usize]) -> Result<ObjectiveVector, EvalError> {
    let n = instance.n();
    if perm.len() != n {
        return Err(EvalError::DimensionMismatch {
            expected: n,
            actual: perm.len(),
        });
    }
    let d = instance.distances();
    let values = instance
        .flows()
        .iter()
        .map(|f| {
            let mut total = 0i64;
            for i in 0..n {
                let d_row = d.row(i);
                let f_row = f.row(perm[i]);
                for j in 0..n {
                    total += d_row[j] * f_row[perm[j]];
                }
            }
            total
        })
        .collect();
    Ok(ObjectiveVector(values))
}

/// Change in every objective when the facilities at locations `i` and `j` are exchanged.
///
/// Keeps the diagonal term `(d_ii - d_jj)` and the cross term `(d_ij - d_ji)` so
/// asymmetric matrices and non-zero diagonals are handled exactly.
pub fn evaluate_delta(
    instance: &Instance,
    perm: &[usize],
    i: usize,
    j: usize,
) -> Result<ObjectiveVector, EvalError> {
    let n = instance.n();
    if perm.len() != n {
        return Err(EvalError::DimensionMismatch {
            expected: n,
            actual: perm.len(),
        });
    }
    if i >= n || j >= n {
        return Err(EvalError::DimensionMismatch {
            expected: n,
            actual: i.max(j) + 1,
        });
    }
    let mut out = vec![0; instance.m()];
    delta_into(instance, perm, i, j, &mut out);
    Ok(ObjectiveVector(out))
}

/// Unchecked delta kernel writing one entry per objective into `out`.
pub(crate) fn delta_into(instance: &Instance, perm: &[usize], i: usize, j: usize, out: &mut [i64]) {
    if i == j {
        out.fill(0);
        return;
    }
    let d = instance.distances();
    let (a, b) = (perm[i], perm[j]);
    for (slot, f) in out.iter_mut().zip(instance.flows()) {
        let mut delta = (d.get(i, i) - d.get(j, j)) * (f.get(b, b) - f.get(a, a))
            + (d.get(i, j) - d.get(j, i)) * (f.get(b, a) - f.get(a, b));
        let (fa, fb) = (f.row(a), f.row(b));
        for (k, &pk) in perm.iter().enumerate() {
            if k == i || k == j {
                continue;
            }
            let fk = f.row(pk);
            delta += (d.get(k, i) - d.get(k, j)) * (fk[b] - fk[a])
                + (d.get(i, k) - d.get(j, k)) * (fb[pk] - fa[pk]);
        }
        *slot = delta;
    }
}

/// Exchanges locations `i` and `j` and applies a precomputed delta.
pub fn apply_swap(sol: &Solution, i: usize, j: usize, delta: &ObjectiveVector) -> Solution {
    let mut perm = sol.perm.clone();
    perm.swap(i, j);
    Solution::with_objectives(perm, &sol.objectives + delta)
}
