//! Quality assessment: shared-bounds normalisation, reference points, exact
//! hypervolume and the Wilcoxon rank-sum test.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::evaluation::Solution;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no points to normalise")]
    EmptyUnion,
    #[error("points have inconsistent dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("each sample needs at least 3 values (got {0} and {1})")]
    SampleTooSmall(usize, usize),
    #[error("all values are identical; the rank-sum test is undefined")]
    DegenerateSample,
}

/// A set of points in objective space (minimisation).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Front {
    pub points: Vec<Vec<f64>>,
}

impl Front {
    pub fn new(points: Vec<Vec<f64>>) -> Self {
        Self { points }
    }

    pub fn from_solutions(solutions: &[Solution]) -> Self {
        Self::new(solutions.iter().map(|s| s.objectives.to_f64()).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Bounds {
    /// Maps a point into the unit box; a degenerate dimension maps to 0.
    pub fn normalize(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .enumerate()
            .map(|(r, &v)| {
                let range = self.max[r] - self.min[r];
                if range > 0.0 {
                    (v - self.min[r]) / range
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Normalises every front with bounds taken over the union of all of them.
pub fn normalize_fronts(fronts: &[Front]) -> Result<(Vec<Front>, Bounds), MetricsError> {
    let dim = fronts
        .iter()
        .find_map(Front::dimension)
        .ok_or(MetricsError::EmptyUnion)?;
    let mut min = vec![f64::INFINITY; dim];
    let mut max = vec![f64::NEG_INFINITY; dim];
    for p in fronts.iter().flat_map(|f| f.points.iter()) {
        if p.len() != dim {
            return Err(MetricsError::DimensionMismatch(dim, p.len()));
        }
        for r in 0..dim {
            min[r] = min[r].min(p[r]);
            max[r] = max[r].max(p[r]);
        }
    }
    let bounds = Bounds { min, max };
    let normalized = fronts
        .iter()
        .map(|f| Front::new(f.points.iter().map(|p| bounds.normalize(p)).collect()))
        .collect();
    Ok((normalized, bounds))
}

/// Component-wise maximum of `front` shifted by `offset`.
pub fn reference_point(front: &Front, offset: f64) -> Result<Vec<f64>, MetricsError> {
    let dim = front.dimension().ok_or(MetricsError::EmptyUnion)?;
    let mut reference = vec![f64::NEG_INFINITY; dim];
    for p in &front.points {
        if p.len() != dim {
            return Err(MetricsError::DimensionMismatch(dim, p.len()));
        }
        for (r, v) in reference.iter_mut().zip(p) {
            *r = r.max(*v);
        }
    }
    Ok(reference.into_iter().map(|v| v + offset).collect())
}

pub const DEFAULT_REFERENCE_OFFSET: f64 = 0.01;

/// Exact hypervolume dominated by `points` and bounded by `reference`.
///
/// Points that do not lie strictly inside the reference box are ignored.
/// Uses slicing along the last objective, recursing down to a 2-D sweep.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> Result<f64, MetricsError> {
    let dim = reference.len();
    let mut inside = Vec::with_capacity(points.len());
    for p in points {
        if p.len() != dim {
            return Err(MetricsError::DimensionMismatch(dim, p.len()));
        }
        if p.iter().zip(reference).all(|(v, r)| v < r) {
            inside.push(p.clone());
        }
    }
    if dim == 0 || inside.is_empty() {
        return Ok(0.0);
    }
    Ok(slice_volume(inside, reference, dim))
}

fn weakly_dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Drops points weakly dominated by another point (keeping one copy of duplicates).
fn filter_non_dominated(mut points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    points.dedup();
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if !kept.iter().any(|k| weakly_dominates(k, &p)) {
            kept.retain(|k| !weakly_dominates(&p, k));
            kept.push(p);
        }
    }
    kept
}

fn slice_volume(points: Vec<Vec<f64>>, reference: &[f64], dim: usize) -> f64 {
    match dim {
        1 => {
            let best = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            reference[0] - best
        }
        2 => {
            let mut pts = points;
            pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).expect("finite").then(a[1].partial_cmp(&b[1]).expect("finite")));
            let mut area = 0.0;
            let mut ceiling = reference[1];
            for p in &pts {
                if p[1] < ceiling {
                    area += (reference[0] - p[0]) * (ceiling - p[1]);
                    ceiling = p[1];
                }
            }
            area
        }
        _ => {
            let last = dim - 1;
            let mut pts = filter_non_dominated(points);
            pts.sort_by(|a, b| a[last].partial_cmp(&b[last]).expect("finite"));
            let mut volume = 0.0;
            for i in 0..pts.len() {
                let upper = if i + 1 < pts.len() { pts[i + 1][last] } else { reference[last] };
                let depth = upper - pts[i][last];
                if depth <= 0.0 {
                    continue;
                }
                let projected: Vec<Vec<f64>> = pts[..=i].iter().map(|p| p[..last].to_vec()).collect();
                volume += slice_volume(filter_non_dominated(projected), &reference[..last], last) * depth;
            }
            volume
        }
    }
}

/// Points not weakly dominated by any other point; duplicates collapse to one.
pub fn non_dominated_points(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    filter_non_dominated(points.to_vec())
}

/// Hypervolume of each front after normalising with the bounds of their union.
///
/// The reference point is the worst corner of the pooled non-dominated set
/// (after normalisation) shifted by `offset`.
pub fn normalized_hypervolumes(fronts: &[Front], offset: f64) -> Result<Vec<f64>, MetricsError> {
    let (normalized, _) = normalize_fronts(fronts)?;
    let pooled: Vec<Vec<f64>> = normalized.iter().flat_map(|f| f.points.iter().cloned()).collect();
    let global = Front::new(non_dominated_points(&pooled));
    let reference = reference_point(&global, offset)?;
    normalized
        .iter()
        .map(|f| hypervolume(&f.points, &reference))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    TwoSided,
    /// The first sample tends to be larger.
    Greater,
    /// The first sample tends to be smaller.
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSumResult {
    /// Mann-Whitney U of the first sample.
    pub u: f64,
    /// Standardised statistic `(U - E[U]) / sd(U)` with tie-corrected variance.
    pub z: f64,
    pub p_value: f64,
    /// Whether the p-value came from the exact null distribution.
    pub exact: bool,
}

/// Samples smaller than this use the exact null distribution.
const EXACT_BELOW: usize = 10;
const EXACT_MAX_TOTAL: usize = 200;

/// Two-sided Wilcoxon rank-sum (Mann-Whitney U) test.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankSumResult, MetricsError> {
    wilcoxon_rank_sum_with(a, b, Alternative::TwoSided)
}

pub fn wilcoxon_rank_sum_with(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
) -> Result<RankSumResult, MetricsError> {
    let (na, nb) = (a.len(), b.len());
    if na < 3 || nb < 3 {
        return Err(MetricsError::SampleTooSmall(na, nb));
    }
    let total = na + nb;
    // doubled mid-ranks keep everything integral
    let mut pooled: Vec<(f64, bool)> = a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite sample values"));
    let mut twice_ranks = vec![0u64; total];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j + 1 < total && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // ranks i+1..=j+1 averaged, doubled: (i+1)+(j+1)
        let twice = (i + j + 2) as u64;
        for r in &mut twice_ranks[i..=j] {
            *r = twice;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    if tie_term == (total as f64).powi(3) - total as f64 {
        return Err(MetricsError::DegenerateSample);
    }

    let twice_rank_sum_a: u64 = pooled
        .iter()
        .zip(&twice_ranks)
        .filter(|((_, from_a), _)| *from_a)
        .map(|(_, r)| r)
        .sum();
    let rank_sum_a = twice_rank_sum_a as f64 / 2.0;
    let (naf, nbf, nf) = (na as f64, nb as f64, total as f64);
    let u = rank_sum_a - naf * (naf + 1.0) / 2.0;
    let mean_u = naf * nbf / 2.0;
    let var_u = naf * nbf / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let sd_u = var_u.sqrt();
    let z = (u - mean_u) / sd_u;

    let exact = na.min(nb) < EXACT_BELOW && total <= EXACT_MAX_TOTAL;
    let p_value = if exact {
        exact_p_value(&twice_ranks, na, twice_rank_sum_a, alternative)
    } else {
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let diff = u - mean_u;
        match alternative {
            Alternative::TwoSided => {
                let zc = ((diff.abs() - 0.5).max(0.0)) / sd_u;
                (2.0 * normal.sf(zc)).min(1.0)
            }
            Alternative::Greater => normal.sf((diff - 0.5) / sd_u),
            Alternative::Less => normal.cdf((diff + 0.5) / sd_u),
        }
    };

    Ok(RankSumResult {
        u,
        z,
        p_value: p_value.clamp(0.0, 1.0),
        exact,
    })
}

/// Exact permutation p-value: counts subsets of size `na` by their (doubled) rank sum.
fn exact_p_value(twice_ranks: &[u64], na: usize, observed: u64, alternative: Alternative) -> f64 {
    let max_sum: u64 = twice_ranks.iter().sum();
    let width = max_sum as usize + 1;
    // counts[k][s]: subsets of size k with doubled rank sum s
    let mut counts = vec![vec![0f64; width]; na + 1];
    counts[0][0] = 1.0;
    for &r in twice_ranks {
        let r = r as usize;
        for k in (1..=na).rev() {
            let (lower, upper) = counts.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (r..width).rev() {
                if prev[s - r] != 0.0 {
                    cur[s] += prev[s - r];
                }
            }
        }
    }
    let dist = &counts[na];
    let total: f64 = dist.iter().sum();
    // doubled expected rank sum: na (N + 1)
    let twice_mean = (na * (twice_ranks.len() + 1)) as i64;
    let obs_dev = (observed as i64 * 1 - twice_mean).abs();
    let mass: f64 = dist
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .filter(|(s, _)| {
            let s = *s as i64;
            match alternative {
                Alternative::TwoSided => (s - twice_mean).abs() >= obs_dev,
                Alternative::Greater => s >= observed as i64,
                Alternative::Less => s <= observed as i64,
            }
        })
        .map(|(_, c)| c)
        .sum();
    mass / total
}
