//! mQAP instances: the distance matrix, the flow matrices and their text format.
//!
//! The text format is whitespace-delimited integers: `n`, then the `n×n`
//! distance matrix, then one or more `n×n` flow matrices. Any line whose first
//! non-blank character is not a digit is a comment. Comments of the form
//! `! key=value` are read back as metadata, so
//!
//! ```
//! let text = "! type=uniform\n2\n\n0 1\n1 0\n\n0 3\n2 0\n";
//! let inst = mqap::instance::parse_instance(text).unwrap();
//! assert_eq!((inst.n(), inst.m()), (2, 1));
//! assert_eq!(inst.metadata()["type"], "uniform");
//! assert_eq!(mqap::instance::write_instance(&inst), text);
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("input contains no numeric data")]
    EmptyInput,
    #[error("invalid token {token:?} on line {line}")]
    InvalidToken { token: String, line: usize },
    #[error("negative entry {value} on line {line}")]
    NegativeEntry { value: i64, line: usize },
    #[error("instance size must be at least 2, got {0}")]
    InvalidSize(i64),
    #[error("{remaining} tokens follow n={n}; expected a multiple of n²={} with at least two matrices", n * n)]
    TokenCountMismatch { n: usize, remaining: usize },
    #[error("matrix {index} is not {n}x{n}")]
    NotSquare { index: usize, n: usize },
    #[error("an instance needs at least one flow matrix")]
    NoFlows,
    #[error("entries are too large: objective sums may overflow 64-bit integers")]
    ValueOverflow,
    #[error("correlation {0} is outside [-1, 1]")]
    InvalidCorrelation(f64),
    #[error("cannot calibrate flow correlation with n={0} (need n >= 5)")]
    InfeasibleCorrelation(usize),
    #[error("failed to read instance file: {0}")]
    Io(String),
}

/// Row-major square matrix of non-negative integers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<i64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix rows must have length {n}");
            data.extend_from_slice(row);
        }
        Self { n, data }
    }

    fn from_flat(n: usize, data: Vec<i64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: i64) {
        self.data[i * self.n + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[i64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.data
    }

    fn max_entry(&self) -> i64 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Off-diagonal entries in row-major order.
    pub fn off_diagonal(&self) -> Vec<i64> {
        (0..self.n)
            .flat_map(|i| (0..self.n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect()
    }
}

/// A multi-objective QAP instance. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    name: String,
    distances: SquareMatrix,
    flows: Vec<SquareMatrix>,
    metadata: BTreeMap<String, String>,
}

impl Instance {
    pub fn new(
        name: impl Into<String>,
        distances: SquareMatrix,
        flows: Vec<SquareMatrix>,
    ) -> Result<Self, InstanceError> {
        let n = distances.dim();
        if n < 2 {
            return Err(InstanceError::InvalidSize(n as i64));
        }
        if flows.is_empty() {
            return Err(InstanceError::NoFlows);
        }
        for (index, flow) in flows.iter().enumerate() {
            if flow.dim() != n {
                return Err(InstanceError::NotSquare { index: index + 1, n });
            }
        }
        for matrix in std::iter::once(&distances).chain(flows.iter()) {
            if let Some(&value) = matrix.data.iter().find(|v| **v < 0) {
                return Err(InstanceError::NegativeEntry { value, line: 0 });
            }
        }
        // Worst case objective is n² · max(d) · max(f).
        let max_d = distances.max_entry() as u128;
        let max_f = flows.iter().map(SquareMatrix::max_entry).max().unwrap_or(0) as u128;
        if (n as u128) * (n as u128) * max_d * max_f > i64::MAX as u128 {
            return Err(InstanceError::ValueOverflow);
        }
        Ok(Self {
            name: name.into(),
            distances,
            flows,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of facilities (and locations).
    pub fn n(&self) -> usize {
        self.distances.dim()
    }

    /// Number of objectives (flow matrices).
    pub fn m(&self) -> usize {
        self.flows.len()
    }

    pub fn distances(&self) -> &SquareMatrix {
        &self.distances
    }

    pub fn flows(&self) -> &[SquareMatrix] {
        &self.flows
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    /// True when `n`, the distance matrix and the flows match; name and metadata are ignored.
    pub fn same_problem(&self, other: &Instance) -> bool {
        self.distances == other.distances && self.flows == other.flows
    }
}

/// Parameters of the uniform desk-scale generator.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub n: usize,
    pub m: usize,
    pub correlation: f64,
    pub seed: u64,
    pub max_value: i64,
}

impl InstanceSpec {
    pub fn new(n: usize, m: usize, correlation: f64, seed: u64) -> Self {
        Self {
            n,
            m,
            correlation,
            seed,
            max_value: 100,
        }
    }
}

fn is_comment(line: &str) -> bool {
    match line.trim_start().chars().next() {
        None => true,
        Some(c) => !c.is_ascii_digit(),
    }
}

/// Parses the whitespace-delimited instance format.
pub fn parse_instance(text: &str) -> Result<Instance, InstanceError> {
    let mut metadata = BTreeMap::new();
    let mut tokens: Vec<(i64, usize)> = Vec::new();

    for (line_no, line) in text.lines().enumerate() {
        let line_no = line_no + 1;
        if is_comment(line) {
            if let Some(rest) = line.trim_start().strip_prefix('!') {
                if let Some((key, value)) = rest.trim().split_once('=') {
                    metadata.insert(key.trim().to_string(), value.trim().to_string());
                }
            }
            continue;
        }
        for token in line.split_whitespace() {
            let value: i64 = token.parse().map_err(|_| InstanceError::InvalidToken {
                token: token.to_string(),
                line: line_no,
            })?;
            if value < 0 {
                return Err(InstanceError::NegativeEntry { value, line: line_no });
            }
            tokens.push((value, line_no));
        }
    }

    let (&(n, _), rest) = tokens.split_first().ok_or(InstanceError::EmptyInput)?;
    if n < 2 {
        return Err(InstanceError::InvalidSize(n));
    }
    let n = n as usize;
    let block = n * n;
    if rest.len() % block != 0 || rest.len() < 2 * block {
        return Err(InstanceError::TokenCountMismatch {
            n,
            remaining: rest.len(),
        });
    }

    let mut matrices = rest
        .chunks(block)
        .map(|chunk| SquareMatrix::from_flat(n, chunk.iter().map(|(v, _)| *v).collect()));
    let distances = matrices.next().expect("checked above");
    let flows: Vec<SquareMatrix> = matrices.collect();

    let name = metadata.remove("name").unwrap_or_default();
    let mut instance = Instance::new(name, distances, flows)?;
    instance.metadata = metadata;
    Ok(instance)
}

/// Reads an instance file; an unnamed instance takes the file stem as its name.
pub fn load_instance(path: &Path) -> Result<Instance, InstanceError> {
    let text = std::fs::read_to_string(path).map_err(|e| InstanceError::Io(e.to_string()))?;
    let mut instance = parse_instance(&text)?;
    if instance.name.is_empty() {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        instance.set_name(stem);
    }
    Ok(instance)
}

/// Serializes an instance in the format accepted by [`parse_instance`].
pub fn write_instance(instance: &Instance) -> String {
    let mut out = String::new();
    for (key, value) in &instance.metadata {
        let _ = writeln!(out, "! {key}={value}");
    }
    if !instance.name.is_empty() {
        let _ = writeln!(out, "! name={}", instance.name);
    }
    let n = instance.n();
    let _ = writeln!(out, "{n}");
    for matrix in std::iter::once(&instance.distances).chain(instance.flows.iter()) {
        out.push('\n');
        for i in 0..n {
            let row: Vec<String> = matrix.row(i).iter().map(i64::to_string).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Sample Pearson correlation between the off-diagonal entries of two matrices.
pub fn flow_correlation(a: &SquareMatrix, b: &SquareMatrix) -> f64 {
    let xs: Vec<f64> = a.off_diagonal().into_iter().map(|v| v as f64).collect();
    let ys: Vec<f64> = b.off_diagonal().into_iter().map(|v| v as f64).collect();
    pearson(&xs, &ys)
}

fn random_matrix(n: usize, max_value: i64, rng: &mut ChaCha8Rng) -> SquareMatrix {
    let mut m = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m.set(i, j, rng.gen_range(0..=max_value));
            }
        }
    }
    m
}

/// Blend of `base` (mirrored when `weight < 0`) and `noise`, rounded to integers.
fn mix(base: &[i64], noise: &[i64], weight: f64, max_value: i64) -> Vec<i64> {
    let w = weight.abs();
    base.iter()
        .zip(noise)
        .map(|(&b, &z)| {
            let b = if weight < 0.0 { max_value - b } else { b };
            (w * b as f64 + (1.0 - w) * z as f64).round() as i64
        })
        .collect()
}

/// Generates a uniform instance whose flows 2..m are each correlated with
/// flow 1 at `spec.correlation`.
///
/// Every flow after the first is a blend of flow 1 and fresh uniform noise.
/// The blend weight is found by bisection on the empirical correlation, so
/// the realised value lands close to the request even for small `n`.
pub fn generate_uniform(spec: &InstanceSpec) -> Result<Instance, InstanceError> {
    if spec.n < 2 {
        return Err(InstanceError::InvalidSize(spec.n as i64));
    }
    if spec.m < 1 {
        return Err(InstanceError::NoFlows);
    }
    if !(-1.0..=1.0).contains(&spec.correlation) {
        return Err(InstanceError::InvalidCorrelation(spec.correlation));
    }
    if spec.m >= 2 && spec.correlation != 0.0 && spec.n < 5 {
        return Err(InstanceError::InfeasibleCorrelation(spec.n));
    }
    if spec.max_value < 1 {
        return Err(InstanceError::InvalidSize(spec.max_value));
    }

    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let distances = random_matrix(n, spec.max_value, &mut rng);
    let first = random_matrix(n, spec.max_value, &mut rng);
    let base = first.off_diagonal();
    let base_f: Vec<f64> = base.iter().map(|&v| v as f64).collect();

    let mut flows = vec![first];
    for _ in 1..spec.m {
        let noise = random_matrix(n, spec.max_value, &mut rng).off_diagonal();
        let weight = calibrate_weight(&base, &base_f, &noise, spec.correlation, spec.max_value);
        let values = mix(&base, &noise, weight, spec.max_value);
        let mut flow = SquareMatrix::zeros(n);
        let mut it = values.into_iter();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    flow.set(i, j, it.next().expect("n(n-1) values"));
                }
            }
        }
        flows.push(flow);
    }

    let instance = Instance::new(
        format!("uni-n{}-m{}-c{}-s{}", spec.n, spec.m, spec.correlation, spec.seed),
        distances,
        flows,
    )?
    .with_metadata("type", "uniform")
    .with_metadata("correlation", spec.correlation.to_string())
    .with_metadata("seed", spec.seed.to_string());
    Ok(instance)
}

fn calibrate_weight(base: &[i64], base_f: &[f64], noise: &[i64], target: f64, max_value: i64) -> f64 {
    if target >= 1.0 {
        return 1.0;
    }
    if target <= -1.0 {
        return -1.0;
    }
    let corr_at = |w: f64| {
        let ys: Vec<f64> = mix(base, noise, w, max_value).into_iter().map(|v| v as f64).collect();
        pearson(base_f, &ys)
    };
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    let mut best = (f64::INFINITY, 0.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let c = corr_at(mid);
        if (c - target).abs() < best.0 {
            best = ((c - target).abs(), mid);
        }
        if c < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_instance() {
        let inst = parse_instance("2\n0 1\n1 0\n0 3\n2 0").unwrap();
        assert_eq!(inst.n(), 2);
        assert_eq!(inst.m(), 1);
        assert_eq!(inst.distances(), &SquareMatrix::from_rows(&[vec![0, 1], vec![1, 0]]));
        assert_eq!(inst.flows()[0], SquareMatrix::from_rows(&[vec![0, 3], vec![2, 0]]));
    }

    #[test]
    fn skips_comments_and_infers_m() {
        let inst = parse_instance("! comment\n2\n0 1\n1 0\n0 3\n2 0\n0 5\n4 0").unwrap();
        assert_eq!((inst.n(), inst.m()), (2, 2));
        assert_eq!(inst.flows()[1].get(1, 0), 4);
    }

    #[test]
    fn rejects_partial_trailing_matrix() {
        assert_eq!(
            parse_instance("2\n0 1\n1 0\n0 3 2"),
            Err(InstanceError::TokenCountMismatch { n: 2, remaining: 7 })
        );
    }

    #[test]
    fn error_paths() {
        assert_eq!(parse_instance("# nothing\n\n"), Err(InstanceError::EmptyInput));
        assert!(matches!(
            parse_instance("2\n0 -1\n1 0\n0 3\n2 0"),
            Err(InstanceError::NegativeEntry { value: -1, line: 2 })
        ));
        assert!(matches!(
            parse_instance("2\n0 x\n1 0\n0 3\n2 0"),
            Err(InstanceError::InvalidToken { .. })
        ));
        // distance matrix only
        assert!(matches!(
            parse_instance("2\n0 1\n1 0"),
            Err(InstanceError::TokenCountMismatch { .. })
        ));
        assert_eq!(parse_instance("1\n0\n0"), Err(InstanceError::InvalidSize(1)));
    }

    #[test]
    fn overflow_guard() {
        let big = i64::MAX / 2;
        let d = SquareMatrix::from_rows(&[vec![0, big], vec![big, 0]]);
        let f = SquareMatrix::from_rows(&[vec![0, 3], vec![2, 0]]);
        assert_eq!(Instance::new("x", d, vec![f]), Err(InstanceError::ValueOverflow));
    }

    #[test]
    fn metadata_comes_first() {
        let inst = parse_instance("2\n0 1\n1 0\n0 3\n2 0")
            .unwrap()
            .with_metadata("type", "uniform");
        let text = write_instance(&inst);
        assert_eq!(text.lines().next(), Some("! type=uniform"));
        let back = parse_instance(&text).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = InstanceSpec::new(12, 3, 0.3, 99);
        assert_eq!(generate_uniform(&spec).unwrap(), generate_uniform(&spec).unwrap());
        let other = InstanceSpec { seed: 100, ..spec };
        assert!(!generate_uniform(&other)
            .unwrap()
            .same_problem(&generate_uniform(&InstanceSpec::new(12, 3, 0.3, 99)).unwrap()));
    }

    #[test]
    fn generator_zero_diagonal_and_range() {
        let inst = generate_uniform(&InstanceSpec::new(15, 2, -0.5, 3)).unwrap();
        for matrix in std::iter::once(inst.distances()).chain(inst.flows()) {
            for i in 0..15 {
                assert_eq!(matrix.get(i, i), 0);
                for j in 0..15 {
                    assert!((0..=100).contains(&matrix.get(i, j)));
                }
            }
        }
    }

    #[test]
    fn generator_uncorrelated_small() {
        let inst = generate_uniform(&InstanceSpec::new(10, 2, 0.0, 7)).unwrap();
        let c = flow_correlation(&inst.flows()[0], &inst.flows()[1]);
        assert!(c.abs() <= 0.15, "correlation {c}");
    }

    #[test]
    fn generator_full_correlation_copies_flow() {
        let inst = generate_uniform(&InstanceSpec::new(10, 2, 1.0, 7)).unwrap();
        assert_eq!(inst.flows()[0], inst.flows()[1]);
    }

    #[test]
    fn generator_guard_small_n() {
        assert_eq!(
            generate_uniform(&InstanceSpec::new(2, 2, 0.5, 1)),
            Err(InstanceError::InfeasibleCorrelation(2))
        );
        assert!(matches!(
            generate_uniform(&InstanceSpec::new(10, 2, 1.5, 1)),
            Err(InstanceError::InvalidCorrelation(_))
        ));
    }
}
