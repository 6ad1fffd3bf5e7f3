//! Partitions of tasks into clusters and the quadratic penalties they induce.
//!
//! A partition with indicator matrix `E` defines the projection
//! `M = E (E^T E)^{-1} E^T`. Together with the mean projection `U = 11^T / m`
//! and the centering projection `Pi = I - U`, the three orthogonal projections
//! `U`, `M - U` and `I - M` split `tr W W^T` into a mean part, a
//! between-cluster part and a within-cluster part.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Cluster assignment of `m` tasks into `r` non-empty clusters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    assignment: Vec<usize>,
    r: usize,
}

impl Partition {
    /// Validates an assignment vector with labels in `0..r`.
    pub fn new(assignment: Vec<usize>, r: usize) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::InvalidPartition("no tasks".into()));
        }
        if r == 0 || r > assignment.len() {
            return Err(Error::InvalidPartition(format!(
                "{r} clusters for {} tasks",
                assignment.len()
            )));
        }
        let mut sizes = vec![0usize; r];
        for &c in &assignment {
            if c >= r {
                return Err(Error::InvalidPartition(format!("label {c} >= r = {r}")));
            }
            sizes[c] += 1;
        }
        if let Some(c) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidPartition(format!("cluster {c} is empty")));
        }
        Ok(Self { assignment, r })
    }

    /// Builds a partition from arbitrary labels, renumbered by first appearance.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        let assignment: Vec<usize> = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        let r = map.len();
        Self::new(assignment, r)
    }

    /// Every task in its own cluster.
    pub fn singletons(m: usize) -> Result<Self> {
        Self::new((0..m).collect(), m)
    }

    /// All tasks in one cluster.
    pub fn single(m: usize) -> Result<Self> {
        Self::new(vec![0; m], 1)
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn m(&self) -> usize {
        self.assignment.len()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn cluster_of(&self, task: usize) -> usize {
        self.assignment[task]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.r];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.m()).filter(|&i| self.assignment[i] == c).collect()
    }

    /// Same partition with clusters renumbered by first appearance.
    pub fn canonical(&self) -> Self {
        Self::from_labels(&self.assignment).expect("relabeling a valid partition")
    }

    /// True when both partitions group the tasks identically, ignoring labels.
    pub fn same_clusters(&self, other: &Partition) -> bool {
        self.canonical().assignment == other.canonical().assignment
    }

    /// The `m x r` binary indicator matrix `E`.
    pub fn indicator<T: Real>(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.m(), self.r, |i, c| {
            if self.assignment[i] == c {
                T::one()
            } else {
                T::zero()
            }
        })
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let labels: Vec<String> = self.assignment.iter().map(|c| c.to_string()).collect();
        write!(f, "{}", labels.join(" "))
    }
}

/// Adjusted Rand index between two labelings of the same tasks.
///
/// Equals 1 exactly when the partitions agree up to relabeling.
pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> f64 {
    assert_eq!(a.m(), b.m(), "partitions of different task sets");
    let n = a.m();
    let comb2 = |k: usize| (k * k.saturating_sub(1)) as f64 / 2.0;
    let mut table = vec![vec![0usize; b.r()]; a.r()];
    for i in 0..n {
        table[a.cluster_of(i)][b.cluster_of(i)] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&k| comb2(k)).sum();
    let sum_a: f64 = a.sizes().into_iter().map(comb2).sum();
    let sum_b: f64 = b.sizes().into_iter().map(comb2).sum();
    let total = comb2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < f64::EPSILON {
        // Both partitions trivial (all singletons or a single cluster).
        return if a.same_clusters(b) { 1.0 } else { 0.0 };
    }
    (index - expected) / (max_index - expected)
}

/// Weights `(eps_mean, eps_between, eps_within)` of the three semi-norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyWeights<T> {
    pub eps_mean: T,
    pub eps_between: T,
    pub eps_within: T,
}

impl<T: Real> PenaltyWeights<T> {
    pub fn new(eps_mean: T, eps_between: T, eps_within: T) -> Result<Self> {
        let w = Self {
            eps_mean,
            eps_between,
            eps_within,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_mean", self.eps_mean),
            ("eps_between", self.eps_between),
            ("eps_within", self.eps_within),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::NonPositiveWeight(format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

/// The mean projection `U = 11^T/m` and centering projection `Pi = I - U`.
pub fn projection_matrices<T: Real>(m: usize) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if m == 0 {
        return Err(Error::InvalidConfig("projection matrices need m >= 1".into()));
    }
    let u = DMatrix::from_element(m, m, T::one() / T::from_count(m));
    let pi = DMatrix::identity(m, m) - &u;
    Ok((u, pi))
}

/// `M = E (E^T E)^{-1} E^T`: `1/m_c` between tasks of the same cluster, else 0.
pub fn partition_to_m<T: Real>(p: &Partition) -> DMatrix<T> {
    let sizes = p.sizes();
    DMatrix::from_fn(p.m(), p.m(), |i, j| {
        let c = p.cluster_of(i);
        if c == p.cluster_of(j) {
            T::one() / T::from_count(sizes[c])
        } else {
            T::zero()
        }
    })
}

fn check_cols<T: Real>(w: &DMatrix<T>, m: usize) -> Result<()> {
    if w.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "W has {} columns, partition has {m} tasks",
            w.ncols()
        )));
    }
    Ok(())
}

/// `tr W P W^T` for a symmetric `m x m` matrix `P`.
pub(crate) fn quad_trace<T: Real>(w: &DMatrix<T>, p: &DMatrix<T>) -> T {
    (w * p).component_mul(w).sum()
}

/// `tr W U W^T = m * ||mean column||^2`.
pub fn omega_mean<T: Real>(w: &DMatrix<T>) -> T {
    let m = w.ncols();
    if m == 0 {
        return T::zero();
    }
    let sum = w.column_sum();
    sum.norm_squared() / T::from_count(m)
}

/// Between-cluster variance `tr W (M - U) W^T`.
pub fn omega_between<T: Real>(w: &DMatrix<T>, p: &Partition) -> Result<T> {
    check_cols(w, p.m())?;
    let (u, _) = projection_matrices::<T>(p.m())?;
    Ok(quad_trace(w, &(partition_to_m::<T>(p) - u)))
}

/// Within-cluster variance `tr W (I - M) W^T`.
pub fn omega_within<T: Real>(w: &DMatrix<T>, p: &Partition) -> Result<T> {
    check_cols(w, p.m())?;
    let m = p.m();
    Ok(quad_trace(w, &(DMatrix::identity(m, m) - partition_to_m::<T>(p))))
}

/// `Sigma(M)^{-1} = eps_M U + eps_B (M - U) + eps_W (I - M)`.
pub fn sigma_inv_of_m<T: Real>(p: &Partition, weights: &PenaltyWeights<T>) -> Result<DMatrix<T>> {
    weights.validate()?;
    Ok(combine_projections(
        p,
        weights.eps_mean,
        weights.eps_between,
        weights.eps_within,
    ))
}

/// `Sigma(M) = U / eps_M + (M - U) / eps_B + (I - M) / eps_W`.
pub fn sigma_of_m<T: Real>(p: &Partition, weights: &PenaltyWeights<T>) -> Result<DMatrix<T>> {
    weights.validate()?;
    Ok(combine_projections(
        p,
        weights.eps_mean.recip(),
        weights.eps_between.recip(),
        weights.eps_within.recip(),
    ))
}

fn combine_projections<T: Real>(p: &Partition, a: T, b: T, c: T) -> DMatrix<T> {
    let m = p.m();
    let u = DMatrix::from_element(m, m, T::one() / T::from_count(m));
    let mm = partition_to_m::<T>(p);
    let between = &mm - &u;
    let within = DMatrix::identity(m, m) - mm;
    u * a + between * b + within * c
}

/// `tr W Sigma(M)^{-1} W^T`.
pub fn fixed_metric_penalty<T: Real>(
    w: &DMatrix<T>,
    p: &Partition,
    weights: &PenaltyWeights<T>,
) -> Result<T> {
    check_cols(w, p.m())?;
    let inv = sigma_inv_of_m(p, weights)?;
    Ok(quad_trace(w, &inv))
}
