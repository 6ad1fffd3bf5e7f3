//! Non-convex and hybrid clustered methods: k-means on the task vectors,
//! alternation between weights and metric, and rounding of a relaxed metric
//! back to a partition.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster_norm::ClusterNormResult;
use crate::error::{Error, Result};
use crate::model::{Loss, TaskDataset, TaskMatrix};
use crate::partition::{omega_within, partition_to_m, projection_matrices, Partition, PenaltyWeights};
use crate::scalar::Real;
use crate::solver::{fit, fit_from, FitConfig, FitResult, Regularizer};

/// Settings for clustering tasks and for the alternating method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KMeansConfig {
    /// Number of clusters.
    pub r: usize,
    /// Seeded restarts; the lowest-inertia run wins.
    pub restarts: usize,
    pub max_kmeans_iters: usize,
    /// Alternation rounds between fitting `W` and re-clustering.
    pub max_outer_iters: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(r: usize, seed: u64) -> Self {
        Self {
            r,
            restarts: 3,
            max_kmeans_iters: 100,
            max_outer_iters: 20,
            seed,
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.r == 0 || self.r > m {
            return Err(Error::InvalidConfig(format!(
                "cannot form {} clusters from {m} tasks",
                self.r
            )));
        }
        if self.restarts == 0 || self.max_kmeans_iters == 0 || self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig(
                "restarts and iteration limits must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Best k-means run over the restarts.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOutcome<T> {
    pub partition: Partition,
    pub inertia: T,
    /// Inertia after each assignment step of the winning run.
    pub inertia_trace: Vec<T>,
}

fn sq_dist<T: Real>(points: &DMatrix<T>, i: usize, center: &[T]) -> T {
    points
        .row(i)
        .iter()
        .zip(center)
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
}

/// k-means++ style seeding: first center uniform, then proportional to the
/// squared distance to the nearest chosen center.
fn seed_centers<T: Real>(points: &DMatrix<T>, r: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let n = points.nrows();
    let row = |i: usize| points.row(i).iter().copied().collect::<Vec<T>>();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut centers = vec![row(chosen[0])];
    while centers.len() < r {
        let dists: Vec<f64> = (0..n)
            .map(|i| {
                centers
                    .iter()
                    .map(|c| sq_dist(points, i, c))
                    .fold(T::max_value().expect("bounded scalar"), |a, b| a.min(b))
                    .as_f64()
            })
            .collect();
        let total: f64 = dists.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &dist) in dists.iter().enumerate() {
                if target < dist {
                    pick = i;
                    break;
                }
                target -= dist;
            }
            pick
        } else {
            // All points coincide with a center; take any unused index.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(pick);
        centers.push(row(pick));
    }
    centers
}

fn lloyd<T: Real>(
    points: &DMatrix<T>,
    mut centers: Vec<Vec<T>>,
    max_iters: usize,
) -> (Vec<usize>, T, Vec<T>) {
    let (n, dim) = points.shape();
    let r = centers.len();
    let mut assignment = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..max_iters {
        let mut next = vec![0usize; n];
        let mut cost = vec![T::zero(); n];
        for i in 0..n {
            let (best, d) = centers
                .iter()
                .enumerate()
                .map(|(c, center)| (c, sq_dist(points, i, center)))
                .fold((0, T::max_value().expect("bounded scalar")), |acc, cur| {
                    if cur.1 < acc.1 {
                        cur
                    } else {
                        acc
                    }
                });
            next[i] = best;
            cost[i] = d;
        }
        // Re-seed empty clusters with the point farthest from its center.
        let mut sizes = vec![0usize; r];
        for &c in &next {
            sizes[c] += 1;
        }
        for c in 0..r {
            if sizes[c] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| sizes[next[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if cost[b] >= cost[i] => Some(b),
                    _ => Some(i),
                })
                .expect("r <= n leaves a cluster with two points");
            sizes[next[donor]] -= 1;
            next[donor] = c;
            sizes[c] = 1;
            cost[donor] = T::zero();
            centers[c] = points.row(donor).iter().copied().collect();
        }
        trace.push(cost.iter().fold(T::zero(), |a, &b| a + b));
        if next == assignment {
            break;
        }
        assignment = next;
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
            let count = T::from_count(members.len());
            for (k, value) in center.iter_mut().enumerate().take(dim) {
                *value = members.iter().fold(T::zero(), |a, &i| a + points[(i, k)]) / count;
            }
        }
    }
    let inertia = *trace.last().expect("at least one assignment step");
    (assignment, inertia, trace)
}

/// Clusters the rows of `points` into `r` groups.
pub fn kmeans_rows<T: Real>(
    points: &DMatrix<T>,
    r: usize,
    restarts: usize,
    max_iters: usize,
    seed: u64,
) -> Result<KMeansOutcome<T>> {
    let n = points.nrows();
    if r == 0 || r > n {
        return Err(Error::InvalidConfig(format!("cannot form {r} clusters from {n} points")));
    }
    if restarts == 0 || max_iters == 0 {
        return Err(Error::InvalidConfig("restarts and iterations must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansOutcome<T>> = None;
    for _ in 0..restarts {
        let centers = seed_centers(points, r, &mut rng);
        let (assignment, inertia, trace) = lloyd(points, centers, max_iters);
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(KMeansOutcome {
                partition: Partition::from_labels(&assignment)?,
                inertia,
                inertia_trace: trace,
            });
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Clusters the task vectors (columns of `W`).
pub fn kmeans_tasks<T: Real>(w: &TaskMatrix<T>, config: &KMeansConfig) -> Result<Partition> {
    Ok(kmeans_tasks_detailed(w, config)?.partition)
}

pub fn kmeans_tasks_detailed<T: Real>(
    w: &TaskMatrix<T>,
    config: &KMeansConfig,
) -> Result<KMeansOutcome<T>> {
    config.validate(w.ncols())?;
    kmeans_rows(
        &w.transpose(),
        config.r,
        config.restarts,
        config.max_kmeans_iters,
        config.seed,
    )
}

/// Result of the alternating method.
#[derive(Debug, Clone)]
pub struct AlternatingResult<T: Real> {
    /// Last fit of `W` under the fixed metric of `partition`.
    pub fit: FitResult<T>,
    pub partition: Partition,
    pub rounds: usize,
    /// Fixed-metric objective at the end of each round.
    pub round_objectives: Vec<T>,
}

/// Alternates between fitting `W` under the metric of a partition and
/// re-clustering the columns of `W`.
///
/// The first partition comes from clustering `init` when given, otherwise
/// from a Frobenius fit with `eps = eps_between`. Rounds after the first start
/// from the previous `W`. The loop ends when k-means returns the current
/// partition, when it fails to lower the within-cluster spread, or after
/// `max_outer_iters` fits.
pub fn alternate_fit<T: Real>(
    data: &TaskDataset<T>,
    loss: Loss,
    weights: &PenaltyWeights<T>,
    config: &KMeansConfig,
    fit_config: &FitConfig<T>,
    init: Option<&TaskMatrix<T>>,
) -> Result<AlternatingResult<T>> {
    config.validate(data.m())?;
    weights.validate()?;
    let start = match init {
        Some(w) => w.clone(),
        None => {
            let reg = Regularizer::Frobenius {
                eps: weights.eps_between,
            };
            fit(data, loss, &reg, fit_config)?.w
        }
    };
    let mut partition = kmeans_tasks(&start, config)?;
    let mut w = TaskMatrix::zeros(data.d(), data.m());
    let mut round_objectives = Vec::new();
    let mut rounds = 0;
    loop {
        let reg = Regularizer::FixedMetric {
            partition: partition.clone(),
            weights: *weights,
        };
        let result = fit_from(data, loss, &reg, fit_config, w)?;
        rounds += 1;
        round_objectives.push(result.final_objective());
        if rounds >= config.max_outer_iters {
            return Ok(AlternatingResult {
                fit: result,
                partition,
                rounds,
                round_objectives,
            });
        }
        let round_config = KMeansConfig {
            seed: config.seed.wrapping_add(rounds as u64),
            ..config.clone()
        };
        let next = kmeans_tasks(&result.w, &round_config)?;
        let improves = !next.same_clusters(&partition)
            && omega_within(&result.w, &next)? < omega_within(&result.w, &partition)?;
        if !improves {
            return Ok(AlternatingResult {
                fit: result,
                partition,
                rounds,
                round_objectives,
            });
        }
        partition = next;
        w = result.w;
    }
}

/// Single fit under the metric of a known partition.
pub fn true_metric_fit<T: Real>(
    data: &TaskDataset<T>,
    loss: Loss,
    true_partition: &Partition,
    weights: &PenaltyWeights<T>,
    fit_config: &FitConfig<T>,
) -> Result<FitResult<T>> {
    let reg = Regularizer::FixedMetric {
        partition: true_partition.clone(),
        weights: *weights,
    };
    fit(data, loss, &reg, fit_config)
}

/// Rounds a relaxed cluster-norm metric to a partition with `r` clusters.
///
/// The relaxed metric acts on centered task vectors; the full metric adds
/// the mean direction `1/sqrt(m)` with the largest eigenvalue `1/eps_mean`.
/// The embedding therefore holds that constant direction plus the `r - 1`
/// eigenvectors of `Sigma*` with the largest eigenvalues (ties broken by
/// singular value), and k-means runs on its rows.
pub fn reproject_sigma<T: Real>(
    result: &ClusterNormResult<T>,
    config: &KMeansConfig,
) -> Result<Partition> {
    let v = result.right_factors().ok_or_else(|| {
        Error::InvalidConfig("cluster norm result carries no singular factors".into())
    })?;
    let m = v.nrows();
    config.validate(m)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        let key = |k: usize| (result.lambda_star[k], result.singular_values[k]);
        let (li, si) = key(i);
        let (lj, sj) = key(j);
        lj.partial_cmp(&li)
            .expect("finite spectrum")
            .then(sj.partial_cmp(&si).expect("finite spectrum"))
            .then(i.cmp(&j))
    });
    let mut embedding = DMatrix::from_element(m, config.r, T::one() / T::from_count(m).sqrt());
    for (k, &col) in order.iter().take(config.r - 1).enumerate() {
        embedding.set_column(k + 1, &v.column(col));
    }
    Ok(kmeans_rows(&embedding, config.r, config.restarts, config.max_kmeans_iters, config.seed)?.partition)
}

/// Rounds a symmetric metric to a partition by k-means on the rows of its
/// top-`r` eigenvectors.
pub fn reproject_matrix<T: Real>(sigma: &DMatrix<T>, config: &KMeansConfig) -> Result<Partition> {
    let m = sigma.nrows();
    if sigma.ncols() != m {
        return Err(Error::DimensionMismatch("metric must be square".into()));
    }
    config.validate(m)?;
    let eig = SymmetricEigen::new(sigma.clone());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
            .then(i.cmp(&j))
    });
    let mut embedding = DMatrix::zeros(m, config.r);
    for (k, &col) in order.iter().take(config.r).enumerate() {
        embedding.set_column(k, &eig.eigenvectors.column(col));
    }
    Ok(kmeans_rows(&embedding, config.r, config.restarts, config.max_kmeans_iters, config.seed)?.partition)
}

/// K-means objective minimized in closed form over penalized centers:
/// `tr Pi W^T W Pi (Pi M Pi / lam + I)^{-1}`.
pub fn kmeans_relaxation_value<T: Real>(w: &TaskMatrix<T>, p: &Partition, lam: T) -> Result<T> {
    if !(lam > T::zero()) {
        return Err(Error::InvalidConfig("lambda must be > 0".into()));
    }
    let m = p.m();
    if w.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "W has {} columns, partition has {m} tasks",
            w.ncols()
        )));
    }
    let (_, pi) = projection_matrices::<T>(m)?;
    let gram = &pi * w.transpose() * w * &pi;
    let system = &pi * partition_to_m::<T>(p) * &pi / lam + DMatrix::identity(m, m);
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::InvalidConfig("relaxation system not positive definite".into()))?;
    Ok(chol.solve(&gram).trace())
}
