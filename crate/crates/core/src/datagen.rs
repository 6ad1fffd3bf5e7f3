//! Synthetic clustered regression tasks.
//!
//! Cluster centers live on disjoint blocks of the first `d - 2` coordinates.
//! Each task adds a deviation on its center's block, and every task also uses
//! the last two coordinates. Inputs are standard normal and outputs carry
//! Gaussian noise.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{TaskDataset, TaskMatrix};
use crate::partition::Partition;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub d: usize,
    pub clusters: usize,
    pub tasks_per_cluster: usize,
    /// Variance of the nonzero center entries.
    pub var_center: f64,
    /// Variance of the task deviations and of the shared last two features.
    pub var_task: f64,
    pub var_noise: f64,
    pub points_per_task: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            d: 30,
            clusters: 2,
            tasks_per_cluster: 2,
            var_center: 900.0,
            var_task: 16.0,
            var_noise: 150.0,
            points_per_task: 2000,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn m(&self) -> usize {
        self.clusters * self.tasks_per_cluster
    }

    /// Width of each center's support block.
    pub fn block_width(&self) -> usize {
        (self.d - 2) / self.clusters
    }

    fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.tasks_per_cluster == 0 || self.points_per_task == 0 {
            return Err(Error::InvalidConfig("cluster, task and point counts must be >= 1".into()));
        }
        if self.d < 2 + self.clusters || !(self.d - 2).is_multiple_of(self.clusters) {
            return Err(Error::InvalidConfig(format!(
                "d = {} must leave d - 2 divisible into {} non-empty blocks",
                self.d, self.clusters
            )));
        }
        for v in [self.var_center, self.var_task, self.var_noise] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig("variances must be finite and >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Parameters that generated a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth<T> {
    pub w_true: TaskMatrix<T>,
    /// One center per column.
    pub centers: DMatrix<T>,
    pub partition: Partition,
}

fn normal(var: f64) -> Normal<f64> {
    Normal::new(0.0, var.sqrt()).expect("validated variance")
}

/// Draws the task vectors and `points_per_task` noisy examples per task.
///
/// Tasks are numbered cluster by cluster; examples are stored task by task.
pub fn generate<T: Real>(config: &SyntheticConfig) -> Result<(TaskDataset<T>, SyntheticTruth<T>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (d, m, width) = (config.d, config.m(), config.block_width());

    let center_dist = normal(config.var_center);
    let mut centers = DMatrix::<f64>::zeros(d, config.clusters);
    for c in 0..config.clusters {
        for k in c * width..(c + 1) * width {
            centers[(k, c)] = center_dist.sample(&mut rng);
        }
    }

    let task_dist = normal(config.var_task);
    let mut w_true = DMatrix::<f64>::zeros(d, m);
    let mut assignment = Vec::with_capacity(m);
    for t in 0..m {
        let c = t / config.tasks_per_cluster;
        assignment.push(c);
        for k in c * width..(c + 1) * width {
            w_true[(k, t)] = centers[(k, c)] + task_dist.sample(&mut rng);
        }
        for k in d - 2..d {
            w_true[(k, t)] = task_dist.sample(&mut rng);
        }
    }

    let noise = normal(config.var_noise);
    let n = m * config.points_per_task;
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    let mut task = Vec::with_capacity(n);
    for t in 0..m {
        for _ in 0..config.points_per_task {
            let xi: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let clean: f64 = xi.iter().zip(w_true.column(t).iter()).map(|(a, b)| a * b).sum();
            y.push(T::lit(clean + noise.sample(&mut rng)));
            x.extend(xi.into_iter().map(T::lit));
            task.push(t);
        }
    }

    let data = TaskDataset::from_parts(d, m, x, y, task)?;
    let truth = SyntheticTruth {
        w_true: w_true.map(T::lit),
        centers: centers.map(T::lit),
        partition: Partition::new(assignment, config.clusters)?,
    };
    Ok((data, truth))
}

/// Number of training examples given to each task for a total of `n_train`.
///
/// The budget is split evenly across clusters; within a cluster the first
/// task receives `ceil(5/6)` of it and the other tasks share the rest.
pub fn training_counts(partition: &Partition, n_train: usize) -> Result<Vec<usize>> {
    let r = partition.r();
    if n_train == 0 || !n_train.is_multiple_of(r) {
        return Err(Error::InvalidConfig(format!(
            "n_train = {n_train} must be a positive multiple of the {r} clusters"
        )));
    }
    let per_cluster = n_train / r;
    let mut counts = vec![0; partition.m()];
    for c in 0..r {
        let members = partition.members(c);
        if members.len() == 1 {
            counts[members[0]] = per_cluster;
            continue;
        }
        let first = (5 * per_cluster).div_ceil(6);
        counts[members[0]] = first;
        let rest = per_cluster - first;
        let others = members.len() - 1;
        for (k, &t) in members[1..].iter().enumerate() {
            counts[t] = rest / others + usize::from(k < rest % others);
        }
    }
    Ok(counts)
}

/// Splits a synthetic dataset into the `fold`-th training fold and a test set
/// holding every other example.
///
/// Each task's examples are shuffled once with `seed`; fold `f` takes the
/// `f`-th consecutive chunk of the task's training count, so folds are disjoint.
pub fn train_test_split<T: Real>(
    data: &TaskDataset<T>,
    truth: &SyntheticTruth<T>,
    n_train: usize,
    fold: usize,
    seed: u64,
) -> Result<(TaskDataset<T>, TaskDataset<T>)> {
    let counts = training_counts(&truth.partition, n_train)?;
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(data.n().saturating_sub(n_train));
    for (t, &count) in counts.iter().enumerate() {
        let mut idx = data.task_indices(t).to_vec();
        let lo = fold * count;
        let hi = lo + count;
        if hi > idx.len() {
            return Err(Error::InvalidConfig(format!(
                "fold {fold} needs {hi} examples of task {t}, only {} available",
                idx.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[lo..hi]);
        test.extend(idx[..lo].iter().chain(&idx[hi..]));
    }
    Ok((data.subset(&train), data.subset(&test)))
}
