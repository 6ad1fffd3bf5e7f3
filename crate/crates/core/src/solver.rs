//! Regularized multi-task objectives and a gradient-descent trainer.

use nalgebra::DMatrix;

use crate::cluster_norm::{cluster_norm_sq, cluster_norm_sq_grad, ClusterNormResult, SpectralBox};
use crate::error::{Error, Result};
use crate::model::{dot, empirical_risk, risk_and_grad, Loss, TaskDataset, TaskMatrix};
use crate::partition::{
    omega_mean, projection_matrices, quad_trace, sigma_inv_of_m, Partition, PenaltyWeights,
};
use crate::scalar::Real;

/// Penalty `Omega(W)` added to the empirical risk.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer<T: Real> {
    /// `eps ||W||_F^2`; tasks learned independently.
    Frobenius { eps: T },
    /// `eps_mean tr W U W^T + eps_between tr W Pi W^T`.
    MtKernel { eps_mean: T, eps_between: T },
    /// `tr W Sigma(M)^{-1} W^T` for a known partition.
    FixedMetric {
        partition: Partition,
        weights: PenaltyWeights<T>,
    },
    /// Squared trace norm, approximated by the cluster norm over the box
    /// `alpha <= l_i <= beta`, `sum l_i = 1` applied to the uncentered `W`.
    TraceNormSq { alpha: T, beta: T },
    /// `eps_mean tr W U W^T + ||W Pi||_c^2` with the box built from the
    /// weights and the cluster count `r`.
    ClusterNorm { weights: PenaltyWeights<T>, r: usize },
}

impl<T: Real> Regularizer<T> {
    /// Squared trace norm with the default approximation box `[1e-6, 1e6]`.
    pub fn trace_norm_sq() -> Self {
        Regularizer::TraceNormSq {
            alpha: T::lit(1e-6),
            beta: T::lit(1e6),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::Frobenius { .. } => "frobenius",
            Regularizer::MtKernel { .. } => "mt_kernel",
            Regularizer::FixedMetric { .. } => "fixed_metric",
            Regularizer::TraceNormSq { .. } => "trace",
            Regularizer::ClusterNorm { .. } => "cluster_norm",
        }
    }

    /// Spectral box used by the spectral penalties for `m` tasks.
    pub fn spectral_box(&self, m: usize) -> Result<Option<SpectralBox<T>>> {
        match self {
            Regularizer::TraceNormSq { alpha, beta } => {
                Ok(Some(SpectralBox::new(*alpha, *beta, T::one(), m)?))
            }
            Regularizer::ClusterNorm { weights, r } => {
                weights.validate()?;
                if weights.eps_within == weights.eps_between {
                    Ok(Some(SpectralBox::pinned(weights.eps_within.recip(), m)?))
                } else {
                    Ok(Some(SpectralBox::from_weights(weights, *r, m)?))
                }
            }
            _ => Ok(None),
        }
    }

    pub fn value(&self, w: &DMatrix<T>) -> Result<T> {
        Ok(self.evaluate(w, false)?.0)
    }

    /// Value and gradient of the penalty.
    pub fn value_and_grad(&self, w: &DMatrix<T>) -> Result<(T, DMatrix<T>)> {
        let (v, g) = self.evaluate(w, true)?;
        Ok((v, g.expect("gradient requested")))
    }

    /// For spectral penalties, the cluster norm solution at `w`.
    pub fn spectral_solution(&self, w: &DMatrix<T>) -> Result<Option<ClusterNormResult<T>>> {
        let m = w.ncols();
        let Some(bx) = self.spectral_box(m)? else {
            return Ok(None);
        };
        match self {
            Regularizer::ClusterNorm { .. } => {
                let (_, pi) = projection_matrices::<T>(m)?;
                Ok(Some(cluster_norm_sq(&(w * pi), &bx)?))
            }
            _ => Ok(Some(cluster_norm_sq(w, &bx)?)),
        }
    }

    fn evaluate(&self, w: &DMatrix<T>, with_grad: bool) -> Result<(T, Option<DMatrix<T>>)> {
        let m = w.ncols();
        let two = T::lit(2.0);
        match self {
            Regularizer::Frobenius { eps } => {
                check_positive("eps", *eps)?;
                let g = with_grad.then(|| w * (two * *eps));
                Ok((*eps * w.norm_squared(), g))
            }
            Regularizer::MtKernel {
                eps_mean,
                eps_between,
            } => {
                check_positive("eps_mean", *eps_mean)?;
                check_positive("eps_between", *eps_between)?;
                let (u, pi) = projection_matrices::<T>(m)?;
                let metric = u * *eps_mean + pi * *eps_between;
                quadratic(w, &metric, with_grad)
            }
            Regularizer::FixedMetric { partition, weights } => {
                if partition.m() != m {
                    return Err(Error::DimensionMismatch(format!(
                        "partition covers {} tasks, W has {m} columns",
                        partition.m()
                    )));
                }
                let metric = sigma_inv_of_m(partition, weights)?;
                quadratic(w, &metric, with_grad)
            }
            Regularizer::TraceNormSq { .. } => {
                let bx = self.spectral_box(m)?.expect("spectral penalty");
                let res = cluster_norm_sq(w, &bx)?;
                let g = if with_grad {
                    Some(cluster_norm_sq_grad(&res)?)
                } else {
                    None
                };
                Ok((res.value, g))
            }
            Regularizer::ClusterNorm { weights, .. } => {
                let bx = self.spectral_box(m)?.expect("spectral penalty");
                let (u, pi) = projection_matrices::<T>(m)?;
                let res = cluster_norm_sq(&(w * &pi), &bx)?;
                let value = weights.eps_mean * omega_mean(w) + res.value;
                let g = if with_grad {
                    Some(w * u * (two * weights.eps_mean) + cluster_norm_sq_grad(&res)? * pi)
                } else {
                    None
                };
                Ok((value, g))
            }
        }
    }
}

fn check_positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveWeight(format!("{name} = {v}")))
    }
}

fn quadratic<T: Real>(
    w: &DMatrix<T>,
    metric: &DMatrix<T>,
    with_grad: bool,
) -> Result<(T, Option<DMatrix<T>>)> {
    let g = with_grad.then(|| w * metric * T::lit(2.0));
    Ok((quad_trace(w, metric), g))
}

/// Settings of the gradient-descent trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig<T> {
    /// Regularization strength.
    pub lambda: T,
    pub max_iters: usize,
    /// Stop once `||grad|| <= grad_tol * (1 + |objective|)`.
    pub grad_tol: T,
    pub initial_step: T,
    /// Step shrink factor applied on each rejected trial.
    pub backtrack: T,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: T,
}

impl<T: Real> FitConfig<T> {
    pub fn new(lambda: T) -> Self {
        Self {
            lambda,
            max_iters: 5000,
            grad_tol: T::lit(1e-5),
            initial_step: T::one(),
            backtrack: T::lit(0.5),
            sufficient_decrease: T::lit(1e-4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return bad("lambda must be > 0");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        if !(self.grad_tol > T::zero()) || !(self.initial_step > T::zero()) {
            return bad("tolerances and initial step must be > 0");
        }
        if !(self.backtrack > T::zero() && self.backtrack < T::one()) {
            return bad("backtrack factor must lie in (0, 1)");
        }
        if !(self.sufficient_decrease > T::zero() && self.sufficient_decrease < T::one()) {
            return bad("sufficient decrease constant must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Outcome of [`fit`].
#[derive(Debug, Clone)]
pub struct FitResult<T: Real> {
    pub w: TaskMatrix<T>,
    /// Objective after every accepted step, starting with the initial point.
    pub objective_trace: Vec<T>,
    pub grad_norm: T,
    pub iterations: usize,
    /// Whether the gradient tolerance was reached.
    pub converged: bool,
    /// Cluster norm solution at the final `W` for the cluster norm penalty.
    pub cluster: Option<ClusterNormResult<T>>,
}

impl<T: Real> FitResult<T> {
    pub fn final_objective(&self) -> T {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }
}

/// `l(W) + lambda * Omega(W)`.
pub fn objective<T: Real>(
    w: &TaskMatrix<T>,
    data: &TaskDataset<T>,
    loss: Loss,
    reg: &Regularizer<T>,
    lambda: T,
) -> Result<T> {
    Ok(empirical_risk(w, data, loss)? + lambda * reg.value(w)?)
}

/// Objective and its gradient with respect to `W`.
pub fn objective_and_grad<T: Real>(
    w: &TaskMatrix<T>,
    data: &TaskDataset<T>,
    loss: Loss,
    reg: &Regularizer<T>,
    lambda: T,
) -> Result<(T, TaskMatrix<T>)> {
    let (risk, mut grad) = risk_and_grad(w, data, loss)?;
    let (pen, pen_grad) = reg.value_and_grad(w)?;
    grad += pen_grad * lambda;
    Ok((risk + lambda * pen, grad))
}

/// Minimizes the regularized objective starting from `W = 0`.
pub fn fit<T: Real>(
    data: &TaskDataset<T>,
    loss: Loss,
    reg: &Regularizer<T>,
    config: &FitConfig<T>,
) -> Result<FitResult<T>> {
    fit_from(data, loss, reg, config, TaskMatrix::zeros(data.d(), data.m()))
}

/// Gradient descent with Armijo backtracking from a given starting point.
///
/// The step is halved until sufficient decrease holds and doubled after
/// every accepted step.
pub fn fit_from<T: Real>(
    data: &TaskDataset<T>,
    loss: Loss,
    reg: &Regularizer<T>,
    config: &FitConfig<T>,
    start: TaskMatrix<T>,
) -> Result<FitResult<T>> {
    config.validate()?;
    let mut w = start;
    let (mut f, mut g) = objective_and_grad(&w, data, loss, reg, config.lambda)?;
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    let mut trace = vec![f];
    let mut step = config.initial_step;
    let min_step = config.initial_step * T::lit(1e-30);
    let max_step = config.initial_step * T::lit(1e30);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        let gnorm2 = g.norm_squared();
        if gnorm2.sqrt() <= config.grad_tol * (T::one() + f.abs()) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = None;
        while step >= min_step {
            let candidate = &w - &g * step;
            let (fc, gc) = objective_and_grad(&candidate, data, loss, reg, config.lambda)?;
            if fc.partial_cmp(&fc).is_none() {
                return Err(Error::NonFiniteObjective { iteration: iterations });
            }
            if fc <= f - config.sufficient_decrease * step * gnorm2 {
                accepted = Some((candidate, fc, gc));
                break;
            }
            step *= config.backtrack;
        }
        let Some((candidate, fc, gc)) = accepted else {
            // No representable decrease left along the gradient.
            break;
        };
        w = candidate;
        f = fc;
        g = gc;
        trace.push(f);
        step = (step * T::lit(2.0)).min(max_step);
    }
    if !converged && g.norm() <= config.grad_tol * (T::one() + f.abs()) {
        converged = true;
    }

    let cluster = match reg {
        Regularizer::ClusterNorm { .. } => reg.spectral_solution(&w)?,
        _ => None,
    };
    Ok(FitResult {
        grad_norm: g.norm(),
        w,
        objective_trace: trace,
        iterations,
        converged,
        cluster,
    })
}

/// `w_task^T x`.
pub fn predict<T: Real>(w: &TaskMatrix<T>, x: &[T], task: usize) -> Result<T> {
    if task >= w.ncols() {
        return Err(Error::TaskOutOfRange {
            task,
            m: w.ncols(),
        });
    }
    if x.len() != w.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} features, W has {} rows",
            x.len(),
            w.nrows()
        )));
    }
    Ok(dot(w.column(task).as_slice(), x))
}

fn per_task_mean<T: Real>(
    w: &TaskMatrix<T>,
    data: &TaskDataset<T>,
    score: impl Fn(T, T) -> T,
    finish: impl Fn(T) -> T,
) -> Result<T> {
    data.check_matrix(w)?;
    let mut total = T::zero();
    let mut tasks = 0;
    for t in 0..data.m() {
        let idx = data.task_indices(t);
        if idx.is_empty() {
            continue;
        }
        let wt = w.column(t);
        let acc = idx.iter().fold(T::zero(), |acc, &i| {
            acc + score(dot(wt.as_slice(), data.x(i)), data.y(i))
        });
        total += finish(acc / T::from_count(idx.len()));
        tasks += 1;
    }
    if tasks == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(total / T::from_count(tasks))
}

/// Mean over tasks of the per-task root mean squared error.
pub fn rmse<T: Real>(w: &TaskMatrix<T>, data: &TaskDataset<T>) -> Result<T> {
    per_task_mean(w, data, |u, y| (u - y) * (u - y), |mse| mse.sqrt())
}

/// Mean over tasks of the fraction of examples with `sign(w^T x) != y`.
pub fn misclassification_rate<T: Real>(w: &TaskMatrix<T>, data: &TaskDataset<T>) -> Result<T> {
    per_task_mean(
        w,
        data,
        |u, y| {
            let predicted = if u >= T::zero() { T::one() } else { -T::one() };
            if predicted == y {
                T::zero()
            } else {
                T::one()
            }
        },
        |rate| rate,
    )
}
