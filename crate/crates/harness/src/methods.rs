//! One fitting pipeline per benchmark method.

use anyhow::{bail, Result};
use clusternorm::partition::sigma_of_m;
use clusternorm::{
    alternate_fit, fit, reconstruct_sigma_star, reproject_sigma, true_metric_fit, FitConfig,
    KMeansConfig, Loss, MatrixF64, Partition, Regularizer, TaskDatasetF64,
};

use crate::spec::{Hyper, Method};

/// What a method produced on one training set.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub w: MatrixF64,
    /// Objective reported by the final fit.
    pub objective: f64,
    /// Gradient steps summed over every fit the method ran.
    pub iterations: usize,
    pub converged: bool,
    /// Partition behind the final metric, for the clustering methods.
    pub partition: Option<Partition>,
    /// Learned task metric, for methods that learn one.
    pub sigma: Option<MatrixF64>,
}

pub fn fit_config(hyper: &Hyper, method: Method) -> FitConfig<f64> {
    FitConfig {
        max_iters: hyper.max_iters,
        grad_tol: hyper.grad_tol,
        ..FitConfig::new(hyper.lambda_for(method))
    }
}

pub fn kmeans_config(hyper: &Hyper, seed: u64) -> KMeansConfig {
    KMeansConfig {
        restarts: hyper.kmeans_restarts,
        max_outer_iters: hyper.max_outer_iters,
        ..KMeansConfig::new(hyper.clusters, seed)
    }
}

/// The penalty a single-fit method minimizes. `None` for the pipelines
/// that combine several fits.
pub fn regularizer(method: Method, hyper: &Hyper) -> Result<Option<Regularizer<f64>>> {
    let weights = hyper.weights()?;
    Ok(match method {
        Method::Frobenius | Method::Pooling => Some(Regularizer::Frobenius { eps: 1.0 }),
        Method::MtKernel => Some(Regularizer::MtKernel {
            eps_mean: weights.eps_mean,
            eps_between: weights.eps_between,
        }),
        Method::Trace => Some(Regularizer::TraceNormSq {
            alpha: hyper.trace_alpha,
            beta: hyper.trace_beta,
        }),
        Method::ClusterNorm => Some(Regularizer::ClusterNorm {
            weights,
            r: hyper.clusters,
        }),
        Method::TrueMetric | Method::KMeansAlt | Method::Reprojected | Method::CnInit => None,
    })
}

fn single(
    train: &TaskDatasetF64,
    loss: Loss,
    reg: &Regularizer<f64>,
    cfg: &FitConfig<f64>,
) -> Result<MethodOutput> {
    let res = fit(train, loss, reg, cfg)?;
    let sigma = match &res.cluster {
        Some(c) => Some(reconstruct_sigma_star(c)?),
        None => None,
    };
    Ok(MethodOutput {
        objective: res.final_objective(),
        iterations: res.iterations,
        converged: res.converged,
        partition: None,
        sigma,
        w: res.w,
    })
}

/// Fits `method` on `train`.
///
/// `truth` is required by `true_metric` only. `seed` drives every k-means
/// call made by the clustering methods.
pub fn fit_method(
    method: Method,
    train: &TaskDatasetF64,
    hyper: &Hyper,
    truth: Option<&Partition>,
    seed: u64,
) -> Result<MethodOutput> {
    let loss = hyper.loss;
    let cfg = fit_config(hyper, method);
    let weights = hyper.weights()?;
    let kcfg = kmeans_config(hyper, seed);
    let metric = |p: &Partition| sigma_of_m(p, &weights);
    match method {
        Method::Frobenius | Method::MtKernel | Method::Trace | Method::ClusterNorm => {
            let reg = regularizer(method, hyper)?.expect("single-fit method");
            single(train, loss, &reg, &cfg)
        }
        Method::Pooling => {
            let reg = regularizer(method, hyper)?.expect("single-fit method");
            let pooled = single(&train.pooled(), loss, &reg, &cfg)?;
            let column = pooled.w.column(0).into_owned();
            let w = MatrixF64::from_fn(train.d(), train.m(), |k, _| column[k]);
            Ok(MethodOutput { w, ..pooled })
        }
        Method::TrueMetric => {
            let Some(p) = truth else {
                bail!("true_metric needs the generating partition");
            };
            let res = true_metric_fit(train, loss, p, &weights, &cfg)?;
            Ok(MethodOutput {
                objective: res.final_objective(),
                iterations: res.iterations,
                converged: res.converged,
                partition: Some(p.clone()),
                sigma: Some(metric(p)?),
                w: res.w,
            })
        }
        Method::KMeansAlt | Method::CnInit => {
            let mut iterations = 0;
            let init = if method == Method::CnInit {
                let cn = fit_method(Method::ClusterNorm, train, hyper, None, seed)?;
                iterations += cn.iterations;
                Some(cn.w)
            } else {
                None
            };
            let res = alternate_fit(train, loss, &weights, &kcfg, &cfg, init.as_ref())?;
            Ok(MethodOutput {
                objective: res.fit.final_objective(),
                iterations: iterations + res.fit.iterations,
                converged: res.fit.converged,
                sigma: Some(metric(&res.partition)?),
                partition: Some(res.partition),
                w: res.fit.w,
            })
        }
        Method::Reprojected => {
            let cn_cfg = fit_config(hyper, Method::ClusterNorm);
            let reg = regularizer(Method::ClusterNorm, hyper)?.expect("single-fit method");
            let cn = fit(train, loss, &reg, &cn_cfg)?;
            let spectrum = cn.cluster.as_ref().expect("cluster norm fit keeps its spectrum");
            let p = reproject_sigma(spectrum, &kcfg)?;
            let res = true_metric_fit(train, loss, &p, &weights, &cfg)?;
            Ok(MethodOutput {
                objective: res.final_objective(),
                iterations: cn.iterations + res.iterations,
                converged: res.converged,
                sigma: Some(metric(&p)?),
                partition: Some(p),
                w: res.w,
            })
        }
    }
}

/// Test metric for a loss: RMSE for regression, error rate for classification.
pub fn metric_name(loss: Loss) -> &'static str {
    match loss {
        Loss::Square => "rmse",
        Loss::Logistic => "error_rate",
    }
}

pub fn evaluate(w: &MatrixF64, test: &TaskDatasetF64, loss: Loss) -> Result<f64> {
    Ok(match loss {
        Loss::Square => clusternorm::rmse(w, test)?,
        Loss::Logistic => clusternorm::misclassification_rate(w, test)?,
    })
}
