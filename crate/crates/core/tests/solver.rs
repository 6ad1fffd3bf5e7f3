mod common;

use std::time::Instant;

use clusternorm::{
    fit, objective, objective_and_grad, FitConfig, Loss, Partition, PenaltyWeights, Regularizer,
    TaskDataset,
};
use common::{random_matrix, rel_err, rng};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_data(r: &mut ChaCha8Rng, d: usize, m: usize, per_task: usize, loss: Loss) -> TaskDataset<f64> {
    let mut examples = Vec::new();
    for t in 0..m {
        for _ in 0..per_task {
            let x: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
            let y = match loss {
                Loss::Square => r.random_range(-3.0..3.0),
                Loss::Logistic => {
                    if r.random_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            examples.push((x, y, t));
        }
    }
    TaskDataset::from_examples(d, m, examples).unwrap()
}

fn weights(r: &mut ChaCha8Rng) -> PenaltyWeights<f64> {
    let em = r.random_range(0.1..1.0);
    let eb = em + r.random_range(0.1..2.0);
    let ew = eb + r.random_range(0.1..4.0);
    PenaltyWeights::new(em, eb, ew).unwrap()
}

/// Per-task ridge solution of `(1/n) sum (x^T w - y)^2 / 2 + lam eps ||W||^2`.
fn ridge_closed_form(data: &TaskDataset<f64>, lam_eps: f64) -> DMatrix<f64> {
    let (d, m, n) = (data.d(), data.m(), data.n() as f64);
    let mut w = DMatrix::zeros(d, m);
    for t in 0..m {
        let mut a = DMatrix::identity(d, d) * (2.0 * n * lam_eps);
        let mut b = DVector::zeros(d);
        for &i in data.task_indices(t) {
            let x = DVector::from_row_slice(data.x(i));
            a += &x * x.transpose();
            b += &x * data.y(i);
        }
        w.set_column(t, &a.lu().solve(&b).unwrap());
    }
    w
}

#[test]
fn frobenius_fit_matches_ridge_closed_form() {
    let mut r = rng(21);
    for case in 0..20 {
        let d = 1 + case % 5;
        let m = r.random_range(1..=3);
        let per_task = r.random_range(3..20);
        let data = random_data(&mut r, d, m, per_task, Loss::Square);
        let lam = r.random_range(0.01..1.0);
        let eps = r.random_range(0.1..2.0);
        let cfg = FitConfig {
            grad_tol: 1e-10,
            max_iters: 100_000,
            ..FitConfig::new(lam)
        };
        let start = Instant::now();
        let res = fit(&data, Loss::Square, &Regularizer::Frobenius { eps }, &cfg).unwrap();
        assert!(start.elapsed().as_secs_f64() < 1.0);
        let oracle = ridge_closed_form(&data, lam * eps);
        let err = (&res.w - &oracle).norm() / oracle.norm().max(1e-12);
        assert!(err < 1e-6, "case {case}: relative error {err}");
    }
}

#[test]
fn objective_gradient_matches_central_differences() {
    let mut r = rng(33);
    for probe in 0..50 {
        let loss = if probe % 2 == 0 { Loss::Square } else { Loss::Logistic };
        let m = r.random_range(2..=4);
        let d = r.random_range(m..=5);
        let data = random_data(&mut r, d, m, 6, loss);
        let wt = weights(&mut r);
        let r_clusters = r.random_range(1..m);
        let regs = [
            Regularizer::Frobenius { eps: wt.eps_mean },
            Regularizer::MtKernel {
                eps_mean: wt.eps_mean,
                eps_between: wt.eps_between,
            },
            Regularizer::FixedMetric {
                partition: Partition::new((0..m).map(|t| t % r_clusters).collect(), r_clusters).unwrap(),
                weights: wt,
            },
            Regularizer::ClusterNorm {
                weights: wt,
                r: r_clusters,
            },
            Regularizer::TraceNormSq { alpha: 0.05, beta: 5.0 },
        ];
        let w = random_matrix(&mut r, d, m, 2.0);
        let dir = random_matrix(&mut r, d, m, 1.0);
        let lam = r.random_range(0.1..2.0);
        for reg in &regs {
            let (_, g) = objective_and_grad(&w, &data, loss, reg, lam).unwrap();
            let h = 1e-6;
            let fp = objective(&(&w + &dir * h), &data, loss, reg, lam).unwrap();
            let fm = objective(&(&w - &dir * h), &data, loss, reg, lam).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let an = g.dot(&dir);
            assert!(
                (fd - an).abs() <= 1e-4 * an.abs().max(1.0),
                "{}: fd {fd} vs analytic {an}",
                reg.name()
            );
        }
    }
}

proptest! {
    #[test]
    fn extreme_cluster_counts_reduce_to_the_kernel_penalty(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = r.random_range(2..=5);
        let d = r.random_range(1..=6);
        let data = random_data(&mut r, d, m, 4, Loss::Square);
        let wt = weights(&mut r);
        let w = random_matrix(&mut r, d, m, 3.0);
        let lam = r.random_range(0.1..2.0);
        let f = |reg: Regularizer<f64>| objective(&w, &data, Loss::Square, &reg, lam).unwrap();
        let one = f(Regularizer::ClusterNorm { weights: wt, r: 1 });
        let one_ref = f(Regularizer::MtKernel { eps_mean: wt.eps_mean, eps_between: wt.eps_within });
        prop_assert!((one - one_ref).abs() <= 1e-8 * one_ref.abs().max(1.0));
        let all = f(Regularizer::ClusterNorm { weights: wt, r: m });
        let all_ref = f(Regularizer::MtKernel { eps_mean: wt.eps_mean, eps_between: wt.eps_between });
        prop_assert!((all - all_ref).abs() <= 1e-8 * all_ref.abs().max(1.0));
    }

    #[test]
    fn equal_weights_reduce_cluster_norm_to_frobenius(seed in any::<u64>(), eps in 0.05..5.0f64) {
        let mut r = rng(seed);
        let m = r.random_range(2..=5);
        let d = r.random_range(1..=6);
        let data = random_data(&mut r, d, m, 3, Loss::Square);
        let w = random_matrix(&mut r, d, m, 3.0);
        let wt = PenaltyWeights::new(eps, eps, eps).unwrap();
        let a = objective(&w, &data, Loss::Square, &Regularizer::ClusterNorm { weights: wt, r: 1 }, 0.7).unwrap();
        let b = objective(&w, &data, Loss::Square, &Regularizer::Frobenius { eps }, 0.7).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
    }

    #[test]
    fn objectives_ignore_task_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = r.random_range(2..=4);
        let d = r.random_range(1..=5);
        let data = random_data(&mut r, d, m, 3, Loss::Square);
        let w = random_matrix(&mut r, d, m, 3.0);
        let wt = weights(&mut r);
        let mut perm: Vec<usize> = (0..m).collect();
        perm.rotate_left(1);
        // task t of the permuted problem is task perm[t] of the original one
        let mut inverse = vec![0; m];
        for (t, &p) in perm.iter().enumerate() {
            inverse[p] = t;
        }
        let examples = (0..data.n()).map(|i| (data.x(i).to_vec(), data.y(i), inverse[data.task(i)]));
        let permuted = TaskDataset::from_examples(d, m, examples).unwrap();
        let wp = DMatrix::from_fn(d, m, |k, t| w[(k, perm[t])]);
        for reg in [
            Regularizer::ClusterNorm { weights: wt, r: 2.min(m) },
            Regularizer::MtKernel { eps_mean: wt.eps_mean, eps_between: wt.eps_between },
            Regularizer::TraceNormSq { alpha: 0.01, beta: 10.0 },
        ] {
            let a = objective(&w, &data, Loss::Square, &reg, 0.5).unwrap();
            let b = objective(&wp, &permuted, Loss::Square, &reg, 0.5).unwrap();
            prop_assert!(rel_err(a, b) < 1e-10, "{}: {a} vs {b}", reg.name());
        }
    }
}

#[test]
fn fits_decrease_the_objective_from_zero() {
    let mut r = rng(44);
    let data = random_data(&mut r, 4, 3, 10, Loss::Logistic);
    let wt = weights(&mut r);
    let reg = Regularizer::ClusterNorm { weights: wt, r: 2 };
    let cfg = FitConfig::new(0.1);
    let res = fit(&data, Loss::Logistic, &reg, &cfg).unwrap();
    let start = objective(&DMatrix::zeros(4, 3), &data, Loss::Logistic, &reg, 0.1).unwrap();
    assert!(res.final_objective() < start);
    assert!(res.objective_trace.windows(2).all(|p| p[1] <= p[0]));
    assert!(res.cluster.is_some());
    assert!(res.converged);
}
