use clusternorm::partition::{
    adjusted_rand_index, fixed_metric_penalty, omega_between, omega_mean, omega_within,
    partition_to_m, projection_matrices, sigma_inv_of_m, sigma_of_m,
};
use clusternorm::{Partition, PenaltyWeights};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn partition() -> impl Strategy<Value = Partition> {
    (1usize..=7)
        .prop_flat_map(|m| prop::collection::vec(0..m, m))
        .prop_map(|labels| Partition::from_labels(&labels).unwrap())
}

fn weights() -> impl Strategy<Value = PenaltyWeights<f64>> {
    (0.01..10.0f64, 0.01..10.0f64, 0.01..10.0f64)
        .prop_map(|(a, b, c)| PenaltyWeights::new(a, b, c).unwrap())
}

fn matrix_for(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..=5).prop_flat_map(move |d| {
        prop::collection::vec(-5.0..5.0f64, d * m).prop_map(move |v| DMatrix::from_vec(d, m, v))
    })
}

fn partition_and_matrix() -> impl Strategy<Value = (Partition, DMatrix<f64>)> {
    partition().prop_flat_map(|p| {
        let m = p.m();
        (Just(p), matrix_for(m))
    })
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

fn column_mean(w: &DMatrix<f64>, cols: &[usize]) -> DVector<f64> {
    let mut acc = DVector::zeros(w.nrows());
    for &c in cols {
        acc += w.column(c);
    }
    acc / cols.len() as f64
}

proptest! {
    #[test]
    fn centering_identity((p, _w) in partition_and_matrix(), wt in weights()) {
        let m = p.m();
        let (u, pi) = projection_matrices::<f64>(m).unwrap();
        let mm = partition_to_m::<f64>(&p);
        let id = DMatrix::identity(m, m);
        let lhs = (&mm - &u) * wt.eps_between + (&id - &mm) * wt.eps_within;
        let rhs = &pi * (&mm * wt.eps_between + (&id - &mm) * wt.eps_within) * &pi;
        prop_assert!(max_abs(&(lhs - rhs)) <= 1e-12);
    }

    #[test]
    fn metric_times_inverse_is_identity(p in partition(), wt in weights()) {
        let m = p.m();
        let prod = sigma_of_m(&p, &wt).unwrap() * sigma_inv_of_m(&p, &wt).unwrap();
        prop_assert!(max_abs(&(prod - DMatrix::identity(m, m))) <= 1e-10);
    }

    #[test]
    fn penalty_decomposes_over_centered_part((p, w) in partition_and_matrix(), wt in weights()) {
        let m = p.m();
        let (u, pi) = projection_matrices::<f64>(m).unwrap();
        let mt = &pi * partition_to_m::<f64>(&p) * &pi;
        let id = DMatrix::identity(m, m);
        let wp = &w * &pi;
        let rhs = wt.eps_mean * (w.transpose() * &w * &u).trace()
            + (&wp * (&mt * wt.eps_between + (&id - &mt) * wt.eps_within) * wp.transpose()).trace();
        let lhs = fixed_metric_penalty(&w, &p, &wt).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn the_three_parts_sum_to_the_frobenius_norm((p, w) in partition_and_matrix()) {
        let total = omega_mean(&w) + omega_between(&w, &p).unwrap() + omega_within(&w, &p).unwrap();
        prop_assert!((total - w.norm_squared()).abs() <= 1e-10 * w.norm_squared().max(1.0));
    }

    #[test]
    fn parts_match_their_mean_based_forms((p, w) in partition_and_matrix()) {
        let all: Vec<usize> = (0..p.m()).collect();
        let grand = column_mean(&w, &all);
        let mut between = 0.0;
        let mut within = 0.0;
        for c in 0..p.r() {
            let members = p.members(c);
            let mean = column_mean(&w, &members);
            between += members.len() as f64 * (&mean - &grand).norm_squared();
            for &t in &members {
                within += (w.column(t) - &mean).norm_squared();
            }
        }
        let scale = w.norm_squared().max(1.0);
        prop_assert!((omega_mean(&w) - p.m() as f64 * grand.norm_squared()).abs() <= 1e-10 * scale);
        prop_assert!((omega_between(&w, &p).unwrap() - between).abs() <= 1e-10 * scale);
        prop_assert!((omega_within(&w, &p).unwrap() - within).abs() <= 1e-10 * scale);
    }

    #[test]
    fn projections_are_orthogonal_and_centered(p in partition()) {
        let m = p.m();
        let (u, _) = projection_matrices::<f64>(m).unwrap();
        let mm = partition_to_m::<f64>(&p);
        let b = &mm - &u;
        let wth = DMatrix::identity(m, m) - &mm;
        prop_assert!(max_abs(&(&b * &b - &b)) <= 1e-12);
        prop_assert!(max_abs(&(&wth * &wth - &wth)) <= 1e-12);
        prop_assert!(max_abs(&(&b * &wth)) <= 1e-12);
        let ones = DVector::from_element(m, 1.0);
        prop_assert!((&b * &ones).amax() <= 1e-12 && (&wth * &ones).amax() <= 1e-12);
        prop_assert!((mm.trace() - p.r() as f64).abs() <= 1e-12);
    }

    #[test]
    fn penalty_ignores_cluster_labels((p, w) in partition_and_matrix(), wt in weights(), shift in 1usize..7) {
        let r = p.r();
        let relabeled: Vec<usize> = p.assignment().iter().map(|&c| (c + shift) % r).collect();
        let q = Partition::new(relabeled, r).unwrap();
        let a = fixed_metric_penalty(&w, &p, &wt).unwrap();
        let b = fixed_metric_penalty(&w, &q, &wt).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        prop_assert!((adjusted_rand_index(&p, &q) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_weights_give_a_scaled_frobenius_norm((p, w) in partition_and_matrix(), eps in 0.01..10.0f64) {
        let wt = PenaltyWeights::new(eps, eps, eps).unwrap();
        let v = fixed_metric_penalty(&w, &p, &wt).unwrap();
        prop_assert!((v - eps * w.norm_squared()).abs() <= 1e-10 * v.max(1.0));
    }

    #[test]
    fn equal_between_and_within_ignore_the_partition((p, w) in partition_and_matrix(), em in 0.01..10.0f64, eb in 0.01..10.0f64) {
        let wt = PenaltyWeights::new(em, eb, eb).unwrap();
        let all: Vec<usize> = (0..p.m()).collect();
        let grand = column_mean(&w, &all);
        let spread: f64 = all.iter().map(|&t| (w.column(t) - &grand).norm_squared()).sum();
        let expected = em * p.m() as f64 * grand.norm_squared() + eb * spread;
        let v = fixed_metric_penalty(&w, &p, &wt).unwrap();
        prop_assert!((v - expected).abs() <= 1e-10 * v.max(1.0));
    }
}

#[test]
fn two_task_single_cluster_metric() {
    let p = Partition::single(2).unwrap();
    let wt = PenaltyWeights::new(1.0, 2.0, 4.0).unwrap();
    // M = U, so only the mean and within parts remain: U/1 + (I - U)/4.
    let expected = DMatrix::from_row_slice(2, 2, &[0.625, 0.375, 0.375, 0.625]);
    assert!(max_abs(&(sigma_of_m(&p, &wt).unwrap() - expected)) < 1e-15);
}

