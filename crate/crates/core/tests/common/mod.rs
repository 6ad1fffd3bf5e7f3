#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Minimum of `sum s_i^2 / l_i` over `alpha <= l_i <= beta`, `sum l_i = gamma`
/// by enumerating which coordinates sit at a bound.
///
/// Free coordinates are proportional to `s_i` at an interior optimum, so the
/// minimum is attained by one of the `3^m` patterns; every candidate checked
/// is feasible, so the smallest one is the optimum.
pub fn box_min_by_enumeration(s: &[f64], alpha: f64, beta: f64, gamma: f64) -> f64 {
    let m = s.len();
    let tol = 1e-12 * gamma.max(1.0);
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(m as u32) {
        let mut c = code;
        let mut fixed = 0.0;
        let mut value = 0.0;
        let mut free = Vec::new();
        for (i, &si) in s.iter().enumerate() {
            match c % 3 {
                0 => {
                    fixed += alpha;
                    value += si * si / alpha;
                }
                1 => {
                    fixed += beta;
                    value += si * si / beta;
                }
                _ => free.push(i),
            }
            c /= 3;
        }
        let budget = gamma - fixed;
        if free.is_empty() {
            if budget.abs() <= tol {
                best = best.min(value);
            }
            continue;
        }
        let mass: f64 = free.iter().map(|&i| s[i]).sum();
        let n = free.len() as f64;
        if mass == 0.0 {
            if budget >= n * alpha - tol && budget <= n * beta + tol {
                best = best.min(value);
            }
            continue;
        }
        let scale = budget / mass;
        let feasible = free
            .iter()
            .all(|&i| s[i] * scale >= alpha - tol && s[i] * scale <= beta + tol);
        if feasible && scale > 0.0 {
            best = best.min(value + mass * mass / budget);
        }
    }
    best
}

/// Euclidean projection onto the box-and-trace set by bisection on the shift.
pub fn project_box_trace(x: &[f64], alpha: f64, beta: f64, gamma: f64) -> Vec<f64> {
    let total = |tau: f64| -> f64 { x.iter().map(|&v| (v - tau).clamp(alpha, beta)).sum() };
    let lo0 = x.iter().cloned().fold(f64::INFINITY, f64::min) - beta;
    let hi0 = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - alpha;
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    x.iter().map(|&v| (v - tau).clamp(alpha, beta)).collect()
}

/// Accelerated projected gradient on the same problem; returns the best value
/// seen. Always an upper bound on the true minimum.
pub fn box_min_by_projected_gradient(s: &[f64], alpha: f64, beta: f64, gamma: f64, iters: usize) -> f64 {
    let m = s.len();
    let f = |l: &[f64]| -> f64 { s.iter().zip(l).map(|(si, li)| si * si / li).sum() };
    let lip = s.iter().map(|si| 2.0 * si * si / alpha.powi(3)).fold(1e-12, f64::max);
    let step = 1.0 / lip;
    let mut x = vec![gamma / m as f64; m];
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut best = f(&x);
    for _ in 0..iters {
        let grad: Vec<f64> = s.iter().zip(&y).map(|(si, yi)| -si * si / (yi * yi)).collect();
        let moved: Vec<f64> = y.iter().zip(&grad).map(|(yi, gi)| yi - step * gi).collect();
        let next = project_box_trace(&moved, alpha, beta, gamma);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next
            .iter()
            .zip(&x)
            .map(|(n, o)| n + (t - 1.0) / t_next * (n - o))
            .collect();
        y = y.iter().map(|v| v.clamp(alpha, beta)).collect();
        x = next;
        t = t_next;
        best = best.min(f(&x));
    }
    best
}

/// Random feasible box for `m` eigenvalues.
pub fn random_box(rng: &mut ChaCha8Rng, m: usize) -> (f64, f64, f64) {
    let alpha = rng.random_range(0.05..2.0);
    let beta = alpha + rng.random_range(0.0..5.0);
    let gamma = rng.random_range(m as f64 * alpha..=m as f64 * beta);
    (alpha, beta, gamma)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
