//! The cluster norm `||A||_c^2 = min { tr A S^{-1} A^T : aI <= S <= bI, tr S = g }`.
//!
//! The set of admissible `S` is spectral, so the minimum only depends on the
//! singular values `s_i` of `A`:
//!
//! ```text
//! ||A||_c^2 = min  sum_i s_i^2 / l_i   s.t.  alpha <= l_i <= beta,  sum_i l_i = gamma
//! ```
//!
//! Dualizing the trace constraint with a multiplier `nu >= 0` gives
//! `l_i(nu) = clamp(s_i / sqrt(nu), alpha, beta)`. The optimal `nu` is found by
//! scanning the sorted breakpoints `{0} u {s_i^2/beta^2} u {s_i^2/alpha^2}`:
//! on each interval the clamp pattern is fixed and the stationary `nu` has a
//! closed form, which is accepted when it falls inside the interval.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::partition::PenaltyWeights;
use crate::scalar::{clamp, Real};

/// Eigenvalue box `alpha <= l_i <= beta` with trace budget `sum l_i = gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBox<T> {
    alpha: T,
    beta: T,
    gamma: T,
    m: usize,
}

impl<T: Real> SpectralBox<T> {
    /// Validates `0 < alpha <= beta` and `m alpha <= gamma <= m beta`.
    pub fn new(alpha: T, beta: T, gamma: T, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InfeasibleBox("matrix side m must be >= 1".into()));
        }
        if !(alpha > T::zero()) || !alpha.is_finite() || !beta.is_finite() || !gamma.is_finite() {
            return Err(Error::InfeasibleBox(format!(
                "need finite alpha > 0 (alpha={alpha}, beta={beta}, gamma={gamma})"
            )));
        }
        if alpha > beta {
            return Err(Error::InfeasibleBox(format!("alpha={alpha} > beta={beta}")));
        }
        let mm = T::from_count(m);
        let slack = T::eps_rel() * gamma.abs().max(T::one());
        if mm * alpha > gamma + slack || gamma > mm * beta + slack {
            return Err(Error::InfeasibleBox(format!(
                "gamma={gamma} outside [m alpha, m beta] = [{}, {}]",
                mm * alpha,
                mm * beta
            )));
        }
        Ok(Self { alpha, beta, gamma, m })
    }

    /// Box relaxing the clustered metrics with `r` clusters among `m` tasks:
    /// `alpha = 1/eps_W`, `beta = 1/eps_B`, `gamma = (m-r+1) alpha + (r-1) beta`.
    pub fn from_weights(weights: &PenaltyWeights<T>, r: usize, m: usize) -> Result<Self> {
        weights.validate()?;
        if weights.eps_within <= weights.eps_between {
            return Err(Error::InfeasibleBox(format!(
                "clustered box needs eps_within > eps_between (got {} <= {})",
                weights.eps_within, weights.eps_between
            )));
        }
        if r == 0 || r > m {
            return Err(Error::InvalidConfig(format!("{r} clusters for {m} tasks")));
        }
        let alpha = weights.eps_within.recip();
        let beta = weights.eps_between.recip();
        let gamma = T::from_count(m - r + 1) * alpha + T::from_count(r - 1) * beta;
        Self::new(alpha, beta, gamma, m)
    }

    /// Degenerate box `alpha = beta`; every eigenvalue is pinned to `alpha`.
    pub fn pinned(alpha: T, m: usize) -> Result<Self> {
        Self::new(alpha, alpha, T::from_count(m) * alpha, m)
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

/// Same as [`SpectralBox::from_weights`].
pub fn make_spectral_box<T: Real>(
    weights: &PenaltyWeights<T>,
    r: usize,
    m: usize,
) -> Result<SpectralBox<T>> {
    SpectralBox::from_weights(weights, r, m)
}

/// Optimal spectrum of the cluster norm problem and, when computed from a
/// matrix, the singular factors needed for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterNormResult<T: Real> {
    /// `||A||_c^2`
    pub value: T,
    /// Optimal eigenvalues, aligned with `singular_values`.
    pub lambda_star: DVector<T>,
    /// Optimal dual variable of the trace constraint.
    pub nu_star: T,
    /// Singular values of `A`, zero-padded to length `m`.
    pub singular_values: DVector<T>,
    pub spectral_box: SpectralBox<T>,
    left: Option<DMatrix<T>>,
    right: Option<DMatrix<T>>,
}

impl<T: Real> ClusterNormResult<T> {
    /// `A V = U diag(s)` (`d x m`, columns aligned with the spectrum).
    pub fn scaled_left_factors(&self) -> Option<&DMatrix<T>> {
        self.left.as_ref()
    }

    /// Orthonormal basis of right singular vectors (`m x m`).
    pub fn right_factors(&self) -> Option<&DMatrix<T>> {
        self.right.as_ref()
    }
}

/// `Sum_i clamp(s_i / sqrt(nu), alpha, beta)`, non-increasing in `nu > 0`.
pub fn trace_at<T: Real>(sigma: &[T], bx: &SpectralBox<T>, nu: T) -> T {
    let root = nu.sqrt();
    sigma
        .iter()
        .map(|&s| {
            if s == T::zero() {
                bx.alpha
            } else if root == T::zero() {
                bx.beta
            } else {
                clamp(s / root, bx.alpha, bx.beta)
            }
        })
        .fold(T::zero(), |a, b| a + b)
}

/// Dual function of the trace-constrained problem evaluated at `nu >= 0`.
pub fn dual_value<T: Real>(sigma: &[T], bx: &SpectralBox<T>, nu: T) -> T {
    let root = nu.sqrt();
    let two = T::lit(2.0);
    let mut total = -nu * bx.gamma;
    for &s in sigma {
        total += if s < bx.alpha * root {
            s * s / bx.alpha + nu * bx.alpha
        } else if s > bx.beta * root {
            s * s / bx.beta + nu * bx.beta
        } else {
            two * s * root
        };
    }
    total
}

/// Exact minimizer of `sum s_i^2 / l_i` over the spectral box.
///
/// `sigma` must hold `m` non-negative entries. Entries below `1e-12 * max(sigma)`
/// are treated as zero. Returns a result without singular factors.
pub fn solve_spectrum<T: Real>(sigma: &[T], bx: &SpectralBox<T>) -> Result<ClusterNormResult<T>> {
    let m = bx.m;
    if sigma.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} singular values for a box of side {m}",
            sigma.len()
        )));
    }
    if sigma.iter().any(|s| !s.is_finite() || *s < T::zero()) {
        return Err(Error::NonFiniteInput);
    }
    let (alpha, beta, gamma) = (bx.alpha, bx.beta, bx.gamma);
    let smax = sigma.iter().fold(T::zero(), |a, &b| a.max(b));
    let cutoff = T::eps_rel() * smax;
    let s: Vec<T> = sigma
        .iter()
        .map(|&v| if v <= cutoff { T::zero() } else { v })
        .collect();

    let n_pos = s.iter().filter(|&&v| v > T::zero()).count();
    let n_zero = m - n_pos;
    let tol = T::eps_rel() * T::from_count(m).max(T::one());

    let (lambda, nu) = if n_pos == 0 {
        (vec![gamma / T::from_count(m); m], T::zero())
    } else if T::from_count(n_pos) * beta + T::from_count(n_zero) * alpha <= gamma * (T::one() + tol) {
        // nu = 0: every positive direction saturates at beta, zero directions
        // share the leftover budget.
        let fill = if n_zero > 0 {
            clamp(
                (gamma - T::from_count(n_pos) * beta) / T::from_count(n_zero),
                alpha,
                beta,
            )
        } else {
            beta
        };
        let lambda = s
            .iter()
            .map(|&v| if v > T::zero() { beta } else { fill })
            .collect();
        (lambda, T::zero())
    } else {
        let nu = breakpoint_search(&s, bx, tol).unwrap_or_else(|| bisect_nu(&s, bx));
        let root = nu.sqrt();
        let lambda = s
            .iter()
            .map(|&v| {
                if v == T::zero() {
                    alpha
                } else {
                    clamp(v / root, alpha, beta)
                }
            })
            .collect();
        (lambda, nu)
    };

    let value = s
        .iter()
        .zip(&lambda)
        .fold(T::zero(), |acc, (&v, &l)| acc + v * v / l);
    Ok(ClusterNormResult {
        value,
        lambda_star: DVector::from_vec(lambda),
        nu_star: nu,
        singular_values: DVector::from_vec(s),
        spectral_box: *bx,
        left: None,
        right: None,
    })
}

/// Scans the breakpoint intervals for the one holding the stationary `nu`.
fn breakpoint_search<T: Real>(s: &[T], bx: &SpectralBox<T>, tol: T) -> Option<T> {
    let (alpha, beta, gamma) = (bx.alpha, bx.beta, bx.gamma);
    let mut points = vec![T::zero()];
    for &v in s.iter().filter(|&&v| v > T::zero()) {
        points.push(v * v / (beta * beta));
        points.push(v * v / (alpha * alpha));
    }
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));

    let n_zero = s.iter().filter(|&&v| v == T::zero()).count();
    for k in 0..points.len() {
        let a = points[k];
        let b = points.get(k + 1).copied();
        if b.is_some_and(|b| b <= a) {
            continue;
        }
        // Clamp pattern on the open interval (a, b).
        let mut n_low = n_zero;
        let mut n_high = 0usize;
        let mut mid_sum = T::zero();
        for &v in s.iter().filter(|&&v| v > T::zero()) {
            let upper = v * v / (beta * beta);
            let lower = v * v / (alpha * alpha);
            if b.is_some_and(|b| upper >= b) {
                n_high += 1;
            } else if lower <= a {
                n_low += 1;
            } else {
                mid_sum += v;
            }
        }
        let rest = gamma - alpha * T::from_count(n_low) - beta * T::from_count(n_high);
        if mid_sum > T::zero() {
            if rest <= T::zero() {
                continue;
            }
            let root = mid_sum / rest;
            let nu = root * root;
            let above = nu >= a * (T::one() - tol);
            let below = b.is_none_or(|b| nu <= b * (T::one() + tol));
            if above && below {
                return Some(nu);
            }
        } else if rest.abs() <= tol * gamma {
            // Flat dual: any nu in the interval is optimal.
            return Some(a);
        }
    }
    None
}

/// Fallback root-finding for `trace_at(nu) = gamma` on a monotone bracket.
fn bisect_nu<T: Real>(s: &[T], bx: &SpectralBox<T>) -> T {
    let mut lo = T::zero();
    let mut hi = s
        .iter()
        .fold(T::zero(), |acc, &v| acc.max(v * v / (bx.alpha * bx.alpha)));
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        if trace_at(s, bx, mid) > bx.gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    T::lit(0.5) * (lo + hi)
}

/// Computes `||A||_c^2` from the eigendecomposition of `A^T A` and
/// [`solve_spectrum`].
///
/// The Gram route is used instead of an SVD of `A`: the iterative SVD can
/// return wrong singular values on rank-deficient centered matrices, while
/// the symmetric eigensolver on the small `m x m` Gram matrix is reliable.
pub fn cluster_norm_sq<T: Real>(a: &DMatrix<T>, bx: &SpectralBox<T>) -> Result<ClusterNormResult<T>> {
    let m = a.ncols();
    if m != bx.m {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {m} columns, box has side {}",
            bx.m
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let gram = a.transpose() * a;
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let v = DMatrix::from_fn(m, m, |k, j| eig.eigenvectors[(k, order[j])]);
    let sigma: Vec<T> = order
        .iter()
        .map(|&i| eig.eigenvalues[i].max(T::zero()).sqrt())
        .collect();

    let mut result = solve_spectrum(&sigma, bx)?;
    result.left = Some(a * &v);
    result.right = Some(v);
    Ok(result)
}

/// Gradient of `||A||_c^2` with respect to `A`: `2 A Sigma*^{-1}`, which
/// equals `U diag(2 s_i / l_i) V^T`.
///
/// For a centered argument `Pi W`, the gradient with respect to `W` is this
/// matrix multiplied on the right by `Pi`.
pub fn cluster_norm_sq_grad<T: Real>(result: &ClusterNormResult<T>) -> Result<DMatrix<T>> {
    let (av, v) = match (&result.left, &result.right) {
        (Some(av), Some(v)) => (av, v),
        _ => {
            return Err(Error::InvalidConfig(
                "cluster norm result carries no singular factors".into(),
            ))
        }
    };
    let two = T::lit(2.0);
    let mut scaled = av.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= two / result.lambda_star[j];
    }
    Ok(scaled * v.transpose())
}

/// Materializes the optimal `Sigma* = V diag(lambda*) V^T`.
pub fn reconstruct_sigma_star<T: Real>(result: &ClusterNormResult<T>) -> Result<DMatrix<T>> {
    let v = result.right.as_ref().ok_or_else(|| {
        Error::InvalidConfig("cluster norm result carries no singular factors".into())
    })?;
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= result.lambda_star[j];
    }
    Ok(scaled * v.transpose())
}
