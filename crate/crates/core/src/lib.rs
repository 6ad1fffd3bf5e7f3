//! Convex clustered multi-task learning.
//!
//! Linear models for `m` related tasks are learned jointly by penalizing the
//! weight matrix `W` (`d x m`). Besides the classic Frobenius, multi-task
//! kernel and trace-norm penalties, the crate implements the *cluster norm*,
//! a convex spectral relaxation of the penalty that favours tasks grouped
//! into `r` clusters of similar weight vectors, together with the
//! non-convex k-means based alternatives it is compared against.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the `*F64`
//! aliases below name the common double-precision instantiations.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alternating;
pub mod cluster_norm;
pub mod datagen;
pub mod error;
pub mod io;
pub mod model;
pub mod partition;
pub mod scalar;
pub mod solver;

pub use alternating::{
    alternate_fit, kmeans_relaxation_value, kmeans_tasks, reproject_matrix, reproject_sigma,
    true_metric_fit, AlternatingResult, KMeansConfig,
};
pub use cluster_norm::{
    cluster_norm_sq, cluster_norm_sq_grad, make_spectral_box, reconstruct_sigma_star,
    solve_spectrum, ClusterNormResult, SpectralBox,
};
pub use datagen::{generate, train_test_split, SyntheticConfig, SyntheticTruth};
pub use error::{Error, Result};
pub use model::{empirical_risk, empirical_risk_grad, Loss, TaskDataset, TaskMatrix};
pub use partition::{Partition, PenaltyWeights};
pub use scalar::Real;
pub use solver::{
    fit, fit_from, misclassification_rate, objective, objective_and_grad, predict, rmse, FitConfig,
    FitResult, Regularizer,
};

pub type MatrixF64 = nalgebra::DMatrix<f64>;
pub type TaskDatasetF64 = TaskDataset<f64>;
pub type SpectralBoxF64 = SpectralBox<f64>;
pub type ClusterNormResultF64 = ClusterNormResult<f64>;
pub type PenaltyWeightsF64 = PenaltyWeights<f64>;
pub type RegularizerF64 = Regularizer<f64>;
pub type FitConfigF64 = FitConfig<f64>;
pub type FitResultF64 = FitResult<f64>;

pub type MatrixF32 = nalgebra::DMatrix<f32>;
pub type TaskDatasetF32 = TaskDataset<f32>;
pub type ClusterNormResultF32 = ClusterNormResult<f32>;
