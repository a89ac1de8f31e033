//! Quaternion low-rank color image restoration.
//!
//! Color images are encoded as pure quaternion matrices (`R i + G j + B k`)
//! and restored by a weighted Schatten p-norm prior on groups of similar
//! patches, solved with ADMM and a geometric continuation of the penalty.
//! The weighted nuclear norm is the `p = 1` special case.

pub mod degradation;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod patch;
pub mod qmatrix;
pub mod qsvd;
pub mod quaternion;
pub mod shrinkage;
pub mod solver;

pub use degradation::{add_noise, blur_periodic, solve_x_subproblem, BlurOperator, DegradationModel, Kernel, XSolver};
pub use error::{Error, Result};
pub use image::PureQImage;
pub use metrics::{evaluate, psnr, ssim, QualityReport};
pub use patch::{aggregate, match_group, select_keys, PatchGroup, PatchParams};
pub use qmatrix::QMatrix;
pub use qsvd::{map_singular_values, q_rank, qsvd, QSvdResult};
pub use quaternion::{Axis, Quaternion};
pub use solver::{
    default_deblur_config, default_denoise_config, restore, BlurKind, ConvergenceTrace, IterationRecord, Solver,
    SolverConfig, SolverState,
};
pub use shrinkage::{make_weights, ShrinkMode, ShrinkageSpec, WeightVector};
