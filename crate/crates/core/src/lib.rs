//! Gaussian sketching of low-dimensional subspaces.
//!
//! Given subspaces `X₁, X₂ ⊂ ℝᴺ` and a Gaussian `Φ ∈ ℝ^{n×N}` with
//! `N(0, 1/n)` entries, this crate computes the exact geometry of the pair
//! (principal angles, affinity, projection F-norm distance) before and after
//! sketching, the closed-form estimates of the post-sketch affinity and
//! distance, sketch-dimension planning for a set of `L` subspaces, and a
//! Monte Carlo harness that checks the supporting concentration bounds.
//!
//! ```
//! use subspace_sketch::{sketch, subspace, estimator};
//!
//! let (x1, x2, _) = subspace::generate_pair_with_angles(200, &[0.8, 0.3], 3, 1).unwrap();
//! let before = subspace::principal_angles(&x1, &x2).unwrap();
//! let op = sketch::gaussian_operator(60, 200, 2).unwrap();
//! let after = subspace::principal_angles(&sketch::apply(&op, &x1).unwrap(), &sketch::apply(&op, &x2).unwrap()).unwrap();
//! let predicted = estimator::projected_affinity_estimate(before.affinity_sq, 2, 3, 60).unwrap();
//! assert!((after.affinity_sq - predicted).abs() < 0.5);
//! ```

pub mod conclab;
pub mod error;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod sketch;
pub mod subspace;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use subspace::Subspace;
