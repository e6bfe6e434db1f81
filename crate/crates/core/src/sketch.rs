//! Seeded Gaussian sketch operators `Φ ∈ ℝ^{n×N}` with i.i.d. `N(0, 1/n)`
//! entries, and their action on subspaces.

use crate::error::{invalid, Error, Result};
use crate::linalg::{extreme_singular_values, gram_schmidt, matmul, normalize_columns, Matrix};
use crate::rng::{gaussian_matrix, CounterRng};
use crate::subspace::{PrincipalBases, Subspace};

/// Sketched images whose smallest singular value falls to this level are
/// treated as rank collapse.
pub const RANK_COLLAPSE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SketchOperator {
    n: usize,
    ambient: usize,
    seed: u64,
    entries: Matrix,
}

impl SketchOperator {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    /// `Φ·M` for an `N×k` matrix `M`.
    pub fn multiply(&self, m: &Matrix) -> Result<Matrix> {
        matmul(&self.entries, m)
    }

    /// `Φ·x` for a vector `x ∈ ℝᴺ`.
    pub fn multiply_vec(&self, x: &[f64]) -> Vec<f64> {
        crate::linalg::matvec(&self.entries, x)
    }
}

/// Draws `Φ` row-major from the counter stream keyed by `seed`.
pub fn gaussian_operator(n: usize, ambient: usize, seed: u64) -> Result<SketchOperator> {
    if n == 0 || n >= ambient {
        return Err(invalid(format!("sketch dimension must satisfy 0 < n < N, got n = {n}, N = {ambient}")));
    }
    let mut rng = CounterRng::new(seed);
    let entries = gaussian_matrix(n, ambient, 1.0 / (n as f64).sqrt(), &mut rng);
    Ok(SketchOperator { n, ambient, seed, entries })
}

fn check_image(op: &SketchOperator, image: &Matrix) -> Result<()> {
    let (smin, _) = extreme_singular_values(image)?;
    if smin <= RANK_COLLAPSE_TOLERANCE {
        return Err(Error::DegenerateSketch { seed: op.seed, sigma_min: smin });
    }
    Ok(())
}

fn check_fits(op: &SketchOperator, ambient: usize, dim: usize) -> Result<()> {
    if ambient != op.ambient {
        return Err(Error::DimensionMismatch(format!(
            "operator expects ambient dimension {}, subspace has {ambient}",
            op.ambient
        )));
    }
    if dim >= op.n {
        return Err(invalid(format!("subspace dimension {dim} must be below sketch dimension {}", op.n)));
    }
    Ok(())
}

/// `span(Φ·U)` as an orthonormalized subspace of `ℝⁿ`.
pub fn apply(op: &SketchOperator, x: &Subspace) -> Result<Subspace> {
    check_fits(op, x.ambient_dim(), x.dim())?;
    let image = op.multiply(x.basis())?;
    check_image(op, &image)?;
    let basis = gram_schmidt(&image).map_err(|_| Error::DegenerateSketch { seed: op.seed, sigma_min: 0.0 })?;
    Subspace::from_orthonormal(basis)
}

/// Every intermediate of sketching a pair held in principal bases.
#[derive(Clone, Debug)]
pub struct SketchedPair {
    /// `Φ·U₁`, `Φ·U₂`.
    pub a1: Matrix,
    pub a2: Matrix,
    /// Column-normalized `a1`, `a2`.
    pub abar1: Matrix,
    pub abar2: Matrix,
    /// Gram-Schmidt of `abar1`, `abar2`; column order preserved.
    pub v1: Matrix,
    pub v2: Matrix,
    pub y1: Subspace,
    pub y2: Subspace,
}

pub fn sketch_pair(op: &SketchOperator, bases: &PrincipalBases) -> Result<SketchedPair> {
    check_fits(op, bases.ambient_dim(), bases.d1().max(bases.d2()))?;
    let a1 = op.multiply(&bases.u1)?;
    let a2 = op.multiply(&bases.u2)?;
    check_image(op, &a1)?;
    check_image(op, &a2)?;
    let collapse = |_| Error::DegenerateSketch { seed: op.seed, sigma_min: 0.0 };
    let abar1 = normalize_columns(&a1).map_err(collapse)?;
    let abar2 = normalize_columns(&a2).map_err(collapse)?;
    let v1 = gram_schmidt(&abar1).map_err(collapse)?;
    let v2 = gram_schmidt(&abar2).map_err(collapse)?;
    let y1 = Subspace::from_orthonormal(v1.clone())?;
    let y2 = Subspace::from_orthonormal(v2.clone())?;
    Ok(SketchedPair { a1, a2, abar1, abar2, v1, v2, y1, y2 })
}
