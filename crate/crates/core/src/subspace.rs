//! Subspaces of `ℝᴺ` and their exact pairwise geometry: principal angles,
//! affinity and projection F-norm distance, plus principal orthonormal bases
//! and fixture generators with prescribed angles.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{complete_orthonormal_columns, gram_schmidt, matmul, norm, svd_small, t_matmul, Matrix};
use crate::rng::{gaussian_matrix, CounterRng};

/// Largest `‖UᵀU − I‖_F` accepted for a basis declared orthonormal.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-10;
/// Cosines at or above `1 − COSINE_ONE_GAP` count as a shared direction.
pub const COSINE_ONE_GAP: f64 = 1e-10;

/// A `dim`-dimensional subspace of `ℝ^ambient_dim`, held by an orthonormal basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    basis: Matrix,
}

impl Subspace {
    /// Wraps a basis that must already be orthonormal.
    pub fn from_orthonormal(basis: Matrix) -> Result<Self> {
        if basis.cols() > basis.rows() {
            return Err(invalid(format!(
                "dimension {} exceeds ambient dimension {}",
                basis.cols(),
                basis.rows()
            )));
        }
        let err = basis.orthonormality_error();
        if err > ORTHONORMAL_TOLERANCE {
            return Err(invalid(format!("basis is not orthonormal (‖UᵀU − I‖_F = {err:e})")));
        }
        Ok(Self { basis })
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn into_basis(self) -> Matrix {
        self.basis
    }

    /// Orthogonal projector `U·Uᵀ`.
    pub fn projector(&self) -> Matrix {
        matmul(&self.basis, &self.basis.transpose()).expect("consistent shapes")
    }
}

/// Orthonormalizes `raw_basis` into a [`Subspace`] with the same span.
pub fn make_subspace(raw_basis: &Matrix) -> Result<Subspace> {
    Ok(Subspace { basis: gram_schmidt(raw_basis)? })
}

/// Exact geometry of a subspace pair, ordered so that `d1 ≤ d2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    pub d1: usize,
    pub d2: usize,
    /// `cos θ_k`, non-increasing, each in `[0, 1]`.
    pub cosines: Vec<f64>,
    pub angles: Vec<f64>,
    pub affinity_sq: f64,
    pub distance_sq: f64,
}

fn check_ambient(x1: &Subspace, x2: &Subspace) -> Result<()> {
    if x1.ambient_dim() != x2.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "ambient dimensions differ: {} vs {}",
            x1.ambient_dim(),
            x2.ambient_dim()
        )));
    }
    Ok(())
}

/// Principal angles from the singular values of the cross-Gram matrix.
pub fn principal_angles(x1: &Subspace, x2: &Subspace) -> Result<PairGeometry> {
    check_ambient(x1, x2)?;
    let (a, b) = if x1.dim() <= x2.dim() { (x1, x2) } else { (x2, x1) };
    let cross = t_matmul(a.basis(), b.basis())?;
    let cosines: Vec<f64> = svd_small(&cross)?
        .singular_values
        .into_iter()
        .map(|s| s.clamp(0.0, 1.0))
        .collect();
    let affinity_sq: f64 = cosines.iter().map(|c| c * c).sum();
    let (d1, d2) = (a.dim(), b.dim());
    Ok(PairGeometry {
        d1,
        d2,
        angles: cosines.iter().map(|c| c.acos()).collect(),
        distance_sq: (d1 + d2) as f64 / 2.0 - affinity_sq,
        affinity_sq,
        cosines,
    })
}

/// `‖U₁U₁ᵀ − U₂U₂ᵀ‖_F / √2`, computed from explicit projectors.
pub fn pf_distance_direct(x1: &Subspace, x2: &Subspace) -> Result<f64> {
    check_ambient(x1, x2)?;
    let diff = x1.projector().sub(&x2.projector())?;
    Ok(diff.frobenius_norm() / std::f64::consts::SQRT_2)
}

/// Squared distance `(d1 + d2)/2 − aff²`.
pub fn affinity_to_distance_sq(affinity_sq: f64, d1: usize, d2: usize) -> Result<f64> {
    if d1 > d2 {
        return Err(invalid(format!("expected d1 <= d2, got {d1} > {d2}")));
    }
    if !(affinity_sq >= 0.0 && affinity_sq <= d1 as f64 + 1e-12) {
        return Err(invalid(format!("affinity² {affinity_sq} outside [0, {d1}]")));
    }
    Ok((d1 + d2) as f64 / 2.0 - affinity_sq)
}

/// Bases rotated so that `u2ᵀ·u1` is `diag(lambda)` stacked on a zero block.
#[derive(Clone, Debug)]
pub struct PrincipalBases {
    pub u1: Matrix,
    pub u2: Matrix,
    pub lambda: Vec<f64>,
    /// Unit directions orthogonal to `span(u2)` with
    /// `u1 = u2[:, :d1]·Λ + u0·√(1 − Λ²)`. Absent when some cosine is 1.
    pub u0: Option<Matrix>,
}

impl PrincipalBases {
    pub fn d1(&self) -> usize {
        self.u1.cols()
    }

    pub fn d2(&self) -> usize {
        self.u2.cols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.u1.rows()
    }
}

/// Principal orthonormal bases for `x1` (the smaller) and `x2`.
///
/// `u0` is filled in when every cosine is below `1 − 1e-10`; otherwise it is
/// left empty. Use [`principal_bases_with_complement`] to require it.
pub fn principal_bases(x1: &Subspace, x2: &Subspace) -> Result<PrincipalBases> {
    check_ambient(x1, x2)?;
    let (d1, d2) = (x1.dim(), x2.dim());
    if d1 > d2 {
        return Err(invalid(format!("principal bases need d1 <= d2, got {d1} > {d2}")));
    }
    // Ũ₂ᵀŨ₁ = Q₂ΛQ₁ᵀ
    let cross = t_matmul(x2.basis(), x1.basis())?;
    let svd = svd_small(&cross)?;
    let q2 = complete_orthonormal_columns(&svd.left_vectors, d2)?;
    let u1 = matmul(x1.basis(), &svd.right_vectors)?;
    let u2 = matmul(x2.basis(), &q2)?;
    let lambda: Vec<f64> = svd.singular_values.iter().map(|s| s.clamp(0.0, 1.0)).collect();
    let u0 = complement_directions(&u1, &u2, &lambda).ok();
    Ok(PrincipalBases { u1, u2, lambda, u0 })
}

/// Like [`principal_bases`] but fails when the complement directions `u0`
/// are undefined.
pub fn principal_bases_with_complement(x1: &Subspace, x2: &Subspace) -> Result<PrincipalBases> {
    let mut pb = principal_bases(x1, x2)?;
    if pb.u0.is_none() {
        pb.u0 = Some(complement_directions(&pb.u1, &pb.u2, &pb.lambda)?);
    }
    Ok(pb)
}

fn complement_directions(u1: &Matrix, u2: &Matrix, lambda: &[f64]) -> Result<Matrix> {
    let (n, d1, d2) = (u1.rows(), u1.cols(), u2.cols());
    if d1 + d2 > n {
        return Err(Error::DegenerateGeometry(format!(
            "no room for {d1} complement directions: d1 + d2 = {} > {n}",
            d1 + d2
        )));
    }
    if let Some(k) = lambda.iter().position(|&l| l >= 1.0 - COSINE_ONE_GAP) {
        return Err(Error::DegenerateGeometry(format!(
            "cosine {k} is {} so the subspaces share that direction and u0 is undefined",
            lambda[k]
        )));
    }
    let mut cols = Vec::with_capacity(d1);
    for k in 0..d1 {
        let mut r: Vec<f64> = u1.column(k).iter().zip(u2.column(k)).map(|(a, b)| a - lambda[k] * b).collect();
        let rn = norm(&r);
        r.iter_mut().for_each(|x| *x /= rn);
        cols.push(r);
    }
    Matrix::from_columns(&cols)
}

/// Draws a pair whose principal cosines are exactly `cosines` (up to
/// roundoff): a random orthonormal `(d1 + d2)`-frame is split into `U₂` and
/// `U₀`, then `U₁ = U₂[:, :d1]·Λ + U₀·√(1 − Λ²)`.
pub fn generate_pair_with_angles(
    ambient: usize,
    cosines: &[f64],
    d2: usize,
    seed: u64,
) -> Result<(Subspace, Subspace, PrincipalBases)> {
    let d1 = cosines.len();
    if d1 == 0 || d1 > d2 {
        return Err(invalid(format!("need 1 <= d1 <= d2, got d1 = {d1}, d2 = {d2}")));
    }
    if d1 + d2 > ambient {
        return Err(invalid(format!("d1 + d2 = {} exceeds ambient dimension {ambient}", d1 + d2)));
    }
    if cosines.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(invalid("cosines must lie in [0, 1]"));
    }
    if cosines.windows(2).any(|w| w[0] < w[1]) {
        return Err(invalid("cosines must be non-increasing"));
    }
    let mut rng = CounterRng::new(seed);
    let frame = gram_schmidt(&gaussian_matrix(ambient, d1 + d2, 1.0, &mut rng))?;
    let u2 = frame.column_range(0, d2)?;
    let u0 = frame.column_range(d2, d2 + d1)?;
    let u1 = Matrix::from_fn(ambient, d1, |i, k| {
        let c = cosines[k];
        c * u2[(i, k)] + (1.0 - c * c).sqrt() * u0[(i, k)]
    });
    let x1 = Subspace::from_orthonormal(u1.clone())?;
    let x2 = Subspace::from_orthonormal(u2.clone())?;
    let bases = PrincipalBases { u1, u2, lambda: cosines.to_vec(), u0: Some(u0) };
    Ok((x1, x2, bases))
}

/// Haar-distributed `dim`-dimensional subspace of `ℝ^ambient`.
pub fn generate_random_subspace(ambient: usize, dim: usize, seed: u64) -> Result<Subspace> {
    if dim == 0 || dim > ambient {
        return Err(invalid(format!("need 1 <= dim <= ambient, got dim = {dim}, ambient = {ambient}")));
    }
    let mut rng = CounterRng::new(seed);
    make_subspace(&gaussian_matrix(ambient, dim, 1.0, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_seed;

    fn basis_vectors(n: usize, idx: &[usize]) -> Matrix {
        Matrix::from_fn(n, idx.len(), |i, j| if i == idx[j] { 1.0 } else { 0.0 })
    }

    #[test]
    fn make_subspace_examples() {
        let e = basis_vectors(5, &[0, 1]);
        assert_eq!(make_subspace(&e).unwrap().basis(), &e);
        let v = Matrix::from_rows(&[&[3.0], &[4.0], &[0.0]]).unwrap();
        let s = make_subspace(&v).unwrap();
        assert!((s.basis()[(0, 0)] - 0.6).abs() < 1e-16 && (s.basis()[(1, 0)] - 0.8).abs() < 1e-16);
    }

    #[test]
    fn random_projector_is_idempotent() {
        let s = generate_random_subspace(20, 4, 3).unwrap();
        let p = s.projector();
        let pp = matmul(&p, &p).unwrap();
        assert!(pp.sub(&p).unwrap().frobenius_norm() <= 1e-9);
    }

    #[test]
    fn principal_angles_examples() {
        let s = generate_random_subspace(10, 3, 1).unwrap();
        let g = principal_angles(&s, &s).unwrap();
        assert!(g.cosines.iter().all(|c| (c - 1.0).abs() < 1e-12));
        assert!((g.affinity_sq - 3.0).abs() < 1e-12 && g.distance_sq.abs() < 1e-12);

        let a = Subspace::from_orthonormal(basis_vectors(6, &[0, 1])).unwrap();
        let b = Subspace::from_orthonormal(basis_vectors(6, &[2, 3, 4, 5])).unwrap();
        let g = principal_angles(&b, &a).unwrap();
        assert_eq!((g.d1, g.d2), (2, 4));
        assert_eq!(g.affinity_sq, 0.0);
        assert_eq!(g.distance_sq, 3.0);

        let l1 = make_subspace(&Matrix::from_rows(&[&[1.0], &[0.0]]).unwrap()).unwrap();
        let l2 = make_subspace(&Matrix::from_rows(&[&[0.6], &[0.8]]).unwrap()).unwrap();
        let g = principal_angles(&l1, &l2).unwrap();
        assert!((g.cosines[0] - 0.6).abs() < 1e-15);
        assert!((g.distance_sq.sqrt() - 0.8).abs() < 1e-15);
        assert!((pf_distance_direct(&l1, &l2).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn ambient_mismatch_is_rejected() {
        let a = generate_random_subspace(5, 2, 1).unwrap();
        let b = generate_random_subspace(6, 2, 1).unwrap();
        assert!(matches!(principal_angles(&a, &b), Err(Error::DimensionMismatch(_))));
        assert!(matches!(pf_distance_direct(&a, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn direct_distance_examples() {
        let s = generate_random_subspace(8, 3, 4).unwrap();
        assert!(pf_distance_direct(&s, &s).unwrap().abs() < 1e-12);
        let a = Subspace::from_orthonormal(basis_vectors(2, &[0])).unwrap();
        let b = Subspace::from_orthonormal(basis_vectors(2, &[1])).unwrap();
        assert!((pf_distance_direct(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn affinity_to_distance_examples() {
        assert_eq!(affinity_to_distance_sq(3.0, 3, 3).unwrap(), 0.0);
        assert_eq!(affinity_to_distance_sq(0.0, 2, 4).unwrap(), 3.0);
        assert!((affinity_to_distance_sq(0.36, 1, 1).unwrap() - 0.64).abs() < 1e-15);
        assert!(affinity_to_distance_sq(-0.1, 1, 1).is_err());
        assert!(affinity_to_distance_sq(1.5, 1, 2).is_err());
        assert!(affinity_to_distance_sq(0.5, 2, 1).is_err());
    }

    #[test]
    fn principal_bases_examples() {
        let a = Subspace::from_orthonormal(basis_vectors(6, &[0, 1])).unwrap();
        let b = Subspace::from_orthonormal(basis_vectors(6, &[2, 3, 4])).unwrap();
        let pb = principal_bases(&a, &b).unwrap();
        assert!(pb.lambda.iter().all(|&l| l == 0.0));
        let u0 = pb.u0.as_ref().unwrap();
        assert!(u0.sub(&pb.u1).unwrap().frobenius_norm() < 1e-12);

        let s = generate_random_subspace(7, 2, 9).unwrap();
        let pb = principal_bases(&s, &s).unwrap();
        assert!(pb.lambda.iter().all(|l| (l - 1.0).abs() < 1e-12));
        assert!(pb.u0.is_none());
        assert!(matches!(principal_bases_with_complement(&s, &s), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn principal_bases_random_structure() {
        let x1 = generate_random_subspace(30, 3, derive_seed(5, 1)).unwrap();
        let x2 = generate_random_subspace(30, 5, derive_seed(5, 2)).unwrap();
        let pb = principal_bases_with_complement(&x1, &x2).unwrap();
        assert!(pb.u1.orthonormality_error() <= 1e-10);
        assert!(pb.u2.orthonormality_error() <= 1e-10);
        let cross = t_matmul(&pb.u2, &pb.u1).unwrap();
        let expected = Matrix::diagonal(5, 3, &pb.lambda);
        assert!(cross.sub(&expected).unwrap().frobenius_norm() <= 1e-8);
        let u0 = pb.u0.as_ref().unwrap();
        assert!(t_matmul(&pb.u2, u0).unwrap().frobenius_norm() <= 1e-8);
        let rebuilt = Matrix::from_fn(30, 3, |i, k| {
            let l = pb.lambda[k];
            l * pb.u2[(i, k)] + (1.0 - l * l).sqrt() * u0[(i, k)]
        });
        assert!(rebuilt.sub(&pb.u1).unwrap().frobenius_norm() <= 1e-8);
        let geom = principal_angles(&x1, &x2).unwrap();
        for (a, b) in geom.cosines.iter().zip(&pb.lambda) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn generate_pair_examples() {
        let (x1, x2, _) = generate_pair_with_angles(10, &[1.0, 1.0], 4, 1).unwrap();
        let g = principal_angles(&x1, &x2).unwrap();
        assert!((g.distance_sq - 1.0).abs() < 1e-10);

        let (x1, x2, _) = generate_pair_with_angles(10, &[0.0], 4, 2).unwrap();
        assert!(principal_angles(&x1, &x2).unwrap().affinity_sq < 1e-20);

        let target = [0.9, 0.5, 0.1];
        let (x1, x2, pb) = generate_pair_with_angles(40, &target, 6, 3).unwrap();
        let g = principal_angles(&x1, &x2).unwrap();
        for (a, b) in g.cosines.iter().zip(&target) {
            assert!((a - b).abs() <= 1e-8);
        }
        assert_eq!(pb.lambda, target);

        assert!(generate_pair_with_angles(5, &[0.5, 0.2], 4, 0).is_err());
        assert!(generate_pair_with_angles(20, &[0.2, 0.5], 4, 0).is_err());
        assert!(generate_pair_with_angles(20, &[1.2], 4, 0).is_err());
    }

    #[test]
    fn random_subspace_examples() {
        let s = generate_random_subspace(6, 6, 11).unwrap();
        let p = s.projector();
        assert!(p.sub(&Matrix::identity(6)).unwrap().frobenius_norm() <= 1e-9);
        assert_eq!(generate_random_subspace(9, 3, 5).unwrap(), generate_random_subspace(9, 3, 5).unwrap());
        assert!(generate_random_subspace(3, 4, 0).is_err());
    }

    #[test]
    fn random_lines_nearly_orthogonal_in_high_dimension() {
        let within = (0..1000u64)
            .filter(|&t| {
                let u = generate_random_subspace(1000, 1, derive_seed(t, 0)).unwrap();
                let v = generate_random_subspace(1000, 1, derive_seed(t, 1)).unwrap();
                t_matmul(u.basis(), v.basis()).unwrap()[(0, 0)].abs() < 0.2
            })
            .count();
        assert!(within >= 990, "{within}");
    }
}
