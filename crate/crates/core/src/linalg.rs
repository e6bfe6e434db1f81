//! Dense row-major matrices and the handful of factorizations the rest of the
//! crate needs: modified Gram-Schmidt with reorthogonalization, one-sided
//! Jacobi SVD for small matrices, column normalization and extreme singular
//! values.
//!
//! Everything here is a pure function of its inputs. Tolerances are fixed
//! constants so that results are reproducible run to run.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{invalid, Error, Result};

/// Relative residual below which Gram-Schmidt declares a column dependent.
pub const RANK_TOLERANCE: f64 = 1e-12;
/// Off-diagonal cosine below which a Jacobi rotation is skipped.
pub const JACOBI_TOLERANCE: f64 = 1e-14;
pub const JACOBI_MAX_SWEEPS: usize = 60;
/// Largest `min(rows, cols)` handled by [`svd_small`].
pub const SVD_SMALL_LIMIT: usize = 64;
const POWER_TOLERANCE: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 200_000;

/// Dense rectangular matrix of `f64`, stored row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major entries, rejecting empty shapes,
    /// length mismatches and non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid(format!("matrix shape {rows}x{cols} must be positive")));
        }
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix whose `j`th column is `columns[j]`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != rows) {
            return Err(invalid("columns differ in length"));
        }
        let mut data = vec![0.0; rows * cols];
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                data[i * cols + j] = v;
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be positive");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    /// Rectangular matrix with `diag` on the main diagonal.
    pub fn diagonal(rows: usize, cols: usize, diag: &[f64]) -> Self {
        Self::from_fn(rows, cols, |i, j| if i == j && i < diag.len() { diag[i] } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row-major entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.rows);
        for (i, &v) in values.iter().enumerate() {
            self.data[i * self.cols + j] = v;
        }
    }

    /// Columns `start..end` as a new matrix.
    pub fn column_range(&self, start: usize, end: usize) -> Result<Matrix> {
        if start >= end || end > self.cols {
            return Err(invalid(format!(
                "column range {start}..{end} invalid for {} columns",
                self.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, end - start, |i, j| self[(i, start + j)]))
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v * v;
            }
        }
        sums.into_iter().map(f64::sqrt).collect()
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * factor).collect() }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    /// `‖selfᵀ·self − I‖_F`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = t_matmul(self, self).expect("same row count");
        let mut acc = 0.0;
        for i in 0..g.rows {
            for j in 0..g.cols {
                let target = if i == j { 1.0 } else { 0.0 };
                acc += (g[(i, j)] - target).powi(2);
            }
        }
        acc.sqrt()
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot stack {} rows beside {} rows",
                self.rows, other.rows
            )));
        }
        let cols = self.cols + other.cols;
        Ok(Matrix::from_fn(self.rows, cols, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                other[(i, j - self.cols)]
            }
        }))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Matrix product `a·b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `aᵀ·b` without materializing the transpose.
pub fn t_matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "cannot form aᵀb for {}x{} and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let brow = b.row(k);
        for (i, &aki) in a.row(k).iter().enumerate() {
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(brow) {
                *o += aki * bkj;
            }
        }
    }
    Ok(out)
}

/// `Mᵀx` for a vector `x` with `M.rows()` entries.
pub fn t_matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.rows, x.len());
    let mut out = vec![0.0; m.cols];
    for (k, &xk) in x.iter().enumerate() {
        for (o, &v) in out.iter_mut().zip(m.row(k)) {
            *o += v * xk;
        }
    }
    out
}

/// `M·y` for a vector `y` with `M.cols()` entries.
pub fn matvec(m: &Matrix, y: &[f64]) -> Vec<f64> {
    assert_eq!(m.cols, y.len());
    (0..m.rows).map(|i| dot(m.row(i), y)).collect()
}

/// Orthonormalizes the columns of `a` by modified Gram-Schmidt followed by
/// one full reorthogonalization pass.
///
/// The first output column is exactly `a₁/‖a₁‖` and every prefix of output
/// columns spans the same space as the matching prefix of input columns.
pub fn gram_schmidt(a: &Matrix) -> Result<Matrix> {
    if a.cols > a.rows {
        return Err(invalid(format!(
            "cannot orthonormalize {} columns in dimension {}",
            a.cols, a.rows
        )));
    }
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(a.cols);
    for j in 0..a.cols {
        let mut v = a.column(j);
        let original = norm(&v);
        for _pass in 0..2 {
            for prev in &q {
                let r = dot(prev, &v);
                for (x, p) in v.iter_mut().zip(prev) {
                    *x -= r * p;
                }
            }
        }
        let residual = norm(&v);
        if original == 0.0 || residual <= RANK_TOLERANCE * original {
            return Err(Error::RankDeficient { column: j, residual });
        }
        v.iter_mut().for_each(|x| *x /= residual);
        q.push(v);
    }
    Matrix::from_columns(&q)
}

/// Divides each column by its Euclidean norm.
pub fn normalize_columns(a: &Matrix) -> Result<Matrix> {
    let norms = a.column_norms();
    if let Some(column) = norms.iter().position(|&n| n <= 1e-300) {
        return Err(Error::RankDeficient { column, residual: norms[column] });
    }
    let mut out = a.clone();
    for row in out.data.chunks_exact_mut(a.cols) {
        for (v, n) in row.iter_mut().zip(&norms) {
            *v /= n;
        }
    }
    Ok(out)
}

/// Economy-size singular value decomposition `A = U·diag(S)·Vᵀ`.
///
/// For an `m×n` input with `k = min(m, n)`, `left_vectors` is `m×k`,
/// `right_vectors` is `n×k` and `singular_values` has `k` entries.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub left_vectors: Matrix,
    pub singular_values: Vec<f64>,
    pub right_vectors: Matrix,
}

impl SvdResult {
    /// `U·diag(S)·Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let k = self.singular_values.len();
        let mut us = self.left_vectors.clone();
        for i in 0..us.rows {
            for j in 0..k {
                us[(i, j)] *= self.singular_values[j];
            }
        }
        matmul(&us, &self.right_vectors.transpose()).expect("consistent shapes")
    }
}

/// One-sided (Hestenes) Jacobi SVD for matrices with `min(rows, cols) ≤ 64`.
pub fn svd_small(a: &Matrix) -> Result<SvdResult> {
    if a.rows.min(a.cols) > SVD_SMALL_LIMIT {
        return Err(invalid(format!(
            "svd_small handles min(rows, cols) <= {SVD_SMALL_LIMIT}, got {}x{}",
            a.rows, a.cols
        )));
    }
    if a.rows < a.cols {
        let t = jacobi_tall(&a.transpose())?;
        return Ok(SvdResult {
            left_vectors: t.right_vectors,
            singular_values: t.singular_values,
            right_vectors: t.left_vectors,
        });
    }
    jacobi_tall(a)
}

fn jacobi_tall(a: &Matrix) -> Result<SvdResult> {
    let (m, n) = a.shape();
    let mut w = a.columns();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    // Columns at roundoff level relative to the whole matrix are treated as null.
    let negligible = f64::EPSILON * m.max(n) as f64 * a.frobenius_norm();
    let negligible_sq = negligible * negligible;

    let mut converged = false;
    let mut worst = 0.0;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        worst = 0.0_f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                if alpha <= negligible_sq || beta <= negligible_sq {
                    continue;
                }
                let gamma = dot(&w[p], &w[q]);
                let off = gamma.abs() / (alpha * beta).sqrt();
                worst = worst.max(off);
                if off <= JACOBI_TOLERANCE {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if worst <= JACOBI_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { what: "one-sided Jacobi SVD", residual: worst });
    }

    let sigmas: Vec<f64> = w.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigmas[j].total_cmp(&sigmas[i]).then(i.cmp(&j)));

    let mut left: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for &j in &order {
        let s = sigmas[j].max(0.0);
        values.push(s);
        right.push(v[j].clone());
        if s > negligible {
            left.push(Some(w[j].iter().map(|x| x / s).collect()));
        } else {
            left.push(None);
        }
    }
    let left = fill_null_columns(m, left);
    Ok(SvdResult {
        left_vectors: Matrix::from_columns(&left)?,
        singular_values: values,
        right_vectors: Matrix::from_columns(&right)?,
    })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (wp, wq) = (&mut head[p], &mut tail[0]);
    for (x, y) in wp.iter_mut().zip(wq.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Replaces `None` columns with unit vectors orthogonal to every other column.
fn fill_null_columns(dim: usize, cols: Vec<Option<Vec<f64>>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = cols.iter().flatten().cloned().collect();
    cols.into_iter()
        .map(|c| match c {
            Some(c) => c,
            None => {
                let next = next_orthonormal(dim, &basis);
                basis.push(next.clone());
                next
            }
        })
        .collect()
}

/// The standard basis vector with the largest residual against `basis`,
/// orthogonalized twice and normalized.
fn next_orthonormal(dim: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..dim {
        let mut r = vec![0.0; dim];
        r[i] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let c = dot(b, &r);
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = norm(&r);
        if best.as_ref().map_or(true, |(bn, _)| n > *bn) {
            best = Some((n, r));
        }
    }
    let (n, mut r) = best.expect("dim > 0");
    r.iter_mut().for_each(|x| *x /= n);
    r
}

/// Extends an orthonormal-column `m×k` matrix to `m×total` orthonormal columns.
pub fn complete_orthonormal_columns(q: &Matrix, total: usize) -> Result<Matrix> {
    if total > q.rows || total < q.cols {
        return Err(invalid(format!(
            "cannot complete {} columns to {total} in dimension {}",
            q.cols, q.rows
        )));
    }
    let mut cols = q.columns();
    while cols.len() < total {
        let next = next_orthonormal(q.rows, &cols);
        cols.push(next);
    }
    Matrix::from_columns(&cols)
}

/// Smallest and largest singular values (over the `min(rows, cols)` values).
pub fn extreme_singular_values(a: &Matrix) -> Result<(f64, f64)> {
    if a.cols <= SVD_SMALL_LIMIT || a.rows <= SVD_SMALL_LIMIT {
        let s = svd_small(a)?.singular_values;
        return Ok((*s.last().expect("nonempty"), s[0]));
    }
    let gram = if a.cols <= a.rows { t_matmul(a, a)? } else { t_matmul(&a.transpose(), &a.transpose())? };
    let max_eig = power_iteration(|x| matvec(&gram, x), gram.rows)?;
    let min_eig = match cholesky(&gram) {
        Some(l) => 1.0 / power_iteration(|x| cholesky_solve(&l, x), gram.rows)?,
        None => 0.0,
    };
    Ok((min_eig.max(0.0).sqrt(), max_eig.max(0.0).sqrt()))
}

fn power_iteration(apply: impl Fn(&[f64]) -> Vec<f64>, dim: usize) -> Result<f64> {
    // Deterministic start with components in every direction.
    let mut x: Vec<f64> = (0..dim).map(|i| 1.0 + 0.1 * ((i * 7919) % 97) as f64 / 97.0).collect();
    let n0 = norm(&x);
    x.iter_mut().for_each(|v| *v /= n0);
    let mut lambda = 0.0_f64;
    for _ in 0..POWER_MAX_ITERS {
        let y = apply(&x);
        let next = dot(&x, &y);
        let ny = norm(&y);
        if ny == 0.0 {
            return Ok(0.0);
        }
        x = y.into_iter().map(|v| v / ny).collect();
        if (next - lambda).abs() <= POWER_TOLERANCE * next.abs() {
            return Ok(next);
        }
        lambda = next;
    }
    Err(Error::NoConvergence { what: "power iteration", residual: lambda })
}

fn cholesky(g: &Matrix) -> Option<Matrix> {
    let n = g.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = g[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[(i, k)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[(k, i)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, CounterRng};

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        gaussian_matrix(rows, cols, 1.0, &mut CounterRng::new(seed))
    }

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.sub(b).unwrap().frobenius_norm() <= tol
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let m = random(3, 4, 1);
        assert_eq!(matmul(&Matrix::identity(3), &m).unwrap(), m);
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[&[0.0], &[1.0]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[2.0, 4.0]);
        assert!(matches!(matmul(&a, &a.column_range(0, 1).unwrap().transpose()), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn matmul_transpose_identity_against_naive_loop() {
        let a = random(5, 3, 2);
        let b = random(3, 4, 3);
        let lhs = matmul(&a, &b).unwrap().transpose();
        // (AB)ᵀ = BᵀAᵀ, the right side by a plain triple loop.
        let (bt, at) = (b.transpose(), a.transpose());
        let mut rhs = Matrix::zeros(4, 5);
        for i in 0..4 {
            for j in 0..5 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += bt[(i, k)] * at[(k, j)];
                }
                rhs[(i, j)] = s;
            }
        }
        for (x, y) in lhs.data().iter().zip(rhs.data()) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert!(close(&t_matmul(&a, &a).unwrap(), &matmul(&a.transpose(), &a).unwrap(), 1e-12));
    }

    #[test]
    fn gram_schmidt_fixed_point_and_hand_case() {
        let q = gram_schmidt(&random(10, 3, 4)).unwrap();
        assert!(close(&gram_schmidt(&q).unwrap(), &q, 1e-12));

        let a = Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        assert!(close(&gram_schmidt(&a).unwrap(), &Matrix::identity(2), 1e-15));
    }

    #[test]
    fn gram_schmidt_random_projector_residual() {
        let a = random(50, 5, 5);
        let q = gram_schmidt(&a).unwrap();
        assert!(q.orthonormality_error() <= 1e-10);
        let proj = matmul(&q, &t_matmul(&q, &a).unwrap()).unwrap();
        assert!(proj.sub(&a).unwrap().frobenius_norm() <= 1e-8);
        let first = a.column(0);
        let n = norm(&first);
        for (x, y) in q.column(0).iter().zip(&first) {
            assert_eq!(*x, y / n);
        }
    }

    #[test]
    fn gram_schmidt_reports_dependent_column() {
        let a = Matrix::from_rows(&[&[1.0, 2.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 2.0, 0.0]]).unwrap();
        match gram_schmidt(&a) {
            Err(Error::RankDeficient { column, .. }) => assert_eq!(column, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(gram_schmidt(&random(2, 3, 1)).is_err());
    }

    #[test]
    fn svd_identity_and_diagonal() {
        let s = svd_small(&Matrix::identity(4)).unwrap();
        assert!(s.singular_values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let d = Matrix::diagonal(2, 2, &[3.0, 4.0]);
        let s = svd_small(&d).unwrap();
        assert_eq!(s.singular_values, vec![4.0, 3.0]);
    }

    #[test]
    fn svd_frobenius_identity_and_reconstruction() {
        let a = random(6, 3, 7);
        let s = svd_small(&a).unwrap();
        let sum: f64 = s.singular_values.iter().map(|v| v * v).sum();
        assert!((sum - a.frobenius_norm().powi(2)).abs() <= 1e-10);
        assert!(s.left_vectors.orthonormality_error() <= 1e-10);
        assert!(s.right_vectors.orthonormality_error() <= 1e-10);
        assert!(close(&s.reconstruct(), &a, 1e-8 * a.frobenius_norm()));
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_handles_rank_deficiency_and_wide_input() {
        let a = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0], &[0.0, 0.0]]).unwrap();
        let s = svd_small(&a).unwrap();
        assert!((s.singular_values[0] - 2.0).abs() < 1e-14);
        assert!(s.singular_values[1].abs() < 1e-14);
        assert!(s.left_vectors.orthonormality_error() <= 1e-10);
        assert!(close(&s.reconstruct(), &a, 1e-12));

        let z = svd_small(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(z.singular_values, vec![0.0, 0.0]);
        assert!(z.left_vectors.orthonormality_error() <= 1e-12);

        let w = random(3, 7, 8);
        let s = svd_small(&w).unwrap();
        assert_eq!(s.left_vectors.shape(), (3, 3));
        assert_eq!(s.right_vectors.shape(), (7, 3));
        assert!(close(&s.reconstruct(), &w, 1e-10));
    }

    #[test]
    fn normalize_columns_cases() {
        let a = Matrix::from_rows(&[&[3.0], &[4.0]]).unwrap();
        let n = normalize_columns(&a).unwrap();
        assert!((n[(0, 0)] - 0.6).abs() < 1e-16 && (n[(1, 0)] - 0.8).abs() < 1e-16);
        let r = normalize_columns(&random(9, 4, 9)).unwrap();
        assert!(r.column_norms().iter().all(|v| (v - 1.0).abs() <= 1e-12));
        let q = gram_schmidt(&random(6, 2, 3)).unwrap();
        assert!(close(&normalize_columns(&q).unwrap(), &q, 1e-15));
        let mut z = random(3, 2, 1);
        z.set_column(1, &[0.0, 0.0, 0.0]);
        assert!(matches!(normalize_columns(&z), Err(Error::RankDeficient { column: 1, .. })));
    }

    #[test]
    fn extreme_values_small_cases() {
        assert_eq!(extreme_singular_values(&Matrix::identity(3)).unwrap(), (1.0, 1.0));
        let (lo, hi) = extreme_singular_values(&Matrix::diagonal(2, 2, &[0.5, 2.0])).unwrap();
        assert!((lo - 0.5).abs() < 1e-15 && (hi - 2.0).abs() < 1e-15);
    }

    #[test]
    fn extreme_values_large_path_matches_jacobi() {
        let a = random(90, 70, 11);
        let (lo, hi) = extreme_singular_values(&a).unwrap();
        let s = jacobi_tall(&a).unwrap().singular_values;
        assert!((hi - s[0]).abs() <= 1e-6 * s[0]);
        assert!((lo - s[69]).abs() <= 1e-4 * s[0]);
    }

    #[test]
    fn complete_columns_is_orthonormal() {
        let q = gram_schmidt(&random(6, 2, 12)).unwrap();
        let full = complete_orthonormal_columns(&q, 6).unwrap();
        assert!(full.orthonormality_error() <= 1e-12);
        assert_eq!(full.column(0), q.column(0));
    }
}
