//! Dense linear algebra kernel and the seeded random number generator.
//!
//! Matrices are row-major `f64`. The SVD is a one-sided Jacobi sweep, which is
//! slow next to LAPACK but accurate to working precision on the small and tall
//! matrices this crate produces (Jacobians, local neighbourhoods, basis
//! products).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Wraps row-major data, checking the length.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                rows * cols,
                data.len(),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape("Matrix::from_rows", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so zero-width matrices yield empty rows explicitly
        let cols = self.cols;
        (0..self.rows).map(move |i| &self.data[i * cols..(i + 1) * cols])
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Gathers the listed rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Column range `[start, end)` as a new matrix.
    pub fn select_cols(&self, start: usize, end: usize) -> Matrix {
        Matrix::from_fn(self.rows, end - start, |i, j| self.get(i, start + j))
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("lhs cols == rhs rows ({})", self.cols),
                other.rows,
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), out_row);
                }
            }
        }
        Ok(out)
    }

    /// `self · v`
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::shape("matvec", self.cols, v.len()));
        }
        Ok(self.row_iter().map(|r| dot(r, v)).collect())
    }

    /// `selfᵀ · v`
    pub fn tr_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::shape("tr_matvec", self.rows, v.len()));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &vi) in self.row_iter().zip(v) {
            axpy(vi, r, &mut out);
        }
        Ok(out)
    }

    /// `selfᵀ · self`, exactly symmetric.
    pub fn gram(&self) -> Matrix {
        let n = self.cols;
        let mut g = Matrix::zeros(n, n);
        for r in self.row_iter() {
            for i in 0..n {
                let ri = r[i];
                if ri == 0.0 {
                    continue;
                }
                for j in i..n {
                    g.data[i * n + j] += ri * r[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i];
            }
        }
        g
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four accumulators let the compiler vectorise
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `y += alpha · x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm2(x: &[f64]) -> f64 {
    libm::sqrt(dot(x, x))
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Euclidean distance between two equally long slices.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(sq_dist(a, b))
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Economy-size singular value decomposition `a = u · diag(s) · vt`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// m × r, orthonormal columns
    pub u: Matrix,
    /// descending, nonnegative, length r = min(m, n)
    pub singular_values: Vec<f64>,
    /// r × n, orthonormal rows
    pub vt: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let r = self.singular_values.len();
        let us = Matrix::from_fn(self.u.rows(), r, |i, j| {
            self.u.get(i, j) * self.singular_values[j]
        });
        us.matmul(&self.vt).expect("svd factors chain")
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided Jacobi SVD.
pub fn svd(a: &Matrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("svd of a non-finite matrix".into()));
    }
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::InvalidInput("svd of an empty matrix".into()));
    }
    if a.rows() >= a.cols() {
        Ok(jacobi_tall(a))
    } else {
        let t = jacobi_tall(&a.transpose());
        Ok(Svd {
            u: t.vt.transpose(),
            singular_values: t.singular_values,
            vt: t.u.transpose(),
        })
    }
}

/// Jacobi rotations on the columns of a tall matrix (rows >= cols).
fn jacobi_tall(a: &Matrix) -> Svd {
    let (m, n) = a.shape();
    // columns stored as rows so every rotation touches contiguous memory
    let mut w = a.transpose();
    let mut v = Matrix::identity(n);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let wp = w.row(p);
                    let wq = w.row(q);
                    (dot(wp, wp), dot(wq, wq), dot(wp, wq))
                };
                if gamma == 0.0 || gamma.abs() <= 1e-15 * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| norm2(w.row(j))).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut singular_values = Vec::with_capacity(n);
    let mut vt = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        vt.row_mut(k).copy_from_slice(v.row(j));
        if sigma > 0.0 {
            u_cols.push(w.row(j).iter().map(|x| x / sigma).collect());
            singular_values.push(sigma);
        } else {
            u_cols.push(vec![0.0; m]);
            singular_values.push(0.0);
        }
    }
    // Null singular directions get an arbitrary orthonormal completion.
    for k in 0..n {
        if singular_values[k] == 0.0 {
            u_cols[k] = orthonormal_completion(&u_cols[..k], &u_cols[k + 1..], m);
        }
    }
    let u = Matrix::from_fn(m, n, |i, j| u_cols[j][i]);
    Svd {
        u,
        singular_values,
        vt,
    }
}

#[inline]
fn rotate_rows(w: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = w.cols;
    let (head, tail) = w.data.split_at_mut(q * cols);
    let wp = &mut head[p * cols..(p + 1) * cols];
    let wq = &mut tail[..cols];
    for (x, y) in wp.iter_mut().zip(wq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// A unit vector orthogonal to every nonzero vector in `before` and `after`.
fn orthonormal_completion(before: &[Vec<f64>], after: &[Vec<f64>], m: usize) -> Vec<f64> {
    let basis: Vec<&Vec<f64>> = before
        .iter()
        .chain(after)
        .filter(|v| v.iter().any(|&x| x != 0.0))
        .collect();
    let mut best: Option<Vec<f64>> = None;
    let mut best_norm = 0.0;
    for e in 0..m {
        let mut cand = vec![0.0; m];
        cand[e] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let proj = dot(&cand, b);
                axpy(-proj, b, &mut cand);
            }
        }
        let nrm = norm2(&cand);
        if nrm > best_norm {
            best_norm = nrm;
            best = Some(cand);
        }
        if nrm > 0.5 {
            break;
        }
    }
    let mut v = best.unwrap_or_else(|| vec![0.0; m]);
    if best_norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= best_norm);
    }
    v
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// descending
    pub values: Vec<f64>,
    /// column `k` is the eigenvector of `values[k]`
    pub vectors: Matrix,
}

/// Cyclic two-sided Jacobi eigen-solver. Only the upper triangle is trusted to
/// be symmetric to rounding; the input is symmetrised first.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape("symmetric_eigen", "square", format!("{:?}", a.shape())));
    }
    if !a.is_finite() {
        return Err(Error::InvalidInput("eigen of a non-finite matrix".into()));
    }
    let mut m = Matrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let mut v = Matrix::identity(n);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j) * m.get(i, j))
            .sum();
        let scale: f64 = m.frobenius_norm();
        if off <= 1e-30 * scale * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |i, k| v.get(i, order[k]));
    Ok(SymmetricEigen { values, vectors })
}

/// Number of singular values above `rel_tol · s[0]`; zero for a zero spectrum.
pub fn numerical_rank(s: &[f64], rel_tol: f64) -> usize {
    match s.first() {
        Some(&s0) if s0 > 0.0 => s.iter().filter(|&&x| x > rel_tol * s0).count(),
        _ => 0,
    }
}

/// Default relative threshold for [`numerical_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-6;

/// Seeded xoshiro256++ stream. The same seed yields the same `u64` and `f64`
/// sequences on every platform.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream derived from this stream's seed and `stream`.
    pub fn derive(&self, stream: u64) -> SeededRng {
        // splitmix-style mixing of (seed, stream)
        let mut z = self
            .seed
            .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .wrapping_add(0x632B_E59B_D9B4_E019);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        SeededRng::new(z ^ (z >> 31))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n` (unbiased, by rejection).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare_normal = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.normal())
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, in random order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).unwrap().max_abs()
    }

    fn rel_recon_err(a: &Matrix) -> f64 {
        let s = svd(a).unwrap();
        a.sub(&s.reconstruct()).unwrap().frobenius_norm() / a.frobenius_norm().max(1e-300)
    }

    fn assert_orthonormal_cols(u: &Matrix, tol: f64) {
        let g = u.gram();
        assert!(
            max_abs_diff(&g, &Matrix::identity(u.cols())) < tol,
            "UᵀU deviates from I by {}",
            max_abs_diff(&g, &Matrix::identity(u.cols()))
        );
    }

    #[test]
    fn svd_identity_and_diagonal() {
        let s = svd(&Matrix::identity(3)).unwrap();
        assert_eq!(s.singular_values, vec![1.0, 1.0, 1.0]);
        let s = svd(&Matrix::from_diag(&[1.0, 3.0, 2.0])).unwrap();
        assert_eq!(s.singular_values, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn svd_random_tall_and_wide() {
        let mut rng = SeededRng::new(7);
        let a = rng.normal_matrix(10, 4);
        let s = svd(&a).unwrap();
        assert!(rel_recon_err(&a) < 1e-8);
        assert_orthonormal_cols(&s.u, 1e-10);
        assert_orthonormal_cols(&s.vt.transpose(), 1e-10);
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));

        let w = rng.normal_matrix(3, 9);
        let s = svd(&w).unwrap();
        assert_eq!(s.u.shape(), (3, 3));
        assert_eq!(s.vt.shape(), (3, 9));
        assert!(rel_recon_err(&w) < 1e-8);
    }

    #[test]
    fn svd_rank_deficient_keeps_orthonormal_u() {
        // two identical columns and a zero column
        let a = Matrix::from_rows(&[[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.5, 0.5, 0.0], [1.0, 1.0, 0.0]])
            .unwrap();
        let s = svd(&a).unwrap();
        assert!(s.singular_values[1] < 1e-12 && s.singular_values[2] == 0.0);
        assert_orthonormal_cols(&s.u, 1e-10);
        assert!(rel_recon_err(&a) < 1e-12);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let a = Matrix::from_rows(&[[1.0, f64::NAN]]).unwrap();
        assert!(matches!(svd(&a), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn orthogonal_matrix_has_unit_singular_values() {
        let mut rng = SeededRng::new(3);
        let q = svd(&rng.normal_matrix(12, 12)).unwrap().u;
        let s = svd(&q).unwrap();
        assert!(s.singular_values.iter().all(|x| (x - 1.0).abs() < 1e-10));
    }

    #[test]
    fn dense_basics() {
        let mut rng = SeededRng::new(1);
        let a = rng.normal_matrix(4, 3);
        assert_eq!(Matrix::identity(4).matmul(&a).unwrap(), a);
        assert_eq!(a.transpose().transpose(), a);
        assert_eq!(norm2(&[3.0, 4.0]), 5.0);
        assert!(matches!(a.matmul(&a), Err(Error::Shape { .. })));
        assert!(matches!(a.matvec(&[1.0]), Err(Error::Shape { .. })));
        let g = a.gram();
        assert!(max_abs_diff(&g, &a.transpose().matmul(&a).unwrap()) < 1e-14);
        let v = [1.0, -2.0, 0.5, 3.0];
        let lhs = a.tr_matvec(&v).unwrap();
        let rhs = a.transpose().matvec(&v).unwrap();
        assert!(lhs.iter().zip(&rhs).all(|(x, y)| (x - y).abs() < 1e-14));
    }

    #[test]
    fn eigen_reconstructs() {
        let mut rng = SeededRng::new(11);
        let a = rng.normal_matrix(6, 5).gram();
        let e = symmetric_eigen(&a).unwrap();
        let vd = Matrix::from_fn(5, 5, |i, j| e.vectors.get(i, j) * e.values[j]);
        let r = vd.matmul(&e.vectors.transpose()).unwrap();
        assert!(max_abs_diff(&r, &a) < 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rank_cases() {
        assert_eq!(numerical_rank(&[1.0, 1.0, 1e-12], 1e-6), 2);
        assert_eq!(numerical_rank(&[5.0, 4.0, 3.0], 1e-6), 3);
        assert_eq!(numerical_rank(&[0.0, 0.0], 1e-6), 0);
        assert_eq!(numerical_rank(&[0.0, 0.0], 0.5), 0);
        assert_eq!(numerical_rank(&[], 0.5), 0);
    }

    #[test]
    fn rng_reproducible_and_distinct_streams() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
        let mut c = a.derive(1);
        let mut d = a.derive(2);
        assert_ne!(c.next_u64(), d.next_u64());
        let u = SeededRng::new(5).uniform();
        assert!((0.0..1.0).contains(&u));
    }

    #[test]
    fn sample_indices_distinct() {
        let mut rng = SeededRng::new(9);
        let mut idx = rng.sample_indices(20, 20);
        idx.sort_unstable();
        assert_eq!(idx, (0..20).collect::<Vec<_>>());
    }
}
