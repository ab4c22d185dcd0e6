//! Dense vectors and matrices under the normalized inner product.
//!
//! [`Vector::dot`] is `N⁻¹ Σ xᵢ yᵢ` and is the only inner product exposed;
//! there is deliberately no Euclidean variant. The tensor `x ⊗ y` acts as
//! `(x ⊗ y) z = ⟨y, z⟩ x`, i.e. its matrix entries are `xᵢ yⱼ / N`.
//! Matrices act on vectors by the ordinary product `(A x)ᵢ = Σⱼ Aᵢⱼ xⱼ`.

use rayon::prelude::*;
use std::ops::{Index, IndexMut};

/// A vector in `R^N` equipped with the normalized inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(n: usize) -> Self {
        Vector(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Vector(vec![value; n])
    }

    /// The all-ones vector, which has unit normalized norm.
    pub fn ones(n: usize) -> Self {
        Self::constant(n, 1.0)
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Vector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `⟨x, y⟩ = N⁻¹ Σ xᵢ yᵢ`.
    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.len(), other.len(), "dimension mismatch");
        let s: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        s / self.len() as f64
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Vector) {
        assert_eq!(self.len(), other.len(), "dimension mismatch");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.0 {
            *a *= alpha;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Square dense matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds from row-major data; panics when `data.len() != n * n`.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "row-major data has wrong length");
        Matrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `A x`
    pub fn mul_vec(&self, x: &Vector) -> Vector {
        assert_eq!(x.len(), self.n, "dimension mismatch");
        let xs = x.as_slice();
        let out: Vec<f64> = self
            .data
            .par_chunks(self.n.max(1))
            .map(|row| row.iter().zip(xs).map(|(a, b)| a * b).sum())
            .collect();
        Vector(out)
    }

    /// `Aᵀ x`
    pub fn tmul_vec(&self, x: &Vector) -> Vector {
        assert_eq!(x.len(), self.n, "dimension mismatch");
        let mut out = vec![0.0; self.n];
        for (i, row) in self.data.chunks(self.n.max(1)).enumerate() {
            let xi = x[i];
            if xi != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += a * xi;
                }
            }
        }
        Vector(out)
    }

    /// `A (x, y)` contracted as `⟨x, A y⟩` under the normalized inner product.
    pub fn form(&self, x: &Vector, y: &Vector) -> f64 {
        x.dot(&self.mul_vec(y))
    }

    /// `self += alpha · (x ⊗ y)` with the normalized tensor convention.
    pub fn add_tensor(&mut self, alpha: f64, x: &Vector, y: &Vector) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let c = alpha / self.n as f64;
        let ys = y.as_slice();
        self.data
            .par_chunks_mut(self.n.max(1))
            .zip(x.as_slice().par_iter())
            .for_each(|(row, &xi)| {
                let s = c * xi;
                for (a, b) in row.iter_mut().zip(ys) {
                    *a += s * b;
                }
            });
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut t = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.data[j * n + i] = self.data[i * n + j];
            }
        }
        t
    }

    /// `(A + Aᵀ)/√2`
    pub fn symmetrized(&self) -> Matrix {
        let n = self.n;
        let mut s = Matrix::zeros(n);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..n {
            for j in 0..n {
                s.data[i * n + j] = (self.data[i * n + j] + self.data[j * n + i]) * r;
            }
        }
        s
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.n, other.n, "dimension mismatch");
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Ordinary matrix product.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let n = self.n;
        let mut out = vec![0.0; n * n];
        out.par_chunks_mut(n.max(1))
            .enumerate()
            .for_each(|(i, orow)| {
                for k in 0..n {
                    let a = self.data[i * n + k];
                    if a != 0.0 {
                        let brow = &other.data[k * n..(k + 1) * n];
                        for (o, b) in orow.iter_mut().zip(brow) {
                            *o += a * b;
                        }
                    }
                }
            });
        Matrix { n, data: out }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.n, other.n, "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}
