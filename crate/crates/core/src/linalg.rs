//! Small dense linear algebra.
//!
//! Dimensions stay tiny (d <= 16), so matrices are square, row-major and
//! heap-backed, and eigenproblems are solved with cyclic Jacobi rotations,
//! which are accurate to a few ulps of the largest eigenvalue.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

/// Largest dimension supported by the generators and checks.
pub const MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length is not a square.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim, "row-major data has wrong length");
        Self { dim, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        let d = self.dim;
        debug_assert_eq!(d, rhs.dim);
        let mut out = Matrix::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * rhs.data[k * d + j];
                }
            }
        }
        out
    }

    /// `self^T * self`.
    pub fn gram(&self) -> Matrix {
        self.transpose().matmul(self)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.matvec_into(x, &mut out);
        out
    }

    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, o) in out.iter_mut().enumerate().take(d) {
            *o = dot(&self.data[i * d..(i + 1) * d], x);
        }
    }

    /// `x^T M x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|i| x[i] * dot(&self.data[i * d..(i + 1) * d], x))
            .sum()
    }

    pub fn add_assign(&mut self, rhs: &Matrix) {
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }

    pub fn sub_assign(&mut self, rhs: &Matrix) {
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        let mut m = self.clone();
        m.scale(s);
        m
    }

    /// `self + s * rhs`.
    pub fn add_scaled(&self, s: f64, rhs: &Matrix) -> Matrix {
        let mut m = self.clone();
        for (a, b) in m.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
        m
    }

    /// Largest absolute difference between `M` and `M^T`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// `(M + M^T) / 2`.
    pub fn symmetrized(&self) -> Matrix {
        let mut m = self.clone();
        for i in 0..self.dim {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Eigen-decomposition of a symmetric matrix (only the upper triangle is
    /// trusted). Eigenvalues come back ascending.
    pub fn sym_eigen(&self) -> SymEigen {
        jacobi_eigen(self)
    }

    pub fn sym_eigenvalues(&self) -> Vec<f64> {
        self.sym_eigen().values
    }

    /// Spectral norm of a symmetric matrix: the largest |eigenvalue|.
    pub fn sym_spectral_norm(&self) -> f64 {
        let v = self.sym_eigenvalues();
        v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Spectral norm of a general matrix, `sqrt(lambda_max(M^T M))`.
    pub fn spectral_norm(&self) -> f64 {
        let g = self.gram().symmetrized();
        let top = g.sym_eigenvalues().last().copied().unwrap_or(0.0);
        libm::sqrt(top.max(0.0))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Column `k` (as `vectors[(i, k)]`) is the unit eigenvector of `values[k]`.
    pub vectors: Matrix,
}

impl SymEigen {
    /// Rebuilds `V diag(f(lambda)) V^T`.
    pub fn rebuild(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let d = self.values.len();
        let mut out = Matrix::zeros(d);
        for k in 0..d {
            let w = f(self.values[k]);
            for i in 0..d {
                for j in 0..d {
                    out[(i, j)] += w * self.vectors[(i, k)] * self.vectors[(j, k)];
                }
            }
        }
        out
    }
}

fn jacobi_eigen(m: &Matrix) -> SymEigen {
    let d = m.dim();
    let mut a = m.symmetrized();
    let mut v = Matrix::identity(d);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        let scale = a.max_abs();
        if off == 0.0 || libm::sqrt(off) <= 1e-300 + f64::EPSILON * 1e-3 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..d {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| a[(x, x)].total_cmp(&a[(y, y)]));
    let values = order.iter().map(|&k| a[(k, k)]).collect();
    let mut vectors = Matrix::zeros(d);
    for (new_k, &k) in order.iter().enumerate() {
        for i in 0..d {
            vectors[(i, new_k)] = v[(i, k)];
        }
    }
    SymEigen { values, vectors }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

#[inline]
pub fn norm2_sq(a: &[f64]) -> f64 {
    dot(a, a)
}
