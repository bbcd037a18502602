//! Dense symmetric linear algebra.
//!
//! Matrices here are small (order at most a few dozen), so everything is
//! dense. [`SymMatrix`] stores the upper triangle only; reads of `(j, i)`
//! return the `(i, j)` entry.

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as a failed PSD test.
pub const PSD_TOL: f64 = -1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

#[inline]
pub fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // row-major upper triangle: rows before i hold dim + (dim-1) + ... entries
    i * dim - i * (i + 1) / 2 + j
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix order must be positive");
        SymMatrix {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds from a full square matrix, symmetrizing as `(A + Aᵀ)/2`.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            assert_eq!(rows[i].len(), dim, "row {i} has wrong length");
            for j in i..dim {
                m.set(i, j, 0.5 * (rows[i][j] + rows[j][i]));
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[packed_index(self.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = packed_index(self.dim, i, j);
        self.data[k] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = packed_index(self.dim, i, j);
        self.data[k] += v;
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &SymMatrix) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Frobenius norm of the full (not packed) matrix.
    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                let v = self.get(i, j);
                s += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        s.sqrt()
    }

    /// `⟨A, B⟩ = Σ_ij a_ij b_ij` over the full matrices.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                let p = self.get(i, j) * other.get(i, j);
                s += if i == j { p } else { 2.0 * p };
            }
        }
        s
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            let mut s = 0.0;
            for (j, xj) in x.iter().enumerate() {
                s += self.get(i, j) * xj;
            }
            y[i] = s;
        }
        y
    }
}

/// `xᵀ A x`.
pub fn quad_form(a: &SymMatrix, x: &[f64]) -> Result<f64> {
    if x.len() != a.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            found: x.len(),
        });
    }
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        s += a.get(i, i) * x[i] * x[i];
        let mut row = 0.0;
        for j in (i + 1)..n {
            row += a.get(i, j) * x[j];
        }
        s += 2.0 * x[i] * row;
    }
    Ok(s)
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct Eigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi eigen-solver.
///
/// Works on a dense copy; each sweep visits every off-diagonal pair once and
/// annihilates it with a plane rotation. Stops once the off-diagonal mass is
/// negligible relative to the Frobenius norm.
pub fn eig_symmetric(a: &SymMatrix) -> Result<Eigen> {
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix passed to eigen-solver".into()));
    }
    let n = a.dim();
    let mut m = a.to_dense();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let norm = a.frobenius_norm();
    let max_sweeps = 100 * n * n;
    let mut sweeps = 0;
    loop {
        if n <= 1 || norm == 0.0 {
            break;
        }
        if sweeps >= max_sweeps {
            return Err(Error::NoConvergence {
                what: "Jacobi eigen-solver",
                iterations: sweeps,
            });
        }
        sweeps += 1;
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[p][q] * m[p][q];
            }
        }
        if off.sqrt() <= 1e-15 * norm * n as f64 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq.abs() <= 1e-18 * norm {
                    continue;
                }
                let app = m[p][p];
                let aqq = m[q][q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                m[p][q] = 0.0;
                m[q][p] = 0.0;
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i][i].total_cmp(&m[j][j]).then(i.cmp(&j)));
    let values = order.iter().map(|&k| m[k][k]).collect();
    let vectors = order
        .iter()
        .map(|&k| v.iter().map(|row| row[k]).collect())
        .collect();
    Ok(Eigen { values, vectors })
}

/// Smallest eigenvalue and a unit eigenvector for it.
pub fn min_eigenvalue(a: &SymMatrix) -> Result<(f64, Vec<f64>)> {
    let mut e = eig_symmetric(a)?;
    let vec = e.vectors.swap_remove(0);
    Ok((e.values[0], vec))
}

pub fn is_psd(a: &SymMatrix) -> Result<bool> {
    Ok(min_eigenvalue(a)?.0 >= PSD_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(dim: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let mut a = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                a.set(i, j, rng.gen_range(-5.0..5.0));
            }
        }
        a
    }

    fn reconstruction_residual(a: &SymMatrix, e: &Eigen) -> f64 {
        let n = a.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n)
                    .map(|k| e.vectors[k][i] * e.values[k] * e.vectors[k][j])
                    .sum();
                worst = worst.max((r - a.get(i, j)).abs());
            }
        }
        worst
    }

    #[test]
    fn packed_reads_are_symmetric() {
        let mut a = SymMatrix::zeros(3);
        a.set(2, 0, 4.0);
        assert_eq!(a.get(0, 2), 4.0);
        assert_eq!(a.get(2, 0), 4.0);
        assert_eq!(a.packed().len(), 6);
    }

    #[test]
    fn diagonal_eigenvalues_sorted() {
        let e = eig_symmetric(&SymMatrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_by_two_swap() {
        let a = SymMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let e = eig_symmetric(&a).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [1, 2, 5, 8, 13] {
            let a = random_sym(dim, &mut rng);
            let e = eig_symmetric(&a).unwrap();
            assert!(reconstruction_residual(&a, &e) <= 1e-9 * a.frobenius_norm().max(1.0));
            for p in 0..dim {
                for q in 0..dim {
                    let d: f64 = (0..dim).map(|k| e.vectors[p][k] * e.vectors[q][k]).sum();
                    let want = if p == q { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn min_eigen_examples() {
        let (l, _) = min_eigenvalue(&SymMatrix::identity(4)).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
        let (l, v) = min_eigenvalue(&SymMatrix::from_diag(&[2.0, -3.0])).unwrap();
        assert_eq!(l, -3.0);
        assert!(v[0].abs() < 1e-15 && (v[1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn min_eigenvector_rayleigh_quotient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_sym(9, &mut rng);
        let (l, v) = min_eigenvalue(&a).unwrap();
        assert!((quad_form(&a, &v).unwrap() - l).abs() < 1e-9);
    }

    #[test]
    fn quad_form_examples() {
        assert_eq!(quad_form(&SymMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap(), 14.0);
        assert_eq!(quad_form(&SymMatrix::zeros(2), &[5.0, -1.0]).unwrap(), 0.0);
        assert!(quad_form(&SymMatrix::zeros(2), &[1.0]).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let mut a = SymMatrix::zeros(2);
        a.set(0, 1, f64::NAN);
        assert!(eig_symmetric(&a).is_err());
    }

    proptest::proptest! {
        #[test]
        fn quad_form_matches_naive_loop(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_sym(5, &mut rng);
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut naive = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    naive += a.get(i, j) * x[i] * x[j];
                }
            }
            let fast = quad_form(&a, &x).unwrap();
            proptest::prop_assert!((fast - naive).abs() <= 1e-12 * naive.abs().max(1.0));
        }

        #[test]
        fn eigenvalues_permutation_invariant(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 6;
            let a = random_sym(dim, &mut rng);
            let mut perm: Vec<usize> = (0..dim).collect();
            for k in (1..dim).rev() {
                perm.swap(k, rng.gen_range(0..=k));
            }
            let mut b = SymMatrix::zeros(dim);
            for i in 0..dim {
                for j in i..dim {
                    b.set(i, j, a.get(perm[i], perm[j]));
                }
            }
            let ea = eig_symmetric(&a).unwrap();
            let eb = eig_symmetric(&b).unwrap();
            for (x, y) in ea.values.iter().zip(&eb.values) {
                proptest::prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
