//! Small dense helpers: cubic 3- and 4-index arrays, spectral splitting of
//! symmetric matrices, pseudo-inverses.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

/// Dense `n×n×n` array, row-major in `(i, j, l)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    t[(i, j, l)] = f(i, j, l);
                }
            }
        }
        t
    }

    /// Fallible variant of [`Tensor3::from_fn`].
    pub fn try_from_fn<E>(
        n: usize,
        mut f: impl FnMut(usize, usize, usize) -> Result<f64, E>,
    ) -> Result<Self, E> {
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    t[(i, j, l)] = f(i, j, l)?;
                }
            }
        }
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn zip_map(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Tensor3 {
        assert_eq!(self.n, other.n);
        Tensor3 {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor3 {
        Tensor3 { n: self.n, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// Contract every index with the columns of `basis` (`n × k`):
    /// `out[a,b,c] = Σ t[i,j,l] B[i,a] B[j,b] B[l,c]`.
    pub fn restrict(&self, basis: &DMatrix<f64>) -> Tensor3 {
        assert_eq!(basis.nrows(), self.n);
        let k = basis.ncols();
        Tensor3::from_fn(k, |a, b, c| {
            let mut s = 0.0;
            for i in 0..self.n {
                for j in 0..self.n {
                    for l in 0..self.n {
                        s += self[(i, j, l)] * basis[(i, a)] * basis[(j, b)] * basis[(l, c)];
                    }
                }
            }
            s
        })
    }

    /// Trilinear evaluation `Σ t[i,j,l] x_i y_j z_l`.
    pub fn apply(&self, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                for l in 0..self.n {
                    s += self[(i, j, l)] * x[i] * y[j] * z[l];
                }
            }
        }
        s
    }

    /// Largest deviation from invariance under all index permutations.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let v = self[(i, j, l)];
                    for w in [self[(j, i, l)], self[(i, l, j)], self[(l, j, i)], self[(j, l, i)], self[(l, i, j)]] {
                        worst = worst.max((v - w).abs());
                    }
                }
            }
        }
        worst
    }

    /// Nested `Vec` form for serialisation.
    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| (0..self.n).map(|l| self[(i, j, l)]).collect()).collect())
            .collect()
    }
}

impl std::ops::Index<(usize, usize, usize)> for Tensor3 {
    type Output = f64;
    fn index(&self, (i, j, l): (usize, usize, usize)) -> &f64 {
        &self.data[(i * self.n + j) * self.n + l]
    }
}

impl std::ops::IndexMut<(usize, usize, usize)> for Tensor3 {
    fn index_mut(&mut self, (i, j, l): (usize, usize, usize)) -> &mut f64 {
        &mut self.data[(i * self.n + j) * self.n + l]
    }
}

/// Dense `n×n×n×n` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n * n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<(usize, usize, usize, usize)> for Tensor4 {
    type Output = f64;
    fn index(&self, (i, j, k, l): (usize, usize, usize, usize)) -> &f64 {
        &self.data[((i * self.n + j) * self.n + k) * self.n + l]
    }
}

impl std::ops::IndexMut<(usize, usize, usize, usize)> for Tensor4 {
    fn index_mut(&mut self, (i, j, k, l): (usize, usize, usize, usize)) -> &mut f64 {
        &mut self.data[((i * self.n + j) * self.n + k) * self.n + l]
    }
}

/// Eigen-decomposition of a symmetric matrix split at a relative threshold.
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    /// All eigenvalues, ascending by magnitude.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors (columns), same order as `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Number of eigenvalues classified as zero; they come first.
    pub null_count: usize,
    /// Absolute threshold that was applied.
    pub threshold: f64,
    /// Some eigenvalue lies within a factor 10 of the threshold.
    pub indeterminate: bool,
}

impl SpectralSplit {
    pub fn new(sym: &DMatrix<f64>, rank_tol: f64) -> Self {
        let n = sym.nrows();
        let sym = (sym + sym.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..n).collect();
        // Stable tie-break on index keeps the column order deterministic.
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .abs()
                .total_cmp(&eig.eigenvalues[b].abs())
                .then(a.cmp(&b))
        });
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (c, &i) in order.iter().enumerate() {
            let mut v = eig.eigenvectors.column(i).into_owned();
            fix_sign(&mut v);
            eigenvectors.set_column(c, &v);
        }
        let max_abs = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let threshold = rank_tol * max_abs;
        let null_count = if max_abs == 0.0 {
            n
        } else {
            eigenvalues.iter().filter(|v| v.abs() < threshold).count()
        };
        let indeterminate = max_abs > 0.0
            && eigenvalues
                .iter()
                .any(|v| v.abs() > threshold / 10.0 && v.abs() < threshold * 10.0);
        Self { eigenvalues, eigenvectors, null_count, threshold, indeterminate }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn rank(&self) -> usize {
        self.dim() - self.null_count
    }

    pub fn null_basis(&self) -> DMatrix<f64> {
        self.eigenvectors.columns(0, self.null_count).into_owned()
    }

    pub fn range_basis(&self) -> DMatrix<f64> {
        self.eigenvectors.columns(self.null_count, self.rank()).into_owned()
    }

    /// Moore–Penrose inverse with the null eigenvalues dropped.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for c in self.null_count..n {
            let v = self.eigenvectors.column(c);
            out += v * v.transpose() / self.eigenvalues[c];
        }
        out
    }

    /// Orthogonal projector onto the null space.
    pub fn null_projector(&self) -> DMatrix<f64> {
        let b = self.null_basis();
        &b * b.transpose()
    }

    /// Ratio of extreme non-null eigenvalue magnitudes.
    pub fn condition(&self) -> f64 {
        let kept = &self.eigenvalues[self.null_count..];
        match (kept.first(), kept.last()) {
            (Some(lo), Some(hi)) => hi.abs() / lo.abs(),
            _ => f64::INFINITY,
        }
    }
}

/// Make the largest-magnitude entry positive (ties: earliest index).
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 0..v.len() {
        if v[i].abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
