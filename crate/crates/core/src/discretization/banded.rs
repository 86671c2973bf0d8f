//! Band storage and LU factorization for the finite-difference matrices.

use nalgebra::{DMatrix, DVector};

/// Square matrix with `kl` sub- and `ku` super-diagonals, stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn identity(n: usize, kl: usize, ku: usize) -> Self {
        let mut m = Self::zeros(n, kl, ku);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    #[inline]
    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[i * self.width() + j + self.kl - i]
        } else {
            0.0
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside the band");
        let w = self.width();
        self.data[i * w + j + self.kl - i] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside the band");
        let w = self.width();
        self.data[i * w + j + self.kl - i] += v;
    }

    /// Column range of row `i` inside the band.
    #[inline]
    fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for j in self.row_range(i) {
                acc += self.get(i, j) * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn transpose_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let xi = x[i];
            for j in self.row_range(i) {
                y[j] += self.get(i, j) * xi;
            }
        }
        y
    }

    /// `alpha * I + beta * self`
    pub fn shifted_scaled(&self, alpha: f64, beta: f64) -> BandMatrix {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= beta;
        }
        for i in 0..self.n {
            out.add(i, i, alpha);
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in self.row_range(i) {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    /// Maximum over rows of `a_ii + sum_{j != i} |a_ij|`.
    pub fn max_row_log_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                self.row_range(i)
                    .map(|j| if i == j { self.get(i, j) } else { self.get(i, j).abs() })
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row_range(i).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// LU factors without pivoting, kept in band storage.
#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandMatrix,
}

impl BandedLu {
    /// Returns `None` when a pivot is too small to proceed without pivoting.
    fn factor(a: &BandMatrix) -> Option<Self> {
        let n = a.n;
        let (kl, ku) = (a.kl, a.ku);
        let mut lu = a.clone();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let pivot = lu.get(k, k);
            if !(pivot.abs() > 1e-13 * scale) {
                return None;
            }
            let i_end = (k + kl + 1).min(n);
            let j_end = (k + ku + 1).min(n);
            for i in k + 1..i_end {
                let l = lu.get(i, k) / pivot;
                if l == 0.0 {
                    continue;
                }
                lu.set(i, k, l);
                for j in k + 1..j_end {
                    let u = lu.get(k, j);
                    if u != 0.0 {
                        lu.add(i, j, -l * u);
                    }
                }
            }
        }
        Some(Self { lu })
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let lu = &self.lu;
        let n = lu.n;
        for i in 0..n {
            let mut acc = b[i];
            for j in i.saturating_sub(lu.kl)..i {
                acc -= lu.get(i, j) * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..(i + lu.ku + 1).min(n) {
                acc -= lu.get(i, j) * b[j];
            }
            b[i] = acc / lu.get(i, i);
        }
    }

    /// Solve `(LU)^T x = b`.
    fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let lu = &self.lu;
        let n = lu.n;
        // U^T y = b
        for i in 0..n {
            let mut acc = b[i];
            for j in i.saturating_sub(lu.ku)..i {
                acc -= lu.get(j, i) * b[j];
            }
            b[i] = acc / lu.get(i, i);
        }
        // L^T x = y
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..(i + lu.kl + 1).min(n) {
                acc -= lu.get(j, i) * b[j];
            }
            b[i] = acc;
        }
    }
}

/// Factorization of a banded system, falling back to dense partial-pivot LU
/// when the unpivoted band elimination meets a small pivot.
#[derive(Debug, Clone)]
pub enum LinearFactor {
    Banded(BandedLu),
    Dense {
        lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
        lu_t: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    },
}

impl LinearFactor {
    /// `None` if the matrix is numerically singular.
    pub fn new(a: &BandMatrix) -> Option<Self> {
        if let Some(f) = BandedLu::factor(a) {
            return Some(LinearFactor::Banded(f));
        }
        let dense = a.to_dense();
        let lu = dense.clone().lu();
        if !lu.is_invertible() {
            return None;
        }
        let lu_t = dense.transpose().lu();
        Some(LinearFactor::Dense { lu, lu_t })
    }

    pub fn solve_in_place(&self, b: &mut DVector<f64>) {
        match self {
            LinearFactor::Banded(f) => f.solve_in_place(b.as_mut_slice()),
            LinearFactor::Dense { lu, .. } => {
                lu.solve_mut(b);
            }
        }
    }

    pub fn solve_transpose_in_place(&self, b: &mut DVector<f64>) {
        match self {
            LinearFactor::Banded(f) => f.solve_transpose_in_place(b.as_mut_slice()),
            LinearFactor::Dense { lu_t, .. } => {
                lu_t.solve_mut(b);
            }
        }
    }
}
