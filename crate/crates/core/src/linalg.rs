//! Small dense and banded complex linear algebra used by the simulators.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::{CMatrix, Error, Result};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Square matrix stored by diagonals with half-bandwidth `half`.
///
/// Entry `(i, j)` lives at `i * (2 * half + 1) + (j + half - i)` when
/// `|i - j| <= half`; everything outside the band is an exact zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Banded {
    n: usize,
    half: usize,
    data: Vec<C64>,
}

impl Banded {
    pub fn zeros(n: usize, half: usize) -> Self {
        Banded {
            n,
            half,
            data: vec![ZERO; n * (2 * half + 1)],
        }
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut b = Banded::zeros(diag.len(), 0);
        b.data.copy_from_slice(diag);
        b
    }

    /// Detects the exact band structure of a dense square matrix.
    /// Returns `None` when the half-bandwidth exceeds `max_half`.
    pub fn from_dense(m: &CMatrix, max_half: usize) -> Option<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return None;
        }
        let mut half = 0;
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)] != ZERO {
                    half = half.max(i.abs_diff(j));
                }
            }
        }
        if half > max_half {
            return None;
        }
        let mut b = Banded::zeros(n, half);
        for i in 0..n {
            for j in b.row_range(i) {
                b.set(i, j, m[(i, j)]);
            }
        }
        Some(b)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.half
    }

    fn width(&self) -> usize {
        2 * self.half + 1
    }

    fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.half)..(i + self.half + 1).min(self.n)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width() + (j + self.half - i)
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        if i.abs_diff(j) > self.half || i >= self.n || j >= self.n {
            ZERO
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        assert!(i.abs_diff(j) <= self.half, "entry outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn add_diagonal(&mut self, diag: &[C64]) {
        for (i, d) in diag.iter().enumerate() {
            let k = self.idx(i, i);
            self.data[k] += d;
        }
    }

    pub fn scale(&self, s: C64) -> Banded {
        Banded {
            n: self.n,
            half: self.half,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = DMatrix::from_element(self.n, self.n, ZERO);
        for i in 0..self.n {
            for j in self.row_range(i) {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    /// `out = self * x`.
    pub fn matvec_into(&self, x: &[C64], out: &mut [C64]) {
        debug_assert_eq!(x.len(), self.n);
        let w = self.width();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = ZERO;
            for j in self.row_range(i) {
                acc += row[j + self.half - i] * x[j];
            }
            *o = acc;
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.n];
        self.matvec_into(x, &mut out);
        out
    }

    /// Product of two banded matrices; the result has the summed bandwidth.
    pub fn mul(&self, other: &Banded) -> Banded {
        assert_eq!(self.n, other.n);
        let mut out = Banded::zeros(self.n, self.half + other.half);
        for i in 0..self.n {
            for k in self.row_range(i) {
                let a = self.get(i, k);
                if a == ZERO {
                    continue;
                }
                for j in other.row_range(k) {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    /// Exact entrywise check `A = A^†`.
    pub fn is_exactly_hermitian(&self) -> bool {
        (0..self.n).all(|i| self.row_range(i).all(|j| self.get(i, j) == self.get(j, i).conj()))
    }
}

/// Cayley propagator `(I + i dt A / 2)^{-1} (I - i dt A / 2)` for a Hermitian
/// banded `A`. Unitary to rounding for every step size.
#[derive(Debug, Clone)]
pub struct Cayley {
    explicit: Banded,
    // LU factors of I + i dt A / 2, packed in band storage (unit lower).
    lu: Banded,
}

impl Cayley {
    pub fn new(a: &Banded, dt: f64) -> Self {
        let n = a.n();
        let half_step = C64::new(0.0, 0.5 * dt);
        let mut explicit = a.scale(-half_step);
        let mut implicit = a.scale(half_step);
        let ones = vec![ONE; n];
        explicit.add_diagonal(&ones);
        implicit.add_diagonal(&ones);
        // The Hermitian part of `implicit` is the identity, so elimination
        // without pivoting is stable.
        let h = implicit.half;
        for k in 0..n {
            let pivot = implicit.get(k, k);
            let hi = (k + h + 1).min(n);
            for i in k + 1..hi {
                let l = implicit.get(i, k) / pivot;
                implicit.set(i, k, l);
                for j in k + 1..hi {
                    let v = implicit.get(i, j) - l * implicit.get(k, j);
                    implicit.set(i, j, v);
                }
            }
        }
        Cayley {
            explicit,
            lu: implicit,
        }
    }

    pub fn n(&self) -> usize {
        self.lu.n
    }

    /// Applies the propagator in place; `scratch` must have length `n`.
    pub fn apply(&self, x: &mut [C64], scratch: &mut [C64]) {
        let n = self.n();
        let h = self.lu.half;
        self.explicit.matvec_into(x, scratch);
        for i in 0..n {
            let mut acc = scratch[i];
            for j in i.saturating_sub(h)..i {
                acc -= self.lu.get(i, j) * scratch[j];
            }
            scratch[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = scratch[i];
            for j in i + 1..(i + h + 1).min(n) {
                acc -= self.lu.get(i, j) * x[j];
            }
            x[i] = acc / self.lu.get(i, i);
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let n = self.n();
        let mut m = DMatrix::from_element(n, n, ZERO);
        let mut col = vec![ZERO; n];
        let mut scratch = vec![ZERO; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = ZERO);
            col[j] = ONE;
            self.apply(&mut col, &mut scratch);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        m
    }
}

pub fn identity(n: usize) -> CMatrix {
    DMatrix::identity(n, n)
}

pub fn diagonal_matrix(diag: &[C64]) -> CMatrix {
    let n = diag.len();
    let mut m = DMatrix::from_element(n, n, ZERO);
    for (i, d) in diag.iter().enumerate() {
        m[(i, i)] = *d;
    }
    m
}

/// Returns the diagonal if every off-diagonal entry is an exact zero.
pub fn as_diagonal(m: &CMatrix) -> Option<Vec<C64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return None;
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && m[(i, j)] != ZERO {
                return None;
            }
        }
    }
    Some((0..n).map(|i| m[(i, i)]).collect())
}

pub fn is_exactly_hermitian(m: &CMatrix) -> bool {
    let n = m.nrows();
    m.ncols() == n && (0..n).all(|i| (0..=i).all(|j| m[(i, j)] == m[(j, i)].conj()))
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn anti_hermitian_part(m: &CMatrix) -> CMatrix {
    (m - m.adjoint()).scale(0.5)
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.iter().all(|v| *v == ZERO) {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let h = hermitian_part(m);
    let eig = h.symmetric_eigen();
    let vals = eig.eigenvalues.iter().copied().collect();
    (vals, eig.eigenvectors)
}

pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = hermitian_part(m);
    let mut v: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Trace norm of a Hermitian matrix (sum of absolute eigenvalues).
pub fn trace_norm_hermitian(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).iter().map(|v| v.abs()).sum()
}

/// Principal square root of a positive semidefinite Hermitian matrix.
/// Eigenvalues below `-tol` are rejected; small negative ones are clamped.
/// `f(M)` for Hermitian `M`, through its eigendecomposition.
pub fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = hermitian_eigen(m);
    let d: Vec<C64> = vals.iter().map(|v| C64::new(f(*v), 0.0)).collect();
    hermitian_part(&(&vecs * diagonal_matrix(&d) * vecs.adjoint()))
}

pub fn sqrt_psd(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    let (vals, vecs) = hermitian_eigen(m);
    if let Some(v) = vals.iter().find(|v| **v < -tol) {
        return Err(Error::invalid(format!(
            "matrix is not positive semidefinite (eigenvalue {v:e})"
        )));
    }
    let n = m.nrows();
    let roots: Vec<C64> = vals.iter().map(|v| C64::new(v.max(0.0).sqrt(), 0.0)).collect();
    let d = diagonal_matrix(&roots);
    let out = &vecs * d * vecs.adjoint();
    debug_assert_eq!(out.nrows(), n);
    Ok(hermitian_part(&out))
}

pub fn vec_norm_sq(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

pub fn dense_matvec(m: &CMatrix, x: &[C64]) -> Vec<C64> {
    let n = m.nrows();
    let mut out = vec![ZERO; n];
    for j in 0..m.ncols() {
        let xj = x[j];
        if xj == ZERO {
            continue;
        }
        let col = m.column(j);
        for i in 0..n {
            out[i] += col[i] * xj;
        }
    }
    out
}
