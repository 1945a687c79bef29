//! Dense complex linear algebra on top of faer.

use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};

pub type CMat = Mat<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermitianEigen {
    /// `V f(Λ) V† x`.
    pub fn apply_fn(&self, x: &[C64], f: impl Fn(f64) -> C64) -> Vec<C64> {
        let mut coeffs = adjoint_matvec(&self.vectors, x);
        for (c, &l) in coeffs.iter_mut().zip(&self.values) {
            *c *= f(l);
        }
        matvec(&self.vectors, &coeffs)
    }
}

/// Imaginary parts below this fraction of the largest entry count as rounding.
const REAL_TOL: f64 = 1e-15;

/// Hermitian eigensolver; takes the real symmetric path when the imaginary parts are at
/// rounding level.
pub fn hermitian_eigen(m: &CMat) -> Result<HermitianEigen> {
    let n = m.nrows();
    let cutoff = REAL_TOL * max_abs(m);
    let is_real = (0..n).all(|j| (0..n).all(|i| m[(i, j)].im.abs() <= cutoff));
    if is_real {
        let r = Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)].re);
        let e = r.self_adjoint_eigen(Side::Lower).map_err(|_| LabError::Eigen)?;
        let s = e.S().column_vector();
        let u = e.U();
        Ok(HermitianEigen {
            values: (0..n).map(|i| s[i]).collect(),
            vectors: Mat::from_fn(n, n, |i, j| real(u[(i, j)])),
        })
    } else {
        let e = m.self_adjoint_eigen(Side::Lower).map_err(|_| LabError::Eigen)?;
        let s = e.S().column_vector();
        Ok(HermitianEigen {
            values: (0..n).map(|i| s[i].re).collect(),
            vectors: e.U().to_owned(),
        })
    }
}

pub fn matvec(m: &CMat, x: &[C64]) -> Vec<C64> {
    let mut y = vec![ZERO; m.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == ZERO {
            continue;
        }
        let col = m.col_as_slice(j);
        for (yi, &mij) in y.iter_mut().zip(col) {
            *yi += mij * xj;
        }
    }
    y
}

/// `M† x`.
pub fn adjoint_matvec(m: &CMat, x: &[C64]) -> Vec<C64> {
    (0..m.ncols())
        .map(|j| {
            m.col_as_slice(j)
                .iter()
                .zip(x)
                .map(|(a, b)| a.conj() * b)
                .sum()
        })
        .collect()
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint().to_owned()
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

/// `max |M - M†|`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut d: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            d = d.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    d
}

pub fn max_abs(m: &CMat) -> f64 {
    let mut d: f64 = 0.0;
    for j in 0..m.ncols() {
        for v in m.col_as_slice(j) {
            d = d.max(v.norm());
        }
    }
    d
}

/// Spectral norm via the largest eigenvalue of `M†M`.
pub fn op_norm(m: &CMat) -> f64 {
    let g = m.adjoint() * m;
    let e = hermitian_eigen(&g);
    match e {
        Ok(e) => e.values.last().copied().unwrap_or(0.0).max(0.0).sqrt(),
        Err(_) => f64::NAN,
    }
}

pub fn vec_norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn axpy(y: &mut [C64], c: C64, x: &[C64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += c * b;
    }
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Hermitian matrix with independent standard Gaussian entries, symmetrized.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = Mat::<C64>::from_fn(n, n, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    Mat::from_fn(n, n, |i, j| (g[(i, j)] + g[(j, i)].conj()) * 0.5)
}

/// `exp(c·H)` for Hermitian `H` and scalar `c`.
pub fn hermitian_exp(h: &HermitianEigen, c: C64) -> CMat {
    let n = h.values.len();
    let v = &h.vectors;
    let scaled = Mat::from_fn(n, n, |i, j| v[(i, j)] * (c * h.values[j]).exp());
    &scaled * v.adjoint()
}

/// Inverse through an LU factorization.
pub fn inverse(m: &CMat) -> CMat {
    use faer::linalg::solvers::DenseSolveCore;
    m.partial_piv_lu().inverse()
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &CMat) -> f64 {
    let g = m.adjoint() * m;
    match hermitian_eigen(&g) {
        Ok(e) => {
            let lo = e.values[0].max(0.0).sqrt();
            let hi = e.values.last().copied().unwrap_or(0.0).max(0.0).sqrt();
            if lo == 0.0 {
                f64::INFINITY
            } else {
                hi / lo
            }
        }
        Err(_) => f64::INFINITY,
    }
}
