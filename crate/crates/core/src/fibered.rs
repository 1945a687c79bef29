//! Decomposable (pointwise-in-y) operators: one d×d block per grid point.

use num_complex::Complex64 as C64;

use crate::error::{LabError, Result};
use crate::grid::{FiberedState, MultiIndex, NuclearGrid};
use crate::linalg::{self, CMat, ONE, ZERO};

/// Blocks stored point-major, each block row-major: index `p*d*d + i*d + j`.
#[derive(Clone, Debug)]
pub struct FiberedMultOp {
    grid: NuclearGrid,
    d: usize,
    blocks: Vec<C64>,
}

impl FiberedMultOp {
    pub fn new(grid: &NuclearGrid, d: usize, blocks: Vec<C64>) -> Result<Self> {
        if d == 0 || blocks.len() != grid.points() * d * d {
            return Err(LabError::Shape(format!(
                "expected {} block entries, got {}",
                grid.points() * d * d,
                blocks.len()
            )));
        }
        if blocks.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LabError::NonFinite("fibered operator"));
        }
        Ok(FiberedMultOp {
            grid: grid.clone(),
            d,
            blocks,
        })
    }

    /// Build from a real block function `f(p, y, out)` filling a row-major d×d buffer.
    pub fn from_real_fn(grid: &NuclearGrid, d: usize, mut f: impl FnMut(usize, [f64; 2], &mut [f64])) -> Self {
        let mut blocks = Vec::with_capacity(grid.points() * d * d);
        let mut buf = vec![0.0; d * d];
        for p in 0..grid.points() {
            buf.iter_mut().for_each(|v| *v = 0.0);
            f(p, grid.coords(p), &mut buf);
            blocks.extend(buf.iter().map(|&x| C64::new(x, 0.0)));
        }
        FiberedMultOp {
            grid: grid.clone(),
            d,
            blocks,
        }
    }

    pub fn zeros(grid: &NuclearGrid, d: usize) -> Self {
        FiberedMultOp {
            grid: grid.clone(),
            d,
            blocks: vec![ZERO; grid.points() * d * d],
        }
    }

    pub fn identity(grid: &NuclearGrid, d: usize) -> Self {
        Self::scalar(grid, d, &vec![1.0; grid.points()])
    }

    /// `s(y)·I` in the fiber.
    pub fn scalar(grid: &NuclearGrid, d: usize, values: &[f64]) -> Self {
        let mut op = Self::zeros(grid, d);
        for (p, &s) in values.iter().enumerate() {
            for a in 0..d {
                op.blocks[p * d * d + a * d + a] = C64::new(s, 0.0);
            }
        }
        op
    }

    pub fn grid(&self) -> &NuclearGrid {
        &self.grid
    }

    pub fn fiber_dim(&self) -> usize {
        self.d
    }

    pub fn blocks(&self) -> &[C64] {
        &self.blocks
    }

    pub fn block(&self, p: usize) -> &[C64] {
        let dd = self.d * self.d;
        &self.blocks[p * dd..(p + 1) * dd]
    }

    pub fn block_mut(&mut self, p: usize) -> &mut [C64] {
        let dd = self.d * self.d;
        &mut self.blocks[p * dd..(p + 1) * dd]
    }

    pub fn block_matrix(&self, p: usize) -> CMat {
        let b = self.block(p);
        let d = self.d;
        CMat::from_fn(d, d, |i, j| b[i * d + j])
    }

    pub fn set_block(&mut self, p: usize, m: &CMat) {
        let d = self.d;
        let b = self.block_mut(p);
        for i in 0..d {
            for j in 0..d {
                b[i * d + j] = m[(i, j)];
            }
        }
    }

    pub fn apply(&self, psi: &FiberedState) -> FiberedState {
        let d = self.d;
        let mut out = FiberedState::zeros(&self.grid, d);
        for p in 0..self.grid.points() {
            let b = self.block(p);
            let x = psi.fiber(p);
            let y = out.fiber_mut(p);
            for i in 0..d {
                let row = &b[i * d..(i + 1) * d];
                y[i] = row.iter().zip(x).map(|(a, v)| a * v).sum();
            }
        }
        out
    }

    /// Pointwise product `self(y)·other(y)`.
    pub fn compose(&self, other: &FiberedMultOp) -> FiberedMultOp {
        let d = self.d;
        let mut out = Self::zeros(&self.grid, d);
        for p in 0..self.grid.points() {
            let a = self.block(p);
            let b = other.block(p);
            let c = out.block_mut(p);
            for i in 0..d {
                for k in 0..d {
                    let aik = a[i * d + k];
                    if aik == ZERO {
                        continue;
                    }
                    for j in 0..d {
                        c[i * d + j] += aik * b[k * d + j];
                    }
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> FiberedMultOp {
        let d = self.d;
        let mut out = Self::zeros(&self.grid, d);
        for p in 0..self.grid.points() {
            let a = self.block(p);
            let c = out.block_mut(p);
            for i in 0..d {
                for j in 0..d {
                    c[j * d + i] = a[i * d + j].conj();
                }
            }
        }
        out
    }

    pub fn add(&self, other: &FiberedMultOp) -> FiberedMultOp {
        self.combine(other, ONE)
    }

    pub fn sub(&self, other: &FiberedMultOp) -> FiberedMultOp {
        self.combine(other, -ONE)
    }

    fn combine(&self, other: &FiberedMultOp, c: C64) -> FiberedMultOp {
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a + c * b)
            .collect();
        FiberedMultOp {
            grid: self.grid.clone(),
            d: self.d,
            blocks,
        }
    }

    pub fn scaled(&self, c: C64) -> FiberedMultOp {
        FiberedMultOp {
            grid: self.grid.clone(),
            d: self.d,
            blocks: self.blocks.iter().map(|z| z * c).collect(),
        }
    }

    /// Entrywise `D^α` of the coefficient field, computed spectrally.
    pub fn derivative(&self, alpha: MultiIndex, kappa: f64) -> FiberedMultOp {
        if alpha == MultiIndex::ZERO {
            return self.clone();
        }
        let dd = self.d * self.d;
        let mut out = self.clone();
        let mut field = vec![ZERO; self.grid.points()];
        for e in 0..dd {
            for (p, v) in field.iter_mut().enumerate() {
                *v = self.blocks[p * dd + e];
            }
            if field.iter().all(|v| *v == ZERO) {
                continue;
            }
            self.grid.derivative_scalar(&mut field, alpha, kappa);
            for (p, v) in field.iter().enumerate() {
                out.blocks[p * dd + e] = *v;
            }
        }
        out
    }

    /// `max_p max_ij |A_p - A_p†|`.
    pub fn hermitian_defect(&self) -> f64 {
        let d = self.d;
        let mut m: f64 = 0.0;
        for p in 0..self.grid.points() {
            let b = self.block(p);
            for i in 0..d {
                for j in 0..d {
                    m = m.max((b[i * d + j] - b[j * d + i].conj()).norm());
                }
            }
        }
        m
    }

    pub fn imaginary_defect(&self) -> f64 {
        self.blocks.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    /// First grid point whose block fails the real-symmetric check, with its defect.
    pub fn real_symmetric_violation(&self, tol: f64) -> Option<(usize, f64)> {
        let d = self.d;
        for p in 0..self.grid.points() {
            let b = self.block(p);
            let mut defect: f64 = 0.0;
            for i in 0..d {
                for j in 0..d {
                    defect = defect
                        .max(b[i * d + j].im.abs())
                        .max((b[i * d + j].re - b[j * d + i].re).abs());
                }
            }
            if defect > tol {
                return Some((p, defect));
            }
        }
        None
    }

    /// Largest spectral norm over blocks.
    pub fn max_block_norm(&self) -> f64 {
        (0..self.grid.points())
            .map(|p| linalg::op_norm(&self.block_matrix(p)))
            .fold(0.0, f64::max)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}
