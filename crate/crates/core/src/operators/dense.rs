use num_complex::Complex64 as C64;

use crate::error::{LabError, Result};
use crate::fibered::FiberedMultOp;
use crate::grid::{MultiIndex, NuclearGrid};
use crate::linalg::{self, CMat, ZERO};

use super::diff::DiffFiberOp;
use super::heff::EffectiveHamiltonian;

/// Default cap on `N^m · d` for dense assembly.
pub const DENSE_CAP: usize = 4096;

/// Explicit matrix over the grid-by-fiber basis (index `p*d + a`).
#[derive(Clone, Debug)]
pub struct DenseOperator {
    pub matrix: CMat,
    pub hermitian: bool,
}

impl DenseOperator {
    pub fn new(matrix: CMat, hermitian: bool) -> Result<Self> {
        if hermitian {
            let defect = linalg::hermitian_defect(&matrix);
            if defect >= 1e-11 * linalg::max_abs(&matrix).max(1.0) {
                return Err(LabError::NotHermitian {
                    defect,
                    context: String::new(),
                });
            }
        }
        Ok(DenseOperator { matrix, hermitian })
    }

    /// Average with the adjoint when the defect is at rounding level.
    pub fn hermitian_from(matrix: CMat) -> Result<Self> {
        let op = Self::new(matrix, true)?;
        let sym = faer::Scale(C64::new(0.5, 0.0)) * (&op.matrix + op.matrix.adjoint());
        Ok(DenseOperator {
            matrix: sym,
            hermitian: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        linalg::matvec(&self.matrix, x)
    }
}

fn check_cap(dim: usize, cap: usize) -> Result<()> {
    if dim > cap {
        Err(LabError::DenseCap { dim, cap })
    } else {
        Ok(())
    }
}

/// Scalar-grid matrix of `D^α` (size `N^m × N^m`).
pub fn derivative_matrix(grid: &NuclearGrid, alpha: MultiIndex, kappa: f64) -> CMat {
    let n = grid.points();
    let mut m = CMat::zeros(n, n);
    let mut col = vec![ZERO; n];
    for q in 0..n {
        col.iter_mut().for_each(|v| *v = ZERO);
        col[q] = C64::new(1.0, 0.0);
        grid.derivative_scalar(&mut col, alpha, kappa);
        for (p, v) in col.iter().enumerate() {
            m[(p, q)] = *v;
        }
    }
    m
}

pub fn assemble_mult(op: &FiberedMultOp, cap: usize) -> Result<DenseOperator> {
    let d = op.fiber_dim();
    let pts = op.grid().points();
    check_cap(pts * d, cap)?;
    let mut m = CMat::zeros(pts * d, pts * d);
    for p in 0..pts {
        let b = op.block(p);
        for i in 0..d {
            for j in 0..d {
                m[(p * d + i, p * d + j)] = b[i * d + j];
            }
        }
    }
    Ok(DenseOperator {
        hermitian: op.hermitian_defect() < 1e-13,
        matrix: m,
    })
}

pub fn assemble_diff(op: &DiffFiberOp, cap: usize) -> Result<DenseOperator> {
    let d = op.fiber_dim();
    let grid = op.grid();
    let pts = grid.points();
    check_cap(pts * d, cap)?;
    let mut m = CMat::zeros(pts * d, pts * d);
    for (alpha, b) in op.terms() {
        let dm = derivative_matrix(grid, *alpha, op.kappa());
        for q in 0..pts {
            let col = dm.col_as_slice(q);
            for (p, &dpq) in col.iter().enumerate() {
                if dpq == ZERO {
                    continue;
                }
                let blk = b.block(p);
                for i in 0..d {
                    for j in 0..d {
                        m[(p * d + i, q * d + j)] += blk[i * d + j] * dpq;
                    }
                }
            }
        }
    }
    let hermitian = linalg::hermitian_defect(&m) < 1e-11 * linalg::max_abs(&m).max(1.0);
    Ok(DenseOperator { matrix: m, hermitian })
}

/// Dense nuclear-space matrix of an effective Hamiltonian.
pub fn assemble_effective(h: &EffectiveHamiltonian, cap: usize) -> Result<DenseOperator> {
    check_cap(h.grid().points(), cap)?;
    DenseOperator::hermitian_from(h.dense_matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::kinetic_t;

    #[test]
    fn identity_assembles_to_identity() {
        let g = NuclearGrid::new(1, 16, 4.0).unwrap();
        let id = assemble_mult(&FiberedMultOp::identity(&g, 2), DENSE_CAP).unwrap();
        assert_eq!(linalg::max_abs(&(&id.matrix - linalg::identity(32))), 0.0);
    }

    #[test]
    fn kinetic_spectrum_is_fourier() {
        let g = NuclearGrid::new(1, 16, 16.0).unwrap();
        let kappa = 0.7;
        let t = assemble_diff(&kinetic_t(&g, 2, kappa), DENSE_CAP).unwrap();
        assert!(t.hermitian);
        let mut vals = linalg::hermitian_eigen(&t.matrix).unwrap().values;
        let mut expect: Vec<f64> = g
            .wavenumbers()
            .iter()
            .flat_map(|k| [(kappa * k).powi(2); 2])
            .collect();
        vals.sort_by(f64::total_cmp);
        expect.sort_by(f64::total_cmp);
        for (a, b) in vals.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn cap_is_enforced() {
        let g = NuclearGrid::new(1, 64, 4.0).unwrap();
        assert!(assemble_mult(&FiberedMultOp::identity(&g, 2), 100).is_err());
    }
}
