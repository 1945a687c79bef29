use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::bundle::EigenBundle;
use crate::error::{LabError, Result};
use crate::grid::{embed, FiberedState, MultiIndex, NuclearGrid};
use crate::linalg::{self, CMat, ZERO};

use super::dense::derivative_matrix;
use super::AdiabaticOps;

/// `T + E + κ²v` (order 1), optionally with the dense correction `-κ² w₁` (order 2),
/// acting on nuclear scalar functions.
#[derive(Clone, Debug)]
pub struct EffectiveHamiltonian {
    grid: NuclearGrid,
    pub kappa: f64,
    pub order: usize,
    pub energy: Vec<f64>,
    /// `κ² v(y)`.
    pub born_huang: Vec<f64>,
    /// Dense `w₁` on the nuclear grid, present for order 2.
    pub w1: Option<CMat>,
    pub kappa0: Option<Kappa0Check>,
}

impl EffectiveHamiltonian {
    pub fn grid(&self) -> &NuclearGrid {
        &self.grid
    }

    /// Same operator with the `w₁` correction removed.
    pub fn without_memory_correction(&self) -> EffectiveHamiltonian {
        EffectiveHamiltonian {
            order: 1,
            w1: None,
            kappa0: None,
            ..self.clone()
        }
    }

    pub fn apply(&self, g: &FiberedState) -> Result<FiberedState> {
        let t = super::kinetic_t(&self.grid, 1, self.kappa);
        let mut out = t.apply(g)?;
        for (p, v) in out.data_mut().iter_mut().enumerate() {
            *v += g.data()[p] * (self.energy[p] + self.born_huang[p]);
        }
        if let Some(w1) = &self.w1 {
            let wg = linalg::matvec(w1, g.data());
            let k2 = self.kappa * self.kappa;
            for (v, w) in out.data_mut().iter_mut().zip(wg) {
                *v -= w * k2;
            }
        }
        Ok(out)
    }

    pub fn dense_matrix(&self) -> CMat {
        let n = self.grid.points();
        let mut m = CMat::zeros(n, n);
        for axis in 0..self.grid.m() {
            m += derivative_matrix(&self.grid, MultiIndex::axis(axis, 2), self.kappa);
        }
        for p in 0..n {
            m[(p, p)] += C64::new(self.energy[p] + self.born_huang[p], 0.0);
        }
        if let Some(w1) = &self.w1 {
            m -= faer::Scale(C64::new(self.kappa * self.kappa, 0.0)) * w1;
        }
        m
    }
}

/// Relative-bound test `κ² C̃ √(m(m+1))/2 < 1` with `C̃ = sup ‖w₁ g‖ / ‖g‖_{H²_κ}`.
#[derive(Clone, Debug, Serialize)]
pub struct Kappa0Check {
    pub kappa: f64,
    pub relative_bound: f64,
    pub value: f64,
    pub passed: bool,
}

pub fn kappa0_check(w1: &CMat, grid: &NuclearGrid, kappa: f64) -> Result<Kappa0Check> {
    let n = grid.points();
    let mut weight = linalg::identity(n);
    for alpha in MultiIndex::of_order(grid.m(), 2) {
        let d = derivative_matrix(grid, alpha, kappa);
        weight += d.adjoint() * &d;
    }
    let e = linalg::hermitian_eigen(&weight)?;
    let v = &e.vectors;
    let scaled = CMat::from_fn(n, n, |i, j| v[(i, j)] / e.values[j].sqrt());
    let inv_sqrt = &scaled * v.adjoint();
    let relative_bound = linalg::op_norm(&(w1 * &inv_sqrt));
    let m = grid.m() as f64;
    let value = kappa * kappa * relative_bound * (m * (m + 1.0)).sqrt() / 2.0;
    Ok(Kappa0Check {
        kappa,
        relative_bound,
        value,
        passed: value < 1.0,
    })
}

/// Dense `w₁ = J† X* R̄ X J`, assembled column by column from structured `X`.
pub fn assemble_w1(bundle: &EigenBundle, ops: &AdiabaticOps) -> Result<CMat> {
    let grid = &bundle.grid;
    let n = grid.points();
    let dim = n * bundle.d;
    let mut xj = CMat::zeros(dim, n);
    let mut rxj = CMat::zeros(dim, n);
    for q in 0..n {
        let mut e = vec![ZERO; n];
        e[q] = C64::new(1.0, 0.0);
        let col = ops.x.apply(&embed(&bundle.psi0, &FiberedState::scalar(grid, e)?)?)?;
        let rcol = bundle.rbar.apply(&col);
        for (i, v) in col.data().iter().enumerate() {
            xj[(i, q)] = *v;
        }
        for (i, v) in rcol.data().iter().enumerate() {
            rxj[(i, q)] = *v;
        }
    }
    Ok(xj.adjoint() * &rxj)
}

/// Effective Hamiltonian of the given order (1 or 2).
pub fn build_heff(bundle: &EigenBundle, kappa: f64, order: usize) -> Result<EffectiveHamiltonian> {
    if !(1..=2).contains(&order) {
        return Err(LabError::Config(format!("effective Hamiltonian order {order} unsupported")));
    }
    let grid = bundle.grid.clone();
    let mut h = EffectiveHamiltonian {
        grid: grid.clone(),
        kappa,
        order,
        energy: bundle.energy.clone(),
        born_huang: bundle.v.iter().map(|v| kappa * kappa * v).collect(),
        w1: None,
        kappa0: None,
    };
    if order == 2 {
        let ops = AdiabaticOps::new(bundle, kappa)?;
        let w1 = assemble_w1(bundle, &ops)?;
        let defect = linalg::hermitian_defect(&w1);
        if defect > 1e-10 * linalg::max_abs(&w1).max(1.0) {
            return Err(LabError::NotHermitian {
                defect,
                context: format!(" in w1 at kappa = {kappa}"),
            });
        }
        h.kappa0 = Some(kappa0_check(&w1, &grid, kappa)?);
        h.w1 = Some(w1);
        let full = h.dense_matrix();
        let defect = linalg::hermitian_defect(&full);
        if defect > 1e-10 * linalg::max_abs(&full).max(1.0) {
            return Err(LabError::NotHermitian {
                defect,
                context: format!(" in second-order effective Hamiltonian at kappa = {kappa}"),
            });
        }
    }
    Ok(h)
}
