//! Structured operators built from the ground bundle: kinetic energy, the coupling `X`,
//! the commutator operator `S`, the `X_j` recursion and effective Hamiltonians.

mod dense;
mod diff;
mod heff;

pub use dense::{assemble_diff, assemble_effective, assemble_mult, derivative_matrix, DenseOperator, DENSE_CAP};
pub use diff::DiffFiberOp;
pub use heff::{build_heff, kappa0_check, EffectiveHamiltonian, Kappa0Check};

use num_complex::Complex64 as C64;

use crate::bundle::EigenBundle;
use crate::error::{LabError, Result};
use crate::fibered::FiberedMultOp;
use crate::grid::{embed, sobolev_norm, FiberedState, MultiIndex, NuclearGrid};
use crate::linalg::I;

/// `T = Σ_j D_j²`, diagonal in the fiber.
pub fn kinetic_t(grid: &NuclearGrid, d: usize, kappa: f64) -> DiffFiberOp {
    let id = FiberedMultOp::identity(grid, d);
    let terms = (0..grid.m()).map(|axis| (MultiIndex::axis(axis, 2), id.clone())).collect();
    DiffFiberOp::from_terms(grid, d, kappa, terms).expect("second order is within the cap")
}

/// `H_bo - E` rebuilt from the excited part of the bundle.
pub fn excitation_operator(bundle: &EigenBundle) -> FiberedMultOp {
    let d = bundle.d;
    let r = d - 1;
    let mut op = FiberedMultOp::zeros(&bundle.grid, d);
    for p in 0..bundle.grid.points() {
        let blk = op.block_mut(p);
        for j in 0..r {
            let gap = bundle.excited_values[p * r + j] - bundle.energy[p];
            let v = &bundle.excited_vectors[(p * r + j) * d..(p * r + j + 1) * d];
            for a in 0..d {
                for b in 0..d {
                    blk[a * d + b] += v[a] * v[b].conj() * gap;
                }
            }
        }
    }
    op
}

/// Building blocks shared by all derived operators at one κ.
#[derive(Clone, Debug)]
pub struct AdiabaticOps {
    pub kappa: f64,
    pub t: DiffFiberOp,
    /// `K = T + E`.
    pub k: DiffFiberOp,
    /// `C = [T, P]`.
    pub c: DiffFiberOp,
    pub p: DiffFiberOp,
    pub pbar: DiffFiberOp,
    pub rbar: DiffFiberOp,
    pub x: DiffFiberOp,
    pub x_adj: DiffFiberOp,
    pub s: DiffFiberOp,
}

impl AdiabaticOps {
    pub fn new(bundle: &EigenBundle, kappa: f64) -> Result<Self> {
        if bundle.connection > crate::bundle::CONNECTION_TOL {
            return Err(LabError::Gauge(format!("connection {:.3e}", bundle.connection)));
        }
        let grid = &bundle.grid;
        let d = bundle.d;
        let mult = |b: &FiberedMultOp| DiffFiberOp::multiplication(b, kappa);
        let t = kinetic_t(grid, d, kappa);
        let k = t.add(&mult(&bundle.energy_op()));
        let p = mult(&bundle.p);
        let pbar = mult(&bundle.pbar);
        let rbar = mult(&bundle.rbar);
        let c = t.commutator(&p)?;
        let x = pbar.compose(&c)?.compose(&p)?.scaled(I / kappa);
        let x_adj = x.adjoint();
        let v = mult(&excitation_operator(bundle));
        let s = rbar.compose(&v.commutator(&t)?)?.compose(&rbar)?;
        Ok(AdiabaticOps {
            kappa,
            t,
            k,
            c,
            p,
            pbar,
            rbar,
            x,
            x_adj,
            s,
        })
    }

    /// One step of `X_j = (i/κ) S X_{j-1} + (i/κ) R̄ (K P̄ X_{j-1} - X_{j-1} P K) P`.
    fn next_x(&self, prev: &DiffFiberOp) -> Result<DiffFiberOp> {
        let sx = self.s.compose(prev)?;
        let left = self.k.compose(&self.pbar)?.compose(prev)?;
        let right = prev.compose(&self.p)?.compose(&self.k)?;
        let bracket = self.rbar.compose(&left.sub(&right))?.compose(&self.p)?;
        Ok(sx.add(&bracket).scaled(I / self.kappa))
    }

    pub fn recursion(&self, j: usize) -> Result<DiffFiberOp> {
        if !(1..=3).contains(&j) {
            return Err(LabError::RecursionOrder(j));
        }
        let mut x = self.x.clone();
        for _ in 1..j {
            x = self.next_x(&x)?;
        }
        Ok(x)
    }

    /// `X₂ = -κ⁻² S P̄ C P - κ⁻² R̄ [C, C - K] P`.
    pub fn explicit_x2(&self) -> Result<DiffFiberOp> {
        let ck = self.c.sub(&self.k);
        let a = self.s.compose(&self.pbar)?.compose(&self.c)?.compose(&self.p)?;
        let b = self.rbar.compose(&self.c.commutator(&ck)?)?.compose(&self.p)?;
        Ok(a.add(&b).scaled(C64::new(-1.0 / self.kappa.powi(2), 0.0)))
    }

    /// Closed form of `X₃`, valid on `Ran P`.
    pub fn explicit_x3(&self) -> Result<DiffFiberOp> {
        let ck = self.c.sub(&self.k);
        let c_ck = self.c.commutator(&ck)?;
        let (s, r, p, c) = (&self.s, &self.rbar, &self.p, &self.c);
        let t1 = s.compose(s)?.compose(&self.pbar)?.compose(c)?.compose(p)?;
        let t2 = r.compose(&s.commutator(&ck)?)?.compose(c)?.compose(p)?;
        let t3 = r.compose(s)?.compose(&c_ck)?.compose(p)?;
        let t4 = s.compose(r)?.compose(&c_ck)?.compose(p)?;
        let t5 = r.compose(&r.commutator(&ck)?)?.compose(&c_ck)?.compose(p)?;
        let t6 = r.compose(r)?.compose(&c_ck.commutator(&ck)?)?.compose(p)?;
        let sum = t1.add(&t2).add(&t3).add(&t4).add(&t5).add(&t6);
        Ok(sum.scaled(-I / self.kappa.powi(3)))
    }
}

/// Coupling `X = (i/κ) P̄ [T, P] P` and its formal adjoint.
pub fn coupling_x(bundle: &EigenBundle, kappa: f64) -> Result<(DiffFiberOp, DiffFiberOp)> {
    let ops = AdiabaticOps::new(bundle, kappa)?;
    Ok((ops.x, ops.x_adj))
}

/// `S = R̄ [H_bo - E, T] R̄`.
pub fn s_operator(bundle: &EigenBundle, kappa: f64) -> Result<DiffFiberOp> {
    Ok(AdiabaticOps::new(bundle, kappa)?.s)
}

/// `X_j` from the recursion, `1 ≤ j ≤ 3`.
pub fn recursion_xj(bundle: &EigenBundle, kappa: f64, j: usize) -> Result<DiffFiberOp> {
    AdiabaticOps::new(bundle, kappa)?.recursion(j)
}

/// `‖P K P(ψ∘g) - ψ∘(K + κ²v)g‖ / ‖g‖_{H²_κ}`, evaluated with structured operators.
pub fn pkp_identity_check(bundle: &EigenBundle, kappa: f64, g: &FiberedState) -> Result<f64> {
    let scale = sobolev_norm(g, 2, kappa)?;
    if scale == 0.0 {
        return Ok(0.0);
    }
    let grid = &bundle.grid;
    let lifted = embed(&bundle.psi0, g)?;
    let k = kinetic_t(grid, bundle.d, kappa).add(&DiffFiberOp::multiplication(&bundle.energy_op(), kappa));
    let lhs = bundle.p.apply(&k.apply(&bundle.p.apply(&lifted))?);
    let scalar_k = kinetic_t(grid, 1, kappa);
    let mut rhs_g = scalar_k.apply(g)?;
    for (p, v) in rhs_g.data_mut().iter_mut().enumerate() {
        *v += g.data()[p] * (bundle.energy[p] + kappa * kappa * bundle.v[p]);
    }
    let rhs = embed(&bundle.psi0, &rhs_g)?;
    Ok(lhs.sub(&rhs).norm() / scale)
}
