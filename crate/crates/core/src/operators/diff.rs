use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

use crate::error::{LabError, Result};
use crate::fibered::FiberedMultOp;
use crate::grid::{apply_d_alpha, FiberedState, MultiIndex, NuclearGrid, MAX_ORDER};
use crate::linalg::ONE;

/// Relative size below which a coefficient is treated as cancelled.
const PRUNE_TOL: f64 = 1e-13;

/// Normal-ordered differential operator `Σ_α B_α(y) D^α` with fibered coefficients on the left.
#[derive(Clone, Debug)]
pub struct DiffFiberOp {
    grid: NuclearGrid,
    d: usize,
    kappa: f64,
    terms: BTreeMap<MultiIndex, FiberedMultOp>,
}

impl DiffFiberOp {
    pub fn zero(grid: &NuclearGrid, d: usize, kappa: f64) -> Self {
        DiffFiberOp {
            grid: grid.clone(),
            d,
            kappa,
            terms: BTreeMap::new(),
        }
    }

    /// Order-zero operator `B(y)`.
    pub fn multiplication(b: &FiberedMultOp, kappa: f64) -> Self {
        let mut op = Self::zero(b.grid(), b.fiber_dim(), kappa);
        op.terms.insert(MultiIndex::ZERO, b.clone());
        op
    }

    pub fn from_terms(grid: &NuclearGrid, d: usize, kappa: f64, terms: Vec<(MultiIndex, FiberedMultOp)>) -> Result<Self> {
        let mut op = Self::zero(grid, d, kappa);
        for (alpha, b) in terms {
            op.push(alpha, b)?;
        }
        Ok(op)
    }

    pub fn push(&mut self, alpha: MultiIndex, b: FiberedMultOp) -> Result<()> {
        if alpha.order() > MAX_ORDER {
            return Err(LabError::DerivativeOrder(alpha.order()));
        }
        if self.grid.m() == 1 && alpha.0[1] != 0 {
            return Err(LabError::Shape("second axis used on a one-dimensional grid".into()));
        }
        match self.terms.get_mut(&alpha) {
            Some(existing) => *existing = existing.add(&b),
            None => {
                self.terms.insert(alpha, b);
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &NuclearGrid {
        &self.grid
    }

    pub fn fiber_dim(&self) -> usize {
        self.d
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &FiberedMultOp)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, alpha: MultiIndex) -> Option<&FiberedMultOp> {
        self.terms.get(&alpha)
    }

    pub fn order(&self) -> usize {
        self.terms.keys().map(|a| a.order()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|b| b.max_abs() == 0.0)
    }

    pub fn apply(&self, psi: &FiberedState) -> Result<FiberedState> {
        let mut out = FiberedState::zeros(&self.grid, self.d);
        for (alpha, b) in &self.terms {
            let dpsi = apply_d_alpha(psi, *alpha, self.kappa)?;
            out.axpy(ONE, &b.apply(&dpsi));
        }
        Ok(out)
    }

    pub fn add(&self, other: &DiffFiberOp) -> DiffFiberOp {
        let mut out = self.clone();
        for (alpha, b) in &other.terms {
            out.push(*alpha, b.clone()).expect("orders already validated");
        }
        out.prune()
    }

    pub fn sub(&self, other: &DiffFiberOp) -> DiffFiberOp {
        self.add(&other.scaled(-ONE))
    }

    pub fn scaled(&self, c: C64) -> DiffFiberOp {
        let mut out = self.clone();
        for b in out.terms.values_mut() {
            *b = b.scaled(c);
        }
        out
    }

    /// Product `self ∘ other`, re-normal-ordered with
    /// `(A D^α)(B D^β) = Σ_{γ≤α} C(α,γ) A (D^γ B) D^{α-γ+β}`.
    pub fn compose(&self, other: &DiffFiberOp) -> Result<DiffFiberOp> {
        let mut out = Self::zero(&self.grid, self.d, self.kappa);
        for (alpha, a) in &self.terms {
            for (gamma, c) in alpha.lower_sets() {
                let rest = alpha.sub(gamma);
                for (beta, b) in &other.terms {
                    let target = rest.add(*beta);
                    let db = b.derivative(gamma, self.kappa);
                    let coeff = a.compose(&db).scaled(C64::new(c, 0.0));
                    if target.order() > MAX_ORDER {
                        if coeff.max_abs() == 0.0 {
                            continue;
                        }
                        return Err(LabError::DerivativeOrder(target.order()));
                    }
                    out.push(target, coeff)?;
                }
            }
        }
        Ok(out.prune())
    }

    /// Formal adjoint: `(B D^α)* = D^α B* = Σ_{γ≤α} C(α,γ) (D^γ B*) D^{α-γ}`.
    pub fn adjoint(&self) -> DiffFiberOp {
        let mut out = Self::zero(&self.grid, self.d, self.kappa);
        for (alpha, b) in &self.terms {
            let bs = b.adjoint();
            for (gamma, c) in alpha.lower_sets() {
                let coeff = bs.derivative(gamma, self.kappa).scaled(C64::new(c, 0.0));
                out.push(alpha.sub(gamma), coeff).expect("order does not grow");
            }
        }
        out.prune()
    }

    pub fn mul_left(&self, b: &FiberedMultOp) -> DiffFiberOp {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = b.compose(c);
        }
        out
    }

    pub fn commutator(&self, other: &DiffFiberOp) -> Result<DiffFiberOp> {
        Ok(self.compose(other)?.sub(&other.compose(self)?))
    }

    /// Drop terms whose coefficients are zero to rounding relative to the largest coefficient.
    fn prune(mut self) -> DiffFiberOp {
        let scale = self.terms.values().map(|b| b.max_abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            self.terms.clear();
            return self;
        }
        self.terms.retain(|_, b| b.max_abs() > PRUNE_TOL * scale);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::smooth_random_state;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coeff(grid: &NuclearGrid, phase: f64) -> FiberedMultOp {
        let w = 2.0 * std::f64::consts::PI / grid.length();
        FiberedMultOp::from_real_fn(grid, 2, |_, y, b| {
            let s = (w * y[0] + phase).sin();
            b.copy_from_slice(&[1.0 + 0.3 * s, 0.2 * s, -0.1, 0.5 * (w * y[0]).cos()]);
        })
    }

    #[test]
    fn composition_matches_sequential_application() {
        let g = NuclearGrid::new(1, 64, 8.0).unwrap();
        let kappa = 0.3;
        let a = DiffFiberOp::from_terms(
            &g,
            2,
            kappa,
            vec![(MultiIndex([1, 0]), coeff(&g, 0.1)), (MultiIndex::ZERO, coeff(&g, 1.0))],
        )
        .unwrap();
        let b = DiffFiberOp::from_terms(&g, 2, kappa, vec![(MultiIndex([2, 0]), coeff(&g, 2.0))]).unwrap();
        let ab = a.compose(&b).unwrap();
        assert_eq!(ab.order(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi = smooth_random_state(&g, 2, &mut rng);
        let lhs = ab.apply(&psi).unwrap();
        let rhs = a.apply(&b.apply(&psi).unwrap()).unwrap();
        assert!(lhs.sub(&rhs).norm() < 1e-10 * rhs.norm());
    }

    #[test]
    fn adjoint_is_formal_adjoint() {
        let g = NuclearGrid::new(1, 64, 8.0).unwrap();
        let a = DiffFiberOp::from_terms(
            &g,
            2,
            0.2,
            vec![(MultiIndex([1, 0]), coeff(&g, 0.4)), (MultiIndex([2, 0]), coeff(&g, 0.9))],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = smooth_random_state(&g, 2, &mut rng);
        let y = smooth_random_state(&g, 2, &mut rng);
        let lhs = y.inner(&a.apply(&x).unwrap());
        let rhs = a.adjoint().apply(&y).unwrap().inner(&x);
        assert!((lhs - rhs).norm() < 1e-11);
    }

    #[test]
    fn order_cap_is_enforced() {
        let g = NuclearGrid::new(1, 16, 8.0).unwrap();
        let id = FiberedMultOp::identity(&g, 1);
        let d3 = DiffFiberOp::from_terms(&g, 1, 0.5, vec![(MultiIndex([3, 0]), id.clone())]).unwrap();
        assert!(d3.compose(&d3).is_err());
        assert!(DiffFiberOp::from_terms(&g, 1, 0.5, vec![(MultiIndex([5, 0]), id)]).is_err());
    }
}
