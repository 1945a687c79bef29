//! Unitary propagators `e^{-iGt/κ}` for dense Hermitian generators, optionally restricted
//! to a subspace given by orthonormal columns.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{sobolev_norm, FiberedState};
use crate::linalg::{self, CMat, HermitianEigen, ZERO};

/// Hermiticity tolerance on generators, relative to the largest entry.
const HERMITIAN_TOL: f64 = 1e-11;
/// Allowed distance of an input state from the subspace, relative to its norm.
const SUBSPACE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    ExactDiag,
    Krylov,
}

/// Lanczos settings for the Krylov backend.
#[derive(Clone, Copy, Debug)]
pub struct KrylovSettings {
    pub max_dim: usize,
    /// Local error target per unit state norm.
    pub tol: f64,
}

impl Default for KrylovSettings {
    fn default() -> Self {
        KrylovSettings { max_dim: 40, tol: 1e-12 }
    }
}

#[derive(Clone, Debug)]
pub struct Propagator {
    /// Generator in the subspace coordinates when a basis is present.
    generator: CMat,
    kappa: f64,
    backend: Backend,
    eigen: Option<HermitianEigen>,
    basis: Option<CMat>,
    krylov: KrylovSettings,
}

fn check_hermitian(g: &CMat, context: &str) -> Result<()> {
    let defect = linalg::hermitian_defect(g);
    if defect > HERMITIAN_TOL * linalg::max_abs(g).max(1.0) {
        return Err(LabError::NotHermitian {
            defect,
            context: context.into(),
        });
    }
    Ok(())
}

impl Propagator {
    pub fn new(generator: &CMat, kappa: f64, backend: Backend) -> Result<Self> {
        check_hermitian(generator, "propagator generator")?;
        Self::build(generator.clone(), kappa, backend, None)
    }

    /// Propagator for `G` restricted to the span of the orthonormal columns of `basis`.
    /// The span must be invariant under `G`.
    pub fn on_subspace(generator: &CMat, basis: &CMat, kappa: f64, backend: Backend) -> Result<Self> {
        check_hermitian(generator, "propagator generator")?;
        if basis.nrows() != generator.nrows() {
            return Err(LabError::Shape("subspace basis does not match generator".into()));
        }
        let gb = generator * basis;
        let reduced = basis.adjoint() * &gb;
        let leak = linalg::max_abs(&(&gb - basis * &reduced));
        if leak > HERMITIAN_TOL * linalg::max_abs(generator).max(1.0) {
            return Err(LabError::NotHermitian {
                defect: leak,
                context: "generator does not preserve the subspace".into(),
            });
        }
        let reduced = faer::Scale(C64::new(0.5, 0.0)) * (&reduced + reduced.adjoint());
        Self::build(reduced, kappa, backend, Some(basis.clone()))
    }

    fn build(generator: CMat, kappa: f64, backend: Backend, basis: Option<CMat>) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(LabError::Config(format!("kappa must be positive, got {kappa}")));
        }
        let eigen = match backend {
            Backend::ExactDiag => Some(linalg::hermitian_eigen(&generator)?),
            Backend::Krylov => None,
        };
        Ok(Propagator {
            generator,
            kappa,
            backend,
            eigen,
            basis,
            krylov: KrylovSettings::default(),
        })
    }

    pub fn with_krylov(mut self, settings: KrylovSettings) -> Self {
        self.krylov = settings;
        self
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn dim(&self) -> usize {
        self.basis.as_ref().map_or(self.generator.nrows(), |b| b.nrows())
    }

    /// Generator in subspace coordinates.
    pub fn generator(&self) -> &CMat {
        &self.generator
    }

    pub fn basis(&self) -> Option<&CMat> {
        self.basis.as_ref()
    }

    /// Cached eigendecomposition (exact backend only).
    pub fn eigen(&self) -> Option<&HermitianEigen> {
        self.eigen.as_ref()
    }

    fn to_coords(&self, psi: &[C64]) -> Result<Vec<C64>> {
        if psi.len() != self.dim() {
            return Err(LabError::Shape(format!("state length {} vs {}", psi.len(), self.dim())));
        }
        match &self.basis {
            None => Ok(psi.to_vec()),
            Some(b) => {
                let c = linalg::adjoint_matvec(b, psi);
                let back = linalg::matvec(b, &c);
                let n = linalg::vec_norm(psi);
                let residual = linalg::vec_norm(&linalg::sub(psi, &back));
                if residual > SUBSPACE_TOL * n.max(f64::MIN_POSITIVE) && residual > 0.0 {
                    return Err(LabError::OutsideSubspace(residual / n.max(f64::MIN_POSITIVE)));
                }
                Ok(c)
            }
        }
    }

    fn from_coords(&self, c: Vec<C64>) -> Vec<C64> {
        match &self.basis {
            None => c,
            Some(b) => linalg::matvec(b, &c),
        }
    }

    /// `e^{-iGt/κ} ψ`.
    pub fn evolve(&self, psi: &[C64], t: f64) -> Result<Vec<C64>> {
        let c = self.to_coords(psi)?;
        let out = self.evolve_coords(&c, t)?;
        Ok(self.from_coords(out))
    }

    /// Evolution in subspace coordinates, no membership check.
    pub fn evolve_coords(&self, c: &[C64], t: f64) -> Result<Vec<C64>> {
        if t == 0.0 {
            return Ok(c.to_vec());
        }
        let phase = C64::new(0.0, -t / self.kappa);
        match &self.eigen {
            Some(e) => Ok(e.apply_fn(c, |l| (phase * l).exp())),
            None => self.krylov_evolve(c, t),
        }
    }

    pub fn evolve_state(&self, psi: &FiberedState, t: f64) -> Result<FiberedState> {
        let out = self.evolve(psi.data(), t)?;
        FiberedState::new(psi.grid(), psi.fiber_dim(), out)
    }

    /// `⟨ψ, Gψ⟩` in the full space.
    pub fn energy(&self, psi: &[C64]) -> Result<f64> {
        let c = self.to_coords(psi)?;
        Ok(linalg::dot(&c, &linalg::matvec(&self.generator, &c)).re)
    }

    fn krylov_evolve(&self, c: &[C64], t: f64) -> Result<Vec<C64>> {
        let mut state = c.to_vec();
        let mut remaining = t;
        let mut step = t;
        while remaining.abs() > 0.0 {
            step = if step.abs() > remaining.abs() { remaining } else { step };
            let (next, accepted) = self.lanczos_step(&state, step)?;
            if accepted {
                state = next;
                remaining -= step;
            } else {
                step *= 0.5;
                if step.abs() < 1e-14 * t.abs() {
                    return Err(LabError::StepTooLarge {
                        dt: step,
                        suggested: step * 0.5,
                        reason: "Krylov error estimate does not converge".into(),
                    });
                }
            }
        }
        Ok(state)
    }

    /// One Lanczos step with full reorthogonalization; returns the result and whether the
    /// a posteriori error estimate met the tolerance.
    fn lanczos_step(&self, c: &[C64], dt: f64) -> Result<(Vec<C64>, bool)> {
        let n = c.len();
        let beta0 = linalg::vec_norm(c);
        if beta0 == 0.0 {
            return Ok((c.to_vec(), true));
        }
        let m_max = self.krylov.max_dim.min(n);
        let mut basis: Vec<Vec<C64>> = vec![c.iter().map(|z| z / beta0).collect()];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut breakdown = false;
        for j in 0..m_max {
            let mut w = linalg::matvec(&self.generator, &basis[j]);
            let a = linalg::dot(&basis[j], &w).re;
            alpha.push(a);
            for _ in 0..2 {
                for v in &basis {
                    let proj = linalg::dot(v, &w);
                    linalg::axpy(&mut w, -proj, v);
                }
            }
            let b = linalg::vec_norm(&w);
            beta.push(b);
            if b < 1e-13 * (a.abs() + 1.0) {
                breakdown = true;
                break;
            }
            if j + 1 < m_max {
                basis.push(w.iter().map(|z| z / b).collect());
            }
        }
        let m = alpha.len();
        let tri = CMat::from_fn(m, m, |i, j| {
            if i == j {
                C64::new(alpha[i], 0.0)
            } else if i + 1 == j {
                C64::new(beta[i], 0.0)
            } else if j + 1 == i {
                C64::new(beta[j], 0.0)
            } else {
                ZERO
            }
        });
        let eig = linalg::hermitian_eigen(&tri)?;
        let mut e1 = vec![ZERO; m];
        e1[0] = C64::new(beta0, 0.0);
        let phase = C64::new(0.0, -dt / self.kappa);
        let coeffs = eig.apply_fn(&e1, |l| (phase * l).exp());
        let estimate = if breakdown { 0.0 } else { beta[m - 1] * coeffs[m - 1].norm() };
        if estimate > self.krylov.tol * beta0 {
            return Ok((Vec::new(), false));
        }
        let mut out = vec![ZERO; n];
        for (v, k) in basis.iter().zip(&coeffs) {
            linalg::axpy(&mut out, *k, v);
        }
        Ok((out, true))
    }
}

/// Growth of `‖U_tψ‖_{H^s_κ} / ‖ψ‖_{H^s_κ}` over a list of times.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthTable {
    pub s: usize,
    pub times: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Least-squares slope of `log ratio` against `log⟨t⟩`.
    pub poly_exponent: f64,
    /// Smallest `C` with `ratio ≤ C⟨t⟩^s` at every sample.
    pub poly_constant: f64,
    /// Smallest `C ≥ 1` with `ratio ≤ C e^{Ct}` at every sample.
    pub exp_constant: f64,
}

fn japanese(t: f64) -> f64 {
    (1.0 + t * t).sqrt()
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn exp_constant(times: &[f64], ratios: &[f64]) -> f64 {
    let mut c: f64 = 1.0;
    for (&t, &r) in times.iter().zip(ratios) {
        if r <= c * (c * t).exp() {
            continue;
        }
        let (mut lo, mut hi) = (c, c.max(1.0));
        while hi * (hi * t).exp() < r {
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid * (mid * t).exp() < r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        c = hi;
    }
    c
}

pub fn sobolev_growth_probe(prop: &Propagator, psi: &FiberedState, s: usize, times: &[f64]) -> Result<GrowthTable> {
    if s > 3 {
        return Err(LabError::DerivativeOrder(s));
    }
    let kappa = prop.kappa();
    let base = sobolev_norm(psi, s, kappa)?;
    let mut ratios = Vec::with_capacity(times.len());
    for &t in times {
        let evolved = prop.evolve_state(psi, t)?;
        ratios.push(sobolev_norm(&evolved, s, kappa)? / base);
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&ratios)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, r)| (japanese(*t).ln(), r.ln()))
        .unzip();
    let poly_exponent = if lx.len() >= 2 { ls_slope(&lx, &ly) } else { 0.0 };
    let poly_constant = times
        .iter()
        .zip(&ratios)
        .map(|(t, r)| r / japanese(*t).powi(s as i32))
        .fold(0.0, f64::max);
    Ok(GrowthTable {
        s,
        times: times.to_vec(),
        exp_constant: exp_constant(times, &ratios),
        ratios,
        poly_exponent,
        poly_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, random_hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
        use rand_distr::{Distribution, StandardNormal};
        (0..n)
            .map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
            .collect()
    }

    #[test]
    fn zero_and_scalar_generators() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_vec(8, &mut rng);
        let zero = Propagator::new(&CMat::zeros(8, 8), 0.5, Backend::ExactDiag).unwrap();
        assert!(linalg::vec_norm(&linalg::sub(&zero.evolve(&x, 3.0).unwrap(), &x)) < 1e-14);
        let e0 = -1.3;
        let g = faer::Scale(C64::new(e0, 0.0)) * identity(8);
        for backend in [Backend::ExactDiag, Backend::Krylov] {
            let p = Propagator::new(&g, 0.5, backend).unwrap();
            let y = p.evolve(&x, 2.0).unwrap();
            let phase = C64::new(0.0, -e0 * 2.0 / 0.5).exp();
            let expect: Vec<C64> = x.iter().map(|z| z * phase).collect();
            assert!(linalg::vec_norm(&linalg::sub(&y, &expect)) < 1e-12);
        }
    }

    #[test]
    fn krylov_agrees_with_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_hermitian(64, &mut rng);
        let x = random_vec(64, &mut rng);
        let exact = Propagator::new(&h, 1.0, Backend::ExactDiag).unwrap().evolve(&x, 1.0).unwrap();
        let kry = Propagator::new(&h, 1.0, Backend::Krylov).unwrap().evolve(&x, 1.0).unwrap();
        assert!(linalg::vec_norm(&linalg::sub(&exact, &kry)) < 1e-9);
    }

    #[test]
    fn group_law_and_reversal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_hermitian(32, &mut rng);
        let x = random_vec(32, &mut rng);
        let p = Propagator::new(&h, 0.3, Backend::ExactDiag).unwrap();
        let two = p.evolve(&p.evolve(&x, 0.4).unwrap(), 0.7).unwrap();
        let one = p.evolve(&x, 1.1).unwrap();
        assert!(linalg::vec_norm(&linalg::sub(&one, &two)) < 1e-9);
        let back = p.evolve(&one, -1.1).unwrap();
        assert!(linalg::vec_norm(&linalg::sub(&back, &x)) < 1e-10 * linalg::vec_norm(&x));
    }

    #[test]
    fn non_hermitian_generator_rejected() {
        let mut g = CMat::zeros(3, 3);
        g[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(Propagator::new(&g, 1.0, Backend::ExactDiag), Err(LabError::NotHermitian { .. })));
    }

    #[test]
    fn subspace_membership_enforced() {
        let mut g = CMat::zeros(4, 4);
        g[(2, 2)] = C64::new(1.0, 0.0);
        g[(3, 3)] = C64::new(2.0, 0.0);
        let basis = CMat::from_fn(4, 2, |i, j| if i == j + 2 { C64::new(1.0, 0.0) } else { ZERO });
        let p = Propagator::on_subspace(&g, &basis, 1.0, Backend::ExactDiag).unwrap();
        let inside = vec![ZERO, ZERO, C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        assert!(p.evolve(&inside, 1.0).is_ok());
        let outside = vec![C64::new(1.0, 0.0), ZERO, ZERO, ZERO];
        assert!(matches!(p.evolve(&outside, 1.0), Err(LabError::OutsideSubspace(_))));
    }

    #[test]
    fn exp_constant_bounds_samples() {
        let times = [0.0, 1.0, 2.0, 4.0];
        let ratios = [1.0, 2.0, 3.0, 200.0];
        let c = exp_constant(&times, &ratios);
        for (t, r) in times.iter().zip(&ratios) {
            assert!(c * (c * t).exp() >= r * (1.0 - 1e-12));
        }
        assert!((c * (c * 4.0f64).exp() - 200.0).abs() < 1e-6);
    }
}
