//! Error functionals for the κ sweeps. Every reference quantity is computed without time
//! stepping: dense spectral propagation for both sides and closed-form Duhamel integrals.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::Result;
use crate::grid::{gaussian_packet, sobolev_norm};
use crate::linalg::{self, CMat, I};
use crate::memory::exact_memory;
use crate::propagation::{Backend, Propagator};
use crate::system::{AdiabaticSystem, Molecule};

use super::config::SimConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorPair {
    pub l2: f64,
    /// Same difference in `H²_κ`.
    pub h2k: f64,
}

/// One model at one κ together with the initial nuclear state.
pub struct Workbench {
    pub system: AdiabaticSystem,
    pub f0: Vec<C64>,
}

impl Workbench {
    pub fn new(molecule: &Molecule, config: &SimConfig, kappa: f64) -> Result<Self> {
        let mut system = AdiabaticSystem::new(molecule, kappa, config.backend)?;
        system.full = system.full.clone().with_krylov(config.krylov());
        let p = &config.initial;
        let f0 = gaussian_packet(&molecule.grid, p.center, p.width, p.momentum, kappa).into_data();
        Ok(Workbench { system, f0 })
    }

    pub fn kappa(&self) -> f64 {
        self.system.kappa
    }

    fn full_pair(&self, diff: Vec<C64>) -> Result<ErrorPair> {
        let state = self.system.molecule.full_state(diff)?;
        Ok(ErrorPair {
            l2: state.norm(),
            h2k: sobolev_norm(&state, 2, self.kappa())?,
        })
    }

    fn nuclear_pair(&self, diff: Vec<C64>) -> Result<ErrorPair> {
        let state = self.system.molecule.nuclear_state(diff)?;
        Ok(ErrorPair {
            l2: state.norm(),
            h2k: sobolev_norm(&state, 2, self.kappa())?,
        })
    }

    /// `U_t ψ∘f₀` by the configured backend.
    pub fn exact_state(&self, t: f64) -> Result<Vec<C64>> {
        self.system.full.evolve(&self.system.molecule.lift(&self.f0), t)
    }

    /// `‖U_t(ψ∘f₀) − ψ∘ e^{−ih_eff t/κ} f₀‖`.
    pub fn first_order_error(&self, t: f64) -> Result<ErrorPair> {
        let heff = self.system.effective(1)?.dense_matrix();
        let g = Propagator::new(&heff, self.kappa(), Backend::ExactDiag)?.evolve(&self.f0, t)?;
        let diff = linalg::sub(&self.exact_state(t)?, &self.system.molecule.lift(&g));
        self.full_pair(diff)
    }

    /// `‖U_τ(ψ∘f₀) − Q_P f̃(τ)‖` with `f̃` evolved by the second-order effective Hamiltonian,
    /// or by the first-order one when `keep_w1` is false.
    pub fn second_order_error(&self, tau: f64, keep_w1: bool) -> Result<ErrorPair> {
        let heff = self.system.effective(2)?;
        let heff = if keep_w1 { heff } else { heff.without_memory_correction() };
        let q = reconstruct_closed_form(&self.system, &heff.dense_matrix(), &self.f0, tau)?;
        let diff = linalg::sub(&self.exact_state(tau)?, &q);
        self.full_pair(diff)
    }

    /// `‖w^κ[f](t) − (−iκ)²(w₁f(t) − w̃₁(t)f₀)‖` with `f = ⟨ψ∘, U_t ψ∘f₀⟩`.
    pub fn remainder_order_error(&self, t: f64) -> Result<ErrorPair> {
        let sys = &self.system;
        let psi_t = self.exact_state(t)?;
        let f_t = sys.molecule.project(&psi_t);
        let exact = exact_memory(sys, &psi_t);
        let coupling = |f: &[C64]| -> Vec<C64> {
            let xj = x_apply(sys, &sys.molecule.lift(f));
            linalg::matvec(&sys.rbar, &xj)
        };
        let w1f = x_adj_project(sys, &coupling(&f_t));
        let w1_tilde = x_adj_project(sys, &sys.spectrum.evolve(&coupling(&self.f0), t));
        let k2 = (-I * self.kappa()).powi(2);
        let diff: Vec<C64> = exact
            .iter()
            .zip(w1f.iter().zip(&w1_tilde))
            .map(|(w, (a, b))| w - k2 * (a - b))
            .collect();
        self.nuclear_pair(diff)
    }
}

/// `X v = (i/κ) P̄ T P v`.
fn x_apply(sys: &AdiabaticSystem, v: &[C64]) -> Vec<C64> {
    let tp = linalg::matvec(&sys.t, &linalg::matvec(&sys.p, v));
    linalg::matvec(&sys.pbar, &tp)
        .into_iter()
        .map(|z| I / sys.kappa * z)
        .collect()
}

/// `J† X* v = −(i/κ) J† T P̄ v`, using `J†P = J†`.
fn x_adj_project(sys: &AdiabaticSystem, v: &[C64]) -> Vec<C64> {
    let tv = linalg::matvec(&sys.t, &linalg::matvec(&sys.pbar, v));
    linalg::adjoint_matvec(&sys.j, &tv)
        .into_iter()
        .map(|z| -I / sys.kappa * z)
        .collect()
}

/// `sin(z)/z`.
fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 - z * z / 6.0
    } else {
        z.sin() / z
    }
}

/// `Q_P f̃(τ) = ψ∘f̃(τ) − (i/κ) ∫₀^τ Ū_{τ−s} P̄ H_κ P ψ∘ f̃(s) ds` for `f̃(s) = e^{−ihs/κ} f₀`.
/// In the eigenbases `h = W diag(μ) W†` and `H̄ = Φ diag(λ) Φ†` the integral is
/// `τ e^{−iλ_aτ/κ} e^{ix/2} sinc(x/2)` per pair, `x = (λ_a − μ_b)τ/κ`.
pub fn reconstruct_closed_form(system: &AdiabaticSystem, h: &CMat, f0: &[C64], tau: f64) -> Result<Vec<C64>> {
    let kappa = system.kappa;
    let eig = linalg::hermitian_eigen(h)?;
    let w = &eig.vectors;
    let c = linalg::adjoint_matvec(w, f0);
    let src = system.excitation_source() * w;
    let spec = &system.spectrum;
    let mut amp = vec![C64::new(0.0, 0.0); spec.rank()];
    for (a, slot) in amp.iter_mut().enumerate() {
        let la = spec.values[a];
        let lead = C64::new(0.0, -la * tau / kappa).exp() * tau;
        for (b, cb) in c.iter().enumerate() {
            let x = (la - eig.values[b]) * tau / kappa;
            let kernel = lead * C64::new(0.0, 0.5 * x).exp() * sinc(0.5 * x);
            *slot += src[(a, b)] * kernel * cb;
        }
    }
    let evolved: Vec<C64> = c
        .iter()
        .zip(&eig.values)
        .map(|(cb, mu)| cb * C64::new(0.0, -mu * tau / kappa).exp())
        .collect();
    let lifted = system.molecule.lift(&linalg::matvec(w, &evolved));
    let tail = linalg::matvec(&spec.vectors, &amp);
    Ok(lifted.iter().zip(&tail).map(|(l, t)| l - I / kappa * t).collect())
}

fn bench(config: &SimConfig, kappa: f64) -> Result<Workbench> {
    let molecule = Molecule::new(&config.model, &config.grid.build()?)?;
    Workbench::new(&molecule, config, kappa)
}

/// First-order error at `t_final` on the configured grid.
pub fn first_order_error(config: &SimConfig, kappa: f64) -> Result<ErrorPair> {
    bench(config, kappa)?.first_order_error(config.t_final)
}

/// Second-order error at `τ` on the configured grid.
pub fn second_order_error(config: &SimConfig, kappa: f64) -> Result<ErrorPair> {
    bench(config, kappa)?.second_order_error(config.tau, true)
}

/// Memory-expansion remainder at `t_final` on the configured grid.
pub fn remainder_order_error(config: &SimConfig, kappa: f64) -> Result<ErrorPair> {
    bench(config, kappa)?.remainder_order_error(config.t_final)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: &str) -> SimConfig {
        SimConfig::from_toml_str(&format!("model.kind = \"{kind}\"\ngrid.N = 64\n")).unwrap()
    }

    #[test]
    fn zero_time_errors_vanish() {
        let cfg = small("avoided_crossing");
        let wb = bench(&cfg, 0.1).unwrap();
        assert!(wb.first_order_error(0.0).unwrap().l2 < 1e-14);
        assert!(wb.second_order_error(0.0, true).unwrap().l2 < 1e-14);
        assert!(wb.remainder_order_error(0.0).unwrap().l2 < 1e-14);
    }

    #[test]
    fn decoupled_errors_are_rounding() {
        let cfg = small("decoupled");
        let wb = bench(&cfg, 0.1).unwrap();
        assert!(first_order_error(&cfg, 0.1).unwrap().l2 < 1e-10);
        assert!(wb.second_order_error(1.0, true).unwrap().l2 < 1e-10);
        assert!(wb.remainder_order_error(1.0).unwrap().h2k < 1e-10);
    }

    #[test]
    fn sinc_is_continuous() {
        assert_eq!(sinc(0.0), 1.0);
        assert!((sinc(0.99e-4) - sinc(1.01e-4)).abs() < 1e-9);
    }
}
