//! Dense realization of one model at one κ: full Hamiltonian, projections, coupling chain
//! and the propagators built from them.

use num_complex::Complex64 as C64;

use crate::bundle::{diagonalize_fibers, EigenBundle};
use crate::error::{LabError, Result};
use crate::fibered::FiberedMultOp;
use crate::grid::{FiberedState, NuclearGrid};
use crate::linalg::{self, CMat, I};
use crate::models::{build_model, verify_assumptions, AssumptionCertificate, ModelSpec};
use crate::operators::{assemble_diff, assemble_mult, build_heff, kinetic_t, DiffFiberOp, EffectiveHamiltonian, DENSE_CAP};
use crate::propagation::{Backend, Propagator};

/// κ-independent part: the fibered Hamiltonian and its ground bundle.
#[derive(Clone, Debug)]
pub struct Molecule {
    pub spec: ModelSpec,
    pub grid: NuclearGrid,
    pub h: FiberedMultOp,
    pub bundle: EigenBundle,
}

impl Molecule {
    pub fn new(spec: &ModelSpec, grid: &NuclearGrid) -> Result<Self> {
        spec.validate()?;
        let h = build_model(spec, grid)?;
        let bundle = diagonalize_fibers(&h)?;
        if bundle.delta < spec.delta_floor {
            return Err(LabError::GapTooSmall {
                measured: bundle.delta,
                required: spec.delta_floor,
            });
        }
        Ok(Molecule {
            spec: spec.clone(),
            grid: grid.clone(),
            h,
            bundle,
        })
    }

    pub fn certificate(&self) -> Result<AssumptionCertificate> {
        verify_assumptions(&self.h, crate::grid::MAX_ORDER, self.spec.delta_floor)
    }

    pub fn fiber_dim(&self) -> usize {
        self.bundle.d
    }

    /// `ψ∘ f` for a nuclear vector.
    pub fn lift(&self, f: &[C64]) -> Vec<C64> {
        let d = self.bundle.d;
        let mut out = vec![C64::new(0.0, 0.0); f.len() * d];
        for (p, fp) in f.iter().enumerate() {
            for a in 0..d {
                out[p * d + a] = self.bundle.psi0.fiber(p)[a] * fp;
            }
        }
        out
    }

    /// `⟨ψ∘, Ψ⟩_fiber` at every point.
    pub fn project(&self, psi: &[C64]) -> Vec<C64> {
        let d = self.bundle.d;
        (0..self.grid.points())
            .map(|p| {
                self.bundle
                    .psi0
                    .fiber(p)
                    .iter()
                    .zip(&psi[p * d..(p + 1) * d])
                    .map(|(a, b)| a.conj() * b)
                    .sum()
            })
            .collect()
    }

    pub fn nuclear_state(&self, f: Vec<C64>) -> Result<FiberedState> {
        FiberedState::new(&self.grid, 1, f)
    }

    pub fn full_state(&self, psi: Vec<C64>) -> Result<FiberedState> {
        FiberedState::new(&self.grid, self.bundle.d, psi)
    }
}

/// Eigenpairs of `H̄ = P̄H_κP̄` on `Ran P̄`, with eigenvectors expressed in the full space.
#[derive(Clone, Debug)]
pub struct ExcitedSpectrum {
    pub kappa: f64,
    pub values: Vec<f64>,
    /// Columns `Φ = B V̄`.
    pub vectors: CMat,
}

impl ExcitedSpectrum {
    fn from_propagator(prop: &Propagator) -> Result<Self> {
        let eig = prop
            .eigen()
            .ok_or_else(|| LabError::Config("excited spectrum needs the exact backend".into()))?;
        let basis = prop.basis().expect("subspace propagator");
        Ok(ExcitedSpectrum {
            kappa: prop.kappa(),
            values: eig.values.clone(),
            vectors: basis * &eig.vectors,
        })
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// `e^{-iλt/κ}` per mode.
    pub fn phases(&self, t: f64) -> Vec<C64> {
        self.values
            .iter()
            .map(|l| C64::new(0.0, -l * t / self.kappa).exp())
            .collect()
    }

    /// `Ū_t v` for `v ∈ Ran P̄`.
    pub fn evolve(&self, v: &[C64], t: f64) -> Vec<C64> {
        let mut c = linalg::adjoint_matvec(&self.vectors, v);
        for (x, ph) in c.iter_mut().zip(self.phases(t)) {
            *x *= ph;
        }
        linalg::matvec(&self.vectors, &c)
    }
}

/// `X = X₁`, `X₂`, `X₃` as dense matrices on the full space.
#[derive(Clone, Debug)]
pub struct CouplingChain {
    pub x: CMat,
    pub x2: CMat,
    pub x3: CMat,
}

#[derive(Clone, Debug)]
pub struct AdiabaticSystem {
    pub kappa: f64,
    pub molecule: Molecule,
    /// `H_κ = T + H_bo`.
    pub h: CMat,
    pub t: CMat,
    pub p: CMat,
    pub pbar: CMat,
    pub rbar: CMat,
    pub energy: CMat,
    /// Embedding `J`.
    pub j: CMat,
    /// `U_t`.
    pub full: Propagator,
    /// `Ū_t` on `Ran P̄`.
    pub excited: Propagator,
    pub spectrum: ExcitedSpectrum,
}

impl AdiabaticSystem {
    pub fn new(molecule: &Molecule, kappa: f64, backend: Backend) -> Result<Self> {
        let grid = &molecule.grid;
        let b = &molecule.bundle;
        let d = b.d;
        if grid.points() * d > DENSE_CAP {
            return Err(LabError::DenseCap {
                dim: grid.points() * d,
                cap: DENSE_CAP,
            });
        }
        let t = assemble_diff(&kinetic_t(grid, d, kappa), DENSE_CAP)?.matrix;
        let hbo = assemble_mult(&molecule.h, DENSE_CAP)?.matrix;
        let h = symmetrize(&(&t + &hbo));
        let p = assemble_mult(&b.p, DENSE_CAP)?.matrix;
        let pbar = assemble_mult(&b.pbar, DENSE_CAP)?.matrix;
        let rbar = assemble_mult(&b.rbar, DENSE_CAP)?.matrix;
        let energy = assemble_mult(&b.energy_op(), DENSE_CAP)?.matrix;
        let j = b.embedding();
        let full = Propagator::new(&h, kappa, backend)?;
        let hbar = symmetrize(&(&pbar * &h * &pbar));
        let excited = Propagator::on_subspace(&hbar, &b.excited_basis(), kappa, Backend::ExactDiag)?;
        let spectrum = ExcitedSpectrum::from_propagator(&excited)?;
        Ok(AdiabaticSystem {
            kappa,
            molecule: molecule.clone(),
            h,
            t,
            p,
            pbar,
            rbar,
            energy,
            j,
            full,
            excited,
            spectrum,
        })
    }

    pub fn grid(&self) -> &NuclearGrid {
        &self.molecule.grid
    }

    /// `X = (i/κ) P̄ T P` and the recursion `X_j = (i/κ)S X_{j-1} + (i/κ)R̄(K P̄ X_{j-1} − X_{j-1} P K)P`.
    pub fn coupling_chain(&self) -> CouplingChain {
        let c = I / self.kappa;
        let x = faer::Scale(c) * (&self.pbar * &self.t * &self.p);
        let k = &self.t + &self.energy;
        let gap = &self.h - &self.t - &self.energy;
        let s = &self.rbar * (&gap * &self.t - &self.t * &gap) * &self.rbar;
        let next = |prev: &CMat| -> CMat {
            let bracket = &k * &self.pbar * prev - prev * &self.p * &k;
            faer::Scale(c) * (&s * prev + &self.rbar * bracket * &self.p)
        };
        let x2 = next(&x);
        let x3 = next(&x2);
        CouplingChain { x, x2, x3 }
    }

    /// `h_P = J† H_κ J`, the generator of `U_t^P` on `Ran P` in nuclear coordinates.
    pub fn projected_generator(&self) -> CMat {
        symmetrize(&(self.j.adjoint() * &self.h * &self.j))
    }

    /// `G = Φ† P̄ H_κ P J`, mapping nuclear vectors to excited mode amplitudes.
    pub fn excitation_source(&self) -> CMat {
        self.spectrum.vectors.adjoint() * &self.pbar * &self.h * &self.p * &self.j
    }

    pub fn effective(&self, order: usize) -> Result<EffectiveHamiltonian> {
        build_heff(&self.molecule.bundle, self.kappa, order)
    }

    /// Structured `X` for callers that need the normal-ordered form.
    pub fn structured_x(&self) -> Result<DiffFiberOp> {
        Ok(crate::operators::AdiabaticOps::new(&self.molecule.bundle, self.kappa)?.x)
    }
}

fn symmetrize(m: &CMat) -> CMat {
    faer::Scale(C64::new(0.5, 0.0)) * (m + m.adjoint())
}
