//! Exact checks of the exponent-derivative representation and both non-abelian integration
//! by parts formulas on random matrices, and of the interaction representation of
//! `(U_t − U_t^P)P`.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg::{self, CMat, HermitianEigen, I, ZERO};
use crate::system::AdiabaticSystem;

/// Largest accepted condition number of `A − B`.
pub const MAX_CONDITION: f64 = 1e2;
/// Resampling attempts before giving up on a well-conditioned pair.
const MAX_DRAWS: usize = 64;

/// Pair of anti-self-adjoint matrices with invertible difference.
#[derive(Clone, Debug)]
pub struct MatrixPair {
    pub n: usize,
    pub a: CMat,
    pub b: CMat,
    pub seed: u64,
    /// `R = (A − B)⁻¹`.
    pub r: CMat,
    /// `S = R[A, B]R`.
    pub s: CMat,
    eig_a: HermitianEigen,
    eig_b: HermitianEigen,
}

impl MatrixPair {
    pub fn new(a: CMat, b: CMat, seed: u64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || b.ncols() != n {
            return Err(LabError::MatrixPair("matrices must be square and of equal size".into()));
        }
        for (name, m) in [("A", &a), ("B", &b)] {
            let defect = linalg::max_abs(&(m + m.adjoint()));
            if defect > 1e-13 * linalg::max_abs(m).max(1.0) {
                return Err(LabError::MatrixPair(format!("{name} is not anti-self-adjoint (defect {defect:.2e})")));
            }
        }
        let diff = &a - &b;
        let cond = linalg::condition_number(&diff);
        if !(cond < MAX_CONDITION) {
            return Err(LabError::MatrixPair(format!("A − B has condition number {cond:.3e}")));
        }
        let r = linalg::inverse(&diff);
        let s = &r * (&a * &b - &b * &a) * &r;
        // `A = iH` with `H = −iA` Hermitian.
        let herm = |m: &CMat| {
            let h = faer::Scale(-I) * m;
            faer::Scale(C64::new(0.5, 0.0)) * (&h + h.adjoint())
        };
        let eig_a = linalg::hermitian_eigen(&herm(&a))?;
        let eig_b = linalg::hermitian_eigen(&herm(&b))?;
        Ok(MatrixPair {
            n,
            a,
            b,
            seed,
            r,
            s,
            eig_a,
            eig_b,
        })
    }

    /// `A = iH_A`, `B = iH_B` with Gaussian Hermitian `H`, redrawn until `A − B` is well conditioned.
    pub fn random(n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..MAX_DRAWS {
            let a = faer::Scale(I) * linalg::random_hermitian(n, &mut rng);
            let b = faer::Scale(I) * linalg::random_hermitian(n, &mut rng);
            match Self::new(a, b, seed) {
                Ok(pair) => return Ok(pair),
                Err(LabError::MatrixPair(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(LabError::MatrixPair(format!("no well-conditioned pair after {MAX_DRAWS} draws")))
    }

    /// Simultaneously diagonal pair `A = i diag(α)`, `B = i diag(β)`.
    pub fn commuting(alpha: &[f64], beta: &[f64], seed: u64) -> Result<Self> {
        let n = alpha.len();
        let diag = |v: &[f64]| CMat::from_fn(n, n, |i, j| if i == j { C64::new(0.0, v[i]) } else { ZERO });
        Self::new(diag(alpha), diag(beta), seed)
    }

    /// `e^{At}`.
    pub fn exp_a(&self, t: f64) -> CMat {
        linalg::hermitian_exp(&self.eig_a, I * t)
    }

    /// `e^{Bt}`.
    pub fn exp_b(&self, t: f64) -> CMat {
        linalg::hermitian_exp(&self.eig_b, I * t)
    }
}

/// Polynomial matrix path `Σ_k s^k C_k` with its exact derivative.
#[derive(Clone, Debug)]
pub struct MatrixPath {
    pub coeffs: Vec<CMat>,
}

impl MatrixPath {
    pub fn zero(n: usize) -> Self {
        MatrixPath {
            coeffs: vec![CMat::zeros(n, n)],
        }
    }

    pub fn constant(m: CMat) -> Self {
        MatrixPath { coeffs: vec![m] }
    }

    /// Gaussian complex coefficients up to `degree`.
    pub fn random<R: Rng + ?Sized>(n: usize, degree: usize, rng: &mut R) -> Self {
        let coeffs = (0..=degree)
            .map(|_| CMat::from_fn(n, n, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))))
            .collect();
        MatrixPath { coeffs }
    }

    pub fn at(&self, s: f64) -> CMat {
        let n = self.coeffs[0].nrows();
        let mut out = CMat::zeros(n, n);
        for c in self.coeffs.iter().rev() {
            out = faer::Scale(C64::new(s, 0.0)) * &out + c;
        }
        out
    }

    pub fn derivative_at(&self, s: f64) -> CMat {
        let n = self.coeffs[0].nrows();
        let mut out = CMat::zeros(n, n);
        for (k, c) in self.coeffs.iter().enumerate().skip(1).rev() {
            out = faer::Scale(C64::new(s, 0.0)) * &out + faer::Scale(C64::new(k as f64, 0.0)) * c;
        }
        out
    }
}

fn diff_norm(a: &CMat, b: &CMat) -> f64 {
    linalg::max_abs(&(a - b))
}

/// `max_t ‖e^{At} − [∂_t(e^{At} R e^{−Bt})] e^{Bt} + e^{At} S‖` with the derivative expanded
/// as `e^{At}(AR − RB)e^{−Bt}`.
pub fn verify_expderrep(pair: &MatrixPair, times: &[f64]) -> f64 {
    let core = &pair.a * &pair.r - &pair.r * &pair.b;
    times
        .iter()
        .map(|&t| {
            let ea = pair.exp_a(t);
            let rhs = &ea * &core * pair.exp_b(-t) * pair.exp_b(t) - &ea * &pair.s;
            diff_norm(&ea, &rhs)
        })
        .fold(0.0, f64::max)
}

fn gauss(t: f64, n_quad: usize) -> Result<crate::quadrature::GaussLegendre> {
    if n_quad < 64 {
        return Err(LabError::Config(format!("n_quad must be at least 64, got {n_quad}")));
    }
    Ok(crate::quadrature::GaussLegendre::new(n_quad).on_interval(0.0, t))
}

fn integrate(rule: &crate::quadrature::GaussLegendre, n: usize, f: impl Fn(f64) -> CMat) -> CMat {
    let mut acc = CMat::zeros(n, n);
    for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += faer::Scale(C64::new(w, 0.0)) * f(s);
    }
    acc
}

/// Right-handed formula:
/// `∫₀ᵗ G e^{As} F = [G e^{As} R F]₀ᵗ − ∫ G e^{As} S F − ∫ (G′ e^{As} R F + G e^{As} R (B F + F′))`.
pub fn verify_naip(pair: &MatrixPair, f: &MatrixPath, g: &MatrixPath, t: f64, n_quad: usize) -> Result<f64> {
    let rule = gauss(t, n_quad)?;
    let n = pair.n;
    let r = &pair.r;
    let lhs = integrate(&rule, n, |s| g.at(s) * pair.exp_a(s) * f.at(s));
    let boundary = g.at(t) * pair.exp_a(t) * r * f.at(t) - g.at(0.0) * r * f.at(0.0);
    let commutator = integrate(&rule, n, |s| g.at(s) * pair.exp_a(s) * &pair.s * f.at(s));
    let rest = integrate(&rule, n, |s| {
        let ea = pair.exp_a(s);
        g.derivative_at(s) * &ea * r * f.at(s) + g.at(s) * &ea * r * (&pair.b * f.at(s) + f.derivative_at(s))
    });
    Ok(diff_norm(&lhs, &(boundary - commutator - rest)))
}

/// Left-handed formula with `R̃ = (B − A)⁻¹`:
/// `∫₀ᵗ F e^{−As} G = [F R̃ e^{−As} G]₀ᵗ + ∫ F S e^{−As} G − ∫ ((F′ − F B) R̃ e^{−As} G + F R̃ e^{−As} G′)`.
pub fn verify_left_naip(pair: &MatrixPair, f: &MatrixPath, g: &MatrixPath, t: f64, n_quad: usize) -> Result<f64> {
    let rule = gauss(t, n_quad)?;
    let n = pair.n;
    let rt = faer::Scale(C64::new(-1.0, 0.0)) * &pair.r;
    let lhs = integrate(&rule, n, |s| f.at(s) * pair.exp_a(-s) * g.at(s));
    let boundary = f.at(t) * &rt * pair.exp_a(-t) * g.at(t) - left_boundary_at_zero(pair, f, g);
    let commutator = integrate(&rule, n, |s| f.at(s) * &pair.s * pair.exp_a(-s) * g.at(s));
    let rest = integrate(&rule, n, |s| {
        let ea = pair.exp_a(-s);
        (f.derivative_at(s) - f.at(s) * &pair.b) * &rt * &ea * g.at(s) + f.at(s) * &rt * &ea * g.derivative_at(s)
    });
    Ok(diff_norm(&lhs, &(boundary + commutator - rest)))
}

/// Boundary bracket of the left-handed formula at `s = 0`: `F₀ R̃ G₀`.
pub fn left_boundary_at_zero(pair: &MatrixPair, f: &MatrixPath, g: &MatrixPath) -> CMat {
    let rt = faer::Scale(C64::new(-1.0, 0.0)) * &pair.r;
    f.at(0.0) * rt * g.at(0.0)
}

/// Worst residuals over a batch of seeded instances.
#[derive(Clone, Debug, Serialize)]
pub struct NaipSuite {
    pub instances: usize,
    pub n: usize,
    pub expderrep_max: f64,
    pub naip_max: f64,
    pub left_naip_max: f64,
}

/// Runs all three checks on `instances` random pairs of size `n`, with linear paths.
pub fn naip_suite(n: usize, instances: usize, times: &[f64], n_quad: usize, seed: u64) -> Result<NaipSuite> {
    use rayon::prelude::*;
    let rows = (0..instances as u64)
        .into_par_iter()
        .map(|k| -> Result<[f64; 3]> {
            let inst_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k);
            let pair = MatrixPair::random(n, inst_seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(inst_seed ^ 0xA5A5_A5A5);
            let f = MatrixPath::random(n, 1, &mut rng);
            let g = MatrixPath::random(n, 1, &mut rng);
            let mut right: f64 = 0.0;
            let mut left: f64 = 0.0;
            for &t in times {
                right = right.max(verify_naip(&pair, &f, &g, t, n_quad)?);
                left = left.max(verify_left_naip(&pair, &f, &g, t, n_quad)?);
            }
            Ok([verify_expderrep(&pair, times), right, left])
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |i: usize| rows.iter().map(|r| r[i]).fold(0.0, f64::max);
    Ok(NaipSuite {
        instances,
        n,
        expderrep_max: col(0),
        naip_max: col(1),
        left_naip_max: col(2),
    })
}

/// Outcome of the `X_t` representation check.
#[derive(Clone, Debug, Serialize)]
pub struct XtCheck {
    pub kappa: f64,
    pub t: f64,
    pub dt: f64,
    /// `max ‖(U_t − U_t^P)Ψ − U_t X_t Ψ‖ / ‖Ψ‖` over the probe states.
    pub residual: f64,
    /// `max ‖X_t Ψ‖ / ‖Ψ‖`, from the exact left side.
    pub xt_norm: f64,
}

/// Checks `(U_t − U_t^P)P = U_t X_t` with `X_t = −∫₀ᵗ Y_s Ū_{−s} X U_s^P ds` and
/// `Y_s = 1 − ∫₀ˢ U_{−a} X* Ū_a da`, the outer and inner integrals by the trapezoid rule.
/// `probes` are nuclear vectors; each is lifted to `Ran P`.
pub fn verify_xt_representation(system: &AdiabaticSystem, probes: &[Vec<C64>], t: f64, dt: f64) -> Result<XtCheck> {
    let steps = (t / dt).round() as usize;
    if steps > 0 && ((steps as f64) * dt - t).abs() > 1e-12 * t {
        return Err(LabError::Shape(format!("t = {t} is not a multiple of Δt = {dt}")));
    }
    let kappa = system.kappa;
    let chain = system.coupling_chain();
    let x = &chain.x;
    let spec = &system.spectrum;
    let phi = &spec.vectors;
    let hp = linalg::hermitian_eigen(&system.projected_generator())?;
    let full = system
        .full
        .eigen()
        .ok_or_else(|| LabError::Config("X_t check needs the exact backend".into()))?;
    let xs_phi = x.adjoint() * phi;
    let up = |g: &[C64], s: f64| hp.apply_fn(g, |mu| C64::new(0.0, -mu * s / kappa).exp());
    let mut residual: f64 = 0.0;
    let mut xt_norm: f64 = 0.0;
    for g in probes {
        let psi0 = system.molecule.lift(g);
        let scale = linalg::vec_norm(&psi0);
        let lhs = linalg::sub(&system.full.evolve(&psi0, t)?, &system.molecule.lift(&up(g, t)));
        xt_norm = xt_norm.max(linalg::vec_norm(&lhs) / scale);
        if steps == 0 {
            residual = residual.max(linalg::vec_norm(&lhs) / scale);
            continue;
        }
        // `q_s = e^{iλs/κ} Φ† X U_s^P Ψ`.
        let q: Vec<Vec<C64>> = (0..=steps)
            .map(|n| {
                let s = n as f64 * dt;
                let c = linalg::adjoint_matvec(phi, &linalg::matvec(x, &system.molecule.lift(&up(g, s))));
                spec.phases(-s).iter().zip(c).map(|(p, c)| p * c).collect()
            })
            .collect();
        let r = spec.rank();
        let trap = |n: usize| if n == 0 || n == steps { 0.5 * dt } else { dt };
        let mut first = vec![ZERO; r];
        for (n, qn) in q.iter().enumerate() {
            linalg::axpy(&mut first, C64::new(trap(n), 0.0), qn);
        }
        let mut xt: Vec<C64> = linalg::matvec(phi, &first).into_iter().map(|z| -z).collect();
        // Tail integrals `∫_a^t q_s ds` on the grid, accumulated from the end.
        let mut tail = vec![ZERO; r];
        let mut second = vec![ZERO; xt.len()];
        for n in (0..=steps).rev() {
            if n < steps {
                for k in 0..r {
                    tail[k] += 0.5 * dt * (q[n][k] + q[n + 1][k]);
                }
            }
            let a = n as f64 * dt;
            let inner: Vec<C64> = spec.phases(a).iter().zip(&tail).map(|(p, v)| p * v).collect();
            let v = linalg::matvec(&xs_phi, &inner);
            let back = full.apply_fn(&v, |mu| C64::new(0.0, mu * a / kappa).exp());
            linalg::axpy(&mut second, C64::new(trap(n), 0.0), &back);
        }
        linalg::axpy(&mut xt, C64::new(1.0, 0.0), &second);
        let rhs = system.full.evolve(&xt, t)?;
        residual = residual.max(linalg::vec_norm(&linalg::sub(&lhs, &rhs)) / scale);
    }
    Ok(XtCheck {
        kappa,
        t,
        dt,
        residual,
        xt_norm,
    })
}
