//! Non-local effective dynamics: the memory kernel, the Volterra solver, the reconstruction
//! map back to the full space and the expansion of the kernel in powers of κ.

use num_complex::Complex64 as C64;

use crate::error::{LabError, Result};
use crate::linalg::{self, CMat, HermitianEigen, I, ZERO};
use crate::system::{AdiabaticSystem, CouplingChain, ExcitedSpectrum};

/// Minimum number of steps for a non-trivial path.
pub const MIN_STEPS: usize = 8;

/// Nuclear path sampled on `t_n = nΔt`, `n = 0..=M`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGridPath {
    dt: f64,
    values: Vec<Vec<C64>>,
}

impl TimeGridPath {
    /// A path with `M ≥ 8` steps, or the single node `{f₀}` at `τ = 0`.
    pub fn new(dt: f64, values: Vec<Vec<C64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(LabError::Shape("empty path".into()));
        }
        let steps = values.len() - 1;
        if steps != 0 && steps < MIN_STEPS {
            return Err(LabError::Shape(format!("path needs at least {MIN_STEPS} steps, got {steps}")));
        }
        if steps != 0 && !(dt > 0.0) {
            return Err(LabError::Shape(format!("time step must be positive, got {dt}")));
        }
        let n = values[0].len();
        if values.iter().any(|v| v.len() != n) {
            return Err(LabError::Shape("path nodes differ in length".into()));
        }
        Ok(TimeGridPath { dt, values })
    }

    /// Samples `f(t_n)` from a closure.
    pub fn sample(dt: f64, steps: usize, mut f: impl FnMut(f64) -> Result<Vec<C64>>) -> Result<Self> {
        let values = (0..=steps).map(|n| f(n as f64 * dt)).collect::<Result<Vec<_>>>()?;
        Self::new(dt, values)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn final_time(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn at(&self, n: usize) -> &[C64] {
        &self.values[n]
    }

    pub fn last(&self) -> &[C64] {
        self.values.last().expect("non-empty")
    }

    pub fn values(&self) -> &[Vec<C64>] {
        &self.values
    }

    /// The path restricted to `[0, t_n]`.
    pub fn truncated(&self, n: usize) -> TimeGridPath {
        TimeGridPath {
            dt: self.dt,
            values: self.values[..=n].to_vec(),
        }
    }
}

/// Composite trapezoid of `∫₀^{t_n} e^{-iλ(t_n−s)/κ} c(s) ds` per excited mode, for all `n`,
/// by the recursion `S_n = e^{-iλΔt/κ} S_{n−1} + c_n`.
pub fn mode_convolution(spectrum: &ExcitedSpectrum, dt: f64, cs: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let r = spectrum.rank();
    let step = spectrum.phases(dt);
    let mut running = vec![ZERO; r];
    let mut out = Vec::with_capacity(cs.len());
    for (n, c) in cs.iter().enumerate() {
        for k in 0..r {
            running[k] = step[k] * running[k] + c[k];
        }
        if n == 0 {
            out.push(vec![ZERO; r]);
            continue;
        }
        let start = spectrum.phases(n as f64 * dt);
        out.push(
            (0..r)
                .map(|k| dt * (running[k] - 0.5 * start[k] * cs[0][k] - 0.5 * c[k]))
                .collect(),
        );
    }
    out
}

/// `∫₀^{t_n} Ū_{t_n−s} g(s) ds` in the full space for full-space samples `g(t_n) ∈ Ran P̄`.
pub fn excited_convolution(spectrum: &ExcitedSpectrum, dt: f64, gs: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let cs: Vec<Vec<C64>> = gs.iter().map(|g| linalg::adjoint_matvec(&spectrum.vectors, g)).collect();
    mode_convolution(spectrum, dt, &cs)
        .into_iter()
        .map(|a| linalg::matvec(&spectrum.vectors, &a))
        .collect()
}

/// Kernel `K(ℓ) = ⟨ψ∘, PTP̄ Ū_ℓ P̄TP ψ∘ (·)⟩ = G† e^{-iλℓ/κ} G` in factored form.
#[derive(Clone, Debug)]
pub struct MemoryKernelCache {
    pub spectrum: ExcitedSpectrum,
    /// `G = Φ† P̄ H_κ P J`.
    pub source: CMat,
    pub kappa: f64,
}

impl MemoryKernelCache {
    pub fn new(system: &AdiabaticSystem) -> Self {
        MemoryKernelCache {
            spectrum: system.spectrum.clone(),
            source: system.excitation_source(),
            kappa: system.kappa,
        }
    }

    /// Dense kernel matrix at one lag.
    pub fn kernel(&self, lag: f64) -> CMat {
        let ph = self.spectrum.phases(lag);
        let g = &self.source;
        let scaled = CMat::from_fn(g.nrows(), g.ncols(), |i, j| ph[i] * g[(i, j)]);
        g.adjoint() * scaled
    }

    /// Hermitian defect of `K(0)`, relative to its size.
    pub fn lag0_defect(&self) -> f64 {
        let k0 = self.kernel(0.0);
        linalg::hermitian_defect(&k0) / linalg::max_abs(&k0).max(f64::MIN_POSITIVE)
    }

    /// `‖K(0)‖ = ‖G‖²`.
    pub fn lag0_norm(&self) -> f64 {
        let g = &self.source;
        linalg::op_norm(&(g.adjoint() * g))
    }

    fn amplitudes(&self, f: &[C64]) -> Vec<C64> {
        linalg::matvec(&self.source, f)
    }

    fn from_modes(&self, a: &[C64]) -> Vec<C64> {
        linalg::adjoint_matvec(&self.source, a).into_iter().map(|z| -I / self.kappa * z).collect()
    }

    /// `w^κ[f](t_n)` by direct trapezoid over the nodes `0..=n`.
    pub fn memory_w(&self, path: &TimeGridPath, n: usize) -> Vec<C64> {
        let len = path.at(0).len();
        if n == 0 {
            return vec![ZERO; len];
        }
        let dt = path.dt();
        let r = self.spectrum.rank();
        let mut acc = vec![ZERO; r];
        for k in 0..=n {
            let w = if k == 0 || k == n { 0.5 * dt } else { dt };
            let ph = self.spectrum.phases(path.time(n) - path.time(k));
            let a = self.amplitudes(path.at(k));
            for i in 0..r {
                acc[i] += w * ph[i] * a[i];
            }
        }
        self.from_modes(&acc)
    }

    /// `w^κ[f](t_n)` for every node, by the running convolution.
    pub fn memory_w_all(&self, path: &TimeGridPath) -> Vec<Vec<C64>> {
        let cs: Vec<Vec<C64>> = path.values().iter().map(|f| self.amplitudes(f)).collect();
        mode_convolution(&self.spectrum, path.dt(), &cs)
            .iter()
            .map(|a| self.from_modes(a))
            .collect()
    }
}

/// Stability margin required of `Δt·max|spec(h)|/κ`.
pub const STABILITY_LIMIT: f64 = 0.5;

/// Checks the step against the local generator and the kernel before marching.
pub fn check_step(h_local: &HermitianEigen, cache: &MemoryKernelCache, dt: f64) -> Result<()> {
    let kappa = cache.kappa;
    let top = h_local.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let measure = dt * top / kappa;
    if measure >= STABILITY_LIMIT {
        return Err(LabError::StepTooLarge {
            dt,
            suggested: 0.9 * STABILITY_LIMIT * kappa / top,
            reason: format!("Δt·max|spec|/κ = {measure:.3} exceeds {STABILITY_LIMIT}"),
        });
    }
    let contraction = (dt / (2.0 * kappa)).powi(2) * cache.lag0_norm();
    if contraction >= 1.0 {
        return Err(LabError::StepTooLarge {
            dt,
            suggested: 0.9 * dt / contraction.sqrt(),
            reason: format!("fixed-point correction factor {contraction:.3} is not contractive"),
        });
    }
    Ok(())
}

/// Solves `iκ∂_t f = h f + w^κ[f]` on `[0, τ]`. The local part is propagated exactly; the
/// memory term enters through the trapezoid rule on each step and in the kernel integral,
/// with an extrapolated predictor and one correction.
pub fn solve_nonlocal(f0: &[C64], tau: f64, dt: f64, h_local: &CMat, cache: &MemoryKernelCache) -> Result<TimeGridPath> {
    if tau == 0.0 {
        return TimeGridPath::new(dt, vec![f0.to_vec()]);
    }
    let steps = (tau / dt).round() as usize;
    if ((steps as f64) * dt - tau).abs() > 1e-12 * tau {
        return Err(LabError::Shape(format!("τ = {tau} is not a multiple of Δt = {dt}")));
    }
    let eig = linalg::hermitian_eigen(h_local)?;
    check_step(&eig, cache, dt)?;
    let kappa = cache.kappa;
    let a = I * dt / (2.0 * kappa);
    let spectrum = &cache.spectrum;
    let r = spectrum.rank();
    let step_phase = spectrum.phases(dt);
    let c0 = cache.amplitudes(f0);
    let mut running = c0.clone();
    let mut w_prev = vec![ZERO; f0.len()];
    let mut values = vec![f0.to_vec()];
    let local = |v: &[C64]| eig.apply_fn(v, |mu| C64::new(0.0, -mu * dt / kappa).exp());
    let memory_at = |running_next: &[C64], c_next: &[C64], n: usize| -> Vec<C64> {
        let start = spectrum.phases(n as f64 * dt);
        let acc: Vec<C64> = (0..r)
            .map(|k| dt * (running_next[k] - 0.5 * start[k] * c0[k] - 0.5 * c_next[k]))
            .collect();
        cache.from_modes(&acc)
    };
    for n in 0..steps {
        let fn_ = &values[n];
        let shifted: Vec<C64> = fn_.iter().zip(&w_prev).map(|(f, w)| f - a * w).collect();
        let base = local(&shifted);
        let mut guess: Vec<C64> = if n == 0 {
            fn_.clone()
        } else {
            fn_.iter().zip(&values[n - 1]).map(|(x, y)| 2.0 * x - y).collect()
        };
        for _ in 0..2 {
            let c = cache.amplitudes(&guess);
            let run: Vec<C64> = (0..r).map(|k| step_phase[k] * running[k] + c[k]).collect();
            let w_next = memory_at(&run, &c, n + 1);
            guess = base.iter().zip(&w_next).map(|(b, w)| b - a * w).collect();
        }
        if guess.iter().any(|z| !z.is_finite()) {
            return Err(LabError::StepTooLarge {
                dt,
                suggested: dt / 2.0,
                reason: "fixed-point correction diverged".into(),
            });
        }
        let c = cache.amplitudes(&guess);
        for k in 0..r {
            running[k] = step_phase[k] * running[k] + c[k];
        }
        w_prev = memory_at(&running, &c, n + 1);
        values.push(guess);
    }
    TimeGridPath::new(dt, values)
}

/// `(Q_P f)(t_n) = ψ∘ f(t_n) − (i/κ) ∫₀^{t_n} Ū_{t_n−s} P̄ H_κ P ψ∘ f(s) ds` at the last node,
/// by the trapezoid rule.
pub fn reconstruct_qp(path: &TimeGridPath, system: &AdiabaticSystem, cache: &MemoryKernelCache) -> Vec<C64> {
    let lifted = system.molecule.lift(path.last());
    if path.steps() == 0 {
        return lifted;
    }
    let cs: Vec<Vec<C64>> = path.values().iter().map(|f| cache.amplitudes(f)).collect();
    let modes = mode_convolution(&cache.spectrum, path.dt(), &cs);
    let tail = linalg::matvec(&cache.spectrum.vectors, modes.last().expect("non-empty"));
    lifted
        .iter()
        .zip(&tail)
        .map(|(l, t)| l - I / cache.kappa * t)
        .collect()
}

/// Second-order expansion of the memory term at the last node of a path.
#[derive(Clone, Debug)]
pub struct ExpansionTerms {
    /// `w₁ f(t)`.
    pub w1f: Vec<C64>,
    /// `w̃₁(t) f₀`.
    pub w1_tilde: Vec<C64>,
    /// `w₂^κ[f](t)`, present for order 2.
    pub w2: Option<Vec<C64>>,
}

impl ExpansionTerms {
    /// `(−iκ)²(w₁f − w̃₁f₀) [+ (−iκ)³ w₂]`.
    pub fn combined(&self, kappa: f64) -> Vec<C64> {
        let k2 = (-I * kappa).powi(2);
        let k3 = (-I * kappa).powi(3);
        let mut out: Vec<C64> = self.w1f.iter().zip(&self.w1_tilde).map(|(a, b)| k2 * (a - b)).collect();
        if let Some(w2) = &self.w2 {
            for (o, w) in out.iter_mut().zip(w2) {
                *o += k3 * w;
            }
        }
        out
    }
}

/// Dense operators entering the expansion.
#[derive(Clone, Debug)]
pub struct ExpansionOperators {
    pub chain: CouplingChain,
    pub x_adj: CMat,
    pub rbar: CMat,
    pub j: CMat,
    pub spectrum: ExcitedSpectrum,
}

impl ExpansionOperators {
    pub fn new(system: &AdiabaticSystem) -> Self {
        let chain = system.coupling_chain();
        ExpansionOperators {
            x_adj: chain.x.adjoint().to_owned(),
            chain,
            rbar: system.rbar.clone(),
            j: system.j.clone(),
            spectrum: system.spectrum.clone(),
        }
    }

    fn nuclear(&self, full: &[C64]) -> Vec<C64> {
        linalg::adjoint_matvec(&self.j, &linalg::matvec(&self.x_adj, full))
    }

    fn conv_last(&self, dt: f64, gs: &[Vec<C64>]) -> Vec<C64> {
        excited_convolution(&self.spectrum, dt, gs).pop().expect("non-empty")
    }

    fn conv_all(&self, dt: f64, gs: &[Vec<C64>]) -> Vec<Vec<C64>> {
        excited_convolution(&self.spectrum, dt, gs)
    }

    /// Terms at the last node of `path`, with `f₀ = path.at(0)`.
    pub fn terms(&self, path: &TimeGridPath, order: usize) -> Result<ExpansionTerms> {
        if !(1..=2).contains(&order) {
            return Err(LabError::RecursionOrder(order));
        }
        let x = &self.chain.x;
        let x2 = &self.chain.x2;
        let x3 = &self.chain.x3;
        let t = path.final_time();
        let f0 = path.at(0);
        let ft = path.last();
        let xjf = |m: &CMat, f: &[C64]| linalg::matvec(m, &linalg::matvec(&self.j, f));
        let w1f = self.nuclear(&linalg::matvec(&self.rbar, &xjf(x, ft)));
        let rxj0 = linalg::matvec(&self.rbar, &xjf(x, f0));
        let w1_tilde = self.nuclear(&self.spectrum.evolve(&rxj0, t));
        if order == 1 {
            return Ok(ExpansionTerms { w1f, w1_tilde, w2: None });
        }
        let dt = path.dt();
        let rxx = &self.rbar * x * &self.x_adj;
        let rx2x = &self.rbar * x2 * &self.x_adj;
        let apply = |m: &CMat, v: &[C64]| linalg::matvec(m, v);
        let w2f = self.nuclear(&apply(&self.rbar, &xjf(x2, ft)));
        let rx2j0 = apply(&self.rbar, &xjf(x2, f0));
        let inner: Vec<Vec<C64>> = (0..=path.steps())
            .map(|n| apply(&rxx, &self.spectrum.evolve(&rxj0, path.time(n))))
            .collect();
        let w2_tilde = linalg::sub(
            &self.nuclear(&self.spectrum.evolve(&rx2j0, t)),
            &self.nuclear(&self.conv_last(dt, &inner)),
        );
        let second = &(x3 + &rxx * &self.rbar * x);
        let t2_src: Vec<Vec<C64>> = path.values().iter().map(|f| xjf(second, f)).collect();
        let t2 = self.nuclear(&self.conv_last(dt, &t2_src));
        let a: Vec<Vec<C64>> = self.conv_all(dt, &path.values().iter().map(|f| xjf(x, f)).collect::<Vec<_>>());
        let t3 = self.nuclear(&self.conv_last(dt, &a.iter().map(|v| apply(&rx2x, v)).collect::<Vec<_>>()));
        let b = self.conv_all(dt, &path.values().iter().map(|f| xjf(x2, f)).collect::<Vec<_>>());
        let t4 = self.nuclear(&self.conv_last(dt, &b.iter().map(|v| apply(&rxx, v)).collect::<Vec<_>>()));
        let c = self.conv_all(dt, &a.iter().map(|v| apply(&rxx, v)).collect::<Vec<_>>());
        let t5 = self.nuclear(&self.conv_last(dt, &c.iter().map(|v| apply(&rxx, v)).collect::<Vec<_>>()));
        let w2: Vec<C64> = (0..w2f.len())
            .map(|i| -(w2f[i] - w2_tilde[i]) + t2[i] - t3[i] - t4[i] + t5[i])
            .collect();
        Ok(ExpansionTerms {
            w1f,
            w1_tilde,
            w2: Some(w2),
        })
    }
}

/// Memory term of the exact projected dynamics, `w^κ(t) = J† P T P̄ Ψ(t)`.
pub fn exact_memory(system: &AdiabaticSystem, psi_t: &[C64]) -> Vec<C64> {
    let op = system.j.adjoint() * &system.p * &system.t * &system.pbar;
    linalg::matvec(&op, psi_t)
}
