//! Periodic nuclear grids, fibered states and κ-scaled spectral derivatives.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{LabError, Result};

/// Highest derivative order any operator in the crate needs.
pub const MAX_ORDER: usize = 4;

/// Multi-index over at most two nuclear axes. Unused axes stay zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct MultiIndex(pub [u8; 2]);

impl MultiIndex {
    pub const ZERO: MultiIndex = MultiIndex([0, 0]);

    pub fn axis(axis: usize, power: u8) -> Self {
        let mut a = [0u8; 2];
        a[axis] = power;
        MultiIndex(a)
    }

    pub fn order(self) -> usize {
        (self.0[0] + self.0[1]) as usize
    }

    pub fn add(self, other: Self) -> Self {
        MultiIndex([self.0[0] + other.0[0], self.0[1] + other.0[1]])
    }

    /// `self - other`, assuming componentwise `other <= self`.
    pub fn sub(self, other: Self) -> Self {
        MultiIndex([self.0[0] - other.0[0], self.0[1] - other.0[1]])
    }

    /// All γ with γ ≤ α componentwise, together with the product of binomials C(α, γ).
    pub fn lower_sets(self) -> Vec<(MultiIndex, f64)> {
        let mut out = Vec::new();
        for g0 in 0..=self.0[0] {
            for g1 in 0..=self.0[1] {
                let c = binomial(self.0[0], g0) * binomial(self.0[1], g1);
                out.push((MultiIndex([g0, g1]), c));
            }
        }
        out
    }

    /// Every multi-index of exact order `s` over `m` axes.
    pub fn of_order(m: usize, s: usize) -> Vec<MultiIndex> {
        let s = s as u8;
        if m == 1 {
            vec![MultiIndex([s, 0])]
        } else {
            (0..=s).map(|a| MultiIndex([a, s - a])).collect()
        }
    }
}

fn binomial(n: u8, k: u8) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

struct GridInner {
    m: usize,
    n: usize,
    length: f64,
    wavenumbers: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid on `[-L/2, L/2)^m`.
#[derive(Clone)]
pub struct NuclearGrid(Arc<GridInner>);

impl fmt::Debug for NuclearGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NuclearGrid")
            .field("m", &self.0.m)
            .field("n", &self.0.n)
            .field("length", &self.0.length)
            .finish()
    }
}

impl PartialEq for NuclearGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.m == other.0.m && self.0.n == other.0.n && self.0.length == other.0.length)
    }
}

impl NuclearGrid {
    pub fn new(m: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=2).contains(&m) {
            return Err(LabError::Dimension(m));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(LabError::GridSize(n));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(LabError::BoxLength(length));
        }
        let base = 2.0 * std::f64::consts::PI / length;
        let wavenumbers = (0..n)
            .map(|j| {
                let j = j as i64;
                let k = if j < n as i64 / 2 { j } else { j - n as i64 };
                base * k as f64
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        Ok(NuclearGrid(Arc::new(GridInner {
            m,
            n,
            length,
            wavenumbers,
            fft,
            ifft,
        })))
    }

    pub fn m(&self) -> usize {
        self.0.m
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn length(&self) -> f64 {
        self.0.length
    }

    pub fn spacing(&self) -> f64 {
        self.0.length / self.0.n as f64
    }

    /// Number of grid points, `N^m`.
    pub fn points(&self) -> usize {
        self.0.n.pow(self.0.m as u32)
    }

    /// Quadrature weight `h^m`.
    pub fn weight(&self) -> f64 {
        self.spacing().powi(self.0.m as i32)
    }

    /// Angular wavenumbers in FFT order; index `N/2` is the Nyquist mode.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.0.wavenumbers
    }

    pub fn axis_coords(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.0.n)
            .map(|j| -0.5 * self.0.length + j as f64 * h)
            .collect()
    }

    /// Coordinates of point `p`; axis 0 varies slowest.
    pub fn coords(&self, p: usize) -> [f64; 2] {
        let h = self.spacing();
        let x0 = -0.5 * self.0.length;
        match self.0.m {
            1 => [x0 + p as f64 * h, 0.0],
            _ => [
                x0 + (p / self.0.n) as f64 * h,
                x0 + (p % self.0.n) as f64 * h,
            ],
        }
    }

    /// Neighbor of `p` one step forward along `axis`, with wrap-around.
    pub fn neighbor(&self, p: usize, axis: usize) -> usize {
        let n = self.0.n;
        if self.0.m == 1 {
            (p + 1) % n
        } else if axis == 0 {
            (p + n) % (n * n)
        } else {
            (p / n) * n + (p % n + 1) % n
        }
    }

    /// Symbol of `D^a` along one axis: `(κk)^a`, Nyquist zeroed for odd `a`.
    pub fn derivative_symbol(&self, power: u8, kappa: f64) -> Vec<C64> {
        let n = self.0.n;
        self.0
            .wavenumbers
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                if power % 2 == 1 && j == n / 2 {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new((kappa * k).powi(power as i32), 0.0)
                }
            })
            .collect()
    }

    /// Apply per-axis Fourier multipliers to a scalar field of length `N^m`.
    /// `None` leaves that axis untouched.
    pub fn apply_multiplier(&self, data: &mut [C64], symbols: [Option<&[C64]>; 2]) {
        let n = self.0.n;
        debug_assert_eq!(data.len(), self.points());
        if self.0.m == 1 {
            if let Some(sym) = symbols[0] {
                self.filter_contiguous(data, sym);
            }
            return;
        }
        if let Some(sym) = symbols[1] {
            self.filter_contiguous(data, sym);
        }
        if let Some(sym) = symbols[0] {
            let mut t = vec![C64::new(0.0, 0.0); n * n];
            transpose(data, &mut t, n);
            self.filter_contiguous(&mut t, sym);
            transpose(&t, data, n);
        }
    }

    fn filter_contiguous(&self, data: &mut [C64], sym: &[C64]) {
        let n = self.0.n;
        self.0.fft.process(data);
        let scale = 1.0 / n as f64;
        for row in data.chunks_mut(n) {
            for (v, s) in row.iter_mut().zip(sym) {
                *v *= *s * scale;
            }
        }
        self.0.ifft.process(data);
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.0.fft.process(data);
    }

    pub fn inverse_normalized(&self, data: &mut [C64]) {
        self.0.ifft.process(data);
        let s = 1.0 / self.0.n as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    /// Apply `D^α` to a scalar field.
    pub fn derivative_scalar(&self, data: &mut [C64], alpha: MultiIndex, kappa: f64) {
        if alpha == MultiIndex::ZERO {
            return;
        }
        let s0 = (alpha.0[0] > 0).then(|| self.derivative_symbol(alpha.0[0], kappa));
        let s1 = (self.0.m == 2 && alpha.0[1] > 0).then(|| self.derivative_symbol(alpha.0[1], kappa));
        self.apply_multiplier(data, [s0.as_deref(), s1.as_deref()]);
    }

    /// Plain partial derivative `∂_axis f` of a real periodic field.
    pub fn partial_real(&self, data: &[f64], axis: usize) -> Vec<f64> {
        let mut c: Vec<C64> = data.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.derivative_scalar(&mut c, MultiIndex::axis(axis, 1), 1.0);
        // D = -i∂ at unit scale
        c.iter().map(|z| -z.im).collect()
    }
}

fn transpose(src: &[C64], dst: &mut [C64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}

/// A grid-indexed array of fiber vectors, stored point-major: index `p * d + a`.
/// Nuclear scalar functions are fibered states with `d = 1`.
#[derive(Clone, Debug)]
pub struct FiberedState {
    grid: NuclearGrid,
    d: usize,
    data: Vec<C64>,
}

impl FiberedState {
    pub fn new(grid: &NuclearGrid, d: usize, data: Vec<C64>) -> Result<Self> {
        if d == 0 || data.len() != grid.points() * d {
            return Err(LabError::Shape(format!(
                "expected {} entries (d = {d}), got {}",
                grid.points() * d,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LabError::NonFinite("fibered state"));
        }
        Ok(FiberedState {
            grid: grid.clone(),
            d,
            data,
        })
    }

    pub fn zeros(grid: &NuclearGrid, d: usize) -> Self {
        FiberedState {
            grid: grid.clone(),
            d,
            data: vec![C64::new(0.0, 0.0); grid.points() * d],
        }
    }

    pub fn from_fn(grid: &NuclearGrid, d: usize, f: impl Fn([f64; 2], usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(grid.points() * d);
        for p in 0..grid.points() {
            let y = grid.coords(p);
            for a in 0..d {
                data.push(f(y, a));
            }
        }
        FiberedState {
            grid: grid.clone(),
            d,
            data,
        }
    }

    /// Nuclear scalar function from values at grid points.
    pub fn scalar(grid: &NuclearGrid, values: Vec<C64>) -> Result<Self> {
        Self::new(grid, 1, values)
    }

    pub fn grid(&self) -> &NuclearGrid {
        &self.grid
    }

    pub fn fiber_dim(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn fiber(&self, p: usize) -> &[C64] {
        &self.data[p * self.d..(p + 1) * self.d]
    }

    pub fn fiber_mut(&mut self, p: usize) -> &mut [C64] {
        &mut self.data[p * self.d..(p + 1) * self.d]
    }

    pub fn component(&self, a: usize) -> Vec<C64> {
        self.data.iter().skip(a).step_by(self.d).copied().collect()
    }

    pub fn set_component(&mut self, a: usize, values: &[C64]) {
        for (p, v) in values.iter().enumerate() {
            self.data[p * self.d + a] = *v;
        }
    }

    pub fn inner(&self, other: &FiberedState) -> C64 {
        let s: C64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum();
        s * self.grid.weight()
    }

    pub fn norm(&self) -> f64 {
        (self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.weight()).sqrt()
    }

    pub fn scale(&mut self, c: C64) {
        self.data.iter_mut().for_each(|z| *z *= c);
    }

    pub fn scaled(mut self, c: C64) -> Self {
        self.scale(c);
        self
    }

    pub fn axpy(&mut self, c: C64, other: &FiberedState) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn sub(&self, other: &FiberedState) -> FiberedState {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other);
        out
    }

    pub fn add(&self, other: &FiberedState) -> FiberedState {
        let mut out = self.clone();
        out.axpy(C64::new(1.0, 0.0), other);
        out
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.scale(C64::new(1.0 / n, 0.0));
        }
        self
    }

    /// Fraction of the squared norm carried by grid points within one spacing of the box edge.
    pub fn edge_mass(&self) -> f64 {
        let n = self.grid.n();
        let total: f64 = self.data.iter().map(|z| z.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let near = |i: usize| i <= 1 || i >= n - 1;
        let mut edge = 0.0;
        for p in 0..self.grid.points() {
            let on_edge = if self.grid.m() == 1 {
                near(p)
            } else {
                near(p / n) || near(p % n)
            };
            if on_edge {
                edge += self.fiber(p).iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        edge / total
    }
}

/// `D^α ψ`, applied to each fiber component independently.
pub fn apply_d_alpha(psi: &FiberedState, alpha: MultiIndex, kappa: f64) -> Result<FiberedState> {
    if alpha.order() > MAX_ORDER {
        return Err(LabError::DerivativeOrder(alpha.order()));
    }
    let mut out = psi.clone();
    if alpha == MultiIndex::ZERO {
        return Ok(out);
    }
    for a in 0..psi.d {
        let mut comp = psi.component(a);
        psi.grid.derivative_scalar(&mut comp, alpha, kappa);
        out.set_component(a, &comp);
    }
    Ok(out)
}

/// κ-scaled Sobolev norm `(Σ_{|α|=s} ‖D^α ψ‖² + ‖ψ‖²)^{1/2}`; `s = 0` is the L² norm.
pub fn sobolev_norm(psi: &FiberedState, s: usize, kappa: f64) -> Result<f64> {
    if s > MAX_ORDER {
        return Err(LabError::DerivativeOrder(s));
    }
    let base = psi.norm();
    if s == 0 {
        return Ok(base);
    }
    let mut sum = base * base;
    for alpha in MultiIndex::of_order(psi.grid.m(), s) {
        let n = apply_d_alpha(psi, alpha, kappa)?.norm();
        sum += n * n;
    }
    Ok(sum.sqrt())
}

fn check_unit_fibers(psi0: &FiberedState) -> Result<()> {
    for p in 0..psi0.grid.points() {
        let n: f64 = psi0.fiber(p).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-10 {
            return Err(LabError::FiberNorm {
                point: p,
                deviation: (n - 1.0).abs(),
            });
        }
    }
    Ok(())
}

/// `f(y) = ⟨ψ∘(y), Ψ(y)⟩` at every grid point.
pub fn fiber_project(state: &FiberedState, psi0: &FiberedState) -> Result<FiberedState> {
    if state.d != psi0.d || state.grid != psi0.grid {
        return Err(LabError::Shape("state and ground bundle disagree".into()));
    }
    check_unit_fibers(psi0)?;
    let values = (0..state.grid.points())
        .map(|p| {
            psi0.fiber(p)
                .iter()
                .zip(state.fiber(p))
                .map(|(a, b)| a.conj() * b)
                .sum()
        })
        .collect();
    Ok(FiberedState {
        grid: state.grid.clone(),
        d: 1,
        data: values,
    })
}

/// `ψ∘ f`: the nuclear function `f` lifted along the ground bundle.
pub fn embed(psi0: &FiberedState, f: &FiberedState) -> Result<FiberedState> {
    if f.d != 1 || f.grid != psi0.grid {
        return Err(LabError::Shape("embed expects a nuclear scalar function".into()));
    }
    let d = psi0.d;
    let mut out = FiberedState::zeros(&psi0.grid, d);
    for p in 0..psi0.grid.points() {
        let fp = f.data[p];
        for a in 0..d {
            out.data[p * d + a] = psi0.data[p * d + a] * fp;
        }
    }
    Ok(out)
}

/// Random smooth state: Gaussian-filtered random Fourier content on modes below `N/6`,
/// multiplied by a Gaussian envelope of width `L/16` around the box center; unit L² norm.
pub fn smooth_random_state<R: Rng + ?Sized>(grid: &NuclearGrid, d: usize, rng: &mut R) -> FiberedState {
    let n = grid.n();
    let cutoff = (n / 6) as f64;
    let envelope_width = grid.length() / 16.0;
    let mut out = FiberedState::zeros(grid, d);
    for a in 0..d {
        let kmax = (cutoff / 3.0).max(2.0);
        let mut spectrum = vec![C64::new(0.0, 0.0); grid.points()];
        for (idx, s) in spectrum.iter_mut().enumerate() {
            let (j0, j1) = if grid.m() == 1 { (idx, 0) } else { (idx / n, idx % n) };
            let signed = |j: usize| if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
            let r2 = signed(j0).powi(2) + signed(j1).powi(2);
            if r2.sqrt() <= cutoff {
                let amp = (-r2 / (2.0 * kmax * kmax)).exp();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *s = C64::new(re, im) * amp;
            }
        }
        let mut field = spectrum;
        inverse_nd(grid, &mut field);
        for (p, v) in field.iter_mut().enumerate() {
            let y = grid.coords(p);
            let r2 = y[0] * y[0] + if grid.m() == 2 { y[1] * y[1] } else { 0.0 };
            *v *= (-r2 / (2.0 * envelope_width * envelope_width)).exp();
        }
        out.set_component(a, &field);
    }
    out.normalized()
}

fn inverse_nd(grid: &NuclearGrid, data: &mut [C64]) {
    let n = grid.n();
    if grid.m() == 1 {
        grid.inverse_normalized(data);
        return;
    }
    for row in data.chunks_mut(n) {
        grid.inverse_normalized(row);
    }
    let mut t = vec![C64::new(0.0, 0.0); n * n];
    transpose(data, &mut t, n);
    for row in t.chunks_mut(n) {
        grid.inverse_normalized(row);
    }
    transpose(&t, data, n);
}

/// Normalized Gaussian wavepacket `exp(-(y-y₀)²/(2w²) + i p₀·y/κ)` as a nuclear function.
pub fn gaussian_packet(grid: &NuclearGrid, center: f64, width: f64, momentum: f64, kappa: f64) -> FiberedState {
    FiberedState::from_fn(grid, 1, |y, _| {
        let mut r2 = (y[0] - center).powi(2);
        let mut phase = momentum * y[0];
        if grid.m() == 2 {
            r2 += (y[1] - center).powi(2);
            phase += momentum * y[1];
        }
        C64::from_polar((-r2 / (2.0 * width * width)).exp(), phase / kappa)
    })
    .normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_spacing() {
        assert_eq!(NuclearGrid::new(1, 256, 40.0).unwrap().spacing(), 0.15625);
        assert_eq!(NuclearGrid::new(1, 16, 16.0).unwrap().spacing(), 1.0);
        let err = NuclearGrid::new(1, 100, 40.0).unwrap_err();
        assert!(err.to_string().contains("N must be power of two"));
        assert!(NuclearGrid::new(3, 16, 1.0).is_err());
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = NuclearGrid::new(1, 32, 10.0).unwrap();
        let psi = FiberedState::from_fn(&g, 2, |_, a| C64::new(1.0 + a as f64, 0.5));
        let d = apply_d_alpha(&psi, MultiIndex([1, 0]), 0.3).unwrap();
        assert!(d.norm() < 1e-13);
    }

    #[test]
    fn plane_wave_eigenfunction() {
        let g = NuclearGrid::new(1, 64, 10.0).unwrap();
        let kappa = 0.2;
        let k0 = g.wavenumbers()[5];
        let psi = FiberedState::from_fn(&g, 1, |y, _| C64::from_polar(1.0, k0 * y[0]));
        let d = apply_d_alpha(&psi, MultiIndex([1, 0]), kappa).unwrap();
        let expect = psi.clone().scaled(C64::new(kappa * k0, 0.0));
        assert!(d.sub(&expect).norm() < 1e-12);
    }

    #[test]
    fn sobolev_examples() {
        let g = NuclearGrid::new(1, 64, 10.0).unwrap();
        let c = FiberedState::from_fn(&g, 1, |_, _| C64::new(1.0, 0.0)).normalized();
        assert!((sobolev_norm(&c, 2, 0.1).unwrap() - 1.0).abs() < 1e-12);
        let k0 = g.wavenumbers()[3];
        let kappa = 0.3;
        let w = FiberedState::from_fn(&g, 1, |y, _| C64::from_polar(1.0, k0 * y[0])).normalized();
        let s1 = sobolev_norm(&w, 1, kappa).unwrap();
        assert!((s1 - (1.0 + (kappa * k0).powi(2)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_mixed_derivative() {
        let g = NuclearGrid::new(2, 16, 8.0).unwrap();
        let (k0, k1) = (g.wavenumbers()[2], g.wavenumbers()[3]);
        let psi = FiberedState::from_fn(&g, 1, |y, _| C64::from_polar(1.0, k0 * y[0] + k1 * y[1]));
        let kappa = 0.5;
        let d = apply_d_alpha(&psi, MultiIndex([1, 2]), kappa).unwrap();
        let expect = psi.clone().scaled(C64::new(kappa * k0 * (kappa * k1).powi(2), 0.0));
        assert!(d.sub(&expect).norm() < 1e-11);
    }

    #[test]
    fn project_embed_roundtrip() {
        let g = NuclearGrid::new(1, 32, 10.0).unwrap();
        let psi0 = FiberedState::from_fn(&g, 2, |y, a| {
            let th = 0.3 * y[0].sin();
            C64::new(if a == 0 { th.cos() } else { th.sin() }, 0.0)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = smooth_random_state(&g, 1, &mut rng);
        let back = fiber_project(&embed(&psi0, &f).unwrap(), &psi0).unwrap();
        assert!(back.sub(&f).norm() < 1e-13);
        let mut bad = psi0.clone();
        bad.data_mut()[0] *= 1.1;
        assert!(fiber_project(&psi0, &bad).is_err());
    }
}
