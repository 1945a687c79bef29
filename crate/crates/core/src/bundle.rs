//! Ground-state bundle of a fibered Hamiltonian: energies, gauge-fixed ground vectors,
//! projections, reduced resolvent and the Born–Huang potential.

use num_complex::Complex64 as C64;

use crate::error::{LabError, Result};
use crate::fibered::FiberedMultOp;
use crate::grid::{FiberedState, NuclearGrid};
use crate::linalg::{self, CMat, ONE};

/// Tolerance on the connection `⟨ψ∘, ∇ψ∘⟩` before the gauge is declared broken.
pub const CONNECTION_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct EigenBundle {
    pub grid: NuclearGrid,
    pub d: usize,
    /// Ground energy `E(y)`.
    pub energy: Vec<f64>,
    /// Real, unit, gauge-continuous ground vectors.
    pub psi0: FiberedState,
    pub p: FiberedMultOp,
    pub pbar: FiberedMultOp,
    pub rbar: FiberedMultOp,
    /// Excited eigenvalues per point, `d - 1` each.
    pub excited_values: Vec<f64>,
    /// Excited eigenvectors per point, `d - 1` columns of length `d`, point-major.
    pub excited_vectors: Vec<C64>,
    /// Measured gap `min_y (E_1 - E_0)`.
    pub delta: f64,
    /// Born–Huang potential.
    pub v: Vec<f64>,
    /// `max_y |⟨ψ∘, ∇ψ∘⟩|`.
    pub connection: f64,
}

impl EigenBundle {
    /// Orthonormal basis of `Ran P̄` as a dense `(N^m d) × (N^m (d-1))` matrix.
    pub fn excited_basis(&self) -> CMat {
        let d = self.d;
        let r = d - 1;
        let pts = self.grid.points();
        let mut b = CMat::zeros(pts * d, pts * r);
        for p in 0..pts {
            for j in 0..r {
                for a in 0..d {
                    b[(p * d + a, p * r + j)] = self.excited_vectors[(p * r + j) * d + a];
                }
            }
        }
        b
    }

    /// Embedding `J: f ↦ ψ∘ f` as a dense `(N^m d) × N^m` matrix.
    pub fn embedding(&self) -> CMat {
        let d = self.d;
        let pts = self.grid.points();
        let mut j = CMat::zeros(pts * d, pts);
        for p in 0..pts {
            for a in 0..d {
                j[(p * d + a, p)] = self.psi0.fiber(p)[a];
            }
        }
        j
    }

    pub fn energy_op(&self) -> FiberedMultOp {
        FiberedMultOp::scalar(&self.grid, self.d, &self.energy)
    }
}

/// Diagonalize every fiber, fix a continuous real gauge, and assemble the bundle.
pub fn diagonalize_fibers(h: &FiberedMultOp) -> Result<EigenBundle> {
    let grid = h.grid().clone();
    let d = h.fiber_dim();
    if d < 2 {
        return Err(LabError::Shape("fiber dimension must be at least 2".into()));
    }
    if let Some((point, defect)) = h.real_symmetric_violation(1e-13) {
        return Err(LabError::NotRealSymmetric { point, defect });
    }
    let pts = grid.points();
    let mut energy = Vec::with_capacity(pts);
    let mut ground = vec![0.0f64; pts * d];
    let mut excited_values = Vec::with_capacity(pts * (d - 1));
    let mut excited_vectors = Vec::with_capacity(pts * (d - 1) * d);
    let mut rbar = FiberedMultOp::zeros(&grid, d);
    let mut delta = f64::INFINITY;
    for p in 0..pts {
        let e = linalg::hermitian_eigen(&h.block_matrix(p))?;
        let split = e.values[1] - e.values[0];
        if split < 1e-10 {
            return Err(LabError::Degenerate { point: p, splitting: split });
        }
        delta = delta.min(split);
        energy.push(e.values[0]);
        for a in 0..d {
            ground[p * d + a] = e.vectors[(a, 0)].re;
        }
        let rb = rbar.block_mut(p);
        for j in 1..d {
            let gap = e.values[j] - e.values[0];
            excited_values.push(e.values[j]);
            for a in 0..d {
                excited_vectors.push(e.vectors[(a, j)]);
            }
            for a in 0..d {
                for b in 0..d {
                    rb[a * d + b] += e.vectors[(a, j)] * e.vectors[(b, j)].conj() / gap;
                }
            }
        }
    }
    fix_gauge(&grid, d, &mut ground)?;
    let psi0 = FiberedState::new(&grid, d, ground.iter().map(|&x| C64::new(x, 0.0)).collect())?;
    let mut p_op = FiberedMultOp::zeros(&grid, d);
    let mut pbar = FiberedMultOp::identity(&grid, d);
    for p in 0..pts {
        let g = &ground[p * d..(p + 1) * d];
        let pb = p_op.block_mut(p);
        for a in 0..d {
            for b in 0..d {
                pb[a * d + b] = C64::new(g[a] * g[b], 0.0);
            }
        }
        let qb = pbar.block_mut(p);
        for a in 0..d {
            for b in 0..d {
                qb[a * d + b] -= C64::new(g[a] * g[b], 0.0);
            }
        }
    }
    let mut bundle = EigenBundle {
        grid,
        d,
        energy,
        psi0,
        p: p_op,
        pbar,
        rbar,
        excited_values,
        excited_vectors,
        delta,
        v: Vec::new(),
        connection: 0.0,
    };
    let (v, connection) = born_huang(&bundle)?;
    bundle.v = v;
    bundle.connection = connection;
    Ok(bundle)
}

fn overlap(ground: &[f64], d: usize, p: usize, q: usize) -> f64 {
    (0..d).map(|a| ground[p * d + a] * ground[q * d + a]).sum()
}

fn flip(ground: &mut [f64], d: usize, p: usize) {
    ground[p * d..(p + 1) * d].iter_mut().for_each(|x| *x = -*x);
}

/// Sign propagation along axis 0 (then axis 1 for each row), followed by a check that every
/// neighbor overlap, including wrap-around, is positive.
fn fix_gauge(grid: &NuclearGrid, d: usize, ground: &mut [f64]) -> Result<()> {
    let n = grid.n();
    let first = &ground[0..d];
    let lead = first
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, &x)| if x.abs() > acc.1.abs() { (i, x) } else { acc });
    if lead.1 < 0.0 {
        flip(ground, d, 0);
    }
    if grid.m() == 1 {
        for p in 1..n {
            if overlap(ground, d, p - 1, p) < 0.0 {
                flip(ground, d, p);
            }
        }
    } else {
        for i in 1..n {
            if overlap(ground, d, (i - 1) * n, i * n) < 0.0 {
                flip(ground, d, i * n);
            }
        }
        for i in 0..n {
            for j in 1..n {
                let p = i * n + j;
                if overlap(ground, d, p - 1, p) < 0.0 {
                    flip(ground, d, p);
                }
            }
        }
    }
    for p in 0..grid.points() {
        for axis in 0..grid.m() {
            let q = grid.neighbor(p, axis);
            let o = overlap(ground, d, p, q);
            if o <= 0.0 {
                return Err(LabError::Gauge(format!(
                    "overlap {o:.3e} between points {p} and {q} along axis {axis}; no continuous real gauge"
                )));
            }
        }
    }
    Ok(())
}

/// Born–Huang potential `v = Σ_j ‖∂_j ψ∘‖²` and the largest connection `|⟨ψ∘, ∂_j ψ∘⟩|`.
pub fn born_huang(bundle: &EigenBundle) -> Result<(Vec<f64>, f64)> {
    let grid = &bundle.grid;
    let d = bundle.d;
    let pts = grid.points();
    let mut v = vec![0.0; pts];
    let mut connection: f64 = 0.0;
    for axis in 0..grid.m() {
        let mut conn = vec![0.0; pts];
        for a in 0..d {
            let comp: Vec<f64> = bundle.psi0.component(a).iter().map(|z| z.re).collect();
            let deriv = grid.partial_real(&comp, axis);
            for p in 0..pts {
                v[p] += deriv[p] * deriv[p];
                conn[p] += comp[p] * deriv[p];
            }
        }
        connection = conn.iter().fold(connection, |m, x| m.max(x.abs()));
    }
    if connection > CONNECTION_TOL {
        return Err(LabError::Gauge(format!(
            "connection ⟨ψ∘, ∇ψ∘⟩ reaches {connection:.3e}"
        )));
    }
    Ok((v, connection))
}

/// Max over grid points of `‖P_riesz(y) - P(y)‖` with `P_riesz` from an `n_contour`-point
/// trapezoid rule on a circle of the given radius around `E(y)`.
pub fn riesz_projection_check(h: &FiberedMultOp, bundle: &EigenBundle, n_contour: usize, radius: f64) -> Result<f64> {
    if n_contour == 0 {
        return Err(LabError::Contour("need at least one contour point".into()));
    }
    if !(radius > 0.0) || radius >= 0.5 * bundle.delta {
        return Err(LabError::Contour(format!(
            "radius {radius} must lie in (0, δ/2) with δ = {}",
            bundle.delta
        )));
    }
    let d = bundle.d;
    let mut worst: f64 = 0.0;
    for p in 0..bundle.grid.points() {
        let hp = h.block_matrix(p);
        let spectrum = linalg::hermitian_eigen(&hp)?.values;
        let center = bundle.energy[p];
        if spectrum.iter().any(|l| ((l - center).abs() - radius).abs() < 1e-12) {
            return Err(LabError::Contour(format!("contour meets the spectrum at point {p}")));
        }
        let mut acc = CMat::zeros(d, d);
        for k in 0..n_contour {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n_contour as f64;
            let w = C64::from_polar(radius, theta);
            let z = w + center;
            let shifted = CMat::from_fn(d, d, |i, j| if i == j { z * ONE - hp[(i, j)] } else { -hp[(i, j)] });
            let res = linalg::inverse(&shifted);
            acc += faer::Scale(w / n_contour as f64) * res;
        }
        let diff = &acc - bundle.p.block_matrix(p);
        worst = worst.max(linalg::op_norm(&diff));
    }
    Ok(worst)
}

/// Per-block algebraic residuals of the bundle.
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct BundleAlgebra {
    pub idempotency: f64,
    pub self_adjointness: f64,
    pub orthogonality: f64,
    pub commutator: f64,
    pub resolvent_inverse: f64,
    pub resolvent_annihilates_p: f64,
    /// `max_y ‖R̄(y)‖ · δ`; at most 1 when the resolvent bound holds.
    pub resolvent_bound_ratio: f64,
    pub fiber_norm: f64,
    pub min_neighbor_overlap: f64,
}

impl BundleAlgebra {
    pub fn max_residual(&self) -> f64 {
        [
            self.idempotency,
            self.self_adjointness,
            self.orthogonality,
            self.commutator,
            self.resolvent_inverse,
            self.resolvent_annihilates_p,
            self.fiber_norm,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn bundle_algebra(h: &FiberedMultOp, bundle: &EigenBundle) -> BundleAlgebra {
    let d = bundle.d;
    let mut out = BundleAlgebra {
        min_neighbor_overlap: f64::INFINITY,
        ..Default::default()
    };
    let eye = linalg::identity(d);
    for p in 0..bundle.grid.points() {
        let hp = h.block_matrix(p);
        let pp = bundle.p.block_matrix(p);
        let qp = bundle.pbar.block_matrix(p);
        let rp = bundle.rbar.block_matrix(p);
        let e = bundle.energy[p];
        let shifted = &hp - faer::Scale(C64::new(e, 0.0)) * &eye;
        let upd = |slot: &mut f64, m: CMat| *slot = slot.max(linalg::max_abs(&m));
        upd(&mut out.idempotency, &pp * &pp - &pp);
        upd(&mut out.self_adjointness, &pp - pp.adjoint());
        upd(&mut out.orthogonality, &pp * &qp);
        upd(&mut out.commutator, &hp * &pp - &pp * &hp);
        upd(&mut out.resolvent_inverse, &rp * &shifted * &qp - &qp);
        upd(&mut out.resolvent_annihilates_p, &rp * &pp);
        out.resolvent_bound_ratio = out.resolvent_bound_ratio.max(linalg::op_norm(&rp) * bundle.delta);
        let n: f64 = bundle.psi0.fiber(p).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        out.fiber_norm = out.fiber_norm.max((n - 1.0).abs());
        for axis in 0..bundle.grid.m() {
            let q = bundle.grid.neighbor(p, axis);
            let o: f64 = bundle
                .psi0
                .fiber(p)
                .iter()
                .zip(bundle.psi0.fiber(q))
                .map(|(a, b)| (a.conj() * b).re)
                .sum();
            out.min_neighbor_overlap = out.min_neighbor_overlap.min(o);
        }
    }
    out
}
