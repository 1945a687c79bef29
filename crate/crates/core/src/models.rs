//! Model electronic Hamiltonians `H(y)` on the nuclear grid, with gap and smoothness certificates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fibered::FiberedMultOp;
use crate::grid::{MultiIndex, NuclearGrid, MAX_ORDER};
use crate::linalg;
use crate::quadrature::GaussLegendre;

/// Parameters of the one-electron, two-center toy with smeared nuclear charges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiatomicParams {
    /// Electronic grid size; this is the fiber dimension.
    pub electron_points: usize,
    /// Electronic box length (Dirichlet walls at both ends).
    pub electron_box: f64,
    pub charge: f64,
    /// Softening length of the kernel `1/sqrt(r² + σ²)`.
    pub soft_core: f64,
    /// Half-width of the support of the charge form factor.
    pub form_radius: f64,
    /// Mean internuclear distance.
    pub bond_length: f64,
    /// Periodic modulation of the internuclear distance over the nuclear box.
    pub bond_amplitude: f64,
}

impl Default for DiatomicParams {
    fn default() -> Self {
        DiatomicParams {
            electron_points: 32,
            electron_box: 12.0,
            charge: 1.0,
            soft_core: 1.0,
            form_radius: 0.5,
            bond_length: 2.0,
            bond_amplitude: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// `H(y) = diag(levels)` for every `y`.
    Decoupled { levels: Vec<f64> },
    /// `H(y) = Δ(y)σ_z + c σ_x` with `Δ(y) = amplitude · s(y)`.
    AvoidedCrossing { amplitude: f64, coupling: f64 },
    /// Levels `j·spacing + amplitude·sin(2πy/L + j)` with smooth nearest-neighbor coupling.
    ShiftedLevels {
        levels: usize,
        spacing: f64,
        amplitude: f64,
        coupling: f64,
    },
    SmearedDiatomic(DiatomicParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Declared lower bound on the spectral gap.
    pub delta_floor: f64,
    pub kind: ModelKind,
}

impl ModelSpec {
    pub fn decoupled(levels: Vec<f64>) -> Self {
        let mut sorted = levels.clone();
        sorted.sort_by(f64::total_cmp);
        let gap = sorted.get(1).map_or(1.0, |e| e - sorted[0]);
        ModelSpec {
            delta_floor: gap,
            kind: ModelKind::Decoupled { levels },
        }
    }

    pub fn avoided_crossing(amplitude: f64, coupling: f64) -> Self {
        ModelSpec {
            delta_floor: 2.0 * coupling,
            kind: ModelKind::AvoidedCrossing { amplitude, coupling },
        }
    }

    pub fn shifted_levels(levels: usize) -> Self {
        ModelSpec {
            delta_floor: 0.2,
            kind: ModelKind::ShiftedLevels {
                levels,
                spacing: 1.0,
                amplitude: 0.25,
                coupling: 0.2,
            },
        }
    }

    pub fn smeared_diatomic(params: DiatomicParams) -> Self {
        ModelSpec {
            delta_floor: 0.2,
            kind: ModelKind::SmearedDiatomic(params),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::Decoupled { .. } => "decoupled",
            ModelKind::AvoidedCrossing { .. } => "avoided_crossing",
            ModelKind::ShiftedLevels { .. } => "shifted_levels",
            ModelKind::SmearedDiatomic(_) => "smeared_diatomic",
        }
    }

    pub fn fiber_dim(&self) -> usize {
        match &self.kind {
            ModelKind::Decoupled { levels } => levels.len(),
            ModelKind::AvoidedCrossing { .. } => 2,
            ModelKind::ShiftedLevels { levels, .. } => *levels,
            ModelKind::SmearedDiatomic(p) => p.electron_points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Config(msg));
        if !(self.delta_floor > 0.0) {
            return bad(format!("model.delta_floor must be positive (got {})", self.delta_floor));
        }
        match &self.kind {
            ModelKind::Decoupled { levels } => {
                if levels.len() < 2 {
                    return bad("decoupled model needs at least two levels".into());
                }
            }
            ModelKind::AvoidedCrossing { coupling, .. } => {
                if coupling.abs() < 0.5 * self.delta_floor {
                    return bad(format!(
                        "avoided crossing coupling {coupling} cannot guarantee gap {}",
                        self.delta_floor
                    ));
                }
            }
            ModelKind::ShiftedLevels { levels, .. } => {
                if *levels < 3 {
                    return bad("shifted_levels needs at least three levels".into());
                }
            }
            ModelKind::SmearedDiatomic(p) => {
                if p.electron_points < 4 || p.electron_box <= 0.0 || p.soft_core <= 0.0 || p.form_radius <= 0.0 {
                    return bad("smeared_diatomic parameters out of range".into());
                }
                if p.bond_amplitude.abs() >= p.bond_length {
                    return bad("bond modulation must keep the nuclei apart".into());
                }
            }
        }
        Ok(())
    }
}

/// Smooth periodic profile in `[-1, 1]`: the mean of `sin(2π y_j / L)` over axes.
pub fn profile(grid: &NuclearGrid, y: [f64; 2]) -> f64 {
    let w = 2.0 * PI / grid.length();
    match grid.m() {
        1 => (w * y[0]).sin(),
        _ => 0.5 * ((w * y[0]).sin() + (w * y[1]).sin()),
    }
}

/// Build `H_bo` as a real-symmetric fibered operator.
pub fn build_model(spec: &ModelSpec, grid: &NuclearGrid) -> Result<FiberedMultOp> {
    spec.validate()?;
    let d = spec.fiber_dim();
    let op = match &spec.kind {
        ModelKind::Decoupled { levels } => FiberedMultOp::from_real_fn(grid, d, |_, _, b| {
            for (a, &e) in levels.iter().enumerate() {
                b[a * d + a] = e;
            }
        }),
        ModelKind::AvoidedCrossing { amplitude, coupling } => {
            FiberedMultOp::from_real_fn(grid, 2, |_, y, b| {
                let gap = amplitude * profile(grid, y);
                b.copy_from_slice(&[gap, *coupling, *coupling, -gap]);
            })
        }
        ModelKind::ShiftedLevels {
            levels,
            spacing,
            amplitude,
            coupling,
        } => {
            let w = 2.0 * PI / grid.length();
            FiberedMultOp::from_real_fn(grid, *levels, |_, y, b| {
                let s = profile(grid, y);
                for j in 0..*levels {
                    b[j * d + j] = j as f64 * spacing + amplitude * (w * y[0] + j as f64).sin();
                    if j + 1 < *levels {
                        let c = coupling * (1.0 + 0.5 * s);
                        b[j * d + j + 1] = c;
                        b[(j + 1) * d + j] = c;
                    }
                }
            })
        }
        ModelKind::SmearedDiatomic(p) => Diatomic::new(p).fibers(grid),
    };
    if let Some((point, defect)) = op.real_symmetric_violation(1e-13) {
        return Err(LabError::NotRealSymmetric { point, defect });
    }
    Ok(op)
}

/// Quadrature representation of the smeared two-center potential.
pub struct Diatomic {
    params: DiatomicParams,
    nodes: Vec<f64>,
    /// Quadrature weights times the normalized form factor.
    masses: Vec<f64>,
}

impl Diatomic {
    pub fn new(params: &DiatomicParams) -> Self {
        let a = params.form_radius;
        let rule = GaussLegendre::new(48).on_interval(-a, a);
        let bump = |z: f64| {
            let u = z / a;
            if u.abs() < 1.0 {
                (-1.0 / (1.0 - u * u)).exp()
            } else {
                0.0
            }
        };
        let raw: Vec<f64> = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&z, &w)| w * bump(z))
            .collect();
        let total: f64 = raw.iter().sum();
        Diatomic {
            params: params.clone(),
            nodes: rule.nodes,
            masses: raw.iter().map(|m| m / total).collect(),
        }
    }

    pub fn electron_coords(&self) -> Vec<f64> {
        let n = self.params.electron_points;
        let h = self.params.electron_box / (n + 1) as f64;
        (0..n)
            .map(|j| -0.5 * self.params.electron_box + (j + 1) as f64 * h)
            .collect()
    }

    pub fn bond(&self, grid: &NuclearGrid, y: [f64; 2]) -> f64 {
        self.params.bond_length + self.params.bond_amplitude * profile(grid, y)
    }

    fn kernel(&self, r: f64) -> f64 {
        1.0 / (r * r + self.params.soft_core * self.params.soft_core).sqrt()
    }

    /// Electron–nuclear attraction at electron position `x` for bond length `r`.
    pub fn electron_nuclear(&self, x: f64, r: f64) -> f64 {
        let z = self.params.charge;
        let mut v = 0.0;
        for center in [-0.5 * r, 0.5 * r] {
            for (&s, &m) in self.nodes.iter().zip(&self.masses) {
                v -= z * m * self.kernel(x - center - s);
            }
        }
        v
    }

    /// Smeared nuclear repulsion at bond length `r`.
    pub fn nuclear_repulsion(&self, r: f64) -> f64 {
        let z = self.params.charge;
        let mut v = 0.0;
        for (&a, &ma) in self.nodes.iter().zip(&self.masses) {
            for (&b, &mb) in self.nodes.iter().zip(&self.masses) {
                v += z * z * ma * mb * self.kernel(r + a - b);
            }
        }
        v
    }

    pub fn fibers(&self, grid: &NuclearGrid) -> FiberedMultOp {
        let n = self.params.electron_points;
        let h = self.params.electron_box / (n + 1) as f64;
        let xs = self.electron_coords();
        let hop = 0.5 / (h * h);
        FiberedMultOp::from_real_fn(grid, n, |_, y, b| {
            let r = self.bond(grid, y);
            let vn = self.nuclear_repulsion(r);
            for (j, &x) in xs.iter().enumerate() {
                b[j * n + j] = 2.0 * hop + self.electron_nuclear(x, r) + vn;
                if j + 1 < n {
                    b[j * n + j + 1] = -hop;
                    b[(j + 1) * n + j] = -hop;
                }
            }
        })
    }
}

/// Measured hypotheses on a built model.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AssumptionCertificate {
    /// `min_y (E_1(y) - E_0(y))`.
    pub delta: f64,
    /// Entry `k-1` is `max_y max_{|α|=k} ‖∂^α H(y)‖`.
    pub derivative_norms: Vec<f64>,
    /// Ground-level splitting relative to the scale of `H`.
    pub simplicity_margin: f64,
    pub ground_energy_range: (f64, f64),
}

pub fn verify_assumptions(h: &FiberedMultOp, n_deriv: usize, delta_min: f64) -> Result<AssumptionCertificate> {
    if n_deriv > MAX_ORDER {
        return Err(LabError::DerivativeOrder(n_deriv));
    }
    let grid = h.grid();
    let mut delta = f64::INFINITY;
    let mut scale: f64 = 0.0;
    let mut e_lo = f64::INFINITY;
    let mut e_hi = f64::NEG_INFINITY;
    for p in 0..grid.points() {
        let e = linalg::hermitian_eigen(&h.block_matrix(p))?;
        let v = &e.values;
        delta = delta.min(v[1] - v[0]);
        scale = scale.max(v[0].abs()).max(v[v.len() - 1].abs());
        e_lo = e_lo.min(v[0]);
        e_hi = e_hi.max(v[0]);
    }
    if delta < delta_min {
        return Err(LabError::GapTooSmall {
            measured: delta,
            required: delta_min,
        });
    }
    let mut derivative_norms = Vec::with_capacity(n_deriv);
    for k in 1..=n_deriv {
        let mut best: f64 = 0.0;
        for alpha in MultiIndex::of_order(grid.m(), k) {
            best = best.max(h.derivative(alpha, 1.0).max_block_norm());
        }
        derivative_norms.push(best);
    }
    Ok(AssumptionCertificate {
        delta,
        derivative_norms,
        simplicity_margin: delta / scale.max(1.0),
        ground_energy_range: (e_lo, e_hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoupled_blocks_are_constant() {
        let g = NuclearGrid::new(1, 32, 10.0).unwrap();
        let h = build_model(&ModelSpec::decoupled(vec![0.0, 1.0]), &g).unwrap();
        for p in 0..32 {
            assert_eq!(h.block(p)[0].re, 0.0);
            assert_eq!(h.block(p)[3].re, 1.0);
            assert_eq!(h.block(p)[1].norm(), 0.0);
        }
        let cert = verify_assumptions(&h, 4, 0.5).unwrap();
        assert_eq!(cert.delta, 1.0);
        assert!(cert.derivative_norms.iter().all(|&n| n < 1e-14));
    }

    #[test]
    fn flat_crossing_has_gap_two() {
        let g = NuclearGrid::new(1, 32, 10.0).unwrap();
        let h = build_model(&ModelSpec::avoided_crossing(0.0, 1.0), &g).unwrap();
        let cert = verify_assumptions(&h, 2, 1.0).unwrap();
        assert!((cert.delta - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gap_floor_is_enforced() {
        let g = NuclearGrid::new(1, 32, 10.0).unwrap();
        let h = build_model(&ModelSpec::avoided_crossing(1.0, 0.5), &g).unwrap();
        assert!(matches!(verify_assumptions(&h, 1, 1.5), Err(LabError::GapTooSmall { .. })));
    }

    #[test]
    fn rejects_weak_coupling() {
        let spec = ModelSpec {
            delta_floor: 1.0,
            kind: ModelKind::AvoidedCrossing {
                amplitude: 1.0,
                coupling: 0.1,
            },
        };
        let g = NuclearGrid::new(1, 16, 10.0).unwrap();
        assert!(build_model(&spec, &g).is_err());
    }

    #[test]
    fn diatomic_potentials_are_bounded_and_symmetric() {
        let dia = Diatomic::new(&DiatomicParams::default());
        let far = dia.nuclear_repulsion(1e6);
        assert!(far > 0.0 && far < 1e-5);
        let v0 = dia.nuclear_repulsion(0.0);
        assert!(v0.is_finite() && v0 <= 1.0 + 1e-12);
        for x in [-3.0, -0.7, 0.0, 1.1] {
            let v = dia.electron_nuclear(x, 2.0);
            assert!((v - dia.electron_nuclear(-x, 2.0)).abs() < 1e-13);
            assert!(v < 0.0 && v > -2.0 - 1e-12);
        }
    }
}
